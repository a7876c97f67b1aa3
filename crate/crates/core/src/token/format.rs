//! Binary token file layout (big-endian):
//!
//! ```text
//! "SHSM" | version:u16 = 1 | slot_count:u32 | slots... | attack_log_count:u32 | entries...
//!
//! slot:  slot_id:u32 | label (u16 len + UTF-8) | kdf_iterations:u32
//!        | user_salt:16 | user_verifier:32 | so_salt:16 | so_verifier:32
//!        | storage_salt:16 | wrapped_token_key_user:32 | wrapped_token_key_so:32
//!        | failed_attempts:u32 | key_count:u32 | keys...
//! key:   key_label (u16 len + UTF-8) | protection:u8 | extractable:u8 | iv:16
//!        | encrypted_key (u32 len + bytes) | public_part (u32 len + bytes)
//! entry: unix_time:u64 | slot_id:u32 | key_label (u16 len + UTF-8)
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{AttackLogEntry, KeyRecord, Protection, SlotRecord};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SHSM";
pub const VERSION: u16 = 1;

/// Everything persisted in one token file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenFile {
    pub slots: Vec<SlotRecord>,
    pub attack_log: Vec<AttackLogEntry>,
}

struct Writer(Vec<u8>);

impl Writer {
    fn bytes(&mut self, b: &[u8]) {
        self.0.extend_from_slice(b);
    }
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.bytes(&v.to_be_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.bytes(&v.to_be_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.bytes(&v.to_be_bytes());
    }
    fn short_str(&mut self, s: &str) {
        self.u16(s.len() as u16);
        self.bytes(s.as_bytes());
    }
    fn long_bytes(&mut self, b: &[u8]) {
        self.u32(b.len() as u32);
        self.bytes(b);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(Error::TokenTruncated)?;
        let out = self.buf.get(self.pos..end).ok_or(Error::TokenTruncated)?;
        self.pos = end;
        Ok(out)
    }
    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_be_bytes(self.array()?))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_be_bytes(self.array()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_be_bytes(self.array()?))
    }
    fn short_str(&mut self) -> Result<String> {
        let len = self.u16()? as usize;
        let raw = self.take(len)?;
        String::from_utf8(raw.to_vec()).map_err(|_| Error::Malformed("token file (label is not UTF-8)"))
    }
    fn long_bytes(&mut self) -> Result<Vec<u8>> {
        let len = self.u32()? as usize;
        Ok(self.take(len)?.to_vec())
    }
}

impl TokenFile {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.bytes(MAGIC);
        w.u16(VERSION);
        w.u32(self.slots.len() as u32);
        for slot in &self.slots {
            w.u32(slot.slot_id);
            w.short_str(&slot.label);
            w.u32(slot.kdf_iterations);
            w.bytes(&slot.user_salt);
            w.bytes(&slot.user_verifier);
            w.bytes(&slot.so_salt);
            w.bytes(&slot.so_verifier);
            w.bytes(&slot.storage_salt);
            w.bytes(&slot.wrapped_token_key_user);
            w.bytes(&slot.wrapped_token_key_so);
            w.u32(slot.failed_attempts);
            w.u32(slot.keys.len() as u32);
            for key in &slot.keys {
                w.short_str(&key.key_label);
                w.u8(key.protection as u8);
                w.u8(key.extractable as u8);
                w.bytes(&key.iv);
                w.long_bytes(&key.encrypted_key);
                w.long_bytes(&key.public_part);
            }
        }
        w.u32(self.attack_log.len() as u32);
        for entry in &self.attack_log {
            w.u64(entry.unix_time);
            w.u32(entry.slot_id);
            w.short_str(&entry.key_label);
        }
        w.0
    }

    pub fn decode(bytes: &[u8]) -> Result<TokenFile> {
        let mut r = Reader { buf: bytes, pos: 0 };
        let slots = read_slots(&mut r)?;
        let count = r.u32()?;
        let mut attack_log = Vec::new();
        for _ in 0..count {
            attack_log.push(AttackLogEntry {
                unix_time: r.u64()?,
                slot_id: r.u32()?,
                key_label: r.short_str()?,
            });
        }
        if r.pos != bytes.len() {
            return Err(Error::Malformed("token file (trailing bytes)"));
        }
        Ok(TokenFile { slots, attack_log })
    }
}

fn read_header(r: &mut Reader<'_>) -> Result<()> {
    if r.buf.len() >= 4 && &r.buf[..4] != MAGIC {
        return Err(Error::TokenMagic);
    }
    if r.take(4)? != MAGIC {
        return Err(Error::TokenMagic);
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::TokenVersion(version));
    }
    Ok(())
}

fn read_slots(r: &mut Reader<'_>) -> Result<Vec<SlotRecord>> {
    read_header(r)?;
    let count = r.u32()?;
    let mut slots = Vec::new();
    for _ in 0..count {
        let mut slot = SlotRecord {
            slot_id: r.u32()?,
            label: r.short_str()?,
            kdf_iterations: r.u32()?,
            user_salt: r.array()?,
            user_verifier: r.array()?,
            so_salt: r.array()?,
            so_verifier: r.array()?,
            storage_salt: r.array()?,
            wrapped_token_key_user: r.array()?,
            wrapped_token_key_so: r.array()?,
            failed_attempts: r.u32()?,
            keys: Vec::new(),
        };
        let key_count = r.u32()?;
        for _ in 0..key_count {
            let key_label = r.short_str()?;
            let protection = Protection::from_byte(r.u8()?)?;
            let extractable = match r.u8()? {
                0 => false,
                1 => true,
                _ => return Err(Error::Malformed("token file (extractable flag)")),
            };
            slot.keys.push(KeyRecord {
                key_label,
                protection,
                extractable,
                iv: r.array()?,
                encrypted_key: r.long_bytes()?,
                public_part: r.long_bytes()?,
            });
        }
        slots.push(slot);
    }
    Ok(slots)
}

/// The header and slot section of an encoded token file: everything except
/// the trailing attack log.
pub fn record_region(bytes: &[u8]) -> Result<&[u8]> {
    let mut r = Reader { buf: bytes, pos: 0 };
    read_slots(&mut r)?;
    Ok(&bytes[..r.pos])
}

/// Writes the token next to `path` and renames it into place.
pub fn save_token(token: &TokenFile, path: &Path) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = Path::new(&tmp);
    {
        let mut f = fs::File::create(tmp)?;
        f.write_all(&token.encode())?;
        f.sync_all()?;
    }
    fs::rename(tmp, path)?;
    Ok(())
}

pub fn load_token(path: &Path) -> Result<TokenFile> {
    TokenFile::decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> TokenFile {
        TokenFile {
            slots: vec![SlotRecord {
                slot_id: 0,
                label: "plant-floor".into(),
                kdf_iterations: 10,
                user_salt: [1; 16],
                user_verifier: [2; 32],
                so_salt: [3; 16],
                so_verifier: [4; 32],
                storage_salt: [5; 16],
                wrapped_token_key_user: [6; 32],
                wrapped_token_key_so: [7; 32],
                failed_attempts: 3,
                keys: vec![KeyRecord {
                    key_label: "rsa-main".into(),
                    protection: Protection::HighlyProtected,
                    extractable: false,
                    iv: [8; 16],
                    encrypted_key: vec![9; 48],
                    public_part: vec![10; 20],
                }],
            }],
            attack_log: vec![AttackLogEntry {
                unix_time: 1_700_000_000,
                slot_id: 0,
                key_label: "rsa-main".into(),
            }],
        }
    }

    #[test]
    fn round_trip_and_magic() {
        let token = sample();
        let bytes = token.encode();
        assert_eq!(&bytes[..4], b"SHSM");
        assert_eq!(TokenFile::decode(&bytes).unwrap(), token);
    }

    #[test]
    fn record_region_excludes_attack_log() {
        let mut token = sample();
        let before = token.encode();
        token.attack_log.push(AttackLogEntry {
            unix_time: 5,
            slot_id: 0,
            key_label: "x".into(),
        });
        let after = token.encode();
        assert_ne!(before, after);
        assert_eq!(record_region(&before).unwrap(), record_region(&after).unwrap());
        // header (6) + slot count (4) + the slot itself, then the log count.
        assert_eq!(
            record_region(&before).unwrap().len(),
            before.len() - 4 - (8 + 4 + 2 + 8)
        );
    }

    #[test]
    fn decode_errors() {
        let bytes = sample().encode();
        let mut bad = bytes.clone();
        bad[1] = b'X';
        assert!(matches!(TokenFile::decode(&bad), Err(Error::TokenMagic)));
        let mut bad = bytes.clone();
        bad[5] = 9;
        assert!(matches!(TokenFile::decode(&bad), Err(Error::TokenVersion(9))));
        for cut in [0, 3, 5, 20, bytes.len() - 1] {
            assert!(
                matches!(TokenFile::decode(&bytes[..cut]), Err(Error::TokenTruncated)),
                "cut {cut}"
            );
        }
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(TokenFile::decode(&long), Err(Error::Malformed(_))));
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("token.shsm");
        save_token(&sample(), &path).unwrap();
        assert_eq!(load_token(&path).unwrap(), sample());
        assert!(matches!(load_token(&dir.path().join("missing")), Err(Error::Io(_))));
    }

    fn label() -> impl Strategy<Value = String> {
        "[a-z0-9é-]{0,12}"
    }

    fn key_record() -> impl Strategy<Value = KeyRecord> {
        (
            label(),
            0u8..3,
            any::<bool>(),
            any::<[u8; 16]>(),
            proptest::collection::vec(any::<u8>(), 0..64),
            proptest::collection::vec(any::<u8>(), 0..64),
        )
            .prop_map(
                |(key_label, p, extractable, iv, encrypted_key, public_part)| KeyRecord {
                    key_label,
                    protection: Protection::from_byte(p).unwrap(),
                    extractable,
                    iv,
                    encrypted_key,
                    public_part,
                },
            )
    }

    fn slot_record() -> impl Strategy<Value = SlotRecord> {
        (
            (any::<u32>(), label(), any::<u32>(), any::<u32>()),
            (
                any::<[u8; 16]>(),
                any::<[u8; 32]>(),
                any::<[u8; 16]>(),
                any::<[u8; 32]>(),
            ),
            (any::<[u8; 16]>(), any::<[u8; 32]>(), any::<[u8; 32]>()),
            proptest::collection::vec(key_record(), 0..3),
        )
            .prop_map(
                |((slot_id, label, kdf_iterations, failed_attempts), (us, uv, ss, sv), (st, wu, ws), keys)| {
                    SlotRecord {
                        slot_id,
                        label,
                        kdf_iterations,
                        user_salt: us,
                        user_verifier: uv,
                        so_salt: ss,
                        so_verifier: sv,
                        storage_salt: st,
                        wrapped_token_key_user: wu,
                        wrapped_token_key_so: ws,
                        failed_attempts,
                        keys,
                    }
                },
            )
    }

    proptest! {
        #[test]
        fn encode_decode_bit_exact(
            slots in proptest::collection::vec(slot_record(), 0..3),
            log in proptest::collection::vec((any::<u64>(), any::<u32>(), label()), 0..4),
        ) {
            let token = TokenFile {
                slots,
                attack_log: log
                    .into_iter()
                    .map(|(unix_time, slot_id, key_label)| AttackLogEntry { unix_time, slot_id, key_label })
                    .collect(),
            };
            let bytes = token.encode();
            let decoded = TokenFile::decode(&bytes).unwrap();
            prop_assert_eq!(decoded.encode(), bytes);
            prop_assert_eq!(decoded, token);
        }
    }
}
