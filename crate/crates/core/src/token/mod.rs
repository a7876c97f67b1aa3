//! A PIN-protected slot store for RSA private keys.
//!
//! Each slot holds a random 128-bit *token key* that encrypts the private
//! keys stored in it. The token key is wrapped twice, once under a key
//! derived from the user PIN and once under a key derived from the security
//! officer (SO) PIN, so either principal can unlock it. PINs themselves are
//! only stored as salted, iterated verifiers.
//!
//! Private keys never leave the store in clear unless they were imported as
//! extractable and the caller holds an SO session. Any other export attempt
//! is answered with a freshly generated decoy *public* key and recorded in
//! the token file's attack log.
//!
//! Mutations take an advisory lock on a sidecar `<token>.lock` file, re-read
//! the token from disk, apply the change and atomically replace the file.

mod format;
mod kdf;

use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::RngCore;
use subtle::ConstantTimeEq;

use crate::aes::{cbc_decrypt, cbc_encrypt, AesKey128};
use crate::envelope::{self, Envelope};
use crate::rng::{self, CryptoRng};
use crate::rsa::{self, KeyKind, PemBlock, RsaPrivateKey, RsaPublicKey};
use crate::{Error, Result};

pub use format::{load_token, record_region, save_token, TokenFile};
pub use kdf::{derive_kdf, DEFAULT_KDF_ITERATIONS};

pub const MIN_PIN_LEN: usize = 4;
pub const MAX_PIN_LEN: usize = 255;
/// Modulus size of decoy keys handed out on extraction attempts.
pub const DECOY_BITS: usize = 512;

const ZERO_IV: [u8; 16] = [0; 16];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    User,
    SecurityOfficer,
}

/// Descriptive protection status shown in key listings. Only the
/// `extractable` flag changes behavior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[repr(u8)]
pub enum Protection {
    Unprotected = 0,
    #[default]
    Protected = 1,
    HighlyProtected = 2,
}

impl Protection {
    fn from_byte(b: u8) -> Result<Self> {
        match b {
            0 => Ok(Protection::Unprotected),
            1 => Ok(Protection::Protected),
            2 => Ok(Protection::HighlyProtected),
            _ => Err(Error::Malformed("token file (protection status)")),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Protection::Unprotected => "unprotected",
            Protection::Protected => "protected",
            Protection::HighlyProtected => "highly-protected",
        }
    }
}

impl std::fmt::Display for Protection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Protection {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "unprotected" => Ok(Protection::Unprotected),
            "protected" => Ok(Protection::Protected),
            "highly-protected" | "highly_protected" => Ok(Protection::HighlyProtected),
            other => Err(format!("unknown protection status {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyRecord {
    pub key_label: String,
    pub protection: Protection,
    pub extractable: bool,
    pub iv: [u8; 16],
    /// Private-key payload, AES-CBC under the slot's token key.
    pub encrypted_key: Vec<u8>,
    /// Public-key payload, stored in clear.
    pub public_part: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotRecord {
    pub slot_id: u32,
    pub label: String,
    pub kdf_iterations: u32,
    pub user_salt: [u8; 16],
    pub user_verifier: [u8; 32],
    pub so_salt: [u8; 16],
    pub so_verifier: [u8; 32],
    pub storage_salt: [u8; 16],
    pub wrapped_token_key_user: [u8; 32],
    pub wrapped_token_key_so: [u8; 32],
    pub failed_attempts: u32,
    pub keys: Vec<KeyRecord>,
}

impl SlotRecord {
    fn key(&self, label: &str) -> Result<&KeyRecord> {
        self.keys
            .iter()
            .find(|k| k.key_label == label)
            .ok_or_else(|| Error::UnknownKey(label.to_owned()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttackLogEntry {
    pub unix_time: u64,
    pub slot_id: u32,
    pub key_label: String,
}

/// Key metadata as shown by [`Token::list_keys`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyInfo {
    pub key_label: String,
    pub protection: Protection,
    pub extractable: bool,
}

/// An authenticated session on one slot. Holds the unwrapped token key in
/// memory; it is zeroed when the session is dropped.
pub struct Session {
    slot_id: u32,
    slot_label: String,
    role: Role,
    token_key: AesKey128,
}

impl Session {
    pub fn slot_id(&self) -> u32 {
        self.slot_id
    }

    pub fn slot_label(&self) -> &str {
        &self.slot_label
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn close(self) {}
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session")
            .field("slot_id", &self.slot_id)
            .field("role", &self.role)
            .finish_non_exhaustive()
    }
}

/// A usable private key that cannot be read back out.
pub struct KeyHandle {
    key_label: String,
    key: RsaPrivateKey,
}

impl KeyHandle {
    pub fn key_label(&self) -> &str {
        &self.key_label
    }

    pub fn public_key(&self) -> RsaPublicKey {
        self.key.to_public()
    }

    pub fn open(&self, env: &Envelope) -> Result<Vec<u8>> {
        envelope::open(env, &self.key)
    }

    pub fn open_stream<R: Read, W: Write>(&self, reader: &mut R, writer: &mut W) -> Result<u64> {
        envelope::open_stream(reader, writer, &self.key)
    }
}

impl std::fmt::Debug for KeyHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KeyHandle")
            .field("key_label", &self.key_label)
            .finish_non_exhaustive()
    }
}

/// Result of [`Token::export_key`].
#[derive(Debug, Clone)]
pub struct Export {
    pub pem: PemBlock,
    /// Set when the export was refused and answered with a decoy.
    pub log_entry: Option<AttackLogEntry>,
}

impl Export {
    pub fn is_decoy(&self) -> bool {
        self.log_entry.is_some()
    }
}

fn check_pin(pin: &str) -> Result<()> {
    if (MIN_PIN_LEN..=MAX_PIN_LEN).contains(&pin.len()) {
        Ok(())
    } else {
        Err(Error::WeakPin)
    }
}

fn wrapping_key(pin: &str, storage_salt: &[u8; 16], iterations: u32) -> AesKey128 {
    let derived = derive_kdf(pin, storage_salt, iterations);
    AesKey128::from_slice(&derived[..16]).expect("16 bytes")
}

fn wrap_token_key(token_key: &AesKey128, pin: &str, storage_salt: &[u8; 16], iterations: u32) -> [u8; 32] {
    let wrapped = cbc_encrypt(
        token_key.as_bytes(),
        &wrapping_key(pin, storage_salt, iterations),
        &ZERO_IV,
    );
    wrapped.try_into().expect("16-byte key pads to 32 bytes")
}

fn unwrap_token_key(wrapped: &[u8; 32], pin: &str, storage_salt: &[u8; 16], iterations: u32) -> Result<AesKey128> {
    let raw =
        cbc_decrypt(wrapped, &wrapping_key(pin, storage_salt, iterations), &ZERO_IV).map_err(|_| Error::AuthFailure)?;
    AesKey128::from_slice(&raw).ok_or(Error::AuthFailure)
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn lock_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".lock");
    PathBuf::from(p)
}

/// A token file on disk together with its in-memory image.
pub struct Token {
    path: PathBuf,
    file: TokenFile,
    rng: CryptoRng,
    kdf_iterations: u32,
}

impl std::fmt::Debug for Token {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Token")
            .field("path", &self.path)
            .field("slots", &self.file.slots.len())
            .finish_non_exhaustive()
    }
}

impl Token {
    /// Creates a new, empty token file. Fails if `path` already exists.
    pub fn create(path: impl AsRef<Path>) -> Result<Token> {
        let path = path.as_ref().to_path_buf();
        let _lock = Self::lock_at(&path)?;
        if path.exists() {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::AlreadyExists,
                format!("{} already exists", path.display()),
            )));
        }
        let file = TokenFile::default();
        save_token(&file, &path)?;
        Ok(Token::from_parts(path, file))
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Token> {
        let path = path.as_ref().to_path_buf();
        let file = load_token(&path)?;
        Ok(Token::from_parts(path, file))
    }

    pub fn open_or_create(path: impl AsRef<Path>) -> Result<Token> {
        if path.as_ref().exists() {
            Token::open(path)
        } else {
            Token::create(path)
        }
    }

    fn from_parts(path: PathBuf, file: TokenFile) -> Token {
        Token {
            path,
            file,
            rng: rng::from_seed(None),
            kdf_iterations: DEFAULT_KDF_ITERATIONS,
        }
    }

    /// Makes salts, token keys, IVs and decoys reproducible.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng = rng::from_seed(Some(seed));
        self
    }

    /// KDF iteration count for slots created through this handle.
    pub fn with_kdf_iterations(mut self, iterations: u32) -> Self {
        self.kdf_iterations = iterations.max(1);
        self
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn file(&self) -> &TokenFile {
        &self.file
    }

    pub fn reload(&mut self) -> Result<()> {
        self.file = load_token(&self.path)?;
        Ok(())
    }

    fn lock_at(path: &Path) -> Result<File> {
        let lock = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(lock_path(path))?;
        lock.lock()?;
        Ok(lock)
    }

    /// Runs `f` against the latest on-disk state under the file lock and
    /// persists the result if anything changed, even when `f` fails.
    fn commit<T>(&mut self, f: impl FnOnce(&mut TokenFile, &mut CryptoRng) -> Result<T>) -> Result<T> {
        let _lock = Self::lock_at(&self.path)?;
        self.file = load_token(&self.path)?;
        let before = self.file.clone();
        let out = f(&mut self.file, &mut self.rng);
        if self.file != before {
            if let Err(e) = save_token(&self.file, &self.path) {
                self.file = before;
                return Err(e);
            }
        }
        out
    }

    pub fn slot(&self, label: &str) -> Result<&SlotRecord> {
        self.file
            .slots
            .iter()
            .find(|s| s.label == label)
            .ok_or_else(|| Error::UnknownSlot(label.to_owned()))
    }

    fn slot_for(&self, session: &Session) -> Result<&SlotRecord> {
        self.file
            .slots
            .iter()
            .find(|s| s.slot_id == session.slot_id && s.label == session.slot_label)
            .ok_or_else(|| Error::SessionMismatch(session.slot_label.clone()))
    }

    pub fn create_slot(&mut self, label: &str, user_pin: &str, so_pin: &str) -> Result<u32> {
        check_pin(user_pin)?;
        check_pin(so_pin)?;
        if label.is_empty() || label.len() > u16::MAX as usize {
            return Err(Error::Malformed("slot label"));
        }
        let iterations = self.kdf_iterations;
        self.commit(|file, rng| {
            if file.slots.iter().any(|s| s.label == label) {
                return Err(Error::DuplicateSlotLabel(label.to_owned()));
            }
            let mut salts = [[0u8; 16]; 3];
            while salts[0] == salts[1] || salts[1] == salts[2] || salts[0] == salts[2] {
                for salt in salts.iter_mut() {
                    rng.fill_bytes(salt);
                }
            }
            let [user_salt, so_salt, storage_salt] = salts;
            let mut raw = [0u8; 16];
            rng.fill_bytes(&mut raw);
            let token_key = AesKey128::new(raw);
            raw.fill(0);

            let slot_id = file.slots.iter().map(|s| s.slot_id + 1).max().unwrap_or(0);
            file.slots.push(SlotRecord {
                slot_id,
                label: label.to_owned(),
                kdf_iterations: iterations,
                user_salt,
                user_verifier: derive_kdf(user_pin, &user_salt, iterations),
                so_salt,
                so_verifier: derive_kdf(so_pin, &so_salt, iterations),
                storage_salt,
                wrapped_token_key_user: wrap_token_key(&token_key, user_pin, &storage_salt, iterations),
                wrapped_token_key_so: wrap_token_key(&token_key, so_pin, &storage_salt, iterations),
                failed_attempts: 0,
                keys: Vec::new(),
            });
            Ok(slot_id)
        })
    }

    /// Checks `pin` against the slot's verifier for `role` and, on success,
    /// unwraps the token key into a new session. Every failure bumps the
    /// slot's `failed_attempts` counter on disk.
    pub fn authenticate(&mut self, slot_label: &str, pin: &str, role: Role) -> Result<Session> {
        self.reload()?;
        let slot = self.slot(slot_label)?;
        let (salt, verifier, wrapped) = match role {
            Role::User => (&slot.user_salt, &slot.user_verifier, &slot.wrapped_token_key_user),
            Role::SecurityOfficer => (&slot.so_salt, &slot.so_verifier, &slot.wrapped_token_key_so),
        };
        let candidate = derive_kdf(pin, salt, slot.kdf_iterations);
        let matched: bool = candidate.ct_eq(verifier).into();
        let unwrapped = if matched {
            unwrap_token_key(wrapped, pin, &slot.storage_salt, slot.kdf_iterations)
        } else {
            Err(Error::AuthFailure)
        };
        match unwrapped {
            Ok(token_key) => Ok(Session {
                slot_id: slot.slot_id,
                slot_label: slot.label.clone(),
                role,
                token_key,
            }),
            Err(_) => {
                let id = slot.slot_id;
                self.commit(|file, _| {
                    if let Some(slot) = file.slots.iter_mut().find(|s| s.slot_id == id) {
                        slot.failed_attempts = slot.failed_attempts.saturating_add(1);
                    }
                    Ok(())
                })?;
                Err(Error::AuthFailure)
            }
        }
    }

    pub fn import_private_key(
        &mut self,
        session: &Session,
        key_label: &str,
        key: &RsaPrivateKey,
        protection: Protection,
        extractable: bool,
    ) -> Result<()> {
        if session.role != Role::SecurityOfficer {
            return Err(Error::RoleDenied);
        }
        if key_label.is_empty() || key_label.len() > u16::MAX as usize {
            return Err(Error::Malformed("key label"));
        }
        self.commit(|file, rng| {
            let slot = file
                .slots
                .iter_mut()
                .find(|s| s.slot_id == session.slot_id && s.label == session.slot_label)
                .ok_or_else(|| Error::SessionMismatch(session.slot_label.clone()))?;
            if slot.keys.iter().any(|k| k.key_label == key_label) {
                return Err(Error::DuplicateKeyLabel(key_label.to_owned()));
            }
            let mut iv = [0u8; 16];
            rng.fill_bytes(&mut iv);
            let mut payload = key.to_payload();
            let encrypted_key = cbc_encrypt(&payload, &session.token_key, &iv);
            zeroize::Zeroize::zeroize(&mut payload);
            slot.keys.push(KeyRecord {
                key_label: key_label.to_owned(),
                protection,
                extractable,
                iv,
                encrypted_key,
                public_part: key.to_public().to_payload(),
            });
            Ok(())
        })
    }

    /// Key metadata for a slot, in import order. Needs no session.
    pub fn list_keys(&self, slot_label: &str) -> Result<Vec<KeyInfo>> {
        Ok(self
            .slot(slot_label)?
            .keys
            .iter()
            .map(|k| KeyInfo {
                key_label: k.key_label.clone(),
                protection: k.protection,
                extractable: k.extractable,
            })
            .collect())
    }

    /// The clear public half of a stored key.
    pub fn public_key(&self, slot_label: &str, key_label: &str) -> Result<RsaPublicKey> {
        RsaPublicKey::from_payload(&self.slot(slot_label)?.key(key_label)?.public_part)
    }

    fn decrypt_record(record: &KeyRecord, token_key: &AesKey128) -> Result<RsaPrivateKey> {
        let mut payload =
            cbc_decrypt(&record.encrypted_key, token_key, &record.iv).map_err(|_| Error::Malformed("stored key"))?;
        let key = RsaPrivateKey::from_payload(&payload);
        zeroize::Zeroize::zeroize(&mut payload);
        key
    }

    /// Decrypts a stored key into a handle that can open envelopes but does
    /// not expose the key material.
    pub fn key_handle(&self, session: &Session, key_label: &str) -> Result<KeyHandle> {
        if session.role != Role::User {
            return Err(Error::RoleDenied);
        }
        let record = self.slot_for(session)?.key(key_label)?;
        Ok(KeyHandle {
            key_label: key_label.to_owned(),
            key: Self::decrypt_record(record, &session.token_key)?,
        })
    }

    pub fn decrypt_with_stored_key(&self, session: &Session, key_label: &str, env: &Envelope) -> Result<Vec<u8>> {
        self.key_handle(session, key_label)?.open(env)
    }

    /// Answers a request for a key's private material.
    ///
    /// Only an extractable key requested under an SO session of the same slot
    /// is returned as-is. Everything else gets the public half of a fresh
    /// 512-bit keypair and an attack-log entry; the stored record is left
    /// untouched.
    pub fn export_key(
        &mut self,
        slot_label: &str,
        key_label: &str,
        session: Option<&Session>,
        seed: Option<u64>,
    ) -> Result<Export> {
        self.reload()?;
        let slot = self.slot(slot_label)?;
        let record = slot.key(key_label)?;
        let authorized = session
            .filter(|s| s.role == Role::SecurityOfficer && s.slot_id == slot.slot_id && s.slot_label == slot.label);
        if let (true, Some(session)) = (record.extractable, authorized) {
            let key = Self::decrypt_record(record, &session.token_key)?;
            return Ok(Export {
                pem: PemBlock {
                    label: KeyKind::Private.label().to_owned(),
                    payload: key.to_payload(),
                },
                log_entry: None,
            });
        }

        let entry = AttackLogEntry {
            unix_time: unix_now(),
            slot_id: slot.slot_id,
            key_label: key_label.to_owned(),
        };
        let logged = entry.clone();
        let decoy = self.commit(|file, rng| {
            let (decoy, _) = match seed {
                Some(seed) => rsa::generate_keypair(DECOY_BITS, rsa::DEFAULT_EXPONENT, Some(seed))?,
                None => rsa::generate_keypair_with_rng(DECOY_BITS, rsa::DEFAULT_EXPONENT, rng)?,
            };
            file.attack_log.push(logged);
            Ok(decoy)
        })?;
        Ok(Export {
            pem: PemBlock {
                label: KeyKind::Public.label().to_owned(),
                payload: decoy.to_payload(),
            },
            log_entry: Some(entry),
        })
    }

    pub fn attack_log(&self) -> &[AttackLogEntry] {
        &self.file.attack_log
    }
}
