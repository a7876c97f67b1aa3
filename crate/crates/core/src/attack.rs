//! Key-extraction attack driver.
//!
//! The attacker is modelled as someone with read/write access to the token
//! file and the store's API but, by default, no PINs. The driver snapshots
//! the key-record region of the token file, asks the store to export the
//! requested key, writes whatever comes back to a PEM file, snapshots the
//! record region again and judges the outcome.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::rsa::{decode_pem, RsaKey};
use crate::token::{record_region, Role, Token};
use crate::Result;

/// Default file name for extracted material.
pub const DEFAULT_OUT_NAME: &str = "1exported_private_key.pem";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Secure,
    Breached,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Secure => "secure",
            Verdict::Breached => "breached",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttackReport {
    pub slot_label: String,
    pub key_label: String,
    pub extracted_material: String,
    pub extracted_is_private: bool,
    pub matches_stored_private: bool,
    pub token_hash_before: [u8; 32],
    pub token_hash_after: [u8; 32],
    pub verdict: Verdict,
}

impl AttackReport {
    /// Flat `key=value` lines.
    pub fn to_kv_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "slot_label={}", self.slot_label);
        let _ = writeln!(out, "key_label={}", self.key_label);
        let _ = writeln!(out, "extracted_is_private={}", self.extracted_is_private);
        let _ = writeln!(out, "matches_stored_private={}", self.matches_stored_private);
        let _ = writeln!(out, "token_hash_before={}", hex(&self.token_hash_before));
        let _ = writeln!(out, "token_hash_after={}", hex(&self.token_hash_after));
        let _ = writeln!(
            out,
            "records_unchanged={}",
            self.token_hash_before == self.token_hash_after
        );
        let _ = writeln!(out, "verdict={}", self.verdict.as_str());
        out
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn region_digest(token_path: &Path) -> Result<[u8; 32]> {
    let bytes = fs::read(token_path)?;
    Ok(Sha256::digest(record_region(&bytes)?).into())
}

/// Optional knobs for [`run_extraction_attack_with`].
#[derive(Debug, Clone, Default)]
pub struct AttackOptions<'a> {
    /// SO PIN handed to the tool. Only used for positive-control runs.
    pub so_pin: Option<&'a str>,
    /// Seed for the decoy the store generates.
    pub seed: Option<u64>,
}

pub fn run_extraction_attack(
    token_path: &Path,
    slot_label: &str,
    key_label: &str,
    out_pem_path: &Path,
) -> Result<AttackReport> {
    run_extraction_attack_with(
        token_path,
        slot_label,
        key_label,
        out_pem_path,
        &AttackOptions::default(),
    )
}

pub fn run_extraction_attack_with(
    token_path: &Path,
    slot_label: &str,
    key_label: &str,
    out_pem_path: &Path,
    options: &AttackOptions<'_>,
) -> Result<AttackReport> {
    let token_hash_before = region_digest(token_path)?;

    let mut token = Token::open(token_path)?;
    // The public half is stored in clear, so the attacker can tell whether
    // whatever comes back is the real private key.
    let stored_public = token.public_key(slot_label, key_label)?;
    let session = match options.so_pin {
        Some(pin) => Some(token.authenticate(slot_label, pin, Role::SecurityOfficer)?),
        None => None,
    };
    let export = token.export_key(slot_label, key_label, session.as_ref(), options.seed)?;
    drop(session);

    let extracted_material = export.pem.to_pem_string();
    fs::write(out_pem_path, &extracted_material)?;

    let token_hash_after = region_digest(token_path)?;

    let (extracted_is_private, matches_stored_private) = match decode_pem(&extracted_material) {
        Ok(RsaKey::Private(k)) => (true, k.n() == stored_public.n() && k.e() == stored_public.e()),
        Ok(RsaKey::Public(_)) => (false, false),
        Err(e) => return Err(e),
    };
    let verdict = if matches_stored_private || token_hash_before != token_hash_after {
        Verdict::Breached
    } else {
        Verdict::Secure
    };
    Ok(AttackReport {
        slot_label: slot_label.to_owned(),
        key_label: key_label.to_owned(),
        extracted_material,
        extracted_is_private,
        matches_stored_private,
        token_hash_before,
        token_hash_after,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rsa::{generate_keypair, RsaPrivateKey, DEFAULT_EXPONENT};
    use crate::token::Protection;
    use crate::Error;

    fn setup(dir: &Path, extractable: bool) -> (std::path::PathBuf, RsaPrivateKey) {
        let path = dir.join("token.shsm");
        let mut token = Token::create(&path).unwrap().with_seed(4).with_kdf_iterations(8);
        token.create_slot("plc", "1111", "2222").unwrap();
        let so = token.authenticate("plc", "2222", Role::SecurityOfficer).unwrap();
        let (_, private) = generate_keypair(512, DEFAULT_EXPONENT, Some(66)).unwrap();
        token
            .import_private_key(&so, "rsa", &private, Protection::Protected, extractable)
            .unwrap();
        (path, private)
    }

    #[test]
    fn non_extractable_key_stays_put() {
        let dir = tempfile::tempdir().unwrap();
        let (path, _) = setup(dir.path(), false);
        let out = dir.path().join(DEFAULT_OUT_NAME);
        let report = run_extraction_attack(&path, "plc", "rsa", &out).unwrap();
        assert_eq!(report.verdict, Verdict::Secure);
        assert!(!report.extracted_is_private);
        assert!(!report.matches_stored_private);
        assert_eq!(report.token_hash_before, report.token_hash_after);
        let written = fs::read_to_string(&out).unwrap();
        assert!(decode_pem(&written).is_ok());
        assert!(report.to_kv_string().contains("verdict=secure\n"));
    }

    #[test]
    fn positive_control_detects_breach() {
        let dir = tempfile::tempdir().unwrap();
        let (path, private) = setup(dir.path(), true);
        let out = dir.path().join("out.pem");
        let options = AttackOptions {
            so_pin: Some("2222"),
            seed: None,
        };
        let report = run_extraction_attack_with(&path, "plc", "rsa", &out, &options).unwrap();
        assert_eq!(report.verdict, Verdict::Breached);
        assert!(report.extracted_is_private);
        assert!(report.matches_stored_private);
        assert_eq!(RsaPrivateKey::from_pem(&report.extracted_material).unwrap(), private);
    }

    #[test]
    fn unknown_labels_are_errors() {
        let dir = tempfile::tempdir().unwrap();
        let (path, _) = setup(dir.path(), false);
        let out = dir.path().join("out.pem");
        assert!(matches!(
            run_extraction_attack(&path, "plc", "other", &out),
            Err(Error::UnknownKey(_))
        ));
        assert!(matches!(
            run_extraction_attack(&path, "x", "rsa", &out),
            Err(Error::UnknownSlot(_))
        ));
        assert!(!out.exists());
    }
}
