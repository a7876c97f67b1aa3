//! PEM armor around a small binary key layout.
//!
//! Payload (big-endian): `"RSAK" || version:u16 = 1 || type:u8 || integers`,
//! where `type` is 0 for public and 1 for private keys and each integer is a
//! `u32` byte length followed by its magnitude. Public keys carry `[n, e]`,
//! private keys `[n, e, d, p, q]`. The armor is base64 in 64-column lines
//! between `-----BEGIN MINIHSM RSA {PUBLIC|PRIVATE} KEY-----` and the matching
//! END line.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use num_bigint::BigUint;

use super::{RsaPrivateKey, RsaPublicKey};
use crate::{Error, Result};

pub const PEM_MAGIC: &[u8; 4] = b"RSAK";
const VERSION: u16 = 1;
const LINE_WIDTH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeyKind {
    Public,
    Private,
}

impl KeyKind {
    pub fn label(self) -> &'static str {
        match self {
            KeyKind::Public => "MINIHSM RSA PUBLIC KEY",
            KeyKind::Private => "MINIHSM RSA PRIVATE KEY",
        }
    }

    fn name(self) -> &'static str {
        match self {
            KeyKind::Public => "public",
            KeyKind::Private => "private",
        }
    }

    fn from_label(label: &str) -> Option<KeyKind> {
        [KeyKind::Public, KeyKind::Private]
            .into_iter()
            .find(|k| k.label() == label)
    }
}

/// Either half of a keypair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RsaKey {
    Public(RsaPublicKey),
    Private(RsaPrivateKey),
}

impl RsaKey {
    pub fn kind(&self) -> KeyKind {
        match self {
            RsaKey::Public(_) => KeyKind::Public,
            RsaKey::Private(_) => KeyKind::Private,
        }
    }

    pub fn n(&self) -> &BigUint {
        match self {
            RsaKey::Public(k) => k.n(),
            RsaKey::Private(k) => k.n(),
        }
    }

    pub fn into_public(self) -> Result<RsaPublicKey> {
        match self {
            RsaKey::Public(k) => Ok(k),
            other => Err(type_error(KeyKind::Public, other.kind())),
        }
    }

    pub fn into_private(self) -> Result<RsaPrivateKey> {
        match self {
            RsaKey::Private(k) => Ok(k),
            other => Err(type_error(KeyKind::Private, other.kind())),
        }
    }
}

impl From<RsaPublicKey> for RsaKey {
    fn from(k: RsaPublicKey) -> Self {
        RsaKey::Public(k)
    }
}

impl From<RsaPrivateKey> for RsaKey {
    fn from(k: RsaPrivateKey) -> Self {
        RsaKey::Private(k)
    }
}

fn type_error(expected: KeyKind, found: KeyKind) -> Error {
    Error::PemType {
        expected: expected.name(),
        found: found.name(),
    }
}

fn push_int(out: &mut Vec<u8>, x: &BigUint) {
    let bytes = x.to_bytes_be();
    out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
    out.extend_from_slice(&bytes);
}

fn payload(kind: KeyKind, ints: &[&BigUint]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(PEM_MAGIC);
    out.extend_from_slice(&VERSION.to_be_bytes());
    out.push(match kind {
        KeyKind::Public => 0,
        KeyKind::Private => 1,
    });
    for x in ints {
        push_int(&mut out, x);
    }
    out
}

impl RsaPublicKey {
    pub fn to_payload(&self) -> Vec<u8> {
        payload(KeyKind::Public, &[&self.n, &self.e])
    }
}

impl RsaPrivateKey {
    pub fn to_payload(&self) -> Vec<u8> {
        payload(KeyKind::Private, &[&self.n, &self.e, &self.d, &self.p, &self.q])
    }
}

fn syntax(msg: &str) -> Error {
    Error::PemSyntax(msg.to_owned())
}

/// Parses a binary key payload.
pub fn key_from_payload(bytes: &[u8]) -> Result<RsaKey> {
    if bytes.len() < 7 {
        return Err(if bytes.len() >= 4 && &bytes[..4] != PEM_MAGIC {
            Error::PemMagic
        } else {
            syntax("key payload too short")
        });
    }
    if &bytes[..4] != PEM_MAGIC {
        return Err(Error::PemMagic);
    }
    let version = u16::from_be_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::PemSyntax(format!("unsupported key payload version {version}")));
    }
    let (kind, count) = match bytes[6] {
        0 => (KeyKind::Public, 2),
        1 => (KeyKind::Private, 5),
        t => return Err(Error::PemSyntax(format!("unknown key type {t}"))),
    };
    let mut rest = &bytes[7..];
    let mut ints = Vec::with_capacity(count);
    for _ in 0..count {
        if rest.len() < 4 {
            return Err(syntax("truncated key payload"));
        }
        let len = u32::from_be_bytes(rest[..4].try_into().unwrap()) as usize;
        rest = &rest[4..];
        if rest.len() < len {
            return Err(syntax("truncated key payload"));
        }
        ints.push(BigUint::from_bytes_be(&rest[..len]));
        rest = &rest[len..];
    }
    if !rest.is_empty() {
        return Err(syntax("trailing bytes after key payload"));
    }
    let mut ints = ints.into_iter();
    let mut next = || ints.next().expect("count checked");
    Ok(match kind {
        KeyKind::Public => {
            let (n, e) = (next(), next());
            RsaKey::Public(RsaPublicKey::new(n, e).map_err(|_| syntax("invalid public exponent"))?)
        }
        KeyKind::Private => {
            let (n, e, d, p, q) = (next(), next(), next(), next(), next());
            RsaKey::Private(
                RsaPrivateKey::from_components(n, e, d, p, q).map_err(|_| syntax("inconsistent private key"))?,
            )
        }
    })
}

/// An armored block: a label and its binary payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PemBlock {
    pub label: String,
    pub payload: Vec<u8>,
}

impl PemBlock {
    pub fn to_pem_string(&self) -> String {
        let body = STANDARD.encode(&self.payload);
        let mut out = format!("-----BEGIN {}-----\n", self.label);
        for line in body.as_bytes().chunks(LINE_WIDTH) {
            out.push_str(std::str::from_utf8(line).expect("base64 is ascii"));
            out.push('\n');
        }
        out.push_str(&format!("-----END {}-----\n", self.label));
        out
    }

    pub fn parse(text: &str) -> Result<PemBlock> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let begin = lines.next().ok_or_else(|| syntax("empty input"))?;
        let label = begin
            .strip_prefix("-----BEGIN ")
            .and_then(|l| l.strip_suffix("-----"))
            .ok_or_else(|| syntax("missing BEGIN line"))?;
        let end_line = format!("-----END {label}-----");
        let mut body = String::new();
        let mut closed = false;
        for line in lines.by_ref() {
            if line == end_line {
                closed = true;
                break;
            }
            if line.starts_with("-----") {
                return Err(syntax("mismatched END line"));
            }
            body.push_str(line);
        }
        if !closed {
            return Err(syntax("missing END line"));
        }
        if lines.next().is_some() {
            return Err(syntax("data after END line"));
        }
        let payload = STANDARD
            .decode(body.as_bytes())
            .map_err(|e| Error::PemSyntax(format!("bad base64: {e}")))?;
        Ok(PemBlock {
            label: label.to_owned(),
            payload,
        })
    }
}

pub fn encode_pem(key: &RsaKey) -> String {
    let payload = match key {
        RsaKey::Public(k) => k.to_payload(),
        RsaKey::Private(k) => k.to_payload(),
    };
    PemBlock {
        label: key.kind().label().to_owned(),
        payload,
    }
    .to_pem_string()
}

/// Decodes either key type; the armor label must agree with the payload.
pub fn decode_pem(text: &str) -> Result<RsaKey> {
    let block = PemBlock::parse(text)?;
    let labelled = KeyKind::from_label(&block.label)
        .ok_or_else(|| Error::PemSyntax(format!("unknown label {:?}", block.label)))?;
    let key = key_from_payload(&block.payload)?;
    if key.kind() != labelled {
        return Err(type_error(labelled, key.kind()));
    }
    Ok(key)
}

impl RsaPublicKey {
    pub fn to_pem(&self) -> String {
        encode_pem(&RsaKey::Public(self.clone()))
    }

    pub fn from_pem(text: &str) -> Result<Self> {
        decode_pem(text)?.into_public()
    }

    pub fn from_payload(bytes: &[u8]) -> Result<Self> {
        key_from_payload(bytes)?.into_public()
    }
}

impl RsaPrivateKey {
    pub fn to_pem(&self) -> String {
        encode_pem(&RsaKey::Private(self.clone()))
    }

    pub fn from_pem(text: &str) -> Result<Self> {
        decode_pem(text)?.into_private()
    }

    pub fn from_payload(bytes: &[u8]) -> Result<Self> {
        key_from_payload(bytes)?.into_private()
    }
}
