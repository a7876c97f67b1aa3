use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // block cipher and padding
    #[error("invalid PKCS#7 padding")]
    Padding,
    #[error("ciphertext length {0} is not a nonzero multiple of 16")]
    Length(usize),

    // RSA
    #[error("modulus must be greater than 1")]
    InvalidModulus,
    #[error("value has no inverse for this modulus")]
    NotInvertible,
    #[error("unsupported RSA modulus size {0} (expected 512, 1024, 2048, 3072 or 4096)")]
    UnsupportedKeySize(usize),
    #[error("public exponent shares a factor with phi(n) after {0} attempts")]
    ExponentClash(usize),
    #[error("invalid public exponent")]
    InvalidExponent,
    #[error("message is not smaller than the modulus")]
    MessageTooLarge,
    #[error("modulus too small to wrap a 16-byte key")]
    KeyTooLargeForModulus,
    #[error("malformed PEM: {0}")]
    PemSyntax(String),
    #[error("PEM payload does not carry the RSAK magic")]
    PemMagic,
    #[error("expected a {expected} key, found a {found} key")]
    PemType {
        expected: &'static str,
        found: &'static str,
    },

    // envelopes
    #[error("envelope cannot be opened with this private key")]
    WrongKey,
    #[error("envelope ciphertext is corrupt")]
    CorruptCiphertext,
    #[error("decrypted payload does not match the sealed digest")]
    DigestMismatch,
    #[error("not an envelope (bad magic)")]
    EnvelopeMagic,
    #[error("envelope is truncated")]
    EnvelopeTruncated,
    #[error("unsupported envelope version {0}")]
    EnvelopeVersion(u16),

    // token store
    #[error("a slot labelled {0:?} already exists")]
    DuplicateSlotLabel(String),
    #[error("PIN must be between 4 and 255 bytes")]
    WeakPin,
    #[error("authentication failed")]
    AuthFailure,
    #[error("no slot labelled {0:?}")]
    UnknownSlot(String),
    #[error("operation requires the security officer role")]
    RoleDenied,
    #[error("session does not belong to slot {0:?}")]
    SessionMismatch(String),
    #[error("a key labelled {0:?} already exists in this slot")]
    DuplicateKeyLabel(String),
    #[error("no key labelled {0:?}")]
    UnknownKey(String),
    #[error("not a token file (bad magic)")]
    TokenMagic,
    #[error("token file is truncated")]
    TokenTruncated,
    #[error("unsupported token file version {0}")]
    TokenVersion(u16),
    #[error("malformed {0}")]
    Malformed(&'static str),

    // bench
    #[error("process CPU accounting is not available on this platform")]
    MeasurementUnsupported,

    #[error(transparent)]
    Io(#[from] io::Error),
}
