//! Hybrid envelopes: AES-128-CBC over the payload, the AES key wrapped under
//! the recipient's RSA key, and a SHA-256 digest of the plaintext so a
//! round trip can be checked end to end.
//!
//! Encoded layout (big-endian):
//!
//! ```text
//! "HENV" | version:u16 = 1 | fingerprint:32 | wrapped_key_len:u16 | wrapped_key
//!        | iv:16 | plaintext_digest:32 | ciphertext_len:u64 | ciphertext
//! ```
//!
//! The fingerprint is the SHA-256 of the recipient's public-key payload.

use std::io::{self, Cursor, Read, Seek, SeekFrom, Write};

use rand::RngCore;
use sha2::{Digest, Sha256};

use crate::aes::{AesKey128, Block, CbcDecryptor, CbcEncryptor, BLOCK_SIZE};
use crate::rng;
use crate::rsa::{unwrap_key, wrap_key_with_rng, RsaPrivateKey, RsaPublicKey};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"HENV";
pub const VERSION: u16 = 1;
pub const CHUNK_SIZE: usize = 64 * 1024;

/// Header bytes excluding the wrapped key itself.
const FIXED_HEADER: usize = 4 + 2 + 32 + 2 + 16 + 32 + 8;

#[derive(Clone, PartialEq, Eq)]
pub struct Envelope {
    pub recipient_fingerprint: [u8; 32],
    pub wrapped_key: Vec<u8>,
    pub iv: Block,
    pub plaintext_digest: [u8; 32],
    pub ciphertext: Vec<u8>,
}

impl std::fmt::Debug for Envelope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Envelope")
            .field("wrapped_key_len", &self.wrapped_key.len())
            .field("ciphertext_len", &self.ciphertext.len())
            .finish_non_exhaustive()
    }
}

pub fn fingerprint(key: &RsaPublicKey) -> [u8; 32] {
    Sha256::digest(key.to_payload()).into()
}

/// Size of the encoded header for a recipient modulus of `modulus_len` bytes.
pub fn header_len(modulus_len: usize) -> usize {
    FIXED_HEADER + modulus_len
}

/// Ciphertext length for a payload of `plaintext_len` bytes.
pub fn ciphertext_len(plaintext_len: u64) -> u64 {
    (plaintext_len / BLOCK_SIZE as u64 + 1) * BLOCK_SIZE as u64
}

struct Header {
    fingerprint: [u8; 32],
    wrapped_key: Vec<u8>,
    iv: Block,
    digest: [u8; 32],
    ciphertext_len: u64,
}

impl Header {
    fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_be_bytes())?;
        w.write_all(&self.fingerprint)?;
        w.write_all(&(self.wrapped_key.len() as u16).to_be_bytes())?;
        w.write_all(&self.wrapped_key)?;
        w.write_all(&self.iv)?;
        w.write_all(&self.digest)?;
        w.write_all(&self.ciphertext_len.to_be_bytes())
    }

    fn read_from<R: Read>(r: &mut R) -> Result<Header> {
        let mut magic = [0u8; 4];
        read_exact(r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::EnvelopeMagic);
        }
        let mut u16buf = [0u8; 2];
        read_exact(r, &mut u16buf)?;
        let version = u16::from_be_bytes(u16buf);
        if version != VERSION {
            return Err(Error::EnvelopeVersion(version));
        }
        let mut fingerprint = [0u8; 32];
        read_exact(r, &mut fingerprint)?;
        read_exact(r, &mut u16buf)?;
        let mut wrapped_key = vec![0u8; u16::from_be_bytes(u16buf) as usize];
        read_exact(r, &mut wrapped_key)?;
        let mut iv = [0u8; 16];
        read_exact(r, &mut iv)?;
        let mut digest = [0u8; 32];
        read_exact(r, &mut digest)?;
        let mut u64buf = [0u8; 8];
        read_exact(r, &mut u64buf)?;
        Ok(Header {
            fingerprint,
            wrapped_key,
            iv,
            digest,
            ciphertext_len: u64::from_be_bytes(u64buf),
        })
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => Error::EnvelopeTruncated,
        _ => Error::Io(e),
    })
}

/// Reads until `buf` is full or the stream ends; returns the bytes read.
fn fill<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

/// What [`seal_stream`] wrote.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SealSummary {
    pub plaintext_len: u64,
    pub ciphertext_len: u64,
    pub header_len: u64,
}

/// Seals everything `reader` yields into `writer`, 64 KiB at a time.
///
/// The digest and ciphertext length are only known at the end, so the
/// header is written with placeholders and patched afterwards.
pub fn seal_stream<R, W, G>(
    reader: &mut R,
    writer: &mut W,
    recipient: &RsaPublicKey,
    rng: &mut G,
) -> Result<SealSummary>
where
    R: Read,
    W: Write + Seek,
    G: RngCore + ?Sized,
{
    let mut raw_key = [0u8; 16];
    rng.fill_bytes(&mut raw_key);
    let aes_key = AesKey128::new(raw_key);
    raw_key.fill(0);
    let mut iv = [0u8; 16];
    rng.fill_bytes(&mut iv);
    let wrapped_key = wrap_key_with_rng(&aes_key, recipient, rng)?;

    let start = writer.stream_position()?;
    let mut header = Header {
        fingerprint: fingerprint(recipient),
        wrapped_key,
        iv,
        digest: [0; 32],
        ciphertext_len: 0,
    };
    header.write_to(writer)?;
    let header_end = writer.stream_position()?;

    let mut hasher = Sha256::new();
    let mut enc = CbcEncryptor::new(&aes_key, &iv);
    let mut chunk = vec![0u8; CHUNK_SIZE];
    let mut out = Vec::with_capacity(CHUNK_SIZE + BLOCK_SIZE);
    let mut plaintext_len = 0u64;
    loop {
        let n = fill(reader, &mut chunk)?;
        if n == 0 {
            break;
        }
        plaintext_len += n as u64;
        hasher.update(&chunk[..n]);
        out.clear();
        enc.update(&chunk[..n], &mut out);
        writer.write_all(&out)?;
    }
    out.clear();
    enc.finish(&mut out);
    writer.write_all(&out)?;
    let end = writer.stream_position()?;

    header.digest = hasher.finalize().into();
    header.ciphertext_len = end - header_end;
    writer.seek(SeekFrom::Start(start))?;
    header.write_to(writer)?;
    writer.seek(SeekFrom::Start(end))?;
    writer.flush()?;

    Ok(SealSummary {
        plaintext_len,
        ciphertext_len: header.ciphertext_len,
        header_len: header_end - start,
    })
}

/// Opens an encoded envelope from `reader`, streaming plaintext into
/// `writer`. Returns the plaintext length.
///
/// Plaintext is written before the digest can be checked; callers writing to
/// files should write to a temporary location and keep it only on `Ok`.
pub fn open_stream<R: Read, W: Write>(reader: &mut R, writer: &mut W, key: &RsaPrivateKey) -> Result<u64> {
    let header = Header::read_from(reader)?;
    if header.fingerprint != fingerprint(&key.to_public()) {
        return Err(Error::WrongKey);
    }
    let aes_key = unwrap_key(&header.wrapped_key, key).map_err(|e| match e {
        Error::Padding => Error::WrongKey,
        other => other,
    })?;
    if header.ciphertext_len == 0 || header.ciphertext_len % BLOCK_SIZE as u64 != 0 {
        return Err(Error::CorruptCiphertext);
    }

    let mut hasher = Sha256::new();
    let mut dec = CbcDecryptor::new(&aes_key, &header.iv);
    let mut chunk = vec![0u8; CHUNK_SIZE];
    let mut out = Vec::with_capacity(CHUNK_SIZE + BLOCK_SIZE);
    let mut remaining = header.ciphertext_len;
    let mut written = 0u64;
    while remaining > 0 {
        let want = remaining.min(CHUNK_SIZE as u64) as usize;
        let n = fill(reader, &mut chunk[..want])?;
        if n < want {
            return Err(Error::EnvelopeTruncated);
        }
        remaining -= n as u64;
        out.clear();
        dec.update(&chunk[..n], &mut out);
        hasher.update(&out);
        writer.write_all(&out)?;
        written += out.len() as u64;
    }
    out.clear();
    dec.finish(&mut out).map_err(|_| Error::CorruptCiphertext)?;
    hasher.update(&out);
    writer.write_all(&out)?;
    written += out.len() as u64;
    writer.flush()?;

    let digest: [u8; 32] = hasher.finalize().into();
    if digest != header.digest {
        return Err(Error::DigestMismatch);
    }
    Ok(written)
}

/// Seals `plaintext` for `recipient`. A seed makes the AES key, IV and
/// padding bytes reproducible.
pub fn seal(plaintext: &[u8], recipient: &RsaPublicKey, seed: Option<u64>) -> Result<Envelope> {
    let mut rng = rng::from_seed(seed);
    let mut buf = Cursor::new(Vec::with_capacity(plaintext.len() + 512));
    seal_stream(&mut &plaintext[..], &mut buf, recipient, &mut rng)?;
    decode_envelope(&buf.into_inner())
}

pub fn open(env: &Envelope, key: &RsaPrivateKey) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(env.ciphertext.len());
    open_stream(&mut Cursor::new(encode_envelope(env)), &mut out, key)?;
    Ok(out)
}

pub fn encode_envelope(env: &Envelope) -> Vec<u8> {
    let mut out = Vec::with_capacity(header_len(env.wrapped_key.len()) + env.ciphertext.len());
    Header {
        fingerprint: env.recipient_fingerprint,
        wrapped_key: env.wrapped_key.clone(),
        iv: env.iv,
        digest: env.plaintext_digest,
        ciphertext_len: env.ciphertext.len() as u64,
    }
    .write_to(&mut out)
    .expect("writing to a Vec");
    out.extend_from_slice(&env.ciphertext);
    out
}

pub fn decode_envelope(bytes: &[u8]) -> Result<Envelope> {
    let mut cursor = Cursor::new(bytes);
    let header = Header::read_from(&mut cursor)?;
    let offset = cursor.position() as usize;
    let body = &bytes[offset..];
    let len = usize::try_from(header.ciphertext_len).map_err(|_| Error::EnvelopeTruncated)?;
    if body.len() < len {
        return Err(Error::EnvelopeTruncated);
    }
    if body.len() > len {
        return Err(Error::Malformed("envelope (trailing bytes)"));
    }
    Ok(Envelope {
        recipient_fingerprint: header.fingerprint,
        wrapped_key: header.wrapped_key,
        iv: header.iv,
        plaintext_digest: header.digest,
        ciphertext: body.to_vec(),
    })
}
