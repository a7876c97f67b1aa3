//! Textbook RSA over arbitrary-precision integers.
//!
//! Keys are generated from two random probable primes of half the modulus
//! size. The raw primitives are `c = m^e mod n` and `m = c^d mod n`; AES keys
//! are wrapped with a PKCS#1 v1.5 encryption block
//! (`00 || 02 || PS || 00 || key`, with at least 8 nonzero random bytes in PS).

mod arith;
mod pem;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::One;
use rand::RngCore;

use crate::aes::AesKey128;
use crate::rng;
use crate::{Error, Result};

pub use arith::{is_probable_prime, mod_exp, mod_inverse};
pub use pem::{decode_pem, encode_pem, KeyKind, PemBlock, RsaKey, PEM_MAGIC};

pub const DEFAULT_EXPONENT: u64 = 65537;
pub const SUPPORTED_BITS: [usize; 5] = [512, 1024, 2048, 3072, 4096];
pub const MILLER_RABIN_ROUNDS: u32 = 40;

const KEYGEN_ATTEMPTS: usize = 64;
/// Two header bytes, the zero separator and at least eight bytes of PS.
const WRAP_OVERHEAD: usize = 11;

#[derive(Clone, PartialEq, Eq)]
pub struct RsaPublicKey {
    n: BigUint,
    e: BigUint,
}

impl RsaPublicKey {
    pub fn new(n: BigUint, e: BigUint) -> Result<Self> {
        if e <= BigUint::one() || e >= n || e.is_even() {
            return Err(Error::InvalidExponent);
        }
        Ok(RsaPublicKey { n, e })
    }

    pub fn n(&self) -> &BigUint {
        &self.n
    }

    pub fn e(&self) -> &BigUint {
        &self.e
    }

    pub fn bits(&self) -> u64 {
        self.n.bits()
    }

    /// Modulus length in bytes.
    pub fn size(&self) -> usize {
        self.n.bits().div_ceil(8) as usize
    }
}

impl std::fmt::Debug for RsaPublicKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RsaPublicKey")
            .field("bits", &self.bits())
            .field("e", &self.e)
            .finish()
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct RsaPrivateKey {
    n: BigUint,
    e: BigUint,
    d: BigUint,
    p: BigUint,
    q: BigUint,
    phi: BigUint,
}

impl RsaPrivateKey {
    /// Assembles a private key from its factors, checking `n = p*q` and
    /// `e*d = 1 (mod phi)`.
    pub fn from_components(n: BigUint, e: BigUint, d: BigUint, p: BigUint, q: BigUint) -> Result<Self> {
        if p == q || &p * &q != n || p <= BigUint::one() || q <= BigUint::one() {
            return Err(Error::Malformed("RSA private key factors"));
        }
        let phi = (&p - 1u32) * (&q - 1u32);
        if !(&e * &d % &phi).is_one() {
            return Err(Error::Malformed("RSA private exponent"));
        }
        Ok(RsaPrivateKey { n, e, d, p, q, phi })
    }

    pub fn n(&self) -> &BigUint {
        &self.n
    }

    pub fn e(&self) -> &BigUint {
        &self.e
    }

    pub fn d(&self) -> &BigUint {
        &self.d
    }

    pub fn p(&self) -> &BigUint {
        &self.p
    }

    pub fn q(&self) -> &BigUint {
        &self.q
    }

    pub fn phi(&self) -> &BigUint {
        &self.phi
    }

    pub fn to_public(&self) -> RsaPublicKey {
        RsaPublicKey {
            n: self.n.clone(),
            e: self.e.clone(),
        }
    }

    pub fn size(&self) -> usize {
        self.n.bits().div_ceil(8) as usize
    }
}

impl std::fmt::Debug for RsaPrivateKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RsaPrivateKey")
            .field("bits", &self.n.bits())
            .finish_non_exhaustive()
    }
}

pub fn generate_keypair(bits: usize, e: u64, seed: Option<u64>) -> Result<(RsaPublicKey, RsaPrivateKey)> {
    generate_keypair_with_rng(bits, e, &mut rng::from_seed(seed))
}

pub fn generate_keypair_with_rng<R: RngCore + ?Sized>(
    bits: usize,
    e: u64,
    rng: &mut R,
) -> Result<(RsaPublicKey, RsaPrivateKey)> {
    if !SUPPORTED_BITS.contains(&bits) {
        return Err(Error::UnsupportedKeySize(bits));
    }
    if e < 3 || e.is_multiple_of(2) {
        return Err(Error::InvalidExponent);
    }
    let e = BigUint::from(e);
    let half = (bits / 2) as u64;
    for _ in 0..KEYGEN_ATTEMPTS {
        let p = arith::random_prime(half, MILLER_RABIN_ROUNDS, rng);
        let q = arith::random_prime(half, MILLER_RABIN_ROUNDS, rng);
        if p == q {
            continue;
        }
        let phi = (&p - 1u32) * (&q - 1u32);
        let d = match mod_inverse(&e, &phi) {
            Ok(d) => d,
            Err(Error::NotInvertible) => continue,
            Err(err) => return Err(err),
        };
        let n = &p * &q;
        debug_assert_eq!(n.bits(), bits as u64);
        let public = RsaPublicKey {
            n: n.clone(),
            e: e.clone(),
        };
        let private = RsaPrivateKey { n, e, d, p, q, phi };
        return Ok((public, private));
    }
    Err(Error::ExponentClash(KEYGEN_ATTEMPTS))
}

/// `c = m^e mod n`.
pub fn rsa_encrypt_int(m: &BigUint, key: &RsaPublicKey) -> Result<BigUint> {
    if *m >= key.n {
        return Err(Error::MessageTooLarge);
    }
    mod_exp(m, &key.e, &key.n)
}

/// `m = c^d mod n`.
pub fn rsa_decrypt_int(c: &BigUint, key: &RsaPrivateKey) -> Result<BigUint> {
    if *c >= key.n {
        return Err(Error::MessageTooLarge);
    }
    mod_exp(c, &key.d, &key.n)
}

fn to_fixed_be(x: &BigUint, len: usize) -> Vec<u8> {
    let bytes = x.to_bytes_be();
    let mut out = vec![0u8; len.saturating_sub(bytes.len())];
    out.extend_from_slice(&bytes);
    out
}

pub fn wrap_key(aes_key: &AesKey128, key: &RsaPublicKey) -> Result<Vec<u8>> {
    wrap_key_with_rng(aes_key, key, &mut rng::from_seed(None))
}

/// Wraps `aes_key` in a PKCS#1 v1.5 encryption block. The result is exactly
/// the modulus length.
pub fn wrap_key_with_rng<R: RngCore + ?Sized>(aes_key: &AesKey128, key: &RsaPublicKey, rng: &mut R) -> Result<Vec<u8>> {
    let k = key.size();
    let payload = aes_key.as_bytes();
    if k < payload.len() + WRAP_OVERHEAD {
        return Err(Error::KeyTooLargeForModulus);
    }
    let ps_len = k - 3 - payload.len();
    let mut block = Vec::with_capacity(k);
    block.extend_from_slice(&[0x00, 0x02]);
    for _ in 0..ps_len {
        let mut byte = [0u8];
        while byte[0] == 0 {
            rng.fill_bytes(&mut byte);
        }
        block.push(byte[0]);
    }
    block.push(0x00);
    block.extend_from_slice(payload);

    let m = BigUint::from_bytes_be(&block);
    let c = rsa_encrypt_int(&m, key)?;
    Ok(to_fixed_be(&c, k))
}

pub fn unwrap_key(wrapped: &[u8], key: &RsaPrivateKey) -> Result<AesKey128> {
    let k = key.size();
    if wrapped.len() != k {
        return Err(Error::Padding);
    }
    let c = BigUint::from_bytes_be(wrapped);
    if c >= key.n {
        return Err(Error::Padding);
    }
    let block = to_fixed_be(&rsa_decrypt_int(&c, key)?, k);
    if block[0] != 0x00 || block[1] != 0x02 {
        return Err(Error::Padding);
    }
    let sep = block[2..].iter().position(|&b| b == 0).ok_or(Error::Padding)? + 2;
    if sep - 2 < 8 {
        return Err(Error::Padding);
    }
    AesKey128::from_slice(&block[sep + 1..]).ok_or(Error::Padding)
}
