//! CBC chaining with PKCS#7 padding, in one-shot and streaming form.

use super::{decrypt_block, encrypt_block, expand_key, AesKey128, Block, RoundKeySchedule, BLOCK_SIZE};
use crate::{Error, Result};

pub fn pkcs7_pad(data: &[u8]) -> Vec<u8> {
    let pad = BLOCK_SIZE - data.len() % BLOCK_SIZE;
    let mut out = Vec::with_capacity(data.len() + pad);
    out.extend_from_slice(data);
    out.resize(data.len() + pad, pad as u8);
    out
}

/// Returns the number of padding bytes at the end of `block`.
fn padding_len(block: &[u8]) -> Result<usize> {
    let pad = *block.last().ok_or(Error::Padding)? as usize;
    if pad == 0 || pad > BLOCK_SIZE || pad > block.len() {
        return Err(Error::Padding);
    }
    if block[block.len() - pad..].iter().any(|&b| b as usize != pad) {
        return Err(Error::Padding);
    }
    Ok(pad)
}

pub fn pkcs7_unpad(data: &[u8]) -> Result<Vec<u8>> {
    if data.is_empty() || !data.len().is_multiple_of(BLOCK_SIZE) {
        return Err(Error::Length(data.len()));
    }
    let pad = padding_len(data)?;
    Ok(data[..data.len() - pad].to_vec())
}

/// Incremental CBC encryption. Input may arrive in chunks of any size.
pub struct CbcEncryptor {
    ks: RoundKeySchedule,
    prev: Block,
    partial: Vec<u8>,
}

impl CbcEncryptor {
    pub fn new(key: &AesKey128, iv: &Block) -> Self {
        CbcEncryptor {
            ks: expand_key(key),
            prev: *iv,
            partial: Vec::with_capacity(BLOCK_SIZE),
        }
    }

    fn push_block(&mut self, block: &[u8], out: &mut Vec<u8>) {
        let mut x = self.prev;
        for (a, b) in x.iter_mut().zip(block) {
            *a ^= b;
        }
        self.prev = encrypt_block(&x, &self.ks);
        out.extend_from_slice(&self.prev);
    }

    pub fn update(&mut self, mut input: &[u8], out: &mut Vec<u8>) {
        if !self.partial.is_empty() {
            let take = (BLOCK_SIZE - self.partial.len()).min(input.len());
            self.partial.extend_from_slice(&input[..take]);
            input = &input[take..];
            if self.partial.len() < BLOCK_SIZE {
                return;
            }
            let block = std::mem::take(&mut self.partial);
            self.push_block(&block, out);
        }
        let mut chunks = input.chunks_exact(BLOCK_SIZE);
        for block in &mut chunks {
            self.push_block(block, out);
        }
        self.partial.extend_from_slice(chunks.remainder());
    }

    /// Pads the buffered tail and emits the final block.
    pub fn finish(mut self, out: &mut Vec<u8>) {
        let tail = pkcs7_pad(&std::mem::take(&mut self.partial));
        self.push_block(&tail, out);
    }
}

/// Incremental CBC decryption. The last full block is held back until
/// [`CbcDecryptor::finish`] so its padding can be checked.
pub struct CbcDecryptor {
    ks: RoundKeySchedule,
    prev: Block,
    pending: Vec<u8>,
    seen: usize,
}

impl CbcDecryptor {
    pub fn new(key: &AesKey128, iv: &Block) -> Self {
        CbcDecryptor {
            ks: expand_key(key),
            prev: *iv,
            pending: Vec::with_capacity(BLOCK_SIZE * 2),
            seen: 0,
        }
    }

    fn decrypt_one(&mut self, block: &[u8]) -> Block {
        let c: Block = block.try_into().expect("full block");
        let mut p = decrypt_block(&c, &self.ks);
        for (a, b) in p.iter_mut().zip(&self.prev) {
            *a ^= b;
        }
        self.prev = c;
        p
    }

    pub fn update(&mut self, input: &[u8], out: &mut Vec<u8>) {
        self.seen += input.len();
        self.pending.extend_from_slice(input);
        // Keep at least one block (the possible final block) buffered.
        let full = self.pending.len() / BLOCK_SIZE;
        if full <= 1 {
            return;
        }
        let ready = if self.pending.len().is_multiple_of(BLOCK_SIZE) {
            (full - 1) * BLOCK_SIZE
        } else {
            full * BLOCK_SIZE
        };
        let pending = std::mem::take(&mut self.pending);
        for block in pending[..ready].chunks_exact(BLOCK_SIZE) {
            let p = self.decrypt_one(block);
            out.extend_from_slice(&p);
        }
        self.pending = pending[ready..].to_vec();
    }

    pub fn finish(mut self, out: &mut Vec<u8>) -> Result<()> {
        if self.seen == 0 || !self.seen.is_multiple_of(BLOCK_SIZE) {
            return Err(Error::Length(self.seen));
        }
        let last = std::mem::take(&mut self.pending);
        debug_assert_eq!(last.len(), BLOCK_SIZE);
        let p = self.decrypt_one(&last);
        let pad = padding_len(&p)?;
        out.extend_from_slice(&p[..BLOCK_SIZE - pad]);
        Ok(())
    }
}

pub fn cbc_encrypt(plaintext: &[u8], key: &AesKey128, iv: &Block) -> Vec<u8> {
    let mut out = Vec::with_capacity(plaintext.len() + BLOCK_SIZE);
    let mut enc = CbcEncryptor::new(key, iv);
    enc.update(plaintext, &mut out);
    enc.finish(&mut out);
    out
}

pub fn cbc_decrypt(ciphertext: &[u8], key: &AesKey128, iv: &Block) -> Result<Vec<u8>> {
    if ciphertext.is_empty() || !ciphertext.len().is_multiple_of(BLOCK_SIZE) {
        return Err(Error::Length(ciphertext.len()));
    }
    let mut out = Vec::with_capacity(ciphertext.len());
    let mut dec = CbcDecryptor::new(key, iv);
    dec.update(ciphertext, &mut out);
    dec.finish(&mut out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aes::hex16;
    use proptest::prelude::*;
    use rand::{RngCore, SeedableRng};

    fn kat_key() -> AesKey128 {
        AesKey128::new(hex16("2b7e151628aed2a6abf7158809cf4f3c"))
    }

    fn kat_iv() -> Block {
        hex16("000102030405060708090a0b0c0d0e0f")
    }

    fn unhex(s: &str) -> Vec<u8> {
        (0..s.len())
            .step_by(2)
            .map(|i| u8::from_str_radix(&s[i..i + 2], 16).unwrap())
            .collect()
    }

    #[test]
    fn padding_rules() {
        let padded = pkcs7_pad(&[0xaa; 12]);
        assert_eq!(&padded[12..], &[4, 4, 4, 4]);
        let padded = pkcs7_pad(&[0xaa; 16]);
        assert_eq!(padded.len(), 32);
        assert!(padded[16..].iter().all(|&b| b == 0x10));
        assert_eq!(pkcs7_pad(&[]), vec![16; 16]);
    }

    #[test]
    fn unpad_rejects_bad_blocks() {
        let mut block = [3u8; 16];
        block[15] = 0;
        assert!(matches!(pkcs7_unpad(&block), Err(Error::Padding)));
        block[15] = 17;
        assert!(matches!(pkcs7_unpad(&block), Err(Error::Padding)));
        block[15] = 3;
        block[14] = 2;
        assert!(matches!(pkcs7_unpad(&block), Err(Error::Padding)));
        assert!(matches!(pkcs7_unpad(&[1u8; 15]), Err(Error::Length(15))));
        assert!(matches!(pkcs7_unpad(&[]), Err(Error::Length(0))));
    }

    // Vectors produced by OpenSSL (AES-128-CBC, PKCS#7) for the same key/IV.
    #[test]
    fn cbc_known_answers() {
        let cases = [
            ("", "c84af0b613435d5d9182801a9bd9320b"),
            ("6d696e6968736d", "80df644725a654f659ee244f12e5bf57"),
            (
                "000102030405060708090a0b0c0d0e0f",
                "7df76b0c1ab899b33e42f047b91b546fd41865c709967b7be12a33cc2251d389",
            ),
            (
                "000102030405060708090a0b0c0d0e0f101112131415161718191a1b1c1d1e1f2021222324252627",
                "7df76b0c1ab899b33e42f047b91b546f1caa8018c80b15b8e7aea82794adcb00f4f39c1281d8fd5942503a095734829b",
            ),
        ];
        for (pt, ct) in cases {
            let (pt, ct) = (unhex(pt), unhex(ct));
            assert_eq!(cbc_encrypt(&pt, &kat_key(), &kat_iv()), ct);
            assert_eq!(cbc_decrypt(&ct, &kat_key(), &kat_iv()).unwrap(), pt);
        }
    }

    #[test]
    fn empty_plaintext_is_one_block() {
        assert_eq!(cbc_encrypt(&[], &kat_key(), &kat_iv()).len(), 16);
    }

    #[test]
    fn decrypt_rejects_bad_lengths() {
        assert!(matches!(cbc_decrypt(&[], &kat_key(), &kat_iv()), Err(Error::Length(0))));
        assert!(matches!(
            cbc_decrypt(&[0; 17], &kat_key(), &kat_iv()),
            Err(Error::Length(17))
        ));
    }

    #[test]
    fn large_round_trip() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(1);
        let mut data = vec![0u8; 1 << 20];
        rng.fill_bytes(&mut data);
        let ct = cbc_encrypt(&data, &kat_key(), &kat_iv());
        assert_eq!(ct.len(), data.len() + 16);
        assert_eq!(cbc_decrypt(&ct, &kat_key(), &kat_iv()).unwrap(), data);
    }

    proptest! {
        #[test]
        fn pad_unpad(data in proptest::collection::vec(any::<u8>(), 0..100)) {
            let padded = pkcs7_pad(&data);
            prop_assert_eq!(padded.len() % 16, 0);
            prop_assert_eq!(pkcs7_unpad(&padded).unwrap(), data);
        }

        #[test]
        fn streaming_matches_one_shot(
            data in proptest::collection::vec(any::<u8>(), 0..300),
            splits in proptest::collection::vec(1usize..40, 1..10),
            key in any::<[u8; 16]>(),
            iv in any::<[u8; 16]>(),
        ) {
            let key = AesKey128::new(key);
            let expected = cbc_encrypt(&data, &key, &iv);

            let mut enc = CbcEncryptor::new(&key, &iv);
            let mut ct = Vec::new();
            let mut rest = &data[..];
            for s in splits.iter().cycle().take(64) {
                let n = (*s).min(rest.len());
                enc.update(&rest[..n], &mut ct);
                rest = &rest[n..];
            }
            enc.update(rest, &mut ct);
            enc.finish(&mut ct);
            prop_assert_eq!(&ct, &expected);

            let mut dec = CbcDecryptor::new(&key, &iv);
            let mut pt = Vec::new();
            let mut rest = &ct[..];
            for s in splits.iter().cycle().take(64) {
                let n = (*s).min(rest.len());
                dec.update(&rest[..n], &mut pt);
                rest = &rest[n..];
            }
            dec.update(rest, &mut pt);
            dec.finish(&mut pt).unwrap();
            prop_assert_eq!(pt, data);
        }
    }
}
