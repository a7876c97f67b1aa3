use sha2::{Digest, Sha256};

pub const DEFAULT_KDF_ITERATIONS: u32 = 100_000;

/// Iterated salted SHA-256:
/// `h0 = H(salt || pin)`, `h_i = H(h_{i-1} || salt || pin)`, output `h_iterations`.
pub fn derive_kdf(pin: &str, salt: &[u8; 16], iterations: u32) -> [u8; 32] {
    let pin = pin.as_bytes();
    let mut h: [u8; 32] = Sha256::new().chain_update(salt).chain_update(pin).finalize().into();
    for _ in 0..iterations {
        h = Sha256::new()
            .chain_update(h)
            .chain_update(salt)
            .chain_update(pin)
            .finalize()
            .into();
    }
    h
}
