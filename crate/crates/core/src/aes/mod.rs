//! AES-128 built from its round primitives.
//!
//! The state is a 4x4 byte matrix filled column-major from a 16-byte block,
//! so byte `i` of the block lands in row `i % 4`, column `i / 4`. Every round
//! primitive is exposed as a pure function over [`AesState`].

mod cbc;
mod tables;

use zeroize::{Zeroize, ZeroizeOnDrop};

pub use cbc::{cbc_decrypt, cbc_encrypt, pkcs7_pad, pkcs7_unpad, CbcDecryptor, CbcEncryptor};
pub use tables::{build_sbox, gf_mul, MixColumnsMatrix, SBoxTable, MIX_COLUMNS};

use tables::tables;

pub const BLOCK_SIZE: usize = 16;
pub const ROUNDS: usize = 10;

pub type Block = [u8; BLOCK_SIZE];
pub type RoundKey = [u8; BLOCK_SIZE];

/// The 4x4 cipher state, indexed `[row][column]`.
#[derive(Clone, Copy, PartialEq, Eq, Default)]
pub struct AesState {
    cells: [[u8; 4]; 4],
}

impl AesState {
    pub fn from_block(block: &Block) -> Self {
        let mut cells = [[0u8; 4]; 4];
        for (i, &b) in block.iter().enumerate() {
            cells[i % 4][i / 4] = b;
        }
        AesState { cells }
    }

    pub fn to_block(&self) -> Block {
        let mut block = [0u8; BLOCK_SIZE];
        for (i, b) in block.iter_mut().enumerate() {
            *b = self.cells[i % 4][i / 4];
        }
        block
    }

    pub fn from_rows(cells: [[u8; 4]; 4]) -> Self {
        AesState { cells }
    }

    pub fn rows(&self) -> &[[u8; 4]; 4] {
        &self.cells
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.cells[row][col]
    }
}

impl std::fmt::Debug for AesState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "AesState(")?;
        for b in self.to_block() {
            write!(f, "{b:02x}")?;
        }
        write!(f, ")")
    }
}

/// A 128-bit AES key. Zeroed on drop.
#[derive(Clone, PartialEq, Eq, Zeroize, ZeroizeOnDrop)]
pub struct AesKey128([u8; 16]);

impl AesKey128 {
    pub fn new(bytes: [u8; 16]) -> Self {
        AesKey128(bytes)
    }

    pub fn from_slice(bytes: &[u8]) -> Option<Self> {
        bytes.try_into().ok().map(AesKey128)
    }

    pub fn as_bytes(&self) -> &[u8; 16] {
        &self.0
    }
}

impl std::fmt::Debug for AesKey128 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("AesKey128(..)")
    }
}

/// Round keys 0 through 10.
#[derive(Clone, PartialEq, Eq, Zeroize, ZeroizeOnDrop)]
pub struct RoundKeySchedule {
    round_keys: [RoundKey; ROUNDS + 1],
}

impl RoundKeySchedule {
    pub fn round_key(&self, round: usize) -> &RoundKey {
        &self.round_keys[round]
    }

    pub fn round_keys(&self) -> &[RoundKey; ROUNDS + 1] {
        &self.round_keys
    }
}

impl std::fmt::Debug for RoundKeySchedule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("RoundKeySchedule(..)")
    }
}

pub fn add_round_key(state: AesState, rk: &RoundKey) -> AesState {
    let mut out = state;
    for (i, &k) in rk.iter().enumerate() {
        out.cells[i % 4][i / 4] ^= k;
    }
    out
}

fn substitute(state: AesState, table: &[u8; 256]) -> AesState {
    let mut out = state;
    for row in out.cells.iter_mut() {
        for cell in row.iter_mut() {
            *cell = table[*cell as usize];
        }
    }
    out
}

pub fn sub_bytes(state: AesState) -> AesState {
    substitute(state, &tables().sbox.forward)
}

pub fn inv_sub_bytes(state: AesState) -> AesState {
    substitute(state, &tables().sbox.inverse)
}

/// Rotates row `r` left by `r` positions.
pub fn shift_rows(state: AesState) -> AesState {
    let mut out = state;
    for (r, row) in out.cells.iter_mut().enumerate() {
        row.rotate_left(r);
    }
    out
}

/// Rotates row `r` right by `r` positions.
pub fn inv_shift_rows(state: AesState) -> AesState {
    let mut out = state;
    for (r, row) in out.cells.iter_mut().enumerate() {
        row.rotate_right(r);
    }
    out
}

fn mix_with(state: AesState, matrix: &[[u8; 4]; 4]) -> AesState {
    let mul = &tables().mul;
    let mut out = AesState::default();
    for col in 0..4 {
        for (row, coeffs) in matrix.iter().enumerate() {
            out.cells[row][col] = coeffs
                .iter()
                .enumerate()
                .fold(0, |acc, (k, &c)| acc ^ mul[c as usize][state.cells[k][col] as usize]);
        }
    }
    out
}

pub fn mix_columns(state: AesState) -> AesState {
    mix_with(state, &MIX_COLUMNS.forward)
}

pub fn inv_mix_columns(state: AesState) -> AesState {
    mix_with(state, &MIX_COLUMNS.inverse)
}

/// AES-128 key expansion (RotWord, SubWord, Rcon).
pub fn expand_key(key: &AesKey128) -> RoundKeySchedule {
    let t = tables();
    let mut words = [[0u8; 4]; 4 * (ROUNDS + 1)];
    for (i, word) in words.iter_mut().take(4).enumerate() {
        word.copy_from_slice(&key.0[4 * i..4 * i + 4]);
    }
    for i in 4..words.len() {
        let mut temp = words[i - 1];
        if i % 4 == 0 {
            temp.rotate_left(1);
            for b in temp.iter_mut() {
                *b = t.sbox.forward[*b as usize];
            }
            temp[0] ^= t.rcon[i / 4 - 1];
        }
        for j in 0..4 {
            words[i][j] = words[i - 4][j] ^ temp[j];
        }
    }
    let mut round_keys = [[0u8; 16]; ROUNDS + 1];
    for (r, rk) in round_keys.iter_mut().enumerate() {
        for w in 0..4 {
            rk[4 * w..4 * w + 4].copy_from_slice(&words[4 * r + w]);
        }
    }
    words.zeroize();
    RoundKeySchedule { round_keys }
}

pub fn encrypt_block(block: &Block, ks: &RoundKeySchedule) -> Block {
    let mut state = add_round_key(AesState::from_block(block), ks.round_key(0));
    for round in 1..ROUNDS {
        state = sub_bytes(state);
        state = shift_rows(state);
        state = mix_columns(state);
        state = add_round_key(state, ks.round_key(round));
    }
    state = sub_bytes(state);
    state = shift_rows(state);
    state = add_round_key(state, ks.round_key(ROUNDS));
    state.to_block()
}

/// Straightforward inverse cipher; uses the encryption schedule unchanged.
pub fn decrypt_block(block: &Block, ks: &RoundKeySchedule) -> Block {
    let mut state = add_round_key(AesState::from_block(block), ks.round_key(ROUNDS));
    for round in (1..ROUNDS).rev() {
        state = inv_shift_rows(state);
        state = inv_sub_bytes(state);
        state = add_round_key(state, ks.round_key(round));
        state = inv_mix_columns(state);
    }
    state = inv_shift_rows(state);
    state = inv_sub_bytes(state);
    state = add_round_key(state, ks.round_key(0));
    state.to_block()
}

#[cfg(test)]
pub(crate) fn hex16(s: &str) -> [u8; 16] {
    let mut out = [0u8; 16];
    for (i, b) in out.iter_mut().enumerate() {
        *b = u8::from_str_radix(&s[2 * i..2 * i + 2], 16).unwrap();
    }
    out
}
