//! Finite-field arithmetic and the tables derived from it.

use std::sync::OnceLock;

/// AES reduction polynomial x^8 + x^4 + x^3 + x + 1 without the x^8 term.
const REDUCTION: u8 = 0x1b;

/// Multiplication in GF(2^8) modulo x^8 + x^4 + x^3 + x + 1.
pub fn gf_mul(a: u8, b: u8) -> u8 {
    let (mut a, mut b) = (a, b);
    let mut product = 0u8;
    while b != 0 {
        if b & 1 != 0 {
            product ^= a;
        }
        let carry = a & 0x80 != 0;
        a <<= 1;
        if carry {
            a ^= REDUCTION;
        }
        b >>= 1;
    }
    product
}

/// Multiplicative inverse in GF(2^8); zero maps to zero.
fn gf_inv(a: u8) -> u8 {
    if a == 0 {
        return 0;
    }
    // a^254 = a^-1 since the multiplicative group has order 255.
    let mut result = 1u8;
    let mut base = a;
    let mut exp = 254u8;
    while exp != 0 {
        if exp & 1 != 0 {
            result = gf_mul(result, base);
        }
        base = gf_mul(base, base);
        exp >>= 1;
    }
    result
}

/// Forward and inverse byte substitution tables.
#[derive(Clone, PartialEq, Eq)]
pub struct SBoxTable {
    pub forward: [u8; 256],
    pub inverse: [u8; 256],
}

impl std::fmt::Debug for SBoxTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SBoxTable").finish_non_exhaustive()
    }
}

/// Builds the S-box: inversion in GF(2^8) followed by the affine map
/// `b ^ rotl(b,1) ^ rotl(b,2) ^ rotl(b,3) ^ rotl(b,4) ^ 0x63`.
pub fn build_sbox() -> SBoxTable {
    let mut forward = [0u8; 256];
    let mut inverse = [0u8; 256];
    for x in 0..=255u8 {
        let b = gf_inv(x);
        let s = b ^ b.rotate_left(1) ^ b.rotate_left(2) ^ b.rotate_left(3) ^ b.rotate_left(4) ^ 0x63;
        forward[x as usize] = s;
        inverse[s as usize] = x;
    }
    SBoxTable { forward, inverse }
}

/// The MixColumns coefficient matrix and its inverse.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MixColumnsMatrix {
    pub forward: [[u8; 4]; 4],
    pub inverse: [[u8; 4]; 4],
}

pub const MIX_COLUMNS: MixColumnsMatrix = MixColumnsMatrix {
    forward: [[2, 3, 1, 1], [1, 2, 3, 1], [1, 1, 2, 3], [3, 1, 1, 2]],
    inverse: [[14, 11, 13, 9], [9, 14, 11, 13], [13, 9, 14, 11], [11, 13, 9, 14]],
};

impl MixColumnsMatrix {
    /// Matrix product over GF(2^8).
    pub fn multiply(a: &[[u8; 4]; 4], b: &[[u8; 4]; 4]) -> [[u8; 4]; 4] {
        let mut out = [[0u8; 4]; 4];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..4).fold(0, |acc, k| acc ^ gf_mul(a[i][k], b[k][j]));
            }
        }
        out
    }
}

pub(crate) struct Tables {
    pub sbox: SBoxTable,
    /// `mul[c][x] = gf_mul(c, x)` for every coefficient used by MixColumns.
    pub mul: Box<[[u8; 256]; 15]>,
    pub rcon: [u8; 10],
}

pub(crate) fn tables() -> &'static Tables {
    static TABLES: OnceLock<Tables> = OnceLock::new();
    TABLES.get_or_init(|| {
        let mut mul = Box::new([[0u8; 256]; 15]);
        for (c, row) in mul.iter_mut().enumerate() {
            for (x, cell) in row.iter_mut().enumerate() {
                *cell = gf_mul(c as u8, x as u8);
            }
        }
        let mut rcon = [0u8; 10];
        let mut r = 1u8;
        for slot in rcon.iter_mut() {
            *slot = r;
            r = gf_mul(r, 2);
        }
        Tables {
            sbox: build_sbox(),
            mul,
            rcon,
        }
    })
}
