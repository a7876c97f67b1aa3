//! Number-theoretic building blocks: modular exponentiation, inverses and
//! Miller-Rabin primality testing.

use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{One, Zero};
use rand::RngCore;

use crate::{Error, Result};

/// `base^exp mod modulus` by left-to-right square-and-multiply.
pub fn mod_exp(base: &BigUint, exp: &BigUint, modulus: &BigUint) -> Result<BigUint> {
    if *modulus <= BigUint::one() {
        return Err(Error::InvalidModulus);
    }
    let base = base % modulus;
    let mut acc = BigUint::one();
    for i in (0..exp.bits()).rev() {
        acc = &acc * &acc % modulus;
        if exp.bit(i) {
            acc = acc * &base % modulus;
        }
    }
    Ok(acc)
}

/// `x` with `a * x = 1 (mod m)` and `0 < x < m`, via the extended Euclidean
/// algorithm.
pub fn mod_inverse(a: &BigUint, m: &BigUint) -> Result<BigUint> {
    if m.is_zero() {
        return Err(Error::NotInvertible);
    }
    if m.is_one() {
        // Every residue is 0 modulo 1; there is no x with 0 < x < 1.
        return Err(Error::NotInvertible);
    }
    let m_signed = BigInt::from_biguint(Sign::Plus, m.clone());
    let (mut old_r, mut r) = (BigInt::from_biguint(Sign::Plus, a % m), m_signed.clone());
    let (mut old_s, mut s) = (BigInt::one(), BigInt::zero());
    while !r.is_zero() {
        let q = &old_r / &r;
        let next_r = &old_r - &q * &r;
        old_r = std::mem::replace(&mut r, next_r);
        let next_s = &old_s - &q * &s;
        old_s = std::mem::replace(&mut s, next_s);
    }
    if !old_r.is_one() {
        return Err(Error::NotInvertible);
    }
    let x = ((old_s % &m_signed) + &m_signed) % &m_signed;
    Ok(x.to_biguint().expect("reduced into [0, m)"))
}

/// Uniform integer in `[0, bound)` by rejection sampling.
pub(crate) fn random_below<R: RngCore + ?Sized>(rng: &mut R, bound: &BigUint) -> BigUint {
    assert!(!bound.is_zero());
    let bits = bound.bits();
    let bytes = bits.div_ceil(8) as usize;
    let excess = bytes as u64 * 8 - bits;
    let mut buf = vec![0u8; bytes];
    loop {
        rng.fill_bytes(&mut buf);
        buf[0] &= 0xff >> excess;
        let candidate = BigUint::from_bytes_be(&buf);
        if candidate < *bound {
            return candidate;
        }
    }
}

const SMALL_PRIMES: [u32; 54] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97, 101, 103, 107, 109,
    113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191, 193, 197, 199, 211, 223, 227, 229, 233, 239,
    241, 251,
];

/// Miller-Rabin with `rounds` random witnesses. `false` is always correct;
/// `true` is wrong with probability at most `4^-rounds`.
pub fn is_probable_prime<R: RngCore + ?Sized>(n: &BigUint, rounds: u32, rng: &mut R) -> bool {
    let two = BigUint::from(2u32);
    if *n < two {
        return false;
    }
    for &p in SMALL_PRIMES.iter() {
        let p = BigUint::from(p);
        if *n == p {
            return true;
        }
        if (n % &p).is_zero() {
            return false;
        }
    }

    let n_minus_one = n - 1u32;
    let s = n_minus_one.trailing_zeros().expect("n - 1 is nonzero");
    let d = &n_minus_one >> s;
    // Witnesses come from [2, n - 2].
    let span = n - 3u32;

    'witness: for _ in 0..rounds.max(1) {
        let a = random_below(rng, &span) + 2u32;
        let mut x = mod_exp(&a, &d, n).expect("n > 1");
        if x.is_one() || x == n_minus_one {
            continue;
        }
        for _ in 1..s {
            x = &x * &x % n;
            if x == n_minus_one {
                continue 'witness;
            }
            if x.is_one() {
                return false;
            }
        }
        return false;
    }
    true
}

/// Random odd probable prime of exactly `bits` bits with the top two bits
/// set, so the product of two such primes has exactly `2 * bits` bits.
pub(crate) fn random_prime<R: RngCore + ?Sized>(bits: u64, rounds: u32, rng: &mut R) -> BigUint {
    assert!(bits >= 8);
    let bytes = bits.div_ceil(8) as usize;
    let excess = bytes as u64 * 8 - bits;
    let mut buf = vec![0u8; bytes];
    loop {
        rng.fill_bytes(&mut buf);
        buf[0] &= 0xff >> excess;
        let mut candidate = BigUint::from_bytes_be(&buf);
        candidate.set_bit(bits - 1, true);
        candidate.set_bit(bits - 2, true);
        candidate.set_bit(0, true);
        if is_probable_prime(&candidate, rounds, rng) {
            return candidate;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn big(n: u64) -> BigUint {
        BigUint::from(n)
    }

    fn trial_division(n: u64) -> bool {
        n >= 2 && (2..).take_while(|d| d * d <= n).all(|d| !n.is_multiple_of(d))
    }

    fn repeated_multiplication(base: u64, exp: u64, m: u64) -> u64 {
        (0..exp).fold(1 % m, |acc, _| acc * base % m)
    }

    #[test]
    fn mod_exp_small_values() {
        assert_eq!(repeated_multiplication(65, 17, 3233), 2790);
        assert_eq!(mod_exp(&big(65), &big(17), &big(3233)).unwrap(), big(2790));
        assert_eq!(mod_exp(&big(1234), &big(0), &big(3233)).unwrap(), big(1));
        assert_eq!(mod_exp(&big(5000), &big(1), &big(3233)).unwrap(), big(5000 % 3233));
        assert!(matches!(mod_exp(&big(2), &big(2), &big(1)), Err(Error::InvalidModulus)));
        assert!(matches!(mod_exp(&big(2), &big(2), &big(0)), Err(Error::InvalidModulus)));
    }

    #[test]
    fn mod_inverse_values() {
        let exhaustive = (1..3120u64).find(|x| 17 * x % 3120 == 1).unwrap();
        assert_eq!(exhaustive, 2753);
        assert_eq!(mod_inverse(&big(17), &big(3120)).unwrap(), big(2753));
        assert_eq!(mod_inverse(&big(1), &big(97)).unwrap(), big(1));
        assert!(matches!(mod_inverse(&big(6), &big(9)), Err(Error::NotInvertible)));
        assert!(matches!(mod_inverse(&big(0), &big(9)), Err(Error::NotInvertible)));
    }

    #[test]
    fn small_primes_and_composites() {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        for p in [2u64, 3, 5, 7] {
            assert!(is_probable_prime(&big(p), 10, &mut rng));
        }
        assert!(!trial_division(561));
        assert!(!is_probable_prime(&big(561), 10, &mut rng));
        assert!(!is_probable_prime(&big(3233), 10, &mut rng));
        assert!(!is_probable_prime(&big(0), 10, &mut rng));
        assert!(!is_probable_prime(&big(1), 10, &mut rng));
    }

    #[test]
    fn agrees_with_trial_division_below_100k() {
        let mut rng = ChaCha20Rng::seed_from_u64(42);
        for n in 2..100_000u64 {
            assert_eq!(is_probable_prime(&big(n), 8, &mut rng), trial_division(n), "n = {n}");
        }
    }

    #[test]
    fn carmichael_numbers_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for n in [561u64, 1105, 1729, 2465, 2821, 6601, 8911, 41041, 825265, 321197185] {
            assert!(!is_probable_prime(&big(n), 20, &mut rng), "{n}");
        }
    }

    #[test]
    fn random_prime_has_requested_size() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        for bits in [64u64, 128, 256] {
            let p = random_prime(bits, 20, &mut rng);
            assert_eq!(p.bits(), bits);
            assert!(p.bit(bits - 2));
        }
    }

    proptest! {
        #[test]
        fn mod_exp_matches_library(base in any::<u64>(), exp in any::<u32>(), m in 2u64..) {
            let expected = big(base).modpow(&big(exp as u64), &big(m));
            prop_assert_eq!(mod_exp(&big(base), &big(exp as u64), &big(m)).unwrap(), expected);
        }

        #[test]
        fn mod_inverse_satisfies_definition(a in 1u64.., m in 2u64..) {
            let (a, m) = (big(a), big(m));
            match mod_inverse(&a, &m) {
                Ok(x) => {
                    prop_assert!(x < m && !x.is_zero());
                    prop_assert!((&a * &x % &m).is_one());
                }
                Err(Error::NotInvertible) => {
                    prop_assert!(!num_integer::Integer::gcd(&a, &m).is_one());
                }
                Err(e) => prop_assert!(false, "unexpected {e}"),
            }
        }
    }
}
