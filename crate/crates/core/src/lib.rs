//! `minihsm` is a self-contained software security module.
//!
//! The crate is layered bottom-up:
//!
//! * [`aes`] is an AES-128 block cipher assembled from its round primitives,
//!   with CBC chaining and PKCS#7 padding for bulk data.
//! * [`rsa`] is textbook RSA over arbitrary-precision integers: key
//!   generation, the `m^e mod n` / `c^d mod n` primitives, PKCS#1 v1.5 key
//!   wrapping and a small PEM-armored key format.
//! * [`envelope`] combines the two into hybrid encryption: a fresh AES key
//!   encrypts the payload and the recipient's RSA key wraps the AES key.
//! * [`token`] is a PIN-protected slot store for non-extractable private keys
//!   that answers export attempts with a decoy public key.
//! * [`attack`] drives a key-extraction attempt against a token file and
//!   judges whether the store held.
//! * [`bench`] measures wall-clock, CPU and memory cost of the pipeline.
//!
//! ```
//! use minihsm::{envelope, rsa};
//!
//! let (public, private) = rsa::generate_keypair(512, rsa::DEFAULT_EXPONENT, Some(7)).unwrap();
//! let sealed = envelope::seal(b"attack at dawn", &public, None).unwrap();
//! assert_eq!(envelope::open(&sealed, &private).unwrap(), b"attack at dawn");
//! ```

pub mod aes;
pub mod attack;
pub mod bench;
pub mod envelope;
mod error;
pub mod rng;
pub mod rsa;
pub mod token;

pub use error::{Error, Result};
