//! Every chapter of `book/src` is pulled in as module docs, so
//! `cargo test -p minihsm-book --doc` runs each listing in the guide.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/aes.md")]
pub mod aes {}
#[doc = include_str!("../../../book/src/rsa.md")]
pub mod rsa {}
#[doc = include_str!("../../../book/src/envelope.md")]
pub mod envelope {}
#[doc = include_str!("../../../book/src/token.md")]
pub mod token {}
#[doc = include_str!("../../../book/src/attack.md")]
pub mod attack {}
#[doc = include_str!("../../../book/src/bench.md")]
pub mod bench {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
