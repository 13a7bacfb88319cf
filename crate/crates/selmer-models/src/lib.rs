//! Random kernel, Rudvalis–Shinoda and BKLPR models for Selmer group
//! statistics over `Z/nZ`, with exact enumeration oracles at small rank.

pub mod bklpr;
pub mod distrib;
pub mod error;
pub mod genfun;
pub mod kernelmodel;
pub mod markov;
pub mod modring;
pub mod orthogroup;
pub mod quadspace;
pub mod rng;

pub use error::{Error, Result};

// Book chapters, compiled as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/quadratic.md")]
    mod quadratic {}
    #[doc = include_str!("../../../book/src/kernel.md")]
    mod kernel {}
    #[doc = include_str!("../../../book/src/bklpr.md")]
    mod bklpr {}
    #[doc = include_str!("../../../book/src/markov.md")]
    mod markov {}
    #[doc = include_str!("../../../book/src/distrib.md")]
    mod distrib {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../README.md")]
    mod readme {}
}
