//! Optimal zero-delay quantization of Markov sources.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod belief;
pub mod cost;
pub mod dp;
pub mod error;
pub mod harness;
pub mod horizon;
pub mod oracle;
pub mod problem;
pub mod quantizer;
pub mod rng;
pub mod source;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/beliefs.md")]
    pub mod beliefs {}
    #[doc = include_str!("../../../book/src/quantizers.md")]
    pub mod quantizers {}
    #[doc = include_str!("../../../book/src/stage-cost.md")]
    pub mod stage_cost {}
    #[doc = include_str!("../../../book/src/finite-horizon.md")]
    pub mod finite_horizon {}
    #[doc = include_str!("../../../book/src/infinite-horizon.md")]
    pub mod infinite_horizon {}
    #[doc = include_str!("../../../book/src/oracles.md")]
    pub mod oracles {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}
