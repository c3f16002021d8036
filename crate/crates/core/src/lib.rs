//! Differentially private synthesis of mixed-type tables.
//!
//! A conditional GAN is trained with a non-private discriminator while the
//! gradient entering the generator's output is clipped and noised
//! ([`privacy::sanitize`]); only that boundary gradient touches the
//! generator, so a Rényi-DP ledger over generator updates bounds the
//! privacy loss of the released model.

pub mod cli;
pub mod codec;
pub mod error;
pub mod eval;
pub mod gan;
pub mod network;
pub mod nn;
pub mod optim;
pub mod privacy;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
