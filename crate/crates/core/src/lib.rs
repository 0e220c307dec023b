//! Zero-overhead parity protection for transformer weights.
//!
//! Every stored `f32` parameter gives up its least significant mantissa bit
//! to an even-parity bit. A word that fails the parity check after a bit
//! flip is masked to `0.0` before inference. The crate also carries the
//! apparatus needed to measure the effect: a small deterministic ViT
//! encoder, seeded bit-flip fault plans, adaptive fault-injection campaigns,
//! BERZAD estimation, a binary checkpoint container, and an analytical
//! overhead model against checksum-based ABFT.

pub mod bitcodec;
pub mod campaign;
pub mod cli;
pub mod error;
pub mod faultinject;
pub mod modelio;
pub mod overhead;
pub mod rng;
pub mod stats;
pub mod tensor;
pub mod toy;
pub mod vit;

pub use error::{Error, Result};
pub use tensor::TensorF32;
