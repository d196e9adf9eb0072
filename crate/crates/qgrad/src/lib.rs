//! White-box first-order adversarial attacks under an l-infinity budget,
//! with pluggable gradient post-processors.
//!
//! The crate bundles:
//!
//! - a small dense feedforward classifier with exact input- and
//!   parameter-space gradients ([`model`]),
//! - gradient post-processors that turn a raw gradient into a step
//!   direction: sign, deterministic integer quantization, and a stochastic
//!   QSGD-style codec ([`quantize`]),
//! - the attack loops themselves: FGSM, PGD, PQGD, DAA-BLOB and its
//!   quantized variant, with random starts, projection and restart
//!   merging ([`attack`]),
//! - standard and adversarial training ([`train`]),
//! - dataset ingestion (IDX files, synthetic blobs, downscaling) ([`data`]),
//! - and the robustness-evaluation harness: worst/avg accuracy over
//!   independent runs, gradient histograms, hyperparameter sweeps
//!   ([`eval`]).

pub mod attack;
pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod quantize;
pub mod stream;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
