//! Desk-scale sentence-representation laboratory: a three-pair contrastive
//! objective over augmented sentence views, a lexicon-gated LSTM classifier,
//! hand-derived gradients throughout, and a finite-difference harness that
//! keeps those gradients honest.
//!
//! Everything is seeded and bit-reproducible: the same config and inputs
//! produce byte-identical artifacts on any platform.

pub mod augment;
pub mod checkpoint;
pub mod classify;
pub mod contrastive;
pub mod error;
pub mod eval;
pub mod numerics;
pub mod optim;
pub mod params;
pub mod recurrent;
pub mod synth;
pub mod verify;
pub mod vocab;

pub use error::{Error, ErrorCategory, Result};
pub use numerics::{Dtype, Rng, Scalar, Shape, Tensor};
pub use params::ParamSet;
pub use recurrent::Lexicon;
pub use vocab::Vocab;
