//! Retain-free machine unlearning.
//!
//! Forget-set features are pulled toward the nearest wrong-class feature
//! distribution (Mahalanobis distance against stored class prototypes)
//! while the original model's behaviour is distilled into the unlearning
//! model on out-of-distribution surrogate data. The crate also carries the
//! baselines, synthetic scenarios and evaluation harness (AUS, membership
//! inference, KS test) needed to run the method end to end.

// `!(x > 0.0)` is how parameter checks reject NaN along with non-positives
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod nn;
pub mod par;
pub mod prototypes;
pub mod unlearn;

pub use error::{Error, Result};
