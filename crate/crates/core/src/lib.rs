//! Membership-inference evaluation of local and central differential privacy.
//!
//! The crate trains small feed-forward classifiers with and without privacy
//! (randomized response / pixelation on the inputs, or DP-SGD during
//! training), attacks them with shadow-model membership inference, and
//! summarizes the privacy/utility trade-off.

// `!(x > 0.0)` is used on purpose so that NaN fails validation too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attacks;
pub mod data;
pub mod dp;
pub mod error;
pub mod experiment;
pub mod mechanisms;
pub mod metrics;
pub mod nn;
pub mod parallel;
pub mod rng;

pub use error::{Error, Result};
