//! Finger-kinematics decoding from high-density surface EMG using block-wise
//! multichannel linear descriptors.

// `!(x > 0.0)` is used on purpose so that NaN fails validation too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod blocks;
pub mod error;
pub mod filter;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod mld;
pub mod pipeline;
pub mod regression;
pub mod seed;
pub mod sfbs;
pub mod signal;
pub mod synth;
pub mod tensor;

mod serde_matrix;

pub use error::{Error, Result};
