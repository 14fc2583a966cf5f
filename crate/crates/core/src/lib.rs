//! Graph classification with learned reference distributions.
//!
//! Graphs are embedded node-wise by a GIN encoder and classified by the
//! Gaussian-kernel MMD between their embedding cloud and learnable per-class
//! reference clouds. The crate also evaluates norm-based generalization bounds
//! for trained models.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod error;
pub mod gin;
pub mod graph;
pub mod mmd;
pub mod model;
pub mod tape;
pub mod tensor;
pub mod train;

pub use error::{GrdlError, Result};
pub use tensor::Tensor;
