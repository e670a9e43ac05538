//! Switchable online knowledge distillation on small feed-forward networks.
//!
//! A teacher and a student train together. Each iteration the l1 gap between
//! their softened predictions is compared with an adaptive threshold: below it
//! both networks learn from each other, above it the teacher is frozen and
//! only the student keeps distilling until it catches up.

// `!(x >= 0.0)` style checks are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod distill;
pub mod error;
pub mod gap;
pub mod losscheck;
pub mod nn;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
