//! Minimal numerical substrate: matrices, RNG, Adam, gradient checking,
//! and KL divergences.

mod adam;
mod gradcheck;
mod kl;
mod matrix;
mod rng;

pub use adam::{adam_step, AdamState};
pub use gradcheck::{finite_diff_grad, grad_relative_error};
pub use kl::{kl_discrete, kl_gaussian_moment};
pub use matrix::{dot, Matrix};
pub use rng::{split_rng, RngStream};

use thiserror::Error;

/// Errors produced by the numerical layer.
#[derive(Debug, Error, PartialEq)]
pub enum NumError {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("non-finite value encountered in {context}")]
    NonFinite { context: &'static str },
    #[error("domain error: {0}")]
    Domain(String),
}
