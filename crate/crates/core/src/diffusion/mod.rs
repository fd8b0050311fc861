//! DDPM mechanics: noise schedule, closed-form forward corruption,
//! noise-prediction training, and ancestral sampling.

mod process;
mod schedule;
mod train;

pub use process::{
    diffusion_loss_grad, diffusion_loss_grad_with_draws, eps_prediction_loss, forward_sample,
    sample_reverse,
};
pub use schedule::{make_linear_schedule, NoiseSchedule};
pub use train::train_diffusion;

use crate::numkit::NumError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DiffusionError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("non-finite value at reverse step {step}")]
    NonFiniteAtStep { step: usize },
    #[error(transparent)]
    Num(#[from] NumError),
}
