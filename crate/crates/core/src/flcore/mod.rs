//! Federated engine: clients, methods, aggregation, the experiment driver,
//! metrics, and the KL-bound verifier.

mod aggregate;
mod checkpoint;
mod client;
mod config;
mod engine;
mod methods;
mod metrics;
mod theorem;

pub use aggregate::aggregate;
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, ClientSnapshot};
pub use client::{generate_replay, local_update, ClientState, LocalOutcome, MethodAux, RoundStreams};
pub use config::{ExperimentConfig, Method};
pub use engine::{
    initial_global_params, run_experiment, run_experiment_with_order, GlobalState, RoundRecord,
};
pub use methods::{
    ewc_penalty_grad, ewc_penalty_loss, lwf_penalty_grad, lwf_penalty_loss, prox_penalty_grad,
    prox_penalty_loss,
};
pub use metrics::{
    eval_encountered_accuracy, eval_global_accuracy, ewc_fisher_estimate, synthetic_fidelity_kl,
};
pub use theorem::{theorem1_check, TheoremReport};

use crate::data::DataError;
use crate::diffusion::DiffusionError;
use crate::numkit::NumError;
use thiserror::Error;

/// Errors surfaced by the federated engine.
#[derive(Debug, Error)]
pub enum FlError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("round {round}, client {client}: {source}")]
    RoundContext {
        round: usize,
        client: usize,
        #[source]
        source: Box<FlError>,
    },
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}
