//! Desk-scale simulator for continual federated learning with
//! diffusion-based generative replay.
//!
//! The crate is organized around five subsystems:
//!
//! - [`numkit`]: dense linear algebra, a splittable deterministic RNG,
//!   the Adam optimizer, finite-difference gradient checking, and
//!   KL-divergence utilities.
//! - [`data`]: datasets, scenario partitioning for the three continual
//!   federated learning settings, and IDX image ingestion.
//! - [`models`]: the target classifier and the conditional denoiser,
//!   both with hand-derived gradients.
//! - [`diffusion`]: DDPM noise schedule, forward corruption, training
//!   loss, and ancestral sampling.
//! - [`flcore`]: the federated engine — clients, methods, aggregation,
//!   the experiment driver, metrics, and the KL-bound verifier.
//!
//! Everything is `f64`, single-threaded per experiment, and bit-for-bit
//! reproducible from a master seed.

pub mod data;
pub mod diffusion;
pub mod flcore;
pub mod models;
pub mod numkit;
