//! The target classifier and the conditional denoiser, both with
//! hand-derived gradients checked against finite differences.

mod denoiser;
mod init;
mod mlp;

pub use denoiser::{
    denoiser_forward, denoiser_forward_batch, time_embedding, DenoiserBatchGrad, DenoiserParams,
};
pub use init::glorot_matrix;
pub use mlp::{
    mlp_forward, mlp_grad_from_dlogits, mlp_logits_batch, mlp_loss_grad, mlp_per_example_sq_grads,
    predict, softmax, MlpParams,
};
