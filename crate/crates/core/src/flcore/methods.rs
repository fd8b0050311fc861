//! Per-method regularization penalties added to the task gradient during
//! local training. Each penalty exposes its loss alongside the analytic
//! gradient so the finite-difference suite can check them independently.

use super::FlError;
use crate::data::Example;
use crate::models::{mlp_grad_from_dlogits, mlp_logits_batch, softmax, MlpParams};
use crate::numkit::{kl_discrete, Matrix};

/// Proximal tether `μ/2·‖θ − θ_global‖²`.
pub fn prox_penalty_loss(theta: &[f64], global: &[f64], mu: f64) -> f64 {
    0.5 * mu
        * theta
            .iter()
            .zip(global)
            .map(|(t, g)| (t - g) * (t - g))
            .sum::<f64>()
}

pub fn prox_penalty_grad(theta: &[f64], global: &[f64], mu: f64) -> Vec<f64> {
    theta.iter().zip(global).map(|(t, g)| mu * (t - g)).collect()
}

/// Fisher-weighted quadratic `λ/2·Σᵢ Fᵢ (θᵢ − θ*ᵢ)²` toward the previous
/// session's anchor.
pub fn ewc_penalty_loss(theta: &[f64], anchor: &[f64], fisher: &[f64], lambda: f64) -> f64 {
    0.5 * lambda
        * theta
            .iter()
            .zip(anchor)
            .zip(fisher)
            .map(|((t, a), f)| f * (t - a) * (t - a))
            .sum::<f64>()
}

pub fn ewc_penalty_grad(theta: &[f64], anchor: &[f64], fisher: &[f64], lambda: f64) -> Vec<f64> {
    theta
        .iter()
        .zip(anchor)
        .zip(fisher)
        .map(|((t, a), f)| lambda * f * (t - a))
        .collect()
}

/// Distillation penalty `λ·mean_i KL(teacher softmax ‖ student softmax)`
/// over the batch, teacher frozen.
pub fn lwf_penalty_loss(
    student: &MlpParams,
    teacher: &MlpParams,
    batch: &[Example],
    lambda: f64,
) -> Result<f64, FlError> {
    let student_logits = mlp_logits_batch(student, batch)?;
    let teacher_logits = mlp_logits_batch(teacher, batch)?;
    let mut total = 0.0;
    for i in 0..batch.len() {
        let p_teacher = softmax(teacher_logits.row(i));
        let p_student = softmax(student_logits.row(i));
        total += kl_discrete(&p_teacher, &p_student)?;
    }
    Ok(lambda * total / batch.len() as f64)
}

/// Gradient of [`lwf_penalty_loss`] w.r.t. the student parameters:
/// `d/dz KL(p_T ‖ softmax(z)) = softmax(z) − p_T` per example.
pub fn lwf_penalty_grad(
    student: &MlpParams,
    teacher: &MlpParams,
    batch: &[Example],
    lambda: f64,
) -> Result<Vec<f64>, FlError> {
    let student_logits = mlp_logits_batch(student, batch)?;
    let teacher_logits = mlp_logits_batch(teacher, batch)?;
    let scale = lambda / batch.len() as f64;
    let mut dlogits = Matrix::zeros(batch.len(), student.num_classes());
    for i in 0..batch.len() {
        let p_teacher = softmax(teacher_logits.row(i));
        let p_student = softmax(student_logits.row(i));
        for (j, d) in dlogits.row_mut(i).iter_mut().enumerate() {
            *d = scale * (p_student[j] - p_teacher[j]);
        }
    }
    Ok(mlp_grad_from_dlogits(student, batch, &dlogits)?)
}
