//! Adam optimizer state and update step.

use super::NumError;

/// Per-parameter-vector Adam state with bias correction.
#[derive(Debug, Clone)]
pub struct AdamState {
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step_count: u64,
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

impl AdamState {
    /// Defaults: beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8.
    pub fn new(dim: usize, learning_rate: f64) -> Self {
        Self::with_hyperparams(dim, learning_rate, 0.9, 0.999, 1e-8)
    }

    pub fn with_hyperparams(
        dim: usize,
        learning_rate: f64,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    ) -> Self {
        AdamState {
            first_moment: vec![0.0; dim],
            second_moment: vec![0.0; dim],
            step_count: 0,
            learning_rate,
            beta1,
            beta2,
            epsilon,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.second_moment
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grad: &[f64]) -> Result<(), NumError> {
    if grad.len() != params.len() {
        return Err(NumError::Dimension {
            context: "adam_step gradient",
            expected: params.len(),
            actual: grad.len(),
        });
    }
    if params.len() != state.first_moment.len() {
        return Err(NumError::Dimension {
            context: "adam_step state",
            expected: state.first_moment.len(),
            actual: params.len(),
        });
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(NumError::NonFinite {
            context: "adam_step gradient",
        });
    }

    state.step_count += 1;
    let t = state.step_count as i32;
    let bias1 = 1.0 - state.beta1.powi(t);
    let bias2 = 1.0 - state.beta2.powi(t);

    for i in 0..params.len() {
        let g = grad[i];
        state.first_moment[i] = state.beta1 * state.first_moment[i] + (1.0 - state.beta1) * g;
        state.second_moment[i] =
            state.beta2 * state.second_moment[i] + (1.0 - state.beta2) * g * g;
        let m_hat = state.first_moment[i] / bias1;
        let v_hat = state.second_moment[i] / bias2;
        params[i] -= state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
    }
    Ok(())
}
