//! β/α/ᾱ sequences governing the forward and reverse processes.

use super::DiffusionError;

/// Precomputed noise schedule. Steps are 1-based to match the recurrences:
/// `beta(1)` is the first corruption step and `alpha_bar(N)` the terminal
/// signal fraction.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    pub fn num_steps(&self) -> usize {
        self.beta.len()
    }

    pub fn beta(&self, n: usize) -> f64 {
        self.beta[n - 1]
    }

    pub fn alpha(&self, n: usize) -> f64 {
        self.alpha[n - 1]
    }

    pub fn alpha_bar(&self, n: usize) -> f64 {
        self.alpha_bar[n - 1]
    }

    pub fn check_step(&self, n: usize, context: &str) -> Result<(), DiffusionError> {
        if n == 0 || n > self.num_steps() {
            return Err(DiffusionError::Domain(format!(
                "{context}: step {n} outside [1, {}]",
                self.num_steps()
            )));
        }
        Ok(())
    }
}

/// β linearly interpolated from `beta_start` to `beta_end` inclusive, with
/// `alpha = 1 − beta` and `alpha_bar` the running product.
pub fn make_linear_schedule(
    num_steps: usize,
    beta_start: f64,
    beta_end: f64,
) -> Result<NoiseSchedule, DiffusionError> {
    if num_steps == 0 {
        return Err(DiffusionError::Domain("schedule: need at least 1 step".into()));
    }
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return Err(DiffusionError::Domain(format!(
            "schedule: need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})"
        )));
    }
    let beta: Vec<f64> = if num_steps == 1 {
        vec![beta_start]
    } else {
        (0..num_steps)
            .map(|i| beta_start + (beta_end - beta_start) * i as f64 / (num_steps - 1) as f64)
            .collect()
    };
    let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
    let mut alpha_bar = Vec::with_capacity(num_steps);
    let mut running = 1.0;
    for &a in &alpha {
        running *= a;
        alpha_bar.push(running);
    }
    Ok(NoiseSchedule {
        beta,
        alpha,
        alpha_bar,
    })
}
