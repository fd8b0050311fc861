//! Numerical verifier for the KL mixing bound: with equal-part mixing,
//! `KL(p ‖ ½(q₁+q₂)) ≤ ½·[KL(p ‖ q₂) + Δ]` whenever `Δ ≥ KL(p ‖ q₁)`.
//! The checker instantiates Δ at its tightest admissible value, so zero
//! violations here verify the bound for every looser Δ as well.

use crate::numkit::{kl_discrete, RngStream};

const ENTRY_FLOOR: f64 = 1e-6;
const SLACK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct TheoremReport {
    pub trials: usize,
    pub violations: usize,
    /// Largest LHS − RHS observed; at or below zero when the bound holds
    /// with margin.
    pub max_slack: f64,
}

/// Samples random simplex triples `(p, q₁, q₂)` with dimensions in
/// `[2, max_dim]` and entries at least `1e-6`, and counts violations of the
/// mixing bound at slack tolerance `1e-9`.
pub fn theorem1_check(trials: usize, max_dim: usize, rng: &mut RngStream) -> TheoremReport {
    assert!(max_dim >= 2, "theorem1_check: max_dim must be at least 2");
    let mut violations = 0;
    let mut max_slack = f64::NEG_INFINITY;
    for _ in 0..trials {
        let dim = 2 + rng.next_index(max_dim - 1);
        let p = floored_simplex(rng, dim);
        let q1 = floored_simplex(rng, dim);
        let q2 = floored_simplex(rng, dim);
        let mix: Vec<f64> = q1.iter().zip(&q2).map(|(a, b)| 0.5 * (a + b)).collect();

        let delta = kl_discrete(&p, &q1).expect("valid simplex");
        let lhs = kl_discrete(&p, &mix).expect("valid simplex");
        let rhs = 0.5 * (kl_discrete(&p, &q2).expect("valid simplex") + delta);
        let slack = lhs - rhs;
        if slack > SLACK_TOL {
            violations += 1;
        }
        if slack > max_slack {
            max_slack = slack;
        }
    }
    TheoremReport {
        trials,
        violations,
        max_slack: if trials == 0 { 0.0 } else { max_slack },
    }
}

fn floored_simplex(rng: &mut RngStream, dim: usize) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..dim).map(|_| -(1.0 - rng.next_f64()).ln()).collect();
        let sum: f64 = v.iter().sum();
        for x in &mut v {
            *x /= sum;
        }
        if v.iter().all(|&x| x >= ENTRY_FLOOR) {
            return v;
        }
    }
}
