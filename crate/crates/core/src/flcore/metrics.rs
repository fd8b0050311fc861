//! Evaluation heads and fidelity diagnostics.

use super::FlError;
use crate::data::{Dataset, Example, Scenario};
use crate::models::{mlp_logits_batch, mlp_per_example_sq_grads, MlpParams};
use crate::numkit::kl_gaussian_moment;
use std::collections::BTreeSet;

fn accuracy_over(params: &MlpParams, examples: &[Example]) -> Result<f64, FlError> {
    let logits = mlp_logits_batch(params, examples)?;
    let mut correct = 0usize;
    for (i, ex) in examples.iter().enumerate() {
        let row = logits.row(i);
        let mut best = 0;
        for (j, &v) in row.iter().enumerate().skip(1) {
            if v > row[best] {
                best = j;
            }
        }
        if best == ex.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / examples.len() as f64)
}

/// Fraction of correct predictions over the whole test set.
pub fn eval_global_accuracy(params: &MlpParams, test_set: &Dataset) -> Result<f64, FlError> {
    if test_set.is_empty() {
        return Err(FlError::Domain("eval: empty test set".into()));
    }
    accuracy_over(params, test_set.examples())
}

/// Accuracy restricted to the encountered portion of the test set: classes
/// seen so far for the class-incremental scenarios, domains seen so far
/// for the domain-incremental one.
pub fn eval_encountered_accuracy(
    params: &MlpParams,
    test_set: &Dataset,
    encountered: &BTreeSet<(usize, usize)>,
    scenario: Scenario,
) -> Result<f64, FlError> {
    if encountered.is_empty() {
        return Err(FlError::Domain("eval: encountered set is empty".into()));
    }
    let restricted: Vec<Example> = match scenario {
        Scenario::ClassIncIid | Scenario::ClassIncNonIid => {
            let classes: BTreeSet<usize> = encountered.iter().map(|&(c, _)| c).collect();
            test_set
                .examples()
                .iter()
                .filter(|ex| classes.contains(&ex.label))
                .cloned()
                .collect()
        }
        Scenario::DomainInc => {
            let domains: BTreeSet<usize> = encountered.iter().map(|&(_, d)| d).collect();
            test_set
                .examples()
                .iter()
                .filter(|ex| domains.contains(&ex.domain))
                .cloned()
                .collect()
        }
    };
    if restricted.is_empty() {
        return Err(FlError::Domain(
            "eval: encountered restriction leaves no test examples".into(),
        ));
    }
    accuracy_over(params, &restricted)
}

/// Empirical diagonal Fisher: mean of elementwise squared per-example
/// gradients, evaluated at `params` on `data`.
pub fn ewc_fisher_estimate(params: &MlpParams, data: &[Example]) -> Result<Vec<f64>, FlError> {
    Ok(mlp_per_example_sq_grads(params, data)?)
}

/// Mean over shared classes of the moment-matched Gaussian KL between the
/// real and synthetic class-conditional samples.
pub fn synthetic_fidelity_kl(
    real_prev: &[Example],
    synthetic: &[Example],
) -> Result<f64, FlError> {
    if real_prev.is_empty() || synthetic.is_empty() {
        return Err(FlError::Domain("fidelity: empty sample".into()));
    }
    let real_labels: BTreeSet<usize> = real_prev.iter().map(|e| e.label).collect();
    let synth_labels: BTreeSet<usize> = synthetic.iter().map(|e| e.label).collect();
    let shared: Vec<usize> = real_labels.intersection(&synth_labels).copied().collect();
    if shared.is_empty() {
        return Err(FlError::Domain("fidelity: no shared labels".into()));
    }
    let mut total = 0.0;
    for &class in &shared {
        let real: Vec<Vec<f64>> = real_prev
            .iter()
            .filter(|e| e.label == class)
            .map(|e| e.features.clone())
            .collect();
        let synth: Vec<Vec<f64>> = synthetic
            .iter()
            .filter(|e| e.label == class)
            .map(|e| e.features.clone())
            .collect();
        total += kl_gaussian_moment(&real, &synth)?;
    }
    Ok(total / shared.len() as f64)
}
