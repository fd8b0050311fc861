//! Sample-count-weighted parameter averaging.

use super::FlError;

/// `Σ pₖ θₖ` with `pₖ = countₖ / Σ counts`. Counts include synthetic
/// samples when the client trained on replay data.
pub fn aggregate(client_params: &[Vec<f64>], sample_counts: &[usize]) -> Result<Vec<f64>, FlError> {
    if client_params.is_empty() {
        return Err(FlError::Domain("aggregate: no client parameters".into()));
    }
    if client_params.len() != sample_counts.len() {
        return Err(FlError::Domain(format!(
            "aggregate: {} parameter vectors for {} counts",
            client_params.len(),
            sample_counts.len()
        )));
    }
    let dim = client_params[0].len();
    if client_params.iter().any(|p| p.len() != dim) {
        return Err(FlError::Domain("aggregate: parameter length mismatch".into()));
    }
    if sample_counts.iter().any(|&c| c == 0) {
        return Err(FlError::Domain("aggregate: zero sample count".into()));
    }
    let total: f64 = sample_counts.iter().map(|&c| c as f64).sum();
    let mut out = vec![0.0; dim];
    for (params, &count) in client_params.iter().zip(sample_counts) {
        let weight = count as f64 / total;
        for (o, &p) in out.iter_mut().zip(params) {
            *o += weight * p;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_client_is_identity() {
        let params = vec![vec![1.0, -2.0, 0.5]];
        let out = aggregate(&params, &[7]).unwrap();
        assert_eq!(out, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn weighted_mean_matches_hand_computation() {
        let params = vec![vec![1.0], vec![3.0]];
        let out = aggregate(&params, &[1, 3]).unwrap();
        assert!((out[0] - 2.5).abs() < 1e-15);
    }

    #[test]
    fn permutation_invariance() {
        let a = vec![vec![1.0, 2.0], vec![5.0, -1.0], vec![0.0, 4.0]];
        let counts = [2, 3, 5];
        let out_a = aggregate(&a, &counts).unwrap();
        let b = vec![a[2].clone(), a[0].clone(), a[1].clone()];
        let out_b = aggregate(&b, &[5, 2, 3]).unwrap();
        for (x, y) in out_a.iter().zip(&out_b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn equal_counts_give_the_unweighted_mean() {
        let params = vec![vec![1.0, 0.0], vec![3.0, 2.0]];
        let out = aggregate(&params, &[4, 4]).unwrap();
        assert!((out[0] - 2.0).abs() < 1e-12);
        assert!((out[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identical_param_sets_aggregate_to_themselves() {
        let theta = vec![0.25, -1.5, 3.75];
        let params = vec![theta.clone(); 5];
        let out = aggregate(&params, &[2, 3, 1, 4, 2]).unwrap();
        for (o, t) in out.iter().zip(&theta) {
            assert!((o - t).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        assert!(aggregate(&[], &[]).is_err());
        assert!(aggregate(&[vec![1.0], vec![1.0, 2.0]], &[1, 1]).is_err());
        assert!(aggregate(&[vec![1.0]], &[0]).is_err());
        assert!(aggregate(&[vec![1.0]], &[1, 2]).is_err());
    }
}
