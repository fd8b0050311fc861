//! KL-divergence utilities: exact discrete KL and a moment-matched
//! Gaussian estimator for empirical samples.

use super::{Matrix, NumError};

const SIMPLEX_TOL: f64 = 1e-9;
/// Ridge added to fitted covariances; desk-scale samples can be degenerate.
const COV_RIDGE: f64 = 1e-6;

/// `Σ pᵢ ln(pᵢ/qᵢ)` in nats, with the convention `0·ln(0/q) = 0`.
///
/// Returns `f64::INFINITY` when some `pᵢ > 0` has `qᵢ = 0`; that signal is
/// distinguishable from an error so callers sampling random simplex points
/// can discard such draws.
pub fn kl_discrete(p: &[f64], q: &[f64]) -> Result<f64, NumError> {
    if p.len() != q.len() {
        return Err(NumError::Dimension {
            context: "kl_discrete",
            expected: p.len(),
            actual: q.len(),
        });
    }
    validate_simplex(p, "p")?;
    validate_simplex(q, "q")?;
    let mut total = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Ok(f64::INFINITY);
        }
        total += pi * (pi / qi).ln();
    }
    // Guard against -1e-17 style round-off on identical distributions.
    Ok(total.max(0.0))
}

fn validate_simplex(v: &[f64], name: &str) -> Result<(), NumError> {
    if v.is_empty() {
        return Err(NumError::Domain(format!("kl_discrete: {name} is empty")));
    }
    let mut sum = 0.0;
    for &x in v {
        if !x.is_finite() || x < 0.0 {
            return Err(NumError::Domain(format!(
                "kl_discrete: {name} has invalid entry {x}"
            )));
        }
        sum += x;
    }
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(NumError::Domain(format!(
            "kl_discrete: {name} sums to {sum}, not 1"
        )));
    }
    Ok(())
}

/// Closed-form KL between Gaussians moment-matched to the two samples,
/// `KL(N(μₐ,Σₐ) ‖ N(μᵦ,Σᵦ))` with sample means/covariances and a ridge of
/// `1e-6·I` on each covariance.
pub fn kl_gaussian_moment(sample_a: &[Vec<f64>], sample_b: &[Vec<f64>]) -> Result<f64, NumError> {
    let dim = check_sample(sample_a, "sample_a")?;
    let dim_b = check_sample(sample_b, "sample_b")?;
    if dim != dim_b {
        return Err(NumError::Dimension {
            context: "kl_gaussian_moment",
            expected: dim,
            actual: dim_b,
        });
    }

    let (mean_a, cov_a) = fit_moments(sample_a, dim);
    let (mean_b, cov_b) = fit_moments(sample_b, dim);

    let chol_b = cholesky(&cov_b).ok_or_else(|| {
        NumError::Domain("kl_gaussian_moment: covariance of sample_b is singular".into())
    })?;
    let chol_a = cholesky(&cov_a).ok_or_else(|| {
        NumError::Domain("kl_gaussian_moment: covariance of sample_a is singular".into())
    })?;

    // tr(Σᵦ⁻¹ Σₐ): solve Σᵦ X = Σₐ column by column and sum the diagonal.
    let mut trace = 0.0;
    let mut col = vec![0.0; dim];
    for j in 0..dim {
        for i in 0..dim {
            col[i] = cov_a.at(i, j);
        }
        let x = chol_solve(&chol_b, &col);
        trace += x[j];
    }

    let mut diff = vec![0.0; dim];
    for i in 0..dim {
        diff[i] = mean_b[i] - mean_a[i];
    }
    let solved = chol_solve(&chol_b, &diff);
    let mahalanobis: f64 = diff.iter().zip(&solved).map(|(d, s)| d * s).sum();

    let log_det_a = 2.0 * (0..dim).map(|i| chol_a.at(i, i).ln()).sum::<f64>();
    let log_det_b = 2.0 * (0..dim).map(|i| chol_b.at(i, i).ln()).sum::<f64>();

    Ok(0.5 * (trace + mahalanobis - dim as f64 + log_det_b - log_det_a))
}

fn check_sample(sample: &[Vec<f64>], name: &str) -> Result<usize, NumError> {
    let dim = sample.first().map(|v| v.len()).unwrap_or(0);
    if dim == 0 || sample.len() < dim + 2 {
        return Err(NumError::Domain(format!(
            "kl_gaussian_moment: {name} needs at least dim+2 points, got {} of dim {dim}",
            sample.len()
        )));
    }
    if sample.iter().any(|v| v.len() != dim) {
        return Err(NumError::Domain(format!(
            "kl_gaussian_moment: {name} has inconsistent dimensions"
        )));
    }
    Ok(dim)
}

/// Sample mean and (n−1)-normalized covariance with ridge regularization.
fn fit_moments(sample: &[Vec<f64>], dim: usize) -> (Vec<f64>, Matrix) {
    let n = sample.len() as f64;
    let mut mean = vec![0.0; dim];
    for point in sample {
        for (m, &x) in mean.iter_mut().zip(point) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut cov = Matrix::zeros(dim, dim);
    let mut centered = vec![0.0; dim];
    for point in sample {
        for i in 0..dim {
            centered[i] = point[i] - mean[i];
        }
        for i in 0..dim {
            let ci = centered[i];
            for j in 0..dim {
                cov.set(i, j, cov.at(i, j) + ci * centered[j]);
            }
        }
    }
    let denom = n - 1.0;
    for i in 0..dim {
        for j in 0..dim {
            cov.set(i, j, cov.at(i, j) / denom);
        }
        cov.set(i, i, cov.at(i, i) + COV_RIDGE);
    }
    (mean, cov)
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
fn cholesky(a: &Matrix) -> Option<Matrix> {
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a.at(i, j);
            for k in 0..j {
                sum -= l.at(i, k) * l.at(j, k);
            }
            if i == j {
                if sum <= 0.0 {
                    return None;
                }
                l.set(i, j, sum.sqrt());
            } else {
                l.set(i, j, sum / l.at(j, j));
            }
        }
    }
    Some(l)
}

/// Solves `L Lᵀ x = b` by forward then backward substitution.
fn chol_solve(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows();
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l.at(i, k) * y[k];
        }
        y[i] = sum / l.at(i, i);
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in i + 1..n {
            sum -= l.at(k, i) * x[k];
        }
        x[i] = sum / l.at(i, i);
    }
    x
}
