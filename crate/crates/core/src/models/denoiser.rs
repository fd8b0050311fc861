//! Conditional noise-prediction network: the input is the noisy sample
//! concatenated with a sinusoidal step embedding and a learned class
//! (plus optional domain) embedding; three tanh layers feed a linear head
//! that predicts the injected noise.

use super::init::glorot_matrix;
use crate::numkit::{Matrix, NumError, RngStream};

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserParams {
    w_in: Matrix, // (d_feat + t_emb + c_emb, hidden)
    b_in: Vec<f64>,
    w_h1: Matrix, // (hidden, hidden)
    b_h1: Vec<f64>,
    w_h2: Matrix, // (hidden, hidden)
    b_h2: Vec<f64>,
    w_out: Matrix, // (hidden, d_feat)
    b_out: Vec<f64>,
    class_embed: Matrix,           // (num_classes, c_emb)
    domain_embed: Option<Matrix>,  // (num_domains, c_emb) when domains are active
    d_feat: usize,
    t_emb: usize,
}

impl DenoiserParams {
    /// `num_domains > 1` activates the additive domain embedding table.
    pub fn init(
        d_feat: usize,
        hidden: usize,
        t_emb: usize,
        c_emb: usize,
        num_classes: usize,
        num_domains: usize,
        rng: &mut RngStream,
    ) -> Self {
        assert!(t_emb % 2 == 0, "time embedding dimension must be even");
        let input_dim = d_feat + t_emb + c_emb;
        DenoiserParams {
            w_in: glorot_matrix(input_dim, hidden, rng),
            b_in: vec![0.0; hidden],
            w_h1: glorot_matrix(hidden, hidden, rng),
            b_h1: vec![0.0; hidden],
            w_h2: glorot_matrix(hidden, hidden, rng),
            b_h2: vec![0.0; hidden],
            w_out: glorot_matrix(hidden, d_feat, rng),
            b_out: vec![0.0; d_feat],
            class_embed: glorot_matrix(num_classes, c_emb, rng),
            domain_embed: (num_domains > 1).then(|| glorot_matrix(num_domains, c_emb, rng)),
            d_feat,
            t_emb,
        }
    }

    pub fn zeros(
        d_feat: usize,
        hidden: usize,
        t_emb: usize,
        c_emb: usize,
        num_classes: usize,
        num_domains: usize,
    ) -> Self {
        assert!(t_emb % 2 == 0, "time embedding dimension must be even");
        let input_dim = d_feat + t_emb + c_emb;
        DenoiserParams {
            w_in: Matrix::zeros(input_dim, hidden),
            b_in: vec![0.0; hidden],
            w_h1: Matrix::zeros(hidden, hidden),
            b_h1: vec![0.0; hidden],
            w_h2: Matrix::zeros(hidden, hidden),
            b_h2: vec![0.0; hidden],
            w_out: Matrix::zeros(hidden, d_feat),
            b_out: vec![0.0; d_feat],
            class_embed: Matrix::zeros(num_classes, c_emb),
            domain_embed: (num_domains > 1).then(|| Matrix::zeros(num_domains, c_emb)),
            d_feat,
            t_emb,
        }
    }

    pub fn d_feat(&self) -> usize {
        self.d_feat
    }

    pub fn hidden(&self) -> usize {
        self.w_in.cols()
    }

    pub fn t_emb(&self) -> usize {
        self.t_emb
    }

    pub fn c_emb(&self) -> usize {
        self.class_embed.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.class_embed.rows()
    }

    pub fn num_domains(&self) -> usize {
        self.domain_embed.as_ref().map_or(1, Matrix::rows)
    }

    pub fn flat_len(&self) -> usize {
        self.w_in.as_slice().len()
            + self.b_in.len()
            + self.w_h1.as_slice().len()
            + self.b_h1.len()
            + self.w_h2.as_slice().len()
            + self.b_h2.len()
            + self.w_out.as_slice().len()
            + self.b_out.len()
            + self.class_embed.as_slice().len()
            + self.domain_embed.as_ref().map_or(0, |m| m.as_slice().len())
    }

    /// Stable flat ordering: w_in, b_in, w_h1, b_h1, w_h2, b_h2, w_out,
    /// b_out, class embedding, then the domain embedding when present.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.flat_len());
        out.extend_from_slice(self.w_in.as_slice());
        out.extend_from_slice(&self.b_in);
        out.extend_from_slice(self.w_h1.as_slice());
        out.extend_from_slice(&self.b_h1);
        out.extend_from_slice(self.w_h2.as_slice());
        out.extend_from_slice(&self.b_h2);
        out.extend_from_slice(self.w_out.as_slice());
        out.extend_from_slice(&self.b_out);
        out.extend_from_slice(self.class_embed.as_slice());
        if let Some(de) = &self.domain_embed {
            out.extend_from_slice(de.as_slice());
        }
        out
    }

    pub fn unflatten_like(&self, flat: &[f64]) -> Result<DenoiserParams, NumError> {
        if flat.len() != self.flat_len() {
            return Err(NumError::Dimension {
                context: "DenoiserParams::unflatten_like",
                expected: self.flat_len(),
                actual: flat.len(),
            });
        }
        let mut out = self.clone();
        let mut pos = 0;
        let mut take = |dst: &mut [f64]| {
            dst.copy_from_slice(&flat[pos..pos + dst.len()]);
            pos += dst.len();
        };
        take(out.w_in.as_mut_slice());
        take(&mut out.b_in);
        take(out.w_h1.as_mut_slice());
        take(&mut out.b_h1);
        take(out.w_h2.as_mut_slice());
        take(&mut out.b_h2);
        take(out.w_out.as_mut_slice());
        take(&mut out.b_out);
        take(out.class_embed.as_mut_slice());
        if let Some(de) = &mut out.domain_embed {
            take(de.as_mut_slice());
        }
        Ok(out)
    }
}

/// Sinusoidal embedding of a diffusion step; not learned.
pub fn time_embedding(step: usize, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = vec![0.0; dim];
    for i in 0..half {
        let freq = 10_000.0_f64.powf(-(i as f64) / half as f64);
        let angle = step as f64 * freq;
        out[i] = angle.sin();
        out[half + i] = angle.cos();
    }
    out
}

/// Cached activations of one batch forward pass, consumed by
/// [`denoiser_backward`](DenoiserBatchGrad::backward).
pub struct DenoiserBatchGrad {
    x: Matrix,
    a_in: Matrix,
    a_1: Matrix,
    a_2: Matrix,
    out: Matrix,
    labels: Vec<usize>,
    domains: Vec<Option<usize>>,
}

impl DenoiserBatchGrad {
    pub fn output(&self) -> &Matrix {
        &self.out
    }

    /// Backpropagates `d_out` (B × d_feat) to a flat parameter gradient.
    /// The noisy input and time embedding receive no gradient; the class
    /// and domain embedding rows accumulate theirs additively.
    pub fn backward(&self, params: &DenoiserParams, d_out: &Matrix) -> Vec<f64> {
        assert_eq!(d_out.rows(), self.out.rows());
        assert_eq!(d_out.cols(), params.d_feat);

        let dw_out = self.a_2.matmul_transpose_a(d_out);
        let db_out = d_out.column_sums();
        let mut dz2 = d_out.matmul(&params.w_out.transpose());
        apply_tanh_backward(&mut dz2, &self.a_2);

        let dw_h2 = self.a_1.matmul_transpose_a(&dz2);
        let db_h2 = dz2.column_sums();
        let mut dz1 = dz2.matmul(&params.w_h2.transpose());
        apply_tanh_backward(&mut dz1, &self.a_1);

        let dw_h1 = self.a_in.matmul_transpose_a(&dz1);
        let db_h1 = dz1.column_sums();
        let mut dz_in = dz1.matmul(&params.w_h1.transpose());
        apply_tanh_backward(&mut dz_in, &self.a_in);

        let dw_in = self.x.matmul_transpose_a(&dz_in);
        let db_in = dz_in.column_sums();

        let dx = dz_in.matmul(&params.w_in.transpose());
        let cond_offset = params.d_feat + params.t_emb;
        let c_emb = params.c_emb();
        let mut d_class = Matrix::zeros(params.num_classes(), c_emb);
        let mut d_domain = params
            .domain_embed
            .as_ref()
            .map(|de| Matrix::zeros(de.rows(), c_emb));
        for i in 0..dx.rows() {
            let slice = &dx.row(i)[cond_offset..cond_offset + c_emb];
            for (d, &g) in d_class.row_mut(self.labels[i]).iter_mut().zip(slice) {
                *d += g;
            }
            if let (Some(dd), Some(domain)) = (&mut d_domain, self.domains[i]) {
                for (d, &g) in dd.row_mut(domain).iter_mut().zip(slice) {
                    *d += g;
                }
            }
        }

        let mut grad = Vec::with_capacity(params.flat_len());
        grad.extend_from_slice(dw_in.as_slice());
        grad.extend_from_slice(&db_in);
        grad.extend_from_slice(dw_h1.as_slice());
        grad.extend_from_slice(&db_h1);
        grad.extend_from_slice(dw_h2.as_slice());
        grad.extend_from_slice(&db_h2);
        grad.extend_from_slice(dw_out.as_slice());
        grad.extend_from_slice(&db_out);
        grad.extend_from_slice(d_class.as_slice());
        if let Some(dd) = d_domain {
            grad.extend_from_slice(dd.as_slice());
        }
        grad
    }
}

fn apply_tanh_backward(dz: &mut Matrix, activation: &Matrix) {
    for i in 0..dz.rows() {
        let a_row = activation.row(i);
        for (d, &a) in dz.row_mut(i).iter_mut().zip(a_row) {
            *d *= 1.0 - a * a;
        }
    }
}

/// Batch forward pass with cached activations. `x_noisy` is (B × d_feat);
/// `steps`, `labels`, and `domains` are per-row.
pub fn denoiser_forward_batch(
    params: &DenoiserParams,
    x_noisy: &Matrix,
    steps: &[usize],
    labels: &[usize],
    domains: &[Option<usize>],
) -> Result<DenoiserBatchGrad, NumError> {
    let batch = x_noisy.rows();
    if batch == 0 {
        return Err(NumError::Domain("denoiser: empty batch".into()));
    }
    if x_noisy.cols() != params.d_feat {
        return Err(NumError::Dimension {
            context: "denoiser input width",
            expected: params.d_feat,
            actual: x_noisy.cols(),
        });
    }
    if steps.len() != batch || labels.len() != batch || domains.len() != batch {
        return Err(NumError::Dimension {
            context: "denoiser batch conditioning",
            expected: batch,
            actual: steps.len().min(labels.len()).min(domains.len()),
        });
    }

    let c_emb = params.c_emb();
    let input_dim = params.d_feat + params.t_emb + c_emb;
    let mut x = Matrix::zeros(batch, input_dim);
    for i in 0..batch {
        if steps[i] == 0 {
            return Err(NumError::Domain("denoiser: step must be >= 1".into()));
        }
        if labels[i] >= params.num_classes() {
            return Err(NumError::Domain(format!(
                "denoiser: label {} outside [0, {})",
                labels[i],
                params.num_classes()
            )));
        }
        let row = x.row_mut(i);
        row[..params.d_feat].copy_from_slice(x_noisy.row(i));
        let t = time_embedding(steps[i], params.t_emb);
        row[params.d_feat..params.d_feat + params.t_emb].copy_from_slice(&t);
        let cond = &mut row[params.d_feat + params.t_emb..];
        cond.copy_from_slice(params.class_embed.row(labels[i]));
        if let Some(de) = &params.domain_embed {
            let domain = domains[i].ok_or_else(|| {
                NumError::Domain("denoiser: domain required when domains are active".into())
            })?;
            if domain >= de.rows() {
                return Err(NumError::Domain(format!(
                    "denoiser: domain {domain} outside [0, {})",
                    de.rows()
                )));
            }
            for (c, &d) in cond.iter_mut().zip(de.row(domain)) {
                *c += d;
            }
        }
    }

    let mut a_in = x.matmul(&params.w_in);
    a_in.add_row_broadcast(&params.b_in);
    a_in.map_inplace(f64::tanh);
    let mut a_1 = a_in.matmul(&params.w_h1);
    a_1.add_row_broadcast(&params.b_h1);
    a_1.map_inplace(f64::tanh);
    let mut a_2 = a_1.matmul(&params.w_h2);
    a_2.add_row_broadcast(&params.b_h2);
    a_2.map_inplace(f64::tanh);
    let mut out = a_2.matmul(&params.w_out);
    out.add_row_broadcast(&params.b_out);

    Ok(DenoiserBatchGrad {
        x,
        a_in,
        a_1,
        a_2,
        out,
        labels: labels.to_vec(),
        domains: domains.to_vec(),
    })
}

/// Noise prediction for one sample at step `n` under the given condition.
pub fn denoiser_forward(
    params: &DenoiserParams,
    x_noisy: &[f64],
    n: usize,
    label: usize,
    domain: Option<usize>,
) -> Result<Vec<f64>, NumError> {
    if x_noisy.len() != params.d_feat {
        return Err(NumError::Dimension {
            context: "denoiser_forward input",
            expected: params.d_feat,
            actual: x_noisy.len(),
        });
    }
    let x = Matrix::from_vec(1, params.d_feat, x_noisy.to_vec()).unwrap();
    let fwd = denoiser_forward_batch(params, &x, &[n], &[label], &[domain])?;
    Ok(fwd.output().row(0).to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_params_give_zero_output() {
        let params = DenoiserParams::zeros(3, 8, 4, 4, 5, 1);
        let out = denoiser_forward(&params, &[1.0, -2.0, 0.5], 7, 2, None).unwrap();
        assert_eq!(out, vec![0.0; 3]);
    }

    #[test]
    fn output_length_matches_input_length() {
        let mut rng = RngStream::from_seed(30);
        let params = DenoiserParams::init(5, 16, 4, 6, 3, 1, &mut rng);
        let x: Vec<f64> = (0..5).map(|_| rng.next_normal()).collect();
        let out = denoiser_forward(&params, &x, 3, 1, None).unwrap();
        assert_eq!(out.len(), 5);
        assert!(out.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn changing_the_label_changes_the_output() {
        let mut rng = RngStream::from_seed(31);
        let params = DenoiserParams::init(4, 16, 4, 6, 5, 1, &mut rng);
        let x: Vec<f64> = (0..4).map(|_| rng.next_normal()).collect();
        let a = denoiser_forward(&params, &x, 2, 0, None).unwrap();
        let b = denoiser_forward(&params, &x, 2, 3, None).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn changing_the_domain_changes_the_output_when_active() {
        let mut rng = RngStream::from_seed(32);
        let params = DenoiserParams::init(4, 16, 4, 6, 5, 3, &mut rng);
        let x: Vec<f64> = (0..4).map(|_| rng.next_normal()).collect();
        let a = denoiser_forward(&params, &x, 2, 1, Some(0)).unwrap();
        let b = denoiser_forward(&params, &x, 2, 1, Some(2)).unwrap();
        assert_ne!(a, b);
        // Domain is mandatory once the table exists.
        assert!(denoiser_forward(&params, &x, 2, 1, None).is_err());
    }

    #[test]
    fn step_zero_is_rejected() {
        let params = DenoiserParams::zeros(2, 8, 4, 4, 3, 1);
        assert!(denoiser_forward(&params, &[0.0, 0.0], 0, 0, None).is_err());
    }

    #[test]
    fn batch_forward_equals_single_forward() {
        let mut rng = RngStream::from_seed(33);
        let params = DenoiserParams::init(3, 12, 4, 6, 4, 2, &mut rng);
        let mut x = Matrix::zeros(4, 3);
        for i in 0..4 {
            for v in x.row_mut(i) {
                *v = rng.next_normal();
            }
        }
        let steps = [1, 5, 9, 2];
        let labels = [0, 1, 2, 3];
        let domains = [Some(0), Some(1), Some(0), Some(1)];
        let fwd = denoiser_forward_batch(&params, &x, &steps, &labels, &domains).unwrap();
        for i in 0..4 {
            let single =
                denoiser_forward(&params, x.row(i), steps[i], labels[i], domains[i]).unwrap();
            for (a, b) in fwd.output().row(i).iter().zip(&single) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn time_embeddings_are_pairwise_distinct() {
        let dim = 16;
        let embeddings: Vec<Vec<f64>> = (1..=200).map(|n| time_embedding(n, dim)).collect();
        let mut min_dist = f64::INFINITY;
        for i in 0..embeddings.len() {
            for j in i + 1..embeddings.len() {
                let d: f64 = embeddings[i]
                    .iter()
                    .zip(&embeddings[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                min_dist = min_dist.min(d);
            }
        }
        assert!(min_dist > 0.0, "min pairwise distance {min_dist}");
    }

    #[test]
    fn flat_view_round_trips_with_and_without_domains() {
        let mut rng = RngStream::from_seed(34);
        for domains in [1, 3] {
            let params = DenoiserParams::init(3, 8, 4, 6, 4, domains, &mut rng);
            let flat = params.flatten();
            assert_eq!(flat.len(), params.flat_len());
            let back = params.unflatten_like(&flat).unwrap();
            assert_eq!(params, back);
            assert_eq!(back.flatten(), flat);
            assert!(params.unflatten_like(&flat[..flat.len() - 1]).is_err());
        }
    }
}
