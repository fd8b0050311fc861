//! Target classifier: `d_feat → hidden (tanh) → C` with softmax
//! cross-entropy, trained by mini-batch Adam in the federated loop.

use super::init::glorot_matrix;
use crate::data::Example;
use crate::numkit::{Matrix, NumError, RngStream};

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    w1: Matrix, // (d_feat, hidden)
    b1: Vec<f64>,
    w2: Matrix, // (hidden, num_classes)
    b2: Vec<f64>,
}

impl MlpParams {
    pub fn init(d_feat: usize, hidden: usize, num_classes: usize, rng: &mut RngStream) -> Self {
        MlpParams {
            w1: glorot_matrix(d_feat, hidden, rng),
            b1: vec![0.0; hidden],
            w2: glorot_matrix(hidden, num_classes, rng),
            b2: vec![0.0; num_classes],
        }
    }

    pub fn zeros(d_feat: usize, hidden: usize, num_classes: usize) -> Self {
        MlpParams {
            w1: Matrix::zeros(d_feat, hidden),
            b1: vec![0.0; hidden],
            w2: Matrix::zeros(hidden, num_classes),
            b2: vec![0.0; num_classes],
        }
    }

    pub fn from_parts(w1: Matrix, b1: Vec<f64>, w2: Matrix, b2: Vec<f64>) -> Self {
        assert_eq!(w1.cols(), b1.len());
        assert_eq!(w2.cols(), b2.len());
        assert_eq!(w1.cols(), w2.rows());
        MlpParams { w1, b1, w2, b2 }
    }

    pub fn d_feat(&self) -> usize {
        self.w1.rows()
    }

    pub fn hidden(&self) -> usize {
        self.w1.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.w2.cols()
    }

    pub fn flat_len(&self) -> usize {
        self.w1.as_slice().len() + self.b1.len() + self.w2.as_slice().len() + self.b2.len()
    }

    /// Stable flat ordering: w1, b1, w2, b2.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.flat_len());
        out.extend_from_slice(self.w1.as_slice());
        out.extend_from_slice(&self.b1);
        out.extend_from_slice(self.w2.as_slice());
        out.extend_from_slice(&self.b2);
        out
    }

    /// Inverse of [`flatten`](Self::flatten) against this parameter shape.
    pub fn unflatten_like(&self, flat: &[f64]) -> Result<MlpParams, NumError> {
        if flat.len() != self.flat_len() {
            return Err(NumError::Dimension {
                context: "MlpParams::unflatten_like",
                expected: self.flat_len(),
                actual: flat.len(),
            });
        }
        let (d, h, c) = (self.d_feat(), self.hidden(), self.num_classes());
        let mut pos = 0;
        let w1 = Matrix::from_vec(d, h, flat[pos..pos + d * h].to_vec()).unwrap();
        pos += d * h;
        let b1 = flat[pos..pos + h].to_vec();
        pos += h;
        let w2 = Matrix::from_vec(h, c, flat[pos..pos + h * c].to_vec()).unwrap();
        pos += h * c;
        let b2 = flat[pos..].to_vec();
        Ok(MlpParams { w1, b1, w2, b2 })
    }
}

/// Logits for a single feature vector.
pub fn mlp_forward(params: &MlpParams, features: &[f64]) -> Result<Vec<f64>, NumError> {
    if features.len() != params.d_feat() {
        return Err(NumError::Dimension {
            context: "mlp_forward features",
            expected: params.d_feat(),
            actual: features.len(),
        });
    }
    let mut hidden = params.w1.vecmat(features);
    for (h, &b) in hidden.iter_mut().zip(&params.b1) {
        *h = (*h + b).tanh();
    }
    let mut logits = params.w2.vecmat(&hidden);
    for (z, &b) in logits.iter_mut().zip(&params.b2) {
        *z += b;
    }
    Ok(logits)
}

/// Batch logits, one row per example.
pub fn mlp_logits_batch(params: &MlpParams, batch: &[Example]) -> Result<Matrix, NumError> {
    let (x, _labels) = batch_inputs(params, batch)?;
    let (_hidden, logits) = forward_cached(params, &x);
    Ok(logits)
}

fn batch_inputs(params: &MlpParams, batch: &[Example]) -> Result<(Matrix, Vec<usize>), NumError> {
    if batch.is_empty() {
        return Err(NumError::Domain("mlp: empty batch".into()));
    }
    let d = params.d_feat();
    let mut x = Matrix::zeros(batch.len(), d);
    let mut labels = Vec::with_capacity(batch.len());
    for (i, ex) in batch.iter().enumerate() {
        if ex.features.len() != d {
            return Err(NumError::Dimension {
                context: "mlp batch features",
                expected: d,
                actual: ex.features.len(),
            });
        }
        if ex.label >= params.num_classes() {
            return Err(NumError::Domain(format!(
                "mlp: label {} outside [0, {})",
                ex.label,
                params.num_classes()
            )));
        }
        x.row_mut(i).copy_from_slice(&ex.features);
        labels.push(ex.label);
    }
    Ok((x, labels))
}

fn forward_cached(params: &MlpParams, x: &Matrix) -> (Matrix, Matrix) {
    let mut hidden = x.matmul(&params.w1);
    hidden.add_row_broadcast(&params.b1);
    hidden.map_inplace(f64::tanh);
    let mut logits = hidden.matmul(&params.w2);
    logits.add_row_broadcast(&params.b2);
    (hidden, logits)
}

/// Numerically stable softmax of one logit row.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    out
}

/// Mean softmax cross-entropy over the batch and its gradient in flat
/// parameter order.
pub fn mlp_loss_grad(params: &MlpParams, batch: &[Example]) -> Result<(f64, Vec<f64>), NumError> {
    let (x, labels) = batch_inputs(params, batch)?;
    let (hidden, logits) = forward_cached(params, &x);
    let batch_size = batch.len() as f64;

    let mut loss = 0.0;
    let mut dlogits = Matrix::zeros(batch.len(), params.num_classes());
    for i in 0..batch.len() {
        let row = logits.row(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = row.iter().map(|&z| (z - max).exp()).sum();
        let log_sum = max + sum_exp.ln();
        loss += log_sum - row[labels[i]];
        let drow = dlogits.row_mut(i);
        for (j, &z) in row.iter().enumerate() {
            let p = (z - max).exp() / sum_exp;
            drow[j] = (p - if j == labels[i] { 1.0 } else { 0.0 }) / batch_size;
        }
    }
    loss /= batch_size;

    let grad = backward_from_dlogits(params, &x, &hidden, &dlogits);
    Ok((loss, grad))
}

/// Gradient of an arbitrary loss given its derivative w.r.t. the logits;
/// used by the distillation penalty.
pub fn mlp_grad_from_dlogits(
    params: &MlpParams,
    batch: &[Example],
    dlogits: &Matrix,
) -> Result<Vec<f64>, NumError> {
    let (x, _labels) = batch_inputs(params, batch)?;
    if dlogits.rows() != batch.len() || dlogits.cols() != params.num_classes() {
        return Err(NumError::Dimension {
            context: "mlp_grad_from_dlogits",
            expected: batch.len() * params.num_classes(),
            actual: dlogits.rows() * dlogits.cols(),
        });
    }
    let (hidden, _logits) = forward_cached(params, &x);
    Ok(backward_from_dlogits(params, &x, &hidden, dlogits))
}

fn backward_from_dlogits(
    params: &MlpParams,
    x: &Matrix,
    hidden: &Matrix,
    dlogits: &Matrix,
) -> Vec<f64> {
    let dw2 = hidden.matmul_transpose_a(dlogits);
    let db2 = dlogits.column_sums();
    let mut dhidden = dlogits.matmul(&params.w2.transpose());
    for i in 0..dhidden.rows() {
        let h_row = hidden.row(i);
        for (dh, &h) in dhidden.row_mut(i).iter_mut().zip(h_row) {
            *dh *= 1.0 - h * h;
        }
    }
    let dw1 = x.matmul_transpose_a(&dhidden);
    let db1 = dhidden.column_sums();

    let mut grad = Vec::with_capacity(params.flat_len());
    grad.extend_from_slice(dw1.as_slice());
    grad.extend_from_slice(&db1);
    grad.extend_from_slice(dw2.as_slice());
    grad.extend_from_slice(&db2);
    grad
}

/// Mean over examples of the elementwise squared per-example gradient, the
/// empirical diagonal Fisher estimate.
pub fn mlp_per_example_sq_grads(
    params: &MlpParams,
    data: &[Example],
) -> Result<Vec<f64>, NumError> {
    if data.is_empty() {
        return Err(NumError::Domain("fisher estimate: empty data".into()));
    }
    let mut fisher = vec![0.0; params.flat_len()];
    for ex in data {
        let (_, grad) = mlp_loss_grad(params, std::slice::from_ref(ex))?;
        for (f, g) in fisher.iter_mut().zip(&grad) {
            *f += g * g;
        }
    }
    let n = data.len() as f64;
    for f in &mut fisher {
        *f /= n;
    }
    Ok(fisher)
}

/// Argmax class with ties broken toward the lowest index.
pub fn predict(params: &MlpParams, features: &[f64]) -> Result<usize, NumError> {
    let logits = mlp_forward(params, features)?;
    Ok(argmax(&logits))
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}
