//! Seeded scaled-uniform weight initialization.

use crate::numkit::{Matrix, RngStream};

/// `(rows, cols)` matrix with entries uniform in
/// `±sqrt(6 / (rows + cols))`; biases elsewhere start at zero.
pub fn glorot_matrix(rows: usize, cols: usize, rng: &mut RngStream) -> Matrix {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let mut m = Matrix::zeros(rows, cols);
    for v in m.as_mut_slice() {
        *v = limit * (2.0 * rng.next_f64() - 1.0);
    }
    m
}
