//! Synthetic Gaussian blob datasets, the desk-scale stand-in for image
//! benchmarks. Domains model a drifting acquisition environment via a fixed
//! per-domain affine map.

use super::{DataError, Dataset, Example};
use crate::numkit::RngStream;

/// Isotropic noise around each class center. Small relative to the default
/// separations so classes stay linearly separable from separation 3 up.
pub const BLOB_NOISE_SIGMA: f64 = 0.25;

const CENTER_KEY: u64 = 0;
const SAMPLE_KEY_BASE: u64 = 1;

/// Unit-norm class directions scaled by `separation`.
///
/// When the classes fit into the feature dimension they sit on random
/// orthonormal axes; otherwise they are spread evenly around a circle in a
/// random 2-plane, which keeps every pair of centers at distance
/// `2·sep·sin(π/C)` or more.
pub fn blob_class_centers(
    num_classes: usize,
    d_feat: usize,
    separation: f64,
    rng: &RngStream,
) -> Vec<Vec<f64>> {
    let mut center_rng = rng.split(CENTER_KEY);
    let directions = if num_classes <= d_feat {
        random_orthonormal(num_classes, d_feat, &mut center_rng)
    } else {
        let plane = random_orthonormal(2, d_feat, &mut center_rng);
        (0..num_classes)
            .map(|c| {
                let angle = std::f64::consts::TAU * c as f64 / num_classes as f64;
                let (sin, cos) = angle.sin_cos();
                (0..d_feat)
                    .map(|i| cos * plane[0][i] + sin * plane[1][i])
                    .collect()
            })
            .collect()
    };
    directions
        .into_iter()
        .map(|dir| dir.into_iter().map(|x| x * separation).collect())
        .collect()
}

/// Gram-Schmidt on fresh Gaussian draws; redraws on near-degenerate vectors.
fn random_orthonormal(count: usize, dim: usize, rng: &mut RngStream) -> Vec<Vec<f64>> {
    assert!(count <= dim);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.next_normal()).collect();
        for b in &basis {
            let proj: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(b) {
                *x -= proj * y;
            }
        }
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-6 {
            continue;
        }
        for x in &mut v {
            *x /= norm;
        }
        basis.push(v);
    }
    basis
}

/// Per-(class, domain) Gaussian samples around class centers; domain `j`
/// rotates the first two coordinates by `j·15°` and shifts by
/// `strength·j` along the normalized all-ones direction.
pub fn make_blobs(
    num_classes: usize,
    num_domains: usize,
    samples_per_class_per_domain: usize,
    d_feat: usize,
    class_separation: f64,
    domain_transform_strength: f64,
    rng: &RngStream,
) -> Result<Dataset, DataError> {
    if num_classes < 2 {
        return Err(DataError::Domain(format!(
            "make_blobs: need at least 2 classes, got {num_classes}"
        )));
    }
    if d_feat < 2 {
        return Err(DataError::Domain(format!(
            "make_blobs: need d_feat >= 2, got {d_feat}"
        )));
    }
    if num_domains == 0 {
        return Err(DataError::Domain("make_blobs: need at least 1 domain".into()));
    }
    if !(class_separation > 0.0) {
        return Err(DataError::Domain(format!(
            "make_blobs: separation must be > 0, got {class_separation}"
        )));
    }

    let centers = blob_class_centers(num_classes, d_feat, class_separation, rng);
    let shift_dir = 1.0 / (d_feat as f64).sqrt();

    let mut examples = Vec::with_capacity(num_classes * num_domains * samples_per_class_per_domain);
    for domain in 0..num_domains {
        let angle = domain as f64 * 15.0_f64.to_radians();
        let (sin, cos) = angle.sin_cos();
        let shift = domain_transform_strength * domain as f64 * shift_dir;
        for class in 0..num_classes {
            let mut sample_rng =
                rng.split(SAMPLE_KEY_BASE + (domain * num_classes + class) as u64);
            for _ in 0..samples_per_class_per_domain {
                let mut x: Vec<f64> = centers[class]
                    .iter()
                    .map(|&c| c + BLOB_NOISE_SIGMA * sample_rng.next_normal())
                    .collect();
                let (x0, x1) = (x[0], x[1]);
                x[0] = cos * x0 - sin * x1;
                x[1] = sin * x0 + cos * x1;
                for v in &mut x {
                    *v += shift;
                }
                examples.push(Example {
                    features: x,
                    label: class,
                    domain,
                });
            }
        }
    }
    Dataset::new(examples, num_classes, num_domains, d_feat)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_means_concentrate_at_centers() {
        let rng = RngStream::from_seed(100);
        let n = 2000;
        let ds = make_blobs(3, 1, n, 2, 4.0, 0.0, &rng).unwrap();
        let centers = blob_class_centers(3, 2, 4.0, &rng);
        for class in 0..3 {
            let mut mean = vec![0.0; 2];
            let mut count = 0.0_f64;
            for ex in ds.examples().iter().filter(|e| e.label == class) {
                for (m, &x) in mean.iter_mut().zip(&ex.features) {
                    *m += x;
                }
                count += 1.0;
            }
            assert_eq!(count as usize, n);
            let tol = 3.0 * BLOB_NOISE_SIGMA / count.sqrt();
            for (m, &c) in mean.iter().zip(&centers[class]) {
                assert!(
                    (m / count - c).abs() < tol,
                    "class {class}: mean {} vs center {c}",
                    m / count
                );
            }
        }
    }

    #[test]
    fn zero_samples_gives_empty_dataset_with_metadata() {
        let rng = RngStream::from_seed(1);
        let ds = make_blobs(4, 2, 0, 3, 1.0, 0.5, &rng).unwrap();
        assert!(ds.is_empty());
        assert_eq!(ds.num_classes(), 4);
        assert_eq!(ds.num_domains(), 2);
        assert_eq!(ds.d_feat(), 3);
    }

    #[test]
    fn identical_seeds_give_identical_datasets() {
        let a = make_blobs(5, 2, 20, 2, 3.0, 1.0, &RngStream::from_seed(9)).unwrap();
        let b = make_blobs(5, 2, 20, 2, 3.0, 1.0, &RngStream::from_seed(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let rng = RngStream::from_seed(0);
        assert!(make_blobs(1, 1, 10, 2, 1.0, 0.0, &rng).is_err());
        assert!(make_blobs(2, 1, 10, 1, 1.0, 0.0, &rng).is_err());
        assert!(make_blobs(2, 1, 10, 2, 0.0, 0.0, &rng).is_err());
    }

    #[test]
    fn centers_are_unit_norm_times_separation() {
        let rng = RngStream::from_seed(3);
        for (c, d) in [(3, 8), (10, 2), (6, 4)] {
            let centers = blob_class_centers(c, d, 2.5, &rng);
            assert_eq!(centers.len(), c);
            for center in &centers {
                let norm: f64 = center.iter().map(|x| x * x).sum::<f64>().sqrt();
                assert!((norm - 2.5).abs() < 1e-9, "norm {norm}");
            }
        }
    }

    #[test]
    fn domain_zero_is_untransformed() {
        let rng = RngStream::from_seed(7);
        let with_domains = make_blobs(2, 3, 50, 2, 4.0, 2.0, &rng).unwrap();
        let single = make_blobs(2, 1, 50, 2, 4.0, 2.0, &rng).unwrap();
        let d0: Vec<&Example> = with_domains
            .examples()
            .iter()
            .filter(|e| e.domain == 0)
            .collect();
        assert_eq!(d0.len(), single.len());
        for (a, b) in d0.iter().zip(single.examples()) {
            assert_eq!(a.features, b.features);
        }
    }
}
