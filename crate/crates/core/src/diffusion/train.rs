//! Mini-batch training loop for the denoiser.

use super::{diffusion_loss_grad, DiffusionError, NoiseSchedule};
use crate::data::Example;
use crate::models::DenoiserParams;
use crate::numkit::{adam_step, AdamState, RngStream};

/// Runs `epochs` of shuffled mini-batch Adam on the ε-prediction loss and
/// returns the updated parameters together with the per-epoch mean loss.
pub fn train_diffusion(
    params: &DenoiserParams,
    data: &[Example],
    schedule: &NoiseSchedule,
    epochs: usize,
    batch_size: usize,
    opt: &mut AdamState,
    rng: &mut RngStream,
) -> Result<(DenoiserParams, Vec<f64>), DiffusionError> {
    if data.is_empty() {
        return Err(DiffusionError::Domain("train_diffusion: empty data".into()));
    }
    if batch_size == 0 {
        return Err(DiffusionError::Domain("train_diffusion: batch_size must be positive".into()));
    }
    let mut current = params.clone();
    let mut flat = current.flatten();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(epochs);

    for _ in 0..epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        let mut batches = 0.0;
        for chunk in order.chunks(batch_size) {
            let batch: Vec<Example> = chunk.iter().map(|&i| data[i].clone()).collect();
            let (loss, grad) = diffusion_loss_grad(&current, &batch, schedule, rng)?;
            adam_step(opt, &mut flat, &grad).map_err(DiffusionError::Num)?;
            current = current.unflatten_like(&flat).map_err(DiffusionError::Num)?;
            epoch_loss += loss;
            batches += 1.0;
        }
        epoch_losses.push(epoch_loss / batches);
    }
    Ok((current, epoch_losses))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::make_linear_schedule;

    fn blob_batch(n: usize, rng: &mut RngStream) -> Vec<Example> {
        (0..n)
            .map(|i| {
                let label = i % 2;
                let center = if label == 0 { 3.0 } else { -3.0 };
                Example {
                    features: vec![
                        center + 0.3 * rng.next_normal(),
                        center + 0.3 * rng.next_normal(),
                    ],
                    label,
                    domain: 0,
                }
            })
            .collect()
    }

    #[test]
    fn zero_epochs_leave_params_unchanged() {
        let mut rng = RngStream::from_seed(50);
        let params = DenoiserParams::init(2, 8, 4, 4, 2, 1, &mut rng);
        let s = make_linear_schedule(10, 1e-4, 0.02).unwrap();
        let data = blob_batch(16, &mut rng);
        let mut opt = AdamState::new(params.flat_len(), 1e-3);
        let (out, losses) =
            train_diffusion(&params, &data, &s, 0, 8, &mut opt, &mut rng).unwrap();
        assert_eq!(out, params);
        assert!(losses.is_empty());
    }

    #[test]
    fn loss_trends_down_on_blob_data() {
        let mut rng = RngStream::from_seed(51);
        let params = DenoiserParams::init(2, 32, 8, 8, 2, 1, &mut rng);
        let s = make_linear_schedule(25, 1e-4, 0.05).unwrap();
        let data = blob_batch(128, &mut rng);
        let mut opt = AdamState::new(params.flat_len(), 1e-3);
        let (_, losses) =
            train_diffusion(&params, &data, &s, 30, 32, &mut opt, &mut rng).unwrap();
        let first = losses[0];
        let last = *losses.last().unwrap();
        assert!(
            last <= first * 1.05,
            "no downward trend: first {first}, last {last}"
        );
    }

    #[test]
    fn training_is_deterministic_given_the_seed() {
        let mut init_rng = RngStream::from_seed(52);
        let params = DenoiserParams::init(2, 8, 4, 4, 2, 1, &mut init_rng);
        let s = make_linear_schedule(10, 1e-4, 0.02).unwrap();
        let data = blob_batch(32, &mut init_rng);
        let run = |seed: u64| {
            let mut opt = AdamState::new(params.flat_len(), 1e-3);
            let mut rng = RngStream::from_seed(seed);
            train_diffusion(&params, &data, &s, 3, 8, &mut opt, &mut rng)
                .unwrap()
                .0
        };
        assert_eq!(run(7), run(7));
    }

    #[test]
    fn empty_data_is_rejected() {
        let params = DenoiserParams::zeros(2, 8, 4, 4, 2, 1);
        let s = make_linear_schedule(10, 1e-4, 0.02).unwrap();
        let mut opt = AdamState::new(params.flat_len(), 1e-3);
        let mut rng = RngStream::from_seed(0);
        assert!(train_diffusion(&params, &[], &s, 1, 8, &mut opt, &mut rng).is_err());
    }
}
