//! Client state and the local update: generative replay, target-model
//! training with per-method penalties, and per-session diffusion training.

use super::config::{ExperimentConfig, Method};
use super::methods::{ewc_penalty_grad, lwf_penalty_grad, prox_penalty_grad};
use super::metrics::synthetic_fidelity_kl;
use super::FlError;
use crate::data::Example;
use crate::diffusion::{sample_reverse, train_diffusion, NoiseSchedule};
use crate::models::{mlp_loss_grad, DenoiserParams, MlpParams};
use crate::numkit::{adam_step, AdamState, RngStream};
use std::collections::BTreeSet;

/// Method-specific carry-over state, set at session boundaries.
#[derive(Debug, Clone)]
pub enum MethodAux {
    None,
    /// Anchor parameters and diagonal Fisher from the previous session.
    Ewc { anchor: Vec<f64>, fisher: Vec<f64> },
    /// Frozen teacher from the previous session's final global model.
    Lwf { teacher: MlpParams },
}

/// Per-client state across the whole experiment.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub client_id: usize,
    pub target_params: MlpParams,
    pub diffusion_params: DenoiserParams,
    pub current_real: Vec<Example>,
    /// Previous session's real data, kept for the fidelity diagnostic.
    pub prev_real: Vec<Example>,
    /// Synthetic replay for the current session.
    pub replay_cache: Vec<Example>,
    /// (class, domain) pairs encountered in any loaded session.
    pub seen_labels: BTreeSet<(usize, usize)>,
    /// Pairs encountered strictly before the current session; replay is
    /// conditioned on these.
    seen_before_session: BTreeSet<(usize, usize)>,
    pub method_aux: MethodAux,
    pub target_opt: AdamState,
    pub diffusion_opt: AdamState,
    sessions_loaded: usize,
}

impl ClientState {
    pub fn new(
        client_id: usize,
        target_params: MlpParams,
        diffusion_params: DenoiserParams,
        target_lr: f64,
        diffusion_lr: f64,
    ) -> Self {
        let target_opt = AdamState::new(target_params.flat_len(), target_lr);
        let diffusion_opt = AdamState::new(diffusion_params.flat_len(), diffusion_lr);
        ClientState {
            client_id,
            target_params,
            diffusion_params,
            current_real: Vec::new(),
            prev_real: Vec::new(),
            replay_cache: Vec::new(),
            seen_labels: BTreeSet::new(),
            seen_before_session: BTreeSet::new(),
            method_aux: MethodAux::None,
            target_opt,
            diffusion_opt,
            sessions_loaded: 0,
        }
    }

    /// Installs a session's real data. The replay cache is cleared; the
    /// local update decides whether to regenerate it.
    pub fn load_session(&mut self, examples: Vec<Example>) {
        self.seen_before_session = self.seen_labels.clone();
        self.prev_real = std::mem::take(&mut self.current_real);
        self.seen_labels
            .extend(examples.iter().map(|e| (e.label, e.domain)));
        self.current_real = examples;
        self.replay_cache.clear();
        self.sessions_loaded += 1;
    }

    /// Number of sessions loaded so far; the active session index is this
    /// minus one.
    pub fn sessions_loaded(&self) -> usize {
        self.sessions_loaded
    }

    /// Pairs available for replay conditioning (everything seen before the
    /// current session).
    pub fn replayable_pairs(&self) -> &BTreeSet<(usize, usize)> {
        &self.seen_before_session
    }

    /// Current training set: real data plus replay.
    pub fn training_set(&self) -> Vec<Example> {
        self.current_real
            .iter()
            .chain(self.replay_cache.iter())
            .cloned()
            .collect()
    }
}

/// Draws `round(δ·|current_real|)` synthetic examples, allocated uniformly
/// across previously seen (class, domain) pairs with the remainder going to
/// the lowest pairs, each conditioned on its pair.
pub fn generate_replay(
    client: &ClientState,
    schedule: &NoiseSchedule,
    delta: f64,
    rng: &mut RngStream,
) -> Result<Vec<Example>, FlError> {
    if client.sessions_loaded < 2 {
        return Err(FlError::Precondition(
            "generate_replay: no completed session to replay".into(),
        ));
    }
    if delta < 0.0 {
        return Err(FlError::Domain(format!(
            "generate_replay: delta must be >= 0, got {delta}"
        )));
    }
    let pairs: Vec<(usize, usize)> = client.seen_before_session.iter().copied().collect();
    if pairs.is_empty() {
        return Err(FlError::Precondition(
            "generate_replay: no previously seen labels".into(),
        ));
    }
    let total = (delta * client.current_real.len() as f64).round() as usize;
    if total == 0 {
        return Ok(Vec::new());
    }

    let base = total / pairs.len();
    let remainder = total % pairs.len();
    let mut labels = Vec::with_capacity(total);
    let mut domains = Vec::with_capacity(total);
    for (i, &(class, domain)) in pairs.iter().enumerate() {
        let count = base + usize::from(i < remainder);
        labels.extend(std::iter::repeat(class).take(count));
        domains.extend(std::iter::repeat(domain).take(count));
    }

    let domains_active = client.diffusion_params.num_domains() > 1;
    let features = sample_reverse(
        &client.diffusion_params,
        &labels,
        domains_active.then_some(domains.as_slice()),
        schedule,
        rng,
    )?;
    Ok(features
        .into_iter()
        .zip(labels)
        .zip(domains)
        .map(|((features, label), domain)| Example {
            features,
            label,
            domain,
        })
        .collect())
}

/// Independent per-purpose streams for one (client, round) cell.
pub struct RoundStreams {
    pub target: RngStream,
    pub diffusion: RngStream,
    pub generation: RngStream,
}

impl RoundStreams {
    /// Streams are keyed by client id, never by iteration position, so the
    /// engine may visit clients in any order.
    pub fn derive(master: &RngStream, client_id: usize, round: usize) -> Self {
        let cell = master
            .split(0x10)
            .split(client_id as u64)
            .split(0x100 + round as u64);
        RoundStreams {
            target: cell.split(0),
            diffusion: cell.split(1),
            generation: cell.split(2),
        }
    }
}

/// What a local update hands back to the server loop.
#[derive(Debug, Clone)]
pub struct LocalOutcome {
    /// |𝒳|: real plus synthetic samples trained on; the aggregation weight.
    pub sample_count: usize,
    pub mean_train_loss: f64,
    /// Replay fidelity measured against the previous session's real data,
    /// present only on rounds that regenerated the cache.
    pub fidelity_kl: Option<f64>,
}

/// One client's round: replay maintenance (replay method only), target
/// training from the aggregated parameters with the method's penalty, and
/// the once-per-session diffusion training.
pub fn local_update(
    client: &mut ClientState,
    global_params: &MlpParams,
    config: &ExperimentConfig,
    schedule: &NoiseSchedule,
    round: usize,
    streams: RoundStreams,
) -> Result<LocalOutcome, FlError> {
    let rounds_per_session = config.rounds_per_session();
    let session = round / rounds_per_session;
    if client.sessions_loaded != session + 1 {
        return Err(FlError::Precondition(format!(
            "local_update: client {} has {} sessions loaded at session {session}",
            client.client_id, client.sessions_loaded
        )));
    }
    let session_start = round % rounds_per_session == 0;
    let maintain_replay = session_start || config.replay_every_round;

    let mut fidelity = None;
    if config.method == Method::Dcfl && maintain_replay && session >= 1 {
        let mut generation_rng = streams.generation;
        client.replay_cache =
            generate_replay(client, schedule, config.replay_scale, &mut generation_rng)?;
        if !client.replay_cache.is_empty() && !client.prev_real.is_empty() {
            // Diagnostic only; degenerate strata simply leave it absent.
            fidelity = synthetic_fidelity_kl(&client.prev_real, &client.replay_cache).ok();
        }
    }

    let training_set = client.training_set();
    if training_set.is_empty() {
        return Err(FlError::Precondition(format!(
            "local_update: client {} has no training data",
            client.client_id
        )));
    }

    // Target model: E_theta epochs of mini-batch Adam from the aggregated
    // parameters, with the method penalty added to the task gradient.
    let global_flat = global_params.flatten();
    let mut theta = global_params.clone();
    let mut theta_flat = global_flat.clone();
    let mut opt = AdamState::new(theta_flat.len(), config.target_lr);
    let mut target_rng = streams.target;
    let mut order: Vec<usize> = (0..training_set.len()).collect();
    let mut total_loss = 0.0;
    let mut batches = 0usize;
    for _ in 0..config.target_epochs {
        target_rng.shuffle(&mut order);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<Example> = chunk.iter().map(|&i| training_set[i].clone()).collect();
            let (loss, mut grad) = mlp_loss_grad(&theta, &batch)?;
            match (&config.method, &client.method_aux) {
                (Method::FedProx, _) => {
                    let penalty = prox_penalty_grad(&theta_flat, &global_flat, config.mu_prox);
                    for (g, p) in grad.iter_mut().zip(&penalty) {
                        *g += p;
                    }
                }
                (Method::FedAvgEwc, MethodAux::Ewc { anchor, fisher }) => {
                    let penalty =
                        ewc_penalty_grad(&theta_flat, anchor, fisher, config.lambda_ewc);
                    for (g, p) in grad.iter_mut().zip(&penalty) {
                        *g += p;
                    }
                }
                (Method::FedAvgLwf, MethodAux::Lwf { teacher }) => {
                    let penalty = lwf_penalty_grad(&theta, teacher, &batch, config.lambda_lwf)?;
                    for (g, p) in grad.iter_mut().zip(&penalty) {
                        *g += p;
                    }
                }
                _ => {}
            }
            adam_step(&mut opt, &mut theta_flat, &grad)?;
            theta = theta.unflatten_like(&theta_flat)?;
            total_loss += loss;
            batches += 1;
        }
    }
    let mean_train_loss = if batches > 0 {
        total_loss / batches as f64
    } else {
        mlp_loss_grad(&theta, &training_set)?.0
    };
    client.target_params = theta;
    client.target_opt = opt;

    // Diffusion model: trained on the mixed set once per session (or every
    // round when configured), after the target update.
    if config.method == Method::Dcfl && maintain_replay {
        let mut diffusion_rng = streams.diffusion;
        let mut diffusion_opt =
            AdamState::new(client.diffusion_params.flat_len(), config.diffusion_lr);
        let (new_params, _epoch_losses) = train_diffusion(
            &client.diffusion_params,
            &training_set,
            schedule,
            config.diffusion_epochs,
            config.batch_size,
            &mut diffusion_opt,
            &mut diffusion_rng,
        )?;
        client.diffusion_params = new_params;
        client.diffusion_opt = diffusion_opt;
    }

    Ok(LocalOutcome {
        sample_count: training_set.len(),
        mean_train_loss,
        fidelity_kl: fidelity,
    })
}
