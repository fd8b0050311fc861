//! The experiment driver: full-participation rounds, session boundaries,
//! aggregation, and per-round evaluation.

use super::aggregate::aggregate;
use super::client::{local_update, ClientState, LocalOutcome, RoundStreams};
use super::config::{ExperimentConfig, Method};
use super::metrics::{eval_encountered_accuracy, eval_global_accuracy, ewc_fisher_estimate};
use super::{FlError, MethodAux};
use crate::data::{ClientSchedule, Dataset};
use crate::diffusion::make_linear_schedule;
use crate::models::{DenoiserParams, MlpParams};
use crate::numkit::RngStream;
use std::collections::BTreeSet;
use std::time::Instant;

const GLOBAL_INIT_KEY: u64 = 0x01;
const CLIENT_TREE_KEY: u64 = 0x10;
const OMEGA_INIT_KEY: u64 = 0x01;

/// Server-side view of the experiment.
#[derive(Debug, Clone)]
pub struct GlobalState {
    pub global_params: MlpParams,
    pub round: usize,
    pub session: usize,
}

/// One communication round's metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    /// 1-based communication round.
    pub round: usize,
    /// 0-based session index.
    pub session: usize,
    pub global_accuracy: f64,
    pub encountered_accuracy: f64,
    pub mean_train_loss: f64,
    /// Mean replay-fidelity KL across clients; absent on rounds without a
    /// fresh replay cache.
    pub synthetic_fidelity_kl: Option<f64>,
    pub wall_time_s: f64,
}

/// The classifier every client starts from, as derived from the master
/// seed. Exposed so tests can replay the engine's initialization.
pub fn initial_global_params(config: &ExperimentConfig, train: &Dataset) -> MlpParams {
    let master = RngStream::from_seed(config.seed);
    let mut init_rng = master.split(GLOBAL_INIT_KEY);
    MlpParams::init(
        train.d_feat(),
        config.classifier_hidden,
        train.num_classes(),
        &mut init_rng,
    )
}

/// Runs the full experiment with clients visited in id order.
pub fn run_experiment(
    config: &ExperimentConfig,
    schedule: &ClientSchedule,
    train: &Dataset,
    test: &Dataset,
) -> Result<Vec<RoundRecord>, FlError> {
    let order: Vec<usize> = (0..config.num_clients).collect();
    run_experiment_with_order(config, schedule, train, test, &order)
}

/// Same as [`run_experiment`] but visiting clients in the given order.
/// Per-client randomness is keyed by client id and aggregation always runs
/// in id order, so the records must not depend on the visiting order.
pub fn run_experiment_with_order(
    config: &ExperimentConfig,
    schedule: &ClientSchedule,
    train: &Dataset,
    test: &Dataset,
    client_order: &[usize],
) -> Result<Vec<RoundRecord>, FlError> {
    config.validate()?;
    check_consistency(config, schedule, train, test, client_order)?;

    let noise = make_linear_schedule(config.diffusion_steps, config.beta_start, config.beta_end)?;
    let master = RngStream::from_seed(config.seed);

    let global_init = initial_global_params(config, train);
    let mut state = GlobalState {
        global_params: global_init.clone(),
        round: 0,
        session: 0,
    };

    let mut clients: Vec<ClientState> = (0..config.num_clients)
        .map(|k| {
            let mut omega_rng = master
                .split(CLIENT_TREE_KEY)
                .split(k as u64)
                .split(OMEGA_INIT_KEY);
            let denoiser = DenoiserParams::init(
                train.d_feat(),
                config.denoiser_hidden,
                config.time_embed_dim,
                config.cond_embed_dim,
                train.num_classes(),
                train.num_domains(),
                &mut omega_rng,
            );
            ClientState::new(
                k,
                global_init.clone(),
                denoiser,
                config.target_lr,
                config.diffusion_lr,
            )
        })
        .collect();

    let rounds_per_session = config.rounds_per_session();
    let mut encountered: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut records = Vec::with_capacity(config.rounds);

    for round in 0..config.rounds {
        let session = round / rounds_per_session;
        if round % rounds_per_session == 0 {
            for (k, client) in clients.iter_mut().enumerate() {
                let examples = train.gather(schedule.indices(k, session));
                encountered.extend(examples.iter().map(|e| (e.label, e.domain)));
                client.load_session(examples);
            }
        }
        state.round = round + 1;
        state.session = session;

        let started = Instant::now();
        let mut outcomes: Vec<Option<LocalOutcome>> = vec![None; config.num_clients];
        for &k in client_order {
            let streams = RoundStreams::derive(&master, k, round);
            let outcome = local_update(
                &mut clients[k],
                &state.global_params,
                config,
                &noise,
                round,
                streams,
            )
            .map_err(|e| FlError::RoundContext {
                round: round + 1,
                client: k,
                source: Box::new(e),
            })?;
            outcomes[k] = Some(outcome);
        }
        let outcomes: Vec<LocalOutcome> = outcomes.into_iter().map(Option::unwrap).collect();

        // Aggregation runs in client-id order regardless of visiting order.
        let flats: Vec<Vec<f64>> = clients.iter().map(|c| c.target_params.flatten()).collect();
        let counts: Vec<usize> = outcomes.iter().map(|o| o.sample_count).collect();
        let new_flat = aggregate(&flats, &counts)?;
        state.global_params = state.global_params.unflatten_like(&new_flat)?;

        // Session end: refresh the continual-learning anchors.
        if (round + 1) % rounds_per_session == 0 {
            match config.method {
                Method::FedAvgEwc => {
                    for client in &mut clients {
                        let fisher =
                            ewc_fisher_estimate(&state.global_params, &client.training_set())?;
                        client.method_aux = MethodAux::Ewc {
                            anchor: new_flat.clone(),
                            fisher,
                        };
                    }
                }
                Method::FedAvgLwf => {
                    for client in &mut clients {
                        client.method_aux = MethodAux::Lwf {
                            teacher: state.global_params.clone(),
                        };
                    }
                }
                _ => {}
            }
        }

        let global_accuracy = eval_global_accuracy(&state.global_params, test)?;
        let encountered_accuracy = eval_encountered_accuracy(
            &state.global_params,
            test,
            &encountered,
            config.scenario,
        )?;
        let mean_train_loss =
            outcomes.iter().map(|o| o.mean_train_loss).sum::<f64>() / outcomes.len() as f64;
        let fidelities: Vec<f64> = outcomes.iter().filter_map(|o| o.fidelity_kl).collect();
        let synthetic_fidelity_kl = if fidelities.is_empty() {
            None
        } else {
            Some(fidelities.iter().sum::<f64>() / fidelities.len() as f64)
        };

        records.push(RoundRecord {
            round: round + 1,
            session,
            global_accuracy,
            encountered_accuracy,
            mean_train_loss,
            synthetic_fidelity_kl,
            wall_time_s: started.elapsed().as_secs_f64(),
        });
    }
    Ok(records)
}

fn check_consistency(
    config: &ExperimentConfig,
    schedule: &ClientSchedule,
    train: &Dataset,
    test: &Dataset,
    client_order: &[usize],
) -> Result<(), FlError> {
    if schedule.num_clients() != config.num_clients {
        return Err(FlError::Domain(format!(
            "engine: schedule has {} clients, config {}",
            schedule.num_clients(),
            config.num_clients
        )));
    }
    if schedule.num_sessions() != config.num_sessions {
        return Err(FlError::Domain(format!(
            "engine: schedule has {} sessions, config {}",
            schedule.num_sessions(),
            config.num_sessions
        )));
    }
    if schedule.total_rounds() != config.rounds {
        return Err(FlError::Domain(format!(
            "engine: schedule covers {} rounds, config {}",
            schedule.total_rounds(),
            config.rounds
        )));
    }
    if train.d_feat() != test.d_feat() || train.num_classes() != test.num_classes() {
        return Err(FlError::Domain(
            "engine: train/test metadata mismatch".into(),
        ));
    }
    if test.is_empty() {
        return Err(FlError::Domain("engine: empty test set".into()));
    }
    let mut seen = vec![false; config.num_clients];
    if client_order.len() != config.num_clients {
        return Err(FlError::Domain("engine: client order length mismatch".into()));
    }
    for &k in client_order {
        if k >= config.num_clients || seen[k] {
            return Err(FlError::Domain(format!(
                "engine: client order is not a permutation ({k})"
            )));
        }
        seen[k] = true;
    }
    Ok(())
}
