//! Engine-level behavior on small configurations: centralized equivalence,
//! replay degeneration, order independence, and determinism.

use dcfl_core::data::{make_blobs, partition_class_inc_iid, train_test_split, Scenario};
use dcfl_core::flcore::{
    initial_global_params, run_experiment, run_experiment_with_order, ExperimentConfig, Method,
    RoundStreams,
};
use dcfl_core::models::mlp_loss_grad;
use dcfl_core::numkit::{adam_step, AdamState, RngStream};

fn small_config(method: Method) -> ExperimentConfig {
    let mut config = ExperimentConfig::new(method, Scenario::ClassIncIid);
    config.num_clients = 2;
    config.num_sessions = 2;
    config.rounds = 4;
    config.target_epochs = 1;
    config.diffusion_epochs = 2;
    config.diffusion_steps = 8;
    config.classifier_hidden = 8;
    config.denoiser_hidden = 16;
    config.time_embed_dim = 8;
    config.cond_embed_dim = 8;
    config.batch_size = 8;
    config.target_lr = 1e-3;
    config.diffusion_lr = 1e-3;
    config.seed = 23;
    config
}

fn small_problem(
    config: &ExperimentConfig,
    classes: usize,
    cps: usize,
) -> (
    dcfl_core::data::Dataset,
    dcfl_core::data::Dataset,
    dcfl_core::data::ClientSchedule,
) {
    let rng = RngStream::from_seed(1000 + config.seed);
    let full = make_blobs(classes, 1, 30, 2, 4.0, 0.0, &rng).unwrap();
    let (train, test) = train_test_split(&full, 0.2, &rng.split(7)).unwrap();
    let schedule = partition_class_inc_iid(
        &train,
        config.num_clients,
        config.num_sessions,
        cps,
        &rng.split(8),
    )
    .unwrap()
    .with_rounds_per_session(config.rounds / config.num_sessions);
    (train, test, schedule)
}

#[test]
fn single_client_round_equals_centralized_training() {
    let mut config = small_config(Method::FedAvg);
    config.num_clients = 1;
    config.num_sessions = 1;
    config.rounds = 1;
    config.target_epochs = 3;
    let (train, test, schedule) = small_problem(&config, 2, 2);

    let records = run_experiment(&config, &schedule, &train, &test).unwrap();

    // Oracle: run the same mini-batch Adam by hand on the client's data.
    let data = train.gather(schedule.indices(0, 0));
    let global = initial_global_params(&config, &train);
    let mut theta = global.clone();
    let mut flat = theta.flatten();
    let mut opt = AdamState::new(flat.len(), config.target_lr);
    let streams = RoundStreams::derive(&RngStream::from_seed(config.seed), 0, 0);
    let mut rng = streams.target;
    let mut order: Vec<usize> = (0..data.len()).collect();
    for _ in 0..config.target_epochs {
        rng.shuffle(&mut order);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<_> = chunk.iter().map(|&i| data[i].clone()).collect();
            let (_, grad) = mlp_loss_grad(&theta, &batch).unwrap();
            adam_step(&mut opt, &mut flat, &grad).unwrap();
            theta = theta.unflatten_like(&flat).unwrap();
        }
    }
    let oracle_acc = dcfl_core::flcore::eval_global_accuracy(&theta, &test).unwrap();
    assert_eq!(records.len(), 1);
    assert_eq!(records[0].global_accuracy, oracle_acc);
}

#[test]
fn replay_scale_zero_degenerates_to_fedavg_bitwise() {
    let fedavg_config = small_config(Method::FedAvg);
    let (train, test, schedule) = small_problem(&fedavg_config, 4, 2);
    let fedavg = run_experiment(&fedavg_config, &schedule, &train, &test).unwrap();

    let mut dcfl_config = small_config(Method::Dcfl);
    dcfl_config.replay_scale = 0.0;
    let dcfl = run_experiment(&dcfl_config, &schedule, &train, &test).unwrap();

    assert_eq!(fedavg.len(), dcfl.len());
    for (a, b) in fedavg.iter().zip(&dcfl) {
        assert_eq!(a.global_accuracy.to_bits(), b.global_accuracy.to_bits());
        assert_eq!(
            a.encountered_accuracy.to_bits(),
            b.encountered_accuracy.to_bits()
        );
        assert_eq!(a.mean_train_loss.to_bits(), b.mean_train_loss.to_bits());
        assert_eq!(a.synthetic_fidelity_kl, b.synthetic_fidelity_kl);
    }
}

#[test]
fn client_visiting_order_does_not_change_records() {
    let config = small_config(Method::Dcfl);
    let (train, test, schedule) = small_problem(&config, 4, 2);
    let forward = run_experiment_with_order(&config, &schedule, &train, &test, &[0, 1]).unwrap();
    let reversed = run_experiment_with_order(&config, &schedule, &train, &test, &[1, 0]).unwrap();
    for (a, b) in forward.iter().zip(&reversed) {
        assert_eq!(a.global_accuracy.to_bits(), b.global_accuracy.to_bits());
        assert_eq!(a.mean_train_loss.to_bits(), b.mean_train_loss.to_bits());
        assert_eq!(a.synthetic_fidelity_kl, b.synthetic_fidelity_kl);
    }
}

#[test]
fn identical_seeds_give_identical_records() {
    let config = small_config(Method::FedAvgLwf);
    let (train, test, schedule) = small_problem(&config, 4, 2);
    let a = run_experiment(&config, &schedule, &train, &test).unwrap();
    let b = run_experiment(&config, &schedule, &train, &test).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.global_accuracy.to_bits(), y.global_accuracy.to_bits());
        assert_eq!(x.mean_train_loss.to_bits(), y.mean_train_loss.to_bits());
    }
}

#[test]
fn fidelity_is_reported_exactly_at_later_session_boundaries() {
    let config = small_config(Method::Dcfl);
    let (train, test, schedule) = small_problem(&config, 4, 2);
    let records = run_experiment(&config, &schedule, &train, &test).unwrap();
    // Two rounds per session: fidelity appears only at the first round of
    // session 1 (round index 2, 1-based round 3).
    assert!(records[0].synthetic_fidelity_kl.is_none());
    assert!(records[1].synthetic_fidelity_kl.is_none());
    assert!(records[2].synthetic_fidelity_kl.is_some());
    assert!(records[3].synthetic_fidelity_kl.is_none());
    assert_eq!(records[2].session, 1);
}

#[test]
fn method_trajectories_diverge_from_fedavg() {
    // Sanity check that the penalties actually change training.
    let (train, test, schedule) = small_problem(&small_config(Method::FedAvg), 4, 2);
    let fedavg = run_experiment(&small_config(Method::FedAvg), &schedule, &train, &test).unwrap();
    for method in [Method::FedProx, Method::FedAvgLwf] {
        let records = run_experiment(&small_config(method), &schedule, &train, &test).unwrap();
        let differs = records
            .iter()
            .zip(&fedavg)
            .any(|(a, b)| a.mean_train_loss.to_bits() != b.mean_train_loss.to_bits());
        assert!(differs, "{method:?} should not match fedavg bitwise");
    }
}

#[test]
fn mismatched_schedule_is_rejected() {
    let config = small_config(Method::FedAvg);
    let (train, test, schedule) = small_problem(&config, 4, 2);
    let mut wrong = config.clone();
    wrong.num_clients = 3;
    assert!(run_experiment(&wrong, &schedule, &train, &test).is_err());
    let mut wrong_rounds = config.clone();
    wrong_rounds.rounds = 8;
    assert!(run_experiment(&wrong_rounds, &schedule, &train, &test).is_err());
}
