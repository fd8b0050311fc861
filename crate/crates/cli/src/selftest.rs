//! Built-in verification suites: the KL mixing bound, every analytic
//! gradient against finite differences, the forward-process law, and the
//! partition invariants.

use dcfl_core::data::{
    partition_class_inc_iid, partition_class_inc_noniid, partition_domain_inc, verify_schedule,
    Dataset, Example,
};
use dcfl_core::diffusion::{
    diffusion_loss_grad_with_draws, forward_sample, make_linear_schedule,
};
use dcfl_core::flcore::{
    ewc_penalty_grad, ewc_penalty_loss, lwf_penalty_grad, lwf_penalty_loss, prox_penalty_grad,
    prox_penalty_loss, theorem1_check,
};
use dcfl_core::models::{mlp_loss_grad, DenoiserParams, MlpParams};
use dcfl_core::numkit::{finite_diff_grad, grad_relative_error, RngStream};

const GRAD_POINTS: usize = 20;
const GRAD_TOL: f64 = 1e-4;
const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Runs all verification suites. `corrupt` injects a deliberate error into
/// the named suite so the failure path can be exercised end to end.
pub fn run_selftest(corrupt: Option<&str>) -> Vec<SuiteResult> {
    vec![
        theorem_suite(),
        classifier_gradients(corrupt == Some("gradients-classifier")),
        diffusion_gradients(corrupt == Some("gradients-diffusion")),
        penalty_gradients(corrupt == Some("gradients-penalties")),
        forward_marginal_suite(),
        partition_suite(),
    ]
}

fn theorem_suite() -> SuiteResult {
    let mut rng = RngStream::from_seed(0x7E0);
    let report = theorem1_check(1000, 10, &mut rng);
    SuiteResult {
        name: "theorem1-bound",
        passed: report.violations == 0,
        detail: format!(
            "{} trials, {} violations, max slack {:.3e}",
            report.trials, report.violations, report.max_slack
        ),
    }
}

fn classifier_gradients(corrupt: bool) -> SuiteResult {
    let mut rng = RngStream::from_seed(0x7E1);
    let mut worst = 0.0_f64;
    for point in 0..GRAD_POINTS {
        let params = MlpParams::init(3, 6, 4, &mut rng);
        let batch: Vec<Example> = (0..4)
            .map(|i| Example {
                features: (0..3).map(|_| rng.next_normal()).collect(),
                label: (i + point) % 4,
                domain: 0,
            })
            .collect();
        let (_, mut analytic) = mlp_loss_grad(&params, &batch).unwrap();
        if corrupt {
            analytic[0] += 1e-2;
        }
        let numeric = finite_diff_grad(
            |p| {
                let probe = params.unflatten_like(p).unwrap();
                mlp_loss_grad(&probe, &batch).unwrap().0
            },
            &params.flatten(),
            FD_STEP,
        )
        .unwrap();
        worst = worst.max(grad_relative_error(&analytic, &numeric));
    }
    SuiteResult {
        name: "gradients-classifier",
        passed: worst < GRAD_TOL,
        detail: format!("{GRAD_POINTS} points, worst relative error {worst:.3e}"),
    }
}

fn diffusion_gradients(corrupt: bool) -> SuiteResult {
    let mut rng = RngStream::from_seed(0x7E2);
    let schedule = make_linear_schedule(10, 0.01, 0.1).unwrap();
    let mut worst = 0.0_f64;
    for _ in 0..GRAD_POINTS {
        let params = DenoiserParams::init(2, 6, 4, 4, 3, 2, &mut rng);
        let batch: Vec<Example> = (0..3)
            .map(|i| Example {
                features: vec![rng.next_normal(), rng.next_normal()],
                label: i % 3,
                domain: i % 2,
            })
            .collect();
        let draws: Vec<(usize, Vec<f64>)> = batch
            .iter()
            .map(|_| {
                (
                    1 + rng.next_index(10),
                    vec![rng.next_normal(), rng.next_normal()],
                )
            })
            .collect();
        let (_, mut analytic) =
            diffusion_loss_grad_with_draws(&params, &batch, &schedule, &draws).unwrap();
        if corrupt {
            analytic[0] += 1e-2;
        }
        let numeric = finite_diff_grad(
            |p| {
                let probe = params.unflatten_like(p).unwrap();
                diffusion_loss_grad_with_draws(&probe, &batch, &schedule, &draws)
                    .unwrap()
                    .0
            },
            &params.flatten(),
            FD_STEP,
        )
        .unwrap();
        worst = worst.max(grad_relative_error(&analytic, &numeric));
    }
    SuiteResult {
        name: "gradients-diffusion",
        passed: worst < GRAD_TOL,
        detail: format!("{GRAD_POINTS} points, worst relative error {worst:.3e}"),
    }
}

fn penalty_gradients(corrupt: bool) -> SuiteResult {
    let mut rng = RngStream::from_seed(0x7E3);
    let mut worst = 0.0_f64;
    for point in 0..GRAD_POINTS {
        // Proximal term.
        let dim = 8;
        let theta: Vec<f64> = (0..dim).map(|_| rng.next_normal()).collect();
        let global: Vec<f64> = (0..dim).map(|_| rng.next_normal()).collect();
        let analytic = prox_penalty_grad(&theta, &global, 1.0);
        let numeric =
            finite_diff_grad(|t| prox_penalty_loss(t, &global, 1.0), &theta, FD_STEP).unwrap();
        worst = worst.max(grad_relative_error(&analytic, &numeric));

        // Fisher-weighted quadratic.
        let anchor: Vec<f64> = (0..dim).map(|_| rng.next_normal()).collect();
        let fisher: Vec<f64> = (0..dim).map(|_| rng.next_f64()).collect();
        let analytic = ewc_penalty_grad(&theta, &anchor, &fisher, 400.0);
        let numeric = finite_diff_grad(
            |t| ewc_penalty_loss(t, &anchor, &fisher, 400.0),
            &theta,
            FD_STEP,
        )
        .unwrap();
        worst = worst.max(grad_relative_error(&analytic, &numeric));

        // Distillation term.
        let student = MlpParams::init(2, 5, 4, &mut rng);
        let teacher = MlpParams::init(2, 5, 4, &mut rng);
        let batch: Vec<Example> = (0..3)
            .map(|i| Example {
                features: vec![rng.next_normal(), rng.next_normal()],
                label: (i + point) % 4,
                domain: 0,
            })
            .collect();
        let mut analytic = lwf_penalty_grad(&student, &teacher, &batch, 1.0).unwrap();
        if corrupt {
            analytic[0] += 1e-2;
        }
        let numeric = finite_diff_grad(
            |p| {
                let probe = student.unflatten_like(p).unwrap();
                lwf_penalty_loss(&probe, &teacher, &batch, 1.0).unwrap()
            },
            &student.flatten(),
            FD_STEP,
        )
        .unwrap();
        worst = worst.max(grad_relative_error(&analytic, &numeric));
    }
    SuiteResult {
        name: "gradients-penalties",
        passed: worst < GRAD_TOL,
        detail: format!("{GRAD_POINTS} points x 3 penalties, worst relative error {worst:.3e}"),
    }
}

fn forward_marginal_suite() -> SuiteResult {
    let schedule = make_linear_schedule(200, 1e-4, 0.02).unwrap();
    let mut rng = RngStream::from_seed(0x7E4);
    let x0 = [2.0, -3.0];
    let draws = 10_000;
    let mut worst: f64 = 0.0;
    for n in [1usize, 50, 200] {
        let mut sum = [0.0; 2];
        let mut sum_sq = [0.0; 2];
        for _ in 0..draws {
            let eps = [rng.next_normal(), rng.next_normal()];
            let xn = forward_sample(&x0, n, &eps, &schedule).unwrap();
            for j in 0..2 {
                sum[j] += xn[j];
                sum_sq[j] += xn[j] * xn[j];
            }
        }
        let expected_var = 1.0 - schedule.alpha_bar(n);
        for j in 0..2 {
            let mean = sum[j] / draws as f64;
            let var = sum_sq[j] / draws as f64 - mean * mean;
            let expected_mean = schedule.alpha_bar(n).sqrt() * x0[j];
            worst = worst.max((mean - expected_mean).abs() / expected_mean.abs());
            worst = worst.max((var - expected_var).abs() / expected_var.max(1e-12));
        }
    }

    // Brute-force equivalence of the stepwise kernel on a small schedule.
    let small = make_linear_schedule(5, 0.05, 0.3).unwrap();
    let x0 = 2.5;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..draws {
        let mut x = x0;
        for n in 1..=5 {
            x = (1.0 - small.beta(n)).sqrt() * x + small.beta(n).sqrt() * rng.next_normal();
        }
        sum += x;
        sum_sq += x * x;
    }
    let mean = sum / draws as f64;
    let var = sum_sq / draws as f64 - mean * mean;
    let expected_mean = small.alpha_bar(5).sqrt() * x0;
    let expected_var = 1.0 - small.alpha_bar(5);
    worst = worst.max((mean - expected_mean).abs() / expected_mean.abs());
    worst = worst.max((var - expected_var).abs() / expected_var);

    SuiteResult {
        name: "forward-marginal",
        passed: worst < 0.05,
        detail: format!("{draws} draws per step, worst moment deviation {:.1}%", worst * 100.0),
    }
}

fn partition_suite() -> SuiteResult {
    let mut rng = RngStream::from_seed(0x7E5);
    let configs = 100;
    match partition_property_sweep(configs, &mut rng) {
        Ok(()) => SuiteResult {
            name: "partition-properties",
            passed: true,
            detail: format!("{configs} random configurations per scenario"),
        },
        Err(detail) => SuiteResult {
            name: "partition-properties",
            passed: false,
            detail,
        },
    }
}

/// Random (K, S, cps, C) partition configurations per scenario, checked
/// against every schedule invariant plus determinism. Shared with the
/// acceptance suite, which runs it at a higher count.
pub fn partition_property_sweep(configs: usize, rng: &mut RngStream) -> Result<(), String> {
    for trial in 0..configs {
        // Class-incremental scenarios.
        let classes = 2 + rng.next_index(11); // 2..=12
        let cps = 1 + rng.next_index(3.min(classes - 1)); // 1..=3
        let sessions = 1 + rng.next_index(classes / cps); // S·cps <= C
        let clients = 1 + rng.next_index(8);
        let per_class = clients * sessions * (1 + rng.next_index(4)) + rng.next_index(5);
        let dataset = quick_dataset(classes, 1, per_class);
        let seed = RngStream::from_seed(0xBEEF + trial as u64);

        for noniid in [false, true] {
            let build = |rng: &RngStream| {
                if noniid {
                    partition_class_inc_noniid(&dataset, clients, sessions, cps, rng)
                } else {
                    partition_class_inc_iid(&dataset, clients, sessions, cps, rng)
                }
            };
            let schedule = build(&seed).map_err(|e| {
                format!("trial {trial} (noniid={noniid}): build failed: {e}")
            })?;
            verify_schedule(&dataset, &schedule)
                .map_err(|e| format!("trial {trial} (noniid={noniid}): {e}"))?;
            let again = build(&seed).unwrap();
            if again != schedule {
                return Err(format!("trial {trial} (noniid={noniid}): not deterministic"));
            }
        }

        // Domain-incremental scenario.
        let domains = 2 + rng.next_index(3); // 2..=4
        let classes = 2 + rng.next_index(4);
        let clients = 1 + rng.next_index(5);
        let per_stratum = clients * (1 + rng.next_index(3)) + rng.next_index(3);
        let dataset = quick_dataset(classes, domains, per_stratum);
        let schedule = partition_domain_inc(&dataset, clients, &seed)
            .map_err(|e| format!("trial {trial} (domain): build failed: {e}"))?;
        verify_schedule(&dataset, &schedule).map_err(|e| format!("trial {trial} (domain): {e}"))?;
        let again = partition_domain_inc(&dataset, clients, &seed).unwrap();
        if again != schedule {
            return Err(format!("trial {trial} (domain): not deterministic"));
        }
    }
    Ok(())
}

fn quick_dataset(classes: usize, domains: usize, per_class_domain: usize) -> Dataset {
    let mut examples = Vec::with_capacity(classes * domains * per_class_domain);
    for d in 0..domains {
        for c in 0..classes {
            for i in 0..per_class_domain {
                examples.push(Example {
                    features: vec![c as f64, i as f64],
                    label: c,
                    domain: d,
                });
            }
        }
    }
    Dataset::new(examples, classes, domains, 2).unwrap()
}
