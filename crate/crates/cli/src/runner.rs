//! Dataset construction, experiment execution, and CSV emission.

use crate::config::{DatasetSpec, RunConfig};
use crate::CliError;
use dcfl_core::data::{
    downsample_avgpool, load_idx, make_blobs, partition_class_inc_iid, partition_class_inc_noniid,
    partition_domain_inc, train_test_split, ClientSchedule, Dataset, Scenario,
};
use dcfl_core::flcore::{run_experiment, Method, RoundRecord};
use dcfl_core::numkit::RngStream;
use std::path::{Path, PathBuf};

const DATA_KEY: u64 = 0xDA7A;
const SPLIT_KEY: u64 = 0x5917;
const PARTITION_KEY: u64 = 0x9A87;

/// Environment variable overriding the configured output directory.
pub const OUT_DIR_ENV: &str = "DCFL_OUT_DIR";

pub const ROUNDS_HEADER: &str = "round,session,method,global_accuracy,encountered_accuracy,\
mean_train_loss,synthetic_fidelity_kl,wall_time_s";
pub const SUMMARY_HEADER: &str = "method,scenario,clients,sessions,rounds,delta,seed,\
final_global_accuracy,final_encountered_accuracy,mean_global_accuracy,final_mean_train_loss";

/// Builds the train set, test set, and client schedule for a run.
pub fn build_problem(
    config: &RunConfig,
) -> Result<(Dataset, Dataset, ClientSchedule), CliError> {
    let master = RngStream::from_seed(config.experiment.seed);
    let (train, test) = match &config.dataset {
        DatasetSpec::Blobs {
            classes,
            domains,
            samples_per_class_per_domain,
            features,
            separation,
            domain_strength,
        } => {
            let full = make_blobs(
                *classes,
                *domains,
                *samples_per_class_per_domain,
                *features,
                *separation,
                *domain_strength,
                &master.split(DATA_KEY),
            )?;
            train_test_split(&full, config.test_fraction, &master.split(SPLIT_KEY))?
        }
        DatasetSpec::Idx {
            images,
            labels,
            test_images,
            test_labels,
            downsample_to,
        } => {
            let train_full = load_and_pool(images, labels, *downsample_to)?;
            match (test_images, test_labels) {
                (Some(ti), Some(tl)) => {
                    let test = load_and_pool(ti, tl, *downsample_to)?;
                    (train_full, test)
                }
                (None, None) => train_test_split(
                    &train_full,
                    config.test_fraction,
                    &master.split(SPLIT_KEY),
                )?,
                _ => {
                    return Err(CliError::Config(
                        "keys `idx_test_images`/`idx_test_labels` must be set together".into(),
                    ))
                }
            }
        }
    };

    let partition_rng = master.split(PARTITION_KEY);
    let experiment = &config.experiment;
    let schedule = match experiment.scenario {
        Scenario::ClassIncIid => partition_class_inc_iid(
            &train,
            experiment.num_clients,
            experiment.num_sessions,
            config.classes_per_session,
            &partition_rng,
        )?,
        Scenario::ClassIncNonIid => partition_class_inc_noniid(
            &train,
            experiment.num_clients,
            experiment.num_sessions,
            config.classes_per_session,
            &partition_rng,
        )?,
        Scenario::DomainInc => {
            partition_domain_inc(&train, experiment.num_clients, &partition_rng)?
        }
    }
    .with_rounds_per_session(experiment.rounds_per_session());
    Ok((train, test, schedule))
}

fn load_and_pool(
    images: &Path,
    labels: &Path,
    downsample_to: usize,
) -> Result<Dataset, CliError> {
    let ds = load_idx(images, labels)?;
    if downsample_to == 0 {
        return Ok(ds);
    }
    let side_in = (ds.d_feat() as f64).sqrt().round() as usize;
    if side_in * side_in != ds.d_feat() {
        return Err(CliError::Runtime(format!(
            "cannot pool non-square images with {} features",
            ds.d_feat()
        )));
    }
    Ok(downsample_avgpool(&ds, side_in, downsample_to)?)
}

/// Outputs of one `run` invocation.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub records: Vec<RoundRecord>,
    pub rounds_csv: PathBuf,
    pub summary_csv: PathBuf,
}

/// Runs the experiment and writes `rounds.csv` and `summary.csv` into the
/// output directory (config `out_dir`, overridable via `DCFL_OUT_DIR`).
pub fn cmd_run(config: &RunConfig) -> Result<RunArtifacts, CliError> {
    let (train, test, schedule) = build_problem(config)?;
    let records = run_experiment(&config.experiment, &schedule, &train, &test)?;

    let out_dir = resolve_out_dir(config);
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", out_dir.display())))?;
    let rounds_csv = out_dir.join("rounds.csv");
    let summary_csv = out_dir.join("summary.csv");
    write_file(&rounds_csv, &rounds_csv_string(config.experiment.method, &records))?;
    write_file(
        &summary_csv,
        &format!("{SUMMARY_HEADER}\n{}\n", summary_row(config, &records)),
    )?;
    Ok(RunArtifacts {
        records,
        rounds_csv,
        summary_csv,
    })
}

/// Sweep axis with its values, as parsed from the command line.
#[derive(Debug, Clone, PartialEq)]
pub enum SweepAxis {
    Clients(Vec<usize>),
    Delta(Vec<f64>),
}

impl SweepAxis {
    /// Parses `--axis`/`--values`; duplicates and empty lists are rejected.
    pub fn parse(axis: &str, values: &str) -> Result<SweepAxis, CliError> {
        let items: Vec<&str> = values
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .collect();
        if items.is_empty() {
            return Err(CliError::Config("sweep: no values given".into()));
        }
        match axis {
            "clients" => {
                let mut parsed = Vec::with_capacity(items.len());
                for item in items {
                    let v: usize = item.parse().map_err(|_| {
                        CliError::Config(format!("sweep value `{item}` is not a client count"))
                    })?;
                    if v == 0 {
                        return Err(CliError::Config("sweep: clients must be positive".into()));
                    }
                    if parsed.contains(&v) {
                        return Err(CliError::Config(format!("sweep: duplicate value {v}")));
                    }
                    parsed.push(v);
                }
                Ok(SweepAxis::Clients(parsed))
            }
            "delta" => {
                let mut parsed = Vec::with_capacity(items.len());
                for item in items {
                    let v: f64 = item.parse().map_err(|_| {
                        CliError::Config(format!("sweep value `{item}` is not a number"))
                    })?;
                    if v < 0.0 {
                        return Err(CliError::Config("sweep: delta must be >= 0".into()));
                    }
                    if parsed.contains(&v) {
                        return Err(CliError::Config(format!("sweep: duplicate value {v}")));
                    }
                    parsed.push(v);
                }
                Ok(SweepAxis::Delta(parsed))
            }
            other => Err(CliError::Config(format!(
                "sweep: axis must be `clients` or `delta`, got `{other}`"
            ))),
        }
    }

    fn name(&self) -> &'static str {
        match self {
            SweepAxis::Clients(_) => "clients",
            SweepAxis::Delta(_) => "delta",
        }
    }
}

/// Runs one experiment per sweep value and writes `sweep.csv` with one
/// summary row per value. Client sweeps re-derive the partition, so
/// per-client sample sizes follow the client count.
pub fn cmd_sweep(config: &RunConfig, axis: &SweepAxis) -> Result<PathBuf, CliError> {
    let mut rows = Vec::new();
    match axis {
        SweepAxis::Clients(values) => {
            for &clients in values {
                let mut varied = config.clone();
                varied.experiment.num_clients = clients;
                let (train, test, schedule) = build_problem(&varied)?;
                let records = run_experiment(&varied.experiment, &schedule, &train, &test)?;
                rows.push(format!("clients,{clients},{}", summary_row(&varied, &records)));
            }
        }
        SweepAxis::Delta(values) => {
            for &delta in values {
                let mut varied = config.clone();
                varied.experiment.replay_scale = delta;
                let (train, test, schedule) = build_problem(&varied)?;
                let records = run_experiment(&varied.experiment, &schedule, &train, &test)?;
                rows.push(format!("delta,{delta},{}", summary_row(&varied, &records)));
            }
        }
    }

    let out_dir = resolve_out_dir(config);
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", out_dir.display())))?;
    let path = out_dir.join(format!("sweep_{}.csv", axis.name()));
    let mut body = format!("axis,value,{SUMMARY_HEADER}\n");
    for row in rows {
        body.push_str(&row);
        body.push('\n');
    }
    write_file(&path, &body)?;
    Ok(path)
}

fn resolve_out_dir(config: &RunConfig) -> PathBuf {
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => config.out_dir.clone(),
    }
}

fn write_file(path: &Path, content: &str) -> Result<(), CliError> {
    std::fs::write(path, content)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

pub fn rounds_csv_string(method: Method, records: &[RoundRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(ROUNDS_HEADER);
    out.push('\n');
    for r in records {
        let fidelity = r
            .synthetic_fidelity_kl
            .map(|v| v.to_string())
            .unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.round,
            r.session,
            method.name(),
            r.global_accuracy,
            r.encountered_accuracy,
            r.mean_train_loss,
            fidelity,
            r.wall_time_s
        ));
    }
    out
}

fn summary_row(config: &RunConfig, records: &[RoundRecord]) -> String {
    let e = &config.experiment;
    let last = records.last().expect("at least one round");
    let mean_acc =
        records.iter().map(|r| r.global_accuracy).sum::<f64>() / records.len() as f64;
    format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        e.method.name(),
        e.scenario.name(),
        e.num_clients,
        e.num_sessions,
        e.rounds,
        e.replay_scale,
        e.seed,
        last.global_accuracy,
        last.encountered_accuracy,
        mean_acc,
        last.mean_train_loss
    )
}

/// Drops the trailing wall-time column from a rounds CSV, the only
/// legitimately nondeterministic field, for byte comparisons.
pub fn mask_wall_time(csv: &str) -> String {
    csv.lines()
        .map(|line| match line.rfind(',') {
            Some(pos) => &line[..pos],
            None => line,
        })
        .map(|line| format!("{line}\n"))
        .collect()
}
