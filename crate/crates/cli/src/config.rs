//! Key-value run configuration: one `key = value` per line, `#` comments,
//! every unset key falling back to a documented default.

use crate::CliError;
use dcfl_core::data::Scenario;
use dcfl_core::flcore::{ExperimentConfig, Method};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Where the examples come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    Blobs {
        classes: usize,
        domains: usize,
        /// Per (class, domain), before the train/test split.
        samples_per_class_per_domain: usize,
        features: usize,
        separation: f64,
        domain_strength: f64,
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
        /// Optional held-out pair; when absent the training pair is split.
        test_images: Option<PathBuf>,
        test_labels: Option<PathBuf>,
        /// Average-pool target side; 0 disables pooling.
        downsample_to: usize,
    },
}

/// A parsed and validated run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: ExperimentConfig,
    pub classes_per_session: usize,
    pub test_fraction: f64,
    pub dataset: DatasetSpec,
    pub out_dir: PathBuf,
}

pub fn parse_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<RunConfig, CliError> {
    let mut pairs: BTreeMap<&str, &str> = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Config(format!("line {}: expected `key = value`", lineno + 1))
        })?;
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() {
            return Err(CliError::Config(format!("line {}: empty key", lineno + 1)));
        }
        if pairs.insert(key, value).is_some() {
            return Err(CliError::Config(format!("duplicate key `{key}`")));
        }
    }

    let known = [
        "method",
        "scenario",
        "clients",
        "sessions",
        "rounds",
        "classes_per_session",
        "target_epochs",
        "diffusion_epochs",
        "batch_size",
        "target_lr",
        "diffusion_lr",
        "delta",
        "diffusion_steps",
        "beta_start",
        "beta_end",
        "mu_prox",
        "lambda_ewc",
        "lambda_lwf",
        "replay_every_round",
        "seed",
        "dataset",
        "blob_classes",
        "blob_domains",
        "blob_samples",
        "blob_features",
        "blob_separation",
        "blob_domain_strength",
        "test_fraction",
        "idx_images",
        "idx_labels",
        "idx_test_images",
        "idx_test_labels",
        "downsample_to",
        "out_dir",
    ];
    for key in pairs.keys() {
        if !known.contains(key) {
            return Err(CliError::Config(format!("unknown key `{key}`")));
        }
    }

    let method = match pairs.get("method").copied().unwrap_or("dcfl") {
        "dcfl" => Method::Dcfl,
        "fedavg" => Method::FedAvg,
        "fedprox" => Method::FedProx,
        "fedavg_ewc" => Method::FedAvgEwc,
        "fedavg_lwf" => Method::FedAvgLwf,
        other => {
            return Err(CliError::Config(format!(
                "key `method`: unknown method `{other}`"
            )))
        }
    };
    let scenario = match pairs.get("scenario").copied().unwrap_or("class_inc_iid") {
        "class_inc_iid" => Scenario::ClassIncIid,
        "class_inc_noniid" => Scenario::ClassIncNonIid,
        "domain_inc" => Scenario::DomainInc,
        other => {
            return Err(CliError::Config(format!(
                "key `scenario`: unknown scenario `{other}`"
            )))
        }
    };

    let mut experiment = ExperimentConfig::new(method, scenario);
    experiment.num_clients = parse_num(&pairs, "clients", experiment.num_clients)?;
    experiment.num_sessions = parse_num(&pairs, "sessions", experiment.num_sessions)?;
    experiment.rounds = parse_num(&pairs, "rounds", experiment.rounds)?;
    experiment.target_epochs = parse_num(&pairs, "target_epochs", experiment.target_epochs)?;
    experiment.diffusion_epochs =
        parse_num(&pairs, "diffusion_epochs", experiment.diffusion_epochs)?;
    experiment.batch_size = parse_num(&pairs, "batch_size", experiment.batch_size)?;
    experiment.target_lr = parse_float(&pairs, "target_lr", experiment.target_lr)?;
    experiment.diffusion_lr = parse_float(&pairs, "diffusion_lr", experiment.diffusion_lr)?;
    experiment.replay_scale = parse_float(&pairs, "delta", experiment.replay_scale)?;
    experiment.diffusion_steps =
        parse_num(&pairs, "diffusion_steps", experiment.diffusion_steps)?;
    experiment.beta_start = parse_float(&pairs, "beta_start", experiment.beta_start)?;
    experiment.beta_end = parse_float(&pairs, "beta_end", experiment.beta_end)?;
    experiment.mu_prox = parse_float(&pairs, "mu_prox", experiment.mu_prox)?;
    experiment.lambda_ewc = parse_float(&pairs, "lambda_ewc", experiment.lambda_ewc)?;
    experiment.lambda_lwf = parse_float(&pairs, "lambda_lwf", experiment.lambda_lwf)?;
    experiment.replay_every_round = parse_bool(&pairs, "replay_every_round", false)?;
    experiment.seed = parse_num(&pairs, "seed", experiment.seed)?;

    let classes_per_session = parse_num(&pairs, "classes_per_session", 2usize)?;
    let test_fraction = parse_float(&pairs, "test_fraction", 0.2)?;

    let dataset = match pairs.get("dataset").copied().unwrap_or("blobs") {
        "blobs" => DatasetSpec::Blobs {
            classes: parse_num(&pairs, "blob_classes", 10usize)?,
            domains: parse_num(&pairs, "blob_domains", 1usize)?,
            samples_per_class_per_domain: parse_num(&pairs, "blob_samples", 750usize)?,
            features: parse_num(&pairs, "blob_features", 2usize)?,
            separation: parse_float(&pairs, "blob_separation", 4.0)?,
            domain_strength: parse_float(&pairs, "blob_domain_strength", 1.0)?,
        },
        "idx" => {
            let images = pairs.get("idx_images").copied().ok_or_else(|| {
                CliError::Config("key `idx_images` is required for dataset = idx".into())
            })?;
            let labels = pairs.get("idx_labels").copied().ok_or_else(|| {
                CliError::Config("key `idx_labels` is required for dataset = idx".into())
            })?;
            DatasetSpec::Idx {
                images: PathBuf::from(images),
                labels: PathBuf::from(labels),
                test_images: pairs.get("idx_test_images").map(PathBuf::from),
                test_labels: pairs.get("idx_test_labels").map(PathBuf::from),
                downsample_to: parse_num(&pairs, "downsample_to", 0usize)?,
            }
        }
        other => {
            return Err(CliError::Config(format!(
                "key `dataset`: unknown dataset `{other}`"
            )))
        }
    };

    let out_dir = PathBuf::from(pairs.get("out_dir").copied().unwrap_or("out"));
    let config = RunConfig {
        experiment,
        classes_per_session,
        test_fraction,
        dataset,
        out_dir,
    };
    validate(&config)?;
    Ok(config)
}

fn validate(config: &RunConfig) -> Result<(), CliError> {
    let e = &config.experiment;
    if e.rounds % e.num_sessions != 0 {
        return Err(CliError::Config(format!(
            "key `rounds`: {} not divisible by {} sessions",
            e.rounds, e.num_sessions
        )));
    }
    e.validate()
        .map_err(|err| CliError::Config(err.to_string()))?;
    if !(config.test_fraction > 0.0 && config.test_fraction < 1.0) {
        return Err(CliError::Config(format!(
            "key `test_fraction`: {} outside (0, 1)",
            config.test_fraction
        )));
    }
    if config.classes_per_session == 0 {
        return Err(CliError::Config(
            "key `classes_per_session`: must be positive".into(),
        ));
    }
    match (&config.dataset, e.scenario) {
        (DatasetSpec::Blobs { domains, .. }, Scenario::DomainInc) => {
            if *domains < 2 {
                return Err(CliError::Config(
                    "key `blob_domains`: domain_inc needs at least 2 domains".into(),
                ));
            }
            if *domains != e.num_sessions {
                return Err(CliError::Config(format!(
                    "key `sessions`: domain_inc needs sessions ({}) equal to blob_domains ({domains})",
                    e.num_sessions
                )));
            }
        }
        (DatasetSpec::Idx { .. }, Scenario::DomainInc) => {
            return Err(CliError::Config(
                "key `scenario`: idx datasets are single-domain; domain_inc needs blobs".into(),
            ));
        }
        (DatasetSpec::Blobs { classes, .. }, Scenario::ClassIncIid | Scenario::ClassIncNonIid) => {
            if e.num_sessions * config.classes_per_session > *classes {
                return Err(CliError::Config(format!(
                    "key `classes_per_session`: {} sessions x {} classes exceed blob_classes {classes}",
                    e.num_sessions, config.classes_per_session
                )));
            }
        }
        _ => {}
    }
    Ok(())
}

fn parse_num<T: std::str::FromStr>(
    pairs: &BTreeMap<&str, &str>,
    key: &str,
    default: T,
) -> Result<T, CliError> {
    match pairs.get(key) {
        None => Ok(default),
        Some(v) => v.parse().map_err(|_| {
            CliError::Config(format!("key `{key}`: `{v}` is not a valid integer"))
        }),
    }
}

fn parse_float(pairs: &BTreeMap<&str, &str>, key: &str, default: f64) -> Result<f64, CliError> {
    match pairs.get(key) {
        None => Ok(default),
        Some(v) => v
            .parse()
            .map_err(|_| CliError::Config(format!("key `{key}`: `{v}` is not a valid number"))),
    }
}

fn parse_bool(pairs: &BTreeMap<&str, &str>, key: &str, default: bool) -> Result<bool, CliError> {
    match pairs.get(key).copied() {
        None => Ok(default),
        Some("true") => Ok(true),
        Some("false") => Ok(false),
        Some(v) => Err(CliError::Config(format!(
            "key `{key}`: `{v}` is not `true` or `false`"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_takes_all_defaults() {
        let config = parse_config_str("").unwrap();
        assert_eq!(config.experiment.target_epochs, 5);
        assert_eq!(config.experiment.batch_size, 32);
        assert_eq!(config.experiment.target_lr, 1e-4);
        assert_eq!(config.experiment.diffusion_lr, 1e-4);
        assert_eq!(config.experiment.diffusion_epochs, 100);
        assert_eq!(config.experiment.method, Method::Dcfl);
        assert_eq!(config.experiment.scenario, Scenario::ClassIncIid);
        assert_eq!(config.out_dir, PathBuf::from("out"));
    }

    #[test]
    fn indivisible_rounds_name_the_key() {
        let err = parse_config_str("rounds = 100\nsessions = 7\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("rounds") && msg.contains("divisible"), "{msg}");
    }

    #[test]
    fn negative_delta_is_a_config_error() {
        assert!(parse_config_str("delta = -1\n").is_err());
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = parse_config_str("not_a_key = 3\n").unwrap_err();
        assert!(err.to_string().contains("not_a_key"));
    }

    #[test]
    fn duplicate_keys_are_rejected() {
        assert!(parse_config_str("seed = 1\nseed = 2\n").is_err());
    }

    #[test]
    fn comments_and_blanks_are_ignored() {
        let config = parse_config_str("# a comment\n\nseed = 99\n").unwrap();
        assert_eq!(config.experiment.seed, 99);
    }

    #[test]
    fn type_errors_name_the_key() {
        let err = parse_config_str("clients = lots\n").unwrap_err();
        assert!(err.to_string().contains("clients"));
        let err = parse_config_str("target_lr = fast\n").unwrap_err();
        assert!(err.to_string().contains("target_lr"));
    }

    #[test]
    fn domain_inc_session_constraint() {
        let text = "scenario = domain_inc\nblob_domains = 4\nsessions = 5\nrounds = 100\n";
        assert!(parse_config_str(text).is_err());
        let ok = "scenario = domain_inc\nblob_domains = 4\nsessions = 4\nrounds = 80\n";
        assert!(parse_config_str(ok).is_ok());
    }

    #[test]
    fn idx_requires_paths() {
        assert!(parse_config_str("dataset = idx\n").is_err());
        let ok = parse_config_str(
            "dataset = idx\nidx_images = a.idx\nidx_labels = b.idx\n",
        )
        .unwrap();
        match ok.dataset {
            DatasetSpec::Idx { images, .. } => assert_eq!(images, PathBuf::from("a.idx")),
            _ => panic!("expected idx dataset"),
        }
    }
}
