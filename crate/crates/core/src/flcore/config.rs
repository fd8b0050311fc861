//! Experiment configuration shared by the engine and the CLI.

use super::FlError;
use crate::data::Scenario;

/// Training method under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Federated averaging with local diffusion-model generative replay.
    Dcfl,
    FedAvg,
    FedProx,
    FedAvgEwc,
    FedAvgLwf,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Dcfl => "dcfl",
            Method::FedAvg => "fedavg",
            Method::FedProx => "fedprox",
            Method::FedAvgEwc => "fedavg_ewc",
            Method::FedAvgLwf => "fedavg_lwf",
        }
    }
}

/// All engine-level knobs. Defaults: 5 local target epochs, 100 diffusion
/// epochs, batch size 32, Adam at 1e-4 for both models, replay scale 1,
/// 200 diffusion steps on a linear 1e-4..0.02 beta range, mu = 1,
/// lambda_ewc = 400, lambda_lwf = 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub method: Method,
    pub scenario: Scenario,
    /// K: clients, full participation every round.
    pub num_clients: usize,
    /// S: sessions; data changes only at session boundaries.
    pub num_sessions: usize,
    /// T: total communication rounds; must be divisible by S.
    pub rounds: usize,
    pub target_epochs: usize,
    pub diffusion_epochs: usize,
    pub batch_size: usize,
    pub target_lr: f64,
    pub diffusion_lr: f64,
    /// δ: synthetic-to-real ratio when forming a client's training set.
    pub replay_scale: f64,
    /// N: diffusion steps.
    pub diffusion_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub mu_prox: f64,
    pub lambda_ewc: f64,
    pub lambda_lwf: f64,
    pub classifier_hidden: usize,
    pub denoiser_hidden: usize,
    pub time_embed_dim: usize,
    pub cond_embed_dim: usize,
    /// Regenerate replay and retrain the diffusion model every round
    /// instead of once per session.
    pub replay_every_round: bool,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn new(method: Method, scenario: Scenario) -> Self {
        ExperimentConfig {
            method,
            scenario,
            num_clients: 10,
            num_sessions: 5,
            rounds: 100,
            target_epochs: 5,
            diffusion_epochs: 100,
            batch_size: 32,
            target_lr: 1e-4,
            diffusion_lr: 1e-4,
            replay_scale: 1.0,
            diffusion_steps: 200,
            beta_start: 1e-4,
            beta_end: 0.02,
            mu_prox: 1.0,
            lambda_ewc: 400.0,
            lambda_lwf: 1.0,
            classifier_hidden: 64,
            denoiser_hidden: 128,
            time_embed_dim: 16,
            cond_embed_dim: 16,
            replay_every_round: false,
            seed: 17,
        }
    }

    pub fn rounds_per_session(&self) -> usize {
        self.rounds / self.num_sessions
    }

    pub fn validate(&self) -> Result<(), FlError> {
        if self.num_clients == 0 || self.num_sessions == 0 || self.rounds == 0 {
            return Err(FlError::Domain(
                "config: clients, sessions and rounds must be positive".into(),
            ));
        }
        if self.rounds % self.num_sessions != 0 {
            return Err(FlError::Domain(format!(
                "config: rounds {} not divisible by sessions {}",
                self.rounds, self.num_sessions
            )));
        }
        if self.replay_scale < 0.0 {
            return Err(FlError::Domain(format!(
                "config: replay scale delta must be >= 0, got {}",
                self.replay_scale
            )));
        }
        if !(self.target_lr > 0.0) || !(self.diffusion_lr > 0.0) {
            return Err(FlError::Domain("config: learning rates must be > 0".into()));
        }
        if self.batch_size == 0 {
            return Err(FlError::Domain("config: batch_size must be positive".into()));
        }
        if self.diffusion_steps == 0 {
            return Err(FlError::Domain("config: diffusion_steps must be positive".into()));
        }
        if !(self.beta_start > 0.0 && self.beta_start <= self.beta_end && self.beta_end < 1.0) {
            return Err(FlError::Domain(format!(
                "config: invalid beta range ({}, {})",
                self.beta_start, self.beta_end
            )));
        }
        if self.classifier_hidden == 0 || self.denoiser_hidden == 0 {
            return Err(FlError::Domain("config: hidden widths must be positive".into()));
        }
        if self.time_embed_dim == 0 || self.time_embed_dim % 2 != 0 {
            return Err(FlError::Domain(
                "config: time_embed_dim must be positive and even".into(),
            ));
        }
        if self.cond_embed_dim == 0 {
            return Err(FlError::Domain("config: cond_embed_dim must be positive".into()));
        }
        if self.mu_prox < 0.0 || self.lambda_ewc < 0.0 || self.lambda_lwf < 0.0 {
            return Err(FlError::Domain("config: penalty weights must be >= 0".into()));
        }
        Ok(())
    }

    /// One line per field in a fixed order; the digest input and the
    /// checkpoint's idea of "same configuration".
    pub fn canonical_string(&self) -> String {
        format!(
            "method={}\nscenario={}\nclients={}\nsessions={}\nrounds={}\ntarget_epochs={}\n\
             diffusion_epochs={}\nbatch_size={}\ntarget_lr={}\ndiffusion_lr={}\ndelta={}\n\
             diffusion_steps={}\nbeta_start={}\nbeta_end={}\nmu_prox={}\nlambda_ewc={}\n\
             lambda_lwf={}\nclassifier_hidden={}\ndenoiser_hidden={}\ntime_embed_dim={}\n\
             cond_embed_dim={}\nreplay_every_round={}\nseed={}\n",
            self.method.name(),
            self.scenario.name(),
            self.num_clients,
            self.num_sessions,
            self.rounds,
            self.target_epochs,
            self.diffusion_epochs,
            self.batch_size,
            self.target_lr,
            self.diffusion_lr,
            self.replay_scale,
            self.diffusion_steps,
            self.beta_start,
            self.beta_end,
            self.mu_prox,
            self.lambda_ewc,
            self.lambda_lwf,
            self.classifier_hidden,
            self.denoiser_hidden,
            self.time_embed_dim,
            self.cond_embed_dim,
            self.replay_every_round,
            self.seed,
        )
    }

    /// FNV-1a over the canonical string.
    pub fn digest(&self) -> u64 {
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for byte in self.canonical_string().bytes() {
            hash ^= byte as u64;
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
        hash
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_mirror_the_documented_values() {
        let c = ExperimentConfig::new(Method::Dcfl, Scenario::ClassIncIid);
        c.validate().unwrap();
        assert_eq!(c.target_epochs, 5);
        assert_eq!(c.diffusion_epochs, 100);
        assert_eq!(c.batch_size, 32);
        assert_eq!(c.target_lr, 1e-4);
        assert_eq!(c.diffusion_lr, 1e-4);
        assert_eq!(c.diffusion_steps, 200);
        assert_eq!(c.rounds_per_session(), 20);
    }

    #[test]
    fn indivisible_rounds_are_rejected() {
        let mut c = ExperimentConfig::new(Method::FedAvg, Scenario::ClassIncIid);
        c.rounds = 100;
        c.num_sessions = 7;
        assert!(c.validate().is_err());
    }

    #[test]
    fn negative_delta_is_rejected() {
        let mut c = ExperimentConfig::new(Method::Dcfl, Scenario::ClassIncIid);
        c.replay_scale = -1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn digest_distinguishes_configs() {
        let a = ExperimentConfig::new(Method::Dcfl, Scenario::ClassIncIid);
        let mut b = a.clone();
        assert_eq!(a.digest(), b.digest());
        b.seed = 18;
        assert_ne!(a.digest(), b.digest());
    }
}
