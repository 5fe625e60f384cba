//! JSON run configuration shared by every CLI entrypoint.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::accuracy::AccuracyParams;
use crate::ddqn::{self, EvalSummary, TrainConfig, TrainOutcome, VideoEpisodes};
use crate::energy::{EnergyBreakdown, EnergyParams};
use crate::env::{EnvModel, SequenceSampler, VideoEnv};
use crate::error::{Error, Result};
use crate::qnet::{NetSpec, QNetwork};
use crate::reward::RewardConfig;
use crate::schedulers::BaselineGrid;
use crate::trace::EpisodeTrace;

/// Host time charged per learned decision for featurizing the state and the forward pass.
pub const DEFAULT_POLICY_OVERHEAD_S: f64 = 0.0012;

/// On-disk shape of a run configuration. Preset paths are relative to the
/// config file; omitted presets fall back to the shipped ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub hardware_preset: Option<PathBuf>,
    pub accuracy_model: Option<PathBuf>,
    pub sequence: SequenceSampler,
    pub reward: RewardConfig,
    pub grid: BaselineGrid,
    pub train: TrainConfig,
    pub policy_overhead_s: f64,
    /// Sequences used by `evaluate` and `sweep`.
    pub eval_seeds: Vec<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            hardware_preset: None,
            accuracy_model: None,
            sequence: SequenceSampler::default(),
            reward: RewardConfig::default(),
            grid: BaselineGrid::default(),
            train: TrainConfig::default(),
            policy_overhead_s: DEFAULT_POLICY_OVERHEAD_S,
            eval_seeds: (1000..1005).collect(),
        }
    }
}

/// A configuration with its presets loaded and validated.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub run: RunConfig,
    pub energy: EnergyParams,
    pub accuracy: AccuracyParams,
}

impl Experiment {
    pub fn from_run(run: RunConfig, base_dir: &Path) -> Result<Self> {
        let energy = match &run.hardware_preset {
            Some(p) => EnergyParams::load(base_dir.join(p))?,
            None => EnergyParams::imx219_pi3(),
        };
        let accuracy = match &run.accuracy_model {
            Some(p) => AccuracyParams::load(base_dir.join(p))?,
            None => AccuracyParams::default(),
        };
        let exp = Self { run, energy, accuracy };
        exp.validate()?;
        Ok(exp)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let run: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_run(run, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<()> {
        self.run.sequence.base.validate().map_err(into_config)?;
        if let Some((lo, hi)) = self.run.sequence.difficulty_range {
            if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
                return Err(Error::Config(format!("difficulty_range ({lo}, {hi}) must lie within [0, 1]")));
            }
        }
        self.run.train.validate()?;
        self.run.grid.enumerate().map_err(into_config)?;
        if !(self.run.policy_overhead_s >= 0.0 && self.run.policy_overhead_s.is_finite()) {
            return Err(Error::Config("policy_overhead_s must be >= 0".into()));
        }
        if self.run.eval_seeds.is_empty() {
            return Err(Error::Config("eval_seeds is empty".into()));
        }
        self.model(self.run.reward.lambda).map(|_| ())
    }

    pub fn model(&self, lambda: f64) -> Result<EnvModel> {
        let base = self.run.sequence.base.base_frame().map_err(into_config)?;
        EnvModel::new(
            self.energy.clone(),
            self.accuracy.clone(),
            self.run.reward.with_lambda(lambda),
            base,
        )
        .map_err(into_config)
    }

    /// Environment over the base sequence; callers reset it onto sampled sequences.
    pub fn env(&self, lambda: f64) -> Result<VideoEnv> {
        VideoEnv::new(self.model(lambda)?, self.run.sequence.base.clone()).map_err(into_config)
    }

    /// Per-decision energy charged to the learned policy.
    pub fn policy_overhead(&self) -> EnergyBreakdown {
        EnergyBreakdown::host_only(self.energy.host.active_power_mw * self.run.policy_overhead_s)
    }

    /// Network shape matching this experiment's state features.
    pub fn net_spec(&self) -> NetSpec {
        NetSpec::policy(self.run.sequence.base.feature_dim, self.run.train.trunk_dims.clone())
    }

    /// Trains a scheduler at `lambda`. `seed` drives both the network and the training sequences.
    pub fn train(&self, lambda: f64, seed: u64, episodes: Option<usize>) -> Result<TrainOutcome> {
        let mut cfg = self.run.train.clone();
        cfg.seed = seed;
        if let Some(n) = episodes {
            cfg.episodes = n;
        }
        let mut episodes = VideoEpisodes::new(self.env(lambda)?, self.run.sequence.clone(), seed);
        ddqn::train(&mut episodes, self.net_spec(), cfg)
    }

    /// Greedy rollouts of `net` over `seeds`, overhead included.
    pub fn evaluate(&self, net: &QNetwork, lambda: f64, seeds: &[u64]) -> Result<(Vec<EpisodeTrace>, EvalSummary)> {
        let mut env = self.env(lambda)?;
        ddqn::evaluate(net, &mut env, &self.run.sequence, seeds, self.policy_overhead(), &format!("rl:lambda={lambda}"))
    }
}

fn into_config(e: Error) -> Error {
    match e {
        Error::Domain(m) | Error::State(m) => Error::Config(m),
        other => other,
    }
}
