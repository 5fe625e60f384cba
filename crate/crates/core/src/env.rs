//! Synthetic video-analytics environment.
//!
//! An episode is one video sequence. Frame 0 is always processed as a key
//! frame during [`VideoEnv::reset`]; every later frame is decided by a policy
//! through [`VideoEnv::step`]. The video content (motion, difficulty and
//! feature noise) is generated up front from the sequence seed, so two
//! policies rolled out on the same seed see exactly the same video.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::accuracy::{accuracy_model, AccuracyParams, FrameTruth};
use crate::action::Action;
use crate::energy::{EnergyBreakdown, EnergyParams, FrameSpec};
use crate::error::{Error, Result};
use crate::reward::{reward, RewardConfig};
use crate::trace::{EpisodeTrace, FrameRecord, TraceMeta};

pub const HISTORY_WINDOW: usize = 10;
/// History bits plus the distance-from-key scalar.
pub const HISTORY_DIM: usize = 2 * HISTORY_WINDOW + 1;
/// Distance-from-key count mapped to one half by the network encoding `d / (d + scale)`.
pub const DISTANCE_SCALE: f64 = 10.0;

const FEATURE_MAP_SEED: u64 = 0x0ada_7e5f_ea70_2e5d;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SequenceConfig {
    pub length_frames: usize,
    pub base_width_px: u32,
    pub base_height_px: u32,
    /// Content difficulty of the whole sequence, in `[0, 1]`.
    pub difficulty: f64,
    /// Per-frame jitter (standard deviation) around `difficulty`.
    pub difficulty_jitter: f64,
    /// Standard deviation of one step of the motion random walk.
    pub motion_volatility: f64,
    /// Upper bound of the per-frame motion magnitude.
    pub max_motion: f64,
    /// Dimension of each feature proxy.
    pub feature_dim: usize,
    pub feature_noise: f64,
    pub rng_seed: u64,
}

impl Default for SequenceConfig {
    fn default() -> Self {
        Self {
            length_frames: 90,
            base_width_px: 1280,
            base_height_px: 720,
            difficulty: 0.5,
            difficulty_jitter: 0.05,
            motion_volatility: 0.75,
            max_motion: 6.0,
            feature_dim: 8,
            feature_noise: 0.05,
            rng_seed: 0,
        }
    }
}

impl SequenceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.length_frames == 0 {
            return Err(Error::Domain("sequence length must be at least one frame".into()));
        }
        FrameSpec::new(self.base_width_px, self.base_height_px)?;
        if !(0.0..=1.0).contains(&self.difficulty) {
            return Err(Error::Domain(format!(
                "difficulty must lie in [0, 1], got {}",
                self.difficulty
            )));
        }
        if !(self.motion_volatility >= 0.0 && self.max_motion > 0.0 && self.difficulty_jitter >= 0.0) {
            return Err(Error::Domain("motion parameters must be non-negative".into()));
        }
        if self.feature_dim == 0 || !(self.feature_noise >= 0.0) {
            return Err(Error::Domain("feature_dim must be positive and feature_noise >= 0".into()));
        }
        Ok(())
    }

    pub fn base_frame(&self) -> Result<FrameSpec> {
        FrameSpec::new(self.base_width_px, self.base_height_px)
    }
}

/// The last ten decisions (two bits each, oldest first) and the number of
/// frames processed since the last key frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistorySummary {
    window: [u8; HISTORY_WINDOW],
    pub distance_from_key: usize,
}

impl Default for HistorySummary {
    fn default() -> Self {
        Self {
            window: [0; HISTORY_WINDOW],
            distance_from_key: 0,
        }
    }
}

impl HistorySummary {
    /// Action indices, oldest first. Padding before the tenth decision reads as zeros.
    pub fn window(&self) -> &[u8; HISTORY_WINDOW] {
        &self.window
    }

    pub fn push(&mut self, action: Action) {
        self.window.rotate_left(1);
        self.window[HISTORY_WINDOW - 1] = action.index() as u8;
        if action.is_key() {
            self.distance_from_key = 0;
        } else {
            self.distance_from_key += 1;
        }
    }

    /// Twenty history bits followed by the scaled distance.
    pub fn encode(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(HISTORY_DIM);
        for &code in &self.window {
            out.push(f64::from((code >> 1) & 1));
            out.push(f64::from(code & 1));
        }
        let d = self.distance_from_key as f64;
        out.push(d / (d + DISTANCE_SCALE));
        out
    }
}

/// Observation for one frame: a proxy for the low-resolution feature of the
/// current frame, a proxy for its divergence from the key-frame feature, and
/// the decision history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameState {
    pub feature_proxy: Vec<f64>,
    pub feature_diff_proxy: Vec<f64>,
    pub history: HistorySummary,
}

impl FrameState {
    /// Input of the network trunk: both feature proxies concatenated.
    pub fn trunk_input(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.feature_proxy.len() * 2);
        v.extend_from_slice(&self.feature_proxy);
        v.extend_from_slice(&self.feature_diff_proxy);
        v
    }

    pub fn history_input(&self) -> Vec<f64> {
        self.history.encode()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub accuracy: f64,
    pub energy: EnergyBreakdown,
    pub reward: f64,
    pub next_state: FrameState,
    pub done: bool,
}

/// Everything about the world that is not the video itself.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvModel {
    pub energy: EnergyParams,
    pub accuracy: AccuracyParams,
    pub reward: RewardConfig,
}

impl EnvModel {
    /// Validates the parts and resolves the reward's energy normalizer
    /// against a full-resolution key frame of `base`.
    pub fn new(energy: EnergyParams, accuracy: AccuracyParams, reward: RewardConfig, base: FrameSpec) -> Result<Self> {
        energy.validate()?;
        accuracy.validate()?;
        reward.validate()?;
        let mut reward = reward;
        if reward.energy_normalizer.is_none() {
            reward.energy_normalizer = Some(energy.frame_energy(base, true)?.total_mj);
        }
        Ok(Self {
            energy,
            accuracy,
            reward,
        })
    }

    /// Shipped IMX219/Raspberry Pi preset with the default accuracy model and a 1280x720 base.
    pub fn default_with_lambda(lambda: f64) -> Self {
        let base = FrameSpec::new(1280, 720).expect("valid");
        Self::new(
            EnergyParams::imx219_pi3(),
            AccuracyParams::default(),
            RewardConfig::default().with_lambda(lambda),
            base,
        )
        .expect("shipped presets are valid")
    }
}

/// Fixed affine maps from hidden content to the feature proxies.
#[derive(Debug, Clone)]
struct FeatureMap {
    content: Vec<[f64; 3]>,
    divergence: Vec<f64>,
}

impl FeatureMap {
    fn new(dim: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(FEATURE_MAP_SEED);
        let content = (0..dim)
            .map(|_| {
                [
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-0.5..0.5),
                ]
            })
            .collect();
        let divergence = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        Self { content, divergence }
    }
}

/// Pre-generated content of one frame.
#[derive(Debug, Clone)]
struct FrameContent {
    motion: f64,
    difficulty: f64,
    feature_noise: Vec<f64>,
    diff_noise: Vec<f64>,
}

fn generate_content(cfg: &SequenceConfig) -> Vec<FrameContent> {
    let mut motion_rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    noise_rng.set_stream(1);

    let mut motion = motion_rng.random_range(0.0..=cfg.max_motion / 2.0);
    // One extra frame so the state after the last decision is well defined.
    (0..=cfg.length_frames)
        .map(|i| {
            if i > 0 {
                let step: f64 = motion_rng.sample(StandardNormal);
                motion = (motion + cfg.motion_volatility * step).clamp(0.0, cfg.max_motion);
            }
            let jitter: f64 = motion_rng.sample(StandardNormal);
            let difficulty = (cfg.difficulty + cfg.difficulty_jitter * jitter).clamp(0.0, 1.0);
            let mut noise = |n: usize| -> Vec<f64> {
                (0..n)
                    .map(|_| cfg.feature_noise * noise_rng.sample::<f64, _>(StandardNormal))
                    .collect()
            };
            FrameContent {
                motion,
                difficulty,
                feature_noise: noise(cfg.feature_dim),
                diff_noise: noise(cfg.feature_dim),
            }
        })
        .collect()
}

/// One video sequence being processed frame by frame.
#[derive(Debug, Clone)]
pub struct VideoEnv {
    model: EnvModel,
    seq: SequenceConfig,
    base: FrameSpec,
    features: FeatureMap,
    content: Vec<FrameContent>,
    t: usize,
    accum_motion: f64,
    history: HistorySummary,
    trace: EpisodeTrace,
}

impl VideoEnv {
    pub fn new(model: EnvModel, seq: SequenceConfig) -> Result<Self> {
        seq.validate()?;
        let base = seq.base_frame()?;
        if model.energy.sensor.sensor_resolution_mp < base.resolution_mp() {
            return Err(Error::Domain(format!(
                "base frame {}x{} exceeds sensor resolution {} MP",
                base.width_px(),
                base.height_px(),
                model.energy.sensor.sensor_resolution_mp
            )));
        }
        let features = FeatureMap::new(seq.feature_dim);
        Ok(Self {
            model,
            seq,
            base,
            features,
            content: Vec::new(),
            t: 0,
            accum_motion: 0.0,
            history: HistorySummary::default(),
            trace: EpisodeTrace::default(),
        })
    }

    pub fn model(&self) -> &EnvModel {
        &self.model
    }

    pub fn sequence(&self) -> &SequenceConfig {
        &self.seq
    }

    /// Starts the sequence described by `seq`, processing frame 0 as a key
    /// frame, and returns the state of frame 1.
    pub fn reset_with(&mut self, seq: SequenceConfig) -> Result<FrameState> {
        seq.validate()?;
        if seq.feature_dim != self.seq.feature_dim {
            self.features = FeatureMap::new(seq.feature_dim);
        }
        self.base = seq.base_frame()?;
        self.seq = seq;
        self.reset()
    }

    /// Restarts the current sequence.
    pub fn reset(&mut self) -> Result<FrameState> {
        self.content = generate_content(&self.seq);
        self.t = 0;
        self.accum_motion = 0.0;
        self.history = HistorySummary::default();
        self.trace = EpisodeTrace::new(TraceMeta {
            seed: self.seq.rng_seed,
            policy_id: String::new(),
            lambda: self.model.reward.lambda,
        });
        self.advance(Action::Full, EnergyBreakdown::zero())?;
        Ok(self.state())
    }

    pub fn frame_index(&self) -> usize {
        self.t
    }

    pub fn is_done(&self) -> bool {
        self.t >= self.seq.length_frames
    }

    /// Hidden content of the current frame.
    pub fn truth(&self) -> FrameTruth {
        let c = &self.content[self.t.min(self.content.len() - 1)];
        FrameTruth {
            motion_mag: c.motion,
            accum_motion_since_key: self.accum_motion,
            frame_difficulty: c.difficulty,
        }
    }

    /// Motion accumulated since the last key frame; the flow-magnitude signal.
    pub fn flow_magnitude(&self) -> f64 {
        self.accum_motion
    }

    pub fn state(&self) -> FrameState {
        let c = &self.content[self.t.min(self.content.len() - 1)];
        let motion = c.motion / self.seq.max_motion;
        // Saturates like the flow factor: 0 right after a key, approaching 1 as motion accumulates.
        let divergence = 1.0 - (-self.accum_motion / self.model.accuracy.flow_scale).exp();
        let feature_proxy = self
            .features
            .content
            .iter()
            .zip(&c.feature_noise)
            .map(|(w, n)| w[0] * c.difficulty + w[1] * motion + w[2] + n)
            .collect();
        let feature_diff_proxy = self
            .features
            .divergence
            .iter()
            .zip(&c.diff_noise)
            .map(|(v, n)| v * divergence + n)
            .collect();
        FrameState {
            feature_proxy,
            feature_diff_proxy,
            history: self.history.clone(),
        }
    }

    /// Accuracy `action` would achieve on the current frame.
    pub fn accuracy_of(&self, action: Action) -> f64 {
        accuracy_model(&self.model.accuracy, &self.truth(), action)
    }

    /// Energy of processing the current frame with `action`.
    pub fn energy_of(&self, action: Action) -> Result<EnergyBreakdown> {
        self.model
            .energy
            .frame_energy(self.base.downsampled(action.linear_downsample()), action.is_key())
    }

    pub fn step(&mut self, action: Action) -> Result<StepOutcome> {
        self.step_with_extra(action, EnergyBreakdown::zero())
    }

    /// Steps with `extra` energy spent by the policy on top of the action itself.
    pub fn step_with_extra(&mut self, action: Action, extra: EnergyBreakdown) -> Result<StepOutcome> {
        if self.content.is_empty() {
            return Err(Error::State("step called before reset".into()));
        }
        if self.is_done() {
            return Err(Error::State(format!(
                "episode finished after {} frames",
                self.seq.length_frames
            )));
        }
        let record = self.advance(action, extra)?;
        Ok(StepOutcome {
            accuracy: record.accuracy,
            energy: record.energy,
            reward: record.reward,
            next_state: self.state(),
            done: self.is_done(),
        })
    }

    fn advance(&mut self, action: Action, extra: EnergyBreakdown) -> Result<FrameRecord> {
        let truth = self.truth();
        let accuracy = accuracy_model(&self.model.accuracy, &truth, action);
        let best = accuracy_model(&self.model.accuracy, &truth, Action::Full);
        let energy = self.energy_of(action)?;
        let r = reward(accuracy, best, &energy, action, &self.model.reward)?;
        let record = FrameRecord {
            t: self.t,
            action,
            accuracy,
            energy,
            extra,
            reward: r,
        };
        self.trace.records.push(record);

        if action.is_key() {
            self.accum_motion = 0.0;
        } else {
            self.accum_motion += truth.motion_mag;
        }
        self.history.push(action);
        self.t += 1;
        Ok(record)
    }

    pub fn trace(&self) -> &EpisodeTrace {
        &self.trace
    }

    pub fn take_trace(&mut self) -> EpisodeTrace {
        std::mem::take(&mut self.trace)
    }
}

/// Produces the sequences of a run: one per episode or evaluation seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SequenceSampler {
    pub base: SequenceConfig,
    /// When set, each sequence draws its difficulty uniformly from this range.
    pub difficulty_range: Option<(f64, f64)>,
}

impl Default for SequenceSampler {
    fn default() -> Self {
        Self {
            base: SequenceConfig::default(),
            difficulty_range: Some((0.0, 1.0)),
        }
    }
}

impl SequenceSampler {
    pub fn fixed(base: SequenceConfig) -> Self {
        Self {
            base,
            difficulty_range: None,
        }
    }

    pub fn sequence(&self, seed: u64) -> SequenceConfig {
        let mut cfg = self.base.clone();
        cfg.rng_seed = seed;
        if let Some((lo, hi)) = self.difficulty_range {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(2);
            cfg.difficulty = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        }
        cfg
    }
}

/// Rolls `choose` over a whole sequence. `choose` sees the environment before
/// each decision and returns the action plus any extra energy it spent.
pub fn rollout<F>(env: &mut VideoEnv, policy_id: &str, mut choose: F) -> Result<EpisodeTrace>
where
    F: FnMut(&VideoEnv) -> Result<(Action, EnergyBreakdown)>,
{
    env.reset()?;
    while !env.is_done() {
        let (action, extra) = choose(env)?;
        env.step_with_extra(action, extra)?;
    }
    let mut trace = env.take_trace();
    trace.meta.policy_id = policy_id.to_string();
    Ok(trace)
}

/// History after `actions`, oldest first.
pub fn history_from(actions: &[Action]) -> HistorySummary {
    let mut h = HistorySummary::default();
    for &a in actions {
        h.push(a);
    }
    h
}
