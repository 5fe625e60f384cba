//! Baseline resolution schedulers and the policy interface shared with the learned agent.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::action::Action;
use crate::energy::EnergyBreakdown;
use crate::env::{rollout, VideoEnv};
use crate::error::{Error, Result};
use crate::trace::EpisodeTrace;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyDecision {
    pub action: Action,
    /// Energy spent reaching the decision, on top of processing the frame.
    pub extra_energy: EnergyBreakdown,
}

impl PolicyDecision {
    pub fn single_shot(action: Action) -> Self {
        Self {
            action,
            extra_energy: EnergyBreakdown::zero(),
        }
    }
}

/// A per-frame resolution policy.
pub trait Policy {
    fn id(&self) -> String;

    /// Called once per sequence, before frame 1 is decided.
    fn begin_episode(&mut self, _sequence_seed: u64) {}

    fn decide(&mut self, env: &VideoEnv) -> Result<PolicyDecision>;
}

/// Runs `policy` over the environment's current sequence.
pub fn run_policy(env: &mut VideoEnv, policy: &mut dyn Policy) -> Result<EpisodeTrace> {
    policy.begin_episode(env.sequence().rng_seed);
    let id = policy.id();
    rollout(env, &id, |env| {
        let d = policy.decide(env)?;
        Ok((d.action, d.extra_energy))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    /// Largest tolerated relative accuracy reduction against full resolution.
    pub cnstrt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveConfig {
    pub threshold: f64,
    pub nonkey_action: Action,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedIntervalConfig {
    /// Number of non-key frames between consecutive key frames.
    pub l: usize,
    pub nonkey_action: Action,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomConfig {
    pub key_prob: f64,
    pub rng_seed: u64,
}

/// Scan order of the multi-round baseline: cheapest resolution first.
pub const SCAN_ORDER: [Action; 4] = [Action::Eighth, Action::Quarter, Action::Half, Action::Full];

/// Probes resolutions from coarsest to full and keeps the first whose
/// estimated accuracy reduction is within `cfg.cnstrt`. Every rejected probe
/// is a full capture-and-analyse round and is charged as extra energy.
pub fn downsampling_scan<R, E>(reduction_of: R, mut energy_of: E, cfg: &ScanConfig) -> Result<PolicyDecision>
where
    R: Fn(Action) -> f64,
    E: FnMut(Action) -> Result<EnergyBreakdown>,
{
    let mut extra = EnergyBreakdown::zero();
    for action in SCAN_ORDER {
        if action.is_key() || reduction_of(action) <= cfg.cnstrt {
            return Ok(PolicyDecision {
                action,
                extra_energy: extra,
            });
        }
        extra += energy_of(action)?;
    }
    unreachable!("full resolution always satisfies the constraint")
}

/// Key frame once the flow magnitude strictly exceeds the threshold.
pub fn adaptive_hfs(flow_magnitude: f64, cfg: &AdaptiveConfig) -> PolicyDecision {
    if flow_magnitude > cfg.threshold {
        PolicyDecision::single_shot(Action::Full)
    } else {
        PolicyDecision::single_shot(cfg.nonkey_action)
    }
}

/// Key frame every `l + 1` frames starting at frame 0, `l` non-key frames in between.
pub fn fixed_interval_hfs(frame_index: usize, cfg: &FixedIntervalConfig) -> PolicyDecision {
    if frame_index % (cfg.l + 1) == 0 {
        PolicyDecision::single_shot(Action::Full)
    } else {
        PolicyDecision::single_shot(cfg.nonkey_action)
    }
}

/// Key frame with probability `key_prob`, otherwise a uniformly chosen non-key action.
pub fn random_hfs<R: Rng + ?Sized>(rng: &mut R, cfg: &RandomConfig) -> PolicyDecision {
    let u: f64 = rng.random();
    if u < cfg.key_prob {
        return PolicyDecision::single_shot(Action::Full);
    }
    let pick = rng.random_range(0..Action::NON_KEY.len());
    PolicyDecision::single_shot(Action::NON_KEY[pick])
}

/// Relative accuracy loss of `action` against full resolution on the current frame.
pub fn relative_reduction(env: &VideoEnv, action: Action) -> f64 {
    let full = env.accuracy_of(Action::Full);
    if full <= 0.0 {
        return 0.0;
    }
    (full - env.accuracy_of(action)) / full
}

/// Textual, parseable description of a baseline policy.
///
/// `allkey`, `const:a4`, `scan:cnstrt=0.2`, `adaptive:a3:thr=10`,
/// `fixed:a2:l=1`, `random:r=0.7` (optionally `random:r=0.7:seed=3`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum PolicySpec {
    AllKey,
    Constant(Action),
    Scan(ScanConfig),
    Adaptive(AdaptiveConfig),
    FixedInterval(FixedIntervalConfig),
    Random(RandomConfig),
}

impl PolicySpec {
    /// Family name, without parameters.
    pub fn family(&self) -> &'static str {
        match self {
            PolicySpec::AllKey => "allkey",
            PolicySpec::Constant(_) => "const",
            PolicySpec::Scan(_) => "scan",
            PolicySpec::Adaptive(_) => "adaptive",
            PolicySpec::FixedInterval(_) => "fixed",
            PolicySpec::Random(_) => "random",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        match *self {
            PolicySpec::Scan(c) if !(c.cnstrt > 0.0 && c.cnstrt < 1.0) => {
                bad(format!("scan cnstrt must lie in (0, 1), got {}", c.cnstrt))
            }
            PolicySpec::Adaptive(c) if !(c.threshold > 0.0) => {
                bad(format!("adaptive threshold must be positive, got {}", c.threshold))
            }
            PolicySpec::Adaptive(AdaptiveConfig { nonkey_action: Action::Full, .. })
            | PolicySpec::FixedInterval(FixedIntervalConfig { nonkey_action: Action::Full, .. }) => {
                bad("non-key action must be one of a2, a3, a4".into())
            }
            PolicySpec::FixedInterval(c) if c.l == 0 => bad("fixed interval l must be >= 1".into()),
            PolicySpec::Random(c) if !(0.0..=1.0).contains(&c.key_prob) => {
                bad(format!("random key probability must lie in [0, 1], got {}", c.key_prob))
            }
            _ => Ok(()),
        }
    }

    pub fn build(&self) -> Box<dyn Policy + Send> {
        match *self {
            PolicySpec::AllKey => Box::new(ConstantPolicy(Action::Full)),
            PolicySpec::Constant(a) => Box::new(ConstantPolicy(a)),
            PolicySpec::Scan(cfg) => Box::new(DownsamplingScan(cfg)),
            PolicySpec::Adaptive(cfg) => Box::new(AdaptiveHfs(cfg)),
            PolicySpec::FixedInterval(cfg) => Box::new(FixedIntervalHfs(cfg)),
            PolicySpec::Random(cfg) => Box::new(RandomHfs::new(cfg)),
        }
    }
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicySpec::AllKey => write!(f, "allkey"),
            PolicySpec::Constant(a) => write!(f, "const:{a}"),
            PolicySpec::Scan(c) => write!(f, "scan:cnstrt={}", c.cnstrt),
            PolicySpec::Adaptive(c) => write!(f, "adaptive:{}:thr={}", c.nonkey_action, c.threshold),
            PolicySpec::FixedInterval(c) => write!(f, "fixed:{}:l={}", c.nonkey_action, c.l),
            PolicySpec::Random(c) if c.rng_seed == 0 => write!(f, "random:r={}", c.key_prob),
            PolicySpec::Random(c) => write!(f, "random:r={}:seed={}", c.key_prob, c.rng_seed),
        }
    }
}

fn keyed<'a>(part: Option<&'a str>, key: &str, spec: &str) -> Result<&'a str> {
    part.and_then(|p| p.strip_prefix(key)?.strip_prefix('='))
        .ok_or_else(|| Error::Config(format!("policy `{spec}`: expected `{key}=<value>`")))
}

fn number<T: FromStr>(text: &str, spec: &str) -> Result<T> {
    text.parse()
        .map_err(|_| Error::Config(format!("policy `{spec}`: cannot parse `{text}`")))
}

impl FromStr for PolicySpec {
    type Err = Error;

    fn from_str(spec: &str) -> Result<Self> {
        let mut parts = spec.trim().split(':');
        let family = parts.next().unwrap_or_default();
        let parsed = match family {
            "allkey" => PolicySpec::AllKey,
            "const" => PolicySpec::Constant(parts.next().unwrap_or_default().parse()?),
            "scan" => PolicySpec::Scan(ScanConfig {
                cnstrt: number(keyed(parts.next(), "cnstrt", spec)?, spec)?,
            }),
            "adaptive" => {
                let nonkey_action = parts.next().unwrap_or_default().parse()?;
                let threshold = number(keyed(parts.next(), "thr", spec)?, spec)?;
                PolicySpec::Adaptive(AdaptiveConfig {
                    threshold,
                    nonkey_action,
                })
            }
            "fixed" => {
                let nonkey_action = parts.next().unwrap_or_default().parse()?;
                let l = number(keyed(parts.next(), "l", spec)?, spec)?;
                PolicySpec::FixedInterval(FixedIntervalConfig { l, nonkey_action })
            }
            "random" => {
                let key_prob = number(keyed(parts.next(), "r", spec)?, spec)?;
                let rng_seed = match parts.next() {
                    Some(p) => number(keyed(Some(p), "seed", spec)?, spec)?,
                    None => 0,
                };
                PolicySpec::Random(RandomConfig { key_prob, rng_seed })
            }
            _ => return Err(Error::Config(format!("unknown policy `{spec}`"))),
        };
        if parts.next().is_some() {
            return Err(Error::Config(format!("policy `{spec}`: trailing fields")));
        }
        parsed.validate()?;
        Ok(parsed)
    }
}

impl From<PolicySpec> for String {
    fn from(p: PolicySpec) -> String {
        p.to_string()
    }
}

impl TryFrom<String> for PolicySpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Always the same action. `Full` gives the all-key reference rollout.
#[derive(Debug, Clone, Copy)]
pub struct ConstantPolicy(pub Action);

impl Policy for ConstantPolicy {
    fn id(&self) -> String {
        if self.0.is_key() {
            PolicySpec::AllKey.to_string()
        } else {
            PolicySpec::Constant(self.0).to_string()
        }
    }

    fn decide(&mut self, _env: &VideoEnv) -> Result<PolicyDecision> {
        Ok(PolicyDecision::single_shot(self.0))
    }
}

/// Multi-round scan using the environment's own accuracy model as the estimator.
#[derive(Debug, Clone, Copy)]
pub struct DownsamplingScan(pub ScanConfig);

impl Policy for DownsamplingScan {
    fn id(&self) -> String {
        PolicySpec::Scan(self.0).to_string()
    }

    fn decide(&mut self, env: &VideoEnv) -> Result<PolicyDecision> {
        downsampling_scan(|a| relative_reduction(env, a), |a| env.energy_of(a), &self.0)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AdaptiveHfs(pub AdaptiveConfig);

impl Policy for AdaptiveHfs {
    fn id(&self) -> String {
        PolicySpec::Adaptive(self.0).to_string()
    }

    fn decide(&mut self, env: &VideoEnv) -> Result<PolicyDecision> {
        Ok(adaptive_hfs(env.flow_magnitude(), &self.0))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FixedIntervalHfs(pub FixedIntervalConfig);

impl Policy for FixedIntervalHfs {
    fn id(&self) -> String {
        PolicySpec::FixedInterval(self.0).to_string()
    }

    fn decide(&mut self, env: &VideoEnv) -> Result<PolicyDecision> {
        Ok(fixed_interval_hfs(env.frame_index(), &self.0))
    }
}

/// Random scheduler whose stream is keyed by its own seed and the sequence seed.
#[derive(Debug, Clone)]
pub struct RandomHfs {
    cfg: RandomConfig,
    rng: ChaCha8Rng,
}

impl RandomHfs {
    pub fn new(cfg: RandomConfig) -> Self {
        Self {
            cfg,
            rng: ChaCha8Rng::seed_from_u64(cfg.rng_seed),
        }
    }
}

impl Policy for RandomHfs {
    fn id(&self) -> String {
        PolicySpec::Random(self.cfg).to_string()
    }

    fn begin_episode(&mut self, sequence_seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(self.cfg.rng_seed);
        self.rng.set_stream(sequence_seed);
    }

    fn decide(&mut self, _env: &VideoEnv) -> Result<PolicyDecision> {
        Ok(random_hfs(&mut self.rng, &self.cfg))
    }
}

/// Parameter grids of the four baselines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineGrid {
    pub scan_cnstrt: Vec<f64>,
    pub adaptive_thresholds: Vec<f64>,
    pub adaptive_actions: Vec<Action>,
    pub fixed_intervals: Vec<usize>,
    pub fixed_actions: Vec<Action>,
    pub random_key_probs: Vec<f64>,
    pub random_seed: u64,
}

impl Default for BaselineGrid {
    fn default() -> Self {
        Self {
            scan_cnstrt: vec![0.2, 0.4, 0.6, 0.8],
            adaptive_thresholds: vec![8.0, 10.0, 12.0],
            adaptive_actions: Action::NON_KEY.to_vec(),
            fixed_intervals: vec![1, 2, 3],
            fixed_actions: Action::NON_KEY.to_vec(),
            random_key_probs: vec![0.9, 0.7, 0.5],
            random_seed: 0,
        }
    }
}

impl BaselineGrid {
    /// Every grid point, in a fixed order.
    pub fn enumerate(&self) -> Result<Vec<PolicySpec>> {
        let mut out = Vec::new();
        out.extend(self.scan_cnstrt.iter().map(|&cnstrt| PolicySpec::Scan(ScanConfig { cnstrt })));
        for &nonkey_action in &self.adaptive_actions {
            for &threshold in &self.adaptive_thresholds {
                out.push(PolicySpec::Adaptive(AdaptiveConfig {
                    threshold,
                    nonkey_action,
                }));
            }
        }
        for &nonkey_action in &self.fixed_actions {
            for &l in &self.fixed_intervals {
                out.push(PolicySpec::FixedInterval(FixedIntervalConfig { l, nonkey_action }));
            }
        }
        out.extend(self.random_key_probs.iter().map(|&key_prob| {
            PolicySpec::Random(RandomConfig {
                key_prob,
                rng_seed: self.random_seed,
            })
        }));
        for spec in &out {
            spec.validate()?;
        }
        Ok(out)
    }
}
