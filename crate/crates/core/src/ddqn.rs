//! Double Q-learning with experience replay, epsilon-greedy exploration and a
//! periodically synchronized target network.
//!
//! The trainer is written against the small [`Episodic`] trait so the same
//! loop drives both the video environment and tabular sanity MDPs.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::action::Action;
use crate::energy::EnergyBreakdown;
use crate::env::{FrameState, SequenceSampler, VideoEnv};
use crate::error::{Error, Result};
use crate::qnet::{AdamState, NetSpec, QNetwork};
use crate::reward::episode_return;
use crate::schedulers::{run_policy, Policy, PolicyDecision};
use crate::trace::EpisodeTrace;

/// Network input for one state: trunk features and the late-fused history.
#[derive(Debug, Clone, PartialEq)]
pub struct NetInput {
    pub trunk: Vec<f64>,
    pub history: Vec<f64>,
}

impl From<&FrameState> for NetInput {
    fn from(s: &FrameState) -> Self {
        Self {
            trunk: s.trunk_input(),
            history: s.history_input(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: NetInput,
    pub action: usize,
    pub reward: f64,
    pub next_state: NetInput,
    pub done: bool,
}

/// Fixed-capacity ring of transitions; the oldest entry is overwritten first.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// Uniform sample of `n` distinct transitions.
    pub fn sample<'a, R: Rng + ?Sized>(&'a self, rng: &mut R, n: usize) -> Vec<&'a Transition> {
        let n = n.min(self.items.len());
        sample(rng, self.items.len(), n).into_iter().map(|i| &self.items[i]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub episodes: usize,
    /// Truncates an episode after this many decisions without marking it terminal.
    pub max_steps: Option<usize>,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub target_sync_every: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of episodes over which epsilon decays linearly.
    pub epsilon_decay_fraction: f64,
    /// Discount used in TD targets. Logged returns use the environment's own discount.
    pub gamma: f64,
    pub learning_rate: f64,
    /// Multiplies rewards before they enter the replay buffer.
    pub reward_scale: f64,
    pub trunk_dims: Vec<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 800,
            max_steps: None,
            batch_size: 32,
            replay_capacity: 10_000,
            target_sync_every: 500,
            epsilon_start: 0.9,
            epsilon_end: 0.05,
            epsilon_decay_fraction: 0.8,
            gamma: 0.9,
            learning_rate: AdamState::DEFAULT_LEARNING_RATE,
            reward_scale: 0.1,
            trunk_dims: vec![64, 32],
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.episodes > 0
            && self.batch_size > 0
            && self.replay_capacity >= self.batch_size
            && self.target_sync_every > 0
            && 0.0 <= self.epsilon_end
            && self.epsilon_end <= self.epsilon_start
            && self.epsilon_start <= 1.0
            && (0.0..=1.0).contains(&self.epsilon_decay_fraction)
            && (0.0..=1.0).contains(&self.gamma)
            && self.learning_rate > 0.0
            && self.reward_scale > 0.0
            && self.max_steps != Some(0);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid training config {self:?}")))
        }
    }

    /// Exploration rate of `episode`: linear from start to end over the decay horizon, then flat.
    pub fn epsilon_at(&self, episode: usize) -> f64 {
        let horizon = (self.epsilon_decay_fraction * self.episodes as f64).floor();
        if horizon <= 0.0 || episode as f64 >= horizon {
            return self.epsilon_end;
        }
        let frac = episode as f64 / horizon;
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

/// Index of the largest Q-value; ties go to the lowest index.
pub fn greedy(q_values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &q) in q_values.iter().enumerate().skip(1) {
        if q > q_values[best] {
            best = i;
        }
    }
    best
}

/// Uniform random action with probability `epsilon`, otherwise greedy.
pub fn select_action<R: Rng + ?Sized>(q_values: &[f64], epsilon: f64, rng: &mut R) -> usize {
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        rng.random_range(0..q_values.len())
    } else {
        greedy(q_values)
    }
}

/// Double-Q target: the online network picks the next action, the target network scores it.
pub fn td_target(t: &Transition, online: &QNetwork, target: &QNetwork, gamma: f64) -> Result<f64> {
    if t.done || gamma == 0.0 {
        return Ok(t.reward);
    }
    let next = &t.next_state;
    let chosen = greedy(&online.forward(&next.trunk, &next.history)?);
    let value = target.forward(&next.trunk, &next.history)?[chosen];
    Ok(t.reward + gamma * value)
}

/// An episodic environment with a discrete action set.
pub trait Episodic {
    fn num_actions(&self) -> usize;

    /// Starts episode `episode`; returns the first observation and any reward
    /// collected before the first decision.
    fn reset(&mut self, episode: usize) -> Result<(NetInput, f64)>;

    /// Applies `action`; returns `(reward, next observation, terminal)`.
    fn step(&mut self, action: usize) -> Result<(f64, NetInput, bool)>;

    /// Discount of the episode return written to the training log.
    fn return_gamma(&self) -> f64 {
        1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub episode: usize,
    #[serde(rename = "return")]
    pub episode_return: f64,
    pub epsilon: f64,
    pub mean_td_error: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub online: QNetwork,
    pub log: Vec<TrainLogRow>,
    pub steps: usize,
}

pub fn write_train_log<W: std::io::Write>(log: &[TrainLogRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in log {
        w.serialize(row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Single-threaded DDQN trainer; owns the networks, optimizer and replay buffer.
pub struct Trainer {
    cfg: TrainConfig,
    online: QNetwork,
    target: QNetwork,
    adam: AdamState,
    buffer: ReplayBuffer,
    rng: ChaCha8Rng,
    steps: usize,
    grads: Vec<f64>,
}

impl Trainer {
    pub fn new(spec: NetSpec, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let online = QNetwork::init(spec, cfg.seed)?;
        Ok(Self::with_network(online, cfg))
    }

    pub fn with_network(online: QNetwork, cfg: TrainConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(7);
        let n = online.params().len();
        Self {
            target: online.clone(),
            adam: AdamState::new(n, cfg.learning_rate),
            buffer: ReplayBuffer::new(cfg.replay_capacity),
            grads: vec![0.0; n],
            online,
            cfg,
            rng,
            steps: 0,
        }
    }

    pub fn online(&self) -> &QNetwork {
        &self.online
    }

    pub fn target(&self) -> &QNetwork {
        &self.target
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    /// Runs one episode; returns its log row.
    pub fn run_episode<E: Episodic>(&mut self, env: &mut E, episode: usize) -> Result<TrainLogRow> {
        let epsilon = self.cfg.epsilon_at(episode);
        let (mut obs, initial) = env.reset(episode)?;
        let gamma = env.return_gamma();
        let mut ret = initial;
        let mut discount = if initial != 0.0 { gamma } else { 1.0 };
        let mut td_sum = 0.0;
        let mut td_count = 0usize;
        let mut decisions = 0usize;
        loop {
            let q = self.online.forward(&obs.trunk, &obs.history)?;
            let action = select_action(&q, epsilon, &mut self.rng);
            let (reward, next, done) = env.step(action)?;
            ret += discount * reward;
            discount *= gamma;
            self.buffer.push(Transition {
                state: obs,
                action,
                reward: reward * self.cfg.reward_scale,
                next_state: next.clone(),
                done,
            });
            if self.buffer.len() >= self.cfg.batch_size {
                td_sum += self.update()?;
                td_count += 1;
            }
            self.steps += 1;
            if self.steps % self.cfg.target_sync_every == 0 {
                self.target = self.online.clone();
            }
            obs = next;
            decisions += 1;
            if done || self.cfg.max_steps.is_some_and(|m| decisions >= m) {
                break;
            }
        }
        Ok(TrainLogRow {
            episode,
            episode_return: ret,
            epsilon,
            mean_td_error: if td_count > 0 { td_sum / td_count as f64 } else { 0.0 },
        })
    }

    /// One Adam step on the mean of `0.5 * td^2` over a sampled batch; returns mean |td|.
    fn update(&mut self) -> Result<f64> {
        let batch = self.buffer.sample(&mut self.rng, self.cfg.batch_size);
        let weight = 1.0 / batch.len() as f64;
        self.grads.iter_mut().for_each(|g| *g = 0.0);
        let mut abs_td = 0.0;
        for t in batch {
            let y = td_target(t, &self.online, &self.target, self.cfg.gamma)?;
            let cache = self.online.forward_cached(&t.state.trunk, &t.state.history)?;
            let td = cache.q_values[t.action] - y;
            abs_td += td.abs();
            self.online.backward_into(&cache, t.action, td, weight, &mut self.grads);
        }
        self.adam.step(self.online.params_mut(), &self.grads);
        Ok(abs_td * weight)
    }

    pub fn train<E: Episodic>(mut self, env: &mut E) -> Result<TrainOutcome> {
        let mut log = Vec::with_capacity(self.cfg.episodes);
        for episode in 0..self.cfg.episodes {
            log.push(self.run_episode(env, episode)?);
        }
        Ok(TrainOutcome {
            online: self.online,
            log,
            steps: self.steps,
        })
    }
}

/// Trains a fresh network on `env`.
pub fn train<E: Episodic>(env: &mut E, spec: NetSpec, cfg: TrainConfig) -> Result<TrainOutcome> {
    Trainer::new(spec, cfg)?.train(env)
}

/// SplitMix64 finalizer; derives independent per-episode seeds from a run seed.
pub fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(index.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// The video environment as a training environment: episode `i` plays the
/// sequence seeded by `mix_seed(run_seed, i)`.
pub struct VideoEpisodes {
    pub env: VideoEnv,
    pub sampler: SequenceSampler,
    pub run_seed: u64,
}

impl VideoEpisodes {
    pub fn new(env: VideoEnv, sampler: SequenceSampler, run_seed: u64) -> Self {
        Self { env, sampler, run_seed }
    }
}

impl Episodic for VideoEpisodes {
    fn num_actions(&self) -> usize {
        Action::COUNT
    }

    fn reset(&mut self, episode: usize) -> Result<(NetInput, f64)> {
        let seq = self.sampler.sequence(mix_seed(self.run_seed, episode as u64));
        let state = self.env.reset_with(seq)?;
        let initial = self.env.trace().records.iter().map(|r| r.reward).sum();
        Ok((NetInput::from(&state), initial))
    }

    fn step(&mut self, action: usize) -> Result<(f64, NetInput, bool)> {
        let out = self.env.step(Action::from_index(action)?)?;
        Ok((out.reward, NetInput::from(&out.next_state), out.done))
    }

    fn return_gamma(&self) -> f64 {
        self.env.model().reward.gamma
    }
}

/// Greedy learned scheduler. Every decided frame is charged `overhead` for
/// featurizing the state and running the network.
#[derive(Debug, Clone)]
pub struct QPolicy {
    pub net: QNetwork,
    pub overhead: EnergyBreakdown,
    pub label: String,
}

impl QPolicy {
    pub fn new(net: QNetwork, overhead: EnergyBreakdown, label: impl Into<String>) -> Self {
        Self {
            net,
            overhead,
            label: label.into(),
        }
    }
}

impl Policy for QPolicy {
    fn id(&self) -> String {
        self.label.clone()
    }

    fn decide(&mut self, env: &VideoEnv) -> Result<PolicyDecision> {
        let state = env.state();
        let q = self.net.forward(&state.trunk_input(), &state.history_input())?;
        Ok(PolicyDecision {
            action: Action::from_index(greedy(&q))?,
            extra_energy: self.overhead,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub episodes: usize,
    pub mean_return: f64,
    pub mean_accuracy: f64,
    pub mean_energy_mj: f64,
}

/// Greedy rollouts of `net` over the sequences `seeds` draws from `sampler`.
pub fn evaluate(
    net: &QNetwork,
    env: &mut VideoEnv,
    sampler: &SequenceSampler,
    seeds: &[u64],
    overhead: EnergyBreakdown,
    label: &str,
) -> Result<(Vec<EpisodeTrace>, EvalSummary)> {
    let mut policy = QPolicy::new(net.clone(), overhead, label);
    let gamma = env.model().reward.gamma;
    let mut traces = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        env.reset_with(sampler.sequence(seed))?;
        traces.push(run_policy(env, &mut policy)?);
    }
    let n = traces.len().max(1) as f64;
    let summary = EvalSummary {
        episodes: traces.len(),
        mean_return: traces.iter().map(|t| episode_return(t, gamma)).sum::<f64>() / n,
        mean_accuracy: traces.iter().map(|t| t.mean_accuracy()).sum::<f64>() / n,
        mean_energy_mj: traces.iter().map(|t| t.total_consumed_mj()).sum::<f64>() / n,
    };
    Ok((traces, summary))
}
