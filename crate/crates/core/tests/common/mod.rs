//! Oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

pub mod checks;

use adares::ddqn::{Episodic, NetInput, TrainConfig, VideoEpisodes};
use adares::energy::{CommParams, HostParams, IspParams, SensorParams};
use adares::env::{EnvModel, SequenceConfig, SequenceSampler, VideoEnv};
use adares::{AccuracyParams, EnergyParams, FrameSpec, RewardConfig};

/// Straight transcription of the four-stage frame energy model, taking raw numbers only.
pub struct RawPreset {
    pub sensor_mp: f64,
    pub clock_hz: f64,
    pub t_exp: f64,
    pub p_sensor_idle: f64,
    pub sensor_slope: f64,
    pub sensor_offset: f64,
    pub p_isp_active: f64,
    pub p_isp_idle: f64,
    pub isp_slope: f64,
    pub isp_offset: f64,
    pub p_host_active: f64,
    pub p_host_idle: f64,
    pub app_key: f64,
    pub app_flow: f64,
    pub comm_k: f64,
}

impl RawPreset {
    pub fn imx219() -> Self {
        Self {
            sensor_mp: 3280.0 * 2464.0 / 1e6,
            clock_hz: 12e6,
            t_exp: 0.02,
            p_sensor_idle: 141.8,
            sensor_slope: 8.27,
            sensor_offset: 17.364 + 113.03,
            p_isp_active: 1500.0,
            p_isp_idle: 150.0,
            isp_slope: 0.095,
            isp_offset: 0.032,
            p_host_active: 3000.0,
            p_host_idle: 300.0,
            app_key: 0.5,
            app_flow: 0.12,
            comm_k: 10.0,
        }
    }

    /// Returns `[sensor, isp, host, comm, total]` in mJ.
    pub fn energy(&self, w: u32, h: u32, key: bool) -> [f64; 5] {
        let px = w as f64 * h as f64;
        let mp = px / 1e6;
        let t_read = px / self.clock_hz;
        let t_isp = self.isp_slope * mp + self.isp_offset;
        let t_app = if key { self.app_key } else { self.app_flow } * mp;
        let p_active = self.sensor_slope * self.sensor_mp + self.sensor_offset;
        let sensor = p_active * t_read + self.p_sensor_idle * self.t_exp;
        let isp = self.p_isp_active * t_isp + self.p_isp_idle * (self.t_exp + t_read + t_app);
        let host = self.p_host_active * t_app + self.p_host_idle * (self.t_exp + t_read + t_isp);
        let comm = self.comm_k * mp;
        [sensor, isp, host, comm, sensor + isp + host + comm]
    }

    pub fn to_params(&self) -> EnergyParams {
        EnergyParams {
            name: "raw".into(),
            sensor: SensorParams {
                sensor_resolution_mp: self.sensor_mp,
                clock_hz: self.clock_hz,
                exposure_s: self.t_exp,
                idle_power_mw: self.p_sensor_idle,
                active_power_slope_mw_per_mp: self.sensor_slope,
                active_power_offset_mw: self.sensor_offset,
            },
            isp: IspParams {
                active_power_mw: self.p_isp_active,
                idle_power_mw: self.p_isp_idle,
                isp_time_slope_s_per_mp: self.isp_slope,
                isp_time_offset_s: self.isp_offset,
            },
            host: HostParams {
                active_power_mw: self.p_host_active,
                idle_power_mw: self.p_host_idle,
                app_time_key_s_per_mp: self.app_key,
                app_time_flow_s_per_mp: self.app_flow,
            },
            comm: CommParams { mj_per_mp: self.comm_k },
        }
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// Deterministic three-state, two-action episodic MDP.
///
/// ```text
/// s0: a0 -> s1 (r 0.0)     a1 -> end (r 1.0)
/// s1: a0 -> s2 (r 0.5)     a1 -> end (r 0.2)
/// s2: a0 -> end (r 2.0)    a1 -> end (r 1.5)
/// ```
/// Episodes start in a state chosen round-robin so every state is visited.
pub struct ChainMdp {
    state: usize,
}

pub const CHAIN_STATES: usize = 3;
pub const CHAIN_ACTIONS: usize = 2;

impl ChainMdp {
    pub fn new() -> Self {
        Self { state: 0 }
    }

    /// `(next state or None at the end, reward)`.
    pub fn transition(s: usize, a: usize) -> (Option<usize>, f64) {
        match (s, a) {
            (0, 0) => (Some(1), 0.0),
            (0, _) => (None, 1.0),
            (1, 0) => (Some(2), 0.5),
            (1, _) => (None, 0.2),
            (_, 0) => (None, 2.0),
            _ => (None, 1.5),
        }
    }

    pub fn one_hot(s: usize) -> NetInput {
        let mut trunk = vec![0.0; CHAIN_STATES];
        trunk[s] = 1.0;
        NetInput { trunk, history: vec![] }
    }
}

impl Episodic for ChainMdp {
    fn num_actions(&self) -> usize {
        CHAIN_ACTIONS
    }

    fn reset(&mut self, episode: usize) -> adares::Result<(NetInput, f64)> {
        self.state = episode % CHAIN_STATES;
        Ok((Self::one_hot(self.state), 0.0))
    }

    fn step(&mut self, action: usize) -> adares::Result<(f64, NetInput, bool)> {
        let (next, r) = Self::transition(self.state, action);
        match next {
            Some(s) => {
                self.state = s;
                Ok((r, Self::one_hot(s), false))
            }
            None => Ok((r, Self::one_hot(self.state), true)),
        }
    }
}

/// Q* of [`ChainMdp`] by value iteration, indexed `[state][action]`.
pub fn chain_value_iteration(gamma: f64) -> [[f64; CHAIN_ACTIONS]; CHAIN_STATES] {
    let mut q = [[0.0; CHAIN_ACTIONS]; CHAIN_STATES];
    for _ in 0..1000 {
        let v: Vec<f64> = q.iter().map(|row| row.iter().cloned().fold(f64::MIN, f64::max)).collect();
        let mut next = q;
        for (s, row) in next.iter_mut().enumerate() {
            for (a, qa) in row.iter_mut().enumerate() {
                let (n, r) = ChainMdp::transition(s, a);
                *qa = r + n.map_or(0.0, |n| gamma * v[n]);
            }
        }
        if next == q {
            break;
        }
        q = next;
    }
    q
}

/// Training settings for the tabular oracle: defaults except a faster step size.
pub fn chain_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        episodes: 2500,
        learning_rate: 0.01,
        reward_scale: 1.0,
        trunk_dims: vec![],
        seed,
        ..TrainConfig::default()
    }
}

/// Accuracy model with no resolution or motion penalty: every action is
/// equally accurate, so the cheapest one strictly dominates every reward.
pub fn flat_accuracy() -> AccuracyParams {
    AccuracyParams {
        knee_easy: 1e-9,
        knee_hard: 1e-9,
        flow_floor: 1.0,
        ..AccuracyParams::default()
    }
}

pub fn dominance_episodes(seed: u64) -> VideoEpisodes {
    let base = SequenceConfig::default();
    let model = EnvModel::new(
        EnergyParams::imx219_pi3(),
        flat_accuracy(),
        RewardConfig::default(),
        base.base_frame().unwrap(),
    )
    .unwrap();
    let env = VideoEnv::new(model, base.clone()).unwrap();
    VideoEpisodes::new(env, SequenceSampler::default(), seed)
}

pub fn hd() -> FrameSpec {
    FrameSpec::new(1280, 720).unwrap()
}
