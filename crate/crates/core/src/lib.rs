//! Adaptive frame-resolution scheduling for energy-efficient video analytics.
//!
//! The crate models the per-frame energy of a camera pipeline (sensor, ISP,
//! host, link), simulates a video analytics workload whose accuracy depends
//! on the chosen resolution and key-frame cadence, and trains a Double-DQN
//! scheduler that trades accuracy for energy. Four classic baselines and a
//! sweep harness sit alongside for comparison.
//!
//! ```
//! use adares::{Action, EnvModel, SequenceConfig, VideoEnv};
//!
//! let seq = SequenceConfig { length_frames: 4, rng_seed: 3, ..Default::default() };
//! let mut env = VideoEnv::new(EnvModel::default_with_lambda(0.6), seq)?;
//! env.reset()?;
//! while !env.is_done() {
//!     env.step(Action::Eighth)?;
//! }
//! assert_eq!(env.trace().len(), 4);
//! # Ok::<(), adares::Error>(())
//! ```

pub mod accuracy;
pub mod action;
pub mod cli;
pub mod config;
pub mod ddqn;
pub mod energy;
pub mod env;
pub mod error;
pub mod metrics;
pub mod qnet;
pub mod reward;
pub mod schedulers;
pub mod sweep;
pub mod trace;

/// Guide chapters, compiled as doctests so the book cannot drift from the API.
#[cfg(doctest)]
pub mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/energy.md")]
    pub struct Energy;
    #[doc = include_str!("../../../book/src/environment.md")]
    pub struct Environment;
    #[doc = include_str!("../../../book/src/baselines.md")]
    pub struct Baselines;
    #[doc = include_str!("../../../book/src/training.md")]
    pub struct Training;
    #[doc = include_str!("../../../book/src/experiments.md")]
    pub struct Experiments;
}

pub use accuracy::{accuracy_model, AccuracyParams, FrameTruth};
pub use action::Action;
pub use config::{Experiment, RunConfig};
pub use ddqn::{evaluate, train, Episodic, QPolicy, TrainConfig, Trainer};
pub use energy::{frame_energy, EnergyBreakdown, EnergyParams, FrameSpec};
pub use env::{EnvModel, FrameState, SequenceConfig, SequenceSampler, VideoEnv};
pub use error::{Error, Result};
pub use metrics::{aecr, energy_reduction};
pub use qnet::{AdamState, NetSpec, QNetwork};
pub use reward::{reward, RewardConfig};
pub use schedulers::{run_policy, Policy, PolicyDecision, PolicySpec};
pub use sweep::pareto_sweep;
pub use trace::EpisodeTrace;
