use serde::{Deserialize, Serialize};

use crate::action::Action;
use crate::energy::EnergyBreakdown;
use crate::error::{Error, Result};
use crate::trace::EpisodeTrace;

/// Weights of the joint accuracy/energy reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    /// Weight of the inverse-energy term.
    pub lambda: f64,
    /// Constant offset keeping rewards non-negative.
    pub c0: f64,
    pub gamma: f64,
    /// Energy (mJ) that maps to one normalized unit. `None` means "energy of
    /// a full-resolution key frame under the active hardware preset", filled
    /// in when an environment is built.
    pub energy_normalizer: Option<f64>,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            lambda: 0.6,
            c0: 2.0,
            gamma: 1.0,
            energy_normalizer: None,
        }
    }
}

impl RewardConfig {
    pub fn with_lambda(self, lambda: f64) -> Self {
        Self { lambda, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma must lie in [0, 1], got {}", self.gamma)));
        }
        if !(self.c0 > 0.0 && self.c0.is_finite()) {
            return Err(Error::Config(format!("c0 must be positive, got {}", self.c0)));
        }
        if let Some(n) = self.energy_normalizer {
            if !(n > 0.0 && n.is_finite()) {
                return Err(Error::Config(format!("energy_normalizer must be positive, got {n}")));
            }
        }
        Ok(())
    }
}

/// Per-frame reward.
///
/// A key frame earns `lambda / E_norm + c0`; a non-key frame additionally
/// pays its accuracy shortfall against the best achievable accuracy on that
/// frame, `accuracy_taken - accuracy_best`.
pub fn reward(
    accuracy_taken: f64,
    accuracy_best: f64,
    energy: &EnergyBreakdown,
    action: Action,
    cfg: &RewardConfig,
) -> Result<f64> {
    let normalizer = cfg
        .energy_normalizer
        .ok_or_else(|| Error::Config("reward energy normalizer is unresolved".into()))?;
    if !(energy.total_mj > 0.0) {
        return Err(Error::Domain(format!(
            "reward needs positive frame energy, got {} mJ",
            energy.total_mj
        )));
    }
    let energy_term = cfg.lambda * normalizer / energy.total_mj;
    let base = energy_term + cfg.c0;
    if action.is_key() {
        Ok(base)
    } else {
        Ok((accuracy_taken - accuracy_best) + base)
    }
}

/// Discounted return of a trace, `sum_t gamma^t r_t` with `t` from zero.
pub fn episode_return(trace: &EpisodeTrace, gamma: f64) -> f64 {
    discounted_sum(trace.records.iter().map(|r| r.reward), gamma)
}

pub fn discounted_sum(rewards: impl IntoIterator<Item = f64>, gamma: f64) -> f64 {
    let mut total = 0.0;
    let mut weight = 1.0;
    for r in rewards {
        total += weight * r;
        weight *= gamma;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(lambda: f64, c0: f64) -> RewardConfig {
        RewardConfig {
            lambda,
            c0,
            gamma: 1.0,
            energy_normalizer: Some(100.0),
        }
    }

    fn energy(total: f64) -> EnergyBreakdown {
        EnergyBreakdown::host_only(total)
    }

    #[test]
    fn key_reward_direct_substitution() {
        let r = reward(0.5, 0.9, &energy(100.0), Action::Full, &cfg(0.6, 2.0)).unwrap();
        assert!((r - 2.6).abs() < 1e-12);
    }

    #[test]
    fn no_shortfall_matches_key() {
        let c = cfg(0.6, 2.0);
        let key = reward(0.8, 0.8, &energy(40.0), Action::Full, &c).unwrap();
        let non_key = reward(0.8, 0.8, &energy(40.0), Action::Eighth, &c).unwrap();
        assert_eq!(key, non_key);
    }

    #[test]
    fn zero_lambda_leaves_only_shortfall() {
        let c = cfg(0.0, 2.0);
        let a = reward(0.7, 0.9, &energy(10.0), Action::Half, &c).unwrap();
        let b = reward(0.4, 0.9, &energy(90.0), Action::Eighth, &c).unwrap();
        assert!(((a - b) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn zero_energy_is_a_domain_error() {
        let err = reward(0.5, 0.5, &EnergyBreakdown::zero(), Action::Half, &cfg(0.6, 2.0));
        assert!(matches!(err, Err(Error::Domain(_))));
    }

    #[test]
    fn unresolved_normalizer_is_rejected() {
        let c = RewardConfig::default();
        assert!(matches!(
            reward(0.5, 0.5, &energy(1.0), Action::Full, &c),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn discounted_sums() {
        assert_eq!(discounted_sum([1.0, 2.0, 4.0], 0.5), 3.0);
        assert_eq!(discounted_sum([7.5, 2.0, 4.0], 0.0), 7.5);
        assert_eq!(discounted_sum(std::iter::repeat(1.25).take(90), 1.0), 112.5);
    }

    #[test]
    fn config_validation() {
        assert!(RewardConfig::default().validate().is_ok());
        assert!(RewardConfig { gamma: 1.5, ..Default::default() }.validate().is_err());
        assert!(RewardConfig { lambda: -0.1, ..Default::default() }.validate().is_err());
    }
}
