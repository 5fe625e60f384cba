//! Parametric stand-in for the vision stack's per-frame accuracy.
//!
//! A key frame scores a difficulty-dependent plateau. A non-key frame scores
//! that plateau times two factors:
//!
//! * a resolution factor, logistic in `ln(pixel_ratio)`, equal to one at full
//!   resolution and collapsing below a knee that moves toward higher pixel
//!   ratios as content gets harder;
//! * a flow factor that decays exponentially from one toward a floor as motion
//!   accumulates since the key frame the features were propagated from.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::action::Action;
use crate::error::{Error, Result};

/// Hidden per-frame content that drives accuracy. Agents only see it through
/// the noisy feature proxies of [`crate::env::FrameState`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameTruth {
    /// Motion magnitude of this frame, in the same units as flow thresholds.
    pub motion_mag: f64,
    /// Motion accumulated over the non-key frames since the last key frame.
    pub accum_motion_since_key: f64,
    pub frame_difficulty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyParams {
    #[serde(default = "default_version")]
    pub version: u32,
    /// Key-frame accuracy on the easiest content.
    pub key_accuracy_max: f64,
    /// Key-frame accuracy lost between the easiest and hardest content.
    pub key_accuracy_difficulty_slope: f64,
    /// Pixel-ratio knee of the resolution factor for difficulty 0.
    pub knee_easy: f64,
    /// Pixel-ratio knee for difficulty 1; intermediate knees interpolate geometrically.
    pub knee_hard: f64,
    /// Logistic width in natural-log pixel-ratio units.
    pub knee_width: f64,
    /// Lowest value of the flow factor.
    pub flow_floor: f64,
    /// Accumulated motion at which the flow factor has decayed by `1/e` of its range.
    pub flow_scale: f64,
}

fn default_version() -> u32 {
    1
}

const ACCURACY_MODEL_JSON: &str = include_str!("../../../configs/accuracy_model.json");

impl Default for AccuracyParams {
    fn default() -> Self {
        Self::from_json(ACCURACY_MODEL_JSON).expect("shipped accuracy model is valid")
    }
}

impl AccuracyParams {
    pub fn from_json(text: &str) -> Result<Self> {
        let params: Self = serde_json::from_str(text)?;
        params.validate()?;
        Ok(params)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        if !(in_unit(self.key_accuracy_max)
            && in_unit(self.key_accuracy_difficulty_slope)
            && self.key_accuracy_difficulty_slope <= self.key_accuracy_max)
        {
            return Err(Error::Config(
                "key accuracy plateau must stay within [0, 1] for every difficulty".into(),
            ));
        }
        if !(self.knee_easy > 0.0 && self.knee_hard > 0.0 && self.knee_width > 0.0 && self.flow_scale > 0.0) {
            return Err(Error::Config(
                "knees, knee_width and flow_scale must be strictly positive".into(),
            ));
        }
        if !in_unit(self.flow_floor) {
            return Err(Error::Config("flow_floor must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn key_accuracy(&self, difficulty: f64) -> f64 {
        self.key_accuracy_max - self.key_accuracy_difficulty_slope * difficulty.clamp(0.0, 1.0)
    }

    pub fn knee(&self, difficulty: f64) -> f64 {
        let d = difficulty.clamp(0.0, 1.0);
        self.knee_easy * (self.knee_hard / self.knee_easy).powf(d)
    }

    /// Resolution factor, exactly 1 at `pixel_ratio == 1` and increasing in `pixel_ratio`.
    pub fn resolution_factor(&self, pixel_ratio: f64, difficulty: f64) -> f64 {
        let ln_knee = self.knee(difficulty).ln();
        let logistic = |ratio: f64| 1.0 / (1.0 + (-(ratio.ln() - ln_knee) / self.knee_width).exp());
        if pixel_ratio >= 1.0 {
            return 1.0;
        }
        (logistic(pixel_ratio) / logistic(1.0)).min(1.0)
    }

    /// Flow factor, exactly 1 with no accumulated motion.
    pub fn flow_factor(&self, accum_motion: f64) -> f64 {
        let accum = accum_motion.max(0.0);
        self.flow_floor + (1.0 - self.flow_floor) * (-accum / self.flow_scale).exp()
    }
}

/// Per-frame accuracy proxy in `[0, 1]` for `action` applied to a frame with content `truth`.
pub fn accuracy_model(params: &AccuracyParams, truth: &FrameTruth, action: Action) -> f64 {
    let key = params.key_accuracy(truth.frame_difficulty);
    if action.is_key() {
        return key;
    }
    key * non_key_factor(params, truth, action.pixel_ratio())
}

/// Accuracy of a non-key frame at an arbitrary pixel ratio; used to probe the curve shape.
pub fn non_key_accuracy(params: &AccuracyParams, truth: &FrameTruth, pixel_ratio: f64) -> f64 {
    params.key_accuracy(truth.frame_difficulty) * non_key_factor(params, truth, pixel_ratio)
}

fn non_key_factor(params: &AccuracyParams, truth: &FrameTruth, pixel_ratio: f64) -> f64 {
    params.resolution_factor(pixel_ratio, truth.frame_difficulty)
        * params.flow_factor(truth.accum_motion_since_key)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn truth(difficulty: f64, accum: f64) -> FrameTruth {
        FrameTruth {
            motion_mag: 1.0,
            accum_motion_since_key: accum,
            frame_difficulty: difficulty,
        }
    }

    #[test]
    fn full_ratio_without_motion_equals_key() {
        let p = AccuracyParams::default();
        for d in [0.0, 0.3, 1.0] {
            let t = truth(d, 0.0);
            assert_eq!(non_key_accuracy(&p, &t, 1.0), p.key_accuracy(d));
        }
    }

    #[test]
    fn easy_content_tolerates_quarter_pixels() {
        let p = AccuracyParams::default();
        let t = truth(0.0, 0.0);
        let key = accuracy_model(&p, &t, Action::Full);
        let half = accuracy_model(&p, &t, Action::Half);
        assert!((key - half) / key < 0.02, "key {key} half {half}");
    }

    #[test]
    fn key_plateau_matches_default_line() {
        let p = AccuracyParams::default();
        assert!((p.key_accuracy(0.0) - 0.9).abs() < 1e-12);
        assert!((p.key_accuracy(1.0) - 0.65).abs() < 1e-12);
    }

    #[test]
    fn accuracy_ordering_over_grid() {
        let p = AccuracyParams::default();
        for i in 0..=20 {
            for j in 0..=30 {
                let t = truth(i as f64 / 20.0, j as f64 * 2.0);
                let acc: Vec<f64> = Action::ALL.iter().map(|&a| accuracy_model(&p, &t, a)).collect();
                assert!(acc.windows(2).all(|w| w[0] >= w[1]), "{acc:?} at {t:?}");
                assert!(acc.iter().all(|a| (0.0..=1.0).contains(a)));
            }
        }
    }

    #[test]
    fn harder_content_moves_the_knee_right() {
        let p = AccuracyParams::default();
        assert!(p.knee(1.0) > p.knee(0.5) && p.knee(0.5) > p.knee(0.0));
        let easy = p.resolution_factor(1.0 / 16.0, 0.0);
        let hard = p.resolution_factor(1.0 / 16.0, 1.0);
        assert!(easy > hard);
    }

    #[test]
    fn flow_factor_decays_to_floor() {
        let p = AccuracyParams::default();
        assert_eq!(p.flow_factor(0.0), 1.0);
        assert!(p.flow_factor(10.0) < 1.0);
        assert!((p.flow_factor(1e6) - p.flow_floor).abs() < 1e-12);
    }

    #[test]
    fn invalid_params_rejected() {
        let mut p = AccuracyParams::default();
        p.knee_width = 0.0;
        assert!(p.validate().is_err());
        let mut p = AccuracyParams::default();
        p.flow_floor = 1.5;
        assert!(p.validate().is_err());
    }
}
