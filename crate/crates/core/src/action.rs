use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Resolution choice for one frame.
///
/// `Full` keeps the original size and makes the frame a key frame. The other
/// three shrink each linear dimension by 2, 4 and 8 and are processed as
/// non-key frames whose features are propagated from the last key frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Action {
    Full,
    Half,
    Quarter,
    Eighth,
}

impl Action {
    pub const COUNT: usize = 4;
    pub const ALL: [Action; 4] = [Action::Full, Action::Half, Action::Quarter, Action::Eighth];
    pub const NON_KEY: [Action; 3] = [Action::Half, Action::Quarter, Action::Eighth];

    /// Zero-based position in [`Action::ALL`], also the Q-network output row.
    pub fn index(self) -> usize {
        match self {
            Action::Full => 0,
            Action::Half => 1,
            Action::Quarter => 2,
            Action::Eighth => 3,
        }
    }

    pub fn from_index(index: usize) -> Result<Self> {
        Self::ALL
            .get(index)
            .copied()
            .ok_or_else(|| Error::Domain(format!("action index {index} out of range 0..4")))
    }

    pub fn linear_downsample(self) -> u32 {
        1 << self.index()
    }

    /// Fraction of the original pixels kept.
    pub fn pixel_ratio(self) -> f64 {
        let d = f64::from(self.linear_downsample());
        1.0 / (d * d)
    }

    pub fn is_key(self) -> bool {
        self == Action::Full
    }

    /// Two-bit history code: `Full` is `00`, `Eighth` is `11`.
    pub fn code_bits(self) -> [f64; 2] {
        let i = self.index();
        [((i >> 1) & 1) as f64, (i & 1) as f64]
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a{}", self.index() + 1)
    }
}

impl FromStr for Action {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "a1" | "full" => Ok(Action::Full),
            "a2" | "half" => Ok(Action::Half),
            "a3" | "quarter" => Ok(Action::Quarter),
            "a4" | "eighth" => Ok(Action::Eighth),
            other => Err(Error::Config(format!("unknown action `{other}` (expected a1..a4)"))),
        }
    }
}

impl From<Action> for String {
    fn from(a: Action) -> String {
        a.to_string()
    }
}

impl TryFrom<String> for Action {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}
