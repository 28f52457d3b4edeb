//! Run configuration, loadable from a small key-value (TOML) file.

use std::path::Path;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::embedding::{Metric, Normalization};
use crate::error::{Error, Result};

/// Which frames count toward the initial unconditional fill of the sample set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeedMode {
    /// The first K frames that reach the sampler (i.e. pass the gate).
    #[default]
    Gated,
    /// The first K frames of the raw stream, admitted without gating.
    Raw,
}

impl FromStr for SeedMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gated" => Ok(Self::Gated),
            "raw" => Ok(Self::Raw),
            other => Err(Error::Config(format!(
                "unknown seed mode {other:?} (expected gated or raw)"
            ))),
        }
    }
}

/// What the enhanced pipeline does when the enhancer fails on a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FailurePolicy {
    #[default]
    Skip,
    Abort,
}

impl FromStr for FailurePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "skip" => Ok(Self::Skip),
            "abort" => Ok(Self::Abort),
            other => Err(Error::Config(format!(
                "unknown failure policy {other:?} (expected skip or abort)"
            ))),
        }
    }
}

/// Visibility regimes and their empirically chosen gate thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Clear,
    Moderate,
    Low,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::Clear, Regime::Moderate, Regime::Low];

    /// Gate threshold for the plain pipeline.
    pub fn tau_ss(self) -> f64 {
        match self {
            Regime::Clear => 70.0,
            Regime::Moderate => 50.0,
            Regime::Low => 40.0,
        }
    }

    /// Pre-enhancement gate threshold for the enhanced pipeline. Clear
    /// footage is never enhanced in practice; it keeps the plain threshold.
    pub fn tau_ss_enhanced(self) -> f64 {
        match self {
            Regime::Clear | Regime::Moderate => 70.0,
            Regime::Low => 40.0,
        }
    }

    /// Post-enhancement threshold, the same for every regime.
    pub fn tau_ses(self) -> f64 {
        70.0
    }

    pub fn name(self) -> &'static str {
        match self {
            Regime::Clear => "clear",
            Regime::Moderate => "moderate",
            Regime::Low => "low",
        }
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clear" => Ok(Self::Clear),
            "moderate" => Ok(Self::Moderate),
            "low" => Ok(Self::Low),
            other => Err(Error::Config(format!(
                "unknown regime {other:?} (expected clear, moderate or low)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    /// Sample set capacity K.
    pub capacity: usize,
    /// Gate threshold on the 0-100 similarity score.
    pub tau_ss: f64,
    /// Threshold applied to the score of the enhanced embedding.
    pub tau_ses: f64,
    /// Multiplier applied to cosines before the softmax.
    pub softmax_scale: f64,
    pub metric: Metric,
    pub normalization: Normalization,
    pub seed_mode: SeedMode,
    /// Weight of the semantic term in the evaluation score.
    pub srum_weight: f64,
    /// Width of the representativeness window, in seconds. When absent the
    /// evaluator uses 10% of the stream duration.
    pub rep_window_seconds: Option<f64>,
    pub enhancer_failure_policy: FailurePolicy,
    pub enhancer_timeout_ms: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            capacity: 6,
            tau_ss: Regime::Clear.tau_ss(),
            tau_ses: Regime::Clear.tau_ses(),
            softmax_scale: 100.0,
            metric: Metric::Euclidean,
            normalization: Normalization::L1,
            seed_mode: SeedMode::Gated,
            srum_weight: 0.5,
            rep_window_seconds: None,
            enhancer_failure_policy: FailurePolicy::Skip,
            enhancer_timeout_ms: 5_000,
        }
    }
}

impl SamplerConfig {
    pub fn for_regime(regime: Regime) -> Self {
        Self {
            tau_ss: regime.tau_ss(),
            tau_ses: regime.tau_ses(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.capacity == 0 {
            return bad("capacity must be at least 1".into());
        }
        for (name, tau) in [("tau_ss", self.tau_ss), ("tau_ses", self.tau_ses)] {
            if !(0.0..=100.0).contains(&tau) {
                return bad(format!("{name} = {tau} outside [0, 100]"));
            }
        }
        if !(self.softmax_scale.is_finite() && self.softmax_scale > 0.0) {
            return bad(format!(
                "softmax_scale = {} must be positive",
                self.softmax_scale
            ));
        }
        if !(0.0..=1.0).contains(&self.srum_weight) {
            return bad(format!("srum_weight = {} outside [0, 1]", self.srum_weight));
        }
        if let Some(w) = self.rep_window_seconds {
            if !(w.is_finite() && w > 0.0) {
                return bad(format!("rep_window_seconds = {w} must be positive"));
            }
        }
        if self.enhancer_timeout_ms == 0 {
            return bad("enhancer_timeout_ms must be positive".into());
        }
        Ok(())
    }

    pub fn enhancer_timeout(&self) -> Duration {
        Duration::from_millis(self.enhancer_timeout_ms)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
