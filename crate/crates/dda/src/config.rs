//! Run configuration file (TOML).

use std::path::{Path, PathBuf};

use dda_core::optimize::SystemConfig;
use dda_core::synth::{ScenarioKind, SyntheticScenario, DEFAULT_SEGMENTS};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::files::read_string;

/// Everything a run needs. Command-line flags override the matching keys.
///
/// ```toml
/// seed = 0
///
/// [paths]
/// dataset = "data.csv"
/// model_dir = "model"
///
/// [system]
/// k = 10
/// target = 0.09
///
/// [system.train]
/// eta_ux = 0.01
/// ```
///
/// The top-level `seed` is the master seed of clustering and training and
/// replaces `system.train.seed`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: Paths,
    pub scenario: ScenarioConfig,
    pub system: SystemConfig,
    pub report: ReportConfig,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub dataset: Option<PathBuf>,
    /// Directory of a previous `cluster` run whose assignment `train` reuses.
    pub clusters: Option<PathBuf>,
    pub model_dir: Option<PathBuf>,
    pub reports_dir: Option<PathBuf>,
    /// Rule-based baseline document.
    pub policy: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub players: usize,
    pub features: usize,
    pub kind: ScenarioKind,
    pub seed: u64,
    pub noise_sd: Option<f64>,
    pub segments: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let b = SyntheticScenario::benchmark();
        Self {
            players: b.players,
            features: b.feature_dim,
            kind: b.kind,
            seed: b.seed,
            noise_sd: None,
            segments: DEFAULT_SEGMENTS,
        }
    }
}

impl ScenarioConfig {
    pub fn scenario(&self) -> SyntheticScenario {
        let mut s = SyntheticScenario::new(self.kind, self.players, self.features, self.seed);
        s.noise_sd = self.noise_sd;
        s.segments = self.segments;
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    /// Per-cluster completion rate above which a cluster is counted.
    pub threshold: f64,
    /// Acceptable range of the overall completion rate.
    pub band: [f64; 2],
    /// Width of the per-cluster completion-rate histogram bins.
    pub bin_width: f64,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            threshold: 0.16,
            band: [0.08, 0.10],
            bin_width: 0.02,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_string(path)?;
        toml::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    /// Loads `path` when given, otherwise the defaults.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    /// The core configuration with the master seed applied.
    pub fn system(&self) -> SystemConfig {
        let mut s = self.system.clone();
        s.train.seed = self.seed;
        s
    }

    pub fn validate(&self) -> Result<()> {
        self.system().validate()?;
        let r = &self.report;
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(r.threshold) {
            return Err(Error::Validation("report.threshold must be in [0, 1]".into()));
        }
        if !(unit(r.band[0]) && unit(r.band[1]) && r.band[0] <= r.band[1]) {
            return Err(Error::Validation(
                "report.band must be an ordered pair in [0, 1]".into(),
            ));
        }
        if !(r.bin_width > 0.0 && r.bin_width <= 1.0) {
            return Err(Error::Validation("report.bin_width must be in (0, 1]".into()));
        }
        Ok(())
    }
}

/// The path of a required setting, or a validation error naming its flag.
pub fn require<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::Validation(format!("missing {flag} (or the matching key in --config)")))
}
