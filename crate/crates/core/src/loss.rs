//! UX loss, achieved completion rate and the projection error.
//!
//! For actual difficulties `d` and required difficulties `r` over one cluster
//! of `M` players:
//!
//! ```text
//! ux(r)   = var(r) + alpha/M * sum_i (d_i - r_i)^2       (population variance)
//! rate(r) = 1/M * #{ i : d_i >= r_i }
//! ```
//!
//! The rate is piecewise constant in `r`, so it has no useful gradient. The
//! projection instead descends `+mean(r)` when the rate is too low (lowering
//! every requirement) and `-mean(r)` when it is too high.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Actual and required difficulties of the same players.
#[derive(Debug, Clone, Copy)]
pub struct DifficultyPair<'a> {
    actual: &'a [f64],
    required: &'a [f64],
}

impl<'a> DifficultyPair<'a> {
    pub fn new(actual: &'a [f64], required: &'a [f64]) -> Result<Self> {
        if actual.is_empty() {
            return Err(Error::Empty("difficulty vector"));
        }
        if actual.len() != required.len() {
            return Err(Error::DimensionMismatch {
                what: "required difficulties",
                expected: actual.len(),
                found: required.len(),
            });
        }
        ensure_finite(actual, "actual difficulties")?;
        ensure_finite(required, "required difficulties")?;
        Ok(Self { actual, required })
    }

    pub fn actual(&self) -> &'a [f64] {
        self.actual
    }

    pub fn required(&self) -> &'a [f64] {
        self.required
    }

    pub fn len(&self) -> usize {
        self.actual.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actual.is_empty()
    }

    pub fn ux_loss(&self, cfg: &UxLossConfig) -> f64 {
        let m = self.len() as f64;
        let mean_r = mean(self.required);
        let var: f64 = self.required.iter().map(|r| (r - mean_r) * (r - mean_r)).sum::<f64>() / m;
        let fit: f64 = self
            .actual
            .iter()
            .zip(self.required)
            .map(|(d, r)| (d - r) * (d - r))
            .sum::<f64>()
            / m;
        var + cfg.alpha * fit
    }

    /// `d ux / d r_j = 2/M (r_j - mean(r)) + 2 alpha/M (r_j - d_j)`
    pub fn ux_output_grad(&self, cfg: &UxLossConfig) -> Vec<f64> {
        let m = self.len() as f64;
        let mean_r = mean(self.required);
        self.actual
            .iter()
            .zip(self.required)
            .map(|(d, r)| 2.0 / m * (r - mean_r) + 2.0 * cfg.alpha / m * (r - d))
            .collect()
    }

    /// Number of players with `actual >= required`.
    pub fn completions(&self) -> usize {
        self.actual.iter().zip(self.required).filter(|(d, r)| d >= r).count()
    }

    pub fn completion_rate(&self) -> f64 {
        self.completions() as f64 / self.len() as f64
    }

    pub fn projection_signal(&self, spec: &CompletionSpec) -> ProjectionSignal {
        let rate = self.completion_rate();
        if spec.is_satisfied(rate) {
            ProjectionSignal::Satisfied
        } else if rate < spec.target {
            ProjectionSignal::Descend {
                direction: Direction::Lower,
                error: mean(self.required),
            }
        } else {
            ProjectionSignal::Descend {
                direction: Direction::Raise,
                error: -mean(self.required),
            }
        }
    }
}

/// Weight of the fidelity term of the UX loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UxLossConfig {
    pub alpha: f64,
}

impl Default for UxLossConfig {
    fn default() -> Self {
        Self { alpha: 1.0 }
    }
}

impl UxLossConfig {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidConfig("alpha must be finite and >= 0".into()));
        }
        Ok(Self { alpha })
    }
}

pub const DEFAULT_TOLERANCE: f64 = 0.005;

/// Target completion rate and the accepted band around it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompletionSpec {
    pub target: f64,
    pub tolerance: f64,
}

impl CompletionSpec {
    pub fn new(target: f64, tolerance: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&target) {
            return Err(Error::InvalidConfig("target completion must be in [0, 1]".into()));
        }
        if !(tolerance > 0.0 && tolerance < 1.0) {
            return Err(Error::InvalidConfig("tolerance must be in (0, 1)".into()));
        }
        Ok(Self { target, tolerance })
    }

    pub fn with_default_tolerance(target: f64) -> Result<Self> {
        Self::new(target, DEFAULT_TOLERANCE)
    }

    pub fn is_satisfied(&self, rate: f64) -> bool {
        (rate - self.target).abs() <= self.tolerance
    }
}

/// Which way the required difficulties must move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Completion too low: descend `+mean`.
    Lower,
    /// Completion too high: descend `-mean`.
    Raise,
}

/// Result of checking the completion constraint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProjectionSignal {
    Satisfied,
    Descend { direction: Direction, error: f64 },
}

impl ProjectionSignal {
    /// `d error / d r_j`, identical for every player: `+1/M` or `-1/M`.
    pub fn output_grad(&self, m: usize) -> Option<Vec<f64>> {
        match self {
            ProjectionSignal::Satisfied => None,
            ProjectionSignal::Descend { direction, .. } => {
                let g = match direction {
                    Direction::Lower => 1.0 / m as f64,
                    Direction::Raise => -1.0 / m as f64,
                };
                Some(alloc::vec![g; m])
            }
        }
    }

    pub fn is_satisfied(&self) -> bool {
        matches!(self, ProjectionSignal::Satisfied)
    }
}

pub fn ux_loss(actual: &[f64], required: &[f64], cfg: &UxLossConfig) -> Result<f64> {
    Ok(DifficultyPair::new(actual, required)?.ux_loss(cfg))
}

pub fn ux_loss_output_grad(actual: &[f64], required: &[f64], cfg: &UxLossConfig) -> Result<Vec<f64>> {
    Ok(DifficultyPair::new(actual, required)?.ux_output_grad(cfg))
}

pub fn achieved_completion_rate(actual: &[f64], required: &[f64]) -> Result<f64> {
    Ok(DifficultyPair::new(actual, required)?.completion_rate())
}

pub fn projection_error(actual: &[f64], required: &[f64], spec: &CompletionSpec) -> Result<ProjectionSignal> {
    Ok(DifficultyPair::new(actual, required)?.projection_signal(spec))
}

/// Unique unconstrained minimizer of the UX loss:
/// `r*_j = (mean(d) + alpha d_j) / (1 + alpha)`.
pub fn analytic_ux_minimizer(actual: &[f64], cfg: &UxLossConfig) -> Vec<f64> {
    if actual.is_empty() {
        return Vec::new();
    }
    let m = mean(actual);
    actual.iter().map(|d| (m + cfg.alpha * d) / (1.0 + cfg.alpha)).collect()
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}
