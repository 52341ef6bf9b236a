//! Synthetic player populations with known ground truth, difficulty mappings
//! and the rule-based baseline.
//!
//! Distributions (documented so the empirical moments can be checked):
//!
//! - `linear`: features i.i.d. `N(0, 1)`; weights i.i.d. `N(0, 1/Z)`;
//!   `g(x) = w . x`.
//! - `piecewise`: as `linear` plus a jump of [`PIECEWISE_JUMP`] when `x_0 > 0`.
//! - `heterogeneous-segments`: each player belongs to one of `segments` latent
//!   segments (proportions `∝ U(0.5, 1.5)`). Segment centers are i.i.d.
//!   `N(0, SEGMENT_CENTER_SD^2)` per feature, spreads `U(0.7, 1.3)`, and
//!   `x = center + spread * N(0, I)`. Difficulty inside a segment is
//!   `base + scale * u . (x - center) / spread` with `base ~ U(4, 10)`,
//!   `scale ~ U(0.5, 2)` and `u` a random unit vector, so segments differ in
//!   both level and spread.
//!
//! Actual difficulty is `g(x) + N(0, noise_sd^2)`, where `noise_sd` defaults to
//! `0.1 * sd(g(x))`.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::PlayerDataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::DEFAULT_INPUT_DIM;
use crate::rng;

pub const PIECEWISE_JUMP: f64 = 2.0;
pub const SEGMENT_CENTER_SD: f64 = 3.0;
pub const DEFAULT_SEGMENTS: usize = 10;
pub const DEFAULT_NOISE_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Linear,
    Piecewise,
    HeterogeneousSegments,
}

impl ScenarioKind {
    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::Linear => "linear",
            ScenarioKind::Piecewise => "piecewise",
            ScenarioKind::HeterogeneousSegments => "heterogeneous-segments",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "linear" => Some(ScenarioKind::Linear),
            "piecewise" => Some(ScenarioKind::Piecewise),
            "heterogeneous-segments" => Some(ScenarioKind::HeterogeneousSegments),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScenario {
    pub players: usize,
    pub feature_dim: usize,
    pub kind: ScenarioKind,
    /// `None` uses `0.1 * sd(g(x))`.
    pub noise_sd: Option<f64>,
    /// Latent segments of `heterogeneous-segments`.
    pub segments: usize,
    pub seed: u64,
    /// Label of the period whose difficulty is being set.
    pub period: String,
    /// Label of the earlier period the features are aggregated over.
    pub feature_period: String,
}

impl SyntheticScenario {
    pub fn new(kind: ScenarioKind, players: usize, feature_dim: usize, seed: u64) -> Self {
        Self {
            players,
            feature_dim,
            kind,
            noise_sd: None,
            segments: DEFAULT_SEGMENTS,
            seed,
            period: "T".into(),
            feature_period: "T'".into(),
        }
    }

    /// 20,000 players, 40 features, 10 segments, seed 7.
    pub fn benchmark() -> Self {
        Self::new(ScenarioKind::HeterogeneousSegments, 20_000, DEFAULT_INPUT_DIM, 7)
    }

    pub fn validate(&self) -> Result<()> {
        if self.players < 2 {
            return Err(Error::InvalidConfig("players must be at least 2".into()));
        }
        if self.feature_dim == 0 {
            return Err(Error::InvalidConfig("feature_dim must be positive".into()));
        }
        if let Some(sd) = self.noise_sd {
            if !(sd >= 0.0 && sd.is_finite()) {
                return Err(Error::InvalidConfig("noise_sd must be finite and >= 0".into()));
            }
        }
        if self.kind == ScenarioKind::HeterogeneousSegments && self.segments == 0 {
            return Err(Error::InvalidConfig("segments must be positive".into()));
        }
        Ok(())
    }
}

/// Parameters of the noiseless difficulty function `g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GroundTruth {
    Linear {
        weights: Vec<f64>,
    },
    Piecewise {
        weights: Vec<f64>,
        jump: f64,
    },
    HeterogeneousSegments {
        proportions: Vec<f64>,
        centers: Matrix,
        spreads: Vec<f64>,
        bases: Vec<f64>,
        scales: Vec<f64>,
        directions: Matrix,
        /// Latent segment of every player.
        segment_of: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub dataset: PlayerDataset,
    pub truth: GroundTruth,
    /// Difficulty before noise.
    pub noiseless: Vec<f64>,
    pub noise_sd: f64,
}

fn normal(rng: &mut rng::Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn generate(scenario: &SyntheticScenario) -> Result<Generated> {
    scenario.validate()?;
    let mut rng = rng::seeded(scenario.seed);
    let (m, z) = (scenario.players, scenario.feature_dim);
    let (features, noiseless, truth) = match scenario.kind {
        ScenarioKind::Linear | ScenarioKind::Piecewise => {
            let w_sd = libm::sqrt(1.0 / z as f64);
            let weights: Vec<f64> = (0..z).map(|_| w_sd * normal(&mut rng)).collect();
            let data: Vec<f64> = (0..m * z).map(|_| normal(&mut rng)).collect();
            let x = Matrix::new(m, z, data)?;
            let jump = if scenario.kind == ScenarioKind::Piecewise {
                PIECEWISE_JUMP
            } else {
                0.0
            };
            let g: Vec<f64> = x
                .iter_rows()
                .map(|r| {
                    let lin: f64 = r.iter().zip(&weights).map(|(a, b)| a * b).sum();
                    if r[0] > 0.0 {
                        lin + jump
                    } else {
                        lin
                    }
                })
                .collect();
            let truth = if scenario.kind == ScenarioKind::Linear {
                GroundTruth::Linear { weights }
            } else {
                GroundTruth::Piecewise { weights, jump }
            };
            (x, g, truth)
        }
        ScenarioKind::HeterogeneousSegments => {
            let s = scenario.segments;
            let raw: Vec<f64> = (0..s).map(|_| rng.random_range(0.5..1.5)).collect();
            let total: f64 = raw.iter().sum();
            let proportions: Vec<f64> = raw.iter().map(|p| p / total).collect();
            let centers = Matrix::new(s, z, (0..s * z).map(|_| SEGMENT_CENTER_SD * normal(&mut rng)).collect())?;
            let spreads: Vec<f64> = (0..s).map(|_| rng.random_range(0.7..1.3)).collect();
            let bases: Vec<f64> = (0..s).map(|_| rng.random_range(4.0..10.0)).collect();
            let scales: Vec<f64> = (0..s).map(|_| rng.random_range(0.5..2.0)).collect();
            let mut dirs = Vec::with_capacity(s * z);
            for _ in 0..s {
                let u: Vec<f64> = (0..z).map(|_| normal(&mut rng)).collect();
                let norm = libm::sqrt(u.iter().map(|v| v * v).sum::<f64>()).max(f64::MIN_POSITIVE);
                dirs.extend(u.iter().map(|v| v / norm));
            }
            let directions = Matrix::new(s, z, dirs)?;

            let mut segment_of = Vec::with_capacity(m);
            let mut data = Vec::with_capacity(m * z);
            let mut g = Vec::with_capacity(m);
            for _ in 0..m {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut seg = s - 1;
                for (j, p) in proportions.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        seg = j;
                        break;
                    }
                }
                let mut proj = 0.0;
                for (c, dir) in centers.row(seg).iter().zip(directions.row(seg)) {
                    let e = normal(&mut rng);
                    data.push(c + spreads[seg] * e);
                    proj += dir * e;
                }
                segment_of.push(seg);
                g.push(bases[seg] + scales[seg] * proj);
            }
            let truth = GroundTruth::HeterogeneousSegments {
                proportions,
                centers,
                spreads,
                bases,
                scales,
                directions,
                segment_of,
            };
            (Matrix::new(m, z, data)?, g, truth)
        }
    };

    let noise_sd = match scenario.noise_sd {
        Some(sd) => sd,
        None => DEFAULT_NOISE_FRACTION * std_dev(&noiseless),
    };
    let difficulty: Vec<f64> = noiseless
        .iter()
        .map(|g| {
            if noise_sd > 0.0 {
                g + noise_sd * normal(&mut rng)
            } else {
                *g
            }
        })
        .collect();
    Ok(Generated {
        dataset: PlayerDataset::new(features, difficulty)?,
        truth,
        noiseless,
        noise_sd,
    })
}

fn std_dev(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    libm::sqrt(v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64)
}

/// Strictly monotone map between difficulty and the game parameter that
/// realizes it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DifficultyMapping {
    Identity,
    /// `slope * d + intercept`, `slope != 0`.
    Affine {
        slope: f64,
        intercept: f64,
    },
    /// `scale * exp(rate * d)`, `scale > 0`, `rate != 0`; inverse defined for
    /// parameters `> 0`.
    Exponential {
        scale: f64,
        rate: f64,
    },
}

impl DifficultyMapping {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            DifficultyMapping::Identity => true,
            DifficultyMapping::Affine { slope, intercept } => {
                slope != 0.0 && slope.is_finite() && intercept.is_finite()
            }
            DifficultyMapping::Exponential { scale, rate } => {
                scale > 0.0 && scale.is_finite() && rate != 0.0 && rate.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig("mapping is not strictly monotone".into()))
        }
    }

    pub fn apply(&self, d: f64) -> Result<f64> {
        self.validate()?;
        if !d.is_finite() {
            return Err(Error::OutOfRange(alloc::format!("difficulty {d}")));
        }
        let p = match *self {
            DifficultyMapping::Identity => d,
            DifficultyMapping::Affine { slope, intercept } => slope * d + intercept,
            DifficultyMapping::Exponential { scale, rate } => scale * libm::exp(rate * d),
        };
        if p.is_finite() {
            Ok(p)
        } else {
            Err(Error::OutOfRange(alloc::format!("difficulty {d} overflows")))
        }
    }

    pub fn invert(&self, p: f64) -> Result<f64> {
        self.validate()?;
        if !p.is_finite() {
            return Err(Error::OutOfRange(alloc::format!("parameter {p}")));
        }
        match *self {
            DifficultyMapping::Identity => Ok(p),
            DifficultyMapping::Affine { slope, intercept } => Ok((p - intercept) / slope),
            DifficultyMapping::Exponential { scale, rate } => {
                if p <= 0.0 {
                    Err(Error::OutOfRange(alloc::format!(
                        "exponential mapping needs a positive parameter, got {p}"
                    )))
                } else {
                    Ok(libm::log(p / scale) / rate)
                }
            }
        }
    }
}

pub fn apply_mapping(m: &DifficultyMapping, d: &[f64]) -> Result<Vec<f64>> {
    d.iter().map(|&v| m.apply(v)).collect()
}

pub fn invert_mapping(m: &DifficultyMapping, p: &[f64]) -> Result<Vec<f64>> {
    p.iter().map(|&v| m.invert(v)).collect()
}

/// `if x[feature] > threshold { difficulty }`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub feature: usize,
    pub threshold: f64,
    pub difficulty: f64,
}

/// If-else cascade: the first matching rule wins, otherwise the default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleBasedPolicy {
    pub rules: Vec<Rule>,
    pub default_difficulty: f64,
}

impl RuleBasedPolicy {
    pub fn constant(difficulty: f64) -> Self {
        Self {
            rules: Vec::new(),
            default_difficulty: difficulty,
        }
    }

    pub fn validate(&self, feature_dim: usize) -> Result<()> {
        for r in &self.rules {
            if r.feature >= feature_dim {
                return Err(Error::OutOfRange(alloc::format!(
                    "rule feature {} with {} features",
                    r.feature,
                    feature_dim
                )));
            }
            if !r.threshold.is_finite() || !r.difficulty.is_finite() {
                return Err(Error::NonFinite("rule"));
            }
        }
        if !self.default_difficulty.is_finite() {
            return Err(Error::NonFinite("default difficulty"));
        }
        Ok(())
    }

    /// Index of the first matching rule, `None` for the default branch.
    pub fn matching_rule(&self, row: &[f64]) -> Option<usize> {
        self.rules.iter().position(|r| row[r.feature] > r.threshold)
    }

    pub fn difficulty_for(&self, row: &[f64]) -> f64 {
        match self.matching_rule(row) {
            Some(i) => self.rules[i].difficulty,
            None => self.default_difficulty,
        }
    }

    /// Builds a cascade over `(feature, threshold)` splits whose every branch
    /// has the given completion rate on `dataset`: each branch gets the
    /// `round(rate * n)`-th largest actual difficulty among the players it
    /// captures.
    pub fn calibrate(dataset: &PlayerDataset, splits: &[(usize, f64)], rate: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rate) {
            return Err(Error::InvalidConfig("rate must be in [0, 1]".into()));
        }
        let mut policy = RuleBasedPolicy {
            rules: splits
                .iter()
                .map(|&(feature, threshold)| Rule {
                    feature,
                    threshold,
                    difficulty: 0.0,
                })
                .collect(),
            default_difficulty: 0.0,
        };
        policy.validate(dataset.feature_dim())?;
        let mut branches: Vec<Vec<f64>> = vec![Vec::new(); splits.len() + 1];
        for (row, &d) in dataset.features().iter_rows().zip(dataset.difficulty()) {
            let b = policy.matching_rule(row).unwrap_or(splits.len());
            branches[b].push(d);
        }
        let level = |mut ds: Vec<f64>| -> f64 {
            if ds.is_empty() {
                return 0.0;
            }
            ds.sort_by(|a, b| b.total_cmp(a));
            let n = libm::round(rate * ds.len() as f64) as usize;
            if n == 0 {
                // Nobody completes: just above the best player.
                ds[0] + 1.0
            } else {
                ds[n - 1]
            }
        };
        let mut levels: Vec<f64> = branches.into_iter().map(level).collect();
        policy.default_difficulty = levels.pop().unwrap_or(0.0);
        for (r, l) in policy.rules.iter_mut().zip(levels) {
            r.difficulty = l;
        }
        Ok(policy)
    }
}

pub fn rule_based_assign(policy: &RuleBasedPolicy, x: &Matrix) -> Result<Vec<f64>> {
    policy.validate(x.cols())?;
    Ok(x.iter_rows().map(|r| policy.difficulty_for(r)).collect())
}

/// Splits of the frozen benchmark baseline.
pub const BENCHMARK_SPLITS: [(usize, f64); 3] = [(0, 0.0), (1, 0.0), (2, 0.0)];

/// Completion rate the frozen baseline was calibrated to.
pub const BENCHMARK_BASELINE_RATE: f64 = 0.12;

/// The rule-based baseline of the default benchmark
/// ([`SyntheticScenario::benchmark`]).
///
/// Produced by [`RuleBasedPolicy::calibrate`] over [`BENCHMARK_SPLITS`] at
/// [`BENCHMARK_BASELINE_RATE`] on that dataset, then frozen.
pub fn benchmark_policy() -> RuleBasedPolicy {
    RuleBasedPolicy {
        rules: vec![
            Rule {
                feature: 0,
                threshold: 0.0,
                difficulty: BENCHMARK_LEVELS[0],
            },
            Rule {
                feature: 1,
                threshold: 0.0,
                difficulty: BENCHMARK_LEVELS[1],
            },
            Rule {
                feature: 2,
                threshold: 0.0,
                difficulty: BENCHMARK_LEVELS[2],
            },
        ],
        default_difficulty: BENCHMARK_LEVELS[3],
    }
}

const BENCHMARK_LEVELS: [f64; 4] = [
    8.117443446260049,
    9.49146949476596,
    10.208220264706075,
    10.25582997351748,
];

/// Completion flag `actual >= assigned` per player.
pub fn simulate_outcomes(actual: &[f64], assigned: &[f64]) -> Result<Vec<bool>> {
    if actual.len() != assigned.len() {
        return Err(Error::DimensionMismatch {
            what: "assigned difficulties",
            expected: actual.len(),
            found: assigned.len(),
        });
    }
    Ok(actual.iter().zip(assigned).map(|(d, r)| d >= r).collect())
}
