//! Training procedures: UX-loss descent, completion-rate projection and their
//! alternation, plus the per-cluster system built on top of them.
//!
//! [`train_ux`] approximates the map to the nearest UX-loss minimum with
//! minibatch SGD. [`project_completion`] approximates the map to the nearest
//! weights whose achieved completion rate is within tolerance of the target by
//! descending `±mean(outputs)`. [`alternate`] chains them and records, per
//! cycle, the distances between consecutive weight snapshots. Those distances
//! should shrink and settle; [`prop1_check`] measures how closely a run follows
//! that.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::cluster::{self, ClusterAssignment, FeatureNormalizer, KMeansConfig, KMeansInit};
use crate::dataset::PlayerDataset;
use crate::error::{Error, Result};
use crate::loss::{mean, CompletionSpec, DifficultyPair, Direction, ProjectionSignal, UxLossConfig};
use crate::matrix::Matrix;
use crate::nn::{Activation, Architecture, Gradients, Network, DEFAULT_HIDDEN_LAYERS, DEFAULT_HIDDEN_WIDTH};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// SGD learning rate for the UX phase.
    pub eta_ux: f64,
    /// Learning rate of the projection.
    pub eta_proj: f64,
    pub batch_size: usize,
    pub max_epochs_ux: usize,
    pub max_iter_proj: usize,
    pub max_alternations: usize,
    /// Relative improvement of the best epoch loss over `ux_patience` epochs
    /// below which the UX phase stops.
    pub ux_plateau_tol: f64,
    pub ux_patience: usize,
    /// Relative change of the cycle distance that ends the alternation.
    pub alternation_tol: f64,
    /// Shrink the projection rate in proportion to the latest cycle distance.
    pub scale_steps: bool,
    /// Undo a projection step that jumps over the target band and retry it at
    /// half the rate.
    pub proj_backoff: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            eta_ux: 0.01,
            eta_proj: 0.05,
            batch_size: 128,
            max_epochs_ux: 300,
            max_iter_proj: 400,
            max_alternations: 20,
            ux_plateau_tol: 1e-4,
            ux_patience: 5,
            alternation_tol: 1e-3,
            scale_steps: true,
            proj_backoff: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if !(self.eta_ux >= 0.0 && self.eta_ux.is_finite()) || !(self.eta_proj >= 0.0 && self.eta_proj.is_finite()) {
            return bad("learning rates must be finite and non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.max_epochs_ux == 0 || self.max_iter_proj == 0 || self.max_alternations == 0 {
            return bad("iteration budgets must be at least 1");
        }
        if self.ux_plateau_tol.is_nan()
            || self.ux_plateau_tol < 0.0
            || self.alternation_tol.is_nan()
            || self.alternation_tol < 0.0
        {
            return bad("tolerances must be non-negative");
        }
        if self.ux_patience == 0 {
            return bad("ux_patience must be at least 1");
        }
        Ok(())
    }

    fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Phase {
    Ux,
    Projection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub phase: Phase,
    pub ux_loss: f64,
    /// `|rate - target|`, NaN when the trace has no target.
    pub completion_abs_err: f64,
    /// Minibatch index within the epoch; `None` for full-set projection steps.
    pub batch_id: Option<usize>,
}

/// One `UX -> projection` cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlternationRecord {
    pub cycle: usize,
    /// Distance from the cycle's entry weights to the UX minimum it reached.
    pub dist_m_to_c: f64,
    /// Distance from that UX minimum to its projection.
    pub dist_m_to_next_c: f64,
    pub ux_epochs: usize,
    pub proj_iterations: usize,
    pub satisfied: bool,
}

/// Step-level and cycle-level history of one cluster's training.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub steps: Vec<StepRecord>,
    pub alternations: Vec<AlternationRecord>,
    alpha: f64,
    target: Option<f64>,
}

impl TrainingTrace {
    /// `alpha` and `target` are used only to fill the monitoring columns.
    pub fn new(alpha: f64, target: Option<f64>) -> Self {
        Self {
            steps: Vec::new(),
            alternations: Vec::new(),
            alpha,
            target,
        }
    }

    pub fn from_records(steps: Vec<StepRecord>, alternations: Vec<AlternationRecord>) -> Self {
        Self {
            steps,
            alternations,
            alpha: 1.0,
            target: None,
        }
    }

    fn record(&mut self, phase: Phase, pair: &DifficultyPair<'_>, batch_id: Option<usize>) {
        let ux_loss = pair.ux_loss(&UxLossConfig { alpha: self.alpha });
        let completion_abs_err = match self.target {
            Some(p) => (pair.completion_rate() - p).abs(),
            None => f64::NAN,
        };
        let step = self.steps.len();
        self.steps.push(StepRecord {
            step,
            phase,
            ux_loss,
            completion_abs_err,
            batch_id,
        });
    }

    /// Distances `‖Θ_i^C − Θ_i^M‖` for every cycle after the first, whose
    /// entry point is the initialization rather than a projected point.
    pub fn distance_series(&self) -> Vec<f64> {
        self.alternations
            .iter()
            .filter(|a| a.cycle > 0)
            .map(|a| a.dist_m_to_c)
            .collect()
    }

    /// Number of contiguous same-phase blocks.
    pub fn phase_blocks(&self) -> Vec<(Phase, usize)> {
        let mut blocks: Vec<(Phase, usize)> = Vec::new();
        for s in &self.steps {
            match blocks.last_mut() {
                Some((p, n)) if *p == s.phase => *n += 1,
                _ => blocks.push((s.phase, 1)),
            }
        }
        blocks
    }
}

fn check_inputs(x: &Matrix, d: &[f64]) -> Result<()> {
    if x.rows() != d.len() {
        return Err(Error::DimensionMismatch {
            what: "difficulty count",
            expected: x.rows(),
            found: d.len(),
        });
    }
    if d.len() < 2 {
        return Err(Error::TooFew {
            what: "players",
            needed: 2,
            found: d.len(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct UxOutcome {
    pub weights: Network,
    pub epochs: usize,
    /// Mean minibatch loss of every epoch.
    pub epoch_losses: Vec<f64>,
    pub plateaued: bool,
}

/// Minibatch SGD on the UX loss, variance taken over each minibatch.
///
/// Stops when the best epoch loss improved by less than a relative
/// `ux_plateau_tol` over the last `ux_patience` epochs, or after
/// `max_epochs_ux`, and returns the weights as they were at the end of the
/// epoch with the lowest mean loss. A non-finite loss returns
/// [`Error::Diverged`].
pub fn train_ux(
    w: &Network,
    x: &Matrix,
    d: &[f64],
    alpha: &UxLossConfig,
    cfg: &TrainConfig,
    trace: &mut TrainingTrace,
) -> Result<UxOutcome> {
    cfg.validate()?;
    check_inputs(x, d)?;
    let m = d.len();
    let batch = cfg.batch_size.min(m);
    let mut rng = rng::seeded(cfg.seed);
    let mut order: Vec<usize> = (0..m).collect();
    let mut weights = w.clone();
    let mut epoch_losses = Vec::new();
    let mut best = f64::INFINITY;
    let mut best_weights = w.clone();
    let mut best_so_far = Vec::new();
    let mut plateaued = false;

    for _ in 0..cfg.max_epochs_ux {
        let mut total = 0.0;
        let mut batches = 0;
        if batch < m {
            order.shuffle(&mut rng);
        }
        for (batch_id, idx) in order.chunks(batch).enumerate() {
            let owned;
            let (xb, db): (&Matrix, Vec<f64>) = if batch < m {
                owned = x.select_rows(idx);
                (&owned, idx.iter().map(|&i| d[i]).collect())
            } else {
                (x, d.to_vec())
            };
            let pass = weights.forward_pass(xb)?;
            if pass.outputs().iter().any(|v| !v.is_finite()) {
                return Err(Error::Diverged);
            }
            let pair = DifficultyPair::new(&db, pass.outputs())?;
            let loss = pair.ux_loss(alpha);
            if !loss.is_finite() {
                return Err(Error::Diverged);
            }
            trace.record(Phase::Ux, &pair, Some(batch_id));
            let upstream = pair.ux_output_grad(alpha);
            let g = weights.backward_pass(xb, &pass, &upstream)?;
            weights.apply_step(&g, cfg.eta_ux)?;
            total += loss;
            batches += 1;
        }
        let epoch_loss = total / batches as f64;
        epoch_losses.push(epoch_loss);
        if epoch_loss < best {
            best = epoch_loss;
            best_weights.clone_from(&weights);
        }
        best_so_far.push(best);
        let t = best_so_far.len();
        if t > cfg.ux_patience {
            let before = best_so_far[t - 1 - cfg.ux_patience];
            if before - best <= cfg.ux_plateau_tol * before.abs() {
                plateaued = true;
                break;
            }
        }
    }

    Ok(UxOutcome {
        weights: best_weights,
        epochs: epoch_losses.len(),
        epoch_losses,
        plateaued,
    })
}

#[derive(Debug, Clone)]
pub struct ProjectionOutcome {
    pub weights: Network,
    pub satisfied: bool,
    /// Forward evaluations performed, including the final check.
    pub iterations: usize,
    pub completion_rate: f64,
}

/// Gradient steps on `±mean(outputs)` until the achieved completion rate is
/// within tolerance of the target.
///
/// When `max_iter_proj` runs out, the weights with the smallest
/// `|rate - target|` seen are returned with `satisfied = false`.
pub fn project_completion(
    w: &Network,
    x: &Matrix,
    d: &[f64],
    spec: &CompletionSpec,
    cfg: &TrainConfig,
    trace: &mut TrainingTrace,
) -> Result<ProjectionOutcome> {
    cfg.validate()?;
    check_inputs(x, d)?;
    let m = d.len();
    let mut weights = w.clone();
    let mut eta = cfg.eta_proj;
    // Origin, gradient and direction of the last accepted step.
    let mut anchor: Option<(Network, Gradients, Direction)> = None;
    let mut best: Option<(f64, f64, Network)> = None;

    for iteration in 1..=cfg.max_iter_proj + 1 {
        let pass = weights.forward_pass(x)?;
        if pass.outputs().iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged);
        }
        let pair = DifficultyPair::new(d, pass.outputs())?;
        trace.record(Phase::Projection, &pair, None);
        let rate = pair.completion_rate();
        let err = (rate - spec.target).abs();
        let signal = pair.projection_signal(spec);
        let ProjectionSignal::Descend { direction, .. } = signal else {
            return Ok(ProjectionOutcome {
                weights,
                satisfied: true,
                iterations: iteration,
                completion_rate: rate,
            });
        };
        if best.as_ref().map_or(true, |(e, _, _)| err < *e) {
            best = Some((err, rate, weights.clone()));
        }
        if iteration > cfg.max_iter_proj {
            break;
        }
        if let Some((origin, g, _)) = anchor.as_ref().filter(|a| a.2 != direction) {
            // Jumped over the band: redo the step from its origin at half the rate.
            eta *= 0.5;
            weights = origin.clone();
            weights.apply_step(g, eta)?;
            continue;
        }
        let upstream = signal.output_grad(m).unwrap_or_default();
        let g = weights.backward_pass(x, &pass, &upstream)?;
        if cfg.proj_backoff {
            anchor = Some((weights.clone(), g.clone(), direction));
        }
        weights.apply_step(&g, eta)?;
    }

    let (_, rate, weights) = best.expect("at least one projection iteration");
    Ok(ProjectionOutcome {
        weights,
        satisfied: false,
        iterations: cfg.max_iter_proj + 1,
        completion_rate: rate,
    })
}

#[derive(Debug, Clone)]
pub struct AlternationOutcome {
    /// Weights after the last projection.
    pub weights: Network,
    pub satisfied: bool,
    /// The cycle distance settled before `max_alternations` ran out.
    pub converged: bool,
    pub cycles: usize,
}

/// Repeats `train_ux -> project_completion` and records the snapshot
/// distances of every cycle.
///
/// Stops when the projection leaves the UX minimum untouched, when
/// `‖Θ^C − Θ^M‖` changes by less than `alternation_tol` relative to the
/// previous cycle, or after `max_alternations`. With `scale_steps`, the
/// projection rate of a cycle is scaled by the latest `‖Θ^M − Θ^C_next‖` over
/// the first one (capped at 1). Every cycle reuses `cfg.seed` for the minibatch
/// order. A diverging phase is retried once with half its learning rate.
pub fn alternate(
    w: &Network,
    x: &Matrix,
    d: &[f64],
    alpha: &UxLossConfig,
    spec: &CompletionSpec,
    cfg: &TrainConfig,
    trace: &mut TrainingTrace,
) -> Result<AlternationOutcome> {
    cfg.validate()?;
    check_inputs(x, d)?;
    let mut entry = w.clone();
    let mut first: Option<f64> = None;
    let mut latest: Option<f64> = None;
    let mut previous_entry_distance: Option<f64> = None;
    let mut satisfied = false;
    let mut converged = false;
    let mut cycles = 0;

    for cycle in 0..cfg.max_alternations {
        cycles += 1;
        let scale = match (cfg.scale_steps, first, latest) {
            (true, Some(f), Some(l)) if f > 0.0 => (l / f).min(1.0),
            _ => 1.0,
        };
        let cycle_cfg = TrainConfig {
            eta_proj: cfg.eta_proj * scale,
            ..*cfg
        };

        let ux = match train_ux(&entry, x, d, alpha, &cycle_cfg, trace) {
            Err(Error::Diverged) => {
                let halved = TrainConfig {
                    eta_ux: cycle_cfg.eta_ux * 0.5,
                    ..cycle_cfg
                };
                train_ux(&entry, x, d, alpha, &halved, trace)?
            }
            other => other?,
        };
        let minimum = ux.weights;
        let proj = match project_completion(&minimum, x, d, spec, &cycle_cfg, trace) {
            Err(Error::Diverged) => {
                let halved = TrainConfig {
                    eta_proj: cycle_cfg.eta_proj * 0.5,
                    ..cycle_cfg
                };
                project_completion(&minimum, x, d, spec, &halved, trace)?
            }
            other => other?,
        };
        let dist_m_to_c = minimum.distance(&entry)?;
        let dist_m_to_next_c = minimum.distance(&proj.weights)?;
        trace.alternations.push(AlternationRecord {
            cycle,
            dist_m_to_c,
            dist_m_to_next_c,
            ux_epochs: ux.epochs,
            proj_iterations: proj.iterations,
            satisfied: proj.satisfied,
        });
        entry = proj.weights;
        satisfied = proj.satisfied;

        if proj.satisfied && dist_m_to_next_c == 0.0 {
            converged = true;
            break;
        }
        // The entry of cycle 0 is the initialization, not a projected point.
        if cycle > 0 {
            if let Some(p) = previous_entry_distance {
                if (dist_m_to_c - p).abs() <= cfg.alternation_tol * p {
                    converged = true;
                    break;
                }
            }
            previous_entry_distance = Some(dist_m_to_c);
        }
        latest = Some(dist_m_to_next_c);
        first.get_or_insert(dist_m_to_next_c);
    }

    Ok(AlternationOutcome {
        weights: entry,
        satisfied,
        converged,
        cycles,
    })
}

/// Fixed affine map from the network output to difficulty units.
///
/// Each cluster's network is trained on its difficulties standardized by the
/// cluster mean and standard deviation. The UX loss scales by `scale^2` and
/// the completion indicator is unchanged under this map, so both problems are
/// the same up to a constant factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutputScale {
    pub shift: f64,
    pub scale: f64,
}

impl OutputScale {
    pub const IDENTITY: OutputScale = OutputScale { shift: 0.0, scale: 1.0 };

    pub fn standardizing(d: &[f64]) -> Self {
        let mu = mean(d);
        let var = d.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / d.len() as f64;
        let sd = libm::sqrt(var);
        OutputScale {
            shift: mu,
            scale: if sd > 0.0 { sd } else { 1.0 },
        }
    }

    pub fn to_model(&self, d: f64) -> f64 {
        (d - self.shift) / self.scale
    }

    pub fn to_difficulty(&self, y: f64) -> f64 {
        self.shift + self.scale * y
    }
}

/// Configuration of the whole pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SystemConfig {
    pub k: usize,
    pub min_size: usize,
    pub kmeans_max_iter: usize,
    pub kmeans_init: KMeansInit,
    pub alpha: f64,
    pub target: f64,
    pub tolerance: f64,
    pub hidden_dims: Vec<usize>,
    pub activation: Activation,
    pub standardize_targets: bool,
    /// Alternate with the completion projection. When off, each cluster only
    /// minimizes the UX loss.
    pub constrained: bool,
    pub train: TrainConfig,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            k: cluster::DEFAULT_K,
            min_size: cluster::DEFAULT_MIN_SIZE,
            kmeans_max_iter: cluster::DEFAULT_MAX_ITER,
            kmeans_init: KMeansInit::PlusPlus,
            alpha: 1.0,
            target: 0.09,
            tolerance: crate::loss::DEFAULT_TOLERANCE,
            hidden_dims: vec![DEFAULT_HIDDEN_WIDTH; DEFAULT_HIDDEN_LAYERS],
            activation: Activation::Relu,
            standardize_targets: true,
            constrained: true,
            train: TrainConfig::default(),
        }
    }
}

impl SystemConfig {
    pub fn ux(&self) -> Result<UxLossConfig> {
        UxLossConfig::new(self.alpha)
    }

    pub fn spec(&self) -> Result<CompletionSpec> {
        CompletionSpec::new(self.target, self.tolerance)
    }

    pub fn architecture(&self, input_dim: usize) -> Result<Architecture> {
        Architecture::new(input_dim, self.hidden_dims.clone(), self.activation)
    }

    pub fn validate(&self) -> Result<()> {
        self.ux()?;
        self.spec()?;
        self.train.validate()?;
        if self.k == 0 || self.min_size == 0 || self.kmeans_max_iter == 0 {
            return Err(Error::InvalidConfig(
                "k, min_size and kmeans_max_iter must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn kmeans_seed(&self) -> u64 {
        rng::derive_seed(self.train.seed, 0)
    }

    /// Seed of cluster `k`'s initialization and training streams.
    pub fn cluster_seed(&self, k: usize) -> u64 {
        rng::derive_seed(self.train.seed, k as u64 + 1)
    }
}

/// Normalization and clustering of a dataset, ready for per-cluster training.
#[derive(Debug, Clone)]
pub struct SystemPlan {
    pub normalizer: FeatureNormalizer,
    pub assignment: ClusterAssignment,
    pub normalized: Matrix,
}

/// Result of training one cluster.
#[derive(Debug, Clone)]
pub struct ClusterFit {
    pub cluster: usize,
    pub members: Vec<usize>,
    pub weights: Network,
    pub output_scale: OutputScale,
    /// Required difficulty of every member, in member order.
    pub required: Vec<f64>,
    pub completion_rate: f64,
    /// `completion_rate` lies within the tolerance of the target.
    pub satisfied: bool,
    pub converged: bool,
    pub trace: TrainingTrace,
}

#[derive(Debug, Clone)]
pub struct SystemFit {
    pub plan: SystemPlan,
    pub clusters: Vec<ClusterFit>,
}

impl SystemFit {
    /// Required difficulty of every player, in dataset order.
    pub fn required(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.plan.assignment.len()];
        for c in &self.clusters {
            for (&i, &r) in c.members.iter().zip(&c.required) {
                out[i] = r;
            }
        }
        out
    }

    pub fn unsatisfied(&self) -> Vec<usize> {
        self.clusters
            .iter()
            .filter(|c| !c.satisfied)
            .map(|c| c.cluster)
            .collect()
    }
}

/// Normalize, cluster and enforce the minimum cluster size.
pub fn plan_system(dataset: &PlayerDataset, cfg: &SystemConfig) -> Result<SystemPlan> {
    cfg.validate()?;
    let normalizer = FeatureNormalizer::fit(dataset.features())?;
    let normalized = normalizer.apply(dataset.features())?;
    let km = KMeansConfig {
        k: cfg.k,
        seed: cfg.kmeans_seed(),
        max_iter: cfg.kmeans_max_iter,
        init: cfg.kmeans_init,
    };
    let raw = cluster::kmeans(&normalized, &km)?;
    let assignment = cluster::enforce_min_size(&raw, &normalized, cfg.min_size)?;
    Ok(SystemPlan {
        normalizer,
        assignment,
        normalized,
    })
}

/// Xavier init, alternation and final assignment for cluster `k` of a plan.
pub fn fit_cluster(plan: &SystemPlan, dataset: &PlayerDataset, k: usize, cfg: &SystemConfig) -> Result<ClusterFit> {
    let members = plan.assignment.members(k);
    let x = plan.normalized.select_rows(&members);
    let actual: Vec<f64> = members.iter().map(|&i| dataset.difficulty()[i]).collect();
    let output_scale = if cfg.standardize_targets {
        OutputScale::standardizing(&actual)
    } else {
        OutputScale::IDENTITY
    };
    let d: Vec<f64> = actual.iter().map(|&v| output_scale.to_model(v)).collect();

    let seed = cfg.cluster_seed(k);
    let init = Network::xavier(cfg.architecture(x.cols())?, seed);
    let spec = cfg.spec()?;
    let mut trace = TrainingTrace::new(cfg.alpha, Some(spec.target));
    let train = cfg.train.with_seed(seed);
    let (weights, converged) = if cfg.constrained {
        let out = alternate(&init, &x, &d, &cfg.ux()?, &spec, &train, &mut trace)?;
        (out.weights, out.converged)
    } else {
        let out = train_ux(&init, &x, &d, &cfg.ux()?, &train, &mut trace)?;
        (out.weights, out.plateaued)
    };

    let required: Vec<f64> = weights
        .forward(&x)?
        .into_iter()
        .map(|y| output_scale.to_difficulty(y))
        .collect();
    let completion_rate = DifficultyPair::new(&actual, &required)?.completion_rate();
    Ok(ClusterFit {
        cluster: k,
        members,
        satisfied: spec.is_satisfied(completion_rate),
        weights,
        output_scale,
        required,
        completion_rate,
        converged,
        trace,
    })
}

/// The full system: cluster players, then train one network per cluster.
pub fn run_full_system(dataset: &PlayerDataset, cfg: &SystemConfig) -> Result<SystemFit> {
    let plan = plan_system(dataset, cfg)?;
    let clusters = (0..plan.assignment.k())
        .map(|k| fit_cluster(&plan, dataset, k, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(SystemFit { plan, clusters })
}

/// How closely a cycle-distance series follows a non-increasing sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prop1Report {
    pub records: usize,
    pub pairs: usize,
    pub non_increasing_pairs: usize,
    pub fraction_non_increasing: f64,
    pub first: f64,
    pub last: f64,
    pub last_below_first: bool,
}

pub const PROP1_SLACK: f64 = 1e-3;

pub fn prop1_check(trace: &TrainingTrace) -> Result<Prop1Report> {
    prop1_check_series(&trace.distance_series())
}

/// A pair counts as non-increasing when `next <= prev * (1 + 1e-3)`.
pub fn prop1_check_series(series: &[f64]) -> Result<Prop1Report> {
    if series.len() < 2 {
        return Err(Error::TooFew {
            what: "alternation records",
            needed: 2,
            found: series.len(),
        });
    }
    let pairs = series.len() - 1;
    let non_increasing_pairs = series.windows(2).filter(|w| w[1] <= w[0] * (1.0 + PROP1_SLACK)).count();
    let first = series[0];
    let last = series[series.len() - 1];
    Ok(Prop1Report {
        records: series.len(),
        pairs,
        non_increasing_pairs,
        fraction_non_increasing: non_increasing_pairs as f64 / pairs as f64,
        first,
        last,
        last_below_first: last < first,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prop1_on_decreasing_and_constant_series() {
        let r = prop1_check_series(&[3.0, 2.0, 1.0]).unwrap();
        assert_eq!(r.fraction_non_increasing, 1.0);
        assert!(r.last_below_first);
        let c = prop1_check_series(&[2.0, 2.0, 2.0]).unwrap();
        assert_eq!(c.fraction_non_increasing, 1.0);
        assert!(!c.last_below_first);
        assert_eq!(c.last, c.first);
        let up = prop1_check_series(&[1.0, 2.0]).unwrap();
        assert_eq!(up.fraction_non_increasing, 0.0);
        assert!(prop1_check_series(&[1.0]).is_err());
    }

    #[test]
    fn train_config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            eta_ux: f64::NAN,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn output_scale_round_trips() {
        let s = OutputScale::standardizing(&[1.0, 3.0]);
        assert_eq!(s, OutputScale { shift: 2.0, scale: 1.0 });
        assert_eq!(s.to_difficulty(s.to_model(7.5)), 7.5);
        assert_eq!(OutputScale::standardizing(&[4.0, 4.0]).scale, 1.0);
    }

    #[test]
    fn phase_blocks_group_steps() {
        let mk = |phase| StepRecord {
            step: 0,
            phase,
            ux_loss: 0.0,
            completion_abs_err: 0.0,
            batch_id: None,
        };
        let t = TrainingTrace::from_records(
            vec![mk(Phase::Ux), mk(Phase::Ux), mk(Phase::Projection), mk(Phase::Ux)],
            vec![],
        );
        assert_eq!(
            t.phase_blocks(),
            vec![(Phase::Ux, 2), (Phase::Projection, 1), (Phase::Ux, 1)]
        );
    }
}
