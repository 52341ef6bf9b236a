//! Training a system in parallel and persisting it as a model directory.
//!
//! Layout of a model directory:
//!
//! ```text
//! manifest.json
//! normalizer.json
//! assignment.json
//! weights/cluster_000.json ...
//! traces/cluster_000.steps.csv, traces/cluster_000.alternations.csv ...
//! ```

use std::path::{Path, PathBuf};

use dda_core::cluster::{ClusterAssignment, FeatureNormalizer};
use dda_core::nn::Network;
use dda_core::optimize::{fit_cluster, plan_system, ClusterFit, OutputScale, SystemConfig, SystemFit, SystemPlan};
use dda_core::PlayerDataset;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::files::hash_f64s;
use crate::formats::{
    alternations_table, dataset_fingerprint, read_document, steps_table, write_document, ASSIGNMENT, MANIFEST,
    NORMALIZER, WEIGHTS,
};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const NORMALIZER_FILE: &str = "normalizer.json";
pub const ASSIGNMENT_FILE: &str = "assignment.json";

pub fn weights_file(k: usize) -> String {
    format!("weights/cluster_{k:03}.json")
}

pub fn steps_file(k: usize) -> String {
    format!("traces/cluster_{k:03}.steps.csv")
}

pub fn alternations_file(k: usize) -> String {
    format!("traces/cluster_{k:03}.alternations.csv")
}

pub fn normalizer_hash(n: &FeatureNormalizer) -> String {
    hash_f64s(&[n.dim() as u64], [n.means(), n.sds()])
}

/// Clustering of a dataset, tied to it by fingerprint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentFile {
    pub dataset_fingerprint: String,
    pub normalizer_hash: String,
    pub assignment: ClusterAssignment,
}

/// One cluster's network and the map from its output to difficulty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsFile {
    pub cluster: usize,
    pub output_scale: OutputScale,
    pub network: Network,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub players: usize,
    pub features: usize,
    pub fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub cluster: usize,
    pub size: usize,
    pub completion_rate: f64,
    pub satisfied: bool,
    pub converged: bool,
    pub cycles: usize,
    pub weights: String,
    pub steps: String,
    pub alternations: String,
}

/// Echo of a training run: configuration, versions, seed and outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub tool_version: String,
    pub seed: u64,
    pub config: SystemConfig,
    pub dataset: DatasetInfo,
    pub normalizer_hash: String,
    pub clusters: Vec<ClusterSummary>,
    /// Clusters whose completion rate missed the target band.
    pub unsatisfied: Vec<usize>,
}

/// Clusters the dataset, or reuses a stored clustering of the same dataset.
pub fn plan(dataset: &PlayerDataset, cfg: &SystemConfig, clusters_dir: Option<&Path>) -> Result<SystemPlan> {
    let Some(dir) = clusters_dir else {
        return Ok(plan_system(dataset, cfg)?);
    };
    let normalizer: FeatureNormalizer = read_document(&dir.join(NORMALIZER_FILE), NORMALIZER)?;
    let stored: AssignmentFile = read_document(&dir.join(ASSIGNMENT_FILE), ASSIGNMENT)?;
    if stored.dataset_fingerprint != dataset_fingerprint(dataset) {
        return Err(Error::Mismatch(format!(
            "{} was computed for a different dataset",
            dir.join(ASSIGNMENT_FILE).display()
        )));
    }
    if stored.normalizer_hash != normalizer_hash(&normalizer) {
        return Err(Error::Mismatch(format!(
            "{} does not match {}",
            dir.join(ASSIGNMENT_FILE).display(),
            dir.join(NORMALIZER_FILE).display()
        )));
    }
    let normalized = normalizer.apply(dataset.features())?;
    Ok(SystemPlan {
        normalizer,
        assignment: stored.assignment,
        normalized,
    })
}

/// Trains every cluster of a plan, in parallel. The result does not depend on
/// the number of threads.
pub fn train(plan: SystemPlan, dataset: &PlayerDataset, cfg: &SystemConfig) -> Result<SystemFit> {
    cfg.validate()?;
    let clusters = (0..plan.assignment.k())
        .into_par_iter()
        .map(|k| fit_cluster(&plan, dataset, k, cfg))
        .collect::<std::result::Result<Vec<ClusterFit>, _>>()?;
    Ok(SystemFit { plan, clusters })
}

pub fn write_clustering(dir: &Path, dataset: &PlayerDataset, plan: &SystemPlan) -> Result<()> {
    write_document(&dir.join(NORMALIZER_FILE), NORMALIZER, &plan.normalizer)?;
    let file = AssignmentFile {
        dataset_fingerprint: dataset_fingerprint(dataset),
        normalizer_hash: normalizer_hash(&plan.normalizer),
        assignment: plan.assignment.clone(),
    };
    write_document(&dir.join(ASSIGNMENT_FILE), ASSIGNMENT, &file)
}

/// Writes the whole model directory; the manifest goes last.
pub fn save(dir: &Path, dataset: &PlayerDataset, fit: &SystemFit, cfg: &SystemConfig) -> Result<Manifest> {
    write_clustering(dir, dataset, &fit.plan)?;
    let mut clusters = Vec::with_capacity(fit.clusters.len());
    for c in &fit.clusters {
        let k = c.cluster;
        let w = WeightsFile {
            cluster: k,
            output_scale: c.output_scale,
            network: c.weights.clone(),
        };
        write_document(&dir.join(weights_file(k)), WEIGHTS, &w)?;
        steps_table(&c.trace.steps).write(&dir.join(steps_file(k)))?;
        alternations_table(&c.trace.alternations).write(&dir.join(alternations_file(k)))?;
        clusters.push(ClusterSummary {
            cluster: k,
            size: c.members.len(),
            completion_rate: c.completion_rate,
            satisfied: c.satisfied,
            converged: c.converged,
            cycles: c.trace.alternations.len(),
            weights: weights_file(k),
            steps: steps_file(k),
            alternations: alternations_file(k),
        });
    }
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        seed: cfg.train.seed,
        config: cfg.clone(),
        dataset: DatasetInfo {
            players: dataset.players(),
            features: dataset.feature_dim(),
            fingerprint: dataset_fingerprint(dataset),
        },
        normalizer_hash: normalizer_hash(&fit.plan.normalizer),
        clusters,
        unsatisfied: fit.unsatisfied(),
    };
    write_document(&dir.join(MANIFEST_FILE), MANIFEST, &manifest)?;
    Ok(manifest)
}

/// A model directory read back from disk.
#[derive(Debug, Clone)]
pub struct Model {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub normalizer: FeatureNormalizer,
    pub assignment: AssignmentFile,
    pub clusters: Vec<WeightsFile>,
}

pub fn load(dir: &Path) -> Result<Model> {
    let manifest: Manifest = read_document(&dir.join(MANIFEST_FILE), MANIFEST)?;
    let normalizer: FeatureNormalizer = read_document(&dir.join(NORMALIZER_FILE), NORMALIZER)?;
    let normalizer = FeatureNormalizer::from_parts(normalizer.means().to_vec(), normalizer.sds().to_vec())?;
    if normalizer_hash(&normalizer) != manifest.normalizer_hash {
        return Err(Error::Mismatch(format!(
            "{} does not match the manifest's normalizer hash",
            dir.join(NORMALIZER_FILE).display()
        )));
    }
    let assignment: AssignmentFile = read_document(&dir.join(ASSIGNMENT_FILE), ASSIGNMENT)?;
    if assignment.normalizer_hash != manifest.normalizer_hash {
        return Err(Error::Mismatch(
            "assignment and manifest disagree on the normalizer".into(),
        ));
    }
    let k = assignment.assignment.k();
    if manifest.clusters.len() != k {
        return Err(Error::Mismatch(format!(
            "manifest lists {} clusters, assignment has {k}",
            manifest.clusters.len()
        )));
    }
    let mut clusters = Vec::with_capacity(k);
    for (i, s) in manifest.clusters.iter().enumerate() {
        let w: WeightsFile = read_document(&dir.join(&s.weights), WEIGHTS)?;
        if w.cluster != i || w.network.architecture().input_dim() != normalizer.dim() {
            return Err(Error::Mismatch(format!("{} does not fit this model", s.weights)));
        }
        clusters.push(w);
    }
    Ok(Model {
        dir: dir.to_path_buf(),
        manifest,
        normalizer,
        assignment,
        clusters,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelSource {
    /// The dataset is the one the model was trained on.
    Stored,
    /// Players were mapped to the closest centroid.
    NearestCentroid,
}

#[derive(Debug, Clone)]
pub struct Prediction {
    pub labels: Vec<usize>,
    pub label_source: LabelSource,
    pub required: Vec<f64>,
}

impl Model {
    /// Cluster labels and required difficulty of every player of `dataset`.
    pub fn predict(&self, dataset: &PlayerDataset) -> Result<Prediction> {
        if dataset.feature_dim() != self.normalizer.dim() {
            return Err(Error::Mismatch(format!(
                "dataset has {} features, model expects {}",
                dataset.feature_dim(),
                self.normalizer.dim()
            )));
        }
        let xn = self.normalizer.apply(dataset.features())?;
        let a = &self.assignment.assignment;
        let (labels, label_source) =
            if dataset_fingerprint(dataset) == self.assignment.dataset_fingerprint && a.len() == dataset.players() {
                (a.labels().to_vec(), LabelSource::Stored)
            } else {
                (
                    xn.iter_rows().map(|r| a.nearest(r)).collect(),
                    LabelSource::NearestCentroid,
                )
            };
        let mut required = vec![0.0; dataset.players()];
        for (k, w) in self.clusters.iter().enumerate() {
            let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == k).collect();
            if members.is_empty() {
                continue;
            }
            let out = w.network.forward(&xn.select_rows(&members))?;
            for (&i, y) in members.iter().zip(out) {
                required[i] = w.output_scale.to_difficulty(y);
            }
        }
        Ok(Prediction {
            labels,
            label_source,
            required,
        })
    }
}
