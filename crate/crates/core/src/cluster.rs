//! Player cohorts: z-score normalization, k-means and minimum cluster size.
//!
//! Players are compared by the Euclidean distance between their normalized
//! feature rows. K-means uses k-means++ seeding (uniform seeding behind
//! [`KMeansInit::Random`]) and Lloyd iterations; an emptied cluster is
//! respawned at the point farthest from its own centroid. Undersized clusters
//! are dissolved afterwards and their members moved to the nearest surviving
//! centroid.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng;

pub const DEFAULT_K: usize = 10;
pub const DEFAULT_MIN_SIZE: usize = 200;
pub const DEFAULT_MAX_ITER: usize = 100;

/// Column-wise z-score parameters (population standard deviation).
///
/// Columns whose standard deviation is zero are recorded with `sd = 0` and
/// always map to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureNormalizer {
    means: Vec<f64>,
    sds: Vec<f64>,
}

impl FeatureNormalizer {
    pub fn fit(x: &Matrix) -> Result<Self> {
        if x.rows() == 0 || x.cols() == 0 {
            return Err(Error::Empty("feature matrix"));
        }
        if x.rows() < 2 {
            return Err(Error::TooFew {
                what: "players",
                needed: 2,
                found: x.rows(),
            });
        }
        if !x.is_finite() {
            return Err(Error::NonFinite("feature matrix"));
        }
        let m = x.rows() as f64;
        let mut means = vec![0.0; x.cols()];
        for row in x.iter_rows() {
            for (acc, v) in means.iter_mut().zip(row) {
                *acc += v;
            }
        }
        for v in &mut means {
            *v /= m;
        }
        let mut sds = vec![0.0; x.cols()];
        for row in x.iter_rows() {
            for ((acc, v), mu) in sds.iter_mut().zip(row).zip(&means) {
                *acc += (v - mu) * (v - mu);
            }
        }
        for (sd, mu) in sds.iter_mut().zip(&means) {
            *sd = libm::sqrt(*sd / m);
            if *sd <= 1e-12 * mu.abs().max(1.0) {
                *sd = 0.0;
            }
        }
        Ok(Self { means, sds })
    }

    pub fn from_parts(means: Vec<f64>, sds: Vec<f64>) -> Result<Self> {
        if means.len() != sds.len() {
            return Err(Error::DimensionMismatch {
                what: "normalizer sd count",
                expected: means.len(),
                found: sds.len(),
            });
        }
        if means.is_empty() {
            return Err(Error::Empty("normalizer"));
        }
        if sds.iter().any(|s| !(s.is_finite() && *s >= 0.0)) || means.iter().any(|m| !m.is_finite()) {
            return Err(Error::NonFinite("normalizer"));
        }
        Ok(Self { means, sds })
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn sds(&self) -> &[f64] {
        &self.sds
    }

    /// Indices of columns that had no spread in the fit data.
    pub fn zero_variance_columns(&self) -> Vec<usize> {
        self.sds
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "feature columns",
                expected: self.dim(),
                found: n,
            });
        }
        Ok(())
    }

    pub fn normalize_row(&self, row: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_len(row.len())?;
        self.check_len(out.len())?;
        for (((o, v), mu), sd) in out.iter_mut().zip(row).zip(&self.means).zip(&self.sds) {
            *o = if *sd == 0.0 { 0.0 } else { (v - mu) / sd };
        }
        Ok(())
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        self.check_len(x.cols())?;
        let mut out = Matrix::zeros(x.rows(), x.cols());
        for i in 0..x.rows() {
            self.normalize_row(x.row(i), out.row_mut(i))?;
        }
        Ok(out)
    }
}

/// Distance between two players in normalized feature space (smaller is more similar).
pub fn similarity(a: &[f64], b: &[f64], normalizer: &FeatureNormalizer) -> Result<f64> {
    let mut na = vec![0.0; normalizer.dim()];
    let mut nb = vec![0.0; normalizer.dim()];
    normalizer.normalize_row(a, &mut na)?;
    normalizer.normalize_row(b, &mut nb)?;
    Ok(libm::sqrt(sq_dist(&na, &nb)))
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KMeansInit {
    #[default]
    PlusPlus,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub init: KMeansInit,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            max_iter: DEFAULT_MAX_ITER,
            init: KMeansInit::PlusPlus,
        }
    }
}

/// Every player's cluster id plus the centroids in normalized space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AssignmentRepr")]
pub struct ClusterAssignment {
    labels: Vec<usize>,
    centroids: Matrix,
}

#[derive(Deserialize)]
struct AssignmentRepr {
    labels: Vec<usize>,
    centroids: Matrix,
}

impl TryFrom<AssignmentRepr> for ClusterAssignment {
    type Error = Error;

    fn try_from(r: AssignmentRepr) -> Result<Self> {
        ClusterAssignment::new(r.labels, r.centroids)
    }
}

impl ClusterAssignment {
    pub fn new(labels: Vec<usize>, centroids: Matrix) -> Result<Self> {
        if centroids.rows() == 0 {
            return Err(Error::Empty("centroid matrix"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= centroids.rows()) {
            return Err(Error::OutOfRange(alloc::format!(
                "cluster label {bad} with {} centroids",
                centroids.rows()
            )));
        }
        Ok(Self { labels, centroids })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn centroids(&self) -> &Matrix {
        &self.centroids
    }

    pub fn k(&self) -> usize {
        self.centroids.rows()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k()];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    /// Player indices of cluster `k`, ascending.
    pub fn members(&self, k: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == k)
            .map(|(i, _)| i)
            .collect()
    }

    /// Within-cluster sum of squared distances to the centroids.
    pub fn wcss(&self, xn: &Matrix) -> f64 {
        wcss(xn, &self.centroids, &self.labels)
    }

    /// Nearest centroid for a normalized row (lowest id on ties).
    pub fn nearest(&self, row: &[f64]) -> usize {
        nearest(&self.centroids, row).0
    }
}

/// Outcome of [`kmeans_traced`].
#[derive(Debug, Clone)]
pub struct KMeansRun {
    pub assignment: ClusterAssignment,
    /// WCSS after seeding, then after every Lloyd iteration.
    pub wcss_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub fn kmeans(xn: &Matrix, cfg: &KMeansConfig) -> Result<ClusterAssignment> {
    kmeans_traced(xn, cfg).map(|r| r.assignment)
}

/// Lloyd's algorithm, recording the objective at every iteration.
pub fn kmeans_traced(xn: &Matrix, cfg: &KMeansConfig) -> Result<KMeansRun> {
    let m = xn.rows();
    if m == 0 || xn.cols() == 0 {
        return Err(Error::Empty("feature matrix"));
    }
    if cfg.k == 0 {
        return Err(Error::InvalidConfig("k must be positive".into()));
    }
    if cfg.k > m {
        return Err(Error::TooFew {
            what: "players for k clusters",
            needed: cfg.k,
            found: m,
        });
    }
    if cfg.max_iter == 0 {
        return Err(Error::InvalidConfig("max_iter must be positive".into()));
    }
    if !xn.is_finite() {
        return Err(Error::NonFinite("feature matrix"));
    }

    let mut rng = rng::seeded(cfg.seed);
    let seeds = match cfg.init {
        KMeansInit::PlusPlus => plus_plus_seeds(xn, cfg.k, &mut rng),
        KMeansInit::Random => index::sample(&mut rng, m, cfg.k).into_vec(),
    };
    let mut centroids = xn.select_rows(&seeds);
    let mut labels = assign_all(xn, &centroids);
    let mut history = vec![wcss(xn, &centroids, &labels)];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iter {
        iterations += 1;
        update_centroids(xn, &mut centroids, &mut labels);
        let next = assign_all(xn, &centroids);
        history.push(wcss(xn, &centroids, &next));
        let unchanged = next == labels;
        labels = next;
        if unchanged {
            converged = true;
            break;
        }
    }

    Ok(KMeansRun {
        assignment: ClusterAssignment { labels, centroids },
        wcss_history: history,
        iterations,
        converged,
    })
}

fn plus_plus_seeds(xn: &Matrix, k: usize, rng: &mut rng::Rng) -> Vec<usize> {
    let m = xn.rows();
    let mut chosen = Vec::with_capacity(k);
    let mut taken = vec![false; m];
    let first = rng.random_range(0..m);
    chosen.push(first);
    taken[first] = true;
    let mut d2: Vec<f64> = xn.iter_rows().map(|r| sq_dist(r, xn.row(first))).collect();

    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                if d <= 0.0 {
                    continue;
                }
                acc += d;
                pick = Some(i);
                if acc > target {
                    break;
                }
            }
            pick.unwrap_or(0)
        } else {
            // Every remaining point coincides with a seed.
            let free: Vec<usize> = (0..m).filter(|&i| !taken[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        taken[next] = true;
        for (d, row) in d2.iter_mut().zip(xn.iter_rows()) {
            let nd = sq_dist(row, xn.row(next));
            if nd < *d {
                *d = nd;
            }
        }
    }
    chosen
}

fn nearest(centroids: &Matrix, row: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter_rows().enumerate() {
        let d = sq_dist(row, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn assign_all(xn: &Matrix, centroids: &Matrix) -> Vec<usize> {
    xn.iter_rows().map(|r| nearest(centroids, r).0).collect()
}

fn wcss(xn: &Matrix, centroids: &Matrix, labels: &[usize]) -> f64 {
    xn.iter_rows()
        .zip(labels)
        .map(|(r, &l)| sq_dist(r, centroids.row(l)))
        .sum()
}

/// Moves every centroid to the mean of its members. A cluster left empty takes
/// over the point farthest from its current centroid.
fn update_centroids(xn: &Matrix, centroids: &mut Matrix, labels: &mut [usize]) {
    let k = centroids.rows();
    let z = xn.cols();
    let mut sums = Matrix::zeros(k, z);
    let mut counts = vec![0usize; k];
    for (row, &l) in xn.iter_rows().zip(labels.iter()) {
        counts[l] += 1;
        for (s, v) in sums.row_mut(l).iter_mut().zip(row) {
            *s += v;
        }
    }
    for (j, &count) in counts.iter().enumerate() {
        if count > 0 {
            let n = count as f64;
            for (c, s) in centroids.row_mut(j).iter_mut().zip(sums.row(j)) {
                *c = s / n;
            }
        }
    }
    for j in 0..k {
        if counts[j] > 0 {
            continue;
        }
        let mut far = None;
        let mut far_d = -1.0;
        for (i, row) in xn.iter_rows().enumerate() {
            if counts[labels[i]] <= 1 {
                continue;
            }
            let d = sq_dist(row, centroids.row(labels[i]));
            if d > far_d {
                far_d = d;
                far = Some(i);
            }
        }
        if let Some(i) = far {
            counts[labels[i]] -= 1;
            counts[j] += 1;
            labels[i] = j;
            let src = xn.row(i).to_vec();
            centroids.row_mut(j).copy_from_slice(&src);
        }
    }
}

/// Dissolves clusters with fewer than `min_size` members; their players join the
/// nearest surviving centroid. If no cluster is large enough, the largest one
/// survives and absorbs everyone. Surviving ids are renumbered in order.
pub fn enforce_min_size(a: &ClusterAssignment, xn: &Matrix, min_size: usize) -> Result<ClusterAssignment> {
    if min_size == 0 {
        return Err(Error::InvalidConfig("min_size must be positive".into()));
    }
    if min_size > a.len() {
        return Err(Error::TooFew {
            what: "players for min_size",
            needed: min_size,
            found: a.len(),
        });
    }
    if xn.rows() != a.len() {
        return Err(Error::DimensionMismatch {
            what: "assignment length",
            expected: xn.rows(),
            found: a.len(),
        });
    }
    if xn.cols() != a.centroids.cols() {
        return Err(Error::DimensionMismatch {
            what: "centroid width",
            expected: xn.cols(),
            found: a.centroids.cols(),
        });
    }

    let mut current = a.clone();
    loop {
        let sizes = current.sizes();
        if sizes.iter().all(|&s| s >= min_size) {
            return Ok(current);
        }
        let mut keep: Vec<usize> = (0..sizes.len()).filter(|&j| sizes[j] >= min_size).collect();
        if keep.is_empty() {
            let largest = (0..sizes.len())
                .max_by(|&i, &j| sizes[i].cmp(&sizes[j]).then(j.cmp(&i)))
                .unwrap_or(0);
            keep.push(largest);
        }
        let mut new_id = vec![usize::MAX; sizes.len()];
        for (n, &j) in keep.iter().enumerate() {
            new_id[j] = n;
        }
        let survivors = current.centroids.select_rows(&keep);
        let labels = current
            .labels
            .iter()
            .zip(xn.iter_rows())
            .map(|(&l, row)| {
                if new_id[l] != usize::MAX {
                    new_id[l]
                } else {
                    nearest(&survivors, row).0
                }
            })
            .collect();
        current = ClusterAssignment {
            labels,
            centroids: survivors,
        };
    }
}
