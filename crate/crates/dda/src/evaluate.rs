//! Method comparison: completion rates overall and per cluster.

use dda_core::loss::achieved_completion_rate;
use dda_core::synth::simulate_outcomes;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formats::{float, Table, HISTOGRAM};
use crate::model::LabelSource;

pub const DL_DDA: &str = "dl-dda";
pub const RULE_BASED: &str = "rule-based";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub overall_rate: f64,
    /// `None` for a cluster without players.
    pub per_cluster_rates: Vec<Option<f64>>,
    pub clusters_above_threshold: usize,
    /// Population variance of the per-cluster rates.
    pub rate_variance: f64,
    pub in_band: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub target: f64,
    pub tolerance: f64,
    pub band: [f64; 2],
    pub threshold: f64,
    pub clusters: usize,
    pub cluster_sizes: Vec<usize>,
    pub labels: LabelSource,
    pub methods: Vec<MethodSummary>,
}

impl ComparisonReport {
    pub fn method(&self, name: &str) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompareSettings {
    pub target: f64,
    pub tolerance: f64,
    pub band: [f64; 2],
    pub threshold: f64,
}

/// Summarizes each method's assignment of `actual` over the clusters in
/// `labels`.
pub fn compare(
    actual: &[f64],
    labels: &[usize],
    k: usize,
    label_source: LabelSource,
    methods: &[(&str, &[f64])],
    s: &CompareSettings,
) -> Result<ComparisonReport> {
    if labels.len() != actual.len() {
        return Err(Error::Mismatch("one label per player required".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::Mismatch(format!("label {bad} with {k} clusters")));
    }
    let mut cluster_sizes = vec![0usize; k];
    for &l in labels {
        cluster_sizes[l] += 1;
    }
    let summaries = methods
        .iter()
        .map(|(name, assigned)| {
            let flags = simulate_outcomes(actual, assigned)?;
            let overall_rate = achieved_completion_rate(actual, assigned)?;
            let mut done = vec![0usize; k];
            for (&l, &f) in labels.iter().zip(&flags) {
                done[l] += f as usize;
            }
            let per_cluster_rates: Vec<Option<f64>> = done
                .iter()
                .zip(&cluster_sizes)
                .map(|(&c, &n)| (n > 0).then(|| c as f64 / n as f64))
                .collect();
            let present: Vec<f64> = per_cluster_rates.iter().flatten().copied().collect();
            let mean = present.iter().sum::<f64>() / present.len().max(1) as f64;
            let rate_variance =
                present.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / present.len().max(1) as f64;
            Ok(MethodSummary {
                method: name.to_string(),
                overall_rate,
                clusters_above_threshold: present.iter().filter(|&&r| r > s.threshold).count(),
                rate_variance,
                in_band: (s.band[0]..=s.band[1]).contains(&overall_rate),
                per_cluster_rates,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ComparisonReport {
        target: s.target,
        tolerance: s.tolerance,
        band: s.band,
        threshold: s.threshold,
        clusters: k,
        cluster_sizes,
        labels: label_source,
        methods: summaries,
    })
}

/// Bin index of a rate; bins are `[i w, (i+1) w)` and the last one also holds 1.
fn bin_of(rate: f64, width: f64, bins: usize) -> usize {
    ((rate / width).floor() as usize).min(bins - 1)
}

/// Per-cluster completion-rate histogram of the two methods.
pub fn histogram(report: &ComparisonReport, bin_width: f64) -> Result<Table> {
    let (Some(rule), Some(dl)) = (report.method(RULE_BASED), report.method(DL_DDA)) else {
        return Err(Error::Validation("histogram needs both methods".into()));
    };
    let bins = (1.0 / bin_width).ceil().max(1.0) as usize;
    let count = |m: &MethodSummary| {
        let mut c = vec![0usize; bins];
        for r in m.per_cluster_rates.iter().flatten() {
            c[bin_of(*r, bin_width, bins)] += 1;
        }
        c
    };
    let (cr, cd) = (count(rule), count(dl));
    let mut t = Table::new(HISTOGRAM, &["bin_low", "bin_high", "count_rule_based", "count_dl_dda"]);
    for i in 0..bins {
        let hi = ((i + 1) as f64 * bin_width).min(1.0);
        t.row([
            float(i as f64 * bin_width),
            float(hi),
            cr[i].to_string(),
            cd[i].to_string(),
        ]);
    }
    Ok(t)
}
