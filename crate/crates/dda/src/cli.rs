//! Command-line interface.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use dda_core::synth;
use dda_core::synth::{
    benchmark_policy, generate, RuleBasedPolicy, ScenarioKind, SyntheticScenario, BENCHMARK_BASELINE_RATE,
    BENCHMARK_SPLITS,
};
use serde::{Deserialize, Serialize};

use crate::config::{require, RunConfig};
use crate::error::{Error, Result, EXIT_UNSATISFIED};
use crate::evaluate::{compare, histogram, CompareSettings, DL_DDA, RULE_BASED};
use crate::formats::{
    alternations_path_for, read_dataset, read_document, read_trace, sidecar_path, write_dataset, write_document,
    COMPARISON, DATASET_META, POLICY,
};
use crate::model;
use crate::report::convergence;

#[derive(Debug, Parser)]
#[command(
    name = "dda",
    version,
    about = "Learn per-player difficulties under a completion-rate target"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic player dataset (and its rule-based baseline policy).
    Generate(GenerateArgs),
    /// Normalize features and cluster players.
    Cluster(ClusterArgs),
    /// Train one network per cluster and write a model directory.
    Train(TrainArgs),
    /// Compare the trained model with the rule-based baseline.
    Evaluate(EvaluateArgs),
    /// Turn a training trace into plot-ready convergence tables.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArg {
    /// TOML run configuration; flags override its keys.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long)]
    pub players: Option<usize>,
    /// Feature dimension Z.
    #[arg(long)]
    pub features: Option<usize>,
    /// linear, piecewise or heterogeneous-segments.
    #[arg(long, value_parser = parse_kind)]
    pub scenario: Option<ScenarioKind>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Difficulty noise standard deviation (default: a tenth of the signal's).
    #[arg(long)]
    pub noise_sd: Option<f64>,
    /// Latent segments of heterogeneous-segments.
    #[arg(long)]
    pub segments: Option<usize>,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Where to write the rule-based baseline policy.
    #[arg(long, value_name = "FILE")]
    pub policy_out: Option<PathBuf>,
    /// Skip the `.meta.json` sidecar with scenario and ground truth.
    #[arg(long)]
    pub no_sidecar: bool,
}

#[derive(Debug, Args)]
pub struct SystemArgs {
    /// Number of k-means clusters.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub min_size: Option<usize>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long, value_name = "FILE")]
    pub data: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    #[command(flatten)]
    pub system: SystemArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long, value_name = "FILE")]
    pub data: Option<PathBuf>,
    /// Reuse the clustering written by `dda cluster` into this directory.
    #[arg(long, value_name = "DIR")]
    pub clusters: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub model_dir: Option<PathBuf>,
    #[command(flatten)]
    pub system: SystemArgs,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Target completion rate P.
    #[arg(long)]
    pub target: Option<f64>,
    /// Tolerance around the target.
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub eta_ux: Option<f64>,
    #[arg(long)]
    pub eta_proj: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub max_epochs_ux: Option<usize>,
    #[arg(long)]
    pub max_iter_proj: Option<usize>,
    #[arg(long)]
    pub max_alternations: Option<usize>,
    /// Hidden layer widths, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    /// Minimize the UX loss only, without the completion projection.
    #[arg(long)]
    pub unconstrained: bool,
    /// Worker threads for per-cluster training (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long, value_name = "FILE")]
    pub data: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub model_dir: Option<PathBuf>,
    /// Rule-based baseline policy document.
    #[arg(long, value_name = "FILE")]
    pub policy: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    /// Per-cluster completion rate above which clusters are counted.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub bin_width: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Step trace (`*.steps.csv`) written by `dda train`.
    #[arg(long, value_name = "FILE")]
    pub trace: PathBuf,
    /// Alternation table (default: next to the step trace).
    #[arg(long, value_name = "FILE")]
    pub alternations: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
}

fn parse_kind(s: &str) -> std::result::Result<ScenarioKind, String> {
    ScenarioKind::parse(s).ok_or_else(|| format!("unknown scenario `{s}` (linear, piecewise, heterogeneous-segments)"))
}

/// How a successful command ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Done,
    /// Training finished but some clusters missed the target.
    Unsatisfied,
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(Outcome::Done) => 0,
        Ok(Outcome::Unsatisfied) => EXIT_UNSATISFIED,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Cluster(a) => cmd_cluster(a),
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Report(a) => cmd_report(a),
    }
}

fn load(c: &ConfigArg) -> Result<RunConfig> {
    RunConfig::load_or_default(c.config.as_deref())
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

fn apply_system(cfg: &mut RunConfig, a: &SystemArgs) {
    set(&mut cfg.system.k, a.k);
    set(&mut cfg.system.min_size, a.min_size);
    set(&mut cfg.seed, a.seed);
}

/// Scenario, noise level and ground truth stored next to a dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub scenario: SyntheticScenario,
    pub noise_sd: f64,
    pub truth: synth::GroundTruth,
}

fn cmd_generate(a: GenerateArgs) -> Result<Outcome> {
    let mut cfg = load(&a.config)?;
    let s = &mut cfg.scenario;
    set(&mut s.players, a.players);
    set(&mut s.features, a.features);
    set(&mut s.kind, a.scenario);
    set(&mut s.seed, a.seed);
    if a.noise_sd.is_some() {
        s.noise_sd = a.noise_sd;
    }
    set(&mut s.segments, a.segments);
    set(&mut cfg.paths.dataset, a.out.map(Some));
    set(&mut cfg.paths.policy, a.policy_out.map(Some));

    let scenario = cfg.scenario.scenario();
    scenario.validate()?;
    let out = require(&cfg.paths.dataset, "--out")?;
    let g = generate(&scenario)?;
    write_dataset(out, &g.dataset)?;
    if !a.no_sidecar {
        let meta = DatasetMeta {
            scenario: scenario.clone(),
            noise_sd: g.noise_sd,
            truth: g.truth,
        };
        write_document(&sidecar_path(out), DATASET_META, &meta)?;
    }
    if let Some(p) = &cfg.paths.policy {
        // The benchmark keeps its frozen baseline; other scenarios are calibrated the same way.
        let policy = if scenario == SyntheticScenario::benchmark() {
            benchmark_policy()
        } else {
            RuleBasedPolicy::calibrate(&g.dataset, &BENCHMARK_SPLITS, BENCHMARK_BASELINE_RATE)?
        };
        write_document(p, POLICY, &policy)?;
    }
    println!(
        "generated {} players x {} features ({}, seed {}, noise sd {}) -> {}",
        scenario.players,
        scenario.feature_dim,
        scenario.kind.name(),
        scenario.seed,
        g.noise_sd,
        out.display()
    );
    Ok(Outcome::Done)
}

fn cmd_cluster(a: ClusterArgs) -> Result<Outcome> {
    let mut cfg = load(&a.config)?;
    apply_system(&mut cfg, &a.system);
    set(&mut cfg.paths.dataset, a.data.map(Some));
    set(&mut cfg.paths.clusters, a.out_dir.map(Some));
    cfg.validate()?;
    let data = read_dataset(require(&cfg.paths.dataset, "--data")?)?;
    let out = require(&cfg.paths.clusters, "--out-dir")?;
    let plan = dda_core::optimize::plan_system(&data, &cfg.system())?;
    model::write_clustering(out, &data, &plan)?;
    println!(
        "{} clusters, sizes {:?} -> {}",
        plan.assignment.k(),
        plan.assignment.sizes(),
        out.display()
    );
    Ok(Outcome::Done)
}

fn cmd_train(a: TrainArgs) -> Result<Outcome> {
    let mut cfg = load(&a.config)?;
    apply_system(&mut cfg, &a.system);
    set(&mut cfg.paths.dataset, a.data.map(Some));
    set(&mut cfg.paths.clusters, a.clusters.map(Some));
    set(&mut cfg.paths.model_dir, a.model_dir.map(Some));
    let s = &mut cfg.system;
    set(&mut s.alpha, a.alpha);
    set(&mut s.target, a.target);
    set(&mut s.tolerance, a.tolerance);
    set(&mut s.hidden_dims, a.hidden);
    if a.unconstrained {
        s.constrained = false;
    }
    let t = &mut s.train;
    set(&mut t.eta_ux, a.eta_ux);
    set(&mut t.eta_proj, a.eta_proj);
    set(&mut t.batch_size, a.batch_size);
    set(&mut t.max_epochs_ux, a.max_epochs_ux);
    set(&mut t.max_iter_proj, a.max_iter_proj);
    set(&mut t.max_alternations, a.max_alternations);
    cfg.validate()?;
    if a.threads == Some(0) {
        return Err(Error::Validation("--threads must be at least 1".into()));
    }

    let data = read_dataset(require(&cfg.paths.dataset, "--data")?)?;
    let dir = require(&cfg.paths.model_dir, "--model-dir")?;
    let system = cfg.system();
    let plan = model::plan(&data, &system, cfg.paths.clusters.as_deref())?;
    let fit = match a.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Validation(e.to_string()))?
            .install(|| model::train(plan, &data, &system))?,
        None => model::train(plan, &data, &system)?,
    };
    let manifest = model::save(dir, &data, &fit, &system)?;
    for c in &manifest.clusters {
        println!(
            "cluster {:3}: {:5} players, completion {:.4}, {}{}",
            c.cluster,
            c.size,
            c.completion_rate,
            if c.satisfied { "satisfied" } else { "UNSATISFIED" },
            if c.converged { "" } else { ", not converged" }
        );
    }
    println!("model -> {}", dir.display());
    if manifest.unsatisfied.is_empty() {
        Ok(Outcome::Done)
    } else {
        eprintln!("clusters missing the completion target: {:?}", manifest.unsatisfied);
        Ok(Outcome::Unsatisfied)
    }
}

pub const COMPARISON_FILE: &str = "comparison.json";
pub const HISTOGRAM_FILE: &str = "histogram.csv";

fn cmd_evaluate(a: EvaluateArgs) -> Result<Outcome> {
    let mut cfg = load(&a.config)?;
    set(&mut cfg.paths.dataset, a.data.map(Some));
    set(&mut cfg.paths.model_dir, a.model_dir.map(Some));
    set(&mut cfg.paths.policy, a.policy.map(Some));
    set(&mut cfg.paths.reports_dir, a.out_dir.map(Some));
    set(&mut cfg.report.threshold, a.threshold);
    set(&mut cfg.report.bin_width, a.bin_width);
    cfg.validate()?;

    let data = read_dataset(require(&cfg.paths.dataset, "--data")?)?;
    let m = model::load(require(&cfg.paths.model_dir, "--model-dir")?)?;
    let policy: RuleBasedPolicy = read_document(require(&cfg.paths.policy, "--policy")?, POLICY)?;
    let out = require(&cfg.paths.reports_dir, "--out-dir")?;

    let pred = m.predict(&data)?;
    let baseline = synth::rule_based_assign(&policy, data.features())?;
    let settings = CompareSettings {
        target: m.manifest.config.target,
        tolerance: m.manifest.config.tolerance,
        band: cfg.report.band,
        threshold: cfg.report.threshold,
    };
    let report = compare(
        data.difficulty(),
        &pred.labels,
        m.clusters.len(),
        pred.label_source,
        &[(DL_DDA, &pred.required), (RULE_BASED, &baseline)],
        &settings,
    )?;
    write_document(&out.join(COMPARISON_FILE), COMPARISON, &report)?;
    histogram(&report, cfg.report.bin_width)?.write(&out.join(HISTOGRAM_FILE))?;
    for s in &report.methods {
        println!(
            "{:10} overall {:.4} ({}), per-cluster variance {:.3e}, clusters above {}: {}",
            s.method,
            s.overall_rate,
            if s.in_band { "in band" } else { "outside band" },
            s.rate_variance,
            report.threshold,
            s.clusters_above_threshold
        );
    }
    println!("report -> {}", out.display());
    Ok(Outcome::Done)
}

fn cmd_report(a: ReportArgs) -> Result<Outcome> {
    let mut cfg = load(&a.config)?;
    set(&mut cfg.paths.reports_dir, a.out_dir.map(Some));
    let out = require(&cfg.paths.reports_dir, "--out-dir")?;
    let alternations = a.alternations.clone().or_else(|| {
        let p = alternations_path_for(&a.trace);
        p.exists().then_some(p)
    });
    let trace = read_trace(&a.trace, alternations.as_deref())?;
    let r = convergence(&trace);
    let stem = trace_stem(&a.trace);
    r.curves.write(&out.join(format!("{stem}.curves.csv")))?;
    r.distances.write(&out.join(format!("{stem}.distances.csv")))?;
    r.prop1.write(&out.join(format!("{stem}.prop1.csv")))?;
    println!("{stem}: {}", r.note);
    Ok(Outcome::Done)
}

fn trace_stem(p: &Path) -> String {
    let name = p
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "trace".into());
    name.strip_suffix(".steps.csv")
        .or_else(|| name.strip_suffix(".csv"))
        .unwrap_or(&name)
        .to_string()
}
