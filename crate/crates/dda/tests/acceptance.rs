//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Pass criterion numbers as arguments to run a subset:
//! `cargo test -p dda --test acceptance -- 2 5`.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use dda::config::RunConfig;
use dda::evaluate::{compare, CompareSettings, ComparisonReport, DL_DDA, RULE_BASED};
use dda::model::{self, LabelSource};
use dda_core::cluster::{enforce_min_size, kmeans, kmeans_traced, KMeansConfig, KMeansInit};
use dda_core::loss::{
    achieved_completion_rate, analytic_ux_minimizer, projection_error, ux_loss, ux_loss_output_grad, CompletionSpec,
    ProjectionSignal, UxLossConfig,
};
use dda_core::nn::{Activation, Architecture, DenseLayer, Network};
use dda_core::optimize::{prop1_check, SystemConfig, SystemFit};
use dda_core::synth::{benchmark_policy, generate, rule_based_assign, ScenarioKind, SyntheticScenario};
use dda_core::Matrix;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

type Criterion = fn() -> Verdict;

fn main() {
    let criteria: [(usize, &str, Criterion, Duration); 8] = [
        (1, "gradient correctness", gradients, Duration::from_secs(10)),
        (2, "closed-form oracle", closed_form, Duration::from_secs(120)),
        (3, "constraint satisfaction", constraint, Duration::from_secs(20 * 60)),
        (4, "dispersion", dispersion, Duration::MAX),
        (5, "alternation distances", distances, Duration::MAX),
        (6, "projection semantics", projection_semantics, Duration::MAX),
        (7, "clustering invariants", clustering, Duration::MAX),
        (8, "reproducibility", reproducibility, Duration::MAX),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, name, run, budget) in criteria {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let mut v = run();
        let took = start.elapsed();
        if took > budget {
            v.pass = false;
            v.detail = format!("{}; over the {}s budget", v.detail, budget.as_secs());
        }
        failed += usize::from(!v.pass);
        let status = if v.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {n} ({name}): {status} [{:.1}s] {}",
            took.as_secs_f64(),
            v.detail
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

// 1 -------------------------------------------------------------------------

fn gradients() -> Verdict {
    const EPS: f64 = 1e-6;
    let cfg = UxLossConfig::default();
    let mut worst = 0.0f64;
    for seed in 0..10u64 {
        let mut rng = StdRng::seed_from_u64(1000 + seed);
        let input = rng.random_range(1..=6);
        let hidden: Vec<usize> = (0..rng.random_range(1..=3)).map(|_| rng.random_range(1..=8)).collect();
        let activation = [Activation::Tanh, Activation::Relu, Activation::Identity][seed as usize % 3];
        let base = Network::xavier(Architecture::new(input, hidden, activation).unwrap(), seed);
        let params: Vec<f64> = base
            .parameters()
            .iter()
            .map(|p| p + rng.random_range(-0.3..0.3))
            .collect();
        let net = base.with_parameters(&params).unwrap();
        let m = rng.random_range(3..=10);
        let x = Matrix::new(m, input, (0..m * input).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
        let d: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..3.0)).collect();

        let loss = |p: &[f64]| {
            let out = net.with_parameters(p).unwrap().forward(&x).unwrap();
            ux_loss(&d, &out, &cfg).unwrap()
        };
        let upstream = ux_loss_output_grad(&d, &net.forward(&x).unwrap(), &cfg).unwrap();
        let analytic = net.backward(&x, &upstream).unwrap().to_flat();
        for (i, a) in analytic.iter().enumerate() {
            let (mut plus, mut minus) = (params.clone(), params.clone());
            plus[i] += EPS;
            minus[i] -= EPS;
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * EPS);
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-3));
        }
    }
    Verdict::new(
        worst <= 1e-5,
        format!("max relative error {worst:.2e} over 10 networks (limit 1e-5)"),
    )
}

// 2 -------------------------------------------------------------------------

fn closed_form() -> Verdict {
    let mut scenario = SyntheticScenario::new(ScenarioKind::Linear, 2000, 8, 11);
    scenario.noise_sd = Some(0.0);
    let data = generate(&scenario).unwrap().dataset;
    let mut cfg = SystemConfig {
        k: 1,
        min_size: 1,
        constrained: false,
        ..SystemConfig::default()
    };
    cfg.train.batch_size = data.players();
    cfg.train.eta_ux = 0.05;
    cfg.train.max_epochs_ux = 3000;
    cfg.train.ux_plateau_tol = 1e-5;
    cfg.train.ux_patience = 10;
    let fit = model::train(model::plan(&data, &cfg, None).unwrap(), &data, &cfg).unwrap();

    let d = data.difficulty();
    let oracle = analytic_ux_minimizer(d, &UxLossConfig::new(cfg.alpha).unwrap());
    let pred = fit.required();
    let rmse = (pred.iter().zip(&oracle).map(|(p, o)| (p - o) * (p - o)).sum::<f64>() / d.len() as f64).sqrt();
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    let sd = (d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d.len() as f64).sqrt();
    let ratio = rmse / sd;
    Verdict::new(
        ratio <= 0.05,
        format!("rmse {rmse:.4} = {:.2}% of sd(D) {sd:.4} (limit 5%)", 100.0 * ratio),
    )
}

// 3, 4, 5: one benchmark fit ----------------------------------------------

struct Benchmark {
    fit: SystemFit,
    report: ComparisonReport,
}

fn benchmark() -> &'static Benchmark {
    static CELL: OnceLock<Benchmark> = OnceLock::new();
    CELL.get_or_init(|| {
        let run = RunConfig::default();
        let data = generate(&run.scenario.scenario()).unwrap().dataset;
        let cfg = run.system();
        let fit = model::train(model::plan(&data, &cfg, None).unwrap(), &data, &cfg).unwrap();
        let rules = rule_based_assign(&benchmark_policy(), data.features()).unwrap();
        let required = fit.required();
        let settings = CompareSettings {
            target: cfg.target,
            tolerance: cfg.tolerance,
            band: run.report.band,
            threshold: run.report.threshold,
        };
        let report = compare(
            data.difficulty(),
            fit.plan.assignment.labels(),
            fit.plan.assignment.k(),
            LabelSource::Stored,
            &[(RULE_BASED, &rules[..]), (DL_DDA, &required[..])],
            &settings,
        )
        .unwrap();
        Benchmark { fit, report }
    })
}

fn constraint() -> Verdict {
    let b = benchmark();
    let dl = b.report.method(DL_DDA).unwrap();
    let rules = b.report.method(RULE_BASED).unwrap();
    let [lo, hi] = b.report.band;
    let in_band = |r: f64| (lo..=hi).contains(&r);
    let rates: Vec<f64> = b.fit.clusters.iter().map(|c| c.completion_rate).collect();
    let close = rates.iter().filter(|r| (*r - b.report.target).abs() <= 0.02).count();
    let share = close as f64 / rates.len() as f64;
    let pass = in_band(dl.overall_rate) && share >= 0.9 && !in_band(rules.overall_rate);
    let shown: Vec<String> = rates.iter().map(|r| format!("{r:.4}")).collect();
    Verdict::new(
        pass,
        format!(
            "dl-dda overall {:.4}, rule-based {:.4}, band [{lo}, {hi}]; {close}/{} clusters within 0.02 of {} [{}]",
            dl.overall_rate,
            rules.overall_rate,
            rates.len(),
            b.report.target,
            shown.join(" ")
        ),
    )
}

fn dispersion() -> Verdict {
    let b = benchmark();
    let dl = b.report.method(DL_DDA).unwrap();
    let rules = b.report.method(RULE_BASED).unwrap();
    let pass = dl.rate_variance < rules.rate_variance && dl.clusters_above_threshold < rules.clusters_above_threshold;
    Verdict::new(
        pass,
        format!(
            "variance {:.3e} vs {:.3e}; clusters above {}: {} vs {} (dl-dda vs rule-based)",
            dl.rate_variance,
            rules.rate_variance,
            b.report.threshold,
            dl.clusters_above_threshold,
            rules.clusters_above_threshold
        ),
    )
}

fn distances() -> Verdict {
    let b = benchmark();
    let mut pass = true;
    let mut lines = Vec::new();
    let mut converged = 0;
    for c in &b.fit.clusters {
        if !c.converged {
            continue;
        }
        converged += 1;
        match prop1_check(&c.trace) {
            Ok(r) => {
                let ok = r.last_below_first && r.fraction_non_increasing >= 0.9;
                pass &= ok;
                lines.push(format!(
                    "k{} {}/{} non-increasing, {:.4}->{:.4}{}",
                    c.cluster,
                    r.non_increasing_pairs,
                    r.pairs,
                    r.first,
                    r.last,
                    if ok { "" } else { " (fails)" }
                ));
            }
            Err(e) => {
                pass = false;
                lines.push(format!("k{}: {e}", c.cluster));
            }
        }
    }
    if converged == 0 {
        pass = false;
        lines.push("no converged cluster".into());
    }
    Verdict::new(
        pass,
        format!(
            "{converged}/{} clusters converged; {}",
            b.fit.clusters.len(),
            lines.join("; ")
        ),
    )
}

// 6 -------------------------------------------------------------------------

fn run_property<S: Strategy>(
    name: &str,
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    runner.run(&strategy, test).map_err(|e| format!("{name}: {e}"))
}

fn tied_pair(max_len: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1..=max_len).prop_flat_map(|m| {
        (
            prop::collection::vec((-4i32..=4).prop_map(f64::from), m),
            prop::collection::vec((-4i32..=4).prop_map(f64::from), m),
        )
    })
}

fn projection_semantics() -> Verdict {
    const CASES: u32 = 1000;
    let results = [
        run_property(
            "monotonicity",
            CASES,
            (tied_pair(20), any::<prop::sample::Index>(), 0.0f64..5.0),
            |((d, r), pick, bump)| {
                let j = pick.index(r.len());
                let before = achieved_completion_rate(&d, &r).unwrap();
                let mut raised = r.clone();
                raised[j] += bump;
                prop_assert!(achieved_completion_rate(&d, &raised).unwrap() <= before);
                Ok(())
            },
        ),
        run_property("range", CASES, tied_pair(30), |(d, r)| {
            let m = d.len();
            let rate = achieved_completion_rate(&d, &r).unwrap();
            prop_assert!(
                (0..=m).any(|k| rate == k as f64 / m as f64),
                "rate {} for m {}",
                rate,
                m
            );
            Ok(())
        }),
        run_property(
            "projection direction",
            CASES,
            (
                prop::collection::vec(-5.0f64..5.0, 1..40),
                -6.0f64..6.0,
                0.0f64..=1.0,
                0.01f64..1.0,
            ),
            |(d, theta, p, eta)| {
                let arch = Architecture::new(1, vec![], Activation::Identity).unwrap();
                let layer = DenseLayer {
                    inputs: 1,
                    outputs: 1,
                    weights: vec![0.0],
                    biases: vec![theta],
                };
                let net = Network::from_layers(arch, vec![layer]).unwrap();
                let x = Matrix::zeros(d.len(), 1);
                let spec = CompletionSpec::new(p, 0.001).unwrap();
                let r = net.forward(&x).unwrap();
                let rate = achieved_completion_rate(&d, &r).unwrap();
                let signal = projection_error(&d, &r, &spec).unwrap();
                if let ProjectionSignal::Descend { .. } = signal {
                    let upstream = signal.output_grad(d.len()).unwrap();
                    let next = net.sgd_step(&net.backward(&x, &upstream).unwrap(), eta).unwrap();
                    let rate2 = achieved_completion_rate(&d, &next.forward(&x).unwrap()).unwrap();
                    if rate < p {
                        prop_assert!(rate2 >= rate);
                    } else {
                        prop_assert!(rate2 <= rate);
                    }
                }
                Ok(())
            },
        ),
        run_property(
            "satisfied iff within tolerance",
            CASES,
            (tied_pair(30), 0.0f64..=1.0, 0.001f64..0.2),
            |((d, r), p, delta)| {
                let spec = CompletionSpec::new(p, delta).unwrap();
                let rate = achieved_completion_rate(&d, &r).unwrap();
                let signal = projection_error(&d, &r, &spec).unwrap();
                prop_assert_eq!(signal.is_satisfied(), (rate - p).abs() <= delta);
                Ok(())
            },
        ),
    ];
    let errors: Vec<String> = results.into_iter().filter_map(Result::err).collect();
    Verdict::new(
        errors.is_empty(),
        if errors.is_empty() {
            format!("4 properties x {CASES} cases, no failures")
        } else {
            errors.join("; ")
        },
    )
}

// 7 -------------------------------------------------------------------------

fn clustering() -> Verdict {
    const CASES: u32 = 200;
    let instance = (2usize..60, 1usize..5, 1usize..5)
        .prop_flat_map(|(m, z, c)| {
            (
                Just((m, z)),
                prop::collection::vec(-5.0f64..5.0, c * z),
                prop::collection::vec((0..c, prop::collection::vec(-1.0f64..1.0, z)), m),
            )
        })
        .prop_map(|((m, z), centers, pts)| {
            let data: Vec<f64> = pts
                .iter()
                .flat_map(|(ci, off)| (0..z).map(|j| centers[ci * z + j] + off[j]).collect::<Vec<_>>())
                .collect();
            Matrix::new(m, z, data).unwrap()
        })
        .prop_flat_map(|x| {
            let m = x.rows();
            (Just(x), 1..=m.min(8), any::<u64>(), any::<bool>(), 0.0f64..=1.0)
        });
    let result = run_property("clustering", CASES, instance, |(x, k, seed, random, frac)| {
        let cfg = KMeansConfig {
            init: if random {
                KMeansInit::Random
            } else {
                KMeansInit::PlusPlus
            },
            ..KMeansConfig::new(k, seed)
        };
        let run = kmeans_traced(&x, &cfg).unwrap();
        let a = &run.assignment;
        // Totality.
        prop_assert_eq!(a.len(), x.rows());
        prop_assert!(a.labels().iter().all(|&l| l < a.k()));
        prop_assert_eq!(a.sizes().iter().sum::<usize>(), x.rows());
        // WCSS per Lloyd iteration.
        for w in run.wcss_history.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12, "history {:?}", run.wcss_history);
        }
        // Determinism.
        prop_assert_eq!(&kmeans(&x, &cfg).unwrap(), a);
        // Minimum size.
        let min_size = 1 + ((x.rows() - 1) as f64 * frac) as usize;
        let enforced = enforce_min_size(a, &x, min_size).unwrap();
        prop_assert!(
            enforced.sizes().iter().all(|&s| s >= min_size),
            "sizes {:?} min {}",
            enforced.sizes(),
            min_size
        );
        prop_assert_eq!(enforced.sizes().iter().sum::<usize>(), x.rows());
        prop_assert_eq!(enforce_min_size(a, &x, min_size).unwrap(), enforced);
        Ok(())
    });
    Verdict::new(
        result.is_ok(),
        result
            .err()
            .unwrap_or_else(|| format!("{CASES} instances, no failures")),
    )
}

// 8 -------------------------------------------------------------------------

fn pipeline(root: &Path) -> Result<(), String> {
    let s = |p: PathBuf| p.to_string_lossy().into_owned();
    let data = s(root.join("data/players.csv"));
    let policy = s(root.join("data/policy.json"));
    let model_dir = s(root.join("model"));
    let reports = s(root.join("reports"));
    let steps: [Vec<&str>; 3] = [
        vec![
            "generate",
            "--players",
            "1500",
            "--features",
            "8",
            "--segments",
            "4",
            "--seed",
            "21",
            "--out",
            &data,
            "--policy-out",
            &policy,
        ],
        vec![
            "train",
            "--data",
            &data,
            "--model-dir",
            &model_dir,
            "--k",
            "4",
            "--min-size",
            "100",
            "--seed",
            "5",
            "--hidden",
            "16,16",
            "--max-alternations",
            "6",
        ],
        vec![
            "evaluate",
            "--data",
            &data,
            "--model-dir",
            &model_dir,
            "--policy",
            &policy,
            "--out-dir",
            &reports,
        ],
    ];
    for args in steps {
        let code = dda::cli::run(std::iter::once("dda").chain(args.iter().copied()));
        // 3 only flags unsatisfied clusters; the files are still written.
        if code != 0 && !(args[0] == "train" && code == 3) {
            return Err(format!("{} exited with {code}", args[0]));
        }
    }
    Ok(())
}

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn reproducibility() -> Verdict {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    if let Err(e) = pipeline(a.path()).and_then(|_| pipeline(b.path())) {
        return Verdict::new(false, e);
    }
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    let names = |t: &[(PathBuf, Vec<u8>)]| t.iter().map(|(p, _)| p.clone()).collect::<Vec<_>>();
    if names(&ta) != names(&tb) {
        return Verdict::new(false, "the two runs wrote different file sets");
    }
    let differing: Vec<String> = ta
        .iter()
        .zip(&tb)
        .filter(|(x, y)| x.1 != y.1)
        .map(|(x, _)| x.0.display().to_string())
        .collect();
    let bytes: usize = ta.iter().map(|(_, c)| c.len()).sum();
    Verdict::new(
        differing.is_empty(),
        if differing.is_empty() {
            format!("{} files ({bytes} bytes) identical across two runs", ta.len())
        } else {
            format!("differing: {}", differing.join(", "))
        },
    )
}
