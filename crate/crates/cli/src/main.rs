//! Command-line front end: single-instance matching, the two benchmark
//! grids, and the oracle selftest.
//!
//! Exit codes: 0 success, 1 I/O or validation failure, 2 solver failure,
//! 3 selftest failure. Benchmark grids run trials in a rayon pool (capped
//! by `GM_THREADS`); every trial is keyed by its own seed and rows are
//! sorted before writing, so parallel and serial runs emit identical
//! metric columns.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use softmatch::metrics;
use softmatch::oracles;
use softmatch::synth::{self, Connectivity, GenSpec};
use softmatch::{
    alternating_projection, dynamic_softassign, hungarian, load_graph, permutation_to_matrix,
    scg_solve, AlphaMode, OperatorKind, PermutationMatching, SolverConfig, Termination, Variant,
};

#[derive(Parser)]
#[command(name = "softmatch", version, about = "Graph matching via constrained gradient ascent")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Match two graphs and write a JSON report.
    Match(MatchArgs),
    /// Trace operator convergence across input magnitudes (CSV).
    BenchOperators(BenchOperatorsArgs),
    /// Run the node-deletion noise grid with fixed and adaptive steps (CSV).
    BenchNoise(BenchNoiseArgs),
    /// Check the fast paths against slow independent oracles.
    Selftest(SelftestArgs),
}

#[derive(Args, Serialize)]
struct MatchArgs {
    /// First graph (JSON).
    #[arg(long)]
    a: PathBuf,
    /// Second graph (JSON).
    #[arg(long)]
    b: PathBuf,
    /// Algorithm: scg, ga, dspfp, aipfp, or sm.
    #[arg(long, default_value = "scg")]
    algo: String,
    /// Softassign sharpness factor (default 5, or 3 when both graphs carry features).
    #[arg(long)]
    gamma: Option<f64>,
    /// Weight of the node-feature term.
    #[arg(long)]
    lambda: Option<f64>,
    /// Step size: "adaptive" or a fixed value in [0, 1]. Defaults to the algorithm's own rule.
    #[arg(long)]
    alpha: Option<String>,
    /// Outer stop tolerance on the iterate change.
    #[arg(long)]
    eps_outer: Option<f64>,
    /// Inner stop tolerance for the normalization sweeps.
    #[arg(long)]
    eps_sinkhorn: Option<f64>,
    /// Outer iteration cap.
    #[arg(long)]
    max_iters: Option<usize>,
    /// Ground-truth pairs (JSON `{"pairs": [[i, j], ...]}`) for accuracy reporting.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct BenchOperatorsArgs {
    /// Profit matrix side length.
    #[arg(long, default_value_t = 30)]
    n: usize,
    /// Input magnitudes, comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "1,10,100")]
    phi: Vec<f64>,
    /// Inner iterations to trace per operator.
    #[arg(long, default_value_t = 50)]
    iters: usize,
    /// Independent seeds per magnitude.
    #[arg(long, default_value_t = 5)]
    trials: usize,
    /// Base seed; trial t uses seed + t.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Softassign sharpness factor.
    #[arg(long, default_value_t = 5.0)]
    gamma: f64,
    /// Output CSV path (a .manifest.json sidecar is written next to it).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct BenchNoiseArgs {
    /// Graph sizes, comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "50,100,200")]
    sizes: Vec<usize>,
    /// Node deletion percentages, comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    deletions: Vec<f64>,
    /// Trials per (size, deletion) cell.
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Algorithms to compare, comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "scg,ga,dspfp,aipfp,sm")]
    algos: Vec<String>,
    /// Base seed; each trial derives its own instance seed from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Softassign sharpness factor.
    #[arg(long, default_value_t = 5.0)]
    gamma: f64,
    /// Weight of the node-feature term.
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Outer stop tolerance on the iterate change.
    #[arg(long, default_value_t = 1e-4)]
    eps_outer: f64,
    /// Inner stop tolerance for the normalization sweeps.
    #[arg(long, default_value_t = 1e-6)]
    eps_sinkhorn: f64,
    /// Outer iteration cap.
    #[arg(long, default_value_t = 30)]
    max_iters: usize,
    /// Output CSV path (a .manifest.json sidecar is written next to it).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct SelftestArgs {
    /// Run only checks whose name contains this substring.
    #[arg(long)]
    filter: Option<String>,
}

enum CliError {
    Usage(String),
    Solver(String),
    Selftest(usize),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Solver(_) => 2,
            CliError::Selftest(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) | CliError::Solver(msg) => f.write_str(msg),
            CliError::Selftest(n) => write!(f, "{n} selftest check(s) failed"),
        }
    }
}

fn usage(e: impl fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn solver(e: impl fmt::Display) -> CliError {
    CliError::Solver(e.to_string())
}

/// Config echo plus enough provenance to rerun a result file exactly.
#[derive(Serialize)]
struct RunManifest {
    command: String,
    version: &'static str,
    timestamp_unix_seconds: u64,
    seeds: Vec<u64>,
    config: serde_json::Value,
    outputs: Vec<String>,
}

impl RunManifest {
    fn new(config: serde_json::Value, seeds: Vec<u64>, outputs: Vec<String>) -> Self {
        let timestamp_unix_seconds = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        RunManifest {
            command: std::env::args().collect::<Vec<_>>().join(" "),
            version: env!("CARGO_PKG_VERSION"),
            timestamp_unix_seconds,
            seeds,
            config,
            outputs,
        }
    }

    /// `results.csv` gets its manifest at `results.manifest.json`.
    fn write_sidecar(&self, csv_path: &Path) -> Result<PathBuf, CliError> {
        let path = csv_path.with_extension("manifest.json");
        let text = serde_json::to_string_pretty(self).map_err(usage)?;
        fs::write(&path, text + "\n")
            .map_err(|e| usage(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }
}

fn config_echo(args: &impl Serialize) -> Result<serde_json::Value, CliError> {
    serde_json::to_value(args).map_err(usage)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        return ExitCode::from(e.exit_code());
    }
    ExitCode::SUCCESS
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Match(args) => cmd_match(args),
        Command::BenchOperators(args) => cmd_bench_operators(args),
        Command::BenchNoise(args) => cmd_bench_noise(args),
        Command::Selftest(args) => cmd_selftest(args),
    }
}

/// `GM_THREADS=k` caps the worker pool; unset means rayon's default.
fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("GM_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| usage(format!("GM_THREADS must be a positive integer, got '{raw}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| usage(format!("cannot size the worker pool: {e}")))
}

#[derive(Deserialize)]
struct TruthFile {
    pairs: Vec<(usize, usize)>,
}

#[derive(Serialize)]
struct MatchReport {
    algo: &'static str,
    n_a: usize,
    n_b: usize,
    pairs: Vec<(usize, usize)>,
    objective: f64,
    matching_error: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    accuracy: Option<f64>,
    iterations: usize,
    termination: Termination,
    alpha_trace: Vec<f64>,
    wall_time_seconds: f64,
    manifest: RunManifest,
}

fn cmd_match(args: MatchArgs) -> Result<(), CliError> {
    let ga = load_graph(&args.a).map_err(usage)?;
    let gb = load_graph(&args.b).map_err(usage)?;
    let variant = Variant::from_str(&args.algo).map_err(usage)?;

    let mut base = SolverConfig::defaults_for(&ga, &gb);
    if let Some(v) = args.gamma {
        base.gamma = v;
    }
    if let Some(v) = args.lambda {
        base.lambda = v;
    }
    if let Some(v) = args.eps_outer {
        base.eps_outer = v;
    }
    if let Some(v) = args.eps_sinkhorn {
        base.eps_sinkhorn = v;
    }
    if let Some(v) = args.max_iters {
        base.max_outer = v;
    }
    let mut config = variant.config_from(&base);
    if let Some(raw) = &args.alpha {
        config.alpha = AlphaMode::from_str(raw).map_err(usage)?;
    }
    config.validate().map_err(usage)?;

    let truth = args
        .truth
        .as_ref()
        .map(|path| load_truth(path, ga.n(), gb.n()))
        .transpose()?;

    let result = scg_solve(&ga, &gb, &config).map_err(solver)?;
    let matching_error =
        metrics::matching_error(&result.matching, &ga, &gb, config.lambda).map_err(solver)?;
    let accuracy = truth
        .as_ref()
        .map(|t| metrics::accuracy(&result.matching, t))
        .transpose()
        .map_err(usage)?;

    let report = MatchReport {
        algo: variant.name(),
        n_a: ga.n(),
        n_b: gb.n(),
        pairs: result.matching.pairs().to_vec(),
        objective: result.objective,
        matching_error,
        accuracy,
        iterations: result.iterations,
        termination: result.termination,
        alpha_trace: result.alpha_trace,
        wall_time_seconds: result.solve_seconds,
        manifest: RunManifest::new(
            config_echo(&args)?,
            Vec::new(),
            args.out
                .iter()
                .map(|p| p.display().to_string())
                .collect(),
        ),
    };
    let text = serde_json::to_string_pretty(&report).map_err(usage)?;
    match &args.out {
        Some(path) => fs::write(path, text + "\n")
            .map_err(|e| usage(format!("cannot write {}: {e}", path.display())))?,
        None => println!("{text}"),
    }
    Ok(())
}

fn load_truth(path: &Path, n: usize, m: usize) -> Result<PermutationMatching, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    let file: TruthFile = serde_json::from_str(&text)
        .map_err(|e| usage(format!("{}: {e}", path.display())))?;
    PermutationMatching::new(file.pairs, n, m).map_err(usage)
}

#[derive(Serialize)]
struct OperatorRow {
    phi: f64,
    operator: &'static str,
    iter: usize,
    distance: f64,
    seed: u64,
}

fn cmd_bench_operators(args: BenchOperatorsArgs) -> Result<(), CliError> {
    if args.trials == 0 {
        return Err(usage("need at least one trial"));
    }
    if args.iters == 0 {
        return Err(usage("need at least one iteration"));
    }
    if args.phi.is_empty() {
        return Err(usage("need at least one magnitude"));
    }

    let cells: Vec<(f64, u64)> = args
        .phi
        .iter()
        .flat_map(|&phi| (0..args.trials as u64).map(move |t| (phi, args.seed.wrapping_add(t))))
        .collect();
    let mut rows: Vec<OperatorRow> = cells
        .par_iter()
        .map(|&(phi, seed)| trace_operators(args.n, phi, seed, args.gamma, args.iters))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect();
    rows.sort_by(|x, y| {
        x.phi
            .total_cmp(&y.phi)
            .then(x.operator.cmp(y.operator))
            .then(x.iter.cmp(&y.iter))
            .then(x.seed.cmp(&y.seed))
    });

    write_csv(&args.out, &rows)?;
    let manifest = RunManifest::new(
        config_echo(&args)?,
        vec![args.seed],
        vec![args.out.display().to_string()],
    );
    let sidecar = manifest.write_sidecar(&args.out)?;

    println!("mean distance to the assignment optimum at iteration {}:", args.iters);
    let mut finals: BTreeMap<(String, &'static str), (f64, usize)> = BTreeMap::new();
    for row in rows.iter().filter(|r| r.iter == args.iters) {
        let entry = finals.entry((format!("{}", row.phi), row.operator)).or_insert((0.0, 0));
        entry.0 += row.distance;
        entry.1 += 1;
    }
    for ((phi, op), (sum, count)) in &finals {
        println!("  phi {phi:>6}  {op:<12} {:.6}", sum / *count as f64);
    }
    println!(
        "{} rows -> {} (manifest {})",
        rows.len(),
        args.out.display(),
        sidecar.display()
    );
    Ok(())
}

/// Distances `||P_t - P_opt||_F` for both doubly stochastic operators on one
/// random profit matrix, for t = 1..=iters.
fn trace_operators(
    n: usize,
    phi: f64,
    seed: u64,
    gamma: f64,
    iters: usize,
) -> Result<Vec<OperatorRow>, CliError> {
    let x = synth::random_profit(n, phi, seed).map_err(usage)?;
    let p_opt = permutation_to_matrix(&hungarian(&x).map_err(solver)?);
    let mut rows = Vec::with_capacity(2 * iters);
    for iter in 1..=iters {
        let soft = dynamic_softassign(&x, gamma, 0.0, iter).map_err(solver)?;
        rows.push(OperatorRow {
            phi,
            operator: OperatorKind::Softassign.name(),
            iter,
            distance: frobenius_distance(&soft.matrix, &p_opt),
            seed,
        });
        let alt = alternating_projection(&x, iter, 0.0).map_err(solver)?;
        rows.push(OperatorRow {
            phi,
            operator: OperatorKind::Alternating.name(),
            iter,
            distance: frobenius_distance(&alt.matrix, &p_opt),
            seed,
        });
    }
    Ok(rows)
}

fn frobenius_distance(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    (a - b).mapv(|v| v * v).sum().sqrt()
}

#[derive(Serialize)]
struct NoiseRow {
    algo: &'static str,
    alpha_mode: String,
    n: usize,
    q: f64,
    seed: u64,
    time: f64,
    matching_error: f64,
    accuracy: f64,
}

fn cmd_bench_noise(args: BenchNoiseArgs) -> Result<(), CliError> {
    if args.trials == 0 {
        return Err(usage("need at least one trial"));
    }
    if args.sizes.is_empty() || args.deletions.is_empty() {
        return Err(usage("need at least one size and one deletion level"));
    }
    let algos: Vec<Variant> = args
        .algos
        .iter()
        .map(|s| Variant::from_str(s))
        .collect::<Result<_, _>>()
        .map_err(usage)?;
    if algos.is_empty() {
        return Err(usage("need at least one algorithm"));
    }
    let base = SolverConfig {
        gamma: args.gamma,
        lambda: args.lambda,
        eps_outer: args.eps_outer,
        eps_sinkhorn: args.eps_sinkhorn,
        max_outer: args.max_iters,
        ..SolverConfig::default()
    };
    base.validate().map_err(usage)?;

    // One instance per cell, shared by every algorithm and both step rules,
    // so the comparison is paired. Generation consumes three seeds.
    let mut cells = Vec::new();
    for &n in &args.sizes {
        for &q in &args.deletions {
            for _ in 0..args.trials {
                let idx = cells.len() as u64;
                cells.push((n, q, args.seed.wrapping_add(3 * idx)));
            }
        }
    }

    let rows_per_cell: Vec<Vec<NoiseRow>> = cells
        .par_iter()
        .map(|&(n, q, seed)| noise_cell(n, q, seed, &algos, &base))
        .collect::<Result<_, _>>()?;
    let mut rows: Vec<NoiseRow> = rows_per_cell.into_iter().flatten().collect();
    rows.sort_by(|x, y| {
        x.algo
            .cmp(y.algo)
            .then(x.alpha_mode.cmp(&y.alpha_mode))
            .then(x.n.cmp(&y.n))
            .then(x.q.total_cmp(&y.q))
            .then(x.seed.cmp(&y.seed))
    });

    write_csv(&args.out, &rows)?;
    let manifest = RunManifest::new(
        config_echo(&args)?,
        vec![args.seed],
        vec![args.out.display().to_string()],
    );
    let sidecar = manifest.write_sidecar(&args.out)?;

    print_noise_summary(&algos, &rows);
    println!(
        "{} rows -> {} (manifest {})",
        rows.len(),
        args.out.display(),
        sidecar.display()
    );
    Ok(())
}

fn noise_cell(
    n: usize,
    q: f64,
    seed: u64,
    algos: &[Variant],
    base: &SolverConfig,
) -> Result<Vec<NoiseRow>, CliError> {
    let spec = GenSpec {
        n,
        seed,
        phi: 1.0,
        deletion_pct: q,
        connectivity: Connectivity::Delaunay,
    };
    let pair = spec.generate_pair().map_err(solver)?;
    let mut rows = Vec::with_capacity(algos.len() * 2);
    for &variant in algos {
        for alpha in [AlphaMode::Adaptive, AlphaMode::Fixed(1.0)] {
            let config = SolverConfig {
                alpha,
                ..variant.config_from(base)
            };
            let result = scg_solve(&pair.a, &pair.b, &config).map_err(solver)?;
            let matching_error =
                metrics::matching_error(&result.matching, &pair.a, &pair.b, config.lambda)
                    .map_err(solver)?;
            let accuracy = metrics::accuracy(&result.matching, &pair.truth).map_err(solver)?;
            rows.push(NoiseRow {
                algo: variant.name(),
                alpha_mode: alpha.to_string(),
                n,
                q,
                seed,
                time: result.solve_seconds,
                matching_error,
                accuracy,
            });
        }
    }
    Ok(rows)
}

/// Mean improvement of the adaptive step over fixed alpha = 1, per
/// algorithm: positive percentages mean the adaptive run was faster, had a
/// lower matching error, or was more accurate.
fn print_noise_summary(algos: &[Variant], rows: &[NoiseRow]) {
    let mut sums: BTreeMap<(&str, bool), (f64, f64, f64, usize)> = BTreeMap::new();
    for row in rows {
        let adaptive = row.alpha_mode == "adaptive";
        let entry = sums.entry((row.algo, adaptive)).or_insert((0.0, 0.0, 0.0, 0));
        entry.0 += row.time;
        entry.1 += row.matching_error;
        entry.2 += row.accuracy;
        entry.3 += 1;
    }
    let mean = |key: (&str, bool)| {
        sums.get(&key)
            .map(|&(t, e, a, c)| (t / c as f64, e / c as f64, a / c as f64))
    };
    let improvement = |fixed: f64, adaptive: f64, higher_is_better: bool| {
        if fixed.abs() < f64::EPSILON {
            return "n/a".to_string();
        }
        let gain = if higher_is_better {
            (adaptive - fixed) / fixed
        } else {
            (fixed - adaptive) / fixed
        };
        format!("{:.1}%", 100.0 * gain)
    };
    println!("improvements from the adaptive step size (over fixed alpha = 1):");
    println!("{:<10} {:>8} {:>16} {:>10}", "algorithm", "time", "matching error", "accuracy");
    for variant in algos {
        let name = variant.name();
        let (Some(fx), Some(ad)) = (mean((name, false)), mean((name, true))) else {
            continue;
        };
        println!(
            "{:<10} {:>8} {:>16} {:>10}",
            name,
            improvement(fx.0, ad.0, false),
            improvement(fx.1, ad.1, false),
            improvement(fx.2, ad.2, true),
        );
    }
}

fn cmd_selftest(args: SelftestArgs) -> Result<(), CliError> {
    let reports = oracles::run_selftest(args.filter.as_deref());
    if reports.is_empty() {
        return Err(usage(format!(
            "no selftest check matches '{}'",
            args.filter.as_deref().unwrap_or("")
        )));
    }
    let mut failures = 0;
    for report in &reports {
        let tag = if report.passed { "[PASS]" } else { "[FAIL]" };
        println!("{tag} {:<32} {}", report.name, report.detail);
        if !report.passed {
            failures += 1;
        }
    }
    println!("{}/{} checks passed", reports.len() - failures, reports.len());
    if failures > 0 {
        return Err(CliError::Selftest(failures));
    }
    Ok(())
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| usage(format!("cannot write {}: {e}", path.display())))?;
    for row in rows {
        writer.serialize(row).map_err(|e| usage(e.to_string()))?;
    }
    writer.flush().map_err(|e| usage(e.to_string()))
}
