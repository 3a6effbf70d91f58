//! Command-line front end: `run`, `sweep`, `certify` and `list-problems`.
//!
//! Exit codes: 0 on success (and certification pass when a certificate is
//! available), 2 on certification failure, 3 when a run exceeds its bound,
//! diverges or violates a declared constant, 64 on usage errors, 1 otherwise.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::problem::registry::{self, ProblemConfig, PROBLEMS};
use crate::problem::{Oracle, Point};
use crate::solvers::{solve, AgdSmoothness, Algorithm, SolveConfig, SolveReport, Surrogate};

use super::certify::certify;
use super::sweep::{parse_seeds, run_sweep, SweepSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CERT_FAIL: i32 = 2;
pub const EXIT_BOUND: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(name = "ncgopt", version, about = "Matrix-free nonconvex optimizers and benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one solver on one problem.
    Run(RunArgs),
    /// Run several solvers over a range of seeds and aggregate counters.
    Sweep(SweepArgs),
    /// Certify a point with a dense eigen-solve.
    Certify(CertifyArgs),
    /// List registered problems.
    ListProblems,
}

#[derive(Debug, Clone, Args)]
struct ProblemArgs {
    /// Problem key (see `list-problems`).
    #[arg(long)]
    problem: Option<String>,
    /// Problem dimension (matrix size for matfac).
    #[arg(long)]
    dim: Option<usize>,
    /// Factor rank for matfac.
    #[arg(long)]
    rank: Option<usize>,
    /// Component count for finite-sum problems.
    #[arg(long)]
    components: Option<usize>,
    /// Seed for randomly generated problem data.
    #[arg(long)]
    problem_seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
struct SolveArgs {
    /// First-order target on the gradient norm [default: 1e-3].
    #[arg(long)]
    eps1: Option<f64>,
    /// Second-order target on the smallest Hessian eigenvalue [default: 1e-2].
    #[arg(long, conflicts_with = "alpha")]
    eps2: Option<f64>,
    /// Sets eps2 = eps1^alpha.
    #[arg(long)]
    alpha: Option<f64>,
    /// Total failure probability [default: 0.1].
    #[arg(long)]
    delta: Option<f64>,
    /// Run seed for Lanczos starts and sampling [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Iteration cap [default: twice the theoretical bound; for ncg-b1/b2, the outer bound].
    #[arg(long)]
    max_iters: Option<u64>,
    /// Declared gap f(x0) - f*.
    #[arg(long)]
    delta_gap: Option<f64>,
    /// Gradient sample size for sncg.
    #[arg(long)]
    s1: Option<u64>,
    /// Hessian sample size for sncg.
    #[arg(long)]
    s2: Option<u64>,
    /// Inner AGD smoothness for ncg-b1/b2: safe or paper.
    #[arg(long)]
    agd_smoothness: Option<String>,
    /// Hessian surrogate for ih-ncg-a: exact, perturbed or subsampled.
    #[arg(long)]
    surrogate: Option<String>,
    /// Perturbation size for `--surrogate perturbed`.
    #[arg(long)]
    eps3: Option<f64>,
    /// Sample size for `--surrogate subsampled`.
    #[arg(long)]
    surrogate_size: Option<u64>,
    /// Fill the wall_ns trace column.
    #[arg(long)]
    record_wall_time: bool,
    /// TOML file with defaults for any of the above.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// gd, ncd, ncd-matched, ncg-a1, ncg-a2, ncg-b1, ncg-b2, ih-ncg-a or sncg [default: ncg-a1].
    #[arg(long)]
    algo: Option<String>,
    #[command(flatten)]
    solve: SolveArgs,
    /// Output prefix: writes `<out>.trace.csv` and `<out>.report.json`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Comma-separated algorithm list.
    #[arg(long)]
    algo: String,
    /// Seed range `a..b` (inclusive) or comma list.
    #[arg(long)]
    seeds: String,
    #[command(flatten)]
    solve: SolveArgs,
    /// Output directory for traces, reports and `aggregate.json`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Args)]
struct CertifyArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Comma-separated coordinates.
    #[arg(long, conflicts_with = "report")]
    point: Option<String>,
    /// Certify `x_final` of a report JSON written by `run`.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Gradient-norm threshold.
    #[arg(long)]
    eps1: f64,
    /// Curvature threshold: passes when lambda_min >= -eps2.
    #[arg(long)]
    eps2: f64,
}

/// Defaults read from `--config`. Flags override file values.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    problem: Option<ProblemConfig>,
    algo: Option<String>,
    eps1: Option<f64>,
    eps2: Option<f64>,
    alpha: Option<f64>,
    delta: Option<f64>,
    seed: Option<u64>,
    max_iters: Option<u64>,
    delta_gap: Option<f64>,
    s1: Option<u64>,
    s2: Option<u64>,
    agd_smoothness: Option<AgdSmoothness>,
    surrogate: Option<Surrogate>,
    record_wall_time: Option<bool>,
}

fn load_config(path: Option<&Path>) -> Result<ConfigFile> {
    let Some(path) = path else {
        return Ok(ConfigFile::default());
    };
    let text = std::fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
}

fn problem_config(args: &ProblemArgs, file: Option<ProblemConfig>) -> Result<ProblemConfig> {
    let mut cfg = match (&args.problem, file) {
        (Some(key), Some(f)) if f.key == *key => f,
        (Some(key), _) => ProblemConfig::new(key.clone()),
        (None, Some(f)) => f,
        (None, None) => ProblemConfig::new("trig"),
    };
    if !registry::is_known(&cfg.key) {
        let known: Vec<&str> = PROBLEMS.iter().map(|(k, _)| *k).collect();
        return Err(Error::config(format!(
            "unknown problem '{}' (known: {})",
            cfg.key,
            known.join(", ")
        )));
    }
    cfg.dim = args.dim.or(cfg.dim);
    cfg.rank = args.rank.or(cfg.rank);
    cfg.components = args.components.or(cfg.components);
    if let Some(s) = args.problem_seed {
        cfg.problem_seed = s;
    }
    Ok(cfg)
}

fn solve_config(args: &SolveArgs, file: &ConfigFile) -> Result<SolveConfig> {
    let eps1 = args.eps1.or(file.eps1).unwrap_or(1e-3);
    let delta = args.delta.or(file.delta).unwrap_or(0.1);
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let alpha = args.alpha.or(if args.eps2.is_some() { None } else { file.alpha });
    let mut cfg = match alpha {
        Some(a) => SolveConfig::with_alpha(eps1, a, delta, seed)?,
        None => SolveConfig::new(eps1, args.eps2.or(file.eps2).unwrap_or(1e-2), delta, seed),
    };
    cfg.max_iters = args.max_iters.or(file.max_iters);
    cfg.delta_gap = args.delta_gap.or(file.delta_gap);
    cfg.s1 = args.s1.or(file.s1);
    cfg.s2 = args.s2.or(file.s2);
    cfg.agd_smoothness = match &args.agd_smoothness {
        Some(s) => s.parse()?,
        None => file.agd_smoothness.unwrap_or_default(),
    };
    cfg.surrogate = match args.surrogate.as_deref() {
        None => file.surrogate.unwrap_or_default(),
        Some("exact") => Surrogate::Exact,
        Some("perturbed") => Surrogate::Perturbed {
            eps3: args
                .eps3
                .ok_or_else(|| Error::config("--surrogate perturbed needs --eps3"))?,
        },
        Some("subsampled") => Surrogate::SubSampled {
            size: args
                .surrogate_size
                .ok_or_else(|| Error::config("--surrogate subsampled needs --surrogate-size"))?,
        },
        Some(other) => {
            return Err(Error::config(format!(
                "surrogate must be exact, perturbed or subsampled, got '{other}'"
            )))
        }
    };
    cfg.record_wall_time = args.record_wall_time || file.record_wall_time.unwrap_or(false);
    cfg.validate()?;
    Ok(cfg)
}

/// Exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Input(_) => EXIT_USAGE,
        Error::BoundExceeded(_) | Error::Divergence(_) | Error::Constants { .. } => EXIT_BOUND,
        _ => EXIT_OTHER,
    }
}

/// Exit code for a finished run.
pub fn report_exit_code(report: &SolveReport) -> i32 {
    match report.certification_passed() {
        Some(false) => EXIT_CERT_FAIL,
        _ => EXIT_OK,
    }
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Writes `<prefix>.trace.csv` and `<prefix>.report.json`.
pub fn write_run_files(prefix: &Path, report: &SolveReport) -> Result<()> {
    if let Some(dir) = prefix.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    report.trace.write_csv(&with_suffix(prefix, ".trace.csv"))?;
    std::fs::write(with_suffix(prefix, ".report.json"), report.to_json()? + "\n")?;
    Ok(())
}

fn summary_line(r: &SolveReport) -> String {
    let cert = match &r.certificate {
        Some(c) => format!(
            "grad_norm={:.3e} lambda_min={:.3e} certified={}",
            c.grad_norm,
            c.lambda_min,
            r.certification_passed().unwrap_or(false)
        ),
        None => "certificate=unavailable".to_string(),
    };
    format!(
        "{} on {} (d={}): f {:.6e} -> {:.6e}, iters={} (bound {}), hvp={}, grad={}, {cert}",
        r.algorithm,
        r.problem,
        r.dim,
        r.f_initial,
        r.f_final,
        r.bounded_iters(),
        r.theoretical_iter_bound,
        r.counters.total_hvp(),
        r.counters.total_grad(),
    )
}

fn cmd_run(args: RunArgs, out: &mut dyn Write) -> Result<i32> {
    let file = load_config(args.solve.config.as_deref())?;
    let algo: Algorithm = args
        .algo
        .as_deref()
        .or(file.algo.as_deref())
        .unwrap_or("ncg-a1")
        .parse()?;
    let pcfg = problem_config(&args.problem, file.problem.clone())?;
    let cfg = solve_config(&args.solve, &file)?;
    let built = registry::build(&pcfg, cfg.seed)?;
    let oracle = Oracle::new(built.problem.as_ref());
    let report = solve(&oracle, &built.x0, algo, &cfg)?;
    if let Some(prefix) = &args.out {
        write_run_files(prefix, &report)?;
    }
    writeln!(out, "{}", summary_line(&report))?;
    Ok(report_exit_code(&report))
}

fn cmd_sweep(args: SweepArgs, out: &mut dyn Write) -> Result<i32> {
    let file = load_config(args.solve.config.as_deref())?;
    let algorithms = args
        .algo
        .split(',')
        .map(|s| s.trim().parse())
        .collect::<Result<Vec<Algorithm>>>()?;
    let spec = SweepSpec {
        problem: problem_config(&args.problem, file.problem.clone())?,
        algorithms,
        seeds: parse_seeds(&args.seeds)?,
        config: solve_config(&args.solve, &file)?,
        threads: args.threads,
    };
    let summary = run_sweep(&spec, args.out.as_deref())?;
    for a in &summary.algorithms {
        writeln!(
            out,
            "{}: runs={} errors={} mean_hvp={:.1} mean_grad={:.1} mean_iters={:.1} certified={:.3}",
            a.algorithm, a.runs, a.errors, a.mean_hvp, a.mean_grad, a.mean_iters, a.certified_fraction
        )?;
    }
    if let Some(r) = summary.hvp_ratio {
        writeln!(out, "hvp ratio {}/{}: {r:.4}", summary.algorithms[0].algorithm, summary.algorithms[1].algorithm)?;
    }
    Ok(if summary.algorithms.iter().any(|a| a.errors > 0) { EXIT_BOUND } else { EXIT_OK })
}

fn parse_point(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|c| {
            c.trim()
                .parse::<f64>()
                .map_err(|_| Error::config(format!("bad coordinate '{c}'")))
        })
        .collect()
}

fn cmd_certify(args: CertifyArgs, out: &mut dyn Write) -> Result<i32> {
    let (pcfg, x) = match (&args.report, &args.point) {
        (Some(path), _) => {
            let report: SolveReport = serde_json::from_str(&std::fs::read_to_string(path)?)
                .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
            (problem_config(&args.problem, None)?, report.x_final.into_vec())
        }
        (None, Some(p)) => (problem_config(&args.problem, None)?, parse_point(p)?),
        (None, None) => return Err(Error::config("certify needs --point or --report")),
    };
    let built = registry::build(&pcfg, 0)?;
    let oracle = Oracle::new(built.problem.as_ref());
    let x = Point::new(x)?;
    let cert = certify(&oracle, &x, args.eps1, args.eps2)?;
    let json = serde_json::to_string_pretty(&cert).map_err(|e| Error::Numerical(e.to_string()))?;
    writeln!(out, "{json}")?;
    Ok(if cert.passed() { EXIT_OK } else { EXIT_CERT_FAIL })
}

fn cmd_list(out: &mut dyn Write) -> Result<i32> {
    for (k, desc) in PROBLEMS {
        writeln!(out, "{k:<20} {desc}")?;
    }
    Ok(EXIT_OK)
}

/// Runs the CLI on `argv` (program name first), writing to `out` and `err`.
pub fn run_cli_with<I, S>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            if e.use_stderr() {
                let _ = write!(err, "{}", e.render());
            } else {
                let _ = write!(out, "{}", e.render());
            }
            return code;
        }
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(a, out),
        Command::Sweep(a) => cmd_sweep(a, out),
        Command::Certify(a) => cmd_certify(a, out),
        Command::ListProblems => cmd_list(out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

/// Runs the CLI on `argv` with the process's standard streams.
pub fn run_cli<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_cli_with(argv, &mut stdout.lock(), &mut stderr.lock())
}
