//! Matched-seed sweeps over algorithms with counter aggregation.
//!
//! Runs fan out over worker threads. Each run builds its own problem and
//! oracle, so counters and random streams never cross runs. Files are
//! written afterwards by the calling thread.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::registry::{self, ProblemConfig};
use crate::problem::Oracle;
use crate::solvers::{solve, Algorithm, SolveConfig, SolveReport};

use super::cli::write_run_files;
use super::trace::RunTrace;

/// Parses `a..b` (inclusive) or a comma-separated seed list.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::config(format!("bad seed list '{s}' (use 'a..b' or 'a,b,c')"));
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    let seeds = s
        .split(',')
        .map(|t| t.trim().parse().map_err(|_| bad()))
        .collect::<Result<Vec<u64>>>()?;
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub problem: ProblemConfig,
    pub algorithms: Vec<Algorithm>,
    pub seeds: Vec<u64>,
    /// Base configuration; each run replaces `seed`.
    pub config: SolveConfig,
    pub threads: Option<usize>,
}

/// Aggregate counters for one algorithm. Means are over successful runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSummary {
    pub algorithm: Algorithm,
    pub runs: usize,
    pub errors: usize,
    pub mean_hvp: f64,
    pub mean_grad: f64,
    pub mean_iters: f64,
    /// Fraction of successful runs whose certificate passed; runs without a
    /// certificate count as not passed.
    pub certified_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub problem: ProblemConfig,
    pub seeds: Vec<u64>,
    pub algorithms: Vec<AlgorithmSummary>,
    /// Mean HVP count of the first algorithm over the second.
    pub hvp_ratio: Option<f64>,
}

/// One run of a sweep.
#[derive(Debug)]
pub struct SweepRun {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub result: Result<SolveReport>,
}

fn run_one(problem: &ProblemConfig, algorithm: Algorithm, seed: u64, base: &SolveConfig) -> Result<SolveReport> {
    let built = registry::build(problem, seed)?;
    let oracle = Oracle::new(built.problem.as_ref());
    let mut cfg = base.clone();
    cfg.seed = seed;
    solve(&oracle, &built.x0, algorithm, &cfg)
}

/// Executes every (algorithm, seed) pair, results in input order.
pub fn execute(spec: &SweepSpec) -> Vec<SweepRun> {
    let jobs: Vec<(Algorithm, u64)> = spec
        .algorithms
        .iter()
        .flat_map(|&a| spec.seeds.iter().map(move |&s| (a, s)))
        .collect();
    let workers = spec
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .clamp(1, jobs.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<SolveReport>>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(algo, seed)) = jobs.get(i) else { break };
                let r = run_one(&spec.problem, algo, seed, &spec.config);
                slots.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(r);
            });
        }
    });
    let slots = slots.into_inner().unwrap_or_else(|e| e.into_inner());
    jobs.into_iter()
        .zip(slots)
        .map(|((algorithm, seed), r)| SweepRun {
            algorithm,
            seed,
            result: r.unwrap_or_else(|| Err(Error::Numerical("sweep worker did not finish".into()))),
        })
        .collect()
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn ratio(algos: &[AlgorithmSummary]) -> Option<f64> {
    match algos {
        [a, b, ..] if b.mean_hvp > 0.0 => Some(a.mean_hvp / b.mean_hvp),
        _ => None,
    }
}

/// Aggregates finished runs per algorithm.
pub fn summarize(spec: &SweepSpec, runs: &[SweepRun]) -> SweepSummary {
    let algorithms: Vec<AlgorithmSummary> = spec
        .algorithms
        .iter()
        .map(|&algorithm| {
            let mine: Vec<&SweepRun> = runs.iter().filter(|r| r.algorithm == algorithm).collect();
            let ok: Vec<&SolveReport> = mine.iter().filter_map(|r| r.result.as_ref().ok()).collect();
            let certified = ok.iter().filter(|r| r.certification_passed() == Some(true)).count();
            AlgorithmSummary {
                algorithm,
                runs: mine.len(),
                errors: mine.len() - ok.len(),
                mean_hvp: mean(&ok.iter().map(|r| r.counters.total_hvp() as f64).collect::<Vec<_>>()),
                mean_grad: mean(&ok.iter().map(|r| r.counters.total_grad() as f64).collect::<Vec<_>>()),
                mean_iters: mean(&ok.iter().map(|r| r.iters as f64).collect::<Vec<_>>()),
                certified_fraction: if ok.is_empty() { 0.0 } else { certified as f64 / ok.len() as f64 },
            }
        })
        .collect();
    SweepSummary {
        problem: spec.problem.clone(),
        seeds: spec.seeds.clone(),
        hvp_ratio: ratio(&algorithms),
        algorithms,
    }
}

/// File prefix of one run inside a sweep directory.
pub fn run_prefix(dir: &Path, algorithm: Algorithm, seed: u64) -> PathBuf {
    dir.join(format!("{algorithm}-seed{seed}"))
}

/// Runs the sweep; with `out`, writes each run's trace and report plus
/// `aggregate.json` into that directory.
pub fn run_sweep(spec: &SweepSpec, out: Option<&Path>) -> Result<SweepSummary> {
    if spec.algorithms.is_empty() || spec.seeds.is_empty() {
        return Err(Error::config("sweep needs at least one algorithm and one seed"));
    }
    let runs = execute(spec);
    let summary = summarize(spec, &runs);
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        for r in &runs {
            if let Ok(report) = &r.result {
                write_run_files(&run_prefix(dir, r.algorithm, r.seed), report)?;
            }
        }
        let json = serde_json::to_string_pretty(&summary).map_err(|e| Error::Numerical(e.to_string()))?;
        std::fs::write(dir.join("aggregate.json"), json + "\n")?;
    }
    Ok(summary)
}

/// Mean final `hvp_cum`, `grad_cum` and row count per algorithm, read back
/// from the trace files of a sweep directory. Missing files (failed runs)
/// are skipped.
pub fn recompute_from_traces(dir: &Path, algorithms: &[Algorithm], seeds: &[u64]) -> Result<Vec<(Algorithm, f64, f64, f64)>> {
    let mut out = Vec::new();
    for &a in algorithms {
        let (mut hvp, mut grad, mut iters) = (Vec::new(), Vec::new(), Vec::new());
        for &s in seeds {
            let mut path = run_prefix(dir, a, s).into_os_string();
            path.push(".trace.csv");
            let path = PathBuf::from(path);
            if !path.exists() {
                continue;
            }
            let t = RunTrace::read_csv(&path)?;
            let last = t.last().ok_or_else(|| Error::Input(format!("{} is empty", path.display())))?;
            hvp.push(last.hvp_cum as f64);
            grad.push(last.grad_cum as f64);
            iters.push(t.len() as f64);
        }
        out.push((a, mean(&hvp), mean(&grad), mean(&iters)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seeds("1..3").unwrap(), vec![1, 2, 3]);
        assert_eq!(parse_seeds("4, 9").unwrap(), vec![4, 9]);
        assert!(parse_seeds("3..1").is_err());
        assert!(parse_seeds("x").is_err());
    }

    #[test]
    fn aggregate_matches_trace_files() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SweepSpec {
            problem: ProblemConfig::new("trig").with_dim(4),
            algorithms: vec![Algorithm::NcgA1, Algorithm::NcdMatched],
            seeds: vec![1, 2, 3],
            config: SolveConfig::new(1e-3, 1e-2, 0.1, 0),
            threads: Some(3),
        };
        let s = run_sweep(&spec, Some(dir.path())).unwrap();
        assert!(dir.path().join("aggregate.json").exists());
        let again = recompute_from_traces(dir.path(), &spec.algorithms, &spec.seeds).unwrap();
        for (a, (algo, hvp, grad, iters)) in s.algorithms.iter().zip(again) {
            assert_eq!(a.algorithm, algo);
            assert_eq!(a.errors, 0);
            assert_eq!(a.mean_hvp, hvp);
            assert_eq!(a.mean_grad, grad);
            assert_eq!(a.mean_iters, iters);
        }
    }

    #[test]
    fn threads_do_not_change_results() {
        let spec = |threads| SweepSpec {
            problem: ProblemConfig::new("trig").with_dim(3),
            algorithms: vec![Algorithm::NcgA1],
            seeds: vec![5, 6, 7, 8],
            config: SolveConfig::new(1e-3, 1e-2, 0.1, 0),
            threads: Some(threads),
        };
        let a = execute(&spec(1));
        let b = execute(&spec(4));
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.result.as_ref().unwrap(), y.result.as_ref().unwrap());
        }
    }
}
