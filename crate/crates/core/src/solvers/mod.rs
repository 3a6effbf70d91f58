//! Iterative drivers: GD, NCD, NCG-A1/A2, iH-NCG-A and SNCG.
//!
//! Every driver resets the oracle counters, records one trace row per
//! iteration and, when the dimension allows it, attaches a dense
//! stationarity certificate to the report.

mod driver;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::certify::StationarityCertificate;
use crate::harness::sample_sizes::{sample_sizes_at, sncg_delta_prime, sncg_rate, SampleSizes};
use crate::harness::trace::RunTrace;
use crate::linalg::SymMatrix;
use crate::problem::{Oracle, OracleCounters, Point, SmoothnessParams};

pub(crate) use driver::{adaptive_loop, bound_from_rate, descent_tol, LoopSpec, Mode, NoiseRule, Run};

/// Algorithm selector, with the command-line spelling as its string form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Gd,
    Ncd,
    /// NCG iteration with the fixed noise `eps2 / 2` and the NCG-A1
    /// stopping rule; the like-for-like baseline for HVP comparisons.
    NcdMatched,
    NcgA1,
    NcgA2,
    NcgB1,
    NcgB2,
    IhNcgA,
    Sncg,
}

impl Algorithm {
    pub const ALL: [Algorithm; 9] = [
        Algorithm::Gd,
        Algorithm::Ncd,
        Algorithm::NcdMatched,
        Algorithm::NcgA1,
        Algorithm::NcgA2,
        Algorithm::NcgB1,
        Algorithm::NcgB2,
        Algorithm::IhNcgA,
        Algorithm::Sncg,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Gd => "gd",
            Algorithm::Ncd => "ncd",
            Algorithm::NcdMatched => "ncd-matched",
            Algorithm::NcgA1 => "ncg-a1",
            Algorithm::NcgA2 => "ncg-a2",
            Algorithm::NcgB1 => "ncg-b1",
            Algorithm::NcgB2 => "ncg-b2",
            Algorithm::IhNcgA => "ih-ncg-a",
            Algorithm::Sncg => "sncg",
        }
    }

    /// Certificate targets `(eps1, eps2)` implied by the algorithm's guarantee.
    pub fn certificate_targets(self, cfg: &SolveConfig) -> (f64, f64) {
        let m = cfg.eps1.max(cfg.eps2);
        match self {
            Algorithm::Gd | Algorithm::Ncd | Algorithm::NcdMatched => (cfg.eps1, cfg.eps2),
            Algorithm::NcgA1 => (cfg.eps1, m),
            Algorithm::NcgA2 => (cfg.eps1, cfg.eps2),
            Algorithm::NcgB1 | Algorithm::NcgB2 => (cfg.eps1, cfg.eps2),
            Algorithm::IhNcgA => (cfg.eps1, 2.0 * m),
            Algorithm::Sncg => (2.0 * cfg.eps1, 2.0 * cfg.eps2),
        }
    }

    /// Which certificate flags the algorithm guarantees: `(first, second)`.
    pub fn guarantees(self) -> (bool, bool) {
        match self {
            Algorithm::Gd => (true, false),
            Algorithm::Ncd => (false, true),
            _ => (true, true),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .iter()
            .copied()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| {
                let known: Vec<&str> = Algorithm::ALL.iter().map(|a| a.as_str()).collect();
                Error::config(format!("unknown algorithm '{s}' (known: {})", known.join(", ")))
            })
    }
}

/// Inner AGD smoothness used by Almost-Convex-AGD.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgdSmoothness {
    /// `L + 2 gamma`, the true smoothness of the proximal subproblem.
    #[default]
    Safe,
    /// `L`, as written in the reference pseudocode.
    Paper,
}

impl FromStr for AgdSmoothness {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "safe" => Ok(AgdSmoothness::Safe),
            "paper" => Ok(AgdSmoothness::Paper),
            _ => Err(Error::config(format!("agd smoothness must be 'safe' or 'paper', got '{s}'"))),
        }
    }
}

/// Hessian surrogate for iH-NCG-A.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Surrogate {
    /// The exact Hessian.
    #[default]
    Exact,
    /// Exact Hessian plus `eps3 E` for a fixed random symmetric `E` with
    /// unit spectral norm, drawn once per run.
    Perturbed { eps3: f64 },
    /// Average of `size` component Hessians drawn afresh each iteration.
    SubSampled { size: u64 },
}

/// Accuracy targets and run controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub eps1: f64,
    /// Second-order target; equals `eps1^alpha` when `alpha` is set.
    pub eps2: f64,
    pub alpha: Option<f64>,
    /// Total failure probability.
    pub delta: f64,
    /// Iteration cap; defaults to twice the theoretical bound.
    pub max_iters: Option<u64>,
    pub seed: u64,
    /// Declared gap `f(x0) - f*`; defaults to `f(x0)` minus the problem's
    /// known minimum, then to the problem's own value.
    pub delta_gap: Option<f64>,
    pub agd_smoothness: AgdSmoothness,
    pub surrogate: Surrogate,
    pub s1: Option<u64>,
    pub s2: Option<u64>,
    /// Fill the trace `wall_ns` column. Off by default so that traces are
    /// reproducible byte for byte.
    pub record_wall_time: bool,
}

impl SolveConfig {
    pub fn new(eps1: f64, eps2: f64, delta: f64, seed: u64) -> Self {
        SolveConfig {
            eps1,
            eps2,
            alpha: None,
            delta,
            max_iters: None,
            seed,
            delta_gap: None,
            agd_smoothness: AgdSmoothness::Safe,
            surrogate: Surrogate::Exact,
            s1: None,
            s2: None,
            record_wall_time: false,
        }
    }

    /// Configuration with `eps2 = eps1^alpha`.
    pub fn with_alpha(eps1: f64, alpha: f64, delta: f64, seed: u64) -> Result<Self> {
        let mut c = SolveConfig::new(eps1, eps1.powf(alpha), delta, seed);
        c.alpha = Some(alpha);
        c.validate()?;
        Ok(c)
    }

    pub fn max_iters(mut self, m: u64) -> Self {
        self.max_iters = Some(m);
        self
    }

    pub fn surrogate(mut self, s: Surrogate) -> Self {
        self.surrogate = s;
        self
    }

    pub fn samples(mut self, s1: u64, s2: u64) -> Self {
        self.s1 = Some(s1);
        self.s2 = Some(s2);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !pos(self.eps1) || !pos(self.eps2) {
            return Err(Error::config(format!(
                "eps1 and eps2 must be positive (got {}, {})",
                self.eps1, self.eps2
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::config(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if let Some(a) = self.alpha {
            if !(a > 0.0 && a <= 1.0) {
                return Err(Error::config(format!("alpha must lie in (0, 1], got {a}")));
            }
            let want = self.eps1.powf(a);
            if (self.eps2 - want).abs() > 1e-12 * want {
                return Err(Error::config(format!(
                    "eps2 = {} does not equal eps1^alpha = {want}",
                    self.eps2
                )));
            }
        }
        if let Some(g) = self.delta_gap {
            if !pos(g) {
                return Err(Error::config(format!("delta_gap must be positive, got {g}")));
            }
        }
        if self.max_iters == Some(0) {
            return Err(Error::config("max_iters must be at least 1"));
        }
        match self.surrogate {
            Surrogate::Perturbed { eps3 } if !(eps3 >= 0.0 && eps3.is_finite()) => {
                return Err(Error::config(format!("surrogate eps3 must be non-negative, got {eps3}")))
            }
            Surrogate::SubSampled { size: 0 } => {
                return Err(Error::config("surrogate sample size must be positive"))
            }
            _ => {}
        }
        if self.s1 == Some(0) || self.s2 == Some(0) {
            return Err(Error::config("sample sizes must be positive"));
        }
        Ok(())
    }
}

/// Conditions noticed during a run that do not stop it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunFlags {
    /// Iterates outside the region where the declared constants hold.
    pub domain_violations: usize,
    pub max_domain_excess: f64,
    /// Iterations whose Hessian surrogate missed the `eps2 / 12` accuracy.
    pub assumption_violations: usize,
    /// Stochastic iterations whose gradient or Hessian sample missed the
    /// accuracy the step relies on.
    pub sampling_violations: usize,
    /// Iterations where `f` rose beyond tolerance (stochastic runs only;
    /// deterministic runs abort instead).
    pub descent_violations: usize,
    /// Inner AGD calls that hit their iteration cap.
    pub agd_diverged: usize,
    pub sample_sizes_below_theory: bool,
    pub max_iters_below_bound: bool,
}

/// Sample sizes used by a stochastic run next to the theoretical ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleReport {
    pub used: SampleSizes,
    pub theory: Option<SampleSizes>,
    pub met: bool,
}

/// Outcome of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub algorithm: Algorithm,
    pub problem: String,
    pub dim: usize,
    pub config: SolveConfig,
    /// Constants used, with the effective `delta_gap`.
    pub params: SmoothnessParams,
    pub x_final: Point,
    pub f_initial: f64,
    pub f_final: f64,
    /// Trace rows, one per iteration.
    pub iters: usize,
    /// Outer rounds of NCG-B1/B2.
    pub outer_iters: Option<usize>,
    /// Whether the stopping rule fired (only stochastic runs can end
    /// without it).
    pub terminated: bool,
    pub theoretical_iter_bound: u64,
    /// `1 + rate (f(x_1) - f(x_final))`, the bound with the realized decrease.
    pub realized_iter_bound: Option<f64>,
    pub max_iters: u64,
    pub delta_prime: f64,
    pub counters: OracleCounters,
    pub certificate: Option<StationarityCertificate>,
    pub flags: RunFlags,
    pub samples: Option<SampleReport>,
    pub trace: RunTrace,
}

impl SolveReport {
    /// Certificate verdict restricted to what the algorithm guarantees;
    /// `None` without a certificate.
    pub fn certification_passed(&self) -> Option<bool> {
        let (first, second) = self.algorithm.guarantees();
        self.certificate
            .map(|c| (!first || c.passed_first_order) && (!second || c.passed_second_order))
    }

    /// The count the theoretical bound applies to: outer rounds for
    /// NCG-B1/B2, iterations otherwise.
    pub fn bounded_iters(&self) -> usize {
        self.outer_iters.unwrap_or(self.iters)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Numerical(e.to_string()))
    }
}

/// Runs `algorithm` from `x0`.
pub fn solve(oracle: &Oracle<'_>, x0: &Point, algorithm: Algorithm, cfg: &SolveConfig) -> Result<SolveReport> {
    match algorithm {
        Algorithm::Gd => gd(oracle, x0, cfg),
        Algorithm::Ncd => ncd(oracle, x0, cfg),
        Algorithm::NcdMatched => ncd_matched(oracle, x0, cfg),
        Algorithm::NcgA1 => ncg_a1(oracle, x0, cfg),
        Algorithm::NcgA2 => ncg_a2(oracle, x0, cfg),
        Algorithm::NcgB1 => crate::accel::ncg_b1(oracle, x0, cfg),
        Algorithm::NcgB2 => crate::accel::ncg_b2(oracle, x0, cfg),
        Algorithm::IhNcgA => ih_ncg_a(oracle, x0, cfg),
        Algorithm::Sncg => sncg(oracle, x0, cfg),
    }
}

/// Gradient descent with step `1 / L1` until `||grad f|| <= eps1`.
pub fn gd(oracle: &Oracle<'_>, x0: &Point, cfg: &SolveConfig) -> Result<SolveReport> {
    let mut run = Run::start(oracle, x0, cfg)?;
    let p = run.params;
    let rate = 2.0 * p.l1 / (cfg.eps1 * cfg.eps1);
    let bound = bound_from_rate(rate, p.delta_gap);
    let max_iters = run.max_iters(cfg, bound);
    let out = driver::gd_loop(&mut run, x0.clone(), cfg.eps1, max_iters)?;
    run.finish(Algorithm::Gd, cfg, out, bound, Some(rate), max_iters, 1.0, None)
}

/// Negative curvature descent: Lanczos at noise `eps2 / 2`; step along the
/// direction while `v' H v <= -eps2 / 2`, otherwise return.
pub fn ncd(oracle: &Oracle<'_>, x0: &Point, cfg: &SolveConfig) -> Result<SolveReport> {
    let mut run = Run::start(oracle, x0, cfg)?;
    let p = run.params;
    let rate = 12.0 * p.l2 * p.l2 / cfg.eps2.powi(3);
    let bound = bound_from_rate(rate, p.delta_gap);
    let dp = cfg.delta / (1.0 + rate * p.delta_gap);
    let max_iters = run.max_iters(cfg, bound);
    let out = driver::ncd_loop(&mut run, x0.clone(), cfg.eps2, dp, max_iters)?;
    run.finish(Algorithm::Ncd, cfg, out, bound, Some(rate), max_iters, dp, None)
}

fn a1_rate(p: &SmoothnessParams, eps1: f64, eps2: f64) -> f64 {
    (12.0 * p.l2 * p.l2 / eps2.powi(3)).max(2.0 * p.l1 / (eps1 * eps1))
}

fn exact_loop(
    oracle: &Oracle<'_>,
    x0: &Point,
    cfg: &SolveConfig,
    algorithm: Algorithm,
    noise: NoiseRule,
) -> Result<SolveReport> {
    let mut run = Run::start(oracle, x0, cfg)?;
    let p = run.params;
    let rate = a1_rate(&p, cfg.eps1, cfg.eps2);
    let bound = bound_from_rate(rate, p.delta_gap);
    let dp = cfg.delta / (1.0 + rate * p.delta_gap);
    let max_iters = run.max_iters(cfg, bound);
    let spec = LoopSpec {
        eps1: cfg.eps1,
        eps2: cfg.eps2,
        noise,
        delta_prime: dp,
        max_iters,
        strict_descent: true,
    };
    let f0 = run.f0;
    let out = adaptive_loop(&mut run, x0.clone(), f0, &spec, &mut Mode::Exact)?;
    run.finish(algorithm, cfg, out, bound, Some(rate), max_iters, dp, None)
}

/// NCG-A1: NCG steps at noise `max(eps2, ||grad f||) / 2`, stopping once
/// `v' H v > -eps2 / 2` and `||grad f|| <= eps1`.
pub fn ncg_a1(oracle: &Oracle<'_>, x0: &Point, cfg: &SolveConfig) -> Result<SolveReport> {
    exact_loop(oracle, x0, cfg, Algorithm::NcgA1, NoiseRule::Adaptive { alpha: 1.0 })
}

/// NCG-A2: as NCG-A1 with noise `max(eps2, ||grad f||^alpha) / 2` and
/// `eps2 = eps1^alpha`.
pub fn ncg_a2(oracle: &Oracle<'_>, x0: &Point, cfg: &SolveConfig) -> Result<SolveReport> {
    let alpha = cfg
        .alpha
        .ok_or_else(|| Error::config("ncg-a2 needs alpha (eps2 = eps1^alpha)"))?;
    exact_loop(oracle, x0, cfg, Algorithm::NcgA2, NoiseRule::Adaptive { alpha })
}

/// NCG iteration at the fixed noise `eps2 / 2` with the NCG-A1 stopping
/// rule: negative curvature descent run to the same target.
pub fn ncd_matched(oracle: &Oracle<'_>, x0: &Point, cfg: &SolveConfig) -> Result<SolveReport> {
    exact_loop(oracle, x0, cfg, Algorithm::NcdMatched, NoiseRule::Fixed)
}

/// iH-NCG-A: NCG-A1 with Lanczos run on the Hessian surrogate
/// `cfg.surrogate` and the inexact-Hessian branch test.
pub fn ih_ncg_a(oracle: &Oracle<'_>, x0: &Point, cfg: &SolveConfig) -> Result<SolveReport> {
    let mut run = Run::start(oracle, x0, cfg)?;
    let p = run.params;
    let rate = (24.0 * p.l2 * p.l2 / cfg.eps2.powi(3)).max(2.0 * p.l1 / (cfg.eps1 * cfg.eps1));
    let bound = bound_from_rate(rate, p.delta_gap);
    let dp = cfg.delta / (1.0 + rate * p.delta_gap);
    let max_iters = run.max_iters(cfg, bound);
    let mut mode = match cfg.surrogate {
        Surrogate::Exact => Mode::Surrogate(driver::SurrogateState::Exact),
        Surrogate::Perturbed { eps3 } => {
            let d = oracle.dim();
            let mut rng = run.surrogate_rng.clone();
            let g = rng.normal_vec(d * d);
            let mut e = SymMatrix::from_fn(d, |i, j| 0.5 * (g[i * d + j] + g[j * d + i]));
            let n = e.spectral_norm()?;
            if n > 0.0 {
                e = e.scaled(1.0 / n);
            }
            Mode::Surrogate(driver::SurrogateState::Perturbed { eps3, e })
        }
        Surrogate::SubSampled { size } => {
            if oracle.n_components().is_none() {
                return Err(Error::config("sub-sampled surrogate needs a finite-sum problem"));
            }
            Mode::Surrogate(driver::SurrogateState::SubSampled { size })
        }
    };
    let spec = LoopSpec {
        eps1: cfg.eps1,
        eps2: cfg.eps2,
        noise: NoiseRule::Adaptive { alpha: 1.0 },
        delta_prime: dp,
        max_iters,
        strict_descent: true,
    };
    let f0 = run.f0;
    let out = adaptive_loop(&mut run, x0.clone(), f0, &spec, &mut mode)?;
    run.finish(Algorithm::IhNcgA, cfg, out, bound, Some(rate), max_iters, dp, None)
}

/// SNCG: stochastic NCG steps with fresh gradient and Hessian samples each
/// iteration, noise `max(eps2, ||g||^alpha) / 2` (alpha defaults to 1).
///
/// Sample sizes come from `cfg.s1` / `cfg.s2` when set, otherwise from the
/// theoretical formulas. Runs that hit `max_iters` are reported with
/// `terminated = false` rather than as errors.
pub fn sncg(oracle: &Oracle<'_>, x0: &Point, cfg: &SolveConfig) -> Result<SolveReport> {
    let n = oracle
        .n_components()
        .ok_or_else(|| Error::config("sncg needs a finite-sum problem"))?;
    let mut run = Run::start(oracle, x0, cfg)?;
    let p = run.params;
    let rate = sncg_rate(cfg.eps1, cfg.eps2, &p);
    let bound = bound_from_rate(rate, p.delta_gap);
    let dp = sncg_delta_prime(cfg.eps1, cfg.eps2, cfg.delta, &p);
    let max_iters = run.max_iters(cfg, bound);
    let theory = if p.g_bound.is_some() {
        Some(sample_sizes_at(cfg.eps1, cfg.eps2, dp, &p, oracle.dim())?)
    } else {
        None
    };
    let (s1, s2) = match (cfg.s1, cfg.s2, theory) {
        (Some(a), Some(b), _) => (a, b),
        (a, b, Some(t)) => (a.unwrap_or(t.s1), b.unwrap_or(t.s2)),
        _ => {
            return Err(Error::config(
                "sncg needs g_bound for theoretical sample sizes, or explicit s1 and s2",
            ))
        }
    };
    let met = theory.is_some_and(|t| s1 >= t.s1 && s2 >= t.s2);
    run.flags.sample_sizes_below_theory = !met;
    let samples = SampleReport {
        used: SampleSizes { s1, s2 },
        theory,
        met,
    };
    let spec = LoopSpec {
        eps1: cfg.eps1,
        eps2: cfg.eps2,
        noise: NoiseRule::Adaptive {
            alpha: cfg.alpha.unwrap_or(1.0),
        },
        delta_prime: dp,
        max_iters,
        strict_descent: false,
    };
    let mut mode = Mode::Stochastic { n, s1, s2 };
    let f0 = run.f0;
    let out = adaptive_loop(&mut run, x0.clone(), f0, &spec, &mut mode)?;
    run.finish(Algorithm::Sncg, cfg, out, bound, Some(rate), max_iters, dp, Some(samples))
}
