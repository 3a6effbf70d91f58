//! Run bookkeeping and the iteration loops shared by the drivers.

use std::time::Instant;

use crate::eigen::lanczos_min_eig;
use crate::error::{Error, Result};
use crate::harness::certify::certify;
use crate::harness::sample_sizes::{gradient_tolerance, hessian_tolerance, saturating_ceil};
use crate::harness::trace::{RunTrace, TraceRow};
use crate::linalg::{self, SymMatrix};
use crate::problem::{Oracle, Point, SmoothnessParams};
use crate::rng::{tags, SeedStream};
use crate::steps::{
    dense_subsampled_hessian, ih_ncg_step_with, ncg_s_step_with, ncg_step_with, sign,
    subsampled_gradient, subsampled_hvp, Sample, StepKind, StepResult,
};

use super::{Algorithm, RunFlags, SampleReport, SolveConfig, SolveReport};

/// `ceil(1 + rate * gap)`, saturating.
pub(crate) fn bound_from_rate(rate: f64, gap: f64) -> u64 {
    saturating_ceil(1.0 + rate * gap)
}

pub(crate) fn descent_tol(f: f64) -> f64 {
    1e-9 * (1.0 + f.abs())
}

/// Per-run state: counters live in the oracle, everything else here.
pub(crate) struct Run<'a, 'p> {
    pub oracle: &'a Oracle<'p>,
    /// Oracle constants with the effective `delta_gap`.
    pub params: SmoothnessParams,
    pub f0: f64,
    pub trace: RunTrace,
    pub flags: RunFlags,
    pub lanczos_rng: SeedStream,
    pub grad_rng: SeedStream,
    pub hess_rng: SeedStream,
    pub surrogate_rng: SeedStream,
    clock: Option<Instant>,
}

/// Where a loop stopped.
#[derive(Debug, Clone)]
pub(crate) struct LoopOutcome {
    pub x: Point,
    pub f: f64,
    /// Gradient norm the loop saw at `x` (sampled for stochastic runs).
    pub grad_norm: f64,
    pub terminated: bool,
}

impl<'a, 'p> Run<'a, 'p> {
    pub fn start(oracle: &'a Oracle<'p>, x0: &Point, cfg: &SolveConfig) -> Result<Self> {
        cfg.validate()?;
        if x0.dim() != oracle.dim() {
            return Err(Error::Input(format!(
                "x0 has dimension {}, problem dimension is {}",
                x0.dim(),
                oracle.dim()
            )));
        }
        oracle.reset_counters();
        let clock = cfg.record_wall_time.then(Instant::now);
        let f0 = oracle.value(x0)?;
        let mut params = *oracle.params();
        if let Some(gap) = cfg.delta_gap {
            params.delta_gap = gap;
        } else if let Some(min) = oracle.problem().known_minimum() {
            params.delta_gap = (f0 - min).max(f64::EPSILON * (1.0 + f0.abs()));
        }
        params.validate()?;
        let root = SeedStream::new(cfg.seed);
        let mut run = Run {
            oracle,
            params,
            f0,
            trace: RunTrace::new(),
            flags: RunFlags::default(),
            lanczos_rng: root.fork(tags::LANCZOS),
            grad_rng: root.fork(tags::GRADIENT_SAMPLE),
            hess_rng: root.fork(tags::HESSIAN_SAMPLE),
            surrogate_rng: root.fork(tags::SURROGATE),
            clock,
        };
        run.check_domain(x0);
        Ok(run)
    }

    /// The iteration cap for a run with theoretical bound `bound`.
    pub fn max_iters(&mut self, cfg: &SolveConfig, bound: u64) -> u64 {
        match cfg.max_iters {
            Some(m) => {
                if m < bound {
                    self.flags.max_iters_below_bound = true;
                }
                m
            }
            None => bound.saturating_mul(2),
        }
    }

    pub fn record(
        &mut self,
        f: f64,
        grad_norm: f64,
        kind: StepKind,
        rayleigh: Option<f64>,
        noise_level: Option<f64>,
    ) {
        let c = self.oracle.counters();
        let wall_ns = self
            .clock
            .map(|t| t.elapsed().as_nanos().min(u64::MAX as u128) as u64)
            .unwrap_or(0);
        self.trace.push(TraceRow {
            iter: self.trace.len() + 1,
            f,
            grad_norm,
            step_kind: kind,
            rayleigh,
            noise_level,
            hvp_cum: c.total_hvp(),
            grad_cum: c.total_grad(),
            wall_ns,
        });
    }

    pub fn check_domain(&mut self, x: &[f64]) {
        if let Some(excess) = self.oracle.problem().domain_violation(x) {
            self.flags.domain_violations += 1;
            self.flags.max_domain_excess = self.flags.max_domain_excess.max(excess);
        }
    }

    /// Descent check after a step from `f` to `f_next` in iteration `iter`.
    /// Deterministic loops abort; stochastic loops count the violation.
    pub fn check_descent(&mut self, iter: usize, f: f64, f_next: f64, strict: bool) -> Result<()> {
        let increase = f_next - f;
        if increase > descent_tol(f) {
            if strict {
                return Err(Error::Constants { iter, increase });
            }
            self.flags.descent_violations += 1;
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    pub fn finish(
        self,
        algorithm: Algorithm,
        cfg: &SolveConfig,
        out: LoopOutcome,
        bound: u64,
        rate: Option<f64>,
        max_iters: u64,
        delta_prime: f64,
        samples: Option<SampleReport>,
    ) -> Result<SolveReport> {
        let counters = self.oracle.counters();
        let (t1, t2) = algorithm.certificate_targets(cfg);
        let certificate = if self.oracle.certifiable() {
            Some(certify(self.oracle, &out.x, t1, t2)?)
        } else {
            None
        };
        Ok(SolveReport {
            algorithm,
            problem: self.oracle.problem().name().to_string(),
            dim: self.oracle.dim(),
            config: cfg.clone(),
            params: self.params,
            f_initial: self.f0,
            f_final: out.f,
            iters: self.trace.len(),
            outer_iters: None,
            terminated: out.terminated,
            theoretical_iter_bound: bound,
            realized_iter_bound: rate.map(|r| 1.0 + r * (self.f0 - out.f)),
            max_iters,
            delta_prime,
            counters,
            certificate,
            flags: self.flags,
            samples,
            trace: self.trace,
            x_final: out.x,
        })
    }
}

fn cap_exceeded(what: &str, max_iters: u64) -> Error {
    Error::BoundExceeded(format!(
        "{what} did not terminate within {max_iters} iterations"
    ))
}

/// Gradient descent with step `1 / L1`.
pub(crate) fn gd_loop(run: &mut Run<'_, '_>, mut x: Point, eps: f64, max_iters: u64) -> Result<LoopOutcome> {
    let oracle = run.oracle;
    let l1 = oracle.params().l1;
    let mut f = run.f0;
    let mut j = 0u64;
    loop {
        j += 1;
        if j > max_iters {
            return Err(cap_exceeded("gradient descent", max_iters));
        }
        let g = oracle.gradient(&x)?;
        let gn = linalg::norm(&g);
        if gn <= eps {
            run.record(f, gn, StepKind::Return, None, None);
            return Ok(LoopOutcome { x, f, grad_norm: gn, terminated: true });
        }
        let mut next = x.to_vec();
        linalg::axpy(-1.0 / l1, &g, &mut next);
        if !linalg::all_finite(&next) {
            return Err(Error::Divergence("gradient step produced a non-finite iterate".into()));
        }
        let f_next = oracle.value(&next)?;
        run.check_descent(j as usize, f, f_next, true)?;
        run.record(f, gn, StepKind::Gradient, None, None);
        x = Point::new(next)?;
        run.check_domain(&x);
        f = f_next;
    }
}

/// Negative curvature descent at noise `eps / 2`.
pub(crate) fn ncd_loop(
    run: &mut Run<'_, '_>,
    mut x: Point,
    eps: f64,
    delta_prime: f64,
    max_iters: u64,
) -> Result<LoopOutcome> {
    let oracle = run.oracle;
    let p = *oracle.params();
    let noise = eps / 2.0;
    let mut f = run.f0;
    let mut j = 0u64;
    loop {
        j += 1;
        if j > max_iters {
            return Err(cap_exceeded("negative curvature descent", max_iters));
        }
        let g = oracle.gradient(&x)?;
        let gn = linalg::norm(&g);
        let est = lanczos_min_eig(
            |v| oracle.hvp(&x, v),
            x.dim(),
            p.l1,
            noise,
            delta_prime,
            &mut run.lanczos_rng,
        )?;
        let r = linalg::dot(&est.v, &oracle.hvp(&x, &est.v)?);
        if r > -noise {
            run.record(f, gn, StepKind::Return, Some(r), Some(noise));
            return Ok(LoopOutcome { x, f, grad_norm: gn, terminated: true });
        }
        let mut next = x.to_vec();
        let s = sign(linalg::dot(&est.v, &g));
        linalg::axpy(-2.0 * r.abs() / p.l2 * s, &est.v, &mut next);
        if !linalg::all_finite(&next) {
            return Err(Error::Divergence("curvature step produced a non-finite iterate".into()));
        }
        let f_next = oracle.value(&next)?;
        run.check_descent(j as usize, f, f_next, true)?;
        run.record(f, gn, StepKind::Curvature, Some(r), Some(noise));
        x = Point::new(next)?;
        run.check_domain(&x);
        f = f_next;
    }
}

/// Lanczos noise schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum NoiseRule {
    /// `max(eps2, ||g||^alpha) / 2`.
    Adaptive { alpha: f64 },
    /// `eps2 / 2`.
    Fixed,
}

impl NoiseRule {
    pub fn level(self, eps2: f64, grad_norm: f64) -> f64 {
        match self {
            NoiseRule::Adaptive { alpha } => eps2.max(grad_norm.powf(alpha)) / 2.0,
            NoiseRule::Fixed => eps2 / 2.0,
        }
    }
}

pub(crate) struct LoopSpec {
    pub eps1: f64,
    pub eps2: f64,
    pub noise: NoiseRule,
    pub delta_prime: f64,
    pub max_iters: u64,
    /// Abort on an objective increase instead of flagging it.
    pub strict_descent: bool,
}

pub(crate) enum SurrogateState {
    Exact,
    Perturbed { eps3: f64, e: SymMatrix },
    SubSampled { size: u64 },
}

/// How each iteration obtains its gradient and curvature operator.
pub(crate) enum Mode {
    Exact,
    Surrogate(SurrogateState),
    Stochastic { n: usize, s1: u64, s2: u64 },
}

/// The NCG-A family loop: step, then stop at `x_j` once `v' H v > -eps2 / 2`
/// and `||g|| <= eps1`.
pub(crate) fn adaptive_loop(
    run: &mut Run<'_, '_>,
    x0: Point,
    f0: f64,
    spec: &LoopSpec,
    mode: &mut Mode,
) -> Result<LoopOutcome> {
    let oracle = run.oracle;
    let problem = oracle.problem();
    let p = *oracle.params();
    let mut x = x0;
    let mut f = f0;
    let mut j = 0u64;
    loop {
        j += 1;
        if j > spec.max_iters {
            if spec.strict_descent {
                return Err(cap_exceeded("NCG iteration", spec.max_iters));
            }
            return Ok(LoopOutcome {
                x,
                f,
                grad_norm: f64::NAN,
                terminated: false,
            });
        }
        let step: StepResult = match mode {
            Mode::Exact => {
                let g = oracle.gradient(&x)?;
                let noise = spec.noise.level(spec.eps2, linalg::norm(&g));
                ncg_step_with(oracle, &x, f, g, noise, spec.delta_prime, &mut run.lanczos_rng)?
            }
            Mode::Surrogate(state) => {
                let g = oracle.gradient(&x)?;
                let noise = spec.noise.level(spec.eps2, linalg::norm(&g));
                let bound_3 = spec.eps2 / 12.0;
                match state {
                    SurrogateState::Exact => ih_ncg_step_with(
                        oracle,
                        |v| oracle.hvp(&x, v),
                        p.l1,
                        &x,
                        f,
                        g,
                        noise,
                        spec.delta_prime,
                        spec.eps2,
                        &mut run.lanczos_rng,
                    )?,
                    SurrogateState::Perturbed { eps3, e } => {
                        if oracle.certifiable() && *eps3 > bound_3 * (1.0 + 1e-12) {
                            run.flags.assumption_violations += 1;
                        }
                        let (eps3, e) = (*eps3, &*e);
                        ih_ncg_step_with(
                            oracle,
                            |v| {
                                let mut hv = oracle.hvp(&x, v)?;
                                linalg::axpy(eps3, &e.matvec(v), &mut hv);
                                Ok(hv)
                            },
                            p.l1 + eps3,
                            &x,
                            f,
                            g,
                            noise,
                            spec.delta_prime,
                            spec.eps2,
                            &mut run.lanczos_rng,
                        )?
                    }
                    SurrogateState::SubSampled { size } => {
                        let n = oracle.n_components().unwrap_or(0);
                        let sample = Sample::draw(n, *size, &mut run.hess_rng);
                        if oracle.certifiable() {
                            if let Some(err) = hessian_sample_error(oracle, &x, &sample)? {
                                if err > bound_3 {
                                    run.flags.assumption_violations += 1;
                                }
                            }
                        }
                        ih_ncg_step_with(
                            oracle,
                            |v| subsampled_hvp(oracle, &x, &sample, v),
                            p.l1,
                            &x,
                            f,
                            g,
                            noise,
                            spec.delta_prime,
                            spec.eps2,
                            &mut run.lanczos_rng,
                        )?
                    }
                }
            }
            Mode::Stochastic { n, s1, s2 } => {
                let g_sample = Sample::draw(*n, *s1, &mut run.grad_rng);
                let h_sample = Sample::draw(*n, *s2, &mut run.hess_rng);
                let g = subsampled_gradient(oracle, &x, &g_sample)?;
                if oracle.certifiable() {
                    let g_err = linalg::norm(&linalg::sub(&g, &problem.gradient(&x)));
                    let h_err = hessian_sample_error(oracle, &x, &h_sample)?.unwrap_or(0.0);
                    if g_err > gradient_tolerance(spec.eps1, spec.eps2, p.l2)
                        || h_err > hessian_tolerance(spec.eps2)
                    {
                        run.flags.sampling_violations += 1;
                    }
                }
                let noise = spec.noise.level(spec.eps2, linalg::norm(&g));
                ncg_s_step_with(
                    oracle,
                    &x,
                    f,
                    g,
                    &h_sample,
                    noise,
                    spec.delta_prime,
                    spec.eps1,
                    spec.eps2,
                    &mut run.lanczos_rng,
                )?
            }
        };
        let noise = step.estimate.noise_level;
        if step.rayleigh > -spec.eps2 / 2.0 && step.grad_norm <= spec.eps1 {
            run.record(f, step.grad_norm, StepKind::Return, Some(step.rayleigh), Some(noise));
            return Ok(LoopOutcome {
                x,
                f,
                grad_norm: step.grad_norm,
                terminated: true,
            });
        }
        run.check_descent(run.trace.len() + 1, f, step.f_after, spec.strict_descent)?;
        run.record(f, step.grad_norm, step.kind, Some(step.rayleigh), Some(noise));
        x = step.x_next;
        f = step.f_after;
        run.check_domain(&x);
    }
}

/// `||H_S(x) - grad^2 f(x)||_2` from dense matrices, without touching the
/// counters. `None` when the problem has no component Hessians.
fn hessian_sample_error(oracle: &Oracle<'_>, x: &[f64], sample: &Sample) -> Result<Option<f64>> {
    let problem = oracle.problem();
    let Some(hs) = dense_subsampled_hessian(problem, x, sample) else {
        return Ok(None);
    };
    let h = oracle.dense_hessian(x)?;
    Ok(Some(hs.sub(&h).spectral_norm()?))
}
