//! Accelerated gradient descent for almost-convex functions and the
//! alternating drivers NCG-B1 and NCG-B2.
//!
//! NCG-B alternates two phases. An NCG-A inner run reaches a point `x̂` with
//! `λ_min(∇²f(x̂)) >= -eps2`. If the gradient there is still large, the
//! penalized objective `f(x) + L1 ([‖x - x̂‖ - eps2/L2]₊)²` is almost convex
//! around `x̂` and Almost-Convex-AGD drives its gradient down quickly.

use crate::error::{Error, Result};
use crate::harness::sample_sizes::saturating_ceil;
use crate::linalg;
use crate::problem::{Oracle, Point};
use crate::solvers::{
    adaptive_loop, bound_from_rate, descent_tol, Algorithm, AgdSmoothness, LoopSpec,
    Mode, NoiseRule, Run, SolveConfig, SolveReport,
};
use crate::steps::StepKind;

/// A differentiable function seen through values and gradients.
pub trait SmoothFunction {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> Result<f64>;
    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>>;
}

impl SmoothFunction for Oracle<'_> {
    fn dim(&self) -> usize {
        Oracle::dim(self)
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        Oracle::value(self, x)
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        Oracle::gradient(self, x)
    }
}

impl<T: SmoothFunction + ?Sized> SmoothFunction for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        (**self).value(x)
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        (**self).gradient(x)
    }
}

/// `f(x) + weight ([‖x - anchor‖ - radius]₊)²`.
#[derive(Debug)]
pub struct PenalizedObjective<F> {
    pub base: F,
    pub anchor: Point,
    pub radius: f64,
    pub weight: f64,
}

impl<F: SmoothFunction> PenalizedObjective<F> {
    pub fn new(base: F, anchor: Point, radius: f64, weight: f64) -> Result<Self> {
        if anchor.dim() != base.dim() {
            return Err(Error::Input(format!(
                "anchor has dimension {}, function dimension is {}",
                anchor.dim(),
                base.dim()
            )));
        }
        if !(radius >= 0.0 && radius.is_finite() && weight >= 0.0 && weight.is_finite()) {
            return Err(Error::config(format!(
                "penalty radius and weight must be finite and non-negative (got {radius}, {weight})"
            )));
        }
        Ok(PenalizedObjective { base, anchor, radius, weight })
    }

    /// Hinge `[‖x - anchor‖ - radius]₊` and the offset `x - anchor`.
    fn hinge(&self, x: &[f64]) -> (f64, Vec<f64>, f64) {
        let off = linalg::sub(x, &self.anchor);
        let r = linalg::norm(&off);
        ((r - self.radius).max(0.0), off, r)
    }

    pub fn penalty(&self, x: &[f64]) -> f64 {
        let (h, _, _) = self.hinge(x);
        self.weight * h * h
    }

    /// Penalty gradient; zero inside the ball, including at the anchor.
    pub fn penalty_gradient(&self, x: &[f64]) -> Vec<f64> {
        let (h, mut off, r) = self.hinge(x);
        if h <= 0.0 || r == 0.0 {
            return vec![0.0; x.len()];
        }
        linalg::scale(2.0 * self.weight * h / r, &mut off);
        off
    }
}

impl<F: SmoothFunction> SmoothFunction for PenalizedObjective<F> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(self.base.value(x)? + self.penalty(x))
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut g = self.base.gradient(x)?;
        let p = self.penalty_gradient(x);
        linalg::axpy(1.0, &p, &mut g);
        Ok(g)
    }
}

/// `F(z) + gamma ‖z - center‖²`.
#[derive(Debug)]
pub struct Proximal<'f, F: ?Sized> {
    pub inner: &'f F,
    pub center: Vec<f64>,
    pub gamma: f64,
}

impl<F: SmoothFunction + ?Sized> SmoothFunction for Proximal<'_, F> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        let off = linalg::sub(x, &self.center);
        Ok(self.inner.value(x)? + self.gamma * linalg::dot(&off, &off))
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut g = self.inner.gradient(x)?;
        let off = linalg::sub(x, &self.center);
        linalg::axpy(2.0 * self.gamma, &off, &mut g);
        Ok(g)
    }
}

/// Result of an AGD call.
#[derive(Debug, Clone)]
pub struct AgdOutcome {
    pub y: Point,
    /// Gradient steps taken.
    pub iters: u64,
    /// `‖∇g(y)‖` at the returned point.
    pub grad_norm: f64,
    /// Whether `‖∇g(y)‖ <= eps` was reached within the cap.
    pub converged: bool,
}

/// The AGD iteration cap `ceil(10 sqrt(kappa) ln(‖∇g(y0)‖ / eps) + 100)`.
pub fn agd_iteration_cap(kappa: f64, grad0: f64, eps: f64) -> u64 {
    let log = (grad0 / eps).ln().max(0.0);
    saturating_ceil(10.0 * kappa.sqrt() * log + 100.0)
}

fn check_agd_args(eps: f64, smoothness: f64, strong_convexity: f64) -> Result<()> {
    if !(strong_convexity > 0.0 && smoothness >= strong_convexity && smoothness.is_finite()) {
        return Err(Error::config(format!(
            "agd needs smoothness >= strong convexity > 0 (got {smoothness}, {strong_convexity})"
        )));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::config(format!("agd tolerance must be positive, got {eps}")));
    }
    Ok(())
}

/// Nesterov's method for a `strong_convexity`-strongly convex,
/// `smoothness`-smooth `g`: returns the first `y_j` with `‖∇g(y_j)‖ <= eps`.
///
/// Fails with [`Error::BoundExceeded`] past [`agd_iteration_cap`].
pub fn agd<G: SmoothFunction + ?Sized>(
    g: &G,
    y0: &Point,
    eps: f64,
    smoothness: f64,
    strong_convexity: f64,
) -> Result<AgdOutcome> {
    let out = agd_capped(g, y0, eps, smoothness, strong_convexity)?;
    if !out.converged {
        return Err(Error::BoundExceeded(format!(
            "agd did not reach gradient norm {eps} within {} iterations",
            out.iters
        )));
    }
    Ok(out)
}

/// As [`agd`], but hitting the cap or leaving the finite range returns the
/// last finite iterate with `converged = false`.
fn agd_capped<G: SmoothFunction + ?Sized>(
    g: &G,
    y0: &Point,
    eps: f64,
    smoothness: f64,
    strong_convexity: f64,
) -> Result<AgdOutcome> {
    check_agd_args(eps, smoothness, strong_convexity)?;
    if y0.dim() != g.dim() {
        return Err(Error::Input(format!(
            "start point has dimension {}, function dimension is {}",
            y0.dim(),
            g.dim()
        )));
    }
    let kappa = smoothness / strong_convexity;
    let m = (kappa.sqrt() - 1.0) / (kappa.sqrt() + 1.0);
    let mut y = y0.to_vec();
    let mut grad_y = g.gradient(&y)?;
    let mut gn = linalg::norm(&grad_y);
    let cap = agd_iteration_cap(kappa, gn, eps);
    // At j = 1 the extrapolated point is y itself, so its gradient is reused.
    let mut z = y.clone();
    let mut grad_z = grad_y.clone();
    let mut iters = 0u64;
    while gn > eps {
        if iters >= cap {
            return Ok(AgdOutcome { y: Point::new(y)?, iters, grad_norm: gn, converged: false });
        }
        let mut y_next = z.clone();
        linalg::axpy(-1.0 / smoothness, &grad_z, &mut y_next);
        let mut z_next = y_next.clone();
        linalg::scale(1.0 + m, &mut z_next);
        linalg::axpy(-m, &y, &mut z_next);
        if !linalg::all_finite(&y_next) || !linalg::all_finite(&z_next) {
            return Ok(AgdOutcome { y: Point::new(y)?, iters, grad_norm: gn, converged: false });
        }
        iters += 1;
        y = y_next;
        grad_y = g.gradient(&y)?;
        gn = linalg::norm(&grad_y);
        if gn <= eps {
            break;
        }
        z = z_next;
        grad_z = if m == 0.0 { grad_y.clone() } else { g.gradient(&z)? };
    }
    let _ = grad_y;
    Ok(AgdOutcome { y: Point::new(y)?, iters, grad_norm: gn, converged: true })
}

/// Result of an Almost-Convex-AGD call.
#[derive(Debug, Clone)]
pub struct AlmostConvexOutcome {
    pub z: Point,
    /// Proximal rounds, i.e. inner AGD calls.
    pub rounds: u64,
    pub agd_iters: u64,
    pub grad_norm: f64,
    /// Inner AGD calls that hit their cap or failed to decrease the
    /// proximal objective.
    pub diverged: u64,
    /// Whether `‖∇f(z)‖ <= eps` was reached.
    pub converged: bool,
}

/// Round cap for Almost-Convex-AGD. Each successful round decreases `f` by
/// an amount bounded below in terms of `eps` and `gamma`, so this only stops
/// runaway loops.
pub const MAX_ALMOST_CONVEX_ROUNDS: u64 = 100_000;

/// Almost-Convex-AGD: repeatedly runs AGD on
/// `g_j(z) = f(z) + gamma ‖z - z_j‖²` from `z_j` to accuracy
/// `eps sqrt(gamma / (50 (L + 2 gamma)))` until `‖∇f(z_j)‖ <= eps`.
///
/// `mode` picks the inner smoothness: `L + 2 gamma` (safe) or `L`.
pub fn almost_convex_agd<F: SmoothFunction + ?Sized>(
    f: &F,
    z0: &Point,
    eps: f64,
    gamma: f64,
    smoothness: f64,
    mode: AgdSmoothness,
) -> Result<AlmostConvexOutcome> {
    almost_convex_agd_observed(f, z0, eps, gamma, smoothness, mode, |_, _, _| {})
}

/// As [`almost_convex_agd`], calling `observe(z_j, f(z_j), ‖∇f(z_j)‖)`
/// before each proximal round.
///
/// A round is accepted only if it does not increase `g_j`; since
/// `g_j(z_j) = f(z_j)` and `f <= g_j`, `f` never increases. A rejected or
/// capped round counts as diverged; a rejected round ends the call.
pub fn almost_convex_agd_observed<F, O>(
    f: &F,
    z0: &Point,
    eps: f64,
    gamma: f64,
    smoothness: f64,
    mode: AgdSmoothness,
    mut observe: O,
) -> Result<AlmostConvexOutcome>
where
    F: SmoothFunction + ?Sized,
    O: FnMut(&[f64], f64, f64),
{
    if !(gamma > 0.0 && gamma <= smoothness && smoothness.is_finite()) {
        return Err(Error::config(format!(
            "almost-convex agd needs 0 < gamma <= smoothness (got {gamma}, {smoothness})"
        )));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::config(format!("tolerance must be positive, got {eps}")));
    }
    let inner_l = match mode {
        AgdSmoothness::Safe => smoothness + 2.0 * gamma,
        AgdSmoothness::Paper => smoothness,
    };
    let eps_inner = eps * (gamma / (50.0 * (smoothness + 2.0 * gamma))).sqrt();
    let mut z = z0.clone();
    let mut fz = f.value(&z)?;
    let mut gn = linalg::norm(&f.gradient(&z)?);
    let mut out = AlmostConvexOutcome {
        z: z0.clone(),
        rounds: 0,
        agd_iters: 0,
        grad_norm: gn,
        diverged: 0,
        converged: false,
    };
    while gn > eps {
        if out.rounds >= MAX_ALMOST_CONVEX_ROUNDS {
            break;
        }
        observe(&z, fz, gn);
        out.rounds += 1;
        let prox = Proximal { inner: f, center: z.to_vec(), gamma };
        let step = agd_capped(&prox, &z, eps_inner, inner_l, gamma)?;
        out.agd_iters += step.iters;
        if !step.converged {
            out.diverged += 1;
        }
        let g_next = prox.value(&step.y)?;
        // NaN counts as a failed round.
        if g_next.is_nan() || g_next > fz + descent_tol(fz) {
            if step.converged {
                out.diverged += 1;
            }
            break;
        }
        z = step.y;
        fz = f.value(&z)?;
        gn = linalg::norm(&f.gradient(&z)?);
    }
    out.converged = gn <= eps;
    out.z = z;
    out.grad_norm = gn;
    Ok(out)
}

/// Outer round count `K` of NCG-B1:
/// `ceil(1 + Delta (max(12 L2², 2 L1) / eps2³ + 2 sqrt(10) L2 / (eps1 eps2)))`.
pub fn ncg_b1_outer_bound(eps1: f64, eps2: f64, l1: f64, l2: f64, gap: f64) -> u64 {
    let rate = (12.0 * l2 * l2).max(2.0 * l1) / eps2.powi(3) + 2.0 * 10f64.sqrt() * l2 / (eps1 * eps2);
    bound_from_rate(rate, gap)
}

/// Inner NCG-A configuration of an NCG-B variant.
struct InnerSpec {
    eps1: f64,
    noise: NoiseRule,
}

fn alternating(oracle: &Oracle<'_>, x0: &Point, cfg: &SolveConfig, algorithm: Algorithm, inner: InnerSpec) -> Result<SolveReport> {
    let mut run = Run::start(oracle, x0, cfg)?;
    let p = run.params;
    let (eps1, eps2) = (cfg.eps1, cfg.eps2);
    let k_bound = ncg_b1_outer_bound(eps1, eps2, p.l1, p.l2, p.delta_gap);
    let dp = cfg.delta / k_bound as f64;
    let cap = match cfg.max_iters {
        Some(m) => {
            if m < k_bound {
                run.flags.max_iters_below_bound = true;
            }
            m
        }
        None => k_bound,
    };
    let inner_rate = (12.0 * p.l2 * p.l2 / eps2.powi(3)).max(2.0 * p.l1 / (inner.eps1 * inner.eps1));
    let spec = LoopSpec {
        eps1: inner.eps1,
        eps2,
        noise: inner.noise,
        delta_prime: dp,
        max_iters: bound_from_rate(inner_rate, p.delta_gap).saturating_mul(2),
        strict_descent: true,
    };
    let mut x = x0.clone();
    let mut f = run.f0;
    let mut k = 0u64;
    let out = loop {
        k += 1;
        if k > cap {
            return Err(Error::BoundExceeded(format!(
                "{algorithm} did not terminate within {cap} outer rounds"
            )));
        }
        let hat = adaptive_loop(&mut run, x, f, &spec, &mut Mode::Exact)?;
        // Exact mode: the inner loop's gradient norm is the true one.
        if hat.grad_norm <= eps1 {
            break hat;
        }
        let penalized = PenalizedObjective::new(oracle, hat.x.clone(), eps2 / p.l2, p.l1)?;
        let acc = almost_convex_agd_observed(
            &penalized,
            &hat.x,
            eps1 / 2.0,
            3.0 * eps2,
            5.0 * p.l1,
            cfg.agd_smoothness,
            |_, fk, gk| run.record(fk, gk, StepKind::Agd, None, None),
        )?;
        run.flags.agd_diverged += acc.diverged as usize;
        if acc.rounds == 0 || acc.z.as_slice() == hat.x.as_slice() {
            return Err(Error::Divergence(format!(
                "almost-convex AGD made no progress in outer round {k}"
            )));
        }
        let f_next = oracle.value(&acc.z)?;
        run.check_descent(run.trace.len(), hat.f, f_next, true)?;
        x = acc.z;
        f = f_next;
        run.check_domain(&x);
    };
    let mut report = run.finish(algorithm, cfg, out, k_bound, None, cap, dp, None)?;
    report.outer_iters = Some(k as usize);
    Ok(report)
}

/// NCG-B1: alternates NCG-A1 at `(eps2^{3/2}, eps2)` with Almost-Convex-AGD
/// on the penalized objective, at most `K` outer rounds.
pub fn ncg_b1(oracle: &Oracle<'_>, x0: &Point, cfg: &SolveConfig) -> Result<SolveReport> {
    let inner = InnerSpec {
        eps1: cfg.eps2.powf(1.5),
        noise: NoiseRule::Adaptive { alpha: 1.0 },
    };
    alternating(oracle, x0, cfg, Algorithm::NcgB1, inner)
}

/// NCG-B2: as NCG-B1 with the inner NCG-A2 at `eps1^{3 alpha / 2}` and
/// exponent `2/3`, so the Lanczos noise is `max(eps2, ‖∇f‖^{2/3}) / 2`.
pub fn ncg_b2(oracle: &Oracle<'_>, x0: &Point, cfg: &SolveConfig) -> Result<SolveReport> {
    let alpha = cfg
        .alpha
        .ok_or_else(|| Error::config("ncg-b2 needs alpha (eps2 = eps1^alpha)"))?;
    let inner = InnerSpec {
        eps1: cfg.eps1.powf(1.5 * alpha),
        noise: NoiseRule::Adaptive { alpha: 2.0 / 3.0 },
    };
    alternating(oracle, x0, cfg, Algorithm::NcgB2, inner)
}
