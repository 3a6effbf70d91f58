//! Problem oracles, smoothness metadata and oracle-call accounting.

mod finite_sum;
mod matfac;
mod quadratic;
pub mod registry;
mod trig;

use std::cell::Cell;
use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, SymMatrix};
use crate::rng::SeedStream;

pub use finite_sum::SigmoidFiniteSum;
pub use matfac::MatFac;
pub use quadratic::Quadratic;
pub use trig::Trig;

/// Largest dimension for which dense Hessians are formed.
pub const DEFAULT_DENSE_CAP: usize = 200;

/// Environment variable overriding [`DEFAULT_DENSE_CAP`].
pub const DENSE_CAP_ENV: &str = "NCGOPT_DENSE_CAP";

/// Dense cap after applying the `NCGOPT_DENSE_CAP` override, if set.
pub fn dense_cap() -> usize {
    std::env::var(DENSE_CAP_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(DEFAULT_DENSE_CAP)
}

/// An iterate in `R^d`: non-empty with finite entries.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::Input("a point needs at least one coordinate".into()));
        }
        if !linalg::all_finite(&coords) {
            return Err(Error::Input("point has non-finite coordinates".into()));
        }
        Ok(Point(coords))
    }

    pub fn zeros(d: usize) -> Self {
        Point(vec![0.0; d.max(1)])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Point {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl fmt::Debug for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

impl TryFrom<Vec<f64>> for Point {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Point::new(v)
    }
}

impl From<Point> for Vec<f64> {
    fn from(p: Point) -> Vec<f64> {
        p.0
    }
}

/// Smoothness constants of the objective.
///
/// `l1` bounds the gradient Lipschitz constant, `l2` the Hessian Lipschitz
/// constant, `delta_gap` the initial optimality gap `f(x0) - f*`, and
/// `g_bound` the sub-Gaussian scale of component gradients (finite sums).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessParams {
    pub l1: f64,
    pub l2: f64,
    pub delta_gap: f64,
    pub g_bound: Option<f64>,
}

impl SmoothnessParams {
    pub fn new(l1: f64, l2: f64, delta_gap: f64, g_bound: Option<f64>) -> Result<Self> {
        let p = SmoothnessParams {
            l1,
            l2,
            delta_gap,
            g_bound,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.l1) || !positive(self.l2) || !positive(self.delta_gap) {
            return Err(Error::config(format!(
                "smoothness constants must be finite and positive (l1 = {}, l2 = {}, delta_gap = {})",
                self.l1, self.l2, self.delta_gap
            )));
        }
        if let Some(g) = self.g_bound {
            if !positive(g) {
                return Err(Error::config(format!("g_bound must be positive, got {g}")));
            }
        }
        Ok(())
    }

    pub fn with_delta_gap(mut self, delta_gap: f64) -> Result<Self> {
        self.delta_gap = delta_gap;
        self.validate()?;
        Ok(self)
    }
}

/// An analytic smooth objective. Implementations are immutable and may be
/// shared across threads; call accounting lives in [`Oracle`].
pub trait Objective: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    fn params(&self) -> SmoothnessParams;

    fn value(&self, x: &[f64]) -> f64;

    fn gradient(&self, x: &[f64]) -> Vec<f64>;

    fn hvp(&self, x: &[f64], v: &[f64]) -> Vec<f64>;

    /// Dense Hessian. The default assembles it column by column from
    /// [`Objective::hvp`] and symmetrizes.
    fn hessian(&self, x: &[f64]) -> SymMatrix {
        let d = self.dim();
        let mut h = SymMatrix::zeros(d);
        let mut e = vec![0.0; d];
        for j in 0..d {
            e[j] = 1.0;
            let col = self.hvp(x, &e);
            for (i, c) in col.iter().enumerate() {
                h.set(i, j, *c);
            }
            e[j] = 0.0;
        }
        h.symmetrize();
        h
    }

    /// Number of components `n` when `f = (1/n) sum_i f_i`.
    fn n_components(&self) -> Option<usize> {
        None
    }

    fn component_gradient(&self, _i: usize, _x: &[f64]) -> Option<Vec<f64>> {
        None
    }

    fn component_hvp(&self, _i: usize, _x: &[f64], _v: &[f64]) -> Option<Vec<f64>> {
        None
    }

    /// Global minimum value (or a valid lower bound), when known.
    fn known_minimum(&self) -> Option<f64> {
        None
    }

    /// How far `x` lies outside the region where `params()` are valid, if it
    /// does. `None` means inside (or no restriction).
    fn domain_violation(&self, _x: &[f64]) -> Option<f64> {
        None
    }
}

/// Cumulative oracle-call counts for one run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleCounters {
    pub f_evals: u64,
    pub grad_evals: u64,
    pub hvp_evals: u64,
    pub component_grad_evals: u64,
    pub component_hvp_evals: u64,
}

impl OracleCounters {
    /// Full plus per-component Hessian-vector products.
    pub fn total_hvp(&self) -> u64 {
        self.hvp_evals + self.component_hvp_evals
    }

    /// Full plus per-component gradients.
    pub fn total_grad(&self) -> u64 {
        self.grad_evals + self.component_grad_evals
    }
}

/// Counted, per-run view of an [`Objective`].
///
/// Every gradient, HVP and component call increments exactly one counter.
/// Dense Hessians are a certification facility: they are not counted and
/// are refused above the dense cap.
pub struct Oracle<'p> {
    problem: &'p dyn Objective,
    params: SmoothnessParams,
    counters: Cell<OracleCounters>,
    dense_cap: usize,
}

impl<'p> Oracle<'p> {
    pub fn new(problem: &'p dyn Objective) -> Self {
        Oracle {
            problem,
            params: problem.params(),
            counters: Cell::new(OracleCounters::default()),
            dense_cap: dense_cap(),
        }
    }

    pub fn with_params(mut self, params: SmoothnessParams) -> Result<Self> {
        params.validate()?;
        self.params = params;
        Ok(self)
    }

    pub fn with_dense_cap(mut self, cap: usize) -> Self {
        self.dense_cap = cap;
        self
    }

    pub fn problem(&self) -> &'p dyn Objective {
        self.problem
    }

    pub fn dim(&self) -> usize {
        self.problem.dim()
    }

    pub fn params(&self) -> &SmoothnessParams {
        &self.params
    }

    pub fn dense_cap(&self) -> usize {
        self.dense_cap
    }

    pub fn certifiable(&self) -> bool {
        self.dim() <= self.dense_cap
    }

    pub fn counters(&self) -> OracleCounters {
        self.counters.get()
    }

    pub fn reset_counters(&self) {
        self.counters.set(OracleCounters::default());
    }

    fn bump(&self, f: impl FnOnce(&mut OracleCounters)) {
        let mut c = self.counters.get();
        f(&mut c);
        self.counters.set(c);
    }

    fn check_len(&self, what: &str, v: &[f64]) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::Input(format!(
                "{what} has length {}, problem dimension is {}",
                v.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        self.check_len("x", x)?;
        self.bump(|c| c.f_evals += 1);
        let v = self.problem.value(x);
        if !v.is_finite() {
            return Err(Error::Oracle("value"));
        }
        Ok(v)
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len("x", x)?;
        self.bump(|c| c.grad_evals += 1);
        finite_or(self.problem.gradient(x), "gradient")
    }

    pub fn hvp(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.check_len("x", x)?;
        self.check_len("v", v)?;
        self.bump(|c| c.hvp_evals += 1);
        finite_or(self.problem.hvp(x, v), "hvp")
    }

    pub fn n_components(&self) -> Option<usize> {
        self.problem.n_components()
    }

    fn require_component(&self, i: usize) -> Result<()> {
        match self.problem.n_components() {
            None => Err(Error::config(format!(
                "problem '{}' has no finite-sum components",
                self.problem.name()
            ))),
            Some(n) if i >= n => Err(Error::Input(format!(
                "component index {i} out of range (n = {n})"
            ))),
            Some(_) => Ok(()),
        }
    }

    pub fn component_gradient(&self, i: usize, x: &[f64]) -> Result<Vec<f64>> {
        self.require_component(i)?;
        self.check_len("x", x)?;
        self.bump(|c| c.component_grad_evals += 1);
        let g = self
            .problem
            .component_gradient(i, x)
            .ok_or_else(|| Error::config("component gradient not implemented"))?;
        finite_or(g, "component_gradient")
    }

    pub fn component_hvp(&self, i: usize, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.require_component(i)?;
        self.check_len("x", x)?;
        self.check_len("v", v)?;
        self.bump(|c| c.component_hvp_evals += 1);
        let hv = self
            .problem
            .component_hvp(i, x, v)
            .ok_or_else(|| Error::config("component hvp not implemented"))?;
        finite_or(hv, "component_hvp")
    }

    /// Dense Hessian for certification. Not counted.
    pub fn dense_hessian(&self, x: &[f64]) -> Result<SymMatrix> {
        self.check_len("x", x)?;
        if !self.certifiable() {
            return Err(Error::CertificationUnavailable {
                dim: self.dim(),
                cap: self.dense_cap,
            });
        }
        let h = self.problem.hessian(x);
        if !h.is_finite() {
            return Err(Error::Oracle("dense_hessian"));
        }
        Ok(h)
    }
}

impl fmt::Debug for Oracle<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Oracle")
            .field("problem", &self.problem.name())
            .field("params", &self.params)
            .field("counters", &self.counters.get())
            .finish()
    }
}

fn finite_or(v: Vec<f64>, what: &'static str) -> Result<Vec<f64>> {
    if linalg::all_finite(&v) {
        Ok(v)
    } else {
        Err(Error::Oracle(what))
    }
}

/// Discrepancies between analytic derivatives and central differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FiniteDifferenceReport {
    pub max_grad_err: f64,
    pub max_hvp_err: f64,
}

/// Compares `gradient` against central differences of `value`, and `hvp`
/// along a random unit direction against central differences of `gradient`.
pub fn finite_difference_check(
    oracle: &Oracle<'_>,
    x: &[f64],
    h: f64,
    rng: &mut SeedStream,
) -> Result<FiniteDifferenceReport> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::config(format!("step h must be positive, got {h}")));
    }
    let d = oracle.dim();
    let g = oracle.gradient(x)?;
    let mut xp = x.to_vec();
    let mut max_grad_err = 0.0f64;
    for i in 0..d {
        xp[i] = x[i] + h;
        let fp = oracle.value(&xp)?;
        xp[i] = x[i] - h;
        let fm = oracle.value(&xp)?;
        xp[i] = x[i];
        max_grad_err = max_grad_err.max((g[i] - (fp - fm) / (2.0 * h)).abs());
    }

    let v = rng.unit_vector(d);
    let hv = oracle.hvp(x, &v)?;
    let mut xs = x.to_vec();
    linalg::axpy(h, &v, &mut xs);
    let gp = oracle.gradient(&xs)?;
    xs.copy_from_slice(x);
    linalg::axpy(-h, &v, &mut xs);
    let gm = oracle.gradient(&xs)?;
    let max_hvp_err = (0..d)
        .map(|i| (hv[i] - (gp[i] - gm[i]) / (2.0 * h)).abs())
        .fold(0.0, f64::max);

    Ok(FiniteDifferenceReport {
        max_grad_err,
        max_hvp_err,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_rejects_non_finite_and_empty() {
        assert!(Point::new(vec![]).is_err());
        assert!(Point::new(vec![1.0, f64::NAN]).is_err());
        assert!(Point::new(vec![1.0, f64::INFINITY]).is_err());
        assert_eq!(Point::new(vec![1.0, 2.0]).unwrap().dim(), 2);
    }

    #[test]
    fn point_json_round_trip_checks_finiteness() {
        let p: Point = serde_json::from_str("[1.0, -2.5]").unwrap();
        assert_eq!(p.as_slice(), &[1.0, -2.5]);
        assert!(serde_json::from_str::<Point>("[]").is_err());
    }

    #[test]
    fn params_validation() {
        assert!(SmoothnessParams::new(1.0, 1.0, 1.0, None).is_ok());
        assert!(SmoothnessParams::new(0.0, 1.0, 1.0, None).is_err());
        assert!(SmoothnessParams::new(1.0, -1.0, 1.0, None).is_err());
        assert!(SmoothnessParams::new(1.0, 1.0, 0.0, None).is_err());
        assert!(SmoothnessParams::new(1.0, 1.0, 1.0, Some(0.0)).is_err());
    }

    #[test]
    fn counters_increment_one_field_per_call() {
        let p = SigmoidFiniteSum::planted(5, 3, 1, 0.0).unwrap();
        let o = Oracle::new(&p);
        let x = [0.1, -0.2, 0.3];
        let v = [1.0, 0.0, 0.0];
        let before = o.counters();
        o.value(&x).unwrap();
        assert_eq!(o.counters().f_evals, before.f_evals + 1);
        o.gradient(&x).unwrap();
        assert_eq!(o.counters().grad_evals, 1);
        o.hvp(&x, &v).unwrap();
        assert_eq!(o.counters().hvp_evals, 1);
        o.component_gradient(2, &x).unwrap();
        assert_eq!(o.counters().component_grad_evals, 1);
        o.component_hvp(4, &x, &v).unwrap();
        assert_eq!(o.counters().component_hvp_evals, 1);
        assert_eq!(
            o.counters(),
            OracleCounters {
                f_evals: 1,
                grad_evals: 1,
                hvp_evals: 1,
                component_grad_evals: 1,
                component_hvp_evals: 1
            }
        );
        o.dense_hessian(&x).unwrap();
        assert_eq!(o.counters().total_hvp(), 2);
        o.reset_counters();
        assert_eq!(o.counters(), OracleCounters::default());
    }

    #[test]
    fn component_calls_on_plain_problem_are_config_errors() {
        let p = Trig::new(vec![1.0, 1.0]).unwrap();
        let o = Oracle::new(&p);
        assert!(matches!(o.component_gradient(0, &[0.0, 0.0]), Err(Error::Config(_))));
        let fs = SigmoidFiniteSum::planted(3, 2, 0, 0.0).unwrap();
        let o = Oracle::new(&fs);
        assert!(matches!(o.component_gradient(3, &[0.0, 0.0]), Err(Error::Input(_))));
    }

    #[test]
    fn dense_hessian_refused_above_cap() {
        let p = Trig::new(vec![1.0; 5]).unwrap();
        let o = Oracle::new(&p).with_dense_cap(4);
        assert!(matches!(
            o.dense_hessian(&[0.0; 5]),
            Err(Error::CertificationUnavailable { dim: 5, cap: 4 })
        ));
    }

    #[test]
    fn non_finite_oracle_output_is_reported() {
        let p = Trig::new(vec![1.0]).unwrap();
        let o = Oracle::new(&p);
        // cos(inf) is NaN.
        assert!(matches!(o.value(&[f64::INFINITY]), Err(Error::Oracle("value"))));
    }

    #[test]
    fn finite_difference_quadratic_saddle() {
        let q = Quadratic::new(SymMatrix::from_diag(&[1.0, -1.0]), 1.0, 1.0).unwrap();
        let o = Oracle::new(&q);
        let r = finite_difference_check(&o, &[1.0, 1.0], 1e-5, &mut SeedStream::new(0)).unwrap();
        assert!(r.max_grad_err <= 1e-7, "{r:?}");
        assert!(r.max_hvp_err <= 1e-7, "{r:?}");
    }

    #[test]
    fn finite_difference_trig_against_analytic_sines() {
        let t = Trig::new(vec![1.0, 1.0]).unwrap();
        let o = Oracle::new(&t);
        let x = [0.3, 0.7];
        let r = finite_difference_check(&o, &x, 1e-5, &mut SeedStream::new(1)).unwrap();
        assert!(r.max_grad_err <= 1e-8, "{r:?}");
        // The analytic gradient itself is -sin.
        let g = o.gradient(&x).unwrap();
        assert_eq!(g, vec![-(0.3f64).sin(), -(0.7f64).sin()]);
    }

    #[test]
    fn finite_difference_rejects_bad_step() {
        let t = Trig::new(vec![1.0]).unwrap();
        let o = Oracle::new(&t);
        assert!(finite_difference_check(&o, &[0.0], 0.0, &mut SeedStream::new(0)).is_err());
    }
}
