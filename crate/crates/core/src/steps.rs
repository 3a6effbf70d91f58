//! Single updates that let a noisy negative-curvature step compete with a
//! gradient step.
//!
//! Each step draws a Lanczos direction `v` at the requested noise level,
//! measures `v' H v` with one extra operator product, evaluates the
//! decrease each branch guarantees, and takes the better one.

use serde::{Deserialize, Serialize};

use crate::eigen::{lanczos_min_eig, CurvatureEstimate};
use crate::error::{Error, Result};
use crate::linalg::{self, SymMatrix};
use crate::problem::{Objective, Oracle, Point};
use crate::rng::SeedStream;

/// Which update a step (or trace row) took.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepKind {
    Curvature,
    Gradient,
    #[serde(rename = "AGD")]
    Agd,
    Return,
}

impl StepKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StepKind::Curvature => "Curvature",
            StepKind::Gradient => "Gradient",
            StepKind::Agd => "AGD",
            StepKind::Return => "Return",
        }
    }
}

/// Outcome of one step.
///
/// `curvature_payoff` and `gradient_payoff` are the two sides of the branch
/// test; the curvature branch is taken iff `curvature_payoff >
/// gradient_payoff`, and `predicted_decrease` is their maximum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub x_next: Point,
    pub kind: StepKind,
    pub estimate: CurvatureEstimate,
    /// `v' H v` from a dedicated operator product after Lanczos.
    pub rayleigh: f64,
    pub grad_used: Point,
    pub grad_norm: f64,
    pub curvature_payoff: f64,
    pub gradient_payoff: f64,
    pub predicted_decrease: f64,
    pub f_before: f64,
    pub f_after: f64,
    pub observed_decrease: f64,
}

/// `sign(t)` with `sign(0) = +1`.
pub fn sign(t: f64) -> f64 {
    if t < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Shared state of one step before the branch decision.
struct Probe {
    estimate: CurvatureEstimate,
    rayleigh: f64,
}

fn probe<F>(
    mut op: F,
    d: usize,
    shift: f64,
    eps_noise: f64,
    delta: f64,
    rng: &mut SeedStream,
) -> Result<Probe>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let estimate = lanczos_min_eig(&mut op, d, shift, eps_noise, delta, rng)?;
    let hv = op(&estimate.v)?;
    let rayleigh = linalg::dot(&estimate.v, &hv);
    Ok(Probe { estimate, rayleigh })
}

#[allow(clippy::too_many_arguments)]
fn finish(
    oracle: &Oracle<'_>,
    x: &Point,
    f_before: f64,
    g: Vec<f64>,
    probe: Probe,
    curvature_payoff: f64,
    gradient_payoff: f64,
    curvature_length: f64,
) -> Result<StepResult> {
    let l1 = oracle.params().l1;
    let v = &probe.estimate.v;
    let mut next = x.to_vec();
    let kind = if curvature_payoff > gradient_payoff {
        let s = sign(linalg::dot(v, &g));
        linalg::axpy(-curvature_length * s, v, &mut next);
        StepKind::Curvature
    } else {
        linalg::axpy(-1.0 / l1, &g, &mut next);
        StepKind::Gradient
    };
    if !linalg::all_finite(&next) {
        return Err(Error::Divergence("step produced a non-finite iterate".into()));
    }
    let f_after = oracle.value(&next)?;
    Ok(StepResult {
        x_next: Point::new(next)?,
        kind,
        rayleigh: probe.rayleigh,
        estimate: probe.estimate,
        grad_norm: linalg::norm(&g),
        grad_used: Point::new(g)?,
        curvature_payoff,
        gradient_payoff,
        predicted_decrease: curvature_payoff.max(gradient_payoff),
        f_before,
        f_after,
        observed_decrease: f_before - f_after,
    })
}

fn check_noise(eps_noise: f64, delta: f64) -> Result<()> {
    if !(eps_noise > 0.0 && eps_noise.is_finite()) {
        return Err(Error::config(format!("noise level must be positive, got {eps_noise}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::config(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok(())
}

/// Exact-Hessian NCG step at `x`.
///
/// The curvature branch guarantees a decrease of `2 [-r]_+^3 / (3 L2^2)` with
/// `r = v' H v`, the gradient branch `||g||^2 / (2 L1)`. The curvature step
/// moves `2 |r| / L2` along `-sign(v' g) v`.
pub fn ncg_step(
    oracle: &Oracle<'_>,
    x: &Point,
    eps_noise: f64,
    delta: f64,
    rng: &mut SeedStream,
) -> Result<StepResult> {
    let f = oracle.value(x)?;
    let g = oracle.gradient(x)?;
    ncg_step_with(oracle, x, f, g, eps_noise, delta, rng)
}

/// [`ncg_step`] reusing an already computed `f(x)` and `grad f(x)`.
pub fn ncg_step_with(
    oracle: &Oracle<'_>,
    x: &Point,
    f: f64,
    g: Vec<f64>,
    eps_noise: f64,
    delta: f64,
    rng: &mut SeedStream,
) -> Result<StepResult> {
    check_noise(eps_noise, delta)?;
    let p = *oracle.params();
    let probe = probe(|v| oracle.hvp(x, v), x.dim(), p.l1, eps_noise, delta, rng)?;
    let neg = (-probe.rayleigh).max(0.0);
    let curv = 2.0 * neg.powi(3) / (3.0 * p.l2 * p.l2);
    let grad = linalg::dot(&g, &g) / (2.0 * p.l1);
    finish(oracle, x, f, g, probe, curv, grad, 2.0 * neg / p.l2)
}

/// Inexact-Hessian step.
///
/// `surrogate` applies `H(x)`, assumed within `eps2 / 12` of the true
/// Hessian in spectral norm and bounded by `surrogate_norm`. The curvature
/// branch wins when `-eps2^2 r / (2 L2^2) - 5 eps2^3 / (24 L2^2)` exceeds
/// `||g||^2 / (2 L1)`, and moves a fixed `eps2 / L2`.
#[allow(clippy::too_many_arguments)]
pub fn ih_ncg_step<F>(
    oracle: &Oracle<'_>,
    surrogate: F,
    surrogate_norm: f64,
    x: &Point,
    eps_noise: f64,
    delta: f64,
    eps2: f64,
    rng: &mut SeedStream,
) -> Result<StepResult>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let f = oracle.value(x)?;
    let g = oracle.gradient(x)?;
    ih_ncg_step_with(oracle, surrogate, surrogate_norm, x, f, g, eps_noise, delta, eps2, rng)
}

/// [`ih_ncg_step`] reusing `f(x)` and `grad f(x)`.
#[allow(clippy::too_many_arguments)]
pub fn ih_ncg_step_with<F>(
    oracle: &Oracle<'_>,
    surrogate: F,
    surrogate_norm: f64,
    x: &Point,
    f: f64,
    g: Vec<f64>,
    eps_noise: f64,
    delta: f64,
    eps2: f64,
    rng: &mut SeedStream,
) -> Result<StepResult>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    check_noise(eps_noise, delta)?;
    let p = *oracle.params();
    let probe = probe(surrogate, x.dim(), surrogate_norm, eps_noise, delta, rng)?;
    let l22 = p.l2 * p.l2;
    let curv = -eps2 * eps2 * probe.rayleigh / (2.0 * l22) - 5.0 * eps2.powi(3) / (24.0 * l22);
    let grad = linalg::dot(&g, &g) / (2.0 * p.l1);
    finish(oracle, x, f, g, probe, curv, grad, eps2 / p.l2)
}

/// A multiset of component indices drawn uniformly with replacement,
/// stored as `(index, multiplicity)` pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    counts: Vec<(usize, u64)>,
    size: u64,
}

impl Sample {
    /// The multiset of the given indices, repeats counted.
    pub fn from_indices(indices: &[usize]) -> Self {
        let mut sorted = indices.to_vec();
        sorted.sort_unstable();
        let mut counts: Vec<(usize, u64)> = Vec::new();
        for i in sorted {
            match counts.last_mut() {
                Some((j, c)) if *j == i => *c += 1,
                _ => counts.push((i, 1)),
            }
        }
        Sample {
            size: indices.len() as u64,
            counts,
        }
    }

    /// Every component exactly once.
    pub fn full(n: usize) -> Self {
        Sample {
            counts: (0..n).map(|i| (i, 1)).collect(),
            size: n as u64,
        }
    }

    /// `size` uniform draws with replacement from `0..n`. Large samples are
    /// drawn as multinomial counts, so the cost is at most `O(n)`.
    pub fn draw(n: usize, size: u64, rng: &mut SeedStream) -> Self {
        if size <= n as u64 {
            Sample::from_indices(&rng.sample_with_replacement(n, size as usize))
        } else {
            let counts = rng
                .multinomial_counts(n, size)
                .into_iter()
                .enumerate()
                .filter(|(_, c)| *c > 0)
                .collect();
            Sample { counts, size }
        }
    }

    pub fn size(&self) -> u64 {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    /// Distinct indices with their multiplicities, ascending by index.
    pub fn counts(&self) -> &[(usize, u64)] {
        &self.counts
    }
}

/// Mean of component gradients over `sample`. Each distinct index is
/// evaluated once and weighted by its multiplicity.
pub fn subsampled_gradient(oracle: &Oracle<'_>, x: &[f64], sample: &Sample) -> Result<Vec<f64>> {
    if sample.is_empty() {
        return Err(Error::config("gradient sample is empty"));
    }
    let mut g = vec![0.0; x.len()];
    for &(i, c) in sample.counts() {
        linalg::axpy(c as f64, &oracle.component_gradient(i, x)?, &mut g);
    }
    linalg::scale(1.0 / sample.size() as f64, &mut g);
    Ok(g)
}

/// Mean of component Hessian-vector products over `sample`.
pub fn subsampled_hvp(oracle: &Oracle<'_>, x: &[f64], sample: &Sample, v: &[f64]) -> Result<Vec<f64>> {
    if sample.is_empty() {
        return Err(Error::config("Hessian sample is empty"));
    }
    let mut out = vec![0.0; x.len()];
    for &(i, c) in sample.counts() {
        linalg::axpy(c as f64, &oracle.component_hvp(i, x, v)?, &mut out);
    }
    linalg::scale(1.0 / sample.size() as f64, &mut out);
    Ok(out)
}

/// Dense `(1 / |S|) sum_{i in S} grad^2 f_i(x)`, assembled from component
/// Hessian-vector products on the problem directly (uncounted). `None` when
/// the problem has no component Hessians.
pub fn dense_subsampled_hessian(problem: &dyn Objective, x: &[f64], sample: &Sample) -> Option<SymMatrix> {
    let d = x.len();
    let mut h = SymMatrix::zeros(d);
    let mut e = vec![0.0; d];
    let w = 1.0 / sample.size() as f64;
    for &(i, c) in sample.counts() {
        for j in 0..d {
            e[j] = 1.0;
            let col = problem.component_hvp(i, x, &e)?;
            e[j] = 0.0;
            for (k, v) in col.iter().enumerate() {
                h.set(k, j, h.get(k, j) + w * c as f64 * v);
            }
        }
    }
    h.symmetrize();
    Some(h)
}

/// Stochastic NCG step with gradient sample `s1` and Hessian sample `s2`.
///
/// The curvature branch wins when `-eps2^2 r / (2 L2^2) - 11 eps2^3 /
/// (48 L2^2)` exceeds `||g||^2 / (4 L1) - eps1^2 / (8 L1)`; it moves
/// `eps2 / L2`, the gradient branch `-g / L1`.
#[allow(clippy::too_many_arguments)]
pub fn ncg_s_step(
    oracle: &Oracle<'_>,
    x: &Point,
    s1: &Sample,
    s2: &Sample,
    eps_noise: f64,
    delta: f64,
    eps1: f64,
    eps2: f64,
    rng: &mut SeedStream,
) -> Result<StepResult> {
    if s2.is_empty() {
        return Err(Error::config("Hessian sample is empty"));
    }
    let g = subsampled_gradient(oracle, x, s1)?;
    let f = oracle.value(x)?;
    ncg_s_step_with(oracle, x, f, g, s2, eps_noise, delta, eps1, eps2, rng)
}

/// [`ncg_s_step`] reusing `f(x)` and an already drawn sub-sampled gradient.
#[allow(clippy::too_many_arguments)]
pub fn ncg_s_step_with(
    oracle: &Oracle<'_>,
    x: &Point,
    f: f64,
    g: Vec<f64>,
    s2: &Sample,
    eps_noise: f64,
    delta: f64,
    eps1: f64,
    eps2: f64,
    rng: &mut SeedStream,
) -> Result<StepResult> {
    check_noise(eps_noise, delta)?;
    if s2.is_empty() {
        return Err(Error::config("Hessian sample is empty"));
    }
    let p = *oracle.params();
    let probe = probe(|v| subsampled_hvp(oracle, x, s2, v), x.dim(), p.l1, eps_noise, delta, rng)?;
    let l22 = p.l2 * p.l2;
    let curv = -eps2 * eps2 * probe.rayleigh / (2.0 * l22) - 11.0 * eps2.powi(3) / (48.0 * l22);
    let grad = linalg::dot(&g, &g) / (4.0 * p.l1) - eps1 * eps1 / (8.0 * p.l1);
    finish(oracle, x, f, g, probe, curv, grad, eps2 / p.l2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{SigmoidFiniteSum, Trig};
    use std::f64::consts::{FRAC_PI_2, PI};

    fn trig2() -> Trig {
        Trig::new(vec![1.0, 1.0]).unwrap()
    }

    fn tol(f: f64) -> f64 {
        1e-9 * (1.0 + f.abs())
    }

    #[test]
    fn saddle_takes_curvature_step_of_length_two() {
        let t = trig2();
        let o = Oracle::new(&t);
        let x = Point::new(vec![0.0, 0.0]).unwrap();
        let s = ncg_step(&o, &x, 0.1, 0.1, &mut SeedStream::new(2)).unwrap();
        assert_eq!(s.kind, StepKind::Curvature);
        assert!((s.rayleigh + 1.0).abs() < 1e-12);
        assert!((linalg::norm(&linalg::sub(&x, &s.x_next)) - 2.0).abs() < 1e-12);
        assert!(s.observed_decrease >= 2.0 / 3.0 - tol(2.0));
    }

    #[test]
    fn flat_point_takes_gradient_step() {
        let t = trig2();
        let o = Oracle::new(&t);
        let x = Point::new(vec![FRAC_PI_2, FRAC_PI_2]).unwrap();
        let s = ncg_step(&o, &x, 0.1, 0.1, &mut SeedStream::new(2)).unwrap();
        assert_eq!(s.kind, StepKind::Gradient);
        assert!((s.gradient_payoff - 1.0).abs() < 1e-15);
        for c in s.x_next.iter() {
            assert!((c - (FRAC_PI_2 + 1.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn local_minimum_is_a_fixed_point() {
        let t = trig2();
        let o = Oracle::new(&t);
        let x = Point::new(vec![PI, PI]).unwrap();
        let s = ncg_step(&o, &x, 0.1, 0.1, &mut SeedStream::new(2)).unwrap();
        assert_eq!(s.kind, StepKind::Gradient);
        assert!(linalg::max_abs_diff(&s.x_next, &x) < 1e-15);
    }

    #[test]
    fn sign_of_zero_is_positive() {
        assert_eq!(sign(0.0), 1.0);
        assert_eq!(sign(-0.0), 1.0);
        assert_eq!(sign(-2.0), -1.0);
    }

    #[test]
    fn exact_surrogate_curvature_step_has_fixed_length() {
        let t = trig2();
        let o = Oracle::new(&t);
        let x = Point::new(vec![0.0, 0.0]).unwrap();
        let s = ih_ncg_step(&o, |v| o.hvp(&x, v), 1.0, &x, 0.25, 0.1, 0.5, &mut SeedStream::new(4))
            .unwrap();
        assert_eq!(s.kind, StepKind::Curvature);
        assert!((linalg::norm(&linalg::sub(&x, &s.x_next)) - 0.5).abs() < 1e-12);
        assert!(s.observed_decrease >= s.predicted_decrease - tol(s.f_before));
    }

    #[test]
    fn psd_surrogate_with_large_gradient_takes_gradient_step() {
        let t = trig2();
        let o = Oracle::new(&t);
        let x = Point::new(vec![FRAC_PI_2 + 0.3, FRAC_PI_2 + 0.3]).unwrap();
        let h = SymMatrix::identity(2);
        let s = ih_ncg_step(&o, |v| Ok(h.matvec(v)), 1.0, &x, 0.1, 0.1, 0.5, &mut SeedStream::new(4))
            .unwrap();
        assert_eq!(s.kind, StepKind::Gradient);
    }

    #[test]
    fn ih_step_decrease_on_random_points() {
        let t = trig2();
        let o = Oracle::new(&t);
        let mut rng = SeedStream::new(7);
        for _ in 0..50 {
            let x = Point::new(rng.normal_vec(2).iter().map(|c| 3.0 * c).collect()).unwrap();
            let s = ih_ncg_step(&o, |v| o.hvp(&x, v), 1.0, &x, 0.1, 0.1, 0.5, &mut rng).unwrap();
            assert!(s.observed_decrease >= s.predicted_decrease - tol(s.f_before));
        }
    }

    #[test]
    fn full_batch_stochastic_step_uses_full_gradient() {
        let p = SigmoidFiniteSum::planted(20, 3, 1, 0.0).unwrap();
        let o = Oracle::new(&p);
        let x = Point::new(vec![2.0, -1.0, 0.5]).unwrap();
        let all = Sample::full(20);
        let s = ncg_s_step(&o, &x, &all, &all, 0.1, 0.1, 0.01, 0.1, &mut SeedStream::new(3)).unwrap();
        let g = p.gradient(&x);
        assert!(linalg::max_abs_diff(&s.grad_used, &g) < 1e-14);
        assert_eq!(s.kind == StepKind::Curvature, s.curvature_payoff > s.gradient_payoff);
    }

    #[test]
    fn sample_multiplicities() {
        let s = Sample::from_indices(&[3, 1, 3, 3]);
        assert_eq!(s.counts(), &[(1, 1), (3, 3)]);
        assert_eq!(s.size(), 4);
        let big = Sample::draw(5, 1_000_000, &mut SeedStream::new(0));
        assert_eq!(big.counts().iter().map(|(_, c)| c).sum::<u64>(), 1_000_000);
    }

    #[test]
    fn weighted_sample_matches_repeated_indices() {
        let p = SigmoidFiniteSum::planted(6, 3, 2, 0.0).unwrap();
        let o = Oracle::new(&p);
        let x = [0.3, -0.4, 1.0];
        let idx = [0, 2, 2, 5, 0, 0];
        let g = subsampled_gradient(&o, &x, &Sample::from_indices(&idx)).unwrap();
        let mut naive = vec![0.0; 3];
        for &i in &idx {
            linalg::axpy(1.0 / 6.0, &p.component_gradient(i, &x).unwrap(), &mut naive);
        }
        assert!(linalg::max_abs_diff(&g, &naive) < 1e-15);
        // Three distinct indices cost three component evaluations.
        assert_eq!(o.counters().component_grad_evals, 3);
    }

    #[test]
    fn empty_samples_are_config_errors() {
        let p = SigmoidFiniteSum::planted(5, 2, 1, 0.0).unwrap();
        let o = Oracle::new(&p);
        let x = Point::new(vec![0.0, 0.0]).unwrap();
        let r = ncg_s_step(&o, &x, &Sample::from_indices(&[]), &Sample::from_indices(&[0]), 0.1, 0.1, 0.1, 0.1, &mut SeedStream::new(0));
        assert!(matches!(r, Err(Error::Config(_))));
        let r = ncg_s_step(&o, &x, &Sample::from_indices(&[0]), &Sample::from_indices(&[]), 0.1, 0.1, 0.1, 0.1, &mut SeedStream::new(0));
        assert!(matches!(r, Err(Error::Config(_))));
    }
}
