//! Lanczos estimation of the smallest eigenvalue of a matrix-free operator.
//!
//! The iteration runs on the shifted operator `l1 I - H`, whose largest
//! eigenvalue is `l1 - lambda_min(H)`. The basis is fully reorthogonalized.
//! The full budget is always spent unless the Krylov space becomes
//! invariant: a stalled Ritz value says nothing about how far the top
//! eigenvalue still is, so there is no stagnation exit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::problem::Point;
use crate::rng::SeedStream;

use super::tridiagonal_eigen;

/// Off-diagonal magnitude below which the Krylov space is taken as invariant.
const BREAKDOWN_TOL: f64 = 1e-12;

/// A unit direction and its Rayleigh quotient, with
/// `lambda_min(H) >= rayleigh - noise_level` holding with high probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureEstimate {
    pub v: Point,
    pub rayleigh: f64,
    pub noise_level: f64,
    pub hvp_spent: usize,
    pub budget: usize,
    pub converged: bool,
}

/// Per-call internals, for tests and diagnostics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LanczosDiagnostics {
    /// Smallest Ritz value of `H` after each iteration.
    pub ritz_history: Vec<f64>,
    /// Largest `|q_i' q_j|`, `i != j`, over the final basis.
    pub max_basis_inner: f64,
    pub breakdown: bool,
}

/// Operator applications allowed for noise `eps` and failure probability
/// `delta`: `min(d, ceil(log(d / delta^2) sqrt(l1) / (2 sqrt(2 eps))))`,
/// and at least one.
pub fn lanczos_budget(d: usize, l1: f64, eps: f64, delta: f64) -> usize {
    let raw = ((d as f64 / (delta * delta)).ln() * l1.sqrt() / (2.0 * (2.0 * eps).sqrt())).ceil();
    let raw = if raw.is_finite() && raw >= 1.0 {
        raw.min(usize::MAX as f64) as usize
    } else {
        1
    };
    raw.clamp(1, d.max(1))
}

/// Estimates the smallest eigenvalue of the symmetric operator `hvp`,
/// assumed to satisfy `||H||_2 <= l1`, to additive accuracy `eps` with
/// probability at least `1 - delta` over the random start drawn from `rng`.
pub fn lanczos_min_eig<F>(
    hvp: F,
    d: usize,
    l1: f64,
    eps: f64,
    delta: f64,
    rng: &mut SeedStream,
) -> Result<CurvatureEstimate>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    lanczos_min_eig_traced(hvp, d, l1, eps, delta, rng).map(|(e, _)| e)
}

/// [`lanczos_min_eig`] that also returns the Ritz history and basis
/// orthogonality.
pub fn lanczos_min_eig_traced<F>(
    mut hvp: F,
    d: usize,
    l1: f64,
    eps: f64,
    delta: f64,
    rng: &mut SeedStream,
) -> Result<(CurvatureEstimate, LanczosDiagnostics)>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::config(format!("Lanczos noise must be positive, got {eps}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::config(format!(
            "Lanczos failure probability must lie in (0, 1), got {delta}"
        )));
    }
    if !(l1 > 0.0 && l1.is_finite()) {
        return Err(Error::config(format!("operator norm bound must be positive, got {l1}")));
    }
    if d == 0 {
        return Err(Error::config("operator dimension must be positive"));
    }
    let budget = lanczos_budget(d, l1, eps, delta);

    let mut basis: Vec<Vec<f64>> = vec![rng.unit_vector(d)];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut diag = LanczosDiagnostics::default();
    let mut spent = 0usize;

    loop {
        let q = basis.last().expect("basis is non-empty");
        let hq = hvp(q)?;
        spent += 1;
        if hq.len() != d {
            return Err(Error::Input(format!(
                "operator returned length {}, expected {d}",
                hq.len()
            )));
        }
        if !linalg::all_finite(&hq) {
            return Err(Error::Oracle("hvp"));
        }
        // w = (l1 I - H) q
        let mut w: Vec<f64> = q.iter().zip(&hq).map(|(qi, hi)| l1 * qi - hi).collect();
        let a = linalg::dot(q, &w);
        alpha.push(a);
        // Two passes of classical Gram-Schmidt against the whole basis.
        for _ in 0..2 {
            for b in &basis {
                let c = linalg::dot(b, &w);
                linalg::axpy(-c, b, &mut w);
            }
        }
        let top = top_eigenvalue(&alpha, &beta);
        diag.ritz_history.push(l1 - top);

        let b = linalg::norm(&w);
        if b < BREAKDOWN_TOL {
            diag.breakdown = true;
            break;
        }
        if spent >= budget {
            break;
        }
        linalg::scale(1.0 / b, &mut w);
        beta.push(b);
        basis.push(w);
    }

    let k = alpha.len();
    debug_assert_eq!(basis.len(), k);

    let eig = tridiagonal_eigen(&alpha, &beta)?;
    let top = eig.values[k - 1];
    let y = eig.vector(k - 1);
    let mut v = vec![0.0; d];
    for (yi, qi) in y.iter().zip(&basis) {
        linalg::axpy(*yi, qi, &mut v);
    }
    let nv = linalg::norm(&v);
    if !(nv > 0.0 && nv.is_finite()) {
        return Err(Error::Numerical("Lanczos produced a degenerate Ritz vector".into()));
    }
    linalg::scale(1.0 / nv, &mut v);

    let mut max_inner = 0.0f64;
    for i in 0..k {
        for j in 0..i {
            max_inner = max_inner.max(linalg::dot(&basis[i], &basis[j]).abs());
        }
    }
    diag.max_basis_inner = max_inner;

    let converged = diag.breakdown || k == d;
    let estimate = CurvatureEstimate {
        v: Point::new(v)?,
        rayleigh: l1 - top,
        noise_level: eps,
        hvp_spent: spent,
        budget,
        converged,
    };
    Ok((estimate, diag))
}

/// Largest eigenvalue of the symmetric tridiagonal matrix by Sturm-sequence
/// bisection.
fn top_eigenvalue(diag: &[f64], off: &[f64]) -> f64 {
    let n = diag.len();
    let radius = |i: usize| {
        let l = if i > 0 { off[i - 1].abs() } else { 0.0 };
        let r = if i + 1 < n { off[i].abs() } else { 0.0 };
        l + r
    };
    let mut lo = (0..n).map(|i| diag[i] - radius(i)).fold(f64::INFINITY, f64::min);
    let mut hi = (0..n).map(|i| diag[i] + radius(i)).fold(f64::NEG_INFINITY, f64::max);
    if n == 1 {
        return diag[0];
    }
    // Number of eigenvalues strictly below x.
    let count_below = |x: f64| {
        let mut count = 0;
        let mut q = diag[0] - x;
        if q < 0.0 {
            count += 1;
        }
        for i in 1..n {
            let qq = if q == 0.0 { f64::MIN_POSITIVE } else { q };
            q = diag[i] - x - off[i - 1] * off[i - 1] / qq;
            if q < 0.0 {
                count += 1;
            }
        }
        count
    };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if count_below(mid) == n {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::dense_min_eig;
    use crate::linalg::SymMatrix;

    fn op(h: &SymMatrix) -> impl FnMut(&[f64]) -> Result<Vec<f64>> + '_ {
        move |v| Ok(h.matvec(v))
    }

    #[test]
    fn identity_operator_returns_one() {
        let h = SymMatrix::identity(5);
        let e = lanczos_min_eig(op(&h), 5, 1.0, 0.1, 0.1, &mut SeedStream::new(0)).unwrap();
        assert!((e.rayleigh - 1.0).abs() < 1e-14);
        assert_eq!(e.hvp_spent, 1);
        assert!(e.converged);
    }

    #[test]
    fn small_diagonal_operator() {
        let h = SymMatrix::from_diag(&[2.0, -1.0, 0.5]);
        let e = lanczos_min_eig(op(&h), 3, 2.0, 0.01, 0.1, &mut SeedStream::new(3)).unwrap();
        assert!(e.rayleigh >= -1.0 - 1e-12 && e.rayleigh <= -0.99, "{}", e.rayleigh);
        assert!((linalg::norm(&e.v) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn rayleigh_matches_a_fresh_product() {
        let mut rng = SeedStream::new(8);
        let g = rng.normal_vec(400);
        let h = SymMatrix::from_fn(20, |i, j| g[i.min(j) * 20 + i.max(j)] / 10.0);
        let l1 = h.spectral_norm().unwrap();
        let e = lanczos_min_eig(op(&h), 20, l1, 1e-3, 0.1, &mut rng).unwrap();
        let r = linalg::dot(&e.v, &h.matvec(&e.v));
        assert!((r - e.rayleigh).abs() <= 1e-10 * (1.0 + r.abs()), "{r} vs {}", e.rayleigh);
        assert!(e.hvp_spent <= e.budget);
    }

    #[test]
    fn ritz_history_is_nonincreasing_and_basis_orthonormal() {
        let mut rng = SeedStream::new(21);
        let g = rng.normal_vec(60 * 60);
        let h = SymMatrix::from_fn(60, |i, j| g[i.min(j) * 60 + i.max(j)] / 8.0);
        let l1 = h.spectral_norm().unwrap();
        let (e, diag) = lanczos_min_eig_traced(op(&h), 60, l1, 1e-6, 0.01, &mut rng).unwrap();
        for w in diag.ritz_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{w:?}");
        }
        assert!(diag.max_basis_inner <= 1e-8, "{}", diag.max_basis_inner);
        let (lmin, _) = dense_min_eig(&h).unwrap();
        assert!(e.rayleigh <= lmin + 1e-6);
    }

    #[test]
    fn dense_spectrum_meets_the_guarantee_and_spends_the_budget() {
        // Evenly spread spectrum in [-1, 1]: Ritz values can stall for an
        // iteration long before reaching the bottom, so any stagnation
        // exit would fail far more often than delta.
        let d = 100;
        let h = SymMatrix::from_diag(&(0..d).map(|i| -1.0 + 2.0 * i as f64 / (d - 1) as f64).collect::<Vec<_>>());
        let (eps, delta, starts) = (0.05, 0.05, 200);
        let mut fails = 0;
        for s in 0..starts {
            let e = lanczos_min_eig(op(&h), d, 1.0, eps, delta, &mut SeedStream::new(s)).unwrap();
            assert_eq!(e.hvp_spent, e.budget);
            if e.rayleigh > -1.0 + eps {
                fails += 1;
            }
        }
        assert!(fails as f64 <= starts as f64 * (delta + 0.031), "{fails} of {starts}");
    }

    #[test]
    fn budget_formula() {
        // log(100 / 0.0025) * 1 / (2 sqrt 0.1) = 16.77...
        assert_eq!(lanczos_budget(100, 1.0, 0.05, 0.05), 17);
        assert_eq!(lanczos_budget(3, 1.0, 1e-8, 0.1), 3);
        assert_eq!(lanczos_budget(1, 1.0, 0.5, 0.5), 1);
    }

    #[test]
    fn one_dimensional_operator() {
        let h = SymMatrix::from_diag(&[-0.3]);
        let e = lanczos_min_eig(op(&h), 1, 1.0, 0.1, 0.1, &mut SeedStream::new(1)).unwrap();
        assert!((e.rayleigh + 0.3).abs() < 1e-15);
        assert_eq!(e.v.as_slice().len(), 1);
    }

    #[test]
    fn config_errors() {
        let h = SymMatrix::identity(2);
        let mut rng = SeedStream::new(0);
        assert!(matches!(lanczos_min_eig(op(&h), 2, 1.0, 0.0, 0.1, &mut rng), Err(Error::Config(_))));
        assert!(matches!(lanczos_min_eig(op(&h), 2, 1.0, 0.1, 1.0, &mut rng), Err(Error::Config(_))));
        assert!(matches!(lanczos_min_eig(op(&h), 2, 0.0, 0.1, 0.5, &mut rng), Err(Error::Config(_))));
    }

    #[test]
    fn non_finite_operator_output() {
        let mut rng = SeedStream::new(0);
        let r = lanczos_min_eig(|_| Ok(vec![f64::NAN, 0.0]), 2, 1.0, 0.1, 0.5, &mut rng);
        assert!(matches!(r, Err(Error::Oracle(_))));
    }
}
