use crate::eigen::symmetric_eigen;
use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::rng::SeedStream;

use super::{Objective, SmoothnessParams};

/// Symmetric low-rank factorization `f(U) = ||U U' - M||_F^2 / 2`.
///
/// `U` is `d x r`, flattened row-major into a point of dimension `d r`
/// (`x[i * r + k] = U[i][k]`). The smoothness constants `L1 = 8 T` and
/// `L2 = 12 sqrt(T)` hold on the region `||U||_2^2 <= T`; iterates outside
/// it are reported through [`Objective::domain_violation`].
#[derive(Debug, Clone)]
pub struct MatFac {
    m: SymMatrix,
    rank: usize,
    t_cap: f64,
    params: SmoothnessParams,
}

impl MatFac {
    /// Builds the problem for target `m` and factor rank `r`. When `t_cap`
    /// is `None` the cap defaults to twice the top eigenvalue magnitude of `m`.
    pub fn new(m: SymMatrix, rank: usize, t_cap: Option<f64>) -> Result<Self> {
        let d = m.dim();
        if d == 0 || rank == 0 || rank > d {
            return Err(Error::config(format!(
                "matfac needs 1 <= r <= d, got d = {d}, r = {rank}"
            )));
        }
        if !m.is_finite() {
            return Err(Error::config("matfac target has non-finite entries"));
        }
        if m.asymmetry() > 1e-10 {
            return Err(Error::config("matfac target matrix must be symmetric"));
        }
        let mut m = m;
        m.symmetrize();
        let t_cap = match t_cap {
            Some(t) => t,
            None => 2.0 * m.spectral_norm()?,
        };
        if !(t_cap.is_finite() && t_cap > 0.0) {
            return Err(Error::config(format!(
                "matfac norm cap must be positive, got {t_cap}"
            )));
        }
        // f(0) = ||M||_F^2 / 2 is a starting gap for small initializations;
        // solvers normally replace it with f(x0) - 0.
        let frob2: f64 = m.as_row_major().iter().map(|v| v * v).sum();
        let gap = if frob2 > 0.0 { 0.5 * frob2 } else { 1.0 };
        let params = SmoothnessParams::new(8.0 * t_cap, 12.0 * t_cap.sqrt(), gap, None)?;
        Ok(MatFac {
            m,
            rank,
            t_cap,
            params,
        })
    }

    /// Random PSD target `M = B B' / d` with Gaussian `B` of size `d x r`.
    pub fn planted(d: usize, rank: usize, seed: u64, t_cap: Option<f64>) -> Result<Self> {
        if d == 0 || rank == 0 || rank > d {
            return Err(Error::config(format!(
                "matfac needs 1 <= r <= d, got d = {d}, r = {rank}"
            )));
        }
        let mut rng = SeedStream::new(seed);
        let b = rng.normal_vec(d * rank);
        let m = SymMatrix::from_fn(d, |i, j| {
            (0..rank).map(|k| b[i * rank + k] * b[j * rank + k]).sum::<f64>() / d as f64
        });
        MatFac::new(m, rank, t_cap)
    }

    pub fn target(&self) -> &SymMatrix {
        &self.m
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn matrix_dim(&self) -> usize {
        self.m.dim()
    }

    pub fn t_cap(&self) -> f64 {
        self.t_cap
    }

    /// `U U' - M`.
    fn residual(&self, u: &[f64]) -> SymMatrix {
        let (d, r) = (self.m.dim(), self.rank);
        SymMatrix::from_fn(d, |i, j| {
            (0..r).map(|k| u[i * r + k] * u[j * r + k]).sum::<f64>() - self.m.get(i, j)
        })
    }

    /// `A B` for symmetric `A` (d x d) and `B` (d x r, row-major).
    fn mul(&self, a: &SymMatrix, b: &[f64]) -> Vec<f64> {
        let (d, r) = (self.m.dim(), self.rank);
        let mut out = vec![0.0; d * r];
        for i in 0..d {
            let row = a.row(i);
            for (j, aij) in row.iter().enumerate() {
                if *aij == 0.0 {
                    continue;
                }
                for k in 0..r {
                    out[i * r + k] += aij * b[j * r + k];
                }
            }
        }
        out
    }
}

impl Objective for MatFac {
    fn name(&self) -> &str {
        "matfac"
    }

    fn dim(&self) -> usize {
        self.m.dim() * self.rank
    }

    fn params(&self) -> SmoothnessParams {
        self.params
    }

    fn value(&self, x: &[f64]) -> f64 {
        let e = self.residual(x);
        0.5 * e.as_row_major().iter().map(|v| v * v).sum::<f64>()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = self.mul(&self.residual(x), x);
        g.iter_mut().for_each(|v| *v *= 2.0);
        g
    }

    fn hvp(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        // 2 [(V U' + U V') U + (U U' - M) V]
        let (d, r) = (self.m.dim(), self.rank);
        let cross = SymMatrix::from_fn(d, |i, j| {
            (0..r)
                .map(|k| v[i * r + k] * x[j * r + k] + x[i * r + k] * v[j * r + k])
                .sum()
        });
        let a = self.mul(&cross, x);
        let b = self.mul(&self.residual(x), v);
        a.iter().zip(&b).map(|(p, q)| 2.0 * (p + q)).collect()
    }

    fn known_minimum(&self) -> Option<f64> {
        Some(0.0)
    }

    fn domain_violation(&self, x: &[f64]) -> Option<f64> {
        // ||U||_2^2 is the top eigenvalue of the r x r Gram matrix U'U.
        let (d, r) = (self.m.dim(), self.rank);
        let gram = SymMatrix::from_fn(r, |k, l| (0..d).map(|i| x[i * r + k] * x[i * r + l]).sum());
        let top = symmetric_eigen(&gram)
            .ok()
            .and_then(|e| e.values.last().copied())
            .unwrap_or(f64::INFINITY);
        (top > self.t_cap).then_some(top - self.t_cap)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::dense_min_eig;
    use crate::problem::{finite_difference_check, Oracle};

    #[test]
    fn exact_factorization_is_stationary() {
        let p = MatFac::new(SymMatrix::identity(2), 2, None).unwrap();
        let u = [1.0, 0.0, 0.0, 1.0];
        assert_eq!(p.value(&u), 0.0);
        assert!(p.gradient(&u).iter().all(|g| *g == 0.0));
    }

    #[test]
    fn top_eigenvector_factor() {
        let p = MatFac::new(SymMatrix::from_diag(&[4.0, 1.0]), 1, None).unwrap();
        let u = [2.0, 0.0];
        assert_eq!(p.value(&u), 0.5);
        assert_eq!(p.gradient(&u), vec![0.0, 0.0]);
    }

    #[test]
    fn origin_is_a_strict_saddle() {
        let p = MatFac::new(SymMatrix::from_diag(&[4.0, 1.0]), 1, None).unwrap();
        let u = [0.0, 0.0];
        assert_eq!(p.gradient(&u), vec![0.0, 0.0]);
        let (lmin, _) = dense_min_eig(&p.hessian(&u)).unwrap();
        // Hessian at 0 is -2M.
        assert!((lmin + 8.0).abs() < 1e-12);
    }

    #[test]
    fn constants_follow_norm_cap() {
        let p = MatFac::new(SymMatrix::from_diag(&[4.0, 1.0]), 1, None).unwrap();
        assert_eq!(p.t_cap(), 8.0);
        assert_eq!(p.params().l1, 64.0);
        assert!((p.params().l2 - 12.0 * 8f64.sqrt()).abs() < 1e-12);
        let q = MatFac::new(SymMatrix::from_diag(&[4.0, 1.0]), 1, Some(5.0)).unwrap();
        assert_eq!(q.params().l1, 40.0);
    }

    #[test]
    fn rejects_non_symmetric_target() {
        let m = SymMatrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(MatFac::new(m, 1, None), Err(Error::Config(_))));
        assert!(MatFac::new(SymMatrix::identity(2), 3, None).is_err());
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let p = MatFac::planted(6, 2, 3, None).unwrap();
        let o = Oracle::new(&p);
        let mut rng = SeedStream::new(11);
        for _ in 0..5 {
            let u = rng.normal_vec(p.dim());
            let r = finite_difference_check(&o, &u, 1e-5, &mut rng).unwrap();
            assert!(r.max_grad_err <= 1e-5, "{r:?}");
            assert!(r.max_hvp_err <= 1e-5, "{r:?}");
        }
    }

    #[test]
    fn domain_violation_uses_spectral_norm() {
        let p = MatFac::new(SymMatrix::from_diag(&[4.0, 1.0]), 1, Some(5.0)).unwrap();
        assert_eq!(p.domain_violation(&[2.0, 0.0]), None);
        let v = p.domain_violation(&[3.0, 0.0]).unwrap();
        assert!((v - 4.0).abs() < 1e-12);
    }
}
