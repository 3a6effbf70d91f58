//! Smallest-eigenvalue estimation: matrix-free Lanczos for the solvers and
//! an exact dense oracle for certification.

mod lanczos;
mod tridiag;

pub use lanczos::{
    lanczos_budget, lanczos_min_eig, lanczos_min_eig_traced, CurvatureEstimate, LanczosDiagnostics,
};
pub use tridiag::{symmetric_eigen, tridiagonal_eigen, SymmetricEigen};

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::problem::Point;

/// Asymmetry above which [`dense_min_eig`] rejects its input.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Exact smallest eigenvalue and a unit eigenvector of a symmetric matrix.
pub fn dense_min_eig(h: &SymMatrix) -> Result<(f64, Point)> {
    let asym = h.asymmetry();
    if asym > SYMMETRY_TOL {
        return Err(Error::Input(format!(
            "matrix is not symmetric (max |h_ij - h_ji| = {asym:e})"
        )));
    }
    let eig = symmetric_eigen(h)?;
    Ok((eig.values[0], Point::new(eig.vector(0))?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedStream;

    #[test]
    fn zero_matrix() {
        let (l, v) = dense_min_eig(&SymMatrix::zeros(3)).unwrap();
        assert_eq!(l, 0.0);
        assert!((crate::linalg::norm(&v) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn diagonal_matrix() {
        let (l, v) = dense_min_eig(&SymMatrix::from_diag(&[4.0, 1.0, -2.0])).unwrap();
        assert_eq!(l, -2.0);
        assert!(v[0].abs() < 1e-15 && v[1].abs() < 1e-15);
        assert!((v[2].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_asymmetric_input() {
        let h = SymMatrix::from_rows(&[vec![1.0, 1e-9], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(dense_min_eig(&h), Err(Error::Input(_))));
    }

    // Characteristic polynomial det(H - t I) evaluated by Gaussian
    // elimination with partial pivoting.
    fn char_poly(h: &SymMatrix, t: f64) -> f64 {
        let n = h.dim();
        let mut a: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| h.get(i, j) - if i == j { t } else { 0.0 }).collect())
            .collect();
        let mut det = 1.0;
        for c in 0..n {
            let p = (c..n)
                .max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs()))
                .unwrap();
            if a[p][c] == 0.0 {
                return 0.0;
            }
            if p != c {
                a.swap(p, c);
                det = -det;
            }
            det *= a[c][c];
            let pivot = a[c].clone();
            for row in a.iter_mut().skip(c + 1) {
                let f = row[c] / pivot[c];
                for (x, p) in row[c..].iter_mut().zip(&pivot[c..]) {
                    *x -= f * p;
                }
            }
        }
        det
    }

    #[test]
    fn agrees_with_characteristic_polynomial_root() {
        let mut rng = SeedStream::new(42);
        for _ in 0..5 {
            let g = rng.normal_vec(64);
            let h = SymMatrix::from_fn(8, |i, j| g[i.min(j) * 8 + i.max(j)]);
            let (lmin, _) = dense_min_eig(&h).unwrap();
            // Bracket the smallest root below every eigenvalue: Gershgorin
            // lower bound on the left, just past lmin on the right where the
            // sign must have flipped exactly once.
            let mut lo = (0..8)
                .map(|i| h.get(i, i) - (0..8).filter(|&j| j != i).map(|j| h.get(i, j).abs()).sum::<f64>())
                .fold(f64::INFINITY, f64::min)
                - 1.0;
            let mut hi = lmin + 1e-6;
            let flo = char_poly(&h, lo);
            assert!(flo * char_poly(&h, hi) < 0.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if char_poly(&h, mid) * flo > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            assert!((0.5 * (lo + hi) - lmin).abs() < 1e-9, "{lmin} vs {lo}");
        }
    }
}
