use crate::error::{Error, Result};
use crate::linalg::SymMatrix;

use super::{Objective, SmoothnessParams};

/// `f(x) = x' A x / 2` for a symmetric `A`.
///
/// The Hessian is constant, so any positive `l2` is valid; callers pick it
/// to set the curvature step length `2 |v'Av| / l2`.
#[derive(Debug, Clone)]
pub struct Quadratic {
    a: SymMatrix,
    params: SmoothnessParams,
    minimum: Option<f64>,
}

impl Quadratic {
    pub fn new(a: SymMatrix, l2: f64, delta_gap: f64) -> Result<Self> {
        if a.dim() == 0 {
            return Err(Error::config("quadratic needs a non-empty matrix"));
        }
        if a.asymmetry() > 1e-10 {
            return Err(Error::config("quadratic matrix must be symmetric"));
        }
        let eig = crate::eigen::symmetric_eigen(&a)?;
        let l1 = eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let l1 = if l1 > 0.0 { l1 } else { 1.0 };
        let minimum = (eig.values[0] >= 0.0).then_some(0.0);
        Ok(Quadratic {
            a,
            params: SmoothnessParams::new(l1, l2, delta_gap, None)?,
            minimum,
        })
    }
}

impl Objective for Quadratic {
    fn name(&self) -> &str {
        "quadratic"
    }

    fn dim(&self) -> usize {
        self.a.dim()
    }

    fn params(&self) -> SmoothnessParams {
        self.params
    }

    fn value(&self, x: &[f64]) -> f64 {
        0.5 * crate::linalg::dot(x, &self.a.matvec(x))
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.a.matvec(x)
    }

    fn hvp(&self, _x: &[f64], v: &[f64]) -> Vec<f64> {
        self.a.matvec(v)
    }

    fn hessian(&self, _x: &[f64]) -> SymMatrix {
        self.a.clone()
    }

    fn known_minimum(&self) -> Option<f64> {
        self.minimum
    }
}
