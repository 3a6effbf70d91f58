//! Dense certification of approximate second-order stationarity.

use serde::{Deserialize, Serialize};

use crate::eigen::dense_min_eig;
use crate::error::{Error, Result};
use crate::linalg;
use crate::problem::Oracle;

/// Gradient norm and exact smallest Hessian eigenvalue at a point, compared
/// against `||grad f|| <= eps1_target` and `lambda_min >= -eps2_target`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationarityCertificate {
    pub grad_norm: f64,
    pub lambda_min: f64,
    pub eps1_target: f64,
    pub eps2_target: f64,
    pub passed_first_order: bool,
    pub passed_second_order: bool,
}

impl StationarityCertificate {
    pub fn new(grad_norm: f64, lambda_min: f64, eps1_target: f64, eps2_target: f64) -> Self {
        StationarityCertificate {
            grad_norm,
            lambda_min,
            eps1_target,
            eps2_target,
            passed_first_order: grad_norm <= eps1_target,
            passed_second_order: lambda_min >= -eps2_target,
        }
    }

    pub fn passed(&self) -> bool {
        self.passed_first_order && self.passed_second_order
    }

    /// Whether the stored flags agree with the stored values.
    pub fn is_consistent(&self) -> bool {
        let again = StationarityCertificate::new(
            self.grad_norm,
            self.lambda_min,
            self.eps1_target,
            self.eps2_target,
        );
        again.passed_first_order == self.passed_first_order
            && again.passed_second_order == self.passed_second_order
    }
}

/// Certifies `x` with the exact gradient and a dense eigen-solve of the
/// Hessian. Does not touch the oracle's counters.
pub fn certify(oracle: &Oracle<'_>, x: &[f64], eps1: f64, eps2: f64) -> Result<StationarityCertificate> {
    if x.len() != oracle.dim() {
        return Err(Error::Input(format!(
            "x has length {}, problem dimension is {}",
            x.len(),
            oracle.dim()
        )));
    }
    let h = oracle.dense_hessian(x)?;
    let g = oracle.problem().gradient(x);
    if !linalg::all_finite(&g) {
        return Err(Error::Oracle("gradient"));
    }
    let (lambda_min, _) = dense_min_eig(&h)?;
    Ok(StationarityCertificate::new(linalg::norm(&g), lambda_min, eps1, eps2))
}
