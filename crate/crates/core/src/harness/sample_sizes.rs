//! Sample sizes for sub-sampled gradients and Hessians.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::SmoothnessParams;
use crate::solvers::SolveConfig;

/// Gradient (`s1`) and Hessian (`s2`) sample sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSizes {
    pub s1: u64,
    pub s2: u64,
}

pub(crate) fn saturating_ceil(v: f64) -> u64 {
    if v.is_nan() || v >= u64::MAX as f64 {
        u64::MAX
    } else if v <= 0.0 {
        0
    } else {
        v.ceil() as u64
    }
}

/// Per-iteration failure probability of SNCG:
/// `delta / (1 + max(48 L2^2 / eps2^3, 8 L1 / eps1^2) Delta)`.
pub fn sncg_delta_prime(eps1: f64, eps2: f64, delta: f64, params: &SmoothnessParams) -> f64 {
    delta / (1.0 + sncg_rate(eps1, eps2, params) * params.delta_gap)
}

pub(crate) fn sncg_rate(eps1: f64, eps2: f64, p: &SmoothnessParams) -> f64 {
    (48.0 * p.l2 * p.l2 / eps2.powi(3)).max(8.0 * p.l1 / (eps1 * eps1))
}

/// Theoretical SNCG sample sizes at an explicit `delta_prime`:
///
/// * `s1 = ceil(max(32 G^2 / eps1^2, 2304 G^2 L2^4 / eps2^4) (1 + 3 log^2(2 / delta')))`
/// * `s2 = ceil(9216 L1^2 / eps2^2 log(4 d / delta'))`
pub fn sample_sizes_at(
    eps1: f64,
    eps2: f64,
    delta_prime: f64,
    params: &SmoothnessParams,
    d: usize,
) -> Result<SampleSizes> {
    let g = params
        .g_bound
        .ok_or_else(|| Error::config("sample sizes need the gradient scale g_bound"))?;
    if !(delta_prime > 0.0 && delta_prime < 1.0) {
        return Err(Error::config(format!(
            "delta' must lie in (0, 1), got {delta_prime}"
        )));
    }
    let g2 = g * g;
    let l = (2.0 / delta_prime).ln();
    let s1 = (32.0 * g2 / (eps1 * eps1)).max(2304.0 * g2 * params.l2.powi(4) / eps2.powi(4))
        * (1.0 + 3.0 * l * l);
    let s2 = s2_formula(params.l1, eps2, (4.0 * d as f64 / delta_prime).ln());
    Ok(SampleSizes {
        s1: saturating_ceil(s1),
        s2: saturating_ceil(s2),
    })
}

fn s2_formula(l1: f64, eps2: f64, log_term: f64) -> f64 {
    9216.0 * l1 * l1 / (eps2 * eps2) * log_term
}

/// Theoretical SNCG sample sizes for a run configuration, with `delta'`
/// from the SNCG schedule.
pub fn sample_sizes(cfg: &SolveConfig, params: &SmoothnessParams, d: usize) -> Result<SampleSizes> {
    cfg.validate()?;
    let dp = sncg_delta_prime(cfg.eps1, cfg.eps2, cfg.delta, params);
    sample_sizes_at(cfg.eps1, cfg.eps2, dp, params, d)
}

/// Hessian sample size `ceil(16 L1^2 / eps3^2 log(2 d / delta'))` giving
/// `||H_S - H|| <= eps3` with probability `1 - delta'`.
pub fn hessian_sample_size(l1: f64, eps3: f64, d: usize, delta_prime: f64) -> u64 {
    saturating_ceil(16.0 * l1 * l1 / (eps3 * eps3) * (2.0 * d as f64 / delta_prime).ln())
}

/// Gradient sampling accuracy required by the stochastic step:
/// `min(eps1 / (2 sqrt 2), eps2^2 / (24 L2))`.
pub fn gradient_tolerance(eps1: f64, eps2: f64, l2: f64) -> f64 {
    (eps1 / (2.0 * 2f64.sqrt())).min(eps2 * eps2 / (24.0 * l2))
}

/// Hessian sampling accuracy required by the stochastic step: `eps2 / 24`.
pub fn hessian_tolerance(eps2: f64) -> f64 {
    eps2 / 24.0
}
