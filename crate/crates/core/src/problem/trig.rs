use crate::error::{Error, Result};
use crate::linalg::SymMatrix;

use super::{Objective, SmoothnessParams};

/// Separable cosine landscape `f(x) = sum_i c_i cos(x_i)`.
///
/// Stationary points sit on the grid `x_i in {0, pi} + 2 pi Z` and the
/// Hessian there is `diag(-c_i cos x_i)`, so saddles of every index are
/// known in closed form. Both Lipschitz constants equal `max |c_i|`.
#[derive(Debug, Clone)]
pub struct Trig {
    amplitudes: Vec<f64>,
    params: SmoothnessParams,
}

impl Trig {
    pub fn new(amplitudes: Vec<f64>) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::config("trig problem needs at least one amplitude"));
        }
        if amplitudes.iter().any(|c| !c.is_finite() || *c == 0.0) {
            return Err(Error::config("trig amplitudes must be finite and nonzero"));
        }
        let cmax = amplitudes.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        let spread: f64 = 2.0 * amplitudes.iter().map(|c| c.abs()).sum::<f64>();
        // max f - min f bounds the gap from any start.
        let params = SmoothnessParams::new(cmax, cmax, spread, None)?;
        Ok(Trig { amplitudes, params })
    }

    /// `d` amplitudes spaced linearly from 1 down to 1/2.
    pub fn graded(d: usize) -> Result<Self> {
        let amps = (0..d)
            .map(|i| {
                if d == 1 {
                    1.0
                } else {
                    1.0 - 0.5 * i as f64 / (d - 1) as f64
                }
            })
            .collect();
        Trig::new(amps)
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }
}

impl Objective for Trig {
    fn name(&self) -> &str {
        "trig"
    }

    fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    fn params(&self) -> SmoothnessParams {
        self.params
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.amplitudes.iter().zip(x).map(|(c, xi)| c * xi.cos()).sum()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.amplitudes.iter().zip(x).map(|(c, xi)| -c * xi.sin()).collect()
    }

    fn hvp(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        self.amplitudes
            .iter()
            .zip(x)
            .zip(v)
            .map(|((c, xi), vi)| -c * xi.cos() * vi)
            .collect()
    }

    fn hessian(&self, x: &[f64]) -> SymMatrix {
        let diag: Vec<f64> = self
            .amplitudes
            .iter()
            .zip(x)
            .map(|(c, xi)| -c * xi.cos())
            .collect();
        SymMatrix::from_diag(&diag)
    }

    fn known_minimum(&self) -> Option<f64> {
        Some(-self.amplitudes.iter().map(|c| c.abs()).sum::<f64>())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::dense_min_eig;
    use std::f64::consts::PI;

    #[test]
    fn origin_is_a_saddle_of_index_two() {
        let t = Trig::new(vec![1.0, 1.0]).unwrap();
        assert_eq!(t.value(&[0.0, 0.0]), 2.0);
        assert_eq!(t.gradient(&[0.0, 0.0]), vec![0.0, 0.0]);
        let (lmin, _) = dense_min_eig(&t.hessian(&[0.0, 0.0])).unwrap();
        assert_eq!(lmin, -1.0);
    }

    #[test]
    fn pi_pi_is_a_local_minimum() {
        let t = Trig::new(vec![1.0, 1.0]).unwrap();
        let (lmin, _) = dense_min_eig(&t.hessian(&[PI, PI])).unwrap();
        assert!((lmin - 1.0).abs() < 1e-15);
        assert_eq!(t.known_minimum(), Some(-2.0));
    }

    #[test]
    fn lipschitz_constants_are_max_amplitude() {
        let t = Trig::new(vec![2.0, 1.0, 0.5]).unwrap();
        assert_eq!(t.params().l1, 2.0);
        assert_eq!(t.params().l2, 2.0);
    }

    #[test]
    fn config_errors() {
        assert!(matches!(Trig::new(vec![]), Err(Error::Config(_))));
        assert!(matches!(Trig::new(vec![1.0, 0.0]), Err(Error::Config(_))));
    }

    #[test]
    fn graded_amplitudes() {
        let t = Trig::graded(3).unwrap();
        assert_eq!(t.amplitudes(), &[1.0, 0.75, 0.5]);
        assert_eq!(Trig::graded(1).unwrap().amplitudes(), &[1.0]);
    }
}
