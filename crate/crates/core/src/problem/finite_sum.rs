use crate::error::{Error, Result};
use crate::linalg::{self, SymMatrix};
use crate::rng::SeedStream;

use super::{Objective, SmoothnessParams};

/// `sigma(t) = 1 / (1 + e^t)`, evaluated without overflow.
fn sigma(t: f64) -> f64 {
    if t > 0.0 {
        let e = (-t).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + t.exp())
    }
}

/// Sigmoid loss `f(x) = (1/n) sum_i sigma(y_i a_i' x)`.
///
/// Each component is smooth, bounded and nonconvex. With
/// `|sigma'| <= 1/4`, `|sigma''| <= 1/(6 sqrt 3)` and `|sigma'''| <= 1/8`,
/// the constants are `L1 = A^2 / (6 sqrt 3)`, `L2 = A^3 / 8` and
/// `G = A / 2` where `A = max_i ||a_i||`.
#[derive(Debug, Clone)]
pub struct SigmoidFiniteSum {
    n: usize,
    d: usize,
    // Row i holds y_i a_i.
    signed: Vec<f64>,
    params: SmoothnessParams,
}

const FLOOR: f64 = 1e-12;

impl SigmoidFiniteSum {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<f64>) -> Result<Self> {
        let n = features.len();
        if n == 0 {
            return Err(Error::config("finite-sum problem needs at least one sample"));
        }
        if labels.len() != n {
            return Err(Error::config(format!(
                "{n} feature vectors but {} labels",
                labels.len()
            )));
        }
        let d = features[0].len();
        if d == 0 {
            return Err(Error::config("feature vectors must be non-empty"));
        }
        let mut signed = Vec::with_capacity(n * d);
        let mut amax = 0.0f64;
        for (a, y) in features.iter().zip(&labels) {
            if a.len() != d {
                return Err(Error::config("feature vectors have inconsistent lengths"));
            }
            if !linalg::all_finite(a) {
                return Err(Error::config("features must be finite"));
            }
            if *y != 1.0 && *y != -1.0 {
                return Err(Error::config(format!("labels must be +1 or -1, got {y}")));
            }
            amax = amax.max(linalg::norm(a));
            signed.extend(a.iter().map(|v| y * v));
        }
        let params = SmoothnessParams::new(
            (amax * amax / (6.0 * 3f64.sqrt())).max(FLOOR),
            (amax.powi(3) / 8.0).max(FLOOR),
            1.0,
            Some((amax / 2.0).max(FLOOR)),
        )?;
        Ok(SigmoidFiniteSum {
            n,
            d,
            signed,
            params,
        })
    }

    /// `n` Gaussian feature vectors labelled by a hidden direction `w*`,
    /// with each label flipped independently with probability `label_noise`.
    pub fn planted(n: usize, d: usize, seed: u64, label_noise: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&label_noise) {
            return Err(Error::config(format!(
                "label noise must lie in [0, 1], got {label_noise}"
            )));
        }
        let mut rng = SeedStream::new(seed);
        let w = rng.normal_vec(d);
        let mut features = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let a = rng.normal_vec(d);
            let mut y = if linalg::dot(&a, &w) >= 0.0 { 1.0 } else { -1.0 };
            if rng.uniform() < label_noise {
                y = -y;
            }
            features.push(a);
            labels.push(y);
        }
        SigmoidFiniteSum::new(features, labels)
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.signed[i * self.d..(i + 1) * self.d]
    }

    // (sigma'(t), sigma''(t)) at t = y_i a_i' x.
    fn derivs(&self, i: usize, x: &[f64]) -> (f64, f64) {
        let s = sigma(linalg::dot(self.row(i), x));
        let d1 = -s * (1.0 - s);
        let d2 = s * (1.0 - s) * (1.0 - 2.0 * s);
        (d1, d2)
    }
}

impl Objective for SigmoidFiniteSum {
    fn name(&self) -> &str {
        "finitesum-sigmoid"
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn params(&self) -> SmoothnessParams {
        self.params
    }

    fn value(&self, x: &[f64]) -> f64 {
        (0..self.n)
            .map(|i| sigma(linalg::dot(self.row(i), x)))
            .sum::<f64>()
            / self.n as f64
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.d];
        for i in 0..self.n {
            let (d1, _) = self.derivs(i, x);
            linalg::axpy(d1, self.row(i), &mut g);
        }
        linalg::scale(1.0 / self.n as f64, &mut g);
        g
    }

    fn hvp(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        for i in 0..self.n {
            let (_, d2) = self.derivs(i, x);
            let a = self.row(i);
            linalg::axpy(d2 * linalg::dot(a, v), a, &mut out);
        }
        linalg::scale(1.0 / self.n as f64, &mut out);
        out
    }

    fn hessian(&self, x: &[f64]) -> SymMatrix {
        let mut h = SymMatrix::zeros(self.d);
        for i in 0..self.n {
            let (_, d2) = self.derivs(i, x);
            let a = self.row(i);
            let c = d2 / self.n as f64;
            for p in 0..self.d {
                for q in 0..self.d {
                    h.set(p, q, h.get(p, q) + c * a[p] * a[q]);
                }
            }
        }
        h
    }

    fn n_components(&self) -> Option<usize> {
        Some(self.n)
    }

    fn component_gradient(&self, i: usize, x: &[f64]) -> Option<Vec<f64>> {
        let (d1, _) = self.derivs(i, x);
        Some(self.row(i).iter().map(|a| d1 * a).collect())
    }

    fn component_hvp(&self, i: usize, x: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        let (_, d2) = self.derivs(i, x);
        let a = self.row(i);
        let c = d2 * linalg::dot(a, v);
        Some(a.iter().map(|ai| c * ai).collect())
    }

    fn known_minimum(&self) -> Option<f64> {
        Some(0.0)
    }
}
