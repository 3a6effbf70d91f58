//! Built-in problems addressable by key.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{tags, SeedStream};

use super::{MatFac, Objective, Point, SigmoidFiniteSum, Trig};

/// Registered problem keys with one-line descriptions.
pub const PROBLEMS: &[(&str, &str)] = &[
    ("trig", "separable sum of cosines; saddles of every index at known points"),
    ("matfac", "symmetric low-rank factorization 0.5 ||U U' - M||_F^2"),
    ("finitesum-sigmoid", "average of sigmoid losses over a planted classification set"),
];

/// Problem selection and construction parameters.
///
/// Unset fields take per-problem defaults. `dim` is the variable count for
/// `trig` and `finitesum-sigmoid`, and the matrix size for `matfac` (whose
/// point dimension is `dim * rank`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub key: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitudes: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub components: Option<usize>,
    #[serde(default)]
    pub problem_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_cap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_noise: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
}

impl ProblemConfig {
    pub fn new(key: impl Into<String>) -> Self {
        ProblemConfig {
            key: key.into(),
            dim: None,
            amplitudes: None,
            rank: None,
            components: None,
            problem_seed: 0,
            t_cap: None,
            label_noise: None,
            x0_scale: None,
            x0: None,
        }
    }

    pub fn with_dim(mut self, dim: usize) -> Self {
        self.dim = Some(dim);
        self
    }

    pub fn with_x0(mut self, x0: Vec<f64>) -> Self {
        self.x0 = Some(x0);
        self
    }
}

/// A constructed problem and its start point.
#[derive(Debug)]
pub struct BuiltProblem {
    pub problem: Box<dyn Objective>,
    pub x0: Point,
}

pub fn is_known(key: &str) -> bool {
    PROBLEMS.iter().any(|(k, _)| *k == key)
}

/// Builds the problem named by `cfg.key`. Unless `cfg.x0` is given, the
/// start point is a scaled Gaussian drawn from `run_seed`.
pub fn build(cfg: &ProblemConfig, run_seed: u64) -> Result<BuiltProblem> {
    let (problem, default_scale): (Box<dyn Objective>, f64) = match cfg.key.as_str() {
        "trig" => {
            let t = match (&cfg.amplitudes, cfg.dim) {
                (Some(a), Some(d)) if a.len() != d => {
                    return Err(Error::config(format!(
                        "{} amplitudes given for dim {d}",
                        a.len()
                    )))
                }
                (Some(a), _) => Trig::new(a.clone())?,
                (None, d) => Trig::graded(d.unwrap_or(10))?,
            };
            (Box::new(t), 0.5)
        }
        "matfac" => {
            let p = MatFac::planted(
                cfg.dim.unwrap_or(6),
                cfg.rank.unwrap_or(2),
                cfg.problem_seed,
                cfg.t_cap,
            )?;
            (Box::new(p), 0.1)
        }
        "finitesum-sigmoid" => {
            let p = SigmoidFiniteSum::planted(
                cfg.components.unwrap_or(500),
                cfg.dim.unwrap_or(10),
                cfg.problem_seed,
                cfg.label_noise.unwrap_or(0.1),
            )?;
            (Box::new(p), 0.1)
        }
        other => {
            return Err(Error::config(format!(
                "unknown problem '{other}' (known: trig, matfac, finitesum-sigmoid)"
            )))
        }
    };
    let d = problem.dim();
    let x0 = match &cfg.x0 {
        Some(x) if x.len() != d => {
            return Err(Error::config(format!(
                "x0 has length {}, problem dimension is {d}",
                x.len()
            )))
        }
        Some(x) => Point::new(x.clone())?,
        None => {
            let scale = cfg.x0_scale.unwrap_or(default_scale);
            let mut rng = SeedStream::new(run_seed).fork(tags::START_POINT);
            let mut v = rng.normal_vec(d);
            v.iter_mut().for_each(|c| *c *= scale);
            Point::new(v)?
        }
    };
    Ok(BuiltProblem { problem, x0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_key_builds() {
        for (key, _) in PROBLEMS {
            let b = build(&ProblemConfig::new(*key), 1).unwrap();
            assert_eq!(b.x0.dim(), b.problem.dim());
        }
    }

    #[test]
    fn defaults() {
        assert_eq!(build(&ProblemConfig::new("trig"), 0).unwrap().problem.dim(), 10);
        assert_eq!(build(&ProblemConfig::new("matfac"), 0).unwrap().problem.dim(), 12);
        let fs = build(&ProblemConfig::new("finitesum-sigmoid"), 0).unwrap();
        assert_eq!(fs.problem.n_components(), Some(500));
    }

    #[test]
    fn start_point_depends_on_seed_only() {
        let cfg = ProblemConfig::new("trig").with_dim(3);
        let a = build(&cfg, 4).unwrap().x0;
        let b = build(&cfg, 4).unwrap().x0;
        let c = build(&cfg, 5).unwrap().x0;
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn errors() {
        assert!(matches!(build(&ProblemConfig::new("nope"), 0), Err(Error::Config(_))));
        let bad = ProblemConfig::new("trig").with_dim(2).with_x0(vec![0.0]);
        assert!(build(&bad, 0).is_err());
    }

    #[test]
    fn toml_round_trip() {
        let cfg: ProblemConfig = toml::from_str("key = \"matfac\"\ndim = 4\nrank = 1\n").unwrap();
        assert_eq!(cfg.rank, Some(1));
        let back: ProblemConfig = toml::from_str(&toml::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
