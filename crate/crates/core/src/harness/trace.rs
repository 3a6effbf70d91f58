//! Per-iteration run traces and their CSV form.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::steps::StepKind;

/// CSV header; the column order is fixed.
pub const CSV_HEADER: &str =
    "iter,f,grad_norm,step_kind,rayleigh,noise_level,hvp_cum,grad_cum,wall_ns";

/// One iteration. `hvp_cum` and `grad_cum` are cumulative oracle counts
/// (full plus per-component) after the iteration's work.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub f: f64,
    pub grad_norm: f64,
    pub step_kind: StepKind,
    pub rayleigh: Option<f64>,
    pub noise_level: Option<f64>,
    pub hvp_cum: u64,
    pub grad_cum: u64,
    pub wall_ns: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub rows: Vec<TraceRow>,
}

fn float(out: &mut String, v: f64) {
    let _ = write!(out, "{v:.16e}");
}

fn opt_float(out: &mut String, v: Option<f64>) {
    if let Some(v) = v {
        float(out, v);
    }
}

impl RunTrace {
    pub fn new() -> Self {
        RunTrace::default()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push(&mut self, row: TraceRow) {
        self.rows.push(row);
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    /// CSV with a header row. Floats carry 17 significant digits and
    /// missing values are empty fields.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.rows.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{},", r.iter);
            float(&mut out, r.f);
            out.push(',');
            float(&mut out, r.grad_norm);
            let _ = write!(out, ",{},", r.step_kind.as_str());
            opt_float(&mut out, r.rayleigh);
            out.push(',');
            opt_float(&mut out, r.noise_level);
            let _ = writeln!(out, ",{},{},{}", r.hvp_cum, r.grad_cum, r.wall_ns);
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == CSV_HEADER => {}
            _ => return Err(Error::Input("trace CSV has a missing or unexpected header".into())),
        }
        let bad = |n: usize, what: &str| Error::Input(format!("trace CSV line {n}: bad {what}"));
        let mut rows = Vec::new();
        for (k, line) in lines.enumerate() {
            let n = k + 2;
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 9 {
                return Err(bad(n, "column count"));
            }
            let opt = |s: &str, what: &str| -> Result<Option<f64>> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse().map(Some).map_err(|_| bad(n, what))
                }
            };
            let step_kind = match cols[3] {
                "Curvature" => StepKind::Curvature,
                "Gradient" => StepKind::Gradient,
                "AGD" => StepKind::Agd,
                "Return" => StepKind::Return,
                _ => return Err(bad(n, "step_kind")),
            };
            rows.push(TraceRow {
                iter: cols[0].parse().map_err(|_| bad(n, "iter"))?,
                f: cols[1].parse().map_err(|_| bad(n, "f"))?,
                grad_norm: cols[2].parse().map_err(|_| bad(n, "grad_norm"))?,
                step_kind,
                rayleigh: opt(cols[4], "rayleigh")?,
                noise_level: opt(cols[5], "noise_level")?,
                hvp_cum: cols[6].parse().map_err(|_| bad(n, "hvp_cum"))?,
                grad_cum: cols[7].parse().map_err(|_| bad(n, "grad_cum"))?,
                wall_ns: cols[8].parse().map_err(|_| bad(n, "wall_ns"))?,
            });
        }
        Ok(RunTrace { rows })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        RunTrace::from_csv(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RunTrace {
        let mut t = RunTrace::new();
        t.push(TraceRow {
            iter: 1,
            f: 2.0,
            grad_norm: 0.1,
            step_kind: StepKind::Curvature,
            rayleigh: Some(-1.0),
            noise_level: Some(0.05),
            hvp_cum: 3,
            grad_cum: 1,
            wall_ns: 0,
        });
        t.push(TraceRow {
            iter: 2,
            f: 1.0 / 3.0,
            grad_norm: 0.0,
            step_kind: StepKind::Agd,
            rayleigh: None,
            noise_level: None,
            hvp_cum: 3,
            grad_cum: 9,
            wall_ns: 0,
        });
        t
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let t = sample();
        let csv = t.to_csv();
        assert!(csv.starts_with(CSV_HEADER));
        assert!(csv.contains(",AGD,,,3,9,0"));
        assert_eq!(RunTrace::from_csv(&csv).unwrap(), t);
    }

    #[test]
    fn rejects_foreign_csv() {
        assert!(RunTrace::from_csv("a,b\n1,2\n").is_err());
        let bad = format!("{CSV_HEADER}\n1,2,3\n");
        assert!(RunTrace::from_csv(&bad).is_err());
    }
}
