//! Checkpoint rows of a training run and their CSV form.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "t,rho_hat,rho_oracle,grad_norm_proxy,grad_norm_oracle,w_norm,rho_t,rho_bar_t";

#[derive(Clone, Debug, PartialEq)]
pub struct RunRow {
    pub t: u64,
    /// Empirical average reward since the previous row, or the evaluation
    /// average reward in neural mode.
    pub rho_hat: f64,
    pub rho_oracle: Option<f64>,
    pub grad_norm_proxy: f64,
    pub grad_norm_oracle: Option<f64>,
    pub w_norm: f64,
    pub rho_t: f64,
    pub rho_bar_t: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunLog {
    pub metadata: Vec<(String, String)>,
    rows: Vec<RunRow>,
}

impl RunLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_metadata(mut self, key: &str, value: impl ToString) -> Self {
        self.metadata.push((key.to_string(), value.to_string()));
        self
    }

    pub fn rows(&self) -> &[RunRow] {
        &self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    /// Rows must arrive with strictly increasing `t`.
    pub fn push(&mut self, row: RunRow) -> Result<()> {
        if let Some(last) = self.rows.last() {
            if row.t <= last.t {
                return Err(Error::invalid(format!("run log rows must increase in t ({} after {})", row.t, last.t)));
            }
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn last(&self) -> Option<&RunRow> {
        self.rows.last()
    }

    /// `min_{s ≤ t} ‖∇ρ(θ_s)‖²` over the oracle column; rows without an
    /// oracle value carry the previous minimum.
    pub fn running_min_sq_grad(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.rows
            .iter()
            .map(|r| {
                if let Some(g) = r.grad_norm_oracle {
                    if g.is_finite() {
                        best = best.min(g * g);
                    }
                }
                best
            })
            .collect()
    }

    /// `# key: value` lines, the header, then one line per row. Missing
    /// oracle values are empty fields.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.metadata {
            let _ = writeln!(s, "# {k}: {v}");
        }
        s.push_str(CSV_HEADER);
        s.push('\n');
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.t,
                r.rho_hat,
                opt(r.rho_oracle),
                r.grad_norm_proxy,
                opt(r.grad_norm_oracle),
                r.w_norm,
                r.rho_t,
                r.rho_bar_t
            );
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |m: String| Error::invalid(format!("run log csv: {m}"));
        let mut log = RunLog::new();
        let mut header_seen = false;
        for (lineno, line) in text.lines().enumerate() {
            if let Some(meta) = line.strip_prefix("# ") {
                let (k, v) = meta.split_once(": ").ok_or_else(|| bad(format!("bad metadata on line {}", lineno + 1)))?;
                log.metadata.push((k.to_string(), v.to_string()));
                continue;
            }
            if !header_seen {
                if line != CSV_HEADER {
                    return Err(bad(format!("unexpected header {line:?}")));
                }
                header_seen = true;
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 8 {
                return Err(bad(format!("line {} has {} fields", lineno + 1, f.len())));
            }
            let num = |s: &str| -> Result<f64> { s.parse().map_err(|_| bad(format!("bad number {s:?} on line {}", lineno + 1))) };
            let opt = |s: &str| -> Result<Option<f64>> { if s.is_empty() { Ok(None) } else { num(s).map(Some) } };
            log.push(RunRow {
                t: f[0].parse().map_err(|_| bad(format!("bad t on line {}", lineno + 1)))?,
                rho_hat: num(f[1])?,
                rho_oracle: opt(f[2])?,
                grad_norm_proxy: num(f[3])?,
                grad_norm_oracle: opt(f[4])?,
                w_norm: num(f[5])?,
                rho_t: num(f[6])?,
                rho_bar_t: num(f[7])?,
            })?;
        }
        if !header_seen {
            return Err(bad("missing header".into()));
        }
        Ok(log)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}
