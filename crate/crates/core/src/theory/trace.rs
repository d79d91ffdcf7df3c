use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::io::format_value;

pub const TRACE_HEADER: &str = "iter,block,f,g,h,Gnorm2,step_norm,eps,rmse_v,rmse_theta";

/// Objective values at one iterate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveValue {
    pub f: f64,
    pub g: f64,
    pub h: f64,
}

/// One iteration `k >= 1` of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateRecord {
    pub iter: usize,
    /// Updated block (1-based); 0 when several blocks moved jointly.
    pub block: usize,
    /// `g(x^k)`.
    pub g: f64,
    /// `f(x^k)` and `h(x^k)` when every block prior is Gaussian.
    pub f: Option<f64>,
    pub h: Option<f64>,
    /// `‖G(x^{k-1})‖²`.
    pub g_norm2: Option<f64>,
    /// `‖∇f(x^k)‖²` when computable.
    pub grad_f_norm2: Option<f64>,
    /// `‖x^k - x^{k-1}‖`.
    pub step_norm: f64,
    pub eps: f64,
    pub rmse_v: Option<f64>,
    pub rmse_theta: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IterateTrace {
    pub blocks: usize,
    /// Objective at `x^0`, when computable.
    pub initial: Option<ObjectiveValue>,
    pub initial_grad_f_norm2: Option<f64>,
    pub records: Vec<IterateRecord>,
}

impl IterateTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `ε̄_t² = (1/t) Σ_{k ≤ t} ε_k²` over the recorded errors.
    pub fn mean_sq_eps(&self, t: usize) -> f64 {
        let t = t.min(self.records.len());
        if t == 0 {
            return 0.0;
        }
        self.records[..t].iter().map(|r| r.eps * r.eps).sum::<f64>() / t as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.records.len() + 1));
        out.push_str(TRACE_HEADER);
        out.push('\n');
        let opt = |v: Option<f64>| v.map(format_value).unwrap_or_default();
        let num = format_value;
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.iter,
                r.block,
                opt(r.f),
                num(r.g),
                opt(r.h),
                opt(r.g_norm2),
                num(r.step_norm),
                num(r.eps),
                opt(r.rmse_v),
                opt(r.rmse_theta)
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }
}
