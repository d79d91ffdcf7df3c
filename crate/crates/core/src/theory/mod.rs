//! Objective evaluation and numerical checks of the convergence bounds.

mod trace;

pub use trace::{IterateRecord, IterateTrace, ObjectiveValue, TRACE_HEADER};

use serde::{Deserialize, Serialize};

use crate::block::{BlockVector, norm_sq};
use crate::denoise::{implicit_reg_gradient, implicit_reg_lipschitz, implicit_reg_value, GaussianPrior};
use crate::error::{Error, Result};
use crate::forward::LipschitzEstimate;
use crate::solver::Problem;

/// Smallest ensemble `check_theorem2` accepts.
pub const MIN_ENSEMBLE: usize = 10;
/// Ensemble size the random-schedule bound is stated for.
pub const RECOMMENDED_ENSEMBLE: usize = 50;
/// Margin subtracted from a long-run `f*` estimate.
pub const F_STAR_MARGIN: f64 = 0.01;

/// Constants of the sequential and random-schedule bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryConstants {
    pub gamma: f64,
    pub blocks: usize,
    pub l_max: f64,
    /// Full-gradient Lipschitz constant `L`.
    pub l_full: f64,
    pub m_max: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub a1: f64,
    pub a2: f64,
    pub b1: f64,
    pub b2: f64,
    pub c1: f64,
    pub c2: f64,
    pub theta: f64,
    pub d1: f64,
    pub d2: f64,
}

impl TheoryConstants {
    pub fn new(gamma: f64, l_max: f64, l_full: f64, m_max: f64, blocks: usize) -> Result<Self> {
        if !(gamma > 0.0 && l_max > 0.0 && l_full > 0.0 && m_max >= 0.0) || blocks == 0 {
            return Err(Error::Parameter(
                "theory constants need gamma, L_max, L > 0, M_max >= 0 and b >= 1".into(),
            ));
        }
        let alpha = 1.0 / (gamma * l_max);
        if !(alpha > 1.0) {
            return Err(Error::Parameter(format!(
                "step size {gamma} is not below 1/L_max = {}",
                1.0 / l_max
            )));
        }
        let b = blocks as f64;
        let lambda = alpha * l_max + m_max;
        let a1 = alpha * l_max + b * l_full;
        let a2 = a1 + l_full + m_max;
        let b1 = 4.0 * a1 * a1 / ((alpha - 1.0) * l_max);
        let b2 = 2.0 * b * a2 * a2 + lambda * a1 * a1;
        let theta = (alpha - 1.0) / (2.0 * alpha * alpha * b * l_max);
        let out = Self {
            gamma,
            blocks,
            l_max,
            l_full,
            m_max,
            alpha,
            lambda,
            a1,
            a2,
            b1,
            b2,
            c1: b1,
            c2: b * b2,
            theta,
            d1: 1.0 / theta,
            d2: lambda / (2.0 * theta),
        };
        let all = [
            out.lambda, out.a1, out.a2, out.b1, out.b2, out.c1, out.c2, out.theta, out.d1, out.d2,
        ];
        if all.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(Error::Check("theory constants are not positive and finite".into()));
        }
        Ok(out)
    }

    /// Constants for `problem` from certified Lipschitz constants, with
    /// `M_max` from the Gaussian block priors.
    pub fn for_problem(problem: &Problem<'_>, gamma: f64, lipschitz: &LipschitzEstimate) -> Result<Self> {
        let m_max = m_max(problem, gamma)?;
        Self::new(gamma, lipschitz.max, lipschitz.full, m_max, problem.blocks())
    }

    /// Lemma bound on the one-step decrease: the right-hand side of
    /// `f(x^k) ≤ f(x^{k-1}) - (α-1)(L_max/2)‖Δ‖² + λε²/2`.
    pub fn descent_bound(&self, f_prev: f64, step_sq: f64, eps: f64) -> f64 {
        f_prev - (self.alpha - 1.0) * self.l_max / 2.0 * step_sq + self.lambda * eps * eps / 2.0
    }
}

fn gaussian_blocks<'p>(problem: &'p Problem<'_>) -> Result<Vec<(&'p GaussianPrior, f64)>> {
    problem
        .denoisers
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let (prior, sigma) = d.exact().ok_or_else(|| {
                Error::Unsupported(format!("block {} has no closed-form MMSE prior", i + 1))
            })?;
            let g = prior.as_gaussian().ok_or_else(|| {
                Error::Unsupported(format!(
                    "block {} prior is a mixture; its implicit regularizer has no closed form",
                    i + 1
                ))
            })?;
            Ok((g, sigma))
        })
        .collect()
}

/// `M_max = max_i σ_i²/(γτ_i²)`.
pub fn m_max(problem: &Problem<'_>, gamma: f64) -> Result<f64> {
    Ok(gaussian_blocks(problem)?
        .into_iter()
        .map(|(p, s)| implicit_reg_lipschitz(p, s, gamma))
        .fold(0.0, f64::max))
}

/// `f = g + Σ_i h_i` at `x`.
pub fn eval_objective(problem: &Problem<'_>, gamma: f64, x: &BlockVector) -> Result<ObjectiveValue> {
    let priors = gaussian_blocks(problem)?;
    let g = problem.fidelity.value(x)?;
    let mut h = 0.0;
    for (i, (prior, sigma)) in priors.into_iter().enumerate() {
        h += implicit_reg_value(prior, sigma, gamma, x.block(i + 1)?)?;
    }
    Ok(ObjectiveValue { f: g + h, g, h })
}

/// `∇f(x) = (∇_i g(x) + ∇h_i(x_i))_i`.
pub fn eval_grad_f(problem: &Problem<'_>, gamma: f64, x: &BlockVector) -> Result<BlockVector> {
    let priors = gaussian_blocks(problem)?;
    let mut grad = problem.fidelity.gradient(x)?;
    for (i, (prior, sigma)) in priors.into_iter().enumerate() {
        let gh = implicit_reg_gradient(prior, sigma, gamma, x.block(i + 1)?)?;
        let sum: Vec<f64> = grad.block(i + 1)?.iter().zip(&gh).map(|(a, b)| a + b).collect();
        grad.set_block(i + 1, &sum)?;
    }
    Ok(grad)
}

/// Where the `f*` used by a bound check came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "source", content = "value")]
pub enum FStar {
    /// Closed form or grid search.
    Oracle(f64),
    /// Minimum of `f` over a longer reference run, less a relative margin.
    ReferenceRun(f64),
    /// Infimum of `f` over the checked trace itself.
    TraceInfimum(f64),
}

impl FStar {
    pub fn value(self) -> f64 {
        match self {
            FStar::Oracle(v) | FStar::ReferenceRun(v) | FStar::TraceInfimum(v) => v,
        }
    }

    /// `min_k f(x^k)` over a reference trace, lowered by `F_STAR_MARGIN`
    /// of its magnitude.
    pub fn from_reference(trace: &IterateTrace) -> Result<Self> {
        let m = trace_min_f(trace)?;
        Ok(FStar::ReferenceRun(m - F_STAR_MARGIN * m.abs()))
    }

    pub fn from_trace(trace: &IterateTrace) -> Result<Self> {
        Ok(FStar::TraceInfimum(trace_min_f(trace)?))
    }
}

fn trace_min_f(trace: &IterateTrace) -> Result<f64> {
    let fs = trace
        .initial
        .map(|o| o.f)
        .into_iter()
        .chain(trace.records.iter().filter_map(|r| r.f));
    let m = fs.fold(f64::INFINITY, f64::min);
    if m.is_finite() {
        Ok(m)
    } else {
        Err(Error::Check("trace has no objective values".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescentViolation {
    pub iter: usize,
    pub f_prev: f64,
    pub f: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescentReport {
    pub iterations: usize,
    /// Iterations where `f` increased beyond `1e-10 (1 + |f|)`.
    pub monotone_violations: Vec<DescentViolation>,
    /// Iterations where the one-step decrease bound failed.
    pub lemma_violations: Vec<DescentViolation>,
    pub passed: bool,
}

/// Relative slack used by descent checks.
pub const DESCENT_SLACK: f64 = 1e-10;

/// Per-iteration descent checks along `trace`. The step used in the
/// decrease term is the trace's `‖x^k - x^{k-1}‖`, which equals the updated
/// block's displacement when one block moves per iteration.
pub fn check_descent(trace: &IterateTrace, constants: &TheoryConstants) -> Result<DescentReport> {
    let mut prev = trace
        .initial
        .ok_or_else(|| Error::Check("trace has no initial objective".into()))?
        .f;
    let mut monotone = Vec::new();
    let mut lemma = Vec::new();
    for r in &trace.records {
        let f = r
            .f
            .ok_or_else(|| Error::Check(format!("iteration {} has no objective value", r.iter)))?;
        let slack = DESCENT_SLACK * (1.0 + prev.abs());
        if f > prev + slack {
            monotone.push(DescentViolation {
                iter: r.iter,
                f_prev: prev,
                f,
                bound: prev,
            });
        }
        let bound = constants.descent_bound(prev, r.step_norm * r.step_norm, r.eps);
        if f > bound + slack {
            lemma.push(DescentViolation {
                iter: r.iter,
                f_prev: prev,
                f,
                bound,
            });
        }
        prev = f;
    }
    let passed = monotone.is_empty() && lemma.is_empty();
    Ok(DescentReport {
        iterations: trace.records.len(),
        monotone_violations: monotone,
        lemma_violations: lemma,
        passed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundPoint {
    pub t: usize,
    /// Left-hand side (mean over `i ≤ t` or ensemble average).
    pub lhs: f64,
    pub bound: f64,
    /// `bound - lhs`; negative on violation.
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Report {
    pub f0: f64,
    pub f_star: FStar,
    pub complete_epochs: usize,
    /// Iterations past the last complete epoch, ignored by the check.
    pub ignored_iterations: usize,
    /// `min_{i ≤ t} ‖∇f(x^{ib})‖²` for each `t`.
    pub min_grad_sq: Vec<f64>,
    pub points: Vec<BoundPoint>,
    pub violations: Vec<BoundPoint>,
    pub passed: bool,
    pub notes: Vec<String>,
}

/// Sequential-schedule bound at every complete epoch `t`:
/// `min_i ‖∇f(x^{ib})‖² ≤ (1/t) Σ_i ‖∇f(x^{ib})‖² ≤ (C1/t)(f(x⁰) - f*) + C2 ε̄²_{tb}`.
pub fn check_theorem1(trace: &IterateTrace, constants: &TheoryConstants, f_star: FStar) -> Result<Theorem1Report> {
    let b = constants.blocks;
    if trace.blocks != b {
        return Err(Error::Check(format!(
            "trace has {} blocks, constants {}",
            trace.blocks, b
        )));
    }
    let f0 = trace
        .initial
        .ok_or_else(|| Error::Check("trace has no initial objective".into()))?
        .f;
    let gap = f0 - f_star.value();
    let epochs = trace.records.len() / b;
    let mut points = Vec::with_capacity(epochs);
    let mut mins = Vec::with_capacity(epochs);
    let mut sum = 0.0;
    let mut min = f64::INFINITY;
    let mut violations = Vec::new();
    for t in 1..=epochs {
        let rec = &trace.records[t * b - 1];
        let gn = rec.grad_f_norm2.ok_or_else(|| {
            Error::Check(format!("iteration {} has no gradient norm", rec.iter))
        })?;
        sum += gn;
        min = min.min(gn);
        let lhs = sum / t as f64;
        let bound = constants.c1 / t as f64 * gap + constants.c2 * trace.mean_sq_eps(t * b);
        let p = BoundPoint {
            t,
            lhs,
            bound,
            slack: bound - lhs,
        };
        // The min ≤ mean link holds by construction; only the bound can fail.
        if !(lhs <= bound) {
            violations.push(p.clone());
        }
        points.push(p);
        mins.push(min);
    }
    let mut notes = vec![
        "only complete epochs are checked".to_string(),
        "L in A1 is the ball-certified full-gradient constant".to_string(),
    ];
    if gap < 0.0 {
        notes.push("f(x0) < f*: supplied f* is too large".to_string());
    }
    Ok(Theorem1Report {
        f0,
        f_star,
        complete_epochs: epochs,
        ignored_iterations: trace.records.len() - epochs * b,
        min_grad_sq: mins,
        passed: violations.is_empty() && gap >= 0.0,
        violations,
        points,
        notes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem2Report {
    pub seeds: usize,
    pub f0: f64,
    pub f_star: FStar,
    /// Iterations common to every trace.
    pub horizon: usize,
    pub points: Vec<BoundPoint>,
    pub violations: Vec<BoundPoint>,
    /// Final `‖G‖` threshold check, when requested.
    pub convergence: Option<ConvergenceCheck>,
    pub passed: bool,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCheck {
    pub threshold: f64,
    pub required_fraction: f64,
    pub reached: usize,
    pub fraction: f64,
    pub passed: bool,
}

/// Random-schedule bound on the ensemble average of
/// `(1/t) Σ_{k ≤ t} ‖G(x^{k-1})‖²` against `(D1/t)(f(x⁰) - f*) + D2 ε̄²_t`.
///
/// With `final_threshold = Some((τ, q))`, also requires the last recorded
/// `‖G‖` to be below `τ` on at least a fraction `q` of the traces.
pub fn check_theorem2(
    traces: &[IterateTrace],
    constants: &TheoryConstants,
    f_star: FStar,
    final_threshold: Option<(f64, f64)>,
) -> Result<Theorem2Report> {
    if traces.len() < MIN_ENSEMBLE {
        return Err(Error::Check(format!(
            "ensemble of {} traces is below the minimum of {MIN_ENSEMBLE}",
            traces.len()
        )));
    }
    let f0 = traces[0]
        .initial
        .ok_or_else(|| Error::Check("trace has no initial objective".into()))?
        .f;
    let gap = f0 - f_star.value();
    let horizon = traces.iter().map(IterateTrace::len).min().unwrap_or(0);
    let n = traces.len() as f64;
    let mut sums = vec![0.0; traces.len()];
    let mut points = Vec::with_capacity(horizon);
    let mut violations = Vec::new();
    for t in 1..=horizon {
        let mut lhs = 0.0;
        let mut eps = 0.0;
        for (s, tr) in sums.iter_mut().zip(traces) {
            let r = &tr.records[t - 1];
            *s += r.g_norm2.ok_or_else(|| {
                Error::Check(format!("iteration {} has no residual norm", r.iter))
            })?;
            lhs += *s / t as f64;
            eps += tr.mean_sq_eps(t);
        }
        lhs /= n;
        eps /= n;
        let bound = constants.d1 / t as f64 * gap + constants.d2 * eps;
        let p = BoundPoint {
            t,
            lhs,
            bound,
            slack: bound - lhs,
        };
        if !(lhs <= bound) {
            violations.push(p.clone());
        }
        points.push(p);
    }
    let convergence = final_threshold.map(|(threshold, required_fraction)| {
        let reached = traces
            .iter()
            .filter(|tr| {
                tr.records
                    .last()
                    .and_then(|r| r.g_norm2)
                    .is_some_and(|g| g.sqrt() < threshold)
            })
            .count();
        let fraction = reached as f64 / n;
        ConvergenceCheck {
            threshold,
            required_fraction,
            reached,
            fraction,
            passed: fraction >= required_fraction,
        }
    });
    let mut notes = vec![
        "almost-sure convergence is tested as a fraction-of-seeds threshold".to_string(),
    ];
    if traces.len() < RECOMMENDED_ENSEMBLE {
        notes.push(format!(
            "ensemble of {} is below the recommended {RECOMMENDED_ENSEMBLE}",
            traces.len()
        ));
    }
    if gap < 0.0 {
        notes.push("f(x0) < f*: supplied f* is too large".to_string());
    }
    let passed =
        violations.is_empty() && gap >= 0.0 && convergence.as_ref().is_none_or(|c| c.passed);
    Ok(Theorem2Report {
        seeds: traces.len(),
        f0,
        f_star,
        horizon,
        points,
        violations,
        convergence,
        passed,
        notes,
    })
}

/// Checks `∇h_i(x_i) = (1/γ)(z_i - x_i)` for an updated block, where `z_i`
/// is the pre-denoise point and `x_i` the exact denoiser output. Returns
/// the largest absolute deviation.
pub fn prox_optimality_gap(
    prior: &GaussianPrior,
    sigma: f64,
    gamma: f64,
    z: &[f64],
    x: &[f64],
) -> Result<f64> {
    let gh = implicit_reg_gradient(prior, sigma, gamma, x)?;
    Ok(gh
        .iter()
        .zip(z.iter().zip(x))
        .map(|(g, (zi, xi))| (g - (zi - xi) / gamma).abs())
        .fold(0.0, f64::max))
}

/// `‖∇f(x)‖²`.
pub fn grad_f_norm_sq(problem: &Problem<'_>, gamma: f64, x: &BlockVector) -> Result<f64> {
    Ok(norm_sq(eval_grad_f(problem, gamma, x)?.data()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_by_hand() {
        // γ = 0.5, L_max = 1, L = 2, M = 0.25, b = 2.
        let c = TheoryConstants::new(0.5, 1.0, 2.0, 0.25, 2).unwrap();
        assert_eq!(c.alpha, 2.0);
        assert_eq!(c.lambda, 2.25);
        assert_eq!(c.a1, 6.0);
        assert_eq!(c.a2, 8.25);
        assert_eq!(c.b1, 144.0);
        assert_eq!(c.b2, 2.0 * 2.0 * 8.25 * 8.25 + 2.25 * 36.0);
        assert_eq!(c.c2, 2.0 * c.b2);
        assert_eq!(c.theta, 1.0 / 16.0);
        assert_eq!(c.d1, 16.0);
        assert_eq!(c.d2, 18.0);
    }

    #[test]
    fn constants_second_setting() {
        // γ = 0.1, L_max = 4, L = 5, M = 1, b = 3: α = 2.5.
        let c = TheoryConstants::new(0.1, 4.0, 5.0, 1.0, 3).unwrap();
        assert!((c.alpha - 2.5).abs() < 1e-15);
        assert!((c.lambda - 11.0).abs() < 1e-12);
        assert!((c.a1 - 25.0).abs() < 1e-12);
        assert!((c.a2 - 31.0).abs() < 1e-12);
        assert!((c.b1 - 4.0 * 625.0 / 6.0).abs() < 1e-9);
        assert!((c.b2 - (6.0 * 961.0 + 11.0 * 625.0)).abs() < 1e-9);
        assert!((c.theta - 1.5 / (2.0 * 6.25 * 3.0 * 4.0)).abs() < 1e-15);
        assert!((c.d2 - 11.0 / (2.0 * c.theta)).abs() < 1e-9);
    }

    #[test]
    fn rejects_large_step() {
        assert!(TheoryConstants::new(1.0, 1.0, 1.0, 0.0, 1).is_err());
        assert!(TheoryConstants::new(2.0, 1.0, 1.0, 0.0, 1).is_err());
    }

    #[test]
    fn one_iterate_trace() {
        let c = TheoryConstants::new(0.5, 1.0, 1.0, 0.1, 1).unwrap();
        let trace = IterateTrace {
            blocks: 1,
            initial: Some(ObjectiveValue { f: 1.0, g: 1.0, h: 0.0 }),
            initial_grad_f_norm2: Some(1.0),
            records: vec![IterateRecord {
                iter: 1,
                block: 1,
                g: 0.5,
                f: Some(0.5),
                h: Some(0.0),
                g_norm2: Some(0.1),
                grad_f_norm2: Some(0.1),
                step_norm: 0.1,
                eps: 0.0,
                rmse_v: None,
                rmse_theta: None,
            }],
        };
        let r = check_theorem1(&trace, &c, FStar::Oracle(0.0)).unwrap();
        assert!(r.passed);
        assert_eq!(r.min_grad_sq, vec![0.1]);
        assert_eq!(r.points[0].lhs, 0.1);
    }
}
