//! Block Lipschitz constants of `∇g` by power iteration, certified over a
//! norm ball around the current iterate.
//!
//! The prediction is linear in each block, so `∇_i g` is Lipschitz in block
//! `i` with constant `‖J_i(x)‖²`. Since `J_i` scales linearly with each block
//! it depends on, `‖J_i‖²` is multiplied by `(R_j / ‖x_j‖)²` for every such
//! block `j`, giving the value at the ball boundary along the current ray.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::Fidelity;
use crate::block::{norm, BlockVector};
use crate::error::{Error, Result};
use crate::rng;

pub const POWER_TOL: f64 = 1e-4;
pub const POWER_MAX_ITERS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerIteration {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Largest-magnitude eigenvalue of a symmetric operator on `R^n`, estimated
/// as `‖M d‖` for the normalized iterate `d`.
pub fn power_iteration<F>(n: usize, seed: u64, mut apply: F) -> Result<PowerIteration>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let mut r = rng::stream(&[seed, 0x90e7]);
    let mut d: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut r)).collect();
    let len = norm(&d);
    d.iter_mut().for_each(|v| *v /= len);
    let mut value = 0.0;
    for it in 1..=POWER_MAX_ITERS {
        let md = apply(&d)?;
        let next = norm(&md);
        if !next.is_finite() {
            return Err(Error::Check("power iteration produced a non-finite value".into()));
        }
        if next == 0.0 {
            return Ok(PowerIteration {
                value: 0.0,
                iterations: it,
                converged: true,
            });
        }
        let done = it > 1 && (next - value).abs() <= POWER_TOL * next;
        value = next;
        d = md.into_iter().map(|v| v / next).collect();
        if done {
            return Ok(PowerIteration {
                value,
                iterations: it,
                converged: true,
            });
        }
    }
    Ok(PowerIteration {
        value,
        iterations: POWER_MAX_ITERS,
        converged: false,
    })
}

/// Per-block radii `R_i` of the certification ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallRadii(pub Vec<f64>);

impl BallRadii {
    /// `R_i = factor · ‖x_i‖` (or `factor` when the block is zero).
    pub fn around(x: &BlockVector, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::Parameter(format!("ball factor must be positive, got {factor}")));
        }
        let radii = (1..=x.layout().blocks())
            .map(|i| {
                let n = norm(x.block(i)?);
                Ok(if n > 0.0 { factor * n } else { factor })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self(radii))
    }

    pub fn contains(&self, x: &BlockVector) -> bool {
        self.0
            .iter()
            .enumerate()
            .all(|(i, r)| x.block(i + 1).map(|b| norm(b) <= *r).unwrap_or(false))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzEstimate {
    /// `L_1, ..., L_b`.
    pub blocks: Vec<f64>,
    pub max: f64,
    /// Full-gradient constant `L`: the larger of `Σ L_i` and the local
    /// Hessian norm of `g`.
    pub full: f64,
    /// False when any power iteration hit the iteration cap.
    pub converged: bool,
}

pub fn estimate_block_lipschitz<F: Fidelity + ?Sized>(
    fidelity: &F,
    x: &BlockVector,
    radii: &BallRadii,
) -> Result<LipschitzEstimate> {
    let b = x.layout().blocks();
    if radii.0.len() != b || radii.0.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::Parameter("ball radii must be positive, one per block".into()));
    }
    let mut blocks = Vec::with_capacity(b);
    let mut converged = true;
    for i in 1..=b {
        let n = x.layout().size(i)?;
        let pi = power_iteration(n, i as u64, |d| {
            let jd = fidelity.block_apply(x, i, d)?;
            fidelity.block_adjoint(x, i, &jd)
        })?;
        converged &= pi.converged;
        let mut scale = 1.0;
        for j in fidelity.block_dependencies(i) {
            let nj = norm(x.block(j)?);
            if nj == 0.0 {
                return Err(Error::Parameter(format!(
                    "cannot certify block {i}: block {j} is zero"
                )));
            }
            scale *= (radii.0[j - 1] / nj).powi(2);
        }
        blocks.push(pi.value * scale);
    }
    let hess = hessian_norm(fidelity, x)?;
    converged &= hess.converged;
    let max = blocks.iter().copied().fold(0.0, f64::max);
    let full = hess.value.max(blocks.iter().sum());
    Ok(LipschitzEstimate {
        blocks,
        max,
        full,
        converged,
    })
}

/// `‖∇²g(x)‖` via central differences of the gradient (exact up to rounding
/// for predictions that are at most quadratic).
fn hessian_norm<F: Fidelity + ?Sized>(fidelity: &F, x: &BlockVector) -> Result<PowerIteration> {
    let h = 1e-4 * (1.0 + x.norm());
    let base = x.data().to_vec();
    power_iteration(x.layout().total(), 0, |d| {
        let shift = |sign: f64| -> Result<BlockVector> {
            let data = base.iter().zip(d).map(|(a, b)| a + sign * h * b).collect();
            BlockVector::new(x.layout().clone(), data)
        };
        let gp = fidelity.gradient(&shift(1.0)?)?;
        let gm = fidelity.gradient(&shift(-1.0)?)?;
        Ok(gp
            .data()
            .iter()
            .zip(gm.data())
            .map(|(a, b)| (a - b) / (2.0 * h))
            .collect())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_iteration_diagonal() {
        let diag = [1.0, 3.0, 2.0, 0.5];
        let pi = power_iteration(4, 1, |d| Ok(d.iter().zip(&diag).map(|(a, b)| a * b).collect()))
            .unwrap();
        assert!(pi.converged);
        assert!((pi.value - 3.0).abs() < 1e-3);
    }

    #[test]
    fn zero_operator() {
        let pi = power_iteration(3, 1, |d| Ok(vec![0.0; d.len()])).unwrap();
        assert_eq!(pi.value, 0.0);
    }
}
