//! Per-block denoisers.

mod prior;
mod tv;

pub use prior::{
    implicit_reg_gradient, implicit_reg_lipschitz, implicit_reg_value, GaussianPrior, GmmPrior,
    MmsePrior, MAX_JACOBIAN_DIM,
};
pub use tv::{total_variation, tv_prox, DEFAULT_TV_ITERATIONS};

use rand_distr::{Distribution, StandardNormal};

use crate::block::norm;
use crate::error::{Error, Result};
use crate::rng;

/// Per-iteration bound `ε_k` on the distance between a deployed denoiser
/// and the exact MMSE denoiser.
#[derive(Debug, Clone, PartialEq)]
pub enum ErrorKind {
    Zero,
    Constant(f64),
    /// `ε_k = ε₀ / k`.
    SquareSummable(f64),
    /// Explicit `ε_1, ε_2, ...`; zero past the end of the list.
    Custom(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSchedule {
    pub kind: ErrorKind,
    pub seed: u64,
}

impl ErrorSchedule {
    pub fn new(kind: ErrorKind, seed: u64) -> Result<Self> {
        let ok = match &kind {
            ErrorKind::Zero => true,
            ErrorKind::Constant(e) | ErrorKind::SquareSummable(e) => *e >= 0.0 && e.is_finite(),
            ErrorKind::Custom(v) => v.iter().all(|e| *e >= 0.0 && e.is_finite()),
        };
        if !ok {
            return Err(Error::Parameter("error schedule values must be finite and >= 0".into()));
        }
        Ok(Self { kind, seed })
    }

    pub fn zero() -> Self {
        Self {
            kind: ErrorKind::Zero,
            seed: 0,
        }
    }

    pub fn epsilon(&self, k: usize) -> f64 {
        match &self.kind {
            ErrorKind::Zero => 0.0,
            ErrorKind::Constant(e) => *e,
            ErrorKind::SquareSummable(e) => *e / k.max(1) as f64,
            ErrorKind::Custom(v) => v.get(k.wrapping_sub(1)).copied().unwrap_or(0.0),
        }
    }

    /// `ε̄_t² = (1/t) Σ_{k ≤ t} ε_k²`.
    pub fn mean_sq(&self, t: usize) -> f64 {
        if t == 0 {
            return 0.0;
        }
        (1..=t).map(|k| self.epsilon(k).powi(2)).sum::<f64>() / t as f64
    }
}

/// A block denoiser `D_σ`.
#[derive(Debug, Clone, PartialEq)]
pub enum Denoiser {
    /// Exact posterior mean under a closed-form prior.
    Mmse { prior: MmsePrior, sigma: f64 },
    Identity,
    SoftThreshold { lambda: f64 },
    TvProx {
        lambda: f64,
        iterations: usize,
        height: usize,
        width: usize,
    },
    /// `base(z) + ε_k u` with `u` a random unit vector drawn from
    /// `(errors.seed, k, block)`.
    Inexact {
        base: Box<Denoiser>,
        errors: ErrorSchedule,
        block: usize,
    },
}

impl Denoiser {
    pub fn mmse(prior: impl Into<MmsePrior>, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Parameter(format!("denoiser strength must be positive, got {sigma}")));
        }
        Ok(Denoiser::Mmse {
            prior: prior.into(),
            sigma,
        })
    }

    pub fn soft_threshold(lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) {
            return Err(Error::Parameter("soft threshold must be >= 0".into()));
        }
        Ok(Denoiser::SoftThreshold { lambda })
    }

    pub fn tv(lambda: f64, iterations: usize, height: usize, width: usize) -> Result<Self> {
        if !(lambda >= 0.0) || height == 0 || width == 0 {
            return Err(Error::Parameter("tv prox needs lambda >= 0 and a non-empty grid".into()));
        }
        Ok(Denoiser::TvProx {
            lambda,
            iterations,
            height,
            width,
        })
    }

    pub fn inexact(base: Denoiser, errors: ErrorSchedule, block: usize) -> Self {
        Denoiser::Inexact {
            base: Box::new(base),
            errors,
            block,
        }
    }

    /// Denoiser strength `σ` when the denoiser has one.
    pub fn strength(&self) -> Option<f64> {
        match self {
            Denoiser::Mmse { sigma, .. } => Some(*sigma),
            Denoiser::Inexact { base, .. } => base.strength(),
            _ => None,
        }
    }

    /// The exact MMSE denoiser this one approximates, if any.
    pub fn exact(&self) -> Option<(&MmsePrior, f64)> {
        match self {
            Denoiser::Mmse { prior, sigma } => Some((prior, *sigma)),
            Denoiser::Inexact { base, .. } => base.exact(),
            _ => None,
        }
    }

    /// Scheduled error `ε_k`; zero for denoisers without a wrapper.
    pub fn epsilon(&self, k: usize) -> f64 {
        match self {
            Denoiser::Inexact { errors, .. } => errors.epsilon(k),
            _ => 0.0,
        }
    }

    pub fn error_schedule(&self) -> Option<&ErrorSchedule> {
        match self {
            Denoiser::Inexact { errors, .. } => Some(errors),
            _ => None,
        }
    }

    /// Applies the denoiser at iteration `k >= 1`.
    pub fn apply(&self, z: &[f64], k: usize) -> Result<Vec<f64>> {
        match self {
            Denoiser::Mmse { prior, sigma } => prior.denoise(*sigma, z),
            Denoiser::Identity => Ok(z.to_vec()),
            Denoiser::SoftThreshold { lambda } => Ok(z
                .iter()
                .map(|v| v.signum() * (v.abs() - lambda).max(0.0))
                .collect()),
            Denoiser::TvProx {
                lambda,
                iterations,
                height,
                width,
            } => {
                if z.len() != height * width {
                    return Err(Error::Length {
                        expected: height * width,
                        got: z.len(),
                    });
                }
                Ok(tv_prox(z, *height, *width, *lambda, *iterations))
            }
            Denoiser::Inexact {
                base,
                errors,
                block,
            } => {
                let mut out = base.apply(z, k)?;
                let eps = errors.epsilon(k);
                if eps > 0.0 {
                    let u = unit_vector(out.len(), &[errors.seed, k as u64, *block as u64]);
                    for (o, ui) in out.iter_mut().zip(&u) {
                        *o += eps * ui;
                    }
                }
                Ok(out)
            }
        }
    }
}

fn unit_vector(n: usize, key: &[u64]) -> Vec<f64> {
    let mut r = rng::stream(key);
    loop {
        let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut r)).collect();
        let len = norm(&v);
        if len > 1e-300 {
            return v.into_iter().map(|x| x / len).collect();
        }
    }
}
