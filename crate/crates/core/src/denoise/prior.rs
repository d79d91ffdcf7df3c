//! Priors with closed-form MMSE denoisers.
//!
//! For `z = x + n`, `n ~ N(0, σ² I)`, the noisy marginal of a Gaussian or an
//! isotropic Gaussian mixture stays in the same family, so the posterior
//! mean, the score of the marginal and `-log p_z` are all explicit.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Largest block dimension accepted by the dense Jacobian check.
pub const MAX_JACOBIAN_DIM: usize = 64;

/// Isotropic Gaussian prior `N(μ, τ² I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrior {
    mean: Vec<f64>,
    variance: f64,
}

impl GaussianPrior {
    pub fn new(mean: Vec<f64>, variance: f64) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(Error::Parameter(format!(
                "prior variance must be positive, got {variance}"
            )));
        }
        if mean.is_empty() {
            return Err(Error::Parameter("prior mean is empty".into()));
        }
        Ok(Self { mean, variance })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Shrinkage factor `τ² / (τ² + σ²)` of the posterior mean.
    pub fn shrinkage(&self, sigma: f64) -> f64 {
        self.variance / (self.variance + sigma * sigma)
    }

    /// `(D*)⁻¹(x) = μ + ((τ² + σ²) / τ²)(x - μ)`.
    pub fn inverse_denoise(&self, sigma: f64, x: &[f64]) -> Result<Vec<f64>> {
        check_sigma(sigma)?;
        check_dim(self.dim(), x.len())?;
        let scale = 1.0 / self.shrinkage(sigma);
        Ok(self
            .mean
            .iter()
            .zip(x)
            .map(|(m, xi)| m + scale * (xi - m))
            .collect())
    }
}

/// Mixture of isotropic Gaussians `Σ_k w_k N(μ_k, τ_k² I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmPrior {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<f64>,
}

impl GmmPrior {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<f64>) -> Result<Self> {
        let k = weights.len();
        if k == 0 || means.len() != k || variances.len() != k {
            return Err(Error::Parameter(
                "mixture needs matching non-empty weights, means and variances".into(),
            ));
        }
        let dim = means[0].len();
        if dim == 0 || means.iter().any(|m| m.len() != dim) {
            return Err(Error::Parameter("mixture means must share one dimension".into()));
        }
        if weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::Parameter("mixture weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Parameter(format!(
                "mixture weights sum to {total}, expected 1"
            )));
        }
        if variances.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::Parameter("mixture variances must be positive".into()));
        }
        Ok(Self {
            weights,
            means,
            variances,
        })
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    /// Log of each weighted component density of the noisy marginal at `z`.
    fn log_terms(&self, sigma: f64, z: &[f64]) -> Vec<f64> {
        let n = z.len() as f64;
        let two_pi = 2.0 * std::f64::consts::PI;
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.variances)
            .map(|((w, mu), tau2)| {
                let s = tau2 + sigma * sigma;
                let r2: f64 = z.iter().zip(mu).map(|(a, b)| (a - b) * (a - b)).sum();
                w.ln() - 0.5 * n * (two_pi * s).ln() - r2 / (2.0 * s)
            })
            .collect()
    }

    /// Posterior component probabilities `w̃_k(z)`.
    pub fn responsibilities(&self, sigma: f64, z: &[f64]) -> Result<Vec<f64>> {
        check_sigma(sigma)?;
        check_dim(self.dim(), z.len())?;
        let logs = self.log_terms(sigma, z);
        let lse = log_sum_exp(&logs);
        Ok(logs.iter().map(|l| (l - lse).exp()).collect())
    }
}

/// A prior whose MMSE denoiser is available in closed form.
#[derive(Debug, Clone, PartialEq)]
pub enum MmsePrior {
    Gaussian(GaussianPrior),
    Gmm(GmmPrior),
}

impl From<GaussianPrior> for MmsePrior {
    fn from(p: GaussianPrior) -> Self {
        MmsePrior::Gaussian(p)
    }
}

impl From<GmmPrior> for MmsePrior {
    fn from(p: GmmPrior) -> Self {
        MmsePrior::Gmm(p)
    }
}

impl MmsePrior {
    pub fn dim(&self) -> usize {
        match self {
            MmsePrior::Gaussian(p) => p.dim(),
            MmsePrior::Gmm(p) => p.dim(),
        }
    }

    pub fn as_gaussian(&self) -> Option<&GaussianPrior> {
        match self {
            MmsePrior::Gaussian(p) => Some(p),
            MmsePrior::Gmm(_) => None,
        }
    }

    /// Posterior mean `E[x | z]`.
    pub fn denoise(&self, sigma: f64, z: &[f64]) -> Result<Vec<f64>> {
        check_sigma(sigma)?;
        check_dim(self.dim(), z.len())?;
        Ok(match self {
            MmsePrior::Gaussian(p) => {
                let c = p.shrinkage(sigma);
                p.mean.iter().zip(z).map(|(m, zi)| m + c * (zi - m)).collect()
            }
            MmsePrior::Gmm(p) => {
                let resp = p.responsibilities(sigma, z)?;
                let mut out = vec![0.0; z.len()];
                for ((r, mu), tau2) in resp.iter().zip(&p.means).zip(&p.variances) {
                    let c = tau2 / (tau2 + sigma * sigma);
                    for ((o, m), zi) in out.iter_mut().zip(mu).zip(z) {
                        *o += r * (m + c * (zi - m));
                    }
                }
                out
            }
        })
    }

    /// `h_σ(z) = -log p_z(z)` for the noisy marginal `p_z = p_x * φ_σ`.
    pub fn noisy_neg_log_density(&self, sigma: f64, z: &[f64]) -> Result<f64> {
        check_sigma(sigma)?;
        check_dim(self.dim(), z.len())?;
        Ok(match self {
            MmsePrior::Gaussian(p) => {
                let s = p.variance + sigma * sigma;
                let r2: f64 = z.iter().zip(&p.mean).map(|(a, b)| (a - b) * (a - b)).sum();
                0.5 * z.len() as f64 * (2.0 * std::f64::consts::PI * s).ln() + r2 / (2.0 * s)
            }
            MmsePrior::Gmm(p) => -log_sum_exp(&p.log_terms(sigma, z)),
        })
    }

    /// `∇h_σ(z) = -∇ log p_z(z)`, the negative score of the noisy marginal.
    pub fn tweedie_gradient(&self, sigma: f64, z: &[f64]) -> Result<Vec<f64>> {
        check_sigma(sigma)?;
        check_dim(self.dim(), z.len())?;
        Ok(match self {
            MmsePrior::Gaussian(p) => {
                let s = p.variance + sigma * sigma;
                z.iter().zip(&p.mean).map(|(a, m)| (a - m) / s).collect()
            }
            MmsePrior::Gmm(p) => {
                let resp = p.responsibilities(sigma, z)?;
                let mut out = vec![0.0; z.len()];
                for ((r, mu), tau2) in resp.iter().zip(&p.means).zip(&p.variances) {
                    let s = tau2 + sigma * sigma;
                    for ((o, m), zi) in out.iter_mut().zip(mu).zip(z) {
                        *o += r * (zi - m) / s;
                    }
                }
                out
            }
        })
    }

    /// Smallest eigenvalue of the symmetrized finite-difference Jacobian of
    /// the MMSE denoiser at `z`.
    pub fn jacobian_min_eigenvalue(&self, sigma: f64, z: &[f64]) -> Result<f64> {
        check_sigma(sigma)?;
        let n = z.len();
        check_dim(self.dim(), n)?;
        if n > MAX_JACOBIAN_DIM {
            return Err(Error::Unsupported(format!(
                "dense Jacobian check limited to dimension {MAX_JACOBIAN_DIM}, got {n}"
            )));
        }
        let mut jac = DMatrix::<f64>::zeros(n, n);
        let mut probe = z.to_vec();
        for j in 0..n {
            let h = 1e-5 * (1.0 + z[j].abs());
            probe[j] = z[j] + h;
            let plus = self.denoise(sigma, &probe)?;
            probe[j] = z[j] - h;
            let minus = self.denoise(sigma, &probe)?;
            probe[j] = z[j];
            for i in 0..n {
                jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * h);
            }
        }
        let sym = (&jac + jac.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        Ok(eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min))
    }
}

/// Value of the implicit regularizer `h_i` at `x` for a Gaussian prior:
/// `-(1/2γ)‖x - (D*)⁻¹(x)‖² + (σ²/γ) h_σ((D*)⁻¹(x))`.
pub fn implicit_reg_value(prior: &GaussianPrior, sigma: f64, gamma: f64, x: &[f64]) -> Result<f64> {
    check_gamma(gamma)?;
    let u = prior.inverse_denoise(sigma, x)?;
    let gap: f64 = x.iter().zip(&u).map(|(a, b)| (a - b) * (a - b)).sum();
    let h_sigma = MmsePrior::Gaussian(prior.clone()).noisy_neg_log_density(sigma, &u)?;
    Ok(-gap / (2.0 * gamma) + sigma * sigma / gamma * h_sigma)
}

/// `∇h_i(x) = (1/γ)((D*)⁻¹(x) - x)`, which for the Gaussian prior equals
/// `σ²/(γτ²) (x - μ)`.
pub fn implicit_reg_gradient(
    prior: &GaussianPrior,
    sigma: f64,
    gamma: f64,
    x: &[f64],
) -> Result<Vec<f64>> {
    check_gamma(gamma)?;
    let u = prior.inverse_denoise(sigma, x)?;
    Ok(u.iter().zip(x).map(|(ui, xi)| (ui - xi) / gamma).collect())
}

/// Lipschitz constant of `∇h_i`, exact for the Gaussian prior.
pub fn implicit_reg_lipschitz(prior: &GaussianPrior, sigma: f64, gamma: f64) -> f64 {
    sigma * sigma / (gamma * prior.variance)
}

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("noise level must be positive, got {sigma}")))
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("step size must be positive, got {gamma}")))
    }
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Length { expected, got })
    }
}
