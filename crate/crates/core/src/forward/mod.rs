//! Measurement models `A(θ)` and the least-squares data fidelity
//! `g(x) = ½‖y - A(θ)v‖²` over block vectors `x = (v, θ)`.

mod convolution;
pub mod fft;
mod lipschitz;
mod linear;
mod multicoil;

pub use convolution::{gaussian_kernel, BlindConvolution, CircularConvolver, FixedConvolution};
pub use linear::LinearModel;
pub use lipschitz::{
    estimate_block_lipschitz, power_iteration, BallRadii, LipschitzEstimate, PowerIteration,
    POWER_MAX_ITERS, POWER_TOL,
};
pub use multicoil::MultiCoil;

use rand_distr::{Distribution, Normal};

use crate::block::{BlockLayout, BlockVector};
use crate::error::{Error, Result};
use crate::rng;

/// Which blocks hold the image and the operator parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockRoles {
    pub image: usize,
    pub operator: Option<usize>,
}

/// A data-fidelity term `g(x) = ½‖y - m(x)‖²` whose prediction `m` is
/// linear in each block separately.
pub trait Fidelity: Send + Sync + std::fmt::Debug {
    fn layout(&self) -> &BlockLayout;

    fn roles(&self) -> BlockRoles;

    fn measurement(&self) -> &[f64];

    fn set_measurement(&mut self, y: Vec<f64>) -> Result<()>;

    /// Noiseless prediction `A(θ)v`.
    fn predict(&self, x: &BlockVector) -> Result<Vec<f64>>;

    /// `J_i d`: the prediction's partial derivative along block `i`.
    fn block_apply(&self, x: &BlockVector, block: usize, d: &[f64]) -> Result<Vec<f64>>;

    /// `J_iᴴ r`.
    fn block_adjoint(&self, x: &BlockVector, block: usize, r: &[f64]) -> Result<Vec<f64>>;

    /// Blocks whose values scale `J_i` linearly (used for ball scaling of
    /// the block Lipschitz constants).
    fn block_dependencies(&self, block: usize) -> Vec<usize>;

    fn residual(&self, x: &BlockVector) -> Result<Vec<f64>> {
        let mut r = self.predict(x)?;
        for (ri, yi) in r.iter_mut().zip(self.measurement()) {
            *ri -= yi;
        }
        Ok(r)
    }

    fn value(&self, x: &BlockVector) -> Result<f64> {
        Ok(0.5 * crate::block::norm_sq(&self.residual(x)?))
    }

    /// `∇_i g(x) = J_iᴴ (m(x) - y)`.
    fn block_gradient(&self, x: &BlockVector, block: usize) -> Result<Vec<f64>> {
        let r = self.residual(x)?;
        self.block_adjoint(x, block, &r)
    }

    fn gradient(&self, x: &BlockVector) -> Result<BlockVector> {
        let r = self.residual(x)?;
        let mut out = BlockVector::zeros(x.layout().clone());
        for i in 1..=x.layout().blocks() {
            let gi = self.block_adjoint(x, i, &r)?;
            out.set_block(i, &gi)?;
        }
        Ok(out)
    }

    /// `A(θ)ᴴ y` with `θ` taken from `x`.
    fn adjoint_measurement(&self, x: &BlockVector) -> Result<Vec<f64>> {
        self.block_adjoint(x, self.roles().image, self.measurement())
    }
}

pub(crate) fn check_layout(layout: &BlockLayout, x: &BlockVector) -> Result<()> {
    if x.layout() != layout {
        return Err(Error::Shape(format!(
            "iterate layout {:?} does not match model layout {:?}",
            x.layout().sizes(),
            layout.sizes()
        )));
    }
    Ok(())
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Length { expected, got });
    }
    Ok(())
}

/// `y = prediction + e` with `e ~ N(0, noise_sigma² I)` drawn from `seed`.
pub fn add_noise(prediction: &[f64], noise_sigma: f64, seed: u64) -> Result<Vec<f64>> {
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::Parameter(format!("noise level must be >= 0, got {noise_sigma}")));
    }
    if noise_sigma == 0.0 {
        return Ok(prediction.to_vec());
    }
    let normal = Normal::new(0.0, noise_sigma).map_err(|e| Error::Parameter(e.to_string()))?;
    let mut r = rng::stream(&[seed, 0x7015e]);
    Ok(prediction.iter().map(|p| p + normal.sample(&mut r)).collect())
}

/// Synthesizes measurements from ground truth and installs them in `model`.
pub fn synthesize<F: Fidelity + ?Sized>(
    model: &mut F,
    truth: &BlockVector,
    noise_sigma: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    let clean = model.predict(truth)?;
    let y = add_noise(&clean, noise_sigma, seed)?;
    model.set_measurement(y.clone())?;
    Ok(y)
}
