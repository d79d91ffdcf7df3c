use num_complex::Complex64;

use super::fft::{to_complex, Fft2};
use super::lipschitz::power_iteration;
use super::{check_layout, check_len, BlockRoles, Fidelity};
use crate::block::{BlockLayout, BlockVector};
use crate::error::{Error, Result};

/// Circular 2-D convolution of an `H × W` image with a centered `h × w`
/// kernel (odd sides, `h <= H`, `w <= W`).
#[derive(Debug, Clone)]
pub struct CircularConvolver {
    height: usize,
    width: usize,
    kernel_height: usize,
    kernel_width: usize,
    fft: Fft2,
}

impl CircularConvolver {
    pub fn new(image: (usize, usize), kernel: (usize, usize)) -> Result<Self> {
        let (height, width) = image;
        let (kh, kw) = kernel;
        if height == 0 || width == 0 {
            return Err(Error::Shape("image must be non-empty".into()));
        }
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(Error::Shape(format!("kernel sides must be odd, got {kh}x{kw}")));
        }
        if kh > height || kw > width {
            return Err(Error::Shape(format!(
                "kernel {kh}x{kw} larger than image {height}x{width}"
            )));
        }
        Ok(Self {
            height,
            width,
            kernel_height: kh,
            kernel_width: kw,
            fft: Fft2::new(height, width),
        })
    }

    pub fn image_shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn kernel_shape(&self) -> (usize, usize) {
        (self.kernel_height, self.kernel_width)
    }

    pub fn image_len(&self) -> usize {
        self.height * self.width
    }

    pub fn kernel_len(&self) -> usize {
        self.kernel_height * self.kernel_width
    }

    /// Grid position of kernel tap `(a, b)`.
    fn wrap(&self, a: usize, b: usize) -> usize {
        let (ch, cw) = (self.kernel_height / 2, self.kernel_width / 2);
        let r = (a + self.height - ch) % self.height;
        let c = (b + self.width - cw) % self.width;
        r * self.width + c
    }

    fn kernel_spectrum(&self, kernel: &[f64]) -> Vec<Complex64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); self.image_len()];
        for a in 0..self.kernel_height {
            for b in 0..self.kernel_width {
                buf[self.wrap(a, b)] += kernel[a * self.kernel_width + b];
            }
        }
        self.fft.forward(&mut buf);
        buf
    }

    fn spectrum(&self, image: &[f64]) -> Vec<Complex64> {
        let mut buf = to_complex(image);
        self.fft.forward(&mut buf);
        buf
    }

    fn real_inverse(&self, mut buf: Vec<Complex64>) -> Vec<f64> {
        self.fft.inverse(&mut buf);
        let s = 1.0 / self.image_len() as f64;
        buf.iter().map(|c| c.re * s).collect()
    }

    fn check(&self, kernel: &[f64], image: &[f64]) -> Result<()> {
        check_len(self.kernel_len(), kernel.len())?;
        check_len(self.image_len(), image.len())
    }

    /// `θ ∗ v`.
    pub fn convolve(&self, kernel: &[f64], image: &[f64]) -> Result<Vec<f64>> {
        self.check(kernel, image)?;
        let k = self.kernel_spectrum(kernel);
        let mut v = self.spectrum(image);
        v.iter_mut().zip(&k).for_each(|(a, b)| *a *= b);
        Ok(self.real_inverse(v))
    }

    /// Adjoint in the image: circular correlation of `r` with the kernel.
    pub fn adjoint_image(&self, kernel: &[f64], r: &[f64]) -> Result<Vec<f64>> {
        self.check(kernel, r)?;
        let k = self.kernel_spectrum(kernel);
        let mut s = self.spectrum(r);
        s.iter_mut().zip(&k).for_each(|(a, b)| *a *= b.conj());
        Ok(self.real_inverse(s))
    }

    /// Kernel scale `s` that equalizes the two block constants of the blind
    /// model at `(image, kernel)`: `‖A(k)‖ / ‖V‖`, where `V` maps kernel taps
    /// to `w ∗ v`. Both norms come from power iteration.
    pub fn balanced_kernel_scale(&self, image: &[f64], kernel: &[f64]) -> Result<f64> {
        self.check(kernel, image)?;
        let a = power_iteration(self.image_len(), 1, |d| {
            self.adjoint_image(kernel, &self.convolve(kernel, d)?)
        })?;
        let v = power_iteration(self.kernel_len(), 2, |d| {
            self.adjoint_kernel(image, &self.convolve(d, image)?)
        })?;
        if !(a.value > 0.0 && v.value > 0.0) {
            return Err(Error::Parameter("cannot balance against a zero image or kernel".into()));
        }
        Ok((a.value / v.value).sqrt())
    }

    /// Adjoint in the kernel: `(v ⋆ r)` sampled at the kernel taps.
    pub fn adjoint_kernel(&self, image: &[f64], r: &[f64]) -> Result<Vec<f64>> {
        check_len(self.image_len(), image.len())?;
        check_len(self.image_len(), r.len())?;
        let v = self.spectrum(image);
        let mut s = self.spectrum(r);
        s.iter_mut().zip(&v).for_each(|(a, b)| *a *= b.conj());
        let corr = self.real_inverse(s);
        let mut out = vec![0.0; self.kernel_len()];
        for a in 0..self.kernel_height {
            for b in 0..self.kernel_width {
                out[a * self.kernel_width + b] = corr[self.wrap(a, b)];
            }
        }
        Ok(out)
    }
}

/// Blind deconvolution fidelity with `x = (v, θ)`: image block 1, kernel
/// block 2, effective kernel `s·θ` for a fixed parameterization scale `s`.
#[derive(Debug, Clone)]
pub struct BlindConvolution {
    conv: CircularConvolver,
    kernel_scale: f64,
    y: Vec<f64>,
    layout: BlockLayout,
}

impl BlindConvolution {
    pub fn new(image: (usize, usize), kernel: (usize, usize), y: Vec<f64>) -> Result<Self> {
        Self::with_scale(image, kernel, y, 1.0)
    }

    pub fn with_scale(
        image: (usize, usize),
        kernel: (usize, usize),
        y: Vec<f64>,
        kernel_scale: f64,
    ) -> Result<Self> {
        let conv = CircularConvolver::new(image, kernel)?;
        check_len(conv.image_len(), y.len())?;
        if !(kernel_scale > 0.0 && kernel_scale.is_finite()) {
            return Err(Error::Parameter("kernel scale must be positive".into()));
        }
        let layout = BlockLayout::new(vec![conv.image_len(), conv.kernel_len()])?;
        Ok(Self {
            conv,
            kernel_scale,
            y,
            layout,
        })
    }

    pub fn convolver(&self) -> &CircularConvolver {
        &self.conv
    }

    pub fn kernel_scale(&self) -> f64 {
        self.kernel_scale
    }

    /// Maps a physical kernel to the θ parameterization.
    pub fn kernel_to_theta(&self, kernel: &[f64]) -> Vec<f64> {
        kernel.iter().map(|k| k / self.kernel_scale).collect()
    }

    pub fn theta_to_kernel(&self, theta: &[f64]) -> Vec<f64> {
        theta.iter().map(|t| t * self.kernel_scale).collect()
    }

    pub fn forward(&self, theta: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.conv.convolve(&self.theta_to_kernel(theta), v)
    }

    pub fn pack(&self, v: &[f64], theta: &[f64]) -> Result<BlockVector> {
        check_len(self.conv.image_len(), v.len())?;
        check_len(self.conv.kernel_len(), theta.len())?;
        BlockVector::new(self.layout.clone(), [v, theta].concat())
    }

    /// `∇_v g = A(θ)ᵀ(A(θ)v - y)`.
    pub fn grad_v(&self, v: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        self.block_gradient(&self.pack(v, theta)?, 1)
    }

    /// `∇_θ g = s · (v ⋆ (A(θ)v - y))` on the kernel taps.
    pub fn grad_theta(&self, v: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        self.block_gradient(&self.pack(v, theta)?, 2)
    }
}

impl Fidelity for BlindConvolution {
    fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    fn roles(&self) -> BlockRoles {
        BlockRoles {
            image: 1,
            operator: Some(2),
        }
    }

    fn measurement(&self) -> &[f64] {
        &self.y
    }

    fn set_measurement(&mut self, y: Vec<f64>) -> Result<()> {
        check_len(self.conv.image_len(), y.len())?;
        self.y = y;
        Ok(())
    }

    fn predict(&self, x: &BlockVector) -> Result<Vec<f64>> {
        check_layout(&self.layout, x)?;
        self.forward(x.block(2)?, x.block(1)?)
    }

    fn block_apply(&self, x: &BlockVector, block: usize, d: &[f64]) -> Result<Vec<f64>> {
        check_layout(&self.layout, x)?;
        match block {
            1 => self.forward(x.block(2)?, d),
            2 => self.forward(d, x.block(1)?),
            _ => Err(Error::BlockIndex { index: block, blocks: 2 }),
        }
    }

    fn block_adjoint(&self, x: &BlockVector, block: usize, r: &[f64]) -> Result<Vec<f64>> {
        check_layout(&self.layout, x)?;
        match block {
            1 => self.conv.adjoint_image(&self.theta_to_kernel(x.block(2)?), r),
            2 => {
                let mut g = self.conv.adjoint_kernel(x.block(1)?, r)?;
                g.iter_mut().for_each(|v| *v *= self.kernel_scale);
                Ok(g)
            }
            _ => Err(Error::BlockIndex { index: block, blocks: 2 }),
        }
    }

    fn block_dependencies(&self, block: usize) -> Vec<usize> {
        match block {
            1 => vec![2],
            2 => vec![1],
            _ => vec![],
        }
    }
}

/// Non-blind deconvolution with a known kernel; a single image block.
#[derive(Debug, Clone)]
pub struct FixedConvolution {
    conv: CircularConvolver,
    kernel: Vec<f64>,
    y: Vec<f64>,
    layout: BlockLayout,
}

impl FixedConvolution {
    pub fn new(image: (usize, usize), kernel: Vec<f64>, kernel_shape: (usize, usize), y: Vec<f64>) -> Result<Self> {
        let conv = CircularConvolver::new(image, kernel_shape)?;
        check_len(conv.kernel_len(), kernel.len())?;
        check_len(conv.image_len(), y.len())?;
        let layout = BlockLayout::new(vec![conv.image_len()])?;
        Ok(Self {
            conv,
            kernel,
            y,
            layout,
        })
    }

    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    pub fn convolver(&self) -> &CircularConvolver {
        &self.conv
    }
}

impl Fidelity for FixedConvolution {
    fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    fn roles(&self) -> BlockRoles {
        BlockRoles {
            image: 1,
            operator: None,
        }
    }

    fn measurement(&self) -> &[f64] {
        &self.y
    }

    fn set_measurement(&mut self, y: Vec<f64>) -> Result<()> {
        check_len(self.conv.image_len(), y.len())?;
        self.y = y;
        Ok(())
    }

    fn predict(&self, x: &BlockVector) -> Result<Vec<f64>> {
        check_layout(&self.layout, x)?;
        self.conv.convolve(&self.kernel, x.block(1)?)
    }

    fn block_apply(&self, x: &BlockVector, block: usize, d: &[f64]) -> Result<Vec<f64>> {
        check_layout(&self.layout, x)?;
        if block != 1 {
            return Err(Error::BlockIndex { index: block, blocks: 1 });
        }
        self.conv.convolve(&self.kernel, d)
    }

    fn block_adjoint(&self, x: &BlockVector, block: usize, r: &[f64]) -> Result<Vec<f64>> {
        check_layout(&self.layout, x)?;
        if block != 1 {
            return Err(Error::BlockIndex { index: block, blocks: 1 });
        }
        self.conv.adjoint_image(&self.kernel, r)
    }

    fn block_dependencies(&self, _block: usize) -> Vec<usize> {
        vec![]
    }
}

/// Normalized isotropic Gaussian kernel of standard deviation `width`.
pub fn gaussian_kernel(shape: (usize, usize), width: f64) -> Vec<f64> {
    let (kh, kw) = shape;
    let (ch, cw) = ((kh / 2) as f64, (kw / 2) as f64);
    let mut k: Vec<f64> = (0..kh * kw)
        .map(|i| {
            let (a, b) = ((i / kw) as f64 - ch, (i % kw) as f64 - cw);
            (-(a * a + b * b) / (2.0 * width * width)).exp()
        })
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}
