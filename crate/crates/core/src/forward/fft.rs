//! Two-dimensional DFT on row-major `H × W` grids.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Cached row/column plans for one grid size. Plans are immutable and
/// shareable across threads.
#[derive(Clone)]
pub struct Fft2 {
    height: usize,
    width: usize,
    rows_fwd: Arc<dyn Fft<f64>>,
    rows_inv: Arc<dyn Fft<f64>>,
    cols_fwd: Arc<dyn Fft<f64>>,
    cols_inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Fft2")
            .field("height", &self.height)
            .field("width", &self.width)
            .finish()
    }
}

impl Fft2 {
    pub fn new(height: usize, width: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            height,
            width,
            rows_fwd: planner.plan_fft_forward(width),
            rows_inv: planner.plan_fft_inverse(width),
            cols_fwd: planner.plan_fft_forward(height),
            cols_inv: planner.plan_fft_inverse(height),
        }
    }

    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Unnormalized forward transform in place.
    pub fn forward(&self, buf: &mut [Complex64]) {
        self.run(buf, false);
    }

    /// Unnormalized inverse transform in place (no `1/(HW)` factor).
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.run(buf, true);
    }

    /// Unitary forward transform (`1/sqrt(HW)` scaling).
    pub fn forward_unitary(&self, buf: &mut [Complex64]) {
        self.forward(buf);
        let s = 1.0 / (self.len() as f64).sqrt();
        buf.iter_mut().for_each(|c| *c *= s);
    }

    pub fn inverse_unitary(&self, buf: &mut [Complex64]) {
        self.inverse(buf);
        let s = 1.0 / (self.len() as f64).sqrt();
        buf.iter_mut().for_each(|c| *c *= s);
    }

    fn run(&self, buf: &mut [Complex64], inverse: bool) {
        let (h, w) = (self.height, self.width);
        assert_eq!(buf.len(), h * w, "fft buffer does not match grid");
        let (rows, cols) = if inverse {
            (&self.rows_inv, &self.cols_inv)
        } else {
            (&self.rows_fwd, &self.cols_fwd)
        };
        rows.process(buf);
        let mut col = vec![Complex64::new(0.0, 0.0); h];
        for c in 0..w {
            for r in 0..h {
                col[r] = buf[r * w + c];
            }
            cols.process(&mut col);
            for r in 0..h {
                buf[r * w + c] = col[r];
            }
        }
    }
}

pub fn to_complex(real: &[f64]) -> Vec<Complex64> {
    real.iter().map(|&r| Complex64::new(r, 0.0)).collect()
}

/// Reads interleaved `(re, im)` pairs.
pub fn from_pairs(pairs: &[f64]) -> Vec<Complex64> {
    pairs
        .chunks_exact(2)
        .map(|p| Complex64::new(p[0], p[1]))
        .collect()
}

pub fn to_pairs(values: &[Complex64]) -> Vec<f64> {
    values.iter().flat_map(|c| [c.re, c.im]).collect()
}
