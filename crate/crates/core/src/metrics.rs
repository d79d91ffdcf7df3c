//! Reconstruction quality metrics.

use crate::block::{distance, norm};
use crate::error::{Error, Result};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Relative error `‖ẑ - z‖ / ‖z‖`.
pub fn rmse(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::Length {
            expected: truth.len(),
            got: estimate.len(),
        });
    }
    let n = norm(truth);
    if n == 0.0 {
        return Err(Error::Parameter("rmse against a zero-norm reference".into()));
    }
    Ok(distance(estimate, truth) / n)
}

/// Side of the SSIM window for an `h × w` image: 11, or the largest odd
/// size that fits.
pub fn ssim_window(height: usize, width: usize) -> usize {
    let m = height.min(width).min(SSIM_WINDOW);
    if m % 2 == 0 {
        m - 1
    } else {
        m
    }
}

fn gaussian_window(side: usize) -> Vec<f64> {
    let c = (side / 2) as f64;
    let g: Vec<f64> = (0..side)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Separable valid-region filter of a row-major image.
fn filter(img: &[f64], h: usize, w: usize, win: &[f64]) -> Vec<f64> {
    let k = win.len();
    let (oh, ow) = (h + 1 - k, w + 1 - k);
    let mut rows = vec![0.0; h * ow];
    for r in 0..h {
        for c in 0..ow {
            rows[r * ow + c] = win.iter().enumerate().map(|(j, g)| g * img[r * w + c + j]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = win.iter().enumerate().map(|(j, g)| g * rows[(r + j) * ow + c]).sum();
        }
    }
    out
}

/// Mean structural similarity over a sliding Gaussian window (`σ = 1.5`)
/// with constants `(K1 L)²`, `(K2 L)²` for dynamic range `L`.
pub fn ssim(estimate: &[f64], truth: &[f64], height: usize, width: usize, data_range: f64) -> Result<f64> {
    let n = height * width;
    if estimate.len() != n || truth.len() != n {
        return Err(Error::Shape(format!(
            "ssim expects two {height}x{width} images, got lengths {} and {}",
            estimate.len(),
            truth.len()
        )));
    }
    if n == 0 {
        return Err(Error::Shape("ssim of an empty image".into()));
    }
    if !(data_range > 0.0 && data_range.is_finite()) {
        return Err(Error::Parameter(format!("data range must be positive, got {data_range}")));
    }
    let win = gaussian_window(ssim_window(height, width));
    let prod = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).collect::<Vec<_>>();
    let mx = filter(estimate, height, width, &win);
    let my = filter(truth, height, width, &win);
    let mxx = filter(&prod(estimate, estimate), height, width, &win);
    let myy = filter(&prod(truth, truth), height, width, &win);
    let mxy = filter(&prod(estimate, truth), height, width, &win);
    let c1 = (SSIM_K1 * data_range).powi(2);
    let c2 = (SSIM_K2 * data_range).powi(2);
    let total: f64 = (0..mx.len())
        .map(|i| {
            let (a, b) = (mx[i], my[i]);
            let vx = mxx[i] - a * a;
            let vy = myy[i] - b * b;
            let cxy = mxy[i] - a * b;
            ((2.0 * a * b + c1) * (2.0 * cxy + c2)) / ((a * a + b * b + c1) * (vx + vy + c2))
        })
        .sum();
    Ok(total / mx.len() as f64)
}

/// `max - min` of `v`, or 1 for a constant image.
pub fn dynamic_range(v: &[f64]) -> f64 {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        hi - lo
    } else {
        1.0
    }
}
