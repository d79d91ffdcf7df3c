//! Isotropic total-variation proximal map via the dual projection
//! fixed-point iteration.
//!
//! Solves `argmin_u ½‖u - z‖² + λ TV(u)` approximately on an `H × W` grid
//! with forward differences and Neumann boundaries. Not an MMSE denoiser.

pub const DEFAULT_TV_ITERATIONS: usize = 30;

const DUAL_STEP: f64 = 0.125;

fn gradient(u: &[f64], h: usize, w: usize, gx: &mut [f64], gy: &mut [f64]) {
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            gx[i] = if c + 1 < w { u[i + 1] - u[i] } else { 0.0 };
            gy[i] = if r + 1 < h { u[i + w] - u[i] } else { 0.0 };
        }
    }
}

/// Negative adjoint of [`gradient`].
fn divergence(px: &[f64], py: &[f64], h: usize, w: usize, out: &mut [f64]) {
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            let mut d = 0.0;
            if c + 1 < w {
                d += px[i];
            }
            if c > 0 {
                d -= px[i - 1];
            }
            if r + 1 < h {
                d += py[i];
            }
            if r > 0 {
                d -= py[i - w];
            }
            out[i] = d;
        }
    }
}

pub fn tv_prox(z: &[f64], height: usize, width: usize, lambda: f64, iterations: usize) -> Vec<f64> {
    let n = height * width;
    debug_assert_eq!(z.len(), n);
    if lambda <= 0.0 {
        return z.to_vec();
    }
    let mut px = vec![0.0; n];
    let mut py = vec![0.0; n];
    let mut div = vec![0.0; n];
    let mut gx = vec![0.0; n];
    let mut gy = vec![0.0; n];
    let mut arg = vec![0.0; n];
    for _ in 0..iterations {
        divergence(&px, &py, height, width, &mut div);
        for i in 0..n {
            arg[i] = div[i] - z[i] / lambda;
        }
        gradient(&arg, height, width, &mut gx, &mut gy);
        for i in 0..n {
            let mag = (gx[i] * gx[i] + gy[i] * gy[i]).sqrt();
            let denom = 1.0 + DUAL_STEP * mag;
            px[i] = (px[i] + DUAL_STEP * gx[i]) / denom;
            py[i] = (py[i] + DUAL_STEP * gy[i]) / denom;
        }
    }
    divergence(&px, &py, height, width, &mut div);
    z.iter().zip(&div).map(|(zi, d)| zi - lambda * d).collect()
}

pub fn total_variation(u: &[f64], height: usize, width: usize) -> f64 {
    let n = height * width;
    let mut gx = vec![0.0; n];
    let mut gy = vec![0.0; n];
    gradient(u, height, width, &mut gx, &mut gy);
    gx.iter().zip(&gy).map(|(a, b)| (a * a + b * b).sqrt()).sum()
}
