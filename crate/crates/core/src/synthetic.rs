//! Deterministic test images.

use rand::Rng;

use crate::rng;

/// Piecewise-constant image in `[0, 1]`: a background level plus a few
/// rectangles and one disk, placed from `seed`.
pub fn piecewise_image(height: usize, width: usize, seed: u64) -> Vec<f64> {
    let mut r = rng::stream(&[seed, 0x1aa6e]);
    let mut img = vec![0.2; height * width];
    let (h, w) = (height as f64, width as f64);
    for _ in 0..3 {
        let r0 = r.random_range(0.0..0.6) * h;
        let c0 = r.random_range(0.0..0.6) * w;
        let rh = r.random_range(0.2..0.4) * h;
        let cw = r.random_range(0.2..0.4) * w;
        let level = r.random_range(0.4..1.0);
        for i in 0..height {
            for j in 0..width {
                let (y, x) = (i as f64, j as f64);
                if y >= r0 && y < r0 + rh && x >= c0 && x < c0 + cw {
                    img[i * width + j] = level;
                }
            }
        }
    }
    let cy = r.random_range(0.3..0.7) * h;
    let cx = r.random_range(0.3..0.7) * w;
    let rad = r.random_range(0.15..0.25) * h.min(w);
    let level = r.random_range(0.0..0.3);
    for i in 0..height {
        for j in 0..width {
            let (dy, dx) = (i as f64 - cy, j as f64 - cx);
            if dy * dy + dx * dx <= rad * rad {
                img[i * width + j] = level;
            }
        }
    }
    img
}

/// Linear ramp from 0 (top-left) to 1 (bottom-right).
pub fn ramp_image(height: usize, width: usize) -> Vec<f64> {
    let denom = (height + width).saturating_sub(2).max(1) as f64;
    (0..height * width)
        .map(|k| (k / width + k % width) as f64 / denom)
        .collect()
}

/// I.i.d. uniform values in `[lo, hi)`.
pub fn uniform(n: usize, lo: f64, hi: f64, seed: u64) -> Vec<f64> {
    let mut r = rng::stream(&[seed, 0x0f1f]);
    (0..n).map(|_| r.random_range(lo..hi)).collect()
}

/// Smooth complex coil maps on an `h × w` grid, coil-major, as `(re, im)`
/// pairs: Gaussian magnitude bumps centred around the border with a linear
/// phase.
pub fn coil_maps(height: usize, width: usize, coils: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * coils * height * width);
    let (h, w) = (height as f64, width as f64);
    for c in 0..coils {
        let angle = 2.0 * std::f64::consts::PI * c as f64 / coils as f64;
        let cy = h / 2.0 + 0.5 * h * angle.sin();
        let cx = w / 2.0 + 0.5 * w * angle.cos();
        let spread = 0.6 * h.max(w);
        for i in 0..height {
            for j in 0..width {
                let (dy, dx) = (i as f64 - cy, j as f64 - cx);
                let mag = (-(dy * dy + dx * dx) / (2.0 * spread * spread)).exp();
                let phase = angle + 0.1 * (i as f64 - j as f64);
                out.push(mag * phase.cos());
                out.push(mag * phase.sin());
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn piecewise_is_deterministic_and_bounded() {
        let a = piecewise_image(16, 12, 3);
        assert_eq!(a, piecewise_image(16, 12, 3));
        assert!(a.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_ne!(a, piecewise_image(16, 12, 4));
    }

    #[test]
    fn ramp_corners() {
        let r = ramp_image(3, 4);
        assert_eq!(r[0], 0.0);
        assert_eq!(r[11], 1.0);
    }
}
