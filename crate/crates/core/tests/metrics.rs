use bcpnp::metrics::{rmse, ssim};
use bcpnp::synthetic::ramp_image;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Mean SSIM by direct weighted sums over every full 11×11 window.
fn reference_ssim(x: &[f64], y: &[f64], h: usize, w: usize, range: f64) -> f64 {
    let k = 11;
    let g1: Vec<f64> = (0..k).map(|i| (-((i as f64 - 5.0).powi(2)) / 4.5).exp()).collect();
    let mut win = vec![0.0; k * k];
    for a in 0..k {
        for b in 0..k {
            win[a * k + b] = g1[a] * g1[b];
        }
    }
    let s: f64 = win.iter().sum();
    win.iter_mut().for_each(|v| *v /= s);
    let (c1, c2) = ((0.01 * range).powi(2), (0.03 * range).powi(2));
    let mut total = 0.0;
    let mut count = 0;
    for i in 0..=h - k {
        for j in 0..=w - k {
            let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for a in 0..k {
                for b in 0..k {
                    let wt = win[a * k + b];
                    let p = (i + a) * w + j + b;
                    mx += wt * x[p];
                    my += wt * y[p];
                }
            }
            for a in 0..k {
                for b in 0..k {
                    let wt = win[a * k + b];
                    let p = (i + a) * w + j + b;
                    sxx += wt * (x[p] - mx).powi(2);
                    syy += wt * (y[p] - my).powi(2);
                    sxy += wt * (x[p] - mx) * (y[p] - my);
                }
            }
            total += (2.0 * mx * my + c1) * (2.0 * sxy + c2) / ((mx * mx + my * my + c1) * (sxx + syy + c2));
            count += 1;
        }
    }
    total / count as f64
}

#[test]
fn ssim_matches_direct_windowed_sum() {
    let (h, w) = (64, 64);
    let clean = ramp_image(h, w);
    let normal = Normal::new(0.0, 0.1).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let noisy: Vec<f64> = clean.iter().map(|v| v + normal.sample(&mut r)).collect();
    let fast = ssim(&noisy, &clean, h, w, 1.0).unwrap();
    let slow = reference_ssim(&noisy, &clean, h, w, 1.0);
    assert!((fast - slow).abs() < 1e-6, "{fast} vs {slow}");
    assert!(fast < 1.0);
    assert!((ssim(&clean, &clean, h, w, 1.0).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn metric_errors() {
    assert!(ssim(&[0.0; 4], &[0.0; 5], 2, 2, 1.0).is_err());
    assert!(ssim(&[0.0; 4], &[0.0; 4], 2, 2, 0.0).is_err());
    assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
}
