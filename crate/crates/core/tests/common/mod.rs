#![allow(dead_code)]

use bcpnp::block::{BlockSchedule, BlockVector, ScheduleKind};
use bcpnp::denoise::{Denoiser, ErrorSchedule, GaussianPrior};
use bcpnp::forward::{gaussian_kernel, synthesize, BlindConvolution, Fidelity};
use bcpnp::solver::{initialize, Mode, SolverConfig, StepSize};
use bcpnp::synthetic::piecewise_image;

pub const DESK_IMAGE: (usize, usize) = (8, 8);
pub const DESK_KERNEL: (usize, usize) = (3, 3);
pub const DESK_BALL: f64 = 2.0;
/// Kernel parameterization scale balancing the two block constants.
pub const DESK_KERNEL_SCALE: f64 = 0.15;

/// 8×8 blind deconvolution with Gaussian priors on both blocks.
pub struct Desk {
    pub model: BlindConvolution,
    pub denoisers: Vec<Denoiser>,
    pub truth: BlockVector,
    pub x0: BlockVector,
}

pub fn desk_priors() -> (GaussianPrior, f64, GaussianPrior, f64) {
    let (h, w) = DESK_IMAGE;
    let n = DESK_KERNEL.0 * DESK_KERNEL.1;
    let family: Vec<Vec<f64>> = [0.6, 0.8, 1.0, 1.2]
        .iter()
        .map(|&s| gaussian_kernel(DESK_KERNEL, s))
        .collect();
    let mean_k: Vec<f64> = (0..n).map(|j| family.iter().map(|k| k[j]).sum::<f64>() / 4.0).collect();
    let image_prior = GaussianPrior::new(vec![0.5; h * w], 0.1).unwrap();
    let s = DESK_KERNEL_SCALE;
    let mean_theta: Vec<f64> = mean_k.iter().map(|k| k / s).collect();
    let kernel_prior = GaussianPrior::new(mean_theta, 0.01 / (s * s)).unwrap();
    (image_prior, 0.08, kernel_prior, 0.05 / s)
}

/// `errors`, when given, wraps both block denoisers.
pub fn desk(errors: Option<ErrorSchedule>) -> Desk {
    let (h, w) = DESK_IMAGE;
    let v_true = piecewise_image(h, w, 7);
    let k_true = gaussian_kernel(DESK_KERNEL, 0.8);
    let mut model = BlindConvolution::with_scale(DESK_IMAGE, DESK_KERNEL, vec![0.0; h * w], DESK_KERNEL_SCALE)
            .unwrap();
    let truth = model.pack(&v_true, &model.kernel_to_theta(&k_true)).unwrap();
    synthesize(&mut model, &truth, 0.01, 11).unwrap();
    let theta0 = model.kernel_to_theta(&gaussian_kernel(DESK_KERNEL, 1.2));
    let x0 = initialize(&model, Some(&theta0)).unwrap();
    let (pv, sv, pk, sk) = desk_priors();
    let mut denoisers = vec![Denoiser::mmse(pv, sv).unwrap(), Denoiser::mmse(pk, sk).unwrap()];
    if let Some(e) = errors {
        denoisers = denoisers
            .into_iter()
            .enumerate()
            .map(|(i, d)| Denoiser::inexact(d, e.clone(), i + 1))
            .collect();
    }
    Desk {
        model,
        denoisers,
        truth,
        x0,
    }
}

pub fn desk_config(kind: ScheduleKind, seed: u64, iters: usize) -> SolverConfig {
    let mut cfg = SolverConfig::new(Mode::BcPnp, BlockSchedule::new(kind, 2, seed).unwrap());
    cfg.step = StepSize::Auto(0.9);
    cfg.ball_factor = DESK_BALL;
    cfg.max_iters = iters;
    // bound checks need the full trace, not an early stop
    cfg.stop_tol = 1e-300;
    cfg
}

pub fn assert_close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        assert!((x - y).abs() <= tol, "index {i}: {x} vs {y} (tol {tol})");
    }
}

pub fn fidelity_len(f: &dyn Fidelity) -> usize {
    f.layout().total()
}
