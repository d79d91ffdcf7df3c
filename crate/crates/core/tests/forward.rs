use bcpnp::block::{dot, norm, BlockLayout, BlockVector};
use bcpnp::forward::{
    add_noise, estimate_block_lipschitz, gaussian_kernel, synthesize, BallRadii, BlindConvolution,
    CircularConvolver, Fidelity, LinearModel, MultiCoil,
};
use bcpnp::solver::initialize;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(n: usize, r: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| r.random_range(-1.0..1.0)).collect()
}

/// `out[p] = Σ_{a,b} k[a,b] v[p - (a - ch, b - cw)]` with wraparound.
fn naive_convolve(h: usize, w: usize, kh: usize, kw: usize, k: &[f64], v: &[f64]) -> Vec<f64> {
    let (ch, cw) = ((kh / 2) as isize, (kw / 2) as isize);
    let mut out = vec![0.0; h * w];
    for i in 0..h as isize {
        for j in 0..w as isize {
            let mut s = 0.0;
            for a in 0..kh as isize {
                for b in 0..kw as isize {
                    let r = (i - (a - ch)).rem_euclid(h as isize) as usize;
                    let c = (j - (b - cw)).rem_euclid(w as isize) as usize;
                    s += k[(a * kw as isize + b) as usize] * v[r * w + c];
                }
            }
            out[(i * w as isize + j) as usize] = s;
        }
    }
    out
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&d) / norm(b).max(1e-300)
}

#[test]
fn convolution_matches_naive_sum() {
    let mut r = ChaCha8Rng::seed_from_u64(1);
    for &(h, w, kh, kw) in &[(4, 4, 3, 3), (8, 6, 5, 3), (5, 7, 5, 7), (6, 6, 1, 1)] {
        let c = CircularConvolver::new((h, w), (kh, kw)).unwrap();
        let k = random(kh * kw, &mut r);
        let v = random(h * w, &mut r);
        let fast = c.convolve(&k, &v).unwrap();
        assert!(max_abs_diff(&fast, &naive_convolve(h, w, kh, kw, &k, &v)) < 1e-10);
    }
}

#[test]
fn convolution_adjoints_match_naive_transpose() {
    let mut r = ChaCha8Rng::seed_from_u64(2);
    let (h, w, kh, kw) = (6, 5, 3, 5);
    let c = CircularConvolver::new((h, w), (kh, kw)).unwrap();
    let k = random(kh * kw, &mut r);
    let v = random(h * w, &mut r);
    let res = random(h * w, &mut r);
    // column j of the image operator is the convolution of a unit vector
    let naive_img: Vec<f64> = (0..h * w)
        .map(|j| {
            let mut e = vec![0.0; h * w];
            e[j] = 1.0;
            dot(&naive_convolve(h, w, kh, kw, &k, &e), &res)
        })
        .collect();
    assert!(max_abs_diff(&c.adjoint_image(&k, &res).unwrap(), &naive_img) < 1e-10);
    let naive_ker: Vec<f64> = (0..kh * kw)
        .map(|j| {
            let mut e = vec![0.0; kh * kw];
            e[j] = 1.0;
            dot(&naive_convolve(h, w, kh, kw, &e, &v), &res)
        })
        .collect();
    assert!(max_abs_diff(&c.adjoint_kernel(&v, &res).unwrap(), &naive_ker) < 1e-10);
    // inner-product form of the same property
    let lhs = dot(&c.convolve(&k, &v).unwrap(), &res);
    let rhs = dot(&v, &c.adjoint_image(&k, &res).unwrap());
    assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
}

#[test]
fn convolution_is_symmetric_for_matching_shapes() {
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let c = CircularConvolver::new((5, 7), (5, 7)).unwrap();
    let a = random(35, &mut r);
    let b = random(35, &mut r);
    assert!(max_abs_diff(&c.convolve(&a, &b).unwrap(), &c.convolve(&b, &a).unwrap()) < 1e-12);
}

fn fd_gradient(f: &dyn Fidelity, x: &BlockVector, h: f64) -> Vec<f64> {
    (0..x.layout().total())
        .map(|j| {
            let mut p = x.data().to_vec();
            let mut m = x.data().to_vec();
            p[j] += h;
            m[j] -= h;
            let gp = f.value(&BlockVector::new(x.layout().clone(), p).unwrap()).unwrap();
            let gm = f.value(&BlockVector::new(x.layout().clone(), m).unwrap()).unwrap();
            (gp - gm) / (2.0 * h)
        })
        .collect()
}

fn blind_8x8(r: &mut ChaCha8Rng, scale: f64) -> BlindConvolution {
    BlindConvolution::with_scale((8, 8), (3, 3), random(64, r), scale).unwrap()
}

fn multicoil_8x8(r: &mut ChaCha8Rng) -> MultiCoil {
    let mask: Vec<bool> = (0..64).map(|i| i % 3 != 1).collect();
    let m = mask.iter().filter(|b| **b).count();
    MultiCoil::new((8, 8), 2, &mask, random(2 * 2 * m, r)).unwrap()
}

#[test]
fn blind_gradients_match_finite_differences() {
    let mut r = ChaCha8Rng::seed_from_u64(4);
    for scale in [1.0, 0.2] {
        let model = blind_8x8(&mut r, scale);
        for _ in 0..5 {
            let v = random(64, &mut r);
            let t = random(9, &mut r);
            let x = model.pack(&v, &t).unwrap();
            let fd = fd_gradient(&model, &x, 1e-6);
            assert!(rel_err(&model.grad_v(&v, &t).unwrap(), &fd[..64]) <= 1e-5);
            assert!(rel_err(&model.grad_theta(&v, &t).unwrap(), &fd[64..]) <= 1e-5);
        }
    }
}

#[test]
fn multicoil_gradients_match_finite_differences() {
    let mut r = ChaCha8Rng::seed_from_u64(5);
    let model = multicoil_8x8(&mut r);
    for _ in 0..5 {
        let v = random(128, &mut r);
        let t = random(256, &mut r);
        let x = model.pack(&v, &t).unwrap();
        let fd = fd_gradient(&model, &x, 1e-6);
        assert!(rel_err(&model.grad_v(&v, &t).unwrap(), &fd[..128]) <= 1e-5);
        assert!(rel_err(&model.grad_theta(&v, &t).unwrap(), &fd[128..]) <= 1e-5);
    }
}

#[test]
fn gradients_vanish_at_consistent_pairs() {
    let mut r = ChaCha8Rng::seed_from_u64(6);
    let v = random(64, &mut r);
    let t = gaussian_kernel((3, 3), 0.9);
    let mut model = blind_8x8(&mut r, 1.0);
    let truth = model.pack(&v, &t).unwrap();
    synthesize(&mut model, &truth, 0.0, 0).unwrap();
    assert_eq!(model.value(&truth).unwrap(), 0.0);
    assert!(norm(&model.grad_v(&v, &t).unwrap()) < 1e-13);
    assert!(norm(&model.grad_theta(&v, &t).unwrap()) < 1e-13);
    // g is invariant along (αv, θ/α)
    let a = 1.7;
    let sv: Vec<f64> = v.iter().map(|x| a * x).collect();
    let st: Vec<f64> = t.iter().map(|x| x / a).collect();
    assert!(model.value(&model.pack(&sv, &st).unwrap()).unwrap() < 1e-25);
    let y = random(64, &mut r);
    model.set_measurement(y).unwrap();
    let g1 = model.value(&truth).unwrap();
    let g2 = model.value(&model.pack(&sv, &st).unwrap()).unwrap();
    assert!((g1 - g2).abs() < 1e-12 * g1);
    assert!(g1 >= 0.0);
}

/// Unitary DFT of an `h × w` complex array by the direct double sum.
fn naive_dft(h: usize, w: usize, x: &[Complex64]) -> Vec<Complex64> {
    let s = 1.0 / ((h * w) as f64).sqrt();
    let mut out = vec![Complex64::new(0.0, 0.0); h * w];
    for u in 0..h {
        for v in 0..w {
            let mut acc = Complex64::new(0.0, 0.0);
            for a in 0..h {
                for b in 0..w {
                    let ph = -2.0 * std::f64::consts::PI * ((u * a) as f64 / h as f64 + (v * b) as f64 / w as f64);
                    acc += x[a * w + b] * Complex64::from_polar(1.0, ph);
                }
            }
            out[u * w + v] = acc * s;
        }
    }
    out
}

fn pairs(v: &[f64]) -> Vec<Complex64> {
    v.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect()
}

#[test]
fn multicoil_forward_matches_naive_dft() {
    let mut r = ChaCha8Rng::seed_from_u64(7);
    let (h, w, c) = (4, 5, 2);
    let mask: Vec<bool> = (0..h * w).map(|i| i % 2 == 0 || i == 3).collect();
    let idx: Vec<usize> = (0..h * w).filter(|&i| mask[i]).collect();
    let model = MultiCoil::new((h, w), c, &mask, vec![0.0; 2 * c * idx.len()]).unwrap();
    let v = random(2 * h * w, &mut r);
    let t = random(2 * c * h * w, &mut r);
    let fast = pairs(&model.forward(&t, &v).unwrap());
    let (vc, tc) = (pairs(&v), pairs(&t));
    let mut naive = Vec::new();
    for coil in 0..c {
        let prod: Vec<Complex64> = (0..h * w).map(|p| tc[coil * h * w + p] * vc[p]).collect();
        let f = naive_dft(h, w, &prod);
        naive.extend(idx.iter().map(|&i| f[i]));
    }
    let err = fast.iter().zip(&naive).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    assert!(err < 1e-10);

    // adjoint consistency in both blocks
    let x = model.pack(&v, &t).unwrap();
    let res = random(2 * c * idx.len(), &mut r);
    let dv = random(2 * h * w, &mut r);
    let lhs = dot(&model.block_apply(&x, 1, &dv).unwrap(), &res);
    let rhs = dot(&dv, &model.block_adjoint(&x, 1, &res).unwrap());
    assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
    let dt = random(2 * c * h * w, &mut r);
    let lhs = dot(&model.block_apply(&x, 2, &dt).unwrap(), &res);
    let rhs = dot(&dt, &model.block_adjoint(&x, 2, &res).unwrap());
    assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
}

#[test]
fn linear_lipschitz_matches_dense_svd() {
    let mut r = ChaCha8Rng::seed_from_u64(8);
    let a = random(64, &mut r);
    let model = LinearModel::new(a.clone(), 8, BlockLayout::new(vec![8]).unwrap(), vec![0.0; 8]).unwrap();
    let x = BlockVector::new(model.layout().clone(), random(8, &mut r)).unwrap();
    let est = estimate_block_lipschitz(&model, &x, &BallRadii::around(&x, 10.0).unwrap()).unwrap();
    let smax = DMatrix::from_row_slice(8, 8, &a).singular_values().max();
    assert!((est.blocks[0] - smax * smax).abs() <= 1e-3 * smax * smax);
    assert!((est.full - smax * smax).abs() <= 1e-3 * smax * smax);
}

#[test]
fn lipschitz_of_identity_operators() {
    let mut r = ChaCha8Rng::seed_from_u64(9);
    let mut delta = vec![0.0; 9];
    delta[4] = 1.0;
    let model = BlindConvolution::new((8, 8), (3, 3), vec![0.0; 64]).unwrap();
    let x = model.pack(&random(64, &mut r), &delta).unwrap();
    let est = estimate_block_lipschitz(&model, &x, &BallRadii::around(&x, 1.0).unwrap()).unwrap();
    assert!((est.blocks[0] - 1.0).abs() < 1e-3);

    let mask = vec![true; 64];
    let coil = MultiCoil::new((8, 8), 1, &mask, vec![0.0; 128]).unwrap();
    let ones: Vec<f64> = (0..64).flat_map(|_| [1.0, 0.0]).collect();
    let x = coil.pack(&random(128, &mut r), &ones).unwrap();
    let est = estimate_block_lipschitz(&coil, &x, &BallRadii::around(&x, 1.0).unwrap()).unwrap();
    assert!((est.blocks[0] - 1.0).abs() < 1e-3);
}

#[test]
fn zero_dependency_block_cannot_be_certified() {
    let model = BlindConvolution::new((4, 4), (3, 3), vec![0.0; 16]).unwrap();
    let x = model.pack(&[1.0; 16], &[0.0; 9]).unwrap();
    let radii = BallRadii::around(&x, 2.0).unwrap();
    assert!(estimate_block_lipschitz(&model, &x, &radii).is_err());
}

#[test]
fn synthesis_noise() {
    let clean = vec![0.25; 10_000];
    assert_eq!(add_noise(&clean, 0.0, 1).unwrap(), clean);
    let a = add_noise(&clean, 0.3, 42).unwrap();
    assert_eq!(a, add_noise(&clean, 0.3, 42).unwrap());
    let e2: f64 = a.iter().zip(&clean).map(|(x, c)| (x - c).powi(2)).sum::<f64>() / 1e4;
    assert!((e2 / 0.09 - 1.0).abs() < 0.05, "{e2}");
    assert!(add_noise(&clean, -1.0, 0).is_err());
}

#[test]
fn adjoint_initialization() {
    let mut r = ChaCha8Rng::seed_from_u64(10);
    // delta kernel: image block equals y
    let y = random(36, &mut r);
    let model = BlindConvolution::new((6, 6), (3, 3), y.clone()).unwrap();
    let mut delta = vec![0.0; 9];
    delta[4] = 1.0;
    let x0 = initialize(&model, Some(&delta)).unwrap();
    assert!(max_abs_diff(x0.block(1).unwrap(), &y) < 1e-14);
    assert_eq!(x0.block(2).unwrap(), &delta[..]);
    assert!(initialize(&model, None).is_err());

    // random kernel: naive correlation
    let t = random(9, &mut r);
    let x0 = initialize(&model, Some(&t)).unwrap();
    let naive: Vec<f64> = (0..36)
        .map(|j| {
            let mut e = vec![0.0; 36];
            e[j] = 1.0;
            dot(&naive_convolve(6, 6, 3, 3, &t, &e), &y)
        })
        .collect();
    assert!(max_abs_diff(x0.block(1).unwrap(), &naive) < 1e-10);

    // unitary single coil: image block is the inverse unitary DFT of y
    let (h, w) = (4, 4);
    let yc = random(2 * h * w, &mut r);
    let coil = MultiCoil::new((h, w), 1, &vec![true; h * w], yc.clone()).unwrap();
    let ones: Vec<f64> = (0..h * w).flat_map(|_| [1.0, 0.0]).collect();
    let x0 = initialize(&coil, Some(&ones)).unwrap();
    let conj: Vec<Complex64> = pairs(&yc).iter().map(|c| c.conj()).collect();
    let back: Vec<f64> = naive_dft(h, w, &conj).iter().flat_map(|c| [c.re, -c.im]).collect();
    assert!(max_abs_diff(x0.block(1).unwrap(), &back) < 1e-10);
}
