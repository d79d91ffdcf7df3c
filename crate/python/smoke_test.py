"""Smoke test for the bcpnp_py extension.

Build and install first:
    pip install --no-build-isolation -e crates/py
"""

import math

import bcpnp_py as bp


def close(a, b, tol):
    assert abs(a - b) <= tol * max(1.0, abs(b)), (a, b)


def priors():
    g = bp.GaussianPrior([0.5, -1.0], 2.0)
    sigma = 0.7
    z = [1.2, 0.3]
    d = g.denoise(sigma, z)
    t = g.tweedie_gradient(sigma, z)
    # Tweedie: D(z) = z - σ² ∇(-log p_σ)(z)
    for di, zi, ti in zip(d, z, t):
        close(di, zi - sigma**2 * ti, 1e-12)
    s = 2.0 / (2.0 + sigma**2)
    close(d[0], 0.5 + s * (1.2 - 0.5), 1e-12)

    m = bp.GmmPrior([0.3, 0.7], [[-1.0], [2.0]], [0.5, 1.0])
    h = 1e-5
    fd = (m.noisy_neg_log_density(0.4, [0.2 + h]) - m.noisy_neg_log_density(0.4, [0.2 - h])) / (2 * h)
    close(m.tweedie_gradient(0.4, [0.2])[0], fd, 1e-6)


def linear_solve():
    rows, sizes = 12, [3, 2]
    a = [math.sin(1.3 * i + 0.7) for i in range(rows * sum(sizes))]
    model = bp.Model.linear(a, rows, sizes)
    truth = [[0.5, -0.2, 0.1], [0.3, -0.4]]
    model.synthesize(truth, noise=0.0, seed=1)
    dens = [bp.Denoiser.gaussian(bp.GaussianPrior([0.0] * n, 1.0), 0.1) for n in sizes]
    x0 = [[0.0] * n for n in sizes]
    x0[0][0] = 1.0
    x0[1][0] = 1.0
    res = bp.solve(model, dens, x0, max_iters=400, stop_tol=1e-12, truth=truth)
    cert = model.certify(x0)
    close(res.gamma, 0.9 / cert["max"], 1e-12)
    tr = res.trace()
    assert len(tr["f"]) == res.iterations
    # exact Gaussian denoisers: f decreases along the sequential run
    f = [v for v in tr["f"] if v is not None]
    assert all(b <= a + 1e-12 for a, b in zip(f, f[1:]))
    assert res.trace_csv().startswith("iter,block,f,g,h,Gnorm2")
    c = bp.theory_constants(res.gamma, cert["max"], cert["full"], 0.0, 2)
    close(c["alpha"], 1 / 0.9, 1e-12)


def blind_deblur():
    shape, kshape = (16, 16), (5, 5)
    img = bp.piecewise_image(*shape, seed=2)
    k_true = bp.gaussian_kernel(kshape, 1.0)
    k0 = bp.gaussian_kernel(kshape, 1.8)
    probe = bp.Model.blind_convolution(shape, kshape)
    y = probe.synthesize([img, k_true], noise=0.005, seed=3)
    assert len(y) == len(img)
    # solve in θ = k / s with s balancing the two block constants
    s = probe.balanced_kernel_scale(probe.initialize(k0)[0], k0)
    model = bp.Model.blind_convolution(shape, kshape, scale=s)
    model.set_measurement(y)
    t0 = model.kernel_to_theta(k0)
    dens = [
        bp.Denoiser.tv(0.001, *shape, iterations=30),
        bp.Denoiser.gaussian(bp.GaussianPrior(t0, 1e-2 / s**2), 0.01 / s),
    ]
    x0 = model.initialize(t0)
    truth = [img, model.kernel_to_theta(k_true)]
    out = {}
    for mode in ["bc-pnp", "pnp-ista"]:
        r = bp.solve(model, dens, x0, mode=mode, max_iters=300, ball_factor=2.0, objective=False, truth=truth)
        assert r.termination in ("tolerance", "max-iters")
        out[mode] = (bp.rmse(r.x[0], img), bp.rmse(model.theta_to_kernel(r.x[1]), k_true))
    assert out["bc-pnp"][0] < bp.rmse(x0[0], img)
    assert out["bc-pnp"][0] < out["pnp-ista"][0]
    assert out["bc-pnp"][1] < bp.rmse(k0, k_true)
    close(bp.ssim(img, img, *shape), 1.0, 1e-12)
    return out


def inexact():
    d = bp.Denoiser.identity().with_errors("constant", value=0.25, seed=7)
    z = [1.0, 2.0, 3.0]
    out = d.apply(z, k=4)
    close(math.dist(out, z), 0.25, 1e-12)
    assert d.epsilon(10) == 0.25
    try:
        bp.Denoiser.soft_threshold(-1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("negative threshold accepted")


if __name__ == "__main__":
    priors()
    linear_solve()
    print("blind rmse", blind_deblur())
    inexact()
    print("smoke test passed")
