//! Python bindings. Block vectors cross the boundary as lists of lists,
//! one list per block, in block order.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use bcpnp::denoise::{implicit_reg_value, GaussianPrior as CoreGaussian, GmmPrior as CoreGmm};
use bcpnp::forward::gaussian_kernel as core_gaussian_kernel;
use bcpnp::forward::synthesize;
use bcpnp::solver::{certify, initialize, TraceOptions};
use bcpnp::{
    BlindConvolution, BlockLayout, BlockSchedule, BlockVector, Denoiser as CoreDenoiser, ErrorKind, ErrorSchedule,
    Fidelity, FixedConvolution, LinearModel, Mode, MmsePrior, MultiCoil, Problem, ScheduleKind, SolverConfig,
    StepSize, TheoryConstants,
};

fn err(e: bcpnp::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn blocks_of(x: &BlockVector) -> Vec<Vec<f64>> {
    (1..=x.layout().blocks()).map(|i| x.block(i).unwrap().to_vec()).collect()
}

fn vector(blocks: &[Vec<f64>]) -> PyResult<BlockVector> {
    BlockVector::from_blocks(blocks).map_err(err)
}

#[pyclass(name = "GaussianPrior", module = "bcpnp_py", skip_from_py_object)]
#[derive(Clone)]
struct PyGaussianPrior(CoreGaussian);

#[pymethods]
impl PyGaussianPrior {
    #[new]
    fn new(mean: Vec<f64>, variance: f64) -> PyResult<Self> {
        CoreGaussian::new(mean, variance).map(Self).map_err(err)
    }

    #[getter]
    fn mean(&self) -> Vec<f64> {
        self.0.mean().to_vec()
    }

    #[getter]
    fn variance(&self) -> f64 {
        self.0.variance()
    }

    /// Posterior mean `E[x | x + σn = z]`.
    fn denoise(&self, sigma: f64, z: Vec<f64>) -> PyResult<Vec<f64>> {
        MmsePrior::from(self.0.clone()).denoise(sigma, &z).map_err(err)
    }

    /// Negative score `-∇ log p_σ(z)` of the noisy marginal.
    fn tweedie_gradient(&self, sigma: f64, z: Vec<f64>) -> PyResult<Vec<f64>> {
        MmsePrior::from(self.0.clone()).tweedie_gradient(sigma, &z).map_err(err)
    }

    /// Implicit regularizer `h(x)` for step `gamma`.
    fn implicit_regularizer(&self, sigma: f64, gamma: f64, x: Vec<f64>) -> PyResult<f64> {
        implicit_reg_value(&self.0, sigma, gamma, &x).map_err(err)
    }
}

#[pyclass(name = "GmmPrior", module = "bcpnp_py", skip_from_py_object)]
#[derive(Clone)]
struct PyGmmPrior(CoreGmm);

#[pymethods]
impl PyGmmPrior {
    #[new]
    fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<f64>) -> PyResult<Self> {
        CoreGmm::new(weights, means, variances).map(Self).map_err(err)
    }

    fn denoise(&self, sigma: f64, z: Vec<f64>) -> PyResult<Vec<f64>> {
        MmsePrior::from(self.0.clone()).denoise(sigma, &z).map_err(err)
    }

    fn tweedie_gradient(&self, sigma: f64, z: Vec<f64>) -> PyResult<Vec<f64>> {
        MmsePrior::from(self.0.clone()).tweedie_gradient(sigma, &z).map_err(err)
    }

    /// `-log p_σ(z)` of the noisy marginal.
    fn noisy_neg_log_density(&self, sigma: f64, z: Vec<f64>) -> PyResult<f64> {
        MmsePrior::from(self.0.clone()).noisy_neg_log_density(sigma, &z).map_err(err)
    }
}

#[pyclass(name = "Denoiser", module = "bcpnp_py", skip_from_py_object)]
#[derive(Clone)]
struct PyDenoiser(CoreDenoiser);

#[pymethods]
impl PyDenoiser {
    #[staticmethod]
    fn identity() -> Self {
        Self(CoreDenoiser::Identity)
    }

    #[staticmethod]
    fn soft_threshold(lam: f64) -> PyResult<Self> {
        CoreDenoiser::soft_threshold(lam).map(Self).map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (lam, height, width, iterations = bcpnp::denoise::DEFAULT_TV_ITERATIONS))]
    fn tv(lam: f64, height: usize, width: usize, iterations: usize) -> PyResult<Self> {
        CoreDenoiser::tv(lam, iterations, height, width).map(Self).map_err(err)
    }

    #[staticmethod]
    fn gaussian(prior: &PyGaussianPrior, sigma: f64) -> PyResult<Self> {
        CoreDenoiser::mmse(prior.0.clone(), sigma).map(Self).map_err(err)
    }

    #[staticmethod]
    fn gmm(prior: &PyGmmPrior, sigma: f64) -> PyResult<Self> {
        CoreDenoiser::mmse(prior.0.clone(), sigma).map(Self).map_err(err)
    }

    /// Copy with a perturbation of norm `ε_k` added at iteration `k`.
    /// `kind` is "zero", "constant", "square-summable" or "custom".
    #[pyo3(signature = (kind, value = 0.0, values = None, seed = 0, block = 1))]
    fn with_errors(&self, kind: &str, value: f64, values: Option<Vec<f64>>, seed: u64, block: usize) -> PyResult<Self> {
        let k = match kind {
            "zero" => ErrorKind::Zero,
            "constant" => ErrorKind::Constant(value),
            "square-summable" => ErrorKind::SquareSummable(value),
            "custom" => ErrorKind::Custom(values.ok_or_else(|| PyValueError::new_err("custom errors need values"))?),
            other => return Err(PyValueError::new_err(format!("unknown error kind {other:?}"))),
        };
        let s = ErrorSchedule::new(k, seed).map_err(err)?;
        Ok(Self(CoreDenoiser::inexact(self.0.clone(), s, block)))
    }

    #[pyo3(signature = (z, k = 1))]
    fn apply(&self, z: Vec<f64>, k: usize) -> PyResult<Vec<f64>> {
        self.0.apply(&z, k).map_err(err)
    }

    fn epsilon(&self, k: usize) -> f64 {
        self.0.epsilon(k)
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.0)
    }
}

enum ModelKind {
    Blind(BlindConvolution),
    Fixed(FixedConvolution),
    Coil(MultiCoil),
    Linear(LinearModel),
}

#[pyclass(name = "Model", module = "bcpnp_py")]
struct PyModel(ModelKind);

impl PyModel {
    fn fid(&self) -> &dyn Fidelity {
        match &self.0 {
            ModelKind::Blind(m) => m,
            ModelKind::Fixed(m) => m,
            ModelKind::Coil(m) => m,
            ModelKind::Linear(m) => m,
        }
    }

    fn fid_mut(&mut self) -> &mut dyn Fidelity {
        match &mut self.0 {
            ModelKind::Blind(m) => m,
            ModelKind::Fixed(m) => m,
            ModelKind::Coil(m) => m,
            ModelKind::Linear(m) => m,
        }
    }

    fn blind(&self) -> PyResult<&BlindConvolution> {
        match &self.0 {
            ModelKind::Blind(m) => Ok(m),
            _ => Err(PyValueError::new_err("only defined for blind convolution")),
        }
    }
}

#[pymethods]
impl PyModel {
    /// Blocks `[image, θ]` with `kernel = scale · θ`. The measurement starts
    /// at zero; call `synthesize` or `set_measurement`.
    #[staticmethod]
    #[pyo3(signature = (image, kernel, scale = 1.0))]
    fn blind_convolution(image: (usize, usize), kernel: (usize, usize), scale: f64) -> PyResult<Self> {
        let m = BlindConvolution::with_scale(image, kernel, vec![0.0; image.0 * image.1], scale).map_err(err)?;
        Ok(Self(ModelKind::Blind(m)))
    }

    #[staticmethod]
    fn fixed_convolution(image: (usize, usize), kernel: Vec<f64>, kernel_shape: (usize, usize)) -> PyResult<Self> {
        let m = FixedConvolution::new(image, kernel, kernel_shape, vec![0.0; image.0 * image.1]).map_err(err)?;
        Ok(Self(ModelKind::Fixed(m)))
    }

    /// Blocks `[image, coil maps]`, complex values as interleaved re/im.
    #[staticmethod]
    fn multi_coil(image: (usize, usize), coils: usize, mask: Vec<bool>) -> PyResult<Self> {
        let sampled = mask.iter().filter(|b| **b).count();
        let m = MultiCoil::new(image, coils, &mask, vec![0.0; 2 * coils * sampled]).map_err(err)?;
        Ok(Self(ModelKind::Coil(m)))
    }

    /// `y = A x` with a row-major matrix split into column blocks.
    #[staticmethod]
    fn linear(matrix: Vec<f64>, rows: usize, blocks: Vec<usize>) -> PyResult<Self> {
        let layout = BlockLayout::new(blocks).map_err(err)?;
        let m = LinearModel::new(matrix, rows, layout, vec![0.0; rows]).map_err(err)?;
        Ok(Self(ModelKind::Linear(m)))
    }

    #[getter]
    fn block_sizes(&self) -> Vec<usize> {
        self.fid().layout().sizes().to_vec()
    }

    #[getter]
    fn measurement(&self) -> Vec<f64> {
        self.fid().measurement().to_vec()
    }

    fn set_measurement(&mut self, y: Vec<f64>) -> PyResult<()> {
        self.fid_mut().set_measurement(y).map_err(err)
    }

    /// Sets `y = A(truth) + noise` and returns it.
    #[pyo3(signature = (truth, noise = 0.0, seed = 0))]
    fn synthesize(&mut self, truth: Vec<Vec<f64>>, noise: f64, seed: u64) -> PyResult<Vec<f64>> {
        let t = vector(&truth)?;
        synthesize(self.fid_mut(), &t, noise, seed).map_err(err)
    }

    fn predict(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        self.fid().predict(&vector(&x)?).map_err(err)
    }

    /// Data fidelity `½‖y - A(x)‖²`.
    fn value(&self, x: Vec<Vec<f64>>) -> PyResult<f64> {
        self.fid().value(&vector(&x)?).map_err(err)
    }

    fn gradient(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        Ok(blocks_of(&self.fid().gradient(&vector(&x)?).map_err(err)?))
    }

    /// Adjoint start `[A(θ₀)ᴴ y, θ₀]`.
    #[pyo3(signature = (theta0 = None))]
    fn initialize(&self, theta0: Option<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        Ok(blocks_of(&initialize(self.fid(), theta0.as_deref()).map_err(err)?))
    }

    /// Block Lipschitz constants certified on a ball around `x`.
    #[pyo3(signature = (x, ball_factor = bcpnp::solver::DEFAULT_BALL_FACTOR))]
    fn certify<'py>(&self, py: Python<'py>, x: Vec<Vec<f64>>, ball_factor: f64) -> PyResult<Bound<'py, PyDict>> {
        let (est, radii) = certify(self.fid(), &vector(&x)?, ball_factor).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("blocks", est.blocks)?;
        d.set_item("max", est.max)?;
        d.set_item("full", est.full)?;
        d.set_item("converged", est.converged)?;
        d.set_item("radii", radii.0)?;
        Ok(d)
    }

    fn kernel_to_theta(&self, kernel: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.blind()?.kernel_to_theta(&kernel))
    }

    fn theta_to_kernel(&self, theta: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.blind()?.theta_to_kernel(&theta))
    }

    /// Kernel scale balancing the two block constants at `(image, kernel)`.
    fn balanced_kernel_scale(&self, image: Vec<f64>, kernel: Vec<f64>) -> PyResult<f64> {
        self.blind()?.convolver().balanced_kernel_scale(&image, &kernel).map_err(err)
    }
}

#[pyclass(name = "SolveResult", module = "bcpnp_py")]
struct PySolveResult(bcpnp::SolveResult);

#[pymethods]
impl PySolveResult {
    #[getter]
    fn x(&self) -> Vec<Vec<f64>> {
        blocks_of(&self.0.x)
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.0.gamma
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.0.trace.len()
    }

    /// "tolerance" or "max-iters".
    #[getter]
    fn termination(&self) -> &'static str {
        match self.0.termination {
            bcpnp::solver::Termination::Tolerance => "tolerance",
            bcpnp::solver::Termination::MaxIters => "max-iters",
        }
    }

    #[getter]
    fn left_ball(&self) -> bool {
        self.0.flags.left_ball
    }

    #[getter]
    fn lipschitz(&self) -> Option<(Vec<f64>, f64, f64)> {
        self.0.lipschitz.as_ref().map(|l| (l.blocks.clone(), l.max, l.full))
    }

    /// Trace columns keyed by name; missing values are None.
    fn trace<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let r = &self.0.trace.records;
        let d = PyDict::new(py);
        d.set_item("iter", r.iter().map(|t| t.iter).collect::<Vec<_>>())?;
        d.set_item("block", r.iter().map(|t| t.block).collect::<Vec<_>>())?;
        d.set_item("f", r.iter().map(|t| t.f).collect::<Vec<_>>())?;
        d.set_item("g", r.iter().map(|t| t.g).collect::<Vec<_>>())?;
        d.set_item("h", r.iter().map(|t| t.h).collect::<Vec<_>>())?;
        d.set_item("g_norm2", r.iter().map(|t| t.g_norm2).collect::<Vec<_>>())?;
        d.set_item("step_norm", r.iter().map(|t| t.step_norm).collect::<Vec<_>>())?;
        d.set_item("eps", r.iter().map(|t| t.eps).collect::<Vec<_>>())?;
        d.set_item("rmse_v", r.iter().map(|t| t.rmse_v).collect::<Vec<_>>())?;
        d.set_item("rmse_theta", r.iter().map(|t| t.rmse_theta).collect::<Vec<_>>())?;
        Ok(d)
    }

    fn trace_csv(&self) -> String {
        self.0.trace.to_csv()
    }
}

fn schedule_kind(s: &str) -> PyResult<ScheduleKind> {
    match s {
        "sequential" => Ok(ScheduleKind::Sequential),
        "epoch-shuffle" => Ok(ScheduleKind::EpochShuffle),
        "random-iid" => Ok(ScheduleKind::RandomIid),
        other => Err(PyValueError::new_err(format!("unknown schedule {other:?}"))),
    }
}

/// Runs one solver mode from `x0`. `step = None` picks
/// `step_fraction / L_max` from the certified constants.
#[pyfunction]
#[pyo3(signature = (
    model, denoisers, x0, mode = "bc-pnp", schedule = "sequential", seed = 0, step = None,
    step_fraction = bcpnp::solver::DEFAULT_STEP_FRACTION, max_iters = bcpnp::solver::DEFAULT_MAX_ITERS,
    stop_tol = bcpnp::solver::DEFAULT_STOP_TOL, ball_factor = bcpnp::solver::DEFAULT_BALL_FACTOR,
    truth = None, objective = true,
))]
#[allow(clippy::too_many_arguments)]
fn solve(
    py: Python<'_>,
    model: &PyModel,
    denoisers: Vec<PyRef<'_, PyDenoiser>>,
    x0: Vec<Vec<f64>>,
    mode: &str,
    schedule: &str,
    seed: u64,
    step: Option<f64>,
    step_fraction: f64,
    max_iters: usize,
    stop_tol: f64,
    ball_factor: f64,
    truth: Option<Vec<Vec<f64>>>,
    objective: bool,
) -> PyResult<PySolveResult> {
    let mode = Mode::parse(mode).ok_or_else(|| PyValueError::new_err(format!("unknown mode {mode:?}")))?;
    let dens: Vec<CoreDenoiser> = denoisers.iter().map(|d| d.0.clone()).collect();
    let sched = BlockSchedule::new(schedule_kind(schedule)?, dens.len(), seed).map_err(err)?;
    let mut cfg = SolverConfig::new(mode, sched);
    cfg.step = match step {
        Some(g) => StepSize::Fixed(g),
        None => StepSize::Auto(step_fraction),
    };
    cfg.max_iters = max_iters;
    cfg.stop_tol = stop_tol;
    cfg.ball_factor = ball_factor;
    cfg.trace = TraceOptions {
        residual: true,
        objective,
    };
    let x0 = vector(&x0)?;
    let truth = truth.as_deref().map(vector).transpose()?;
    let fid = model.fid();
    let res = py.detach(|| {
        let problem = Problem::new(fid, &dens)?;
        bcpnp::solve(&problem, &cfg, &x0, truth.as_ref())
    });
    res.map(PySolveResult).map_err(err)
}

/// Sequential and random-schedule bound constants.
#[pyfunction]
fn theory_constants<'py>(
    py: Python<'py>,
    gamma: f64,
    l_max: f64,
    l_full: f64,
    m_max: f64,
    blocks: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let c = TheoryConstants::new(gamma, l_max, l_full, m_max, blocks).map_err(err)?;
    let d = PyDict::new(py);
    for (k, v) in [
        ("alpha", c.alpha),
        ("lambda", c.lambda),
        ("a1", c.a1),
        ("a2", c.a2),
        ("b1", c.b1),
        ("b2", c.b2),
        ("c1", c.c1),
        ("c2", c.c2),
        ("theta", c.theta),
        ("d1", c.d1),
        ("d2", c.d2),
    ] {
        d.set_item(k, v)?;
    }
    Ok(d)
}

/// Relative error `‖estimate - truth‖ / ‖truth‖`.
#[pyfunction]
fn rmse(estimate: Vec<f64>, truth: Vec<f64>) -> PyResult<f64> {
    bcpnp::metrics::rmse(&estimate, &truth).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (estimate, truth, height, width, data_range = None))]
fn ssim(estimate: Vec<f64>, truth: Vec<f64>, height: usize, width: usize, data_range: Option<f64>) -> PyResult<f64> {
    let range = data_range.unwrap_or_else(|| bcpnp::metrics::dynamic_range(&truth));
    bcpnp::metrics::ssim(&estimate, &truth, height, width, range).map_err(err)
}

#[pyfunction]
fn gaussian_kernel(shape: (usize, usize), width: f64) -> Vec<f64> {
    core_gaussian_kernel(shape, width)
}

#[pyfunction]
#[pyo3(signature = (height, width, seed = 0))]
fn piecewise_image(height: usize, width: usize, seed: u64) -> Vec<f64> {
    bcpnp::synthetic::piecewise_image(height, width, seed)
}

#[pymodule]
fn bcpnp_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGaussianPrior>()?;
    m.add_class::<PyGmmPrior>()?;
    m.add_class::<PyDenoiser>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PySolveResult>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(theory_constants, m)?)?;
    m.add_function(wrap_pyfunction!(rmse, m)?)?;
    m.add_function(wrap_pyfunction!(ssim, m)?)?;
    m.add_function(wrap_pyfunction!(gaussian_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(piecewise_image, m)?)?;
    Ok(())
}
