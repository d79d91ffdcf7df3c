//! Block-coordinate plug-and-play iteration and its ablations.
//!
//! Each iteration `k` picks a block `i_k` and sets
//! `x_{i_k} ← D_{σ_{i_k}}(x_{i_k} - γ ∇_{i_k} g(x))`, leaving every other block
//! bitwise unchanged. With one block this is PnP-ISTA.

use serde::{Deserialize, Serialize};

use crate::block::{distance, norm, norm_sq, BlockSchedule, BlockVector};
use crate::denoise::Denoiser;
use crate::error::{Error, Result};
use crate::forward::{estimate_block_lipschitz, BallRadii, Fidelity, LipschitzEstimate};
use crate::metrics::rmse;
use crate::theory::{eval_grad_f, eval_objective, IterateRecord, IterateTrace};

pub const DEFAULT_MAX_ITERS: usize = 500;
pub const DEFAULT_STOP_TOL: f64 = 1e-5;
pub const DEFAULT_BALL_FACTOR: f64 = 10.0;
pub const DEFAULT_STEP_FRACTION: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Block-coordinate updates with a denoiser on every block.
    BcPnp,
    /// Full PnP-ISTA steps on all blocks except the operator block, which
    /// stays at its initial value.
    #[serde(alias = "pnp")]
    PnpIsta,
    /// Block-coordinate updates where the operator block takes a bare
    /// gradient step.
    PnpGdTheta,
    /// Same iteration as `PnpIsta`; the caller supplies the true operator.
    PnpOracleTheta,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::BcPnp => "bc-pnp",
            Mode::PnpIsta => "pnp-ista",
            Mode::PnpGdTheta => "pnp-gd-theta",
            Mode::PnpOracleTheta => "pnp-oracle-theta",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "bc-pnp" => Some(Mode::BcPnp),
            "pnp-ista" | "pnp" => Some(Mode::PnpIsta),
            "pnp-gd-theta" => Some(Mode::PnpGdTheta),
            "pnp-oracle-theta" => Some(Mode::PnpOracleTheta),
            _ => None,
        }
    }

    fn freezes_operator(self) -> bool {
        matches!(self, Mode::PnpIsta | Mode::PnpOracleTheta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepSize {
    Fixed(f64),
    /// `γ = fraction / L_max` from the certified block constants.
    Auto(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceOptions {
    /// Record `‖G(x^{k-1})‖²` (denoises every block each iteration).
    pub residual: bool,
    /// Record `f`, `h` and `‖∇f‖²` when the priors allow it.
    pub objective: bool,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self {
            residual: true,
            objective: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub mode: Mode,
    pub step: StepSize,
    pub schedule: BlockSchedule,
    pub max_iters: usize,
    pub stop_tol: f64,
    pub ball_factor: f64,
    pub recertify_every: Option<usize>,
    pub trace: TraceOptions,
}

impl SolverConfig {
    pub fn new(mode: Mode, schedule: BlockSchedule) -> Self {
        Self {
            mode,
            step: StepSize::Auto(DEFAULT_STEP_FRACTION),
            schedule,
            max_iters: DEFAULT_MAX_ITERS,
            stop_tol: DEFAULT_STOP_TOL,
            ball_factor: DEFAULT_BALL_FACTOR,
            recertify_every: None,
            trace: TraceOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::Parameter("max_iters must be >= 1".into()));
        }
        if !(self.stop_tol > 0.0) {
            return Err(Error::Parameter("stop_tol must be > 0".into()));
        }
        if !(self.ball_factor > 0.0) {
            return Err(Error::Parameter("ball_factor must be > 0".into()));
        }
        match self.step {
            StepSize::Fixed(g) | StepSize::Auto(g) if !(g > 0.0 && g.is_finite()) => {
                Err(Error::Parameter(format!("step parameter must be positive, got {g}")))
            }
            _ => Ok(()),
        }
    }
}

/// A data fidelity with one denoiser per block.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub fidelity: &'a dyn Fidelity,
    pub denoisers: &'a [Denoiser],
}

impl<'a> Problem<'a> {
    pub fn new(fidelity: &'a dyn Fidelity, denoisers: &'a [Denoiser]) -> Result<Self> {
        let layout = fidelity.layout();
        if denoisers.len() != layout.blocks() {
            return Err(Error::Layout(format!(
                "{} denoisers for {} blocks",
                denoisers.len(),
                layout.blocks()
            )));
        }
        for (i, d) in denoisers.iter().enumerate() {
            if let Some((prior, _)) = d.exact() {
                if prior.dim() != layout.sizes()[i] {
                    return Err(Error::Layout(format!(
                        "prior of block {} has dimension {}, block has {}",
                        i + 1,
                        prior.dim(),
                        layout.sizes()[i]
                    )));
                }
            }
        }
        Ok(Self {
            fidelity,
            denoisers,
        })
    }

    pub fn blocks(&self) -> usize {
        self.denoisers.len()
    }

    fn denoise(&self, block: usize, z: &[f64], k: usize) -> Result<Vec<f64>> {
        self.denoisers[block - 1].apply(z, k)
    }
}

/// `G(x) = (1/γ)(x - D_σ(x - γ∇g(x)))` with denoisers evaluated at
/// iteration `k`.
pub fn g_operator(problem: &Problem<'_>, gamma: f64, x: &BlockVector, k: usize) -> Result<BlockVector> {
    check_gamma(gamma)?;
    let grad = problem.fidelity.gradient(x)?;
    let mut out = BlockVector::zeros(x.layout().clone());
    for i in 1..=problem.blocks() {
        let xi = x.block(i)?;
        let z = pre_denoise(xi, grad.block(i)?, gamma);
        let d = problem.denoise(i, &z, k)?;
        let gi: Vec<f64> = xi.iter().zip(&d).map(|(a, b)| (a - b) / gamma).collect();
        out.set_block(i, &gi)?;
    }
    Ok(out)
}

fn pre_denoise(x: &[f64], grad: &[f64], gamma: f64) -> Vec<f64> {
    x.iter().zip(grad).map(|(a, g)| a - gamma * g).collect()
}

/// Result of a single iteration.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub next: BlockVector,
    /// Updated blocks with their pre-denoise points `z_i = x_i - γ∇_i g(x)`.
    pub updates: Vec<(usize, Vec<f64>)>,
    /// `G(x^{k-1})` over all blocks, when requested.
    pub residual: Option<BlockVector>,
}

impl StepOutcome {
    /// Block reported in traces: the single updated block, or 0.
    pub fn block(&self) -> usize {
        match self.updates.as_slice() {
            [(i, _)] => *i,
            _ => 0,
        }
    }
}

fn active_blocks(problem: &Problem<'_>, mode: Mode, schedule: &BlockSchedule, k: usize) -> Vec<usize> {
    if mode.freezes_operator() {
        let op = problem.fidelity.roles().operator;
        (1..=problem.blocks()).filter(|&i| Some(i) != op).collect()
    } else {
        vec![schedule.index(k)]
    }
}

/// One iteration `k >= 1` of the configured mode.
pub fn step(
    problem: &Problem<'_>,
    mode: Mode,
    schedule: &BlockSchedule,
    gamma: f64,
    x: &BlockVector,
    k: usize,
    with_residual: bool,
) -> Result<StepOutcome> {
    check_gamma(gamma)?;
    if k == 0 {
        return Err(Error::Parameter("iterations are counted from 1".into()));
    }
    let active = active_blocks(problem, mode, schedule, k);
    let operator = problem.fidelity.roles().operator;
    let bare_gradient = |i: usize| mode == Mode::PnpGdTheta && Some(i) == operator;

    let mut next = x.clone();
    let mut updates = Vec::with_capacity(active.len());
    let residual = if with_residual {
        let grad = problem.fidelity.gradient(x)?;
        let mut g = BlockVector::zeros(x.layout().clone());
        for i in 1..=problem.blocks() {
            if mode.freezes_operator() && Some(i) == operator {
                continue;
            }
            let xi = x.block(i)?;
            let z = pre_denoise(xi, grad.block(i)?, gamma);
            let d = if bare_gradient(i) {
                z.clone()
            } else {
                problem.denoise(i, &z, k)?
            };
            let gi: Vec<f64> = xi.iter().zip(&d).map(|(a, b)| (a - b) / gamma).collect();
            g.set_block(i, &gi)?;
            if active.contains(&i) {
                next.set_block(i, &d)?;
                updates.push((i, z));
            }
        }
        Some(g)
    } else {
        let r = problem.fidelity.residual(x)?;
        for &i in &active {
            let gi = problem.fidelity.block_adjoint(x, i, &r)?;
            let z = pre_denoise(x.block(i)?, &gi, gamma);
            let d = if bare_gradient(i) {
                z.clone()
            } else {
                problem.denoise(i, &z, k)?
            };
            next.set_block(i, &d)?;
            updates.push((i, z));
        }
        None
    };
    Ok(StepOutcome {
        next,
        updates,
        residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Tolerance,
    MaxIters,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolveFlags {
    /// Some iterate left the certification ball.
    pub left_ball: bool,
    /// A power iteration hit its cap without converging.
    pub power_warning: bool,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub x: BlockVector,
    pub trace: IterateTrace,
    pub termination: Termination,
    pub flags: SolveFlags,
    pub gamma: f64,
    pub lipschitz: Option<LipschitzEstimate>,
}

/// Adjoint initialization `x0 = (A(θ₀)ᴴ y, θ₀)`.
pub fn initialize(fidelity: &dyn Fidelity, theta0: Option<&[f64]>) -> Result<BlockVector> {
    let roles = fidelity.roles();
    let mut x = BlockVector::zeros(fidelity.layout().clone());
    if let Some(op) = roles.operator {
        let theta0 = theta0.ok_or_else(|| {
            Error::Parameter("an initial operator estimate is required for this model".into())
        })?;
        x.set_block(op, theta0)?;
    }
    let v0 = fidelity.adjoint_measurement(&x)?;
    x.set_block(roles.image, &v0)?;
    Ok(x)
}

/// Ball radii around `x` and the block Lipschitz constants certified on them.
pub fn certify(
    fidelity: &dyn Fidelity,
    x: &BlockVector,
    factor: f64,
) -> Result<(LipschitzEstimate, BallRadii)> {
    let radii = BallRadii::around(x, factor)?;
    let est = estimate_block_lipschitz(fidelity, x, &radii)?;
    Ok((est, radii))
}

fn resolve_gamma(step: StepSize, est: Option<&LipschitzEstimate>) -> Result<f64> {
    match step {
        StepSize::Fixed(g) => Ok(g),
        StepSize::Auto(fraction) => {
            let est = est.ok_or_else(|| {
                Error::Parameter("automatic step size needs certified Lipschitz constants".into())
            })?;
            if !(est.max > 0.0) {
                return Err(Error::Parameter("certified L_max is zero".into()));
            }
            Ok(fraction / est.max)
        }
    }
}

fn block_rmse(x: &BlockVector, truth: Option<&BlockVector>, block: Option<usize>) -> Option<f64> {
    let (truth, block) = (truth?, block?);
    rmse(x.block(block).ok()?, truth.block(block).ok()?).ok()
}

/// Runs the configured mode from `x0` until the relative change
/// `‖x^k - x^{k-1}‖ / ‖x^{k-1}‖` drops below `stop_tol` or `max_iters` is
/// reached. `truth`, when given, feeds the per-block RMSE columns.
pub fn solve(
    problem: &Problem<'_>,
    config: &SolverConfig,
    x0: &BlockVector,
    truth: Option<&BlockVector>,
) -> Result<SolveResult> {
    config.validate()?;
    if x0.layout() != problem.fidelity.layout() {
        return Err(Error::Shape("initial iterate does not match the model layout".into()));
    }
    if config.schedule.blocks != problem.blocks() {
        return Err(Error::Layout(format!(
            "schedule over {} blocks for a {}-block problem",
            config.schedule.blocks,
            problem.blocks()
        )));
    }

    let certified = match certify(problem.fidelity, x0, config.ball_factor) {
        Ok(c) => Some(c),
        Err(e) if matches!(config.step, StepSize::Auto(_)) => return Err(e),
        Err(_) => None,
    };
    let mut flags = SolveFlags::default();
    let mut lipschitz = certified.as_ref().map(|(e, _)| e.clone());
    let mut radii = certified.map(|(_, r)| r);
    flags.power_warning = lipschitz.as_ref().is_some_and(|e| !e.converged);
    let mut gamma = resolve_gamma(config.step, lipschitz.as_ref())?;

    let roles = problem.fidelity.roles();
    let mut trace = IterateTrace {
        blocks: problem.blocks(),
        ..Default::default()
    };
    if config.trace.objective {
        trace.initial = eval_objective(problem, gamma, x0).ok();
        trace.initial_grad_f_norm2 = eval_grad_f(problem, gamma, x0).ok().map(|g| g.norm_sq());
    }
    // denoisers without a closed-form objective stay that way
    let want_objective = trace.initial.is_some();

    let mut x = x0.clone();
    let mut termination = Termination::MaxIters;
    for k in 1..=config.max_iters {
        if let Some(every) = config.recertify_every {
            if k > 1 && (k - 1) % every == 0 {
                let (est, r) = certify(problem.fidelity, &x, config.ball_factor)?;
                flags.power_warning |= !est.converged;
                gamma = resolve_gamma(config.step, Some(&est))?;
                lipschitz = Some(est);
                radii = Some(r);
            }
        }

        let out = step(problem, config.mode, &config.schedule, gamma, &x, k, config.trace.residual)?;
        for (i, _) in &out.updates {
            if !out.next.block(*i)?.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite {
                    block: *i,
                    iteration: k,
                });
            }
        }
        let step_norm = distance(out.next.data(), x.data());
        let eps = out
            .updates
            .iter()
            .map(|(i, _)| problem.denoisers[i - 1].epsilon(k))
            .fold(0.0, f64::max);
        let (f, h, grad_f_norm2) = if want_objective {
            match eval_objective(problem, gamma, &out.next) {
                Ok(obj) => (
                    Some(obj.f),
                    Some(obj.h),
                    eval_grad_f(problem, gamma, &out.next).ok().map(|g| g.norm_sq()),
                ),
                Err(_) => (None, None, None),
            }
        } else {
            (None, None, None)
        };
        let record = IterateRecord {
            iter: k,
            block: out.block(),
            g: problem.fidelity.value(&out.next)?,
            f,
            h,
            g_norm2: out.residual.as_ref().map(BlockVector::norm_sq),
            grad_f_norm2,
            step_norm,
            eps,
            rmse_v: block_rmse(&out.next, truth, Some(roles.image)),
            rmse_theta: block_rmse(&out.next, truth, roles.operator),
        };
        trace.records.push(record);
        if let Some(r) = &radii {
            flags.left_ball |= !r.contains(&out.next);
        }

        let prev_norm = norm(x.data());
        x = out.next;
        let rel = if prev_norm > 0.0 { step_norm / prev_norm } else { step_norm };
        if rel < config.stop_tol {
            termination = Termination::Tolerance;
            break;
        }
    }

    Ok(SolveResult {
        x,
        trace,
        termination,
        flags,
        gamma,
        lipschitz,
    })
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("step size must be positive, got {gamma}")))
    }
}

/// `‖G(x)‖²` restricted to the blocks a mode updates.
pub fn residual_norm_sq(problem: &Problem<'_>, gamma: f64, x: &BlockVector, k: usize) -> Result<f64> {
    Ok(norm_sq(g_operator(problem, gamma, x, k)?.data()))
}
