//! Block-coordinate plug-and-play (BC-PnP) for blind inverse problems.
//!
//! The unknown is split into blocks, typically an image `v` and the
//! parameters `θ` of the measurement operator. Each iteration takes a
//! gradient step on one block of `g(x) = ½‖y - A(θ)v‖²` and denoises it.
//! With exact MMSE denoisers under closed-form priors the iteration is a
//! block proximal-gradient method on an implicit objective `f = g + h`,
//! which [`theory`] evaluates along traces to check the convergence bounds.

pub mod block;
pub mod denoise;
pub mod error;
pub mod forward;
pub mod io;
pub mod metrics;
pub mod rng;
pub mod solver;
pub mod synthetic;
pub mod theory;

pub use block::{BlockLayout, BlockSchedule, BlockVector, ScheduleKind};
pub use denoise::{Denoiser, ErrorKind, ErrorSchedule, GaussianPrior, GmmPrior, MmsePrior};
pub use error::{Error, Result};
pub use forward::{BlindConvolution, Fidelity, FixedConvolution, LinearModel, MultiCoil};
pub use solver::{solve, Mode, Problem, SolveResult, SolverConfig, StepSize};
pub use theory::{IterateTrace, TheoryConstants};
