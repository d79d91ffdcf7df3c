//! The `validate` command: static diagnostics, never runs the solver.

use std::path::Path;

use bcpnp::solver::{certify, Mode, Problem};
use bcpnp::theory::MIN_ENSEMBLE;

use crate::build::build;
use crate::config::{AutoOr, ExperimentConfig};
use crate::run::{parse_modes, parse_schedule, solver_config};

pub const STEP_DIAGNOSTIC: &str = "step size violates Theorem precondition";

pub fn validate_path(path: &Path) -> Vec<String> {
    match ExperimentConfig::load(path) {
        Ok(cfg) => validate(&cfg),
        Err(e) => vec![e.to_string()],
    }
}

pub fn validate(cfg: &ExperimentConfig) -> Vec<String> {
    let mut out = Vec::new();
    let modes = parse_modes(cfg).map_err(|e| out.push(e.to_string())).ok();
    let kind = parse_schedule(&cfg.solver.schedule).map_err(|e| out.push(e.to_string())).ok();
    if cfg.checks.enabled && (1..MIN_ENSEMBLE).contains(&cfg.checks.ensemble) {
        out.push(format!(
            "checks.ensemble: {} runs is below the minimum of {MIN_ENSEMBLE}",
            cfg.checks.ensemble
        ));
    }
    let built = match build(cfg) {
        Ok(b) => b,
        Err(e) => {
            out.push(e.to_string());
            return out;
        }
    };
    let fid = built.model.fidelity();
    if let Err(e) = Problem::new(fid, &built.denoisers) {
        out.push(format!("denoisers: {e}"));
    }
    if fid.roles().operator.is_none() {
        for m in modes.iter().flatten() {
            if matches!(m, Mode::PnpGdTheta | Mode::PnpOracleTheta) {
                out.push(format!("solver.modes: {} needs an operator block", m.name()));
            }
        }
    }
    if let Some(kind) = kind {
        if let Err(e) = solver_config(cfg, Mode::BcPnp, kind, built.blocks(), cfg.seed) {
            out.push(e.to_string());
        }
    }

    match certify(fid, &built.x0, cfg.solver.ball_factor) {
        Ok((est, _)) => {
            let gamma = match cfg.solver.step {
                AutoOr::Auto => cfg.solver.step_fraction / est.max,
                AutoOr::Value(g) => g,
            };
            if cfg.checks.enabled && !(gamma * est.max < 1.0) {
                out.push(format!(
                    "solver.step: {STEP_DIAGNOSTIC}: gamma = {gamma} >= 1/L_max = {}",
                    1.0 / est.max
                ));
            }
        }
        Err(e) => out.push(format!("solver: Lipschitz certification at x0 failed: {e}")),
    }
    out
}
