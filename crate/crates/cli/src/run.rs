//! The `run` command: solve every configured mode and write outputs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use bcpnp::block::{BlockSchedule, BlockVector, ScheduleKind};
use bcpnp::io::{format_value, write_csv_values, write_pgm};
use bcpnp::metrics::{dynamic_range, rmse, ssim};
use bcpnp::solver::{solve, Mode, Problem, SolveResult, SolverConfig, StepSize};
use bcpnp::theory::{check_descent, check_theorem1, check_theorem2, FStar, IterateTrace, TheoryConstants, F_STAR_MARGIN};
use serde_json::{json, Value};

use crate::build::{build, Built};
use crate::config::{AutoOr, ConfigError, ExperimentConfig};

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Runtime(String),
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

fn io_err(path: &Path) -> impl Fn(bcpnp::Error) -> RunError + '_ {
    move |e| RunError::Runtime(format!("writing {}: {e}", path.display()))
}

/// One row of the metrics table.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub mode: Mode,
    pub rmse_x: f64,
    pub ssim_x: Option<f64>,
    pub rmse_theta: Option<f64>,
}

#[derive(Debug)]
pub struct RunSummary {
    pub output: PathBuf,
    pub metrics: Vec<MetricsRow>,
    pub failed_checks: Vec<String>,
}

pub fn parse_modes(cfg: &ExperimentConfig) -> Result<Vec<Mode>, ConfigError> {
    if cfg.solver.modes.is_empty() {
        return Err(ConfigError::new("solver.modes", "at least one mode is required"));
    }
    let mut out = Vec::new();
    for m in &cfg.solver.modes {
        let mode = Mode::parse(m).ok_or_else(|| ConfigError::new("solver.modes", format!("unknown mode {m:?}")))?;
        if out.contains(&mode) {
            return Err(ConfigError::new("solver.modes", format!("mode {m:?} listed twice")));
        }
        out.push(mode);
    }
    Ok(out)
}

pub fn parse_schedule(s: &str) -> Result<ScheduleKind, ConfigError> {
    match s {
        "sequential" => Ok(ScheduleKind::Sequential),
        "epoch-shuffle" => Ok(ScheduleKind::EpochShuffle),
        "random-iid" => Ok(ScheduleKind::RandomIid),
        _ => Err(ConfigError::new("solver.schedule", format!("unknown schedule {s:?}"))),
    }
}

pub fn solver_config(cfg: &ExperimentConfig, mode: Mode, kind: ScheduleKind, blocks: usize, seed: u64) -> Result<SolverConfig, ConfigError> {
    let s = &cfg.solver;
    let schedule = BlockSchedule::new(kind, blocks, seed).map_err(|e| ConfigError::new("solver.schedule", e.to_string()))?;
    let mut c = SolverConfig::new(mode, schedule);
    c.step = match s.step {
        AutoOr::Auto => StepSize::Auto(s.step_fraction),
        AutoOr::Value(g) => StepSize::Fixed(g),
    };
    c.max_iters = s.max_iters;
    c.stop_tol = s.stop_tol;
    c.ball_factor = s.ball_factor;
    c.recertify_every = s.recertify_every;
    c.validate().map_err(|e| ConfigError::new("solver", e.to_string()))?;
    Ok(c)
}

fn magnitude(v: &[f64]) -> Vec<f64> {
    v.chunks(2).map(|p| p[0].hypot(p[1])).collect()
}

/// The displayable image of a block: itself, or its magnitude when complex.
fn display_image(built: &Built, v: &[f64]) -> Vec<f64> {
    if built.complex_image {
        magnitude(v)
    } else {
        v.to_vec()
    }
}

fn image_part<'a>(built: &Built, x: &'a BlockVector) -> &'a [f64] {
    match built.image_shape {
        Some(_) => x.block(built.model.fidelity().roles().image).unwrap_or(&[]),
        // no image grid: the whole iterate is the estimate
        None => x.data(),
    }
}

pub fn metrics(built: &Built, mode: Mode, x: &BlockVector) -> Result<MetricsRow, RunError> {
    let est = image_part(built, x);
    let truth = image_part(built, &built.truth);
    let rt = |e: bcpnp::Error| RunError::Runtime(format!("metrics: {e}"));
    let rmse_x = rmse(est, truth).map_err(rt)?;
    let ssim_x = match built.image_shape {
        Some((h, w)) => {
            let (a, b) = (display_image(built, est), display_image(built, truth));
            Some(ssim(&a, &b, h, w, dynamic_range(&b)).map_err(rt)?)
        }
        None => None,
    };
    let rmse_theta = match built.model.fidelity().roles().operator {
        Some(op) => {
            let a = built.model.operator_units(x.block(op).map_err(rt)?);
            let b = built.model.operator_units(built.truth.block(op).map_err(rt)?);
            Some(rmse(&a, &b).map_err(rt)?)
        }
        None => None,
    };
    Ok(MetricsRow {
        mode,
        rmse_x,
        ssim_x,
        rmse_theta,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(format_value).unwrap_or_default()
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut s = String::from("mode,rmse_x,ssim_x,rmse_theta\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{}", r.mode.name(), format_value(r.rmse_x), opt(r.ssim_x), opt(r.rmse_theta));
    }
    s
}

fn write_block_files(built: &Built, dir: &Path, stem: &str, x: &BlockVector) -> Result<(), RunError> {
    let fid = built.model.fidelity();
    let roles = fid.roles();
    match built.image_shape {
        Some((h, w)) => {
            let v = x.block(roles.image).map_err(|e| RunError::Runtime(e.to_string()))?;
            let cols = if built.complex_image { 2 * w } else { w };
            let p = dir.join(format!("{stem}_image.csv"));
            write_csv_values(&p, v, cols).map_err(io_err(&p))?;
            let p = dir.join(format!("{stem}_image.pgm"));
            write_pgm(&p, h, w, &display_image(built, v)).map_err(io_err(&p))?;
        }
        None => {
            let p = dir.join(format!("{stem}_x.csv"));
            write_csv_values(&p, x.data(), 1).map_err(io_err(&p))?;
        }
    }
    if let Some(op) = roles.operator {
        let t = built.model.operator_units(x.block(op).map_err(|e| RunError::Runtime(e.to_string()))?);
        let p = dir.join(format!("{stem}_operator.csv"));
        write_csv_values(&p, &t, 1).map_err(io_err(&p))?;
    }
    Ok(())
}

fn write_json(path: &Path, v: &Value) -> Result<(), RunError> {
    let text = serde_json::to_string_pretty(v).map_err(|e| RunError::Runtime(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| RunError::Runtime(format!("writing {}: {e}", path.display())))
}

fn start_for<'a>(built: &'a Built, mode: Mode) -> &'a BlockVector {
    match (mode, &built.x0_oracle) {
        (Mode::PnpOracleTheta, Some(x)) => x,
        _ => &built.x0,
    }
}

/// Outcome of one theory check.
struct Check {
    name: &'static str,
    status: &'static str,
    report: Value,
}

impl Check {
    fn skipped(name: &'static str, why: String) -> Self {
        Check {
            name,
            status: "skipped",
            report: json!({ "reason": why }),
        }
    }
}

fn check_json(checks: &[Check]) -> Value {
    let mut m = serde_json::Map::new();
    for c in checks {
        m.insert(c.name.into(), json!({ "status": c.status, "report": c.report }));
    }
    Value::Object(m)
}

fn status(passed: bool) -> &'static str {
    if passed {
        "passed"
    } else {
        "failed"
    }
}

fn mode_checks(cfg: &ExperimentConfig, built: &Built, problem: &Problem<'_>, res: &SolveResult, kind: ScheduleKind) -> Vec<Check> {
    let constants = match res.lipschitz.as_ref() {
        None => return vec![Check::skipped("constants", "no certified Lipschitz constants".into())],
        Some(l) => TheoryConstants::for_problem(problem, res.gamma, l),
    };
    let c = match constants {
        Ok(c) => c,
        Err(e) => {
            return vec![Check {
                name: "constants",
                status: "failed",
                report: json!({ "error": e.to_string() }),
            }]
        }
    };
    let mut out = vec![Check {
        name: "constants",
        status: "passed",
        report: serde_json::to_value(c).unwrap_or(Value::Null),
    }];
    out.push(match check_descent(&res.trace, &c) {
        Ok(r) => Check {
            name: "descent",
            status: status(r.passed),
            report: serde_json::to_value(&r).unwrap_or(Value::Null),
        },
        Err(e) => Check::skipped("descent", e.to_string()),
    });
    if kind != ScheduleKind::Sequential {
        out.push(Check::skipped("sequential_bound", "schedule is not sequential".into()));
        return out;
    }
    let reference = solver_config(cfg, Mode::BcPnp, kind, built.blocks(), cfg.seed).map(|mut rc| {
        rc.max_iters = cfg.solver.max_iters.saturating_mul(cfg.checks.reference_factor.max(1));
        rc.stop_tol = f64::MIN_POSITIVE;
        rc.trace.residual = false;
        solve(problem, &rc, &built.x0, None)
    });
    let fs = match reference {
        Ok(Ok(r)) => FStar::from_reference(&r.trace),
        Ok(Err(e)) => Err(e),
        Err(e) => Err(bcpnp::Error::Parameter(e.to_string())),
    };
    out.push(match fs.and_then(|fs| check_theorem1(&res.trace, &c, fs)) {
        Ok(r) => Check {
            name: "sequential_bound",
            status: status(r.passed),
            report: serde_json::to_value(&r).unwrap_or(Value::Null),
        },
        Err(e) => Check::skipped("sequential_bound", e.to_string()),
    });
    out
}

fn ensemble_check(cfg: &ExperimentConfig, built: &Built, problem: &Problem<'_>) -> Result<Check, RunError> {
    let n = cfg.checks.ensemble;
    let mut traces: Vec<IterateTrace> = Vec::with_capacity(n);
    let mut constants = None;
    for j in 0..n as u64 {
        let sc = solver_config(cfg, Mode::BcPnp, ScheduleKind::RandomIid, built.blocks(), cfg.seed.wrapping_add(j))?;
        let r = solve(problem, &sc, &built.x0, None).map_err(|e| RunError::Runtime(format!("ensemble seed {j}: {e}")))?;
        if constants.is_none() {
            constants = r.lipschitz.as_ref().map(|l| TheoryConstants::for_problem(problem, r.gamma, l));
        }
        traces.push(r.trace);
    }
    let c = match constants {
        Some(Ok(c)) => c,
        Some(Err(e)) => {
            return Ok(Check {
                name: "random_bound",
                status: "failed",
                report: json!({ "error": e.to_string() }),
            })
        }
        None => return Ok(Check::skipped("random_bound", "no certified Lipschitz constants".into())),
    };
    let mins: Vec<f64> = traces.iter().filter_map(|t| FStar::from_trace(t).ok().map(FStar::value)).collect();
    if mins.len() != traces.len() {
        return Ok(Check::skipped("random_bound", "objective is not computable for these denoisers".into()));
    }
    let m = mins.iter().copied().fold(f64::INFINITY, f64::min);
    let fs = FStar::ReferenceRun(m - F_STAR_MARGIN * m.abs());
    Ok(match check_theorem2(&traces, &c, fs, None) {
        Ok(r) => Check {
            name: "random_bound",
            status: status(r.passed),
            report: serde_json::to_value(&r).unwrap_or(Value::Null),
        },
        Err(e) => Check::skipped("random_bound", e.to_string()),
    })
}

pub fn run(cfg: &ExperimentConfig) -> Result<RunSummary, RunError> {
    let modes = parse_modes(cfg)?;
    let kind = parse_schedule(&cfg.solver.schedule)?;
    let built = build(cfg)?;
    let roles = built.model.fidelity().roles();
    if roles.operator.is_none() {
        if let Some(m) = modes.iter().find(|m| matches!(m, Mode::PnpGdTheta | Mode::PnpOracleTheta)) {
            return Err(ConfigError::new("solver.modes", format!("{} needs an operator block", m.name())).into());
        }
    }
    let problem = Problem::new(built.model.fidelity(), &built.denoisers).map_err(|e| ConfigError::new("denoisers", e.to_string()))?;
    let configs = modes
        .iter()
        .map(|&m| solver_config(cfg, m, kind, built.blocks(), cfg.seed))
        .collect::<Result<Vec<_>, _>>()?;

    let dir = cfg.output.clone();
    std::fs::create_dir_all(&dir).map_err(|e| RunError::Runtime(format!("creating {}: {e}", dir.display())))?;

    // modes are independent; each writes only its own files
    let results: Vec<Result<SolveResult, RunError>> = std::thread::scope(|s| {
        let handles: Vec<_> = modes
            .iter()
            .zip(&configs)
            .map(|(&mode, sc)| {
                let (problem, built) = (&problem, &built);
                s.spawn(move || {
                    solve(problem, sc, start_for(built, mode), Some(&built.truth))
                        .map_err(|e| RunError::Runtime(format!("mode {}: {e}", mode.name())))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(RunError::Runtime("solver thread panicked".into()))))
            .collect()
    });

    write_block_files(&built, &dir, "truth", &built.truth)?;
    let p = dir.join("measurement.csv");
    write_csv_values(&p, built.model.fidelity().measurement(), 1).map_err(io_err(&p))?;

    let mut rows = Vec::new();
    let mut failed = Vec::new();
    for (&mode, res) in modes.iter().zip(results) {
        let res = res?;
        let name = mode.name();
        let p = dir.join(format!("{name}_trace.csv"));
        res.trace.write_csv(&p).map_err(io_err(&p))?;
        write_block_files(&built, &dir, name, &res.x)?;
        let row = metrics(&built, mode, &res.x)?;
        let checks = if cfg.checks.enabled && mode == Mode::BcPnp {
            mode_checks(cfg, &built, &problem, &res, kind)
        } else {
            Vec::new()
        };
        failed.extend(checks.iter().filter(|c| c.status == "failed").map(|c| format!("{name}: {}", c.name)));
        let report = json!({
            "mode": name,
            "iterations": res.trace.len(),
            "termination": res.termination,
            "gamma": res.gamma,
            "lipschitz": res.lipschitz,
            "flags": res.flags,
            "metrics": { "rmse_x": row.rmse_x, "ssim_x": row.ssim_x, "rmse_theta": row.rmse_theta },
            "checks": check_json(&checks),
        });
        write_json(&dir.join(format!("{name}_report.json")), &report)?;
        rows.push(row);
    }

    if cfg.checks.enabled && cfg.checks.ensemble > 0 {
        let c = ensemble_check(cfg, &built, &problem)?;
        if c.status == "failed" {
            failed.push(format!("ensemble: {}", c.name));
        }
        write_json(&dir.join("ensemble_report.json"), &check_json(&[c]))?;
    }

    let p = dir.join("metrics.csv");
    std::fs::write(&p, metrics_csv(&rows)).map_err(|e| RunError::Runtime(format!("writing {}: {e}", p.display())))?;
    Ok(RunSummary {
        output: dir,
        metrics: rows,
        failed_checks: failed,
    })
}
