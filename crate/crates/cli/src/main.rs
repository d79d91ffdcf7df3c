use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bcpnp_cli::config::ExperimentConfig;
use bcpnp_cli::run::{run, RunError};
use bcpnp_cli::validate::validate;

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_CHECKS: u8 = 3;

#[derive(Parser)]
#[command(name = "bcpnp", version, about = "Block-coordinate plug-and-play experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Overrides {
    /// Replace the config's top-level seed.
    #[arg(long)]
    seed_override: Option<u64>,
    /// Output directory (overrides `output` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Enable theory checks and fail with status 3 if any fails.
    #[arg(long)]
    strict_checks: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve every configured mode and write traces, reports and metrics.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Print configuration diagnostics without running the solver.
    Validate {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
}

fn load(path: &PathBuf, o: &Overrides) -> Result<ExperimentConfig, String> {
    let mut cfg = ExperimentConfig::load(path).map_err(|e| format!("{}: {e}", path.display()))?;
    if let Some(s) = o.seed_override {
        cfg.seed = s;
    }
    if let Some(out) = &o.out {
        cfg.output = out.clone();
    }
    if o.strict_checks {
        cfg.checks.enabled = true;
        cfg.checks.strict = true;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { config, overrides } => {
            let diags = match load(&config, &overrides) {
                Ok(cfg) => validate(&cfg),
                Err(e) => vec![e],
            };
            for d in &diags {
                println!("{d}");
            }
            if diags.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_CONFIG)
            }
        }
        Command::Run { config, overrides } => {
            let cfg = match load(&config, &overrides) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("config error: {e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            match run(&cfg) {
                Ok(summary) => {
                    println!("{:<18} {:>12} {:>10} {:>12}", "mode", "rmse_x", "ssim_x", "rmse_theta");
                    for r in &summary.metrics {
                        let f = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "-".into());
                        println!("{:<18} {:>12.6} {:>10} {:>12}", r.mode.name(), r.rmse_x, f(r.ssim_x), f(r.rmse_theta));
                    }
                    println!("outputs in {}", summary.output.display());
                    if !summary.failed_checks.is_empty() {
                        for c in &summary.failed_checks {
                            eprintln!("theory check failed: {c}");
                        }
                        if cfg.checks.strict {
                            return ExitCode::from(EXIT_CHECKS);
                        }
                    }
                    ExitCode::SUCCESS
                }
                Err(RunError::Config(e)) => {
                    eprintln!("config error: {e}");
                    ExitCode::from(EXIT_CONFIG)
                }
                Err(RunError::Runtime(e)) => {
                    eprintln!("runtime failure: {e}");
                    ExitCode::from(EXIT_RUNTIME)
                }
            }
        }
    }
}
