//! TOML experiment configuration. See `docs/config.md` for the schema.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::{self, Deserializer};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Seeds the measurement noise, random schedules and denoiser errors.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    pub problem: ProblemConfig,
    pub denoisers: Vec<DenoiserEntry>,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub checks: ChecksSection,
    /// Directory that relative input paths resolve against. Set on load.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    BlindConvolution,
    FixedConvolution,
    MultiCoil,
    Linear,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub kind: ProblemKind,
    pub image: Option<[usize; 2]>,
    pub kernel: Option<[usize; 2]>,
    pub coils: Option<usize>,
    pub sampling: Option<Sampling>,
    /// Linear model: measurement count and block sizes.
    pub rows: Option<usize>,
    pub blocks: Option<Vec<usize>>,
    pub matrix: Option<Source>,
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub kernel_scale: AutoOr,
    pub truth: TruthConfig,
    #[serde(default)]
    pub init: InitConfig,
}

/// Cartesian row sampling: every `every`-th row plus `center` rows around
/// the middle.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sampling {
    pub every: usize,
    #[serde(default)]
    pub center: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthConfig {
    pub image: Option<Source>,
    /// Kernel (convolutions) or coil maps (multi-coil).
    pub operator: Option<Source>,
    /// Linear model: one source per block.
    pub blocks: Option<Vec<Source>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitConfig {
    /// Defaults to the adjoint of the measurement.
    pub image: Option<Source>,
    pub operator: Option<Source>,
}

/// Where a vector of values comes from.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum Source {
    Constant { value: f64 },
    Values { values: Vec<f64> },
    Csv { path: PathBuf },
    Pgm { path: PathBuf },
    /// Normalized Gaussian kernel of the configured kernel shape.
    Gaussian { width: f64 },
    /// Mean of normalized Gaussian kernels over several widths.
    GaussianFamily { widths: Vec<f64> },
    Piecewise { seed: u64 },
    Ramp,
    Uniform { lo: f64, hi: f64, seed: u64 },
    CoilMaps,
    /// The ground truth of the same block (initialization only).
    Truth,
}

/// One block denoiser; `errors` optionally makes it inexact.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DenoiserEntry {
    Identity {
        errors: Option<ErrorConfig>,
    },
    SoftThreshold {
        lambda: f64,
        errors: Option<ErrorConfig>,
    },
    Tv {
        lambda: f64,
        iterations: Option<usize>,
        errors: Option<ErrorConfig>,
    },
    /// Kernel-block parameters are in kernel units.
    Gaussian {
        mean: Source,
        variance: f64,
        sigma: f64,
        errors: Option<ErrorConfig>,
    },
    Gmm {
        weights: Vec<f64>,
        means: Vec<Source>,
        variances: Vec<f64>,
        sigma: f64,
        errors: Option<ErrorConfig>,
    },
}

impl DenoiserEntry {
    pub fn errors(&self) -> Option<&ErrorConfig> {
        match self {
            DenoiserEntry::Identity { errors }
            | DenoiserEntry::SoftThreshold { errors, .. }
            | DenoiserEntry::Tv { errors, .. }
            | DenoiserEntry::Gaussian { errors, .. }
            | DenoiserEntry::Gmm { errors, .. } => errors.as_ref(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ErrorConfig {
    Zero,
    Constant { value: f64 },
    SquareSummable { value: f64 },
    Custom { values: Vec<f64> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "default_modes")]
    pub modes: Vec<String>,
    #[serde(default = "default_schedule")]
    pub schedule: String,
    #[serde(default)]
    pub step: AutoOr,
    #[serde(default = "default_fraction")]
    pub step_fraction: f64,
    #[serde(default = "default_iters")]
    pub max_iters: usize,
    #[serde(default = "default_tol")]
    pub stop_tol: f64,
    #[serde(default = "default_ball")]
    pub ball_factor: f64,
    pub recertify_every: Option<usize>,
}

fn default_modes() -> Vec<String> {
    vec!["bc-pnp".into()]
}
fn default_schedule() -> String {
    "sequential".into()
}
fn default_fraction() -> f64 {
    bcpnp::solver::DEFAULT_STEP_FRACTION
}
fn default_iters() -> usize {
    bcpnp::solver::DEFAULT_MAX_ITERS
}
fn default_tol() -> f64 {
    bcpnp::solver::DEFAULT_STOP_TOL
}
fn default_ball() -> f64 {
    bcpnp::solver::DEFAULT_BALL_FACTOR
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            modes: default_modes(),
            schedule: default_schedule(),
            step: AutoOr::Auto,
            step_fraction: default_fraction(),
            max_iters: default_iters(),
            stop_tol: default_tol(),
            ball_factor: default_ball(),
            recertify_every: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChecksSection {
    #[serde(default)]
    pub enabled: bool,
    /// Failed checks make `run` exit with status 3.
    #[serde(default)]
    pub strict: bool,
    /// Reference-run length as a multiple of `max_iters`, for `f*`.
    #[serde(default = "default_reference")]
    pub reference_factor: usize,
    /// Random-schedule ensemble size; 0 skips the ensemble check.
    #[serde(default)]
    pub ensemble: usize,
}

fn default_reference() -> usize {
    10
}

impl Default for ChecksSection {
    fn default() -> Self {
        Self {
            enabled: false,
            strict: false,
            reference_factor: default_reference(),
            ensemble: 0,
        }
    }
}

/// `"auto"` or a number.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub enum AutoOr {
    #[default]
    Auto,
    Value(f64),
}

impl<'de> Deserialize<'de> for AutoOr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Int(i64),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(AutoOr::Value(v)),
            Raw::Int(v) => Ok(AutoOr::Value(v as f64)),
            Raw::Word(w) if w == "auto" => Ok(AutoOr::Auto),
            Raw::Word(w) => Err(de::Error::custom(format!("expected \"auto\" or a number, got {w:?}"))),
        }
    }
}

/// A configuration problem, with the offending field when known.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.field.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.field, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

impl ExperimentConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| ConfigError::new("", e.to_string().trim_end().to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("", format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base)
    }

    pub fn resolve_path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}
