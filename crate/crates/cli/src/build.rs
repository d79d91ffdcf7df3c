//! Turns a config into a measurement model, denoisers, ground truth and
//! starting points.

use bcpnp::block::BlockVector;
use bcpnp::denoise::{Denoiser, ErrorKind, ErrorSchedule, GaussianPrior, GmmPrior, DEFAULT_TV_ITERATIONS};
use bcpnp::forward::{gaussian_kernel, synthesize, BlindConvolution, Fidelity, FixedConvolution, LinearModel, MultiCoil};
use bcpnp::io::{read_csv_values, read_pgm};
use bcpnp::solver::initialize;
use bcpnp::synthetic::{coil_maps, piecewise_image, ramp_image, uniform};
use bcpnp::BlockLayout;

use crate::config::{AutoOr, ConfigError, DenoiserEntry, ErrorConfig, ExperimentConfig, ProblemKind, Source};

pub enum Model {
    Blind(BlindConvolution),
    Fixed(FixedConvolution),
    Coil(MultiCoil),
    Linear(LinearModel),
}

impl Model {
    pub fn fidelity(&self) -> &dyn Fidelity {
        match self {
            Model::Blind(m) => m,
            Model::Fixed(m) => m,
            Model::Coil(m) => m,
            Model::Linear(m) => m,
        }
    }

    /// Maps an operator block to its physical units (kernels for blind
    /// convolution, coil maps otherwise).
    pub fn operator_units(&self, theta: &[f64]) -> Vec<f64> {
        match self {
            Model::Blind(m) => m.theta_to_kernel(theta),
            _ => theta.to_vec(),
        }
    }
}

pub struct Built {
    pub model: Model,
    pub denoisers: Vec<Denoiser>,
    pub truth: BlockVector,
    pub x0: BlockVector,
    /// Starting point with the true operator, for the oracle mode.
    pub x0_oracle: Option<BlockVector>,
    pub image_shape: Option<(usize, usize)>,
    /// Image stored as `(re, im)` pairs.
    pub complex_image: bool,
}

impl Built {
    pub fn blocks(&self) -> usize {
        self.truth.layout().blocks()
    }
}

/// Shapes a source may need to generate values.
#[derive(Clone, Copy)]
struct Ctx {
    image: Option<(usize, usize)>,
    kernel: Option<(usize, usize)>,
    coils: usize,
    /// Blocks hold `(re, im)` pairs; generated values fill the real part.
    complex: bool,
}

fn pair(v: [usize; 2]) -> (usize, usize) {
    (v[0], v[1])
}

fn lib(field: &str) -> impl Fn(bcpnp::Error) -> ConfigError + '_ {
    move |e| ConfigError::new(field, e.to_string())
}

fn resolve(cfg: &ExperimentConfig, src: &Source, ctx: Ctx, want: usize, field: &str) -> Result<Vec<f64>, ConfigError> {
    let need_image = || ctx.image.ok_or_else(|| ConfigError::new(field, "source needs an image shape"));
    let need_kernel = || ctx.kernel.ok_or_else(|| ConfigError::new(field, "source needs a kernel shape"));
    let real = if ctx.complex { want / 2 } else { want };
    let v = match src {
        Source::Constant { value } => vec![*value; real],
        Source::Values { values } => values.clone(),
        Source::Csv { path } => read_csv_values(&cfg.resolve_path(path)).map_err(lib(field))?,
        Source::Pgm { path } => read_pgm(&cfg.resolve_path(path)).map_err(lib(field))?.data,
        Source::Gaussian { width } => gaussian_kernel(need_kernel()?, *width),
        Source::GaussianFamily { widths } => {
            if widths.is_empty() {
                return Err(ConfigError::new(field, "kernel family needs at least one width"));
            }
            let shape = need_kernel()?;
            let fam: Vec<Vec<f64>> = widths.iter().map(|w| gaussian_kernel(shape, *w)).collect();
            (0..shape.0 * shape.1)
                .map(|j| fam.iter().map(|k| k[j]).sum::<f64>() / fam.len() as f64)
                .collect()
        }
        Source::Piecewise { seed } => {
            let (h, w) = need_image()?;
            piecewise_image(h, w, *seed)
        }
        Source::Ramp => {
            let (h, w) = need_image()?;
            ramp_image(h, w)
        }
        Source::Uniform { lo, hi, seed } => {
            if !(lo < hi) {
                return Err(ConfigError::new(field, "uniform source needs lo < hi"));
            }
            uniform(real, *lo, *hi, *seed)
        }
        Source::CoilMaps => {
            let (h, w) = need_image()?;
            coil_maps(h, w, ctx.coils)
        }
        Source::Truth => return Err(ConfigError::new(field, "\"truth\" is only valid for initialization")),
    };
    if v.len() == want {
        Ok(v)
    } else if ctx.complex && 2 * v.len() == want {
        // real values fill the real part of a complex block
        Ok(v.iter().flat_map(|x| [*x, 0.0]).collect())
    } else {
        Err(ConfigError::new(field, format!("source gives {} values, block needs {want}", v.len())))
    }
}

/// Rows kept by Cartesian undersampling, expanded to a pixel mask.
fn sampling_mask(h: usize, w: usize, every: usize, center: usize) -> Vec<bool> {
    let every = every.max(1);
    let mid = h as isize / 2;
    let half = (center / 2) as isize;
    (0..h * w)
        .map(|p| {
            let i = (p / w) as isize;
            i % every as isize == 0 || (center > 0 && (i - mid).abs() <= half)
        })
        .collect()
}

fn required<'a, T>(v: &'a Option<T>, field: &str) -> Result<&'a T, ConfigError> {
    v.as_ref().ok_or_else(|| ConfigError::new(field, "required for this problem kind"))
}

pub fn build(cfg: &ExperimentConfig) -> Result<Built, ConfigError> {
    let p = &cfg.problem;
    if !(p.noise >= 0.0 && p.noise.is_finite()) {
        return Err(ConfigError::new("problem.noise", "must be finite and >= 0"));
    }
    let image = p.image.map(pair);
    let kernel = p.kernel.map(pair);
    if let (Some((h, w)), Some((kh, kw))) = (image, kernel) {
        if kh > h || kw > w {
            return Err(ConfigError::new(
                "problem.kernel",
                format!("kernel {kh}x{kw} larger than image {h}x{w}"),
            ));
        }
    }
    let ctx = Ctx {
        image,
        kernel,
        coils: p.coils.unwrap_or(1),
        complex: p.kind == ProblemKind::MultiCoil,
    };

    let (mut model, truth, theta0, complex) = match p.kind {
        ProblemKind::BlindConvolution => {
            let img = *required(&image, "problem.image")?;
            let ker = *required(&kernel, "problem.kernel")?;
            let n = img.0 * img.1;
            let m = BlindConvolution::new(img, ker, vec![0.0; n]).map_err(lib("problem"))?;
            let v = resolve(cfg, required(&p.truth.image, "problem.truth.image")?, ctx, n, "problem.truth.image")?;
            let k = resolve(cfg, required(&p.truth.operator, "problem.truth.operator")?, ctx, ker.0 * ker.1, "problem.truth.operator")?;
            let k0 = resolve(cfg, required(&p.init.operator, "problem.init.operator")?, ctx, ker.0 * ker.1, "problem.init.operator")?;
            let truth = m.pack(&v, &k).map_err(lib("problem"))?;
            (Model::Blind(m), truth, Some(k0), false)
        }
        ProblemKind::FixedConvolution => {
            let img = *required(&image, "problem.image")?;
            let ker = *required(&kernel, "problem.kernel")?;
            let n = img.0 * img.1;
            let k = resolve(cfg, required(&p.truth.operator, "problem.truth.operator")?, ctx, ker.0 * ker.1, "problem.truth.operator")?;
            let m = FixedConvolution::new(img, k, ker, vec![0.0; n]).map_err(lib("problem"))?;
            let v = resolve(cfg, required(&p.truth.image, "problem.truth.image")?, ctx, n, "problem.truth.image")?;
            let truth = BlockVector::new(m.layout().clone(), v).map_err(lib("problem"))?;
            (Model::Fixed(m), truth, None, false)
        }
        ProblemKind::MultiCoil => {
            let img = *required(&image, "problem.image")?;
            let coils = *required(&p.coils, "problem.coils")?;
            let n = img.0 * img.1;
            let mask = match p.sampling {
                Some(s) => sampling_mask(img.0, img.1, s.every, s.center),
                None => vec![true; n],
            };
            let sampled = mask.iter().filter(|b| **b).count();
            let m = MultiCoil::new(img, coils, &mask, vec![0.0; 2 * coils * sampled]).map_err(lib("problem"))?;
            let v = resolve(cfg, required(&p.truth.image, "problem.truth.image")?, ctx, 2 * n, "problem.truth.image")?;
            let maps_src = p.truth.operator.clone().unwrap_or(Source::CoilMaps);
            let maps = resolve(cfg, &maps_src, ctx, 2 * coils * n, "problem.truth.operator")?;
            let t0 = resolve(cfg, required(&p.init.operator, "problem.init.operator")?, ctx, 2 * coils * n, "problem.init.operator")?;
            let truth = m.pack(&v, &maps).map_err(lib("problem"))?;
            (Model::Coil(m), truth, Some(t0), true)
        }
        ProblemKind::Linear => {
            let rows = *required(&p.rows, "problem.rows")?;
            let sizes = required(&p.blocks, "problem.blocks")?.clone();
            let layout = BlockLayout::new(sizes.clone()).map_err(lib("problem.blocks"))?;
            let n = layout.total();
            let a = resolve(cfg, required(&p.matrix, "problem.matrix")?, ctx, rows * n, "problem.matrix")?;
            let m = LinearModel::new(a, rows, layout.clone(), vec![0.0; rows]).map_err(lib("problem"))?;
            let srcs = required(&p.truth.blocks, "problem.truth.blocks")?;
            if srcs.len() != sizes.len() {
                return Err(ConfigError::new(
                    "problem.truth.blocks",
                    format!("{} sources for {} blocks", srcs.len(), sizes.len()),
                ));
            }
            let mut data = Vec::with_capacity(n);
            for (i, (s, &len)) in srcs.iter().zip(&sizes).enumerate() {
                data.extend(resolve(cfg, s, ctx, len, &format!("problem.truth.blocks[{i}]"))?);
            }
            let truth = BlockVector::new(layout, data).map_err(lib("problem"))?;
            (Model::Linear(m), truth, None, false)
        }
    };

    {
        let f: &mut dyn Fidelity = match &mut model {
            Model::Blind(m) => m,
            Model::Fixed(m) => m,
            Model::Coil(m) => m,
            Model::Linear(m) => m,
        };
        synthesize(f, &truth, p.noise, cfg.seed).map_err(lib("problem.noise"))?;
    }

    // Blind convolution: pick the kernel scale, then move truth and θ₀ into θ units.
    let mut truth = truth;
    let mut theta0 = theta0;
    if let Model::Blind(m) = &model {
        let k0 = theta0.as_deref().unwrap_or_default();
        let scale = match p.kernel_scale {
            AutoOr::Value(s) => s,
            AutoOr::Auto => {
                let v0 = m.convolver().adjoint_image(k0, m.measurement()).map_err(lib("problem.kernel_scale"))?;
                m.convolver().balanced_kernel_scale(&v0, k0).map_err(lib("problem.kernel_scale"))?
            }
        };
        let scaled = BlindConvolution::with_scale(m.convolver().image_shape(), m.convolver().kernel_shape(), m.measurement().to_vec(), scale)
            .map_err(lib("problem.kernel_scale"))?;
        let v = truth.block(1).map_err(lib("problem"))?.to_vec();
        let k = truth.block(2).map_err(lib("problem"))?.to_vec();
        truth = scaled.pack(&v, &scaled.kernel_to_theta(&k)).map_err(lib("problem"))?;
        theta0 = Some(scaled.kernel_to_theta(k0));
        model = Model::Blind(scaled);
    }

    let fid = model.fidelity();
    let roles = fid.roles();
    let mut x0 = initialize(fid, theta0.as_deref()).map_err(lib("problem.init"))?;
    let x0_oracle = match roles.operator {
        Some(op) => Some(initialize(fid, Some(truth.block(op).map_err(lib("problem"))?)).map_err(lib("problem.init"))?),
        None => None,
    };
    if let Some(src) = &p.init.image {
        let want = x0.layout().size(roles.image).map_err(lib("problem.init.image"))?;
        let v = match src {
            Source::Truth => truth.block(roles.image).map_err(lib("problem"))?.to_vec(),
            s => resolve(cfg, s, ctx, want, "problem.init.image")?,
        };
        x0 = x0.inject(roles.image, &v).map_err(lib("problem.init.image"))?;
    }

    let denoisers = build_denoisers(cfg, &model, &truth, ctx, complex)?;
    Ok(Built {
        image_shape: if matches!(p.kind, ProblemKind::Linear) { None } else { image },
        model,
        denoisers,
        truth,
        x0,
        x0_oracle,
        complex_image: complex,
    })
}

fn build_denoisers(
    cfg: &ExperimentConfig,
    model: &Model,
    truth: &BlockVector,
    ctx: Ctx,
    complex: bool,
) -> Result<Vec<Denoiser>, ConfigError> {
    let layout = truth.layout();
    if cfg.denoisers.len() != layout.blocks() {
        return Err(ConfigError::new(
            "denoisers",
            format!("{} entries for a {}-block problem", cfg.denoisers.len(), layout.blocks()),
        ));
    }
    let roles = model.fidelity().roles();
    // kernel-block prior parameters are given in kernel units
    let scale = match model {
        Model::Blind(m) => m.kernel_scale(),
        _ => 1.0,
    };
    let mut out = Vec::with_capacity(layout.blocks());
    for (idx, entry) in cfg.denoisers.iter().enumerate() {
        let i = idx + 1;
        let field = format!("denoisers[{idx}]");
        let n = layout.size(i).map_err(lib(&field))?;
        let s = if roles.operator == Some(i) { scale } else { 1.0 };
        let d = match entry {
            DenoiserEntry::Identity { .. } => Denoiser::Identity,
            DenoiserEntry::SoftThreshold { lambda, .. } => Denoiser::soft_threshold(*lambda).map_err(lib(&field))?,
            DenoiserEntry::Tv { lambda, iterations, .. } => {
                let (h, w) = ctx
                    .image
                    .filter(|_| i == roles.image && !complex && !matches!(model, Model::Linear(_)))
                    .ok_or_else(|| ConfigError::new(&field, "tv applies only to a real image block"))?;
                Denoiser::tv(*lambda, iterations.unwrap_or(DEFAULT_TV_ITERATIONS), h, w).map_err(lib(&field))?
            }
            DenoiserEntry::Gaussian { mean, variance, sigma, .. } => {
                let mu: Vec<f64> = resolve(cfg, mean, ctx, n, &format!("{field}.mean"))?.iter().map(|m| m / s).collect();
                let prior = GaussianPrior::new(mu, variance / (s * s)).map_err(lib(&field))?;
                Denoiser::mmse(prior, sigma / s).map_err(lib(&field))?
            }
            DenoiserEntry::Gmm { weights, means, variances, sigma, .. } => {
                let mut mus = Vec::with_capacity(means.len());
                for (j, m) in means.iter().enumerate() {
                    let mu = resolve(cfg, m, ctx, n, &format!("{field}.means[{j}]"))?;
                    mus.push(mu.iter().map(|v| v / s).collect());
                }
                let vars = variances.iter().map(|v| v / (s * s)).collect();
                let prior = GmmPrior::new(weights.clone(), mus, vars).map_err(lib(&field))?;
                Denoiser::mmse(prior, sigma / s).map_err(lib(&field))?
            }
        };
        let d = match entry.errors() {
            None => d,
            Some(e) => {
                let kind = match e {
                    ErrorConfig::Zero => ErrorKind::Zero,
                    ErrorConfig::Constant { value } => ErrorKind::Constant(*value),
                    ErrorConfig::SquareSummable { value } => ErrorKind::SquareSummable(*value),
                    ErrorConfig::Custom { values } => ErrorKind::Custom(values.clone()),
                };
                let sched = ErrorSchedule::new(kind, cfg.seed).map_err(lib(&format!("{field}.errors")))?;
                Denoiser::inexact(d, sched, i)
            }
        };
        out.push(d);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_keeps_rows_and_center() {
        let m = sampling_mask(8, 2, 4, 2);
        let rows: Vec<bool> = m.chunks(2).map(|r| r[0]).collect();
        assert_eq!(rows, vec![true, false, false, true, true, true, false, false]);
        assert!(sampling_mask(3, 3, 1, 0).iter().all(|b| *b));
    }
}
