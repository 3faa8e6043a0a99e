//! Target image synthesis: pre-processing, hyper-parameter retrieval and
//! per-pixel weighted aggregation over the source support.

use std::borrow::Cow;
use std::path::PathBuf;

use rayon::prelude::*;

use crate::error::{LerfError, Result};
use crate::geometry::{build_sample_grid, GeometricTransform, SampleGrid, ValidMask};
use crate::hypermap::HyperParamMap;
use crate::image::{gaussian_filter_xy, load_image, BoundaryPolicy, ImageBuffer};
use crate::kernels::{
    eval_fixed_1d, support_offsets, weights_amplified_linear, weights_aniso_gaussian, GaussianParams,
    HyperParams, KernelFamily,
};
use crate::lut::{apply_g_enhancer, predict_hyperparams, LutBank};

/// Stage applied to the source before hyper-parameter prediction and
/// aggregation.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum PreprocessConfig {
    #[default]
    Identity,
    /// Gaussian low-pass with per-axis deviations in source pixels.
    AntiAlias { sigma_y: f64, sigma_x: f64 },
    /// Residual enhancer tables of the bank.
    LutEnhancer,
    /// Replace the source with an image produced elsewhere (same size).
    External(PathBuf),
}

impl PreprocessConfig {
    pub fn anti_alias(sigma: f64) -> Self {
        PreprocessConfig::AntiAlias { sigma_y: sigma, sigma_x: sigma }
    }

    /// Pre-filter for a downscale by `(r_h, r_w)`: `sigma = 0.5 / r - 0.5`
    /// per axis, zero for axes that are not shrunk.
    pub fn anti_alias_for_scale(r_h: f64, r_w: f64) -> Self {
        let s = |r: f64| if r < 1.0 { 0.5 / r - 0.5 } else { 0.0 };
        PreprocessConfig::AntiAlias { sigma_y: s(r_h), sigma_x: s(r_w) }
    }
}

/// Applies `cfg` to `img`.
pub fn preprocess(img: &ImageBuffer, cfg: &PreprocessConfig, bank: Option<&LutBank>) -> Result<ImageBuffer> {
    match cfg {
        PreprocessConfig::Identity => Ok(img.clone()),
        PreprocessConfig::AntiAlias { sigma_y, sigma_x } => {
            if !(*sigma_y > 0.0 || *sigma_x > 0.0) {
                return Err(LerfError::Parameter(format!(
                    "anti-alias sigma must be > 0 on some axis, got ({sigma_y}, {sigma_x})"
                )));
            }
            gaussian_filter_xy(img, *sigma_y, *sigma_x)
        }
        PreprocessConfig::LutEnhancer => {
            let bank = bank.ok_or_else(|| LerfError::Configuration("enhancer needs a LUT bank".into()))?;
            apply_g_enhancer(img, bank)
        }
        PreprocessConfig::External(path) => {
            let ext = load_image(path)?;
            if ext.dims() != img.dims() || ext.channels() != img.channels() {
                return Err(LerfError::Shape(format!(
                    "external image {}x{}x{} does not match source {}x{}x{}",
                    ext.height(),
                    ext.width(),
                    ext.channels(),
                    img.height(),
                    img.width(),
                    img.channels()
                )));
            }
            Ok(ext)
        }
    }
}

/// Everything needed to render one target image.
#[derive(Debug, Clone)]
pub struct ResampleJob<'a> {
    pub source: &'a ImageBuffer,
    pub transform: &'a GeometricTransform,
    pub kernel: KernelFamily,
    pub preproc: PreprocessConfig,
    pub bank: Option<&'a LutBank>,
    pub hyper_map: Option<&'a HyperParamMap>,
    pub target_dims: (usize, usize),
    pub policy: BoundaryPolicy,
}

impl<'a> ResampleJob<'a> {
    /// Job with the transform's natural target size and no pre-processing.
    pub fn new(source: &'a ImageBuffer, transform: &'a GeometricTransform, kernel: KernelFamily) -> Self {
        let target_dims = transform.natural_target_dims(source.height(), source.width());
        ResampleJob {
            source,
            transform,
            kernel,
            preproc: PreprocessConfig::Identity,
            bank: None,
            hyper_map: None,
            target_dims,
            policy: BoundaryPolicy::Replicate,
        }
    }

    pub fn target_dims(mut self, h: usize, w: usize) -> Self {
        self.target_dims = (h, w);
        self
    }

    pub fn bank(mut self, bank: &'a LutBank) -> Self {
        self.bank = Some(bank);
        self
    }

    pub fn hyper_map(mut self, map: &'a HyperParamMap) -> Self {
        self.hyper_map = Some(map);
        self
    }

    pub fn preprocess(mut self, cfg: PreprocessConfig) -> Self {
        self.preproc = cfg;
        self
    }

    fn grid(&self) -> Result<SampleGrid> {
        let (h, w) = self.target_dims;
        if h == 0 || w == 0 {
            return Err(LerfError::Parameter(format!("target dimensions must be positive, got {h}x{w}")));
        }
        build_sample_grid(self.transform, self.source.dims(), self.target_dims, self.policy)
    }
}

/// Rendered target together with its validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Resampled {
    pub image: ImageBuffer,
    pub mask: ValidMask,
}

/// Dispatches on the job's kernel family.
pub fn resample(job: &ResampleJob<'_>) -> Result<Resampled> {
    if job.kernel.is_adaptive() {
        resample_lerf(job)
    } else {
        resample_fixed(job)
    }
}

/// Writes per-row interleaved results into a planar image, zeroing invalid pixels.
fn assemble(
    grid: &SampleGrid,
    channels: usize,
    pixel: impl Fn(usize, &mut [f64]) + Sync,
) -> Result<Resampled> {
    let (th, tw) = (grid.target_h, grid.target_w);
    let rows: Vec<Vec<f64>> = (0..th)
        .into_par_iter()
        .map(|y| {
            let mut row = vec![0.0; tw * channels];
            for x in 0..tw {
                let i = y * tw + x;
                if grid.valid[i] {
                    pixel(i, &mut row[x * channels..(x + 1) * channels]);
                }
            }
            row
        })
        .collect();
    let n = th * tw;
    let mut data = vec![0.0; n * channels];
    for (y, row) in rows.iter().enumerate() {
        for x in 0..tw {
            for c in 0..channels {
                data[c * n + y * tw + x] = row[x * channels + c];
            }
        }
    }
    Ok(Resampled { image: ImageBuffer::new(th, tw, channels, data)?, mask: grid.mask() })
}

const MAX_TAPS: usize = 6;

/// Interpolation with a fixed separable kernel.
pub fn resample_fixed(job: &ResampleJob<'_>) -> Result<Resampled> {
    let family = job.kernel;
    if family.is_adaptive() {
        return Err(LerfError::Misuse(format!("{} is adaptive; use resample_lerf", family.name())));
    }
    family.validate()?;
    let pre = match job.preproc {
        PreprocessConfig::Identity => Cow::Borrowed(job.source),
        ref cfg => Cow::Owned(preprocess(job.source, cfg, job.bank)?),
    };
    let src: &ImageBuffer = &pre;
    let grid = job.grid()?;
    let taps = family.taps();
    let lead = (taps / 2 - 1) as i64;
    let policy = job.policy;
    let channels = src.channels();

    let weights_1d = |frac: f64, out: &mut [f64; MAX_TAPS]| {
        for (k, w) in out.iter_mut().enumerate().take(taps) {
            *w = eval_fixed_1d(family, frac - (k as i64 - lead) as f64).expect("fixed family");
        }
    };

    assemble(&grid, channels, |i, out| {
        let mut wy = [0.0; MAX_TAPS];
        let mut wx = [0.0; MAX_TAPS];
        weights_1d(grid.frac_y[i], &mut wy);
        weights_1d(grid.frac_x[i], &mut wx);
        let norm = wy[..taps].iter().sum::<f64>() * wx[..taps].iter().sum::<f64>();
        let (by, bx) = (grid.base_y[i], grid.base_x[i]);
        for (c, o) in out.iter_mut().enumerate() {
            // Accumulate deviations from the anchor sample so constant
            // regions reproduce exactly.
            let anchor = src.read_padded(c, by, bx, policy);
            let mut acc = 0.0;
            for (ky, wyk) in wy[..taps].iter().enumerate() {
                let row = by + ky as i64 - lead;
                let mut racc = 0.0;
                for (kx, wxk) in wx[..taps].iter().enumerate() {
                    racc += wxk * (src.read_padded(c, row, bx + kx as i64 - lead, policy) - anchor);
                }
                acc += wyk * racc;
            }
            *o = anchor + acc / norm;
        }
    })
}

/// Resolves the pre-processed source and its hyper-parameter map.
fn lerf_inputs(job: &ResampleJob<'_>) -> Result<(ImageBuffer, HyperParamMap)> {
    let family = job.kernel;
    if !family.is_adaptive() {
        return Err(LerfError::Misuse(format!("{} is not adaptive", family.name())));
    }
    if let Some(bank) = job.bank {
        if bank.family() != family {
            return Err(LerfError::Configuration(format!(
                "bank holds {} tables but the job uses {}",
                bank.family().name(),
                family.name()
            )));
        }
    }
    let pre = preprocess(job.source, &job.preproc, job.bank)?;
    let map = match (job.hyper_map, job.bank) {
        (Some(map), _) => {
            if map.family() != family {
                return Err(LerfError::Configuration(format!(
                    "hyper-parameter map is for {}, job uses {}",
                    map.family().name(),
                    family.name()
                )));
            }
            if map.dims() != pre.dims() {
                return Err(LerfError::Shape(format!(
                    "hyper-parameter map {}x{} does not match source {}x{}",
                    map.height(),
                    map.width(),
                    pre.height(),
                    pre.width()
                )));
            }
            map.clone()
        }
        (None, Some(bank)) => predict_hyperparams(&pre, bank)?,
        (None, None) => {
            return Err(LerfError::Configuration(format!(
                "{} needs a LUT bank or a hyper-parameter map",
                family.name()
            )))
        }
    };
    Ok((pre, map))
}

/// Adaptive resampling with per-source-pixel kernel hyper-parameters.
pub fn resample_lerf(job: &ResampleJob<'_>) -> Result<Resampled> {
    let (pre, map) = lerf_inputs(job)?;
    map.check_bounds()?;
    let grid = job.grid()?;
    let policy = job.policy;
    let (sh, sw) = pre.dims();
    let family = job.kernel;
    let channels = pre.channels();

    assemble(&grid, channels, |i, out| {
        let (by, bx) = (grid.base_y[i], grid.base_x[i]);
        let support = [(0i64, 0i64), (0, 1), (1, 0), (1, 1)]
            .map(|(dy, dx)| (policy.resolve(by + dy, sh), policy.resolve(bx + dx, sw)));
        let offsets = support_offsets(grid.frac_y[i], grid.frac_x[i]);
        let weights = match family {
            KernelFamily::AmplifiedLinear => {
                weights_amplified_linear(&support.map(|(y, x)| map.alpha(y, x)), &offsets)
            }
            _ => weights_aniso_gaussian(&support.map(|(y, x)| map.gaussian(y, x)), &offsets),
        }
        .expect("hyper-parameters were bounds-checked");
        for (c, o) in out.iter_mut().enumerate() {
            let anchor = pre.get(c, support[0].0, support[0].1);
            let mut acc = 0.0;
            for (w, (y, x)) in weights.iter().zip(&support) {
                acc += w * (pre.get(c, *y, *x) - anchor);
            }
            *o = anchor + acc;
        }
    })
}

/// Fixed isotropic Gaussian (rho = 0, unit inverse sigmas) through the
/// adaptive path.
pub fn resample_fixed_gaussian(job: &ResampleJob<'_>) -> Result<Resampled> {
    let map = HyperParamMap::uniform(
        job.source.height(),
        job.source.width(),
        HyperParams::Gaussian(GaussianParams::ISOTROPIC),
    );
    let job = ResampleJob { kernel: KernelFamily::AnisoGaussian, hyper_map: Some(&map), bank: None, ..job.clone() };
    resample_lerf(&job)
}

/// Downscale with an anti-aliasing pre-filter matched to the scale.
pub fn downsample_lerf(job: &ResampleJob<'_>) -> Result<Resampled> {
    let (r_h, r_w) = match job.transform {
        GeometricTransform::Scale { r_h, r_w } if *r_h < 1.0 && *r_w < 1.0 => (*r_h, *r_w),
        other => {
            return Err(LerfError::Parameter(format!("downsampling needs both scale factors < 1, got {other:?}")))
        }
    };
    let job = ResampleJob { preproc: PreprocessConfig::anti_alias_for_scale(r_h, r_w), ..job.clone() };
    resample_lerf(&job)
}
