//! Benchmark runner over a directory of high-resolution images.
//!
//! Scale tasks crop each image so both factors divide it, degrade it with
//! Bicubic, resample back with the configured method and score against the
//! cropped original. Degraded inputs and method outputs are rounded to 8 bits,
//! as they would be when stored as PNG. Warp tasks read a target-to-source homography per image
//! (in high-resolution pixel units), render the reference from the full
//! image with Bicubic, render the method from a half-resolution copy, and
//! score on the pixels valid in both.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{LerfError, Result};
use crate::geometry::{load_homography, GeometricTransform, Matrix3, ValidMask};
use crate::image::{load_image, rgb_to_luma, ImageBuffer};
use crate::kernels::KernelFamily;
use crate::lut::LutBank;
use crate::metrics::{degrade_bicubic_to, mpsnr, psnr_y, psnr_y_masked, ssim};
use crate::resampler::{resample, PreprocessConfig, ResampleJob};

/// Downscale applied to the source of warp tasks.
pub const WARP_SOURCE_SCALE: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub enum BenchTask {
    /// Upsampling by `(r_h, r_w)`, both >= 1.
    Scale { r_h: f64, r_w: f64 },
    /// Homography read from `<matrices>/<image stem>.txt`.
    Warp { matrices: PathBuf },
}

impl BenchTask {
    pub fn label(&self) -> String {
        match self {
            BenchTask::Scale { r_h, r_w } => format!("x{r_h}/x{r_w}"),
            BenchTask::Warp { .. } => "warp".into(),
        }
    }

    /// Parses `"2.0x2.0,1.5x2.0"` into scale tasks.
    pub fn parse_scales(spec: &str) -> Result<Vec<BenchTask>> {
        spec.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                let (h, w) = s
                    .split_once(['x', 'X'])
                    .ok_or_else(|| LerfError::Parameter(format!("task {s:?} is not of the form HxW")))?;
                let parse = |v: &str| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|e| LerfError::Parameter(format!("bad factor {v:?} in task {s:?}: {e}")))
                };
                let (r_h, r_w) = (parse(h)?, parse(w)?);
                if !(r_h >= 1.0 && r_w >= 1.0) {
                    return Err(LerfError::Parameter(format!("task {s:?}: factors must be >= 1")));
                }
                Ok(BenchTask::Scale { r_h, r_w })
            })
            .collect()
    }
}

/// How target images are produced.
#[derive(Debug, Clone)]
pub enum Method {
    /// Returns the reference itself, skipping degradation.
    Identity,
    Fixed(KernelFamily),
    /// Adaptive kernel driven by a LUT bank.
    Lerf { bank: LutBank, preproc: PreprocessConfig },
    /// Isotropic Gaussian with frozen hyper-parameters.
    FrozenGaussian,
}

impl Method {
    pub fn name(&self) -> String {
        match self {
            Method::Identity => "identity".into(),
            Method::Fixed(k) => k.name(),
            Method::Lerf { bank, .. } => bank.family().name(),
            Method::FrozenGaussian => "fixed-gaussian".into(),
        }
    }

    fn bank(&self) -> Option<&LutBank> {
        match self {
            Method::Lerf { bank, .. } => Some(bank),
            _ => None,
        }
    }

    fn render(&self, src: &ImageBuffer, t: &GeometricTransform, dims: (usize, usize)) -> Result<(ImageBuffer, ValidMask)> {
        let out = match self {
            Method::Identity => unreachable!("identity never renders"),
            Method::Fixed(k) => resample(&ResampleJob::new(src, t, *k).target_dims(dims.0, dims.1))?,
            Method::Lerf { bank, preproc } => resample(
                &ResampleJob::new(src, t, bank.family())
                    .bank(bank)
                    .preprocess(preproc.clone())
                    .target_dims(dims.0, dims.1),
            )?,
            Method::FrozenGaussian => crate::resampler::resample_fixed_gaussian(
                &ResampleJob::new(src, t, KernelFamily::AnisoGaussian).target_dims(dims.0, dims.1),
            )?,
        };
        Ok((out.image, out.mask))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord {
    pub image: String,
    pub task: String,
    pub psnr_y: f64,
    pub mpsnr: f64,
    pub ssim: f64,
    pub valid_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskMean {
    pub task: String,
    pub count: usize,
    pub psnr_y: f64,
    pub mpsnr: f64,
    pub ssim: f64,
    pub valid_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigEcho {
    pub method: String,
    pub bank_digest: Option<u64>,
    pub boundary: &'static str,
    pub luma: &'static str,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub records: Vec<MetricRecord>,
    pub task_means: Vec<TaskMean>,
    pub config: ConfigEcho,
}

impl BenchReport {
    pub fn from_records(mut records: Vec<MetricRecord>, config: ConfigEcho) -> Self {
        records.sort_by(|a, b| (&a.task, &a.image).cmp(&(&b.task, &b.image)));
        let mut task_means: Vec<TaskMean> = Vec::new();
        for r in &records {
            match task_means.last_mut() {
                Some(m) if m.task == r.task => {
                    m.count += 1;
                    m.psnr_y += r.psnr_y;
                    m.mpsnr += r.mpsnr;
                    m.ssim += r.ssim;
                    m.valid_fraction += r.valid_fraction;
                }
                _ => task_means.push(TaskMean {
                    task: r.task.clone(),
                    count: 1,
                    psnr_y: r.psnr_y,
                    mpsnr: r.mpsnr,
                    ssim: r.ssim,
                    valid_fraction: r.valid_fraction,
                }),
            }
        }
        for m in &mut task_means {
            let n = m.count as f64;
            m.psnr_y /= n;
            m.mpsnr /= n;
            m.ssim /= n;
            m.valid_fraction /= n;
        }
        BenchReport { records, task_means, config }
    }

    pub fn mean_for(&self, task: &str) -> Option<&TaskMean> {
        self.task_means.iter().find(|m| m.task == task)
    }

    /// One row per record: `image,task,psnr_y,mpsnr,ssim,valid_fraction`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("image,task,psnr_y,mpsnr,ssim,valid_fraction\n");
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{},{:.4},{:.4},{:.6},{:.6}",
                r.image, r.task, r.psnr_y, r.mpsnr, r.ssim, r.valid_fraction
            );
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| LerfError::io(path, e))
    }

    pub fn pretty(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "method: {}  bank: {}  boundary: {}  luma: {}",
            self.config.method,
            self.config.bank_digest.map_or("-".to_string(), |d| format!("{d:016x}")),
            self.config.boundary,
            self.config.luma
        );
        let _ = writeln!(s, "{:<14} {:>6} {:>9} {:>9} {:>8} {:>7}", "task", "images", "PSNR-Y", "mPSNR", "SSIM", "valid");
        for m in &self.task_means {
            let _ = writeln!(
                s,
                "{:<14} {:>6} {:>9.2} {:>9.2} {:>8.4} {:>7.3}",
                m.task, m.count, m.psnr_y, m.mpsnr, m.ssim, m.valid_fraction
            );
        }
        s
    }
}

/// PNG files of `dir`, sorted by name.
pub fn dataset_images(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let entries = std::fs::read_dir(dir).map_err(|e| LerfError::io(dir, e))?;
    let mut out: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .collect();
    out.sort();
    Ok(out)
}

fn luma_ssim(a: &ImageBuffer, b: &ImageBuffer, shave: usize) -> Result<f64> {
    let y = |img: &ImageBuffer| -> Result<ImageBuffer> {
        let l = if img.channels() == 3 { rgb_to_luma(img)? } else { img.clone() };
        let (h, w) = l.dims();
        if 2 * shave >= h || 2 * shave >= w {
            return Err(LerfError::Evaluation(format!("shave {shave} leaves nothing of {h}x{w}")));
        }
        l.crop(shave, shave, h - 2 * shave, w - 2 * shave)
    };
    ssim(&y(a)?, &y(b)?)
}

fn run_scale(hr: &ImageBuffer, r_h: f64, r_w: f64, method: &Method) -> Result<(f64, f64, f64, f64)> {
    let shave = r_h.max(r_w).ceil() as usize;
    if let Method::Identity = method {
        return Ok((
            psnr_y(hr, hr, shave)?,
            mpsnr(hr, hr, &ValidMask::full(hr.height(), hr.width()))?,
            luma_ssim(hr, hr, shave)?,
            1.0,
        ));
    }
    let lr_h = (hr.height() as f64 / r_h + 1e-9).floor() as usize;
    let lr_w = (hr.width() as f64 / r_w + 1e-9).floor() as usize;
    if lr_h == 0 || lr_w == 0 {
        return Err(LerfError::Evaluation(format!("image too small for x{r_h}/x{r_w}")));
    }
    let th = ((lr_h as f64 * r_h).round() as usize).min(hr.height());
    let tw = ((lr_w as f64 * r_w).round() as usize).min(hr.width());
    let gt = hr.crop(0, 0, th, tw)?;
    let lr = degrade_bicubic_to(&gt, 1.0 / r_h, 1.0 / r_w, (lr_h, lr_w))?.quantize_u8();
    let t = GeometricTransform::scale(r_h, r_w);
    let (sr, mask) = method.render(&lr, &t, (th, tw))?;
    let sr = sr.quantize_u8();
    Ok((psnr_y(&sr, &gt, shave)?, mpsnr(&sr, &gt, &mask)?, luma_ssim(&sr, &gt, shave)?, mask.fraction()))
}

fn run_warp(hr: &ImageBuffer, matrix: &Matrix3, method: &Method) -> Result<(f64, f64, f64, f64)> {
    let s = WARP_SOURCE_SCALE;
    let (h, w) = hr.dims();
    let (lh, lw) = ((h as f64 / s) as usize, (w as f64 / s) as usize);
    let hr = hr.crop(0, 0, (lh as f64 * s) as usize, (lw as f64 * s) as usize)?;
    let dims = hr.dims();
    let t_ref = GeometricTransform::backward_homography(*matrix);
    let reference = resample(&ResampleJob::new(&hr, &t_ref, KernelFamily::BICUBIC).target_dims(dims.0, dims.1))?;
    if let Method::Identity = method {
        let m = &reference.mask;
        let full = ValidMask::full(dims.0, dims.1);
        return Ok((psnr_y(&hr, &hr, 0)?, mpsnr(&hr, &hr, &full)?, luma_ssim(&hr, &hr, 0)?, m.fraction()));
    }
    let lr = degrade_bicubic_to(&hr, 1.0 / s, 1.0 / s, (lh, lw))?.quantize_u8();
    // Source coordinates are in the half-resolution frame.
    let shrink = Matrix3([[1.0 / s, 0.0, 0.0], [0.0, 1.0 / s, 0.0], [0.0, 0.0, 1.0]]);
    let t = GeometricTransform::backward_homography(shrink.mul(matrix));
    let (out, mask) = method.render(&lr, &t, dims)?;
    let both = ValidMask {
        height: dims.0,
        width: dims.1,
        data: mask.data.iter().zip(&reference.mask.data).map(|(a, b)| *a && *b).collect(),
    };
    let zero_outside = |img: &ImageBuffer| {
        let mut img = img.clone();
        for c in 0..img.channels() {
            for (v, m) in img.plane_mut(c).iter_mut().zip(&both.data) {
                if !m {
                    *v = 0.0;
                }
            }
        }
        img
    };
    let (out, gt) = (zero_outside(&out.quantize_u8()), zero_outside(&reference.image.quantize_u8()));
    Ok((psnr_y_masked(&out, &gt, &both)?, mpsnr(&out, &gt, &both)?, luma_ssim(&out, &gt, 0)?, both.fraction()))
}

fn image_id(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Evaluates `method` on every PNG of `dataset` for every task.
pub fn bench_run(dataset: impl AsRef<Path>, tasks: &[BenchTask], method: &Method) -> Result<BenchReport> {
    let images = dataset_images(&dataset)?;
    if images.is_empty() {
        return Err(LerfError::Configuration(format!("no PNG images in {}", dataset.as_ref().display())));
    }
    if tasks.is_empty() {
        return Err(LerfError::Configuration("no benchmark tasks".into()));
    }
    let loaded: Vec<(String, ImageBuffer)> = images
        .par_iter()
        .map(|p| Ok((image_id(p), load_image(p)?)))
        .collect::<Result<_>>()?;
    let jobs: Vec<(&(String, ImageBuffer), &BenchTask)> =
        loaded.iter().flat_map(|img| tasks.iter().map(move |t| (img, t))).collect();
    let records: Vec<MetricRecord> = jobs
        .par_iter()
        .map(|((id, hr), task)| {
            let (psnr_y, mpsnr, ssim, valid_fraction) = match task {
                BenchTask::Scale { r_h, r_w } => run_scale(hr, *r_h, *r_w, method)?,
                BenchTask::Warp { matrices } => {
                    let m = load_homography(matrices.join(format!("{id}.txt")))?;
                    run_warp(hr, &m, method)?
                }
            };
            Ok(MetricRecord { image: id.clone(), task: task.label(), psnr_y, mpsnr, ssim, valid_fraction })
        })
        .collect::<Result<_>>()?;
    let config = ConfigEcho {
        method: method.name(),
        bank_digest: method.bank().map(LutBank::digest),
        boundary: "replicate",
        luma: "bt601-limited",
    };
    Ok(BenchReport::from_records(records, config))
}
