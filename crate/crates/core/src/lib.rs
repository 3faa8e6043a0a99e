//! Learned resampling: fixed and adaptive interpolation kernels, LUT-predicted
//! kernel hyper-parameters, geometric transforms and evaluation metrics.
//!
//! Images are planar `f64` in `[0, 1]`. Every transform maps target pixels
//! back to source coordinates with the pixel-center convention, so a scale
//! by `r` reads source position `(t + 0.5) / r - 0.5`.

// `!(x > lo)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod error;
pub mod geometry;
pub mod hypermap;
pub mod image;
pub mod kernels;
pub mod lut;
pub mod metrics;
pub mod resampler;

pub use bench::{bench_run, BenchReport, BenchTask, MetricRecord, Method, TaskMean};
pub use error::{LerfError, Result};
pub use geometry::{
    build_sample_grid, FlowField, GeometricTransform, HomographyDirection, Matrix3, SampleGrid, ValidMask,
};
pub use hypermap::HyperParamMap;
pub use image::{load_image, save_image, BoundaryPolicy, ColorSpace, DepthTag, ImageBuffer};
pub use kernels::{GaussianParams, HyperParams, KernelFamily};
pub use lut::{load_lut_bank, save_lut_bank, LutBank, LutTable, Pattern, PatternKind, RotationRole};
pub use metrics::{mpsnr, psnr_y, ssim, PSNR_CAP};
pub use resampler::{resample, PreprocessConfig, ResampleJob, Resampled};
