//! Per-source-pixel hyper-parameter maps and their binary file form.
//!
//! File layout (little-endian): magic `LHPM`, version `u16 = 1`, family `u8`
//! (1 = amplified linear, 2 = anisotropic Gaussian), channel count `u8`,
//! height `u32`, width `u32`, then `f64[height * width * channels]`
//! pixel-major.

use std::path::Path;

use crate::error::{LerfError, Result};
use crate::kernels::{clamp_hyperparams, GaussianParams, HyperParams, KernelFamily};

const MAGIC: &[u8; 4] = b"LHPM";
const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct HyperParamMap {
    height: usize,
    width: usize,
    family: KernelFamily,
    values: Vec<f64>,
}

pub(crate) fn family_code(family: KernelFamily) -> Result<u8> {
    match family {
        KernelFamily::AmplifiedLinear => Ok(1),
        KernelFamily::AnisoGaussian => Ok(2),
        other => Err(LerfError::Configuration(format!("{} has no hyper-parameters", other.name()))),
    }
}

pub(crate) fn family_from_code(code: u8, offset: usize) -> Result<KernelFamily> {
    match code {
        1 => Ok(KernelFamily::AmplifiedLinear),
        2 => Ok(KernelFamily::AnisoGaussian),
        c => Err(LerfError::format(offset, format!("unknown family code {c}"))),
    }
}

impl HyperParamMap {
    pub fn new(height: usize, width: usize, family: KernelFamily, values: Vec<f64>) -> Result<Self> {
        let c = family
            .hyper_param_count()
            .ok_or_else(|| LerfError::Configuration(format!("{} has no hyper-parameters", family.name())))?;
        if values.len() != height * width * c {
            return Err(LerfError::Shape(format!(
                "hyper-parameter map of length {} does not match {height}x{width}x{c}",
                values.len()
            )));
        }
        Ok(HyperParamMap { height, width, family, values })
    }

    /// Same parameters at every pixel.
    pub fn uniform(height: usize, width: usize, params: HyperParams) -> Self {
        let family = match params {
            HyperParams::Linear { .. } => KernelFamily::AmplifiedLinear,
            HyperParams::Gaussian(_) => KernelFamily::AnisoGaussian,
        };
        let px = params.to_vec();
        let values = (0..height * width).flat_map(|_| px.iter().copied()).collect();
        HyperParamMap { height, width, family, values }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn channels(&self) -> usize {
        self.family.hyper_param_count().unwrap_or(1)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> &[f64] {
        let c = self.channels();
        let i = (row * self.width + col) * c;
        &self.values[i..i + c]
    }

    #[inline]
    pub fn alpha(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    #[inline]
    pub fn gaussian(&self, row: usize, col: usize) -> GaussianParams {
        let v = self.at(row, col);
        GaussianParams::new(v[0], v[1], v[2])
    }

    /// Map of a 180-degree rotated source.
    pub fn rotate180(&self) -> HyperParamMap {
        let c = self.channels();
        let n = self.height * self.width;
        let mut values = vec![0.0; self.values.len()];
        for i in 0..n {
            let j = n - 1 - i;
            values[j * c..(j + 1) * c].copy_from_slice(&self.values[i * c..(i + 1) * c]);
        }
        HyperParamMap { values, ..self.clone() }
    }

    /// Fails if any entry would be altered by clamping.
    pub fn check_bounds(&self) -> Result<()> {
        for (i, px) in self.values.chunks(self.channels()).enumerate() {
            let clamped = clamp_hyperparams(self.family, px)?.to_vec();
            if clamped != px {
                return Err(LerfError::Parameter(format!(
                    "hyper-parameters {px:?} at pixel {i} are out of bounds"
                )));
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.values.len() * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(family_code(self.family).expect("map family is adaptive"));
        out.push(self.channels() as u8);
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 {
            return Err(LerfError::format(bytes.len(), "truncated hyper-parameter map header"));
        }
        if &bytes[0..4] != MAGIC {
            return Err(LerfError::format(0, "bad hyper-parameter map magic"));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(LerfError::format(4, format!("unsupported version {version}")));
        }
        let family = family_from_code(bytes[6], 6)?;
        let c = bytes[7] as usize;
        if Some(c) != family.hyper_param_count() {
            return Err(LerfError::format(7, format!("{c} channels inconsistent with {}", family.name())));
        }
        let h = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let w = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let need = 16 + h * w * c * 8;
        if bytes.len() != need {
            return Err(LerfError::format(bytes.len().min(need), format!("expected {need} bytes, found {}", bytes.len())));
        }
        let values = bytes[16..].chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
        HyperParamMap::new(h, w, family, values)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| LerfError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| LerfError::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
