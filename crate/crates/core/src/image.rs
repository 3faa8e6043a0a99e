//! Raster container, color conversion, boundary handling, separable Gaussian
//! filtering and PNG I/O.
//!
//! Samples are stored planar (`channel`, `row`, `col`) as `f64` in the
//! canonical `[0, 1]` range. Quantization to 8 bits only happens at file
//! boundaries.

use std::path::Path;

use image::{ColorType, DynamicImage, ImageFormat, ImageReader};
use rayon::prelude::*;

use crate::error::{LerfError, Result};

/// Bit depth the buffer originated from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DepthTag {
    U8,
    Float,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColorSpace {
    Rgb,
    Y,
    Generic,
}

/// How reads outside the raster are resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundaryPolicy {
    /// Clamp the coordinate to the nearest in-bounds pixel.
    #[default]
    Replicate,
}

impl BoundaryPolicy {
    #[inline]
    pub fn resolve(self, coord: i64, len: usize) -> usize {
        match self {
            BoundaryPolicy::Replicate => coord.clamp(0, len as i64 - 1) as usize,
        }
    }
}

/// Planar multi-channel raster.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
    pub depth: DepthTag,
    pub colorspace: ColorSpace,
}

impl ImageBuffer {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(LerfError::Shape(format!("empty image {height}x{width}")));
        }
        if channels != 1 && channels != 3 {
            return Err(LerfError::Shape(format!("unsupported channel count {channels}")));
        }
        if data.len() != height * width * channels {
            return Err(LerfError::Shape(format!(
                "data length {} does not match {height}x{width}x{channels}",
                data.len()
            )));
        }
        let colorspace = if channels == 3 { ColorSpace::Rgb } else { ColorSpace::Generic };
        Ok(ImageBuffer { height, width, channels, data, depth: DepthTag::Float, colorspace })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Result<Self> {
        Self::new(height, width, channels, vec![0.0; height * width * channels])
    }

    pub fn constant(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    /// Builds an image from `f(channel, row, col)`.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self::new(height, width, channels, data)
    }

    pub fn with_colorspace(mut self, colorspace: ColorSpace) -> Self {
        self.colorspace = colorspace;
        self
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn plane(&self, channel: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[channel * n..(channel + 1) * n]
    }

    #[inline]
    pub fn plane_mut(&mut self, channel: usize) -> &mut [f64] {
        let n = self.height * self.width;
        &mut self.data[channel * n..(channel + 1) * n]
    }

    #[inline]
    pub fn get(&self, channel: usize, row: usize, col: usize) -> f64 {
        self.data[(channel * self.height + row) * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, channel: usize, row: usize, col: usize, value: f64) {
        self.data[(channel * self.height + row) * self.width + col] = value;
    }

    /// Single-channel read at any integer coordinate.
    #[inline]
    pub fn read_padded(&self, channel: usize, row: i64, col: i64, policy: BoundaryPolicy) -> f64 {
        let r = policy.resolve(row, self.height);
        let c = policy.resolve(col, self.width);
        self.get(channel, r, c)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ImageBuffer {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v = f(*v));
        out
    }

    /// Rotates the raster by 180 degrees.
    pub fn rotate180(&self) -> ImageBuffer {
        let mut out = self.clone();
        let n = self.height * self.width;
        for c in 0..self.channels {
            let src = self.plane(c);
            let dst = &mut out.data[c * n..(c + 1) * n];
            for (i, v) in src.iter().enumerate() {
                dst[n - 1 - i] = *v;
            }
        }
        out
    }

    /// Crops `[top, top + height) x [left, left + width)`.
    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<ImageBuffer> {
        if top + height > self.height || left + width > self.width {
            return Err(LerfError::Shape(format!(
                "crop {height}x{width}+{top}+{left} exceeds {}x{}",
                self.height, self.width
            )));
        }
        let mut out = ImageBuffer::from_fn(height, width, self.channels, |c, y, x| {
            self.get(c, top + y, left + x)
        })?;
        out.depth = self.depth;
        out.colorspace = self.colorspace;
        Ok(out)
    }

    /// Rounds every sample to the nearest 8-bit level, as a save/load cycle would.
    pub fn quantize_u8(&self) -> ImageBuffer {
        self.map(|v| to_u8(v) as f64 / 255.0)
    }

    /// Interleaved 8-bit samples (HWC), clamped to `[0, 1]` first.
    pub fn to_interleaved_u8(&self) -> Vec<u8> {
        let n = self.height * self.width;
        let mut out = vec![0u8; n * self.channels];
        for c in 0..self.channels {
            for (i, v) in self.plane(c).iter().enumerate() {
                out[i * self.channels + c] = to_u8(*v);
            }
        }
        out
    }

    pub fn from_interleaved_u8(height: usize, width: usize, channels: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != height * width * channels {
            return Err(LerfError::Shape(format!(
                "byte length {} does not match {height}x{width}x{channels}",
                bytes.len()
            )));
        }
        let n = height * width;
        let mut data = vec![0.0; n * channels];
        for (i, b) in bytes.iter().enumerate() {
            let (px, c) = (i / channels, i % channels);
            data[c * n + px] = *b as f64 / 255.0;
        }
        let mut img = Self::new(height, width, channels, data)?;
        img.depth = DepthTag::U8;
        Ok(img)
    }
}

#[inline]
fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Reads an 8-bit grayscale or RGB PNG into the canonical float domain.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    let path = path.as_ref();
    let decode_err = |reason: String| LerfError::Decode { path: path.to_path_buf(), reason };
    let reader = ImageReader::open(path).map_err(|e| LerfError::io(path, e))?;
    let reader = reader.with_guessed_format().map_err(|e| LerfError::io(path, e))?;
    if reader.format() != Some(ImageFormat::Png) {
        return Err(decode_err(format!("not a PNG file ({:?})", reader.format())));
    }
    let decoded = reader.decode().map_err(|e| decode_err(e.to_string()))?;
    let (h, w) = (decoded.height() as usize, decoded.width() as usize);
    match decoded {
        DynamicImage::ImageLuma8(buf) => {
            let img = ImageBuffer::from_interleaved_u8(h, w, 1, buf.as_raw())?;
            Ok(img.with_colorspace(ColorSpace::Generic))
        }
        DynamicImage::ImageRgb8(buf) => {
            let img = ImageBuffer::from_interleaved_u8(h, w, 3, buf.as_raw())?;
            Ok(img.with_colorspace(ColorSpace::Rgb))
        }
        other => Err(decode_err(format!(
            "unsupported color type {:?}; expected 8-bit gray or RGB",
            other.color()
        ))),
    }
}

/// Writes the buffer as an 8-bit PNG, clamping to `[0, 1]` first.
pub fn save_image(img: &ImageBuffer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let color = match img.channels() {
        1 => ColorType::L8,
        3 => ColorType::Rgb8,
        c => return Err(LerfError::Shape(format!("cannot save {c}-channel image"))),
    };
    let bytes = img.to_interleaved_u8();
    image::save_buffer_with_format(
        path,
        &bytes,
        img.width() as u32,
        img.height() as u32,
        color,
        ImageFormat::Png,
    )
    .map_err(|e| match e {
        image::ImageError::IoError(io) => LerfError::io(path, io),
        other => LerfError::Decode { path: path.to_path_buf(), reason: other.to_string() },
    })
}

/// BT.601 limited-range luma of an RGB image.
pub fn rgb_to_luma(img: &ImageBuffer) -> Result<ImageBuffer> {
    if img.channels() != 3 {
        return Err(LerfError::Shape(format!(
            "luma conversion needs 3 channels, got {}",
            img.channels()
        )));
    }
    let (r, g, b) = (img.plane(0), img.plane(1), img.plane(2));
    let data = r
        .iter()
        .zip(g)
        .zip(b)
        .map(|((r, g), b)| (16.0 + 65.481 * r + 128.553 * g + 24.966 * b) / 255.0)
        .collect();
    let mut out = ImageBuffer::new(img.height(), img.width(), 1, data)?;
    out.depth = img.depth;
    Ok(out.with_colorspace(ColorSpace::Y))
}

/// All channels at `(row, col)`, with out-of-bounds coordinates resolved by `policy`.
pub fn pad_read(img: &ImageBuffer, row: i64, col: i64, policy: BoundaryPolicy) -> Vec<f64> {
    (0..img.channels())
        .map(|c| img.read_padded(c, row, col, policy))
        .collect()
}

/// Normalized Gaussian taps truncated at `ceil(3 sigma)`.
pub fn gaussian_kernel_1d(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// Isotropic separable Gaussian blur with replicate boundary.
pub fn gaussian_filter(img: &ImageBuffer, sigma: f64) -> Result<ImageBuffer> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(LerfError::Parameter(format!("gaussian sigma must be > 0, got {sigma}")));
    }
    gaussian_filter_xy(img, sigma, sigma)
}

/// Separable Gaussian blur with independent per-axis deviations. An axis with
/// sigma 0 is left untouched.
pub fn gaussian_filter_xy(img: &ImageBuffer, sigma_y: f64, sigma_x: f64) -> Result<ImageBuffer> {
    for s in [sigma_y, sigma_x] {
        if !(s >= 0.0) || !s.is_finite() {
            return Err(LerfError::Parameter(format!("gaussian sigma must be >= 0, got {s}")));
        }
    }
    let (h, w) = img.dims();
    let policy = BoundaryPolicy::Replicate;
    let mut out = img.clone();
    for c in 0..img.channels() {
        if sigma_x > 0.0 {
            let taps = gaussian_kernel_1d(sigma_x);
            let r = (taps.len() / 2) as i64;
            let src = out.plane(c).to_vec();
            out.plane_mut(c).par_chunks_mut(w).enumerate().for_each(|(y, row)| {
                let line = &src[y * w..(y + 1) * w];
                for (x, v) in row.iter_mut().enumerate() {
                    *v = taps
                        .iter()
                        .enumerate()
                        .map(|(k, t)| t * line[policy.resolve(x as i64 + k as i64 - r, w)])
                        .sum();
                }
            });
        }
        if sigma_y > 0.0 {
            let taps = gaussian_kernel_1d(sigma_y);
            let r = (taps.len() / 2) as i64;
            let src = out.plane(c).to_vec();
            out.plane_mut(c).par_chunks_mut(w).enumerate().for_each(|(y, row)| {
                for (x, v) in row.iter_mut().enumerate() {
                    *v = taps
                        .iter()
                        .enumerate()
                        .map(|(k, t)| t * src[policy.resolve(y as i64 + k as i64 - r, h) * w + x])
                        .sum();
                }
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(h: usize, w: usize, c: usize, seed: u64) -> ImageBuffer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImageBuffer::from_fn(h, w, c, |_, _, _| rng.random::<f64>()).unwrap()
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(ImageBuffer::new(2, 2, 3, vec![0.0; 11]).is_err());
        assert!(ImageBuffer::new(2, 2, 2, vec![0.0; 8]).is_err());
        assert!(ImageBuffer::new(0, 2, 1, vec![]).is_err());
    }

    #[test]
    fn luma_endpoints() {
        let black = ImageBuffer::constant(1, 1, 3, 0.0).unwrap();
        let white = ImageBuffer::constant(1, 1, 3, 1.0).unwrap();
        assert!((rgb_to_luma(&black).unwrap().get(0, 0, 0) - 16.0 / 255.0).abs() < 1e-12);
        assert!((rgb_to_luma(&white).unwrap().get(0, 0, 0) - 235.0 / 255.0).abs() < 1e-12);
    }

    #[test]
    fn luma_monotone_in_gray_level() {
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=255 {
            let v = i as f64 / 255.0;
            let y = rgb_to_luma(&ImageBuffer::constant(1, 1, 3, v).unwrap()).unwrap().get(0, 0, 0);
            assert!(y > prev);
            prev = y;
        }
    }

    #[test]
    fn luma_requires_rgb() {
        let gray = ImageBuffer::constant(2, 2, 1, 0.5).unwrap();
        assert!(matches!(rgb_to_luma(&gray), Err(LerfError::Shape(_))));
    }

    #[test]
    fn pad_read_replicates() {
        let img = random_image(5, 6, 3, 1);
        let p = BoundaryPolicy::Replicate;
        assert_eq!(pad_read(&img, -1, -1, p), pad_read(&img, 0, 0, p));
        assert_eq!(pad_read(&img, 5, 5, p), pad_read(&img, 4, 5, p));
        assert_eq!(pad_read(&img, 2, 3, p), (0..3).map(|c| img.get(c, 2, 3)).collect::<Vec<_>>());
        assert_eq!(pad_read(&img, -40, 99, p), pad_read(&img, 0, 5, p));
    }

    #[test]
    fn gaussian_rejects_non_positive_sigma() {
        let img = random_image(4, 4, 1, 2);
        assert!(matches!(gaussian_filter(&img, 0.0), Err(LerfError::Parameter(_))));
        assert!(matches!(gaussian_filter(&img, -1.0), Err(LerfError::Parameter(_))));
        assert!(gaussian_filter(&img, f64::NAN).is_err());
    }

    #[test]
    fn gaussian_keeps_constants() {
        let img = ImageBuffer::constant(7, 9, 3, 0.3).unwrap();
        for sigma in [0.3, 1.0, 2.5] {
            let out = gaussian_filter(&img, sigma).unwrap();
            assert!(out.data().iter().all(|v| (v - 0.3).abs() < 1e-15));
        }
    }

    #[test]
    fn gaussian_impulse_response() {
        // Truncated kernel for sigma 0.5 has radius 2: taps exp(-2 k^2), k in -2..=2.
        let g: Vec<f64> = (-2i32..=2).map(|k| (-2.0 * (k * k) as f64).exp()).collect();
        let s: f64 = g.iter().sum();
        let g0 = g[2] / s;
        let img = ImageBuffer::from_fn(9, 9, 1, |_, y, x| if y == 4 && x == 4 { 1.0 } else { 0.0 }).unwrap();
        let out = gaussian_filter(&img, 0.5).unwrap();
        assert!((out.get(0, 4, 4) - g0 * g0).abs() < 1e-15);
        for y in 0..9 {
            for x in 0..9 {
                let v = out.get(0, y, x);
                assert!((v - out.get(0, 8 - y, x)).abs() < 1e-15);
                assert!((v - out.get(0, y, 8 - x)).abs() < 1e-15);
                assert!((v - out.get(0, x, y)).abs() < 1e-15);
            }
        }
        assert!((out.get(0, 4, 5) - g0 * g[3] / s).abs() < 1e-15);
    }

    #[test]
    fn gaussian_preserves_mean_on_interior_dominated_image() {
        // Random content surrounded by a zero band wider than the kernel
        // radius: no mass reaches the border, so DC is preserved.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let img = ImageBuffer::from_fn(64, 64, 1, |_, y, x| {
            if (8..56).contains(&y) && (8..56).contains(&x) { rng.random::<f64>() } else { 0.0 }
        })
        .unwrap();
        for sigma in [0.5, 1.0, 2.0] {
            let out = gaussian_filter(&img, sigma).unwrap();
            assert!((img.mean() - out.mean()).abs() < 1e-6);
        }
    }

    #[test]
    fn gaussian_is_linear() {
        let a = random_image(16, 20, 3, 4);
        let b = random_image(16, 20, 3, 5);
        let combo = ImageBuffer::new(
            16,
            20,
            3,
            a.data().iter().zip(b.data()).map(|(x, y)| 0.7 * x - 1.3 * y).collect(),
        )
        .unwrap();
        let fa = gaussian_filter(&a, 1.2).unwrap();
        let fb = gaussian_filter(&b, 1.2).unwrap();
        let fc = gaussian_filter(&combo, 1.2).unwrap();
        for ((c, x), y) in fc.data().iter().zip(fa.data()).zip(fb.data()) {
            assert!((c - (0.7 * x - 1.3 * y)).abs() < 1e-6);
        }
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.png");
        let img = ImageBuffer::from_interleaved_u8(2, 2, 1, &[0, 255, 128, 64]).unwrap();
        save_image(&img, &path).unwrap();
        let back = load_image(&path).unwrap();
        assert_eq!(back.data(), &[0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0]);
        assert_eq!(back.depth, DepthTag::U8);

        let rgb = random_image(5, 7, 3, 6);
        let p2 = dir.path().join("rgb.png");
        save_image(&rgb, &p2).unwrap();
        let back = load_image(&p2).unwrap();
        assert_eq!(back.colorspace, ColorSpace::Rgb);
        for (a, b) in rgb.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
        save_image(&back, &p2).unwrap();
        assert_eq!(load_image(&p2).unwrap(), back);
    }

    #[test]
    fn rejects_sixteen_bit_png() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("deep.png");
        let buf = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::from_raw(2, 2, vec![0, 1000, 40000, 65535]).unwrap();
        buf.save_with_format(&path, ImageFormat::Png).unwrap();
        assert!(matches!(load_image(&path), Err(LerfError::Decode { .. })));
    }

    #[test]
    fn missing_file_reports_path() {
        let err = load_image("/nonexistent/nope.png").unwrap_err();
        assert!(err.to_string().contains("nope.png"));
    }

    #[test]
    fn rotate180_twice_is_identity() {
        let img = random_image(3, 5, 3, 7);
        assert_eq!(img.rotate180().rotate180(), img);
        assert_eq!(img.rotate180().get(1, 0, 0), img.get(1, 2, 4));
    }
}
