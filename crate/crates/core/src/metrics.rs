//! Image quality metrics and the Bicubic degradation model.

use crate::error::{LerfError, Result};
use crate::geometry::{GeometricTransform, ValidMask};
use crate::image::{rgb_to_luma, ImageBuffer};
use crate::kernels::{eval_fixed_1d, KernelFamily};

/// Reported PSNR for error-free pairs.
pub const PSNR_CAP: f64 = 100.0;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

/// PSNR in dB for a peak of 1.0, capped at [`PSNR_CAP`].
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP
    } else {
        (10.0 * (1.0 / mse).log10()).min(PSNR_CAP)
    }
}

fn same_shape(a: &ImageBuffer, b: &ImageBuffer) -> Result<()> {
    if a.dims() != b.dims() || a.channels() != b.channels() {
        return Err(LerfError::Shape(format!(
            "{}x{}x{} vs {}x{}x{}",
            a.height(),
            a.width(),
            a.channels(),
            b.height(),
            b.width(),
            b.channels()
        )));
    }
    Ok(())
}

fn luma(img: &ImageBuffer) -> Result<ImageBuffer> {
    if img.channels() == 3 {
        rgb_to_luma(img)
    } else {
        Ok(img.clone())
    }
}

fn shave(img: &ImageBuffer, border: usize) -> Result<ImageBuffer> {
    if border == 0 {
        return Ok(img.clone());
    }
    let (h, w) = img.dims();
    if 2 * border >= h || 2 * border >= w {
        return Err(LerfError::Evaluation(format!("shave {border} leaves nothing of {h}x{w}")));
    }
    img.crop(border, border, h - 2 * border, w - 2 * border)
}

/// Luma PSNR after removing `shave_px` pixels from every border.
pub fn psnr_y(a: &ImageBuffer, b: &ImageBuffer, shave_px: usize) -> Result<f64> {
    same_shape(a, b)?;
    let ya = shave(&luma(a)?, shave_px)?;
    let yb = shave(&luma(b)?, shave_px)?;
    let mse = ya.data().iter().zip(yb.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / ya.data().len() as f64;
    Ok(psnr_from_mse(mse))
}

/// Luma PSNR restricted to `mask`.
pub fn psnr_y_masked(a: &ImageBuffer, b: &ImageBuffer, mask: &ValidMask) -> Result<f64> {
    let (ya, yb) = (luma(a)?, luma(b)?);
    mpsnr(&ya, &yb, mask)
}

/// PSNR with squared errors pooled over all channels of the masked pixels.
pub fn mpsnr(a: &ImageBuffer, b: &ImageBuffer, mask: &ValidMask) -> Result<f64> {
    same_shape(a, b)?;
    if (mask.height, mask.width) != a.dims() {
        return Err(LerfError::Shape(format!(
            "mask {}x{} does not match image {}x{}",
            mask.height,
            mask.width,
            a.height(),
            a.width()
        )));
    }
    let n = mask.count();
    if n == 0 {
        return Err(LerfError::Evaluation("empty validity mask".into()));
    }
    let mut sse = 0.0;
    for c in 0..a.channels() {
        for (i, (x, y)) in a.plane(c).iter().zip(b.plane(c)).enumerate() {
            if mask.data[i] {
                sse += (x - y) * (x - y);
            }
        }
    }
    Ok(psnr_from_mse(sse / (n * a.channels()) as f64))
}

/// Valid-mode separable filtering of one plane with a symmetric kernel.
fn filter_valid(plane: &[f64], h: usize, w: usize, k: &[f64]) -> (Vec<f64>, usize, usize) {
    let n = k.len();
    let (oh, ow) = (h + 1 - n, w + 1 - n);
    let mut tmp = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            tmp[y * ow + x] = k.iter().enumerate().map(|(i, kv)| kv * plane[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = k.iter().enumerate().map(|(i, kv)| kv * tmp[(y + i) * ow + x]).sum();
        }
    }
    (out, oh, ow)
}

/// Single-scale SSIM of two single-channel images with an 11x11 Gaussian
/// window (sigma 1.5), averaged over all fully-contained window positions.
pub fn ssim(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    same_shape(a, b)?;
    if a.channels() != 1 {
        return Err(LerfError::Shape(format!("SSIM expects one channel, got {}", a.channels())));
    }
    let (h, w) = a.dims();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(LerfError::Evaluation(format!("SSIM needs at least 11x11 pixels, got {h}x{w}")));
    }
    let r = (SSIM_WINDOW / 2) as i64;
    let mut k: Vec<f64> = (-r..=r).map(|i| (-((i * i) as f64) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);

    let (pa, pb) = (a.plane(0), b.plane(0));
    let sq = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| x * y).collect::<Vec<_>>();
    let (mu_a, oh, ow) = filter_valid(pa, h, w, &k);
    let (mu_b, ..) = filter_valid(pb, h, w, &k);
    let (e_aa, ..) = filter_valid(&sq(pa, pa), h, w, &k);
    let (e_bb, ..) = filter_valid(&sq(pb, pb), h, w, &k);
    let (e_ab, ..) = filter_valid(&sq(pa, pb), h, w, &k);

    let c1 = (SSIM_K1 * 1.0) * (SSIM_K1 * 1.0);
    let c2 = (SSIM_K2 * 1.0) * (SSIM_K2 * 1.0);
    let mut total = 0.0;
    for i in 0..oh * ow {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = e_aa[i] - ma * ma;
        let vb = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok(total / (oh * ow) as f64)
}

/// Bicubic (Keys, a = -0.5) downscale by factors in `(0, 1]`; output size is
/// `floor(src * r)` per axis.
///
/// Follows the usual super-resolution degradation: the kernel is stretched by
/// `1 / r` so it also low-passes, and borders mirror symmetrically.
pub fn degrade_bicubic(hr: &ImageBuffer, r_h: f64, r_w: f64) -> Result<ImageBuffer> {
    let t = GeometricTransform::scale(r_h, r_w);
    let dims = t.natural_target_dims(hr.height(), hr.width());
    degrade_bicubic_to(hr, r_h, r_w, dims)
}

/// [`degrade_bicubic`] with an explicit output size.
pub fn degrade_bicubic_to(hr: &ImageBuffer, r_h: f64, r_w: f64, dims: (usize, usize)) -> Result<ImageBuffer> {
    for r in [r_h, r_w] {
        if !(r > 0.0 && r <= 1.0) {
            return Err(LerfError::Parameter(format!("degradation factor must be in (0, 1], got {r}")));
        }
    }
    let (h, w) = hr.dims();
    let (th, tw) = dims;
    if th == 0 || tw == 0 {
        return Err(LerfError::Shape("degraded image would be empty".into()));
    }
    let wy = stretched_weights(h, th, r_h);
    let wx = stretched_weights(w, tw, r_w);
    let mut data = Vec::with_capacity(th * tw * hr.channels());
    let mut rows = vec![0.0; h * tw];
    for c in 0..hr.channels() {
        let plane = hr.plane(c);
        for y in 0..h {
            let src = &plane[y * w..(y + 1) * w];
            for (x, taps) in wx.iter().enumerate() {
                rows[y * tw + x] = taps.iter().map(|&(j, k)| k * src[j]).sum();
            }
        }
        for taps in &wy {
            for x in 0..tw {
                data.push(taps.iter().map(|&(i, k)| k * rows[i * tw + x]).sum());
            }
        }
    }
    let mut out = ImageBuffer::new(th, tw, hr.channels(), data)?;
    out.colorspace = hr.colorspace;
    Ok(out)
}

fn mirror(i: i64, len: usize) -> usize {
    let n = len as i64;
    let m = i.rem_euclid(2 * n);
    (if m < n { m } else { 2 * n - 1 - m }) as usize
}

/// Per output sample, `(source index, weight)` pairs of the stretched kernel.
fn stretched_weights(len: usize, out_len: usize, r: f64) -> Vec<Vec<(usize, f64)>> {
    let half = 2.0 / r;
    (0..out_len)
        .map(|t| {
            let u = (t as f64 + 0.5) / r - 0.5;
            let lo = (u - half).floor() as i64;
            let hi = (u + half).ceil() as i64;
            let mut taps: Vec<(usize, f64)> = (lo..=hi)
                .filter_map(|j| {
                    let k = eval_fixed_1d(KernelFamily::BICUBIC, r * (u - j as f64)).expect("fixed kernel");
                    (k != 0.0).then(|| (mirror(j, len), k))
                })
                .collect();
            let sum: f64 = taps.iter().map(|t| t.1).sum();
            for t in &mut taps {
                t.1 /= sum;
            }
            taps
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::ColorSpace;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(h: usize, w: usize, c: usize, seed: u64) -> ImageBuffer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImageBuffer::from_fn(h, w, c, |_, _, _| rng.random::<f64>()).unwrap()
    }

    #[test]
    fn psnr_examples() {
        let a = random_image(16, 16, 3, 1);
        assert_eq!(psnr_y(&a, &a, 0).unwrap(), PSNR_CAP);

        let ya = ImageBuffer::from_fn(8, 8, 1, |_, y, x| ((y * 8 + x) as f64 * 3.0).round() / 255.0).unwrap();
        let yb = ya.map(|v| v + 1.0 / 255.0);
        let p = psnr_y(&ya, &yb, 0).unwrap();
        assert!((p - 20.0 * 255f64.log10()).abs() < 1e-9);
        assert!((p - 48.13).abs() < 0.01);

        let b = random_image(16, 16, 3, 2);
        assert_eq!(psnr_y(&a, &b, 2).unwrap(), psnr_y(&b, &a, 2).unwrap());
        assert!(matches!(psnr_y(&a, &random_image(15, 16, 3, 3), 0), Err(LerfError::Shape(_))));
    }

    #[test]
    fn psnr_decreases_with_noise() {
        let a = random_image(32, 32, 1, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noise: Vec<f64> = (0..32 * 32).map(|_| rng.random::<f64>() - 0.5).collect();
        let mut prev = f64::INFINITY;
        for amp in [0.01, 0.02, 0.05, 0.1] {
            let b = ImageBuffer::new(32, 32, 1, a.data().iter().zip(&noise).map(|(x, n)| x + amp * n).collect()).unwrap();
            let p = psnr_y(&a, &b, 0).unwrap();
            let s = ssim(&a, &b).unwrap();
            assert!(p < prev);
            assert!(s < 1.0);
            prev = p;
        }
    }

    #[test]
    fn mpsnr_examples() {
        let a = random_image(4, 4, 3, 6);
        assert_eq!(mpsnr(&a, &a, &ValidMask::full(4, 4)).unwrap(), PSNR_CAP);

        let mut b = a.clone();
        for c in 0..3 {
            for y in 2..4 {
                for x in 0..4 {
                    b.set(c, y, x, 1.0 - a.get(c, y, x));
                }
            }
        }
        let top = ValidMask { height: 4, width: 4, data: (0..16).map(|i| i < 8).collect() };
        assert_eq!(mpsnr(&a, &b, &top).unwrap(), PSNR_CAP);

        // Checkerboard mask, hand-pooled squared errors.
        let checker = ValidMask { height: 4, width: 4, data: (0..16).map(|i| (i / 4 + i % 4) % 2 == 0).collect() };
        let base = ImageBuffer::constant(4, 4, 3, 0.5).unwrap();
        let other = ImageBuffer::from_fn(4, 4, 3, |c, y, x| 0.5 + 0.01 * (c + 1) as f64 * ((y + x) % 3) as f64).unwrap();
        let mut sse = 0.0;
        let mut n = 0;
        for y in 0..4 {
            for x in 0..4 {
                if (y + x) % 2 == 0 {
                    for c in 0..3 {
                        let d = 0.01 * (c + 1) as f64 * ((y + x) % 3) as f64;
                        sse += d * d;
                        n += 1;
                    }
                }
            }
        }
        let want = 10.0 * (n as f64 / sse).log10();
        assert!((mpsnr(&base, &other, &checker).unwrap() - want).abs() < 1e-9);

        let empty = ValidMask { height: 4, width: 4, data: vec![false; 16] };
        assert!(matches!(mpsnr(&a, &b, &empty), Err(LerfError::Evaluation(_))));
    }

    #[test]
    fn ssim_examples() {
        let a = random_image(20, 24, 1, 7);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(ssim(&random_image(10, 30, 1, 1), &random_image(10, 30, 1, 2)), Err(LerfError::Evaluation(_))));

        let bin = a.map(|v| if v > 0.5 { 1.0 } else { 0.0 });
        let inv = bin.map(|v| 1.0 - v);
        let s = ssim(&bin, &inv).unwrap();
        assert!((-1.0..=1.0).contains(&s));
        assert!(s < 0.0);

        // Constants: variance and covariance vanish, only luminance remains.
        let c = ImageBuffer::constant(16, 16, 1, 0.4).unwrap();
        let d = ImageBuffer::constant(16, 16, 1, 0.5).unwrap();
        let c1 = 0.0001;
        let want = (2.0 * 0.4 * 0.5 + c1) / (0.16 + 0.25 + c1);
        assert!((ssim(&c, &d).unwrap() - want).abs() < 1e-9);
        assert_eq!(ssim(&c, &d).unwrap(), ssim(&d, &c).unwrap());
    }

    #[test]
    fn degrade_identity_and_constants() {
        let a = random_image(9, 7, 3, 8).with_colorspace(ColorSpace::Rgb);
        let same = degrade_bicubic(&a, 1.0, 1.0).unwrap();
        assert_eq!(same.dims(), a.dims());
        assert!(same.data().iter().zip(a.data()).all(|(x, y)| (x - y).abs() < 1e-9));
        let flat = ImageBuffer::constant(12, 10, 1, 0.25).unwrap();
        let low = degrade_bicubic(&flat, 0.5, 0.3).unwrap();
        assert_eq!(low.dims(), (6, 3));
        assert!(low.data().iter().all(|v| (v - 0.25).abs() < 1e-12));
        assert!(matches!(degrade_bicubic(&a, 1.5, 1.0), Err(LerfError::Parameter(_))));
    }

    #[test]
    fn degrade_ramp_by_hand() {
        // At r = 0.5 output t centres on source 2t + 0.5 and the kernel is
        // stretched twofold: taps 2t-3..2t+4 weigh k(1.75), k(1.25), k(0.75),
        // k(0.25) mirrored, before normalization.
        let a = -0.5f64;
        let k = |x: f64| {
            let x = x.abs();
            if x <= 1.0 {
                (a + 2.0) * x.powi(3) - (a + 3.0) * x.powi(2) + 1.0
            } else {
                a * x.powi(3) - 5.0 * a * x.powi(2) + 8.0 * a * x - 4.0 * a
            }
        };
        let raw: Vec<f64> = [1.75, 1.25, 0.75, 0.25, 0.25, 0.75, 1.25, 1.75].iter().map(|&d| k(d)).collect();
        let sum: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|v| v / sum).collect();
        // Mirrored indices for -3..=8 on a length-6 axis.
        let reflect = |i: i64| -> usize { [2, 1, 0, 0, 1, 2, 3, 4, 5, 5, 4, 3][(i + 3) as usize] };
        let ramp = ImageBuffer::from_fn(6, 6, 1, |_, y, x| ((y * 6 + x) as f64 / 35.0).powi(2)).unwrap();
        let out = degrade_bicubic(&ramp, 0.5, 0.5).unwrap();
        assert_eq!(out.dims(), (3, 3));
        for ty in 0..3 {
            for tx in 0..3 {
                let mut want = 0.0;
                for (i, wy) in w.iter().enumerate() {
                    for (j, wx) in w.iter().enumerate() {
                        let y = reflect(2 * ty as i64 - 3 + i as i64);
                        let x = reflect(2 * tx as i64 - 3 + j as i64);
                        want += wy * wx * ramp.get(0, y, x);
                    }
                }
                assert!((out.get(0, ty, tx) - want).abs() < 1e-12, "({ty},{tx})");
            }
        }
    }
}
