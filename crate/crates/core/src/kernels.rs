//! Resampling weight functions.
//!
//! Fixed families (nearest, linear, Keys cubic, Lanczos) are separable and
//! evaluated on a square support around the anchor. Adaptive families take
//! per-support-pixel hyper-parameters on the 2x2 support and are always
//! normalized to a partition of unity.

use crate::error::{LerfError, Result};

pub const ALPHA_MIN: f64 = 1e-3;
pub const ALPHA_MAX: f64 = 2.0;
pub const RHO_MAX: f64 = 0.95;
pub const INV_SIGMA_MIN: f64 = 1e-3;
pub const INV_SIGMA_MAX: f64 = 4.0;

/// Standard Keys shape parameter.
pub const KEYS_A: f64 = -0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelFamily {
    Nearest,
    Linear,
    KeysCubic { a: f64 },
    Lanczos { lobes: u8 },
    AmplifiedLinear,
    AnisoGaussian,
}

impl KernelFamily {
    pub const BICUBIC: KernelFamily = KernelFamily::KeysCubic { a: KEYS_A };

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelFamily::Lanczos { lobes } if lobes != 2 && lobes != 3 => {
                Err(LerfError::Parameter(format!("Lanczos lobes must be 2 or 3, got {lobes}")))
            }
            KernelFamily::KeysCubic { a } if !a.is_finite() => {
                Err(LerfError::Parameter(format!("Keys parameter must be finite, got {a}")))
            }
            _ => Ok(()),
        }
    }

    pub fn is_adaptive(&self) -> bool {
        matches!(self, KernelFamily::AmplifiedLinear | KernelFamily::AnisoGaussian)
    }

    /// Support width per axis.
    pub fn taps(&self) -> usize {
        match self {
            KernelFamily::Nearest | KernelFamily::Linear => 2,
            KernelFamily::KeysCubic { .. } => 4,
            KernelFamily::Lanczos { lobes } => 2 * *lobes as usize,
            KernelFamily::AmplifiedLinear | KernelFamily::AnisoGaussian => 2,
        }
    }

    /// Hyper-parameters per source pixel for adaptive families.
    pub fn hyper_param_count(&self) -> Option<usize> {
        match self {
            KernelFamily::AmplifiedLinear => Some(1),
            KernelFamily::AnisoGaussian => Some(3),
            _ => None,
        }
    }

    pub fn name(&self) -> String {
        match self {
            KernelFamily::Nearest => "nearest".into(),
            KernelFamily::Linear => "bilinear".into(),
            KernelFamily::KeysCubic { a } if *a == KEYS_A => "bicubic".into(),
            KernelFamily::KeysCubic { a } => format!("keys(a={a})"),
            KernelFamily::Lanczos { lobes } => format!("lanczos{lobes}"),
            KernelFamily::AmplifiedLinear => "lerf-l".into(),
            KernelFamily::AnisoGaussian => "lerf-g".into(),
        }
    }
}

#[inline]
fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

#[inline]
fn keys(a: f64, x: f64) -> f64 {
    let t = x.abs();
    if t <= 1.0 {
        (a + 2.0) * t * t * t - (a + 3.0) * t * t + 1.0
    } else if t < 2.0 {
        a * t * t * t - 5.0 * a * t * t + 8.0 * a * t - 4.0 * a
    } else {
        0.0
    }
}

/// Weight of a fixed kernel at signed offset `x` (target minus sample).
pub fn eval_fixed_1d(family: KernelFamily, x: f64) -> Result<f64> {
    family.validate()?;
    Ok(match family {
        // A target exactly halfway between two samples goes to the lower one,
        // which sits at offset +0.5.
        KernelFamily::Nearest => {
            if x > -0.5 && x <= 0.5 {
                1.0
            } else {
                0.0
            }
        }
        KernelFamily::Linear => (1.0 - x.abs()).max(0.0),
        KernelFamily::KeysCubic { a } => keys(a, x),
        KernelFamily::Lanczos { lobes } => {
            let n = lobes as f64;
            if x.abs() < n {
                sinc(x) * sinc(x / n)
            } else {
                0.0
            }
        }
        KernelFamily::AmplifiedLinear | KernelFamily::AnisoGaussian => {
            return Err(LerfError::Misuse(format!("{} is adaptive, not a fixed kernel", family.name())))
        }
    })
}

/// Unnormalized 1D weights for a fixed family over its support. Tap `k`
/// reads source index `base + k - (taps/2 - 1)`.
pub fn weights_fixed_1d(family: KernelFamily, frac: f64) -> Result<Vec<f64>> {
    let taps = family.taps();
    let lead = (taps / 2 - 1) as f64;
    (0..taps).map(|k| eval_fixed_1d(family, frac - (k as f64 - lead))).collect()
}

/// Row-major `taps x taps` weights of a fixed separable kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedWeights {
    pub taps: usize,
    pub weights: Vec<f64>,
}

impl FixedWeights {
    /// Offset of the first tap relative to the anchor.
    pub fn lead(&self) -> i64 {
        -(self.taps as i64 / 2 - 1)
    }
}

pub fn weights_fixed_2d(family: KernelFamily, frac_y: f64, frac_x: f64) -> Result<FixedWeights> {
    let wy = weights_fixed_1d(family, frac_y)?;
    let wx = weights_fixed_1d(family, frac_x)?;
    let mut weights: Vec<f64> = wy.iter().flat_map(|a| wx.iter().map(move |b| a * b)).collect();
    let sum: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= sum);
    Ok(FixedWeights { taps: family.taps(), weights })
}

/// Signed offset from a support pixel to the target point, `q - p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Offset {
    /// Horizontal component.
    pub dx: f64,
    /// Vertical component.
    pub dy: f64,
}

impl Offset {
    pub fn new(dx: f64, dy: f64) -> Self {
        Offset { dx, dy }
    }
}

/// Offsets from the 2x2 support, ordered (0,0), (0,1), (1,0), (1,1) as
/// `(row, col)` relative to the anchor.
pub fn support_offsets(frac_y: f64, frac_x: f64) -> [Offset; 4] {
    [
        Offset::new(frac_x, frac_y),
        Offset::new(frac_x - 1.0, frac_y),
        Offset::new(frac_x, frac_y - 1.0),
        Offset::new(frac_x - 1.0, frac_y - 1.0),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianParams {
    pub rho: f64,
    pub inv_sigma_x: f64,
    pub inv_sigma_y: f64,
}

impl GaussianParams {
    pub const ISOTROPIC: GaussianParams = GaussianParams { rho: 0.0, inv_sigma_x: 1.0, inv_sigma_y: 1.0 };

    pub fn new(rho: f64, inv_sigma_x: f64, inv_sigma_y: f64) -> Self {
        GaussianParams { rho, inv_sigma_x, inv_sigma_y }
    }

    /// Parameters of the same kernel seen from a frame rotated by 90 degrees.
    pub fn quarter_turn(self) -> Self {
        GaussianParams { rho: -self.rho, inv_sigma_x: self.inv_sigma_y, inv_sigma_y: self.inv_sigma_x }
    }

    /// Quadratic form `x^T Sigma^-1 x` in the stabilized parameterization.
    #[inline]
    pub fn quadratic(&self, o: Offset) -> f64 {
        let (a, b, r) = (self.inv_sigma_x, self.inv_sigma_y, self.rho);
        let (u, v) = (o.dx * a, o.dy * b);
        (u * u - 2.0 * r * u * v + v * v) / (1.0 - r * r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HyperParams {
    Linear { alpha: f64 },
    Gaussian(GaussianParams),
}

impl HyperParams {
    pub fn to_vec(&self) -> Vec<f64> {
        match self {
            HyperParams::Linear { alpha } => vec![*alpha],
            HyperParams::Gaussian(g) => vec![g.rho, g.inv_sigma_x, g.inv_sigma_y],
        }
    }
}

fn normalize_or_nearest(raw: [f64; 4], offsets: &[Offset; 4]) -> [f64; 4] {
    let sum: f64 = raw.iter().sum();
    if sum > 0.0 && sum.is_finite() {
        return raw.map(|w| w / sum);
    }
    let nearest = (0..4)
        .min_by(|&i, &j| {
            let d = |o: Offset| o.dx * o.dx + o.dy * o.dy;
            d(offsets[i]).total_cmp(&d(offsets[j]))
        })
        .unwrap_or(0);
    let mut out = [0.0; 4];
    out[nearest] = 1.0;
    out
}

/// Amplified-linear weights for the 2x2 support.
pub fn weights_amplified_linear(alphas: &[f64; 4], offsets: &[Offset; 4]) -> Result<[f64; 4]> {
    let mut raw = [0.0; 4];
    for (i, (&a, o)) in alphas.iter().zip(offsets).enumerate() {
        if !(a > 0.0 && a <= ALPHA_MAX) {
            return Err(LerfError::Parameter(format!("alpha {a} outside (0, {ALPHA_MAX}]")));
        }
        raw[i] = (1.0 - a * o.dx.abs()).max(0.0) * (1.0 - a * o.dy.abs()).max(0.0);
    }
    Ok(normalize_or_nearest(raw, offsets))
}

/// Unnormalized anisotropic Gaussian weight.
#[inline]
pub fn gaussian_raw(p: &GaussianParams, o: Offset) -> f64 {
    (-0.5 * p.quadratic(o)).exp()
}

/// Anisotropic Gaussian weights for the 2x2 support.
pub fn weights_aniso_gaussian(params: &[GaussianParams; 4], offsets: &[Offset; 4]) -> Result<[f64; 4]> {
    let mut raw = [0.0; 4];
    for (i, (p, o)) in params.iter().zip(offsets).enumerate() {
        if !(p.rho.abs() < 1.0) {
            return Err(LerfError::Parameter(format!("|rho| must be < 1, got {}", p.rho)));
        }
        if !(p.inv_sigma_x > 0.0 && p.inv_sigma_y > 0.0) || !p.inv_sigma_x.is_finite() || !p.inv_sigma_y.is_finite() {
            return Err(LerfError::Parameter(format!(
                "inverse sigmas must be positive and finite, got ({}, {})",
                p.inv_sigma_x, p.inv_sigma_y
            )));
        }
        raw[i] = gaussian_raw(p, *o);
    }
    Ok(normalize_or_nearest(raw, offsets))
}

fn finite(v: f64, what: &str) -> Result<f64> {
    if v.is_nan() {
        Err(LerfError::Parameter(format!("{what} is NaN")))
    } else {
        Ok(v)
    }
}

pub fn clamp_alpha(alpha: f64) -> Result<f64> {
    Ok(finite(alpha, "alpha")?.clamp(ALPHA_MIN, ALPHA_MAX))
}

pub fn clamp_gaussian(rho: f64, inv_sigma_x: f64, inv_sigma_y: f64) -> Result<GaussianParams> {
    Ok(GaussianParams {
        rho: finite(rho, "rho")?.clamp(-RHO_MAX, RHO_MAX),
        inv_sigma_x: finite(inv_sigma_x, "inv_sigma_x")?.clamp(INV_SIGMA_MIN, INV_SIGMA_MAX),
        inv_sigma_y: finite(inv_sigma_y, "inv_sigma_y")?.clamp(INV_SIGMA_MIN, INV_SIGMA_MAX),
    })
}

/// Bounds raw hyper-parameters for `family`: one value (alpha) or three
/// (rho, 1/sigma_x, 1/sigma_y).
pub fn clamp_hyperparams(family: KernelFamily, raw: &[f64]) -> Result<HyperParams> {
    match (family, raw) {
        (KernelFamily::AmplifiedLinear, [a]) => Ok(HyperParams::Linear { alpha: clamp_alpha(*a)? }),
        (KernelFamily::AnisoGaussian, [r, sx, sy]) => Ok(HyperParams::Gaussian(clamp_gaussian(*r, *sx, *sy)?)),
        _ => Err(LerfError::Parameter(format!(
            "{} takes {:?} hyper-parameters, got {}",
            family.name(),
            family.hyper_param_count(),
            raw.len()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const LANCZOS2: KernelFamily = KernelFamily::Lanczos { lobes: 2 };
    const LANCZOS3: KernelFamily = KernelFamily::Lanczos { lobes: 3 };

    #[test]
    fn keys_knots() {
        let k = KernelFamily::BICUBIC;
        assert_eq!(eval_fixed_1d(k, 0.0).unwrap(), 1.0);
        assert_eq!(eval_fixed_1d(k, 1.0).unwrap(), 0.0);
        assert_eq!(eval_fixed_1d(k, 2.0).unwrap(), 0.0);
        assert_eq!(eval_fixed_1d(k, -2.0).unwrap(), 0.0);
        // (a+2)/8 - (a+3)/4 + 1 at a = -0.5
        let expected = (KEYS_A + 2.0) / 8.0 - (KEYS_A + 3.0) / 4.0 + 1.0;
        assert_eq!(expected, 0.5625);
        assert!((eval_fixed_1d(k, 0.5).unwrap() - 0.5625).abs() < 1e-15);
        assert!((eval_fixed_1d(k, -0.5).unwrap() - 0.5625).abs() < 1e-15);
    }

    #[test]
    fn lanczos_zeros() {
        assert_eq!(eval_fixed_1d(LANCZOS2, 0.0).unwrap(), 1.0);
        assert!(eval_fixed_1d(LANCZOS2, 1.0).unwrap().abs() < 1e-15);
        assert_eq!(eval_fixed_1d(LANCZOS2, 2.0).unwrap(), 0.0);
        assert!(eval_fixed_1d(LANCZOS3, 2.0).unwrap().abs() < 1e-15);
        assert!(eval_fixed_1d(KernelFamily::Lanczos { lobes: 4 }, 0.0).is_err());
    }

    #[test]
    fn nearest_tie_goes_to_lower_sample() {
        assert_eq!(eval_fixed_1d(KernelFamily::Nearest, 0.5).unwrap(), 1.0);
        assert_eq!(eval_fixed_1d(KernelFamily::Nearest, -0.5).unwrap(), 0.0);
        let w = weights_fixed_2d(KernelFamily::Nearest, 0.5, 0.5).unwrap();
        assert_eq!(w.weights, vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn adaptive_is_not_fixed() {
        assert!(matches!(eval_fixed_1d(KernelFamily::AnisoGaussian, 0.0), Err(LerfError::Misuse(_))));
        assert!(weights_fixed_2d(KernelFamily::AmplifiedLinear, 0.0, 0.0).is_err());
    }

    #[test]
    fn linear_examples() {
        let w = weights_fixed_2d(KernelFamily::Linear, 0.0, 0.0).unwrap();
        assert_eq!(w.weights, vec![1.0, 0.0, 0.0, 0.0]);
        let w = weights_fixed_2d(KernelFamily::Linear, 0.5, 0.5).unwrap();
        assert_eq!(w.weights, vec![0.25; 4]);
    }

    #[test]
    fn fixed_supports_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for fam in [KernelFamily::BICUBIC, KernelFamily::Linear, LANCZOS2, LANCZOS3, KernelFamily::Nearest] {
            for _ in 0..1000 {
                let (fy, fx) = (rng.random::<f64>(), rng.random::<f64>());
                let w = weights_fixed_2d(fam, fy, fx).unwrap();
                assert_eq!(w.weights.len(), fam.taps() * fam.taps());
                assert!((w.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
        assert_eq!(LANCZOS3.taps(), 6);
    }

    #[test]
    fn amplified_linear_examples() {
        let offs = support_offsets(0.5, 0.5);
        assert_eq!(weights_amplified_linear(&[1.0; 4], &offs).unwrap(), [0.25; 4]);
        let offs = support_offsets(0.0, 0.0);
        assert_eq!(weights_amplified_linear(&[1.7; 4], &offs).unwrap(), [1.0, 0.0, 0.0, 0.0]);
        // 1 - 2 * 0.6 < 0: the x factor of the alpha = 2 pixel clamps to zero.
        let offs = support_offsets(0.3, 0.6);
        let w = weights_amplified_linear(&[2.0, 1.0, 1.0, 1.0], &offs).unwrap();
        assert_eq!(w[0], 0.0);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(matches!(weights_amplified_linear(&[2.5, 1.0, 1.0, 1.0], &offs), Err(LerfError::Parameter(_))));
        assert!(weights_amplified_linear(&[0.0, 1.0, 1.0, 1.0], &offs).is_err());
    }

    #[test]
    fn amplified_linear_all_zero_falls_back_to_nearest() {
        let offs = support_offsets(0.5, 0.7);
        let w = weights_amplified_linear(&[2.0; 4], &offs).unwrap();
        assert_eq!(w, [0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn gaussian_examples() {
        let iso = [GaussianParams::new(0.0, 1.3, 1.3); 4];
        let w = weights_aniso_gaussian(&iso, &support_offsets(0.5, 0.5)).unwrap();
        for v in w {
            assert!((v - 0.25).abs() < 1e-15);
        }
        let raw = gaussian_raw(&GaussianParams::ISOTROPIC, Offset::new(1.0, 0.0));
        assert!((raw - (-0.5f64).exp()).abs() < 1e-15);
        assert!((raw - 0.6065).abs() < 1e-4);

        let p = GaussianParams::new(0.9, 1.0, 1.0);
        assert!(gaussian_raw(&p, Offset::new(0.5, 0.5)) > gaussian_raw(&p, Offset::new(0.5, -0.5)));

        let bad = [GaussianParams::new(1.0, 1.0, 1.0); 4];
        assert!(matches!(weights_aniso_gaussian(&bad, &support_offsets(0.1, 0.1)), Err(LerfError::Parameter(_))));
    }

    #[test]
    fn clamp_examples() {
        let g = clamp_gaussian(1.7, 0.0, 9.0).unwrap();
        assert_eq!(g, GaussianParams::new(0.95, 1e-3, 4.0));
        assert_eq!(clamp_alpha(1.0).unwrap(), 1.0);
        assert_eq!(clamp_alpha(-3.0).unwrap(), ALPHA_MIN);
        assert_eq!(clamp_alpha(7.0).unwrap(), ALPHA_MAX);
        assert!(clamp_alpha(f64::NAN).is_err());
        assert!(clamp_gaussian(0.0, f64::NAN, 1.0).is_err());
        assert!(clamp_hyperparams(KernelFamily::AnisoGaussian, &[0.1]).is_err());
        assert_eq!(
            clamp_hyperparams(KernelFamily::AmplifiedLinear, &[3.0]).unwrap(),
            HyperParams::Linear { alpha: 2.0 }
        );
    }

    fn arb_gauss() -> impl Strategy<Value = GaussianParams> {
        (-RHO_MAX..=RHO_MAX, INV_SIGMA_MIN..=INV_SIGMA_MAX, INV_SIGMA_MIN..=INV_SIGMA_MAX)
            .prop_map(|(r, a, b)| GaussianParams::new(r, a, b))
    }

    proptest! {
        #[test]
        fn adaptive_weights_are_partitions_of_unity(
            alphas in prop::array::uniform4(ALPHA_MIN..=ALPHA_MAX),
            g in prop::array::uniform4(arb_gauss()),
            fy in 0.0f64..1.0,
            fx in 0.0f64..1.0,
        ) {
            let offs = support_offsets(fy, fx);
            let wl = weights_amplified_linear(&alphas, &offs).unwrap();
            let wg = weights_aniso_gaussian(&g, &offs).unwrap();
            prop_assert!((wl.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!((wg.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(wl.iter().chain(&wg).all(|w| *w >= 0.0));
        }

        #[test]
        fn unit_alpha_is_bilinear(fy in 0.0f64..1.0, fx in 0.0f64..1.0) {
            let wl = weights_amplified_linear(&[1.0; 4], &support_offsets(fy, fx)).unwrap();
            let wb = weights_fixed_2d(KernelFamily::Linear, fy, fx).unwrap();
            for (a, b) in wl.iter().zip(&wb.weights) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn gaussian_point_symmetry(p in arb_gauss(), dx in -1.0f64..1.0, dy in -1.0f64..1.0) {
            let a = gaussian_raw(&p, Offset::new(dx, dy));
            let b = gaussian_raw(&p, Offset::new(-dx, -dy));
            prop_assert_eq!(a, b);
        }

        #[test]
        fn quarter_turn_matches_rotated_offset(p in arb_gauss(), dx in -1.0f64..1.0, dy in -1.0f64..1.0) {
            let q = p.quarter_turn();
            let here = gaussian_raw(&q, Offset::new(dx, dy));
            // (dx, dy) -> (-dy, dx) and its point reflection (dy, -dx)
            prop_assert!((here - gaussian_raw(&p, Offset::new(-dy, dx))).abs() < 1e-12);
            prop_assert!((here - gaussian_raw(&p, Offset::new(dy, -dx))).abs() < 1e-12);
            prop_assert_eq!(q.quarter_turn(), p);
        }

        #[test]
        fn sigma_swap_is_transpose(p in arb_gauss(), dx in -1.0f64..1.0, dy in -1.0f64..1.0) {
            let swapped = GaussianParams::new(p.rho, p.inv_sigma_y, p.inv_sigma_x);
            prop_assert!((gaussian_raw(&swapped, Offset::new(dx, dy)) - gaussian_raw(&p, Offset::new(dy, dx))).abs() < 1e-12);
        }

        #[test]
        fn constants_survive_any_weights(g in prop::array::uniform4(arb_gauss()), fy in 0.0f64..1.0, fx in 0.0f64..1.0, c in 0.0f64..1.0) {
            let w = weights_aniso_gaussian(&g, &support_offsets(fy, fx)).unwrap();
            let out: f64 = w.iter().map(|w| w * c).sum();
            prop_assert!((out - c).abs() < 1e-15);
        }
    }
}
