//! Analytically generated banks.
//!
//! `frozen_bank` reproduces a fixed kernel (isotropic Gaussian with unit
//! inverse sigmas, or alpha = 1) at every pixel. `structure_bank` derives
//! hyper-parameters from the local gradient seen by each pattern: the
//! Gaussian is stretched along the edge and compressed across it, and alpha
//! grows with edge strength. Neither is trained; they exist to exercise the
//! engine with known, non-trivial tables.

use super::{LutBank, LutTable, Pattern, RotationRole};
use crate::error::Result;
use crate::kernels::{clamp_alpha, clamp_gaussian, KernelFamily};

const PATTERNS: [Pattern; 3] = [Pattern::S, Pattern::C, Pattern::X];
const ROLES: [RotationRole; 2] = [RotationRole::Deg0_180, RotationRole::Deg90_270];

fn six_tables(c_out: usize, f: impl Fn(&Pattern, [f64; 4]) -> Vec<f64>) -> Result<Vec<LutTable>> {
    let mut out = Vec::with_capacity(6);
    for p in &PATTERNS {
        for r in ROLES {
            out.push(LutTable::tabulate(*p, r, c_out, |v| f(p, v))?);
        }
    }
    Ok(out)
}

/// Bank that predicts the identity hyper-parameters everywhere.
pub fn frozen_bank(family: KernelFamily) -> Result<LutBank> {
    let c = family.hyper_param_count().unwrap_or(0);
    let tables = match family {
        KernelFamily::AnisoGaussian => six_tables(3, |_, _| vec![0.0, 1.0, 1.0])?,
        _ => six_tables(c.max(1), |_, _| vec![1.0; c.max(1)])?,
    };
    LutBank::new(family, tables, Vec::new())
}

/// Three all-zero enhancer tables.
pub fn zero_g_tables() -> Vec<LutTable> {
    PATTERNS
        .iter()
        .map(|p| LutTable::new(*p, RotationRole::Deg0_180, 1, vec![0; super::LUT_CELLS]).expect("sized"))
        .collect()
}

/// Least-squares intensity gradient `(gx, gy)` over the pattern's samples.
/// Collinear patterns only observe the component along their run.
fn pattern_gradient(p: &Pattern, v: [f64; 4]) -> (f64, f64) {
    if p.kind == super::PatternKind::S {
        let gx = ((v[1] - v[0]) + (v[3] - v[2])) * 0.5;
        let gy = ((v[2] - v[0]) + (v[3] - v[1])) * 0.5;
        return (gx, gy);
    }
    let (dy, dx) = p.offsets[1];
    let len = ((dy * dy + dx * dx) as f64).sqrt();
    let t: Vec<f64> = (0..4).map(|k| k as f64 * len).collect();
    let tm = t.iter().sum::<f64>() / 4.0;
    let vm = v.iter().sum::<f64>() / 4.0;
    let cov: f64 = t.iter().zip(&v).map(|(a, b)| (a - tm) * (b - vm)).sum();
    let var: f64 = t.iter().map(|a| (a - tm) * (a - tm)).sum();
    let slope = cov / var;
    (slope * dx as f64 / len, slope * dy as f64 / len)
}

fn steered_gaussian(gx: f64, gy: f64) -> Vec<f64> {
    let mag = (gx * gx + gy * gy).sqrt();
    if mag < 1e-6 {
        return vec![0.0, 1.0, 1.0];
    }
    let strength = (4.0 * mag).min(1.0);
    let (nx, ny) = (gx / mag, gy / mag);
    let (ex, ey) = (-ny, nx);
    let along = 1.0 + 0.5 * strength;
    let across = 1.0 / (1.0 + 1.5 * strength);
    let (a2, c2) = (along * along, across * across);
    let sxx = a2 * ex * ex + c2 * nx * nx;
    let syy = a2 * ey * ey + c2 * ny * ny;
    let sxy = a2 * ex * ey + c2 * nx * ny;
    let (sx, sy) = (sxx.sqrt(), syy.sqrt());
    let g = clamp_gaussian(sxy / (sx * sy), 1.0 / sx, 1.0 / sy).expect("finite");
    vec![g.rho, g.inv_sigma_x, g.inv_sigma_y]
}

/// Gradient-steered bank; `with_enhancer` adds a mild sharpening residual.
pub fn structure_bank(family: KernelFamily, with_enhancer: bool) -> Result<LutBank> {
    let tables = match family {
        KernelFamily::AnisoGaussian => six_tables(3, |p, v| {
            let (gx, gy) = pattern_gradient(p, v);
            steered_gaussian(gx, gy)
        })?,
        _ => six_tables(1, |p, v| {
            let (gx, gy) = pattern_gradient(p, v);
            let mag = (gx * gx + gy * gy).sqrt();
            vec![clamp_alpha(1.0 + 0.8 * (4.0 * mag).min(1.0)).expect("finite")]
        })?,
    };
    let g_tables = if with_enhancer {
        PATTERNS
            .iter()
            .map(|p| {
                LutTable::tabulate(*p, RotationRole::Deg0_180, 1, |v| {
                    vec![0.15 * (v[0] - (v[1] + v[2] + v[3]) / 3.0)]
                })
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    LutBank::new(family, tables, g_tables)
}
