//! Look-up-table prediction of kernel hyper-parameters.
//!
//! Each table is indexed by four 8-bit pixels taken in a fixed spatial
//! pattern around the anchor. The upper four bits of every pixel select a
//! cell of a 17^4 grid and the lower four bits drive 4-simplex interpolation
//! inside that cell. Tables come in two rotation roles: the `0/180` role is
//! evaluated on the pattern and its point reflection, the `90/270` role on
//! the two quarter turns, with predictions mapped back to the canonical frame.

mod fixtures;
mod format;

pub use fixtures::{frozen_bank, structure_bank, zero_g_tables};
pub use format::{load_lut_bank, save_lut_bank};

use rayon::prelude::*;

use crate::error::{LerfError, Result};
use crate::hypermap::HyperParamMap;
use crate::image::{rgb_to_luma, BoundaryPolicy, ImageBuffer};
use crate::kernels::{clamp_hyperparams, GaussianParams, KernelFamily};

/// Index bits per pixel.
pub const LUT_BITS: u8 = 4;
/// Samples per table dimension.
pub const LUT_SIDE: usize = 17;
pub const LUT_CELLS: usize = LUT_SIDE * LUT_SIDE * LUT_SIDE * LUT_SIDE;
/// Fixed-point scale of stored values.
pub const LUT_SCALE: f64 = 4096.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PatternKind {
    /// 2x2 square.
    S,
    /// Horizontal run, sensitive to vertical edges.
    C,
    /// Main-diagonal run.
    X,
}

/// Four `(row, col)` offsets from the anchor; the first is always `(0, 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pattern {
    pub kind: PatternKind,
    pub offsets: [(i64, i64); 4],
}

impl Pattern {
    pub const S: Pattern = Pattern { kind: PatternKind::S, offsets: [(0, 0), (0, 1), (1, 0), (1, 1)] };
    pub const C: Pattern = Pattern { kind: PatternKind::C, offsets: [(0, 0), (0, 1), (0, 2), (0, 3)] };
    pub const X: Pattern = Pattern { kind: PatternKind::X, offsets: [(0, 0), (1, 1), (2, 2), (3, 3)] };

    pub fn of(kind: PatternKind) -> Pattern {
        match kind {
            PatternKind::S => Pattern::S,
            PatternKind::C => Pattern::C,
            PatternKind::X => Pattern::X,
        }
    }

    pub(crate) fn code(&self) -> u8 {
        match self.kind {
            PatternKind::S => 0,
            PatternKind::C => 1,
            PatternKind::X => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Pattern> {
        match code {
            0 => Some(Pattern::S),
            1 => Some(Pattern::C),
            2 => Some(Pattern::X),
            _ => None,
        }
    }

    /// Offsets after turning the pattern by `quarter_turns * 90` degrees.
    pub fn rotated(&self, quarter_turns: u8) -> [(i64, i64); 4] {
        self.offsets.map(|(dy, dx)| match quarter_turns % 4 {
            0 => (dy, dx),
            1 => (dx, -dy),
            2 => (-dy, -dx),
            _ => (-dx, dy),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RotationRole {
    Deg0_180,
    Deg90_270,
}

impl RotationRole {
    pub fn quarter_turns(self) -> [u8; 2] {
        match self {
            RotationRole::Deg0_180 => [0, 2],
            RotationRole::Deg90_270 => [1, 3],
        }
    }
}

/// One quantized 4-input table.
#[derive(Debug, Clone, PartialEq)]
pub struct LutTable {
    pub pattern: Pattern,
    pub role: RotationRole,
    c_out: usize,
    entries: Vec<i16>,
}

impl LutTable {
    pub fn new(pattern: Pattern, role: RotationRole, c_out: usize, entries: Vec<i16>) -> Result<Self> {
        if c_out == 0 || c_out > 3 {
            return Err(LerfError::Configuration(format!("table output count {c_out} not in 1..=3")));
        }
        if entries.len() != LUT_CELLS * c_out {
            return Err(LerfError::format(
                0,
                format!("table has {} entries, expected {}", entries.len(), LUT_CELLS * c_out),
            ));
        }
        Ok(LutTable { pattern, role, c_out, entries })
    }

    /// Fills every cell from `f(corner_values) -> outputs`, where corner values
    /// are the 8-bit levels `0, 16, ..., 240, 255` mapped to `[0, 1]`.
    pub fn tabulate(
        pattern: Pattern,
        role: RotationRole,
        c_out: usize,
        f: impl Fn([f64; 4]) -> Vec<f64>,
    ) -> Result<Self> {
        let level = |i: usize| corner_level(i) as f64 / 255.0;
        let mut entries = Vec::with_capacity(LUT_CELLS * c_out);
        for a in 0..LUT_SIDE {
            for b in 0..LUT_SIDE {
                for c in 0..LUT_SIDE {
                    for d in 0..LUT_SIDE {
                        let vals = f([level(a), level(b), level(c), level(d)]);
                        if vals.len() != c_out {
                            return Err(LerfError::Configuration(format!(
                                "tabulated function returned {} values, expected {c_out}",
                                vals.len()
                            )));
                        }
                        for v in vals {
                            entries.push(encode_fixed(v).ok_or_else(|| {
                                LerfError::Configuration(format!(
                                    "value {v} at corner ({a},{b},{c},{d}) is not encodable"
                                ))
                            })?);
                        }
                    }
                }
            }
        }
        LutTable::new(pattern, role, c_out, entries)
    }

    pub fn c_out(&self) -> usize {
        self.c_out
    }

    pub fn entries(&self) -> &[i16] {
        &self.entries
    }

    #[inline]
    fn corner(&self, idx: [usize; 4]) -> usize {
        (((idx[0] * LUT_SIDE + idx[1]) * LUT_SIDE + idx[2]) * LUT_SIDE + idx[3]) * self.c_out
    }

    /// Decoded stored value at a grid corner.
    pub fn decoded(&self, idx: [usize; 4], channel: usize) -> f64 {
        self.entries[self.corner(idx) + channel] as f64 / LUT_SCALE
    }

    /// Interpolates into `out[..c_out]`.
    #[inline]
    pub fn interp_into(&self, idx: [u8; 4], frac: [u8; 4], out: &mut [f64]) {
        // Dimensions sorted by descending fraction; ties keep index order.
        let mut order = [0usize, 1, 2, 3];
        order.sort_by(|&a, &b| frac[b].cmp(&frac[a]));
        let f = order.map(|d| frac[d] as i32);
        let weights = [16 - f[0], f[0] - f[1], f[1] - f[2], f[2] - f[3], f[3]];
        let mut corner = idx.map(|i| i as usize);
        let mut acc = [0i64; 3];
        for (k, w) in weights.iter().enumerate() {
            if k > 0 {
                corner[order[k - 1]] += 1;
            }
            if *w == 0 {
                continue;
            }
            let base = self.corner(corner);
            for (c, a) in acc.iter_mut().enumerate().take(self.c_out) {
                *a += *w as i64 * self.entries[base + c] as i64;
            }
        }
        for c in 0..self.c_out {
            out[c] = acc[c] as f64 / (16.0 * LUT_SCALE);
        }
    }
}

/// 8-bit level represented by grid index `i`.
#[inline]
pub fn corner_level(i: usize) -> u8 {
    if i >= 16 {
        255
    } else {
        (i * 16) as u8
    }
}

fn encode_fixed(v: f64) -> Option<i16> {
    let q = (v * LUT_SCALE).round();
    (q.is_finite() && q >= i16::MIN as f64 && q <= i16::MAX as f64).then_some(q as i16)
}

/// Cell indices and in-cell fractions for four samples in `[0, 1]`.
pub fn quantize_index(pixels: [f64; 4]) -> ([u8; 4], [u8; 4]) {
    let bytes = pixels.map(to_byte);
    quantize_bytes(bytes)
}

#[inline]
fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

#[inline]
pub fn quantize_bytes(bytes: [u8; 4]) -> ([u8; 4], [u8; 4]) {
    (bytes.map(|b| b >> 4), bytes.map(|b| b & 15))
}

/// 4-simplex interpolation of `table` at the given cell and fractions.
pub fn simplex_interp(table: &LutTable, indices: [u8; 4], fractions: [u8; 4]) -> Result<Vec<f64>> {
    if table.entries.len() != LUT_CELLS * table.c_out {
        return Err(LerfError::format(0, "corrupt table length"));
    }
    for (i, f) in indices.iter().zip(&fractions) {
        if *f > 15 || *i > 16 || (*i == 16 && *f > 0) {
            return Err(LerfError::Parameter(format!("index {i} with fraction {f} leaves the grid")));
        }
    }
    let mut out = vec![0.0; table.c_out];
    table.interp_into(indices, fractions, &mut out);
    Ok(out)
}

/// Complete set of tables for one adaptive family.
#[derive(Debug, Clone, PartialEq)]
pub struct LutBank {
    family: KernelFamily,
    f_tables: Vec<LutTable>,
    g_tables: Vec<LutTable>,
}

impl LutBank {
    pub fn new(family: KernelFamily, f_tables: Vec<LutTable>, g_tables: Vec<LutTable>) -> Result<Self> {
        let c_out = family.hyper_param_count().ok_or_else(|| {
            LerfError::Configuration(format!("{} cannot be driven by a LUT bank", family.name()))
        })?;
        if f_tables.is_empty() {
            return Err(LerfError::Configuration("bank has no hyper-parameter tables".into()));
        }
        for (i, t) in f_tables.iter().enumerate() {
            if t.c_out != c_out {
                return Err(LerfError::Configuration(format!(
                    "table {i} has {} outputs but {} needs {c_out}",
                    t.c_out,
                    family.name()
                )));
            }
        }
        for (i, t) in g_tables.iter().enumerate() {
            if t.c_out != 1 {
                return Err(LerfError::Configuration(format!("enhancer table {i} must have 1 output")));
            }
        }
        for (ti, t) in f_tables.iter().enumerate() {
            for (ci, px) in t.entries.chunks(c_out).enumerate() {
                let decoded: Vec<f64> = px.iter().map(|v| *v as f64 / LUT_SCALE).collect();
                if clamp_hyperparams(family, &decoded)?.to_vec() != decoded {
                    return Err(LerfError::Configuration(format!(
                        "table {ti} cell {ci} holds out-of-bounds hyper-parameters {decoded:?}"
                    )));
                }
            }
        }
        Ok(LutBank { family, f_tables, g_tables })
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn f_tables(&self) -> &[LutTable] {
        &self.f_tables
    }

    pub fn g_tables(&self) -> &[LutTable] {
        &self.g_tables
    }

    pub fn has_enhancer(&self) -> bool {
        !self.g_tables.is_empty()
    }

    /// FNV-1a digest over the serialized bank, for report provenance.
    pub fn digest(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for b in format::to_bytes(self) {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        h
    }
}

/// 8-bit plane used for table indexing.
struct BytePlane {
    h: usize,
    w: usize,
    data: Vec<u8>,
}

impl BytePlane {
    fn from_plane(h: usize, w: usize, plane: &[f64]) -> Self {
        BytePlane { h, w, data: plane.iter().map(|v| to_byte(*v)).collect() }
    }

    #[inline]
    fn read(&self, y: i64, x: i64) -> u8 {
        let p = BoundaryPolicy::Replicate;
        self.data[p.resolve(y, self.h) * self.w + p.resolve(x, self.w)]
    }

    #[inline]
    fn gather(&self, y: usize, x: usize, offsets: &[(i64, i64); 4]) -> [u8; 4] {
        offsets.map(|(dy, dx)| self.read(y as i64 + dy, x as i64 + dx))
    }
}

fn luma_plane(img: &ImageBuffer) -> Result<Vec<f64>> {
    match img.channels() {
        1 => Ok(img.plane(0).to_vec()),
        3 => Ok(rgb_to_luma(img)?.into_data()),
        c => Err(LerfError::Shape(format!("cannot index a {c}-channel image"))),
    }
}

/// Ensemble of one table over its role's two rotations, written to `out`.
#[inline]
fn table_ensemble(
    table: &LutTable,
    rotations: &[[(i64, i64); 4]; 2],
    plane: &BytePlane,
    y: usize,
    x: usize,
    remap_quarter: bool,
    out: &mut [f64; 3],
) {
    let c = table.c_out;
    let mut views = [[0.0f64; 3]; 2];
    for (view, offs) in views.iter_mut().zip(rotations) {
        let (idx, frac) = quantize_bytes(plane.gather(y, x, offs));
        table.interp_into(idx, frac, view);
        if remap_quarter && c == 3 {
            let g = GaussianParams::new(view[0], view[1], view[2]).quarter_turn();
            *view = [g.rho, g.inv_sigma_x, g.inv_sigma_y];
        }
    }
    for k in 0..c {
        out[k] = (views[0][k] + views[1][k]) * 0.5;
    }
}

/// Predicts the hyper-parameter map of `img` (luma for RGB inputs).
pub fn predict_hyperparams(img: &ImageBuffer, bank: &LutBank) -> Result<HyperParamMap> {
    let (h, w) = img.dims();
    let c = bank
        .family
        .hyper_param_count()
        .ok_or_else(|| LerfError::Configuration("bank family is not adaptive".into()))?;
    let plane = BytePlane::from_plane(h, w, &luma_plane(img)?);
    let tables: Vec<_> = bank
        .f_tables
        .iter()
        .map(|t| {
            let [a, b] = t.role.quarter_turns();
            (t, [t.pattern.rotated(a), t.pattern.rotated(b)], t.role == RotationRole::Deg90_270)
        })
        .collect();
    let n_tables = tables.len() as f64;

    let rows: Vec<Vec<f64>> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut row = Vec::with_capacity(w * c);
            let mut one = [0.0f64; 3];
            for x in 0..w {
                let mut acc = [0.0f64; 3];
                for (t, rots, remap) in &tables {
                    table_ensemble(t, rots, &plane, y, x, *remap, &mut one);
                    for k in 0..c {
                        acc[k] += one[k];
                    }
                }
                let mean: Vec<f64> = acc[..c].iter().map(|v| v / n_tables).collect();
                let clamped = clamp_hyperparams(bank.family, &mean).expect("table values are finite");
                row.extend(clamped.to_vec());
            }
            row
        })
        .collect();
    HyperParamMap::new(h, w, bank.family, rows.concat())
}

/// Adds the enhancer tables' residual to every channel, clamped to `[0, 1]`.
pub fn apply_g_enhancer(img: &ImageBuffer, bank: &LutBank) -> Result<ImageBuffer> {
    if bank.g_tables.is_empty() {
        return Err(LerfError::Configuration("bank has no enhancer tables".into()));
    }
    let (h, w) = img.dims();
    let tables: Vec<_> = bank
        .g_tables
        .iter()
        .map(|t| {
            let [a, b] = t.role.quarter_turns();
            (t, [t.pattern.rotated(a), t.pattern.rotated(b)])
        })
        .collect();
    let n_tables = tables.len() as f64;
    let mut out = img.clone();
    for ch in 0..img.channels() {
        let plane = BytePlane::from_plane(h, w, img.plane(ch));
        let src = img.plane(ch);
        out.plane_mut(ch).par_chunks_mut(w).enumerate().for_each(|(y, row)| {
            let mut one = [0.0f64; 3];
            for (x, v) in row.iter_mut().enumerate() {
                let mut residual = 0.0;
                for (t, rots) in &tables {
                    table_ensemble(t, rots, &plane, y, x, false, &mut one);
                    residual += one[0];
                }
                *v = (src[y * w + x] + residual / n_tables).clamp(0.0, 1.0);
            }
        });
    }
    Ok(out)
}
