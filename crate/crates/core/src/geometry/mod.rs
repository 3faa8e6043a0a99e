//! Back-projection of target pixels into source coordinates.
//!
//! Every transform is evaluated backward: for each target pixel we compute a
//! continuous source coordinate, split it into an integer anchor (top-left of
//! the 2x2 support) and a fractional offset, and flag whether the coordinate
//! lands inside the source raster.

mod io;

pub use io::{load_flow, load_homography, parse_homography, read_flow, save_flow, write_flow};

use rayon::prelude::*;

use crate::error::{LerfError, Result};
use crate::image::BoundaryPolicy;

/// Determinant magnitude below which a homography is treated as singular.
pub const SINGULAR_EPS: f64 = 1e-12;
/// Homogeneous weights at or below this are behind the horizon.
pub const HORIZON_EPS: f64 = 1e-9;

/// Row-major 3x3 real matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Matrix3(pub [[f64; 3]; 3]);

impl Matrix3 {
    pub const IDENTITY: Matrix3 = Matrix3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    pub fn from_row_major(v: [f64; 9]) -> Self {
        Matrix3([[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]])
    }

    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn inverse(&self) -> Result<Matrix3> {
        let d = self.det();
        if !(d.abs() > SINGULAR_EPS) {
            return Err(LerfError::Parameter(format!("singular homography (det = {d:e})")));
        }
        let m = &self.0;
        let cof = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
        let adj = [
            [cof(1, 2, 1, 2), -cof(0, 2, 1, 2), cof(0, 1, 1, 2)],
            [-cof(1, 2, 0, 2), cof(0, 2, 0, 2), -cof(0, 1, 0, 2)],
            [cof(1, 2, 0, 1), -cof(0, 2, 0, 1), cof(0, 1, 0, 1)],
        ];
        let mut out = [[0.0; 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                out[r][c] = adj[r][c] / d;
            }
        }
        Ok(Matrix3(out))
    }

    pub fn mul(&self, other: &Matrix3) -> Matrix3 {
        let mut out = [[0.0; 3]; 3];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| self.0[r][k] * other.0[k][c]).sum();
            }
        }
        Matrix3(out)
    }

    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let m = &self.0;
        (
            m[0][0] * x + m[0][1] * y + m[0][2],
            m[1][0] * x + m[1][1] * y + m[1][2],
            m[2][0] * x + m[2][1] * y + m[2][2],
        )
    }
}

/// Which way a stored homography maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HomographyDirection {
    TargetToSource,
    SourceToTarget,
}

/// Dense backward displacement field sampled at target pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub height: usize,
    pub width: usize,
    /// Horizontal displacement, row-major.
    pub u: Vec<f64>,
    /// Vertical displacement, row-major.
    pub v: Vec<f64>,
}

impl FlowField {
    pub fn new(height: usize, width: usize, u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if u.len() != height * width || v.len() != height * width {
            return Err(LerfError::Shape(format!(
                "flow components of length {}/{} do not match {height}x{width}",
                u.len(),
                v.len()
            )));
        }
        Ok(FlowField { height, width, u, v })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        FlowField { height, width, u: vec![0.0; height * width], v: vec![0.0; height * width] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GeometricTransform {
    /// Resize by target/source factors per axis.
    Scale { r_h: f64, r_w: f64 },
    Homography { matrix: Matrix3, direction: HomographyDirection },
    Flow(FlowField),
}

impl GeometricTransform {
    pub fn scale(r_h: f64, r_w: f64) -> Self {
        GeometricTransform::Scale { r_h, r_w }
    }

    /// Homography given as a target-to-source matrix.
    pub fn backward_homography(matrix: Matrix3) -> Self {
        GeometricTransform::Homography { matrix, direction: HomographyDirection::TargetToSource }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            GeometricTransform::Scale { r_h, r_w } => {
                check_factor(*r_h)?;
                check_factor(*r_w)
            }
            GeometricTransform::Homography { matrix, .. } => {
                let d = matrix.det();
                if d.abs() > SINGULAR_EPS {
                    Ok(())
                } else {
                    Err(LerfError::Parameter(format!("singular homography (det = {d:e})")))
                }
            }
            GeometricTransform::Flow(_) => Ok(()),
        }
    }

    /// Target dimensions this transform naturally produces from a source of the
    /// given size: `floor(src * r)` for scales, the flow field's own size, and
    /// the source size for homographies.
    pub fn natural_target_dims(&self, src_h: usize, src_w: usize) -> (usize, usize) {
        match self {
            GeometricTransform::Scale { r_h, r_w } => (scaled_len(src_h, *r_h), scaled_len(src_w, *r_w)),
            GeometricTransform::Homography { .. } => (src_h, src_w),
            GeometricTransform::Flow(f) => (f.height, f.width),
        }
    }
}

/// `floor(len * r)`, tolerant to representation error in `r`, never below 1.
pub fn scaled_len(len: usize, r: f64) -> usize {
    ((len as f64 * r + 1e-9).floor() as usize).max(1)
}

fn check_factor(r: f64) -> Result<()> {
    if r > 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(LerfError::Parameter(format!("scale factor must be > 0, got {r}")))
    }
}

/// Continuous source coordinate for target index `t` under a scale `r`,
/// aligning pixel centers.
pub fn back_project_scale(r: f64, t: f64) -> Result<f64> {
    check_factor(r)?;
    Ok((t + 0.5) / r - 0.5)
}

/// Continuous source `(y, x)` for target pixel `(y_t, x_t)` under a
/// target-to-source homography, or `None` when the point falls behind the
/// horizon or outside the half-pixel margin of the source.
pub fn back_project_homography(
    m: &Matrix3,
    y_t: f64,
    x_t: f64,
    src_h: usize,
    src_w: usize,
) -> Option<(f64, f64)> {
    let (xs, ys, w) = m.apply(x_t + 0.5, y_t + 0.5);
    if !(w > HORIZON_EPS) {
        return None;
    }
    let (x, y) = (xs / w - 0.5, ys / w - 0.5);
    in_source(y, x, src_h, src_w).then_some((y, x))
}

#[inline]
fn in_source(y: f64, x: f64, src_h: usize, src_w: usize) -> bool {
    (-0.5..=src_w as f64 - 0.5).contains(&x) && (-0.5..=src_h as f64 - 0.5).contains(&y)
}

/// Per-target-pixel source coordinates, 2x2 support anchors and offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleGrid {
    pub target_h: usize,
    pub target_w: usize,
    pub src_h: usize,
    pub src_w: usize,
    pub src_y: Vec<f64>,
    pub src_x: Vec<f64>,
    pub base_y: Vec<i64>,
    pub base_x: Vec<i64>,
    pub frac_y: Vec<f64>,
    pub frac_x: Vec<f64>,
    pub valid: Vec<bool>,
    pub policy: BoundaryPolicy,
}

impl SampleGrid {
    pub fn len(&self) -> usize {
        self.target_h * self.target_w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }
}

/// Per-target-pixel validity of a warp.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidMask {
    pub height: usize,
    pub width: usize,
    pub data: Vec<bool>,
}

impl ValidMask {
    pub fn full(height: usize, width: usize) -> Self {
        ValidMask { height, width, data: vec![true; height * width] }
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|v| **v).count()
    }

    pub fn fraction(&self) -> f64 {
        self.count() as f64 / self.data.len().max(1) as f64
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col]
    }

    /// Mask as a grayscale image: 1 where valid.
    pub fn to_image(&self) -> crate::image::ImageBuffer {
        crate::image::ImageBuffer::new(
            self.height,
            self.width,
            1,
            self.data.iter().map(|v| if *v { 1.0 } else { 0.0 }).collect(),
        )
        .expect("mask dimensions are positive")
    }
}

impl SampleGrid {
    pub fn mask(&self) -> ValidMask {
        ValidMask { height: self.target_h, width: self.target_w, data: self.valid.clone() }
    }
}

/// Splits a coordinate into `(floor, frac)` with `frac` strictly below 1.
#[inline]
pub fn split_coord(s: f64) -> (i64, f64) {
    let b = s.floor();
    let f = s - b;
    if f >= 1.0 {
        (b as i64 + 1, 0.0)
    } else {
        (b as i64, f)
    }
}

/// Back-projects every target pixel of `target_dims` through `transform`.
pub fn build_sample_grid(
    transform: &GeometricTransform,
    src_dims: (usize, usize),
    target_dims: (usize, usize),
    policy: BoundaryPolicy,
) -> Result<SampleGrid> {
    let (src_h, src_w) = src_dims;
    let (th, tw) = target_dims;
    if src_h == 0 || src_w == 0 || th == 0 || tw == 0 {
        return Err(LerfError::Parameter(format!(
            "dimensions must be positive (source {src_h}x{src_w}, target {th}x{tw})"
        )));
    }
    transform.validate()?;

    enum Mapper<'a> {
        Scale(f64, f64),
        Hom(Matrix3),
        Flow(&'a FlowField),
    }
    let mapper = match transform {
        GeometricTransform::Scale { r_h, r_w } => Mapper::Scale(*r_h, *r_w),
        GeometricTransform::Homography { matrix, direction } => Mapper::Hom(match direction {
            HomographyDirection::TargetToSource => *matrix,
            HomographyDirection::SourceToTarget => matrix.inverse()?,
        }),
        GeometricTransform::Flow(f) => {
            if (f.height, f.width) != (th, tw) {
                return Err(LerfError::Shape(format!(
                    "flow field {}x{} does not match target {th}x{tw}",
                    f.height, f.width
                )));
            }
            Mapper::Flow(f)
        }
    };

    let project = |y: usize, x: usize| -> Option<(f64, f64)> {
        match &mapper {
            Mapper::Scale(rh, rw) => Some(((y as f64 + 0.5) / rh - 0.5, (x as f64 + 0.5) / rw - 0.5)),
            Mapper::Hom(m) => back_project_homography(m, y as f64, x as f64, src_h, src_w),
            Mapper::Flow(f) => {
                let i = y * tw + x;
                let (sy, sx) = (y as f64 + f.v[i], x as f64 + f.u[i]);
                (sy.is_finite() && sx.is_finite() && in_source(sy, sx, src_h, src_w)).then_some((sy, sx))
            }
        }
    };

    let rows: Vec<Vec<Option<(f64, f64)>>> = (0..th)
        .into_par_iter()
        .map(|y| (0..tw).map(|x| project(y, x)).collect())
        .collect();

    let n = th * tw;
    let mut grid = SampleGrid {
        target_h: th,
        target_w: tw,
        src_h,
        src_w,
        src_y: vec![0.0; n],
        src_x: vec![0.0; n],
        base_y: vec![0; n],
        base_x: vec![0; n],
        frac_y: vec![0.0; n],
        frac_x: vec![0.0; n],
        valid: vec![false; n],
        policy,
    };
    for (i, p) in rows.into_iter().flatten().enumerate() {
        if let Some((sy, sx)) = p {
            let (by, fy) = split_coord(sy);
            let (bx, fx) = split_coord(sx);
            grid.src_y[i] = sy;
            grid.src_x[i] = sx;
            grid.base_y[i] = by;
            grid.base_x[i] = bx;
            grid.frac_y[i] = fy;
            grid.frac_x[i] = fx;
            grid.valid[i] = true;
        }
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn scale_back_projection_examples() {
        assert_eq!(back_project_scale(1.0, 7.0).unwrap(), 7.0);
        assert_eq!(back_project_scale(2.0, 0.0).unwrap(), -0.25);
        assert_eq!(back_project_scale(2.0, 1.0).unwrap(), 0.25);
        assert!(matches!(back_project_scale(0.0, 1.0), Err(LerfError::Parameter(_))));
        assert!(back_project_scale(-2.0, 1.0).is_err());
    }

    #[test]
    fn identity_homography_is_identity() {
        let grid = build_sample_grid(
            &GeometricTransform::backward_homography(Matrix3::IDENTITY),
            (6, 9),
            (6, 9),
            BoundaryPolicy::Replicate,
        )
        .unwrap();
        assert_eq!(grid.valid_count(), 54);
        for y in 0..6 {
            for x in 0..9 {
                let i = y * 9 + x;
                assert_eq!((grid.base_y[i], grid.base_x[i]), (y as i64, x as i64));
                assert_eq!((grid.frac_y[i], grid.frac_x[i]), (0.0, 0.0));
            }
        }
    }

    #[test]
    fn half_scale_matrix_matches_scale_path() {
        let m = Matrix3([[0.5, 0.0, 0.0], [0.0, 0.5, 0.0], [0.0, 0.0, 1.0]]);
        for t in 0..8 {
            let (y, x) = back_project_homography(&m, t as f64, (7 - t) as f64, 4, 4).unwrap();
            assert!((y - back_project_scale(2.0, t as f64).unwrap()).abs() < 1e-15);
            assert!((x - back_project_scale(2.0, (7 - t) as f64).unwrap()).abs() < 1e-15);
        }
    }

    #[test]
    fn horizon_row_is_invalid() {
        let m = Matrix3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.0]]);
        assert_eq!(back_project_homography(&m, 3.0, 3.0, 8, 8), None);
        let m = Matrix3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 1.0]]);
        let grid = build_sample_grid(
            &GeometricTransform::backward_homography(m),
            (8, 8),
            (8, 8),
            BoundaryPolicy::Replicate,
        )
        .unwrap();
        assert!(grid.valid_count() < 64);
    }

    #[test]
    fn singular_matrix_rejected() {
        let m = Matrix3([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [0.0, 0.0, 1.0]]);
        let t = GeometricTransform::backward_homography(m);
        assert!(matches!(
            build_sample_grid(&t, (4, 4), (4, 4), BoundaryPolicy::Replicate),
            Err(LerfError::Parameter(_))
        ));
        assert!(m.inverse().is_err());
    }

    #[test]
    fn upscale_anchor_example() {
        let grid = build_sample_grid(&GeometricTransform::scale(2.0, 2.0), (3, 3), (6, 6), BoundaryPolicy::Replicate)
            .unwrap();
        assert_eq!((grid.base_y[0], grid.base_x[0]), (-1, -1));
        assert_eq!((grid.frac_y[0], grid.frac_x[0]), (0.75, 0.75));
        assert_eq!(grid.valid_count(), 36);
    }

    #[test]
    fn unit_scale_and_zero_flow_agree() {
        let a = build_sample_grid(&GeometricTransform::scale(1.0, 1.0), (5, 7), (5, 7), BoundaryPolicy::Replicate)
            .unwrap();
        let b = build_sample_grid(
            &GeometricTransform::Flow(FlowField::zeros(5, 7)),
            (5, 7),
            (5, 7),
            BoundaryPolicy::Replicate,
        )
        .unwrap();
        assert_eq!(a, b);
        assert!(a.frac_x.iter().chain(&a.frac_y).all(|f| *f == 0.0));
    }

    #[test]
    fn flow_shape_mismatch() {
        let t = GeometricTransform::Flow(FlowField::zeros(4, 4));
        assert!(matches!(
            build_sample_grid(&t, (4, 4), (5, 4), BoundaryPolicy::Replicate),
            Err(LerfError::Shape(_))
        ));
        assert!(FlowField::new(2, 2, vec![0.0; 3], vec![0.0; 4]).is_err());
    }

    #[test]
    fn forward_homography_is_inverted() {
        let fwd = Matrix3([[2.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 1.0]]);
        let t = GeometricTransform::Homography { matrix: fwd, direction: HomographyDirection::SourceToTarget };
        let a = build_sample_grid(&t, (4, 4), (8, 8), BoundaryPolicy::Replicate).unwrap();
        let b = build_sample_grid(&GeometricTransform::scale(2.0, 2.0), (4, 4), (8, 8), BoundaryPolicy::Replicate)
            .unwrap();
        for i in 0..64 {
            assert!((a.src_x[i] - b.src_x[i]).abs() < 1e-12);
            assert!((a.src_y[i] - b.src_y[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn split_never_returns_unit_fraction() {
        let (b, f) = split_coord(-1e-17);
        assert!(f < 1.0);
        assert!((b as f64 + f - -1e-17).abs() < 1e-12);
    }

    fn arb_matrix() -> impl Strategy<Value = Matrix3> {
        (
            0.6f64..1.4,
            -0.3f64..0.3,
            -5.0f64..5.0,
            -0.3f64..0.3,
            0.6f64..1.4,
            -5.0f64..5.0,
            -1e-3f64..1e-3,
            -1e-3f64..1e-3,
        )
            .prop_map(|(a, b, c, d, e, f, g, h)| Matrix3([[a, b, c], [d, e, f], [g, h, 1.0]]))
    }

    proptest! {
        #[test]
        fn homography_round_trip(m in arb_matrix(), y in 0.0f64..40.0, x in 0.0f64..40.0) {
            let inv = m.inverse().unwrap();
            if let Some((sy, sx)) = back_project_homography(&m, y, x, 10_000, 10_000) {
                let (by, bx) = back_project_homography(&inv, sy, sx, 10_000, 10_000).unwrap();
                prop_assert!((by - y).abs() < 1e-9 && (bx - x).abs() < 1e-9);
            }
        }

        #[test]
        fn grid_reconstructs_source(m in arb_matrix()) {
            let g = build_sample_grid(&GeometricTransform::backward_homography(m), (24, 24), (24, 24), BoundaryPolicy::Replicate).unwrap();
            for i in 0..g.len() {
                if g.valid[i] {
                    prop_assert!((0.0..1.0).contains(&g.frac_y[i]) && (0.0..1.0).contains(&g.frac_x[i]));
                    prop_assert!((g.base_y[i] as f64 + g.frac_y[i] - g.src_y[i]).abs() < 1e-12);
                    prop_assert!((g.base_x[i] as f64 + g.frac_x[i] - g.src_x[i]).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn scale_fracs_in_unit_interval(rh in 0.1f64..8.0, rw in 0.1f64..8.0) {
            let t = GeometricTransform::scale(rh, rw);
            let dims = t.natural_target_dims(13, 11);
            let g = build_sample_grid(&t, (13, 11), dims, BoundaryPolicy::Replicate).unwrap();
            prop_assert!(g.frac_x.iter().chain(&g.frac_y).all(|f| (0.0..1.0).contains(f)));
        }
    }
}
