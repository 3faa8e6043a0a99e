//! Deterministic inputs shared by the criterion benches.

use lerf_core::ImageBuffer;

/// Smooth colour test card with some fine texture, values in `[0, 1]`.
pub fn test_card(height: usize, width: usize) -> ImageBuffer {
    ImageBuffer::from_fn(height, width, 3, |c, y, x| {
        let (y, x) = (y as f64, x as f64);
        let base = 0.5 + 0.3 * (0.031 * x + 0.7 * c as f64).sin() * (0.023 * y).cos();
        let detail = 0.1 * ((0.9 * x).sin() * (1.3 * y).cos());
        (base + detail).clamp(0.0, 1.0)
    })
    .expect("valid dimensions")
}

/// Mild projective warp about the image centre.
pub fn tilt(height: usize, width: usize) -> lerf_core::Matrix3 {
    let (cy, cx) = (height as f64 / 2.0, width as f64 / 2.0);
    let (s, c) = (0.08f64.sin(), 0.08f64.cos());
    let a = [[c, -s], [s, c]];
    lerf_core::Matrix3([
        [a[0][0], a[0][1], cx - a[0][0] * cx - a[0][1] * cy],
        [a[1][0], a[1][1], cy - a[1][0] * cx - a[1][1] * cy],
        [1e-4, 5e-5, 1.0],
    ])
}
