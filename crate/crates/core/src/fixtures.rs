//! Synthetic reference targets.

use crate::image::Image;

/// Blobs as (dx, dy, amplitude, sigma) in units of a 28-pixel frame.
const SHIP_BLOBS: [(f64, f64, f64, f64); 6] = [
    (-4.0, -1.0, 1.0, 1.2),
    (-1.5, -0.5, 0.7, 1.0),
    (1.5, 0.3, 0.85, 1.1),
    (4.0, 1.0, 0.6, 0.9),
    (0.5, -2.5, 0.9, 0.8),
    (-2.0, 2.0, 0.45, 0.9),
];

/// Elongated, mirror- and rotation-asymmetric target made of Gaussian
/// blobs around the image center, normalized to peak 1.
///
/// The content stays within roughly a quarter of the frame from the center,
/// so it survives rotations, 6-pixel shifts (at 28 px) and 2x magnification.
pub fn asymmetric_target(size: usize) -> Image {
    let unit = size as f64 / 28.0;
    let c = (size as f64 - 1.0) / 2.0;
    let raw = Image::from_fn(size, |x, y| {
        SHIP_BLOBS
            .iter()
            .map(|&(dx, dy, a, s)| {
                let (px, py) = (c + dx * unit, c + dy * unit);
                let s = s * unit;
                let r2 = (x as f64 - px).powi(2) + (y as f64 - py).powi(2);
                a * (-r2 / (2.0 * s * s)).exp()
            })
            .sum()
    })
    .expect("finite blobs");
    let peak = raw.max();
    Image::new(size, raw.pixels().iter().map(|v| v / peak).collect()).expect("finite")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transform::rotate;

    #[test]
    fn normalized_and_not_symmetric() {
        let t = asymmetric_target(28);
        assert!((t.max() - 1.0).abs() < 1e-15);
        let flipped = rotate(&t, 180.0, 0.0).unwrap();
        assert!(t.rms_diff(&flipped).unwrap() > 0.05);
    }
}
