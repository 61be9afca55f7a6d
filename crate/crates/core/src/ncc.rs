//! Normalized (Pearson) cross-correlation between two same-sized images.
//!
//! `r(X, Y) = Σ(X - X̄)(Y - Ȳ) / (‖X - X̄‖ ‖Y - Ȳ‖)`, which lies in `[-1, 1]`
//! and equals 1 exactly when `Y` is a positive affine function of `X`.

use crate::error::{invalid, Error, Result};
use crate::image::Image;

/// Mean-removed copy of an image together with its norm, reusable across
/// many correlations against the same target.
#[derive(Debug, Clone)]
pub struct Centered {
    size: usize,
    values: Vec<f64>,
    norm: f64,
}

impl Centered {
    pub fn new(img: &Image) -> Result<Self> {
        let (values, norm) = center(img.pixels())
            .ok_or_else(|| Error::DegenerateInput("image has zero variance".into()))?;
        Ok(Centered {
            size: img.size(),
            values,
            norm,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Correlation of `other` against this centered target.
    pub fn correlate(&self, other: &Image) -> Result<f64> {
        if other.size() != self.size {
            return Err(invalid(format!(
                "size mismatch: {} vs {}",
                other.size(),
                self.size
            )));
        }
        let p = other.pixels();
        let mean = p.iter().sum::<f64>() / p.len() as f64;
        let mut dot = 0.0;
        let mut ss = 0.0;
        for (&v, &t) in p.iter().zip(&self.values) {
            let d = v - mean;
            dot += d * t;
            ss += d * d;
        }
        if is_degenerate(ss, p) {
            return Err(Error::DegenerateInput("image has zero variance".into()));
        }
        Ok((dot / (ss.sqrt() * self.norm)).clamp(-1.0, 1.0))
    }
}

/// Treats a sum of squared deviations at rounding-noise level as zero variance.
fn is_degenerate(ss: f64, values: &[f64]) -> bool {
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let noise = 64.0 * f64::EPSILON * scale;
    !(ss > values.len() as f64 * noise * noise)
}

fn center(values: &[f64]) -> Option<(Vec<f64>, f64)> {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let centered: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let ss: f64 = centered.iter().map(|d| d * d).sum();
    if is_degenerate(ss, values) {
        None
    } else {
        Some((centered, ss.sqrt()))
    }
}

/// Normalized cross-correlation of two images.
///
/// Errors on a size mismatch and on a zero-variance argument rather than
/// returning 0.
pub fn cross_correlation(x: &Image, y: &Image) -> Result<f64> {
    if x.size() != y.size() {
        return Err(invalid(format!(
            "size mismatch: {} vs {}",
            x.size(),
            y.size()
        )));
    }
    Centered::new(y)?.correlate(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_negative_relation() {
        let x = Image::new(2, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let y = Image::new(2, vec![3.0, 2.0, 1.0, 0.0]).unwrap();
        assert!((cross_correlation(&x, &y).unwrap() + 1.0).abs() < 1e-12);
        assert!((cross_correlation(&x, &x).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_and_mismatched_inputs() {
        let x = Image::new(2, vec![0.3; 4]).unwrap();
        let y = Image::new(2, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        assert!(matches!(cross_correlation(&x, &y), Err(Error::DegenerateInput(_))));
        assert!(matches!(cross_correlation(&y, &x), Err(Error::DegenerateInput(_))));
        let z = Image::zeros(3);
        assert!(matches!(cross_correlation(&y, &z), Err(Error::InvalidArgument(_))));
    }

    fn image_strategy() -> impl Strategy<Value = Image> {
        proptest::collection::vec(0.0f64..1.0, 36)
            .prop_filter("non-constant", |v| v.iter().any(|&a| (a - v[0]).abs() > 1e-3))
            .prop_map(|v| Image::new(6, v).unwrap())
    }

    proptest! {
        #[test]
        fn symmetric(x in image_strategy(), y in image_strategy()) {
            let a = cross_correlation(&x, &y).unwrap();
            let b = cross_correlation(&y, &x).unwrap();
            prop_assert!((a - b).abs() <= 1e-12);
            prop_assert!((-1.0..=1.0).contains(&a));
        }

        #[test]
        fn affine_invariant(x in image_strategy(), y in image_strategy(), a in 0.01f64..50.0, b in -10.0f64..10.0) {
            let r = cross_correlation(&x, &y).unwrap();
            let scaled = Image::new(6, y.pixels().iter().map(|v| a * v + b).collect()).unwrap();
            prop_assert!((cross_correlation(&x, &scaled).unwrap() - r).abs() <= 1e-9);
            let neg = Image::new(6, x.pixels().iter().map(|v| -a * v + b).collect()).unwrap();
            prop_assert!((cross_correlation(&x, &neg).unwrap() + 1.0).abs() <= 1e-9);
            let pos = Image::new(6, x.pixels().iter().map(|v| a * v + b).collect()).unwrap();
            prop_assert!((cross_correlation(&x, &pos).unwrap() - 1.0).abs() <= 1e-9);
        }
    }
}
