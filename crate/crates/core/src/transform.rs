//! Geometric transforms (rotation, translation, scaling) with bilinear
//! resampling, and the clipping operator used before rotation matching.
//!
//! All warps are inverse-mapped: each output pixel looks up its source
//! position in the input and samples it bilinearly. Sources falling outside
//! the input extent `[0, N-1]²` take the `fill` value. Rotation and scaling
//! pivot on the geometric center `((N-1)/2, (N-1)/2)`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::image::Image;

/// Accepted range for scaling factors.
pub const SCALE_RANGE: (f64, f64) = (0.05, 20.0);

/// Slack for source coordinates that land a rounding error outside the grid.
const EDGE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TransformParam {
    /// Counterclockwise as displayed (rows increase downwards), in degrees,
    /// normalized to `(-180, 180]`.
    Rotation { degrees: f64 },
    Translation { dx: f64, dy: f64 },
    Scaling { factor: f64 },
}

impl TransformParam {
    pub fn rotation(degrees: f64) -> Result<Self> {
        if !degrees.is_finite() {
            return Err(invalid(format!("rotation angle {degrees} is not finite")));
        }
        Ok(TransformParam::Rotation {
            degrees: normalize_degrees(degrees),
        })
    }

    pub fn translation(dx: f64, dy: f64) -> Result<Self> {
        if !dx.is_finite() || !dy.is_finite() {
            return Err(invalid(format!("shift ({dx}, {dy}) is not finite")));
        }
        Ok(TransformParam::Translation { dx, dy })
    }

    pub fn scaling(factor: f64) -> Result<Self> {
        check_scale(factor)?;
        Ok(TransformParam::Scaling { factor })
    }

    pub fn apply(&self, img: &Image, fill: f64) -> Result<Image> {
        match *self {
            TransformParam::Rotation { degrees } => rotate(img, degrees, fill),
            TransformParam::Translation { dx, dy } => translate(img, dx, dy, fill),
            TransformParam::Scaling { factor } => scale(img, factor, fill),
        }
    }
}

/// Maps an angle in degrees to `(-180, 180]`.
pub fn normalize_degrees(deg: f64) -> f64 {
    let mut a = deg % 360.0;
    if a <= -180.0 {
        a += 360.0;
    } else if a > 180.0 {
        a -= 360.0;
    }
    a
}

/// `(sin, cos)` of an angle in degrees, exact for multiples of 90°.
pub(crate) fn sin_cos_degrees(deg: f64) -> (f64, f64) {
    let a = normalize_degrees(deg);
    if a == 0.0 {
        (0.0, 1.0)
    } else if a == 90.0 {
        (1.0, 0.0)
    } else if a == 180.0 {
        (0.0, -1.0)
    } else if a == -90.0 {
        (-1.0, 0.0)
    } else {
        a.to_radians().sin_cos()
    }
}

fn check_fill(fill: f64) -> Result<()> {
    if fill.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("fill value {fill} is not finite")))
    }
}

fn check_scale(factor: f64) -> Result<()> {
    if !factor.is_finite() || factor < SCALE_RANGE.0 || factor > SCALE_RANGE.1 {
        return Err(invalid(format!(
            "scaling factor {factor} outside [{}, {}]",
            SCALE_RANGE.0, SCALE_RANGE.1
        )));
    }
    Ok(())
}

/// Bilinear sample at a fractional source position; `None` outside the extent.
#[inline]
pub fn sample_bilinear(img: &Image, xs: f64, ys: f64) -> Option<f64> {
    let n = img.size();
    let hi = (n - 1) as f64;
    if !(xs >= -EDGE_EPS && xs <= hi + EDGE_EPS && ys >= -EDGE_EPS && ys <= hi + EDGE_EPS) {
        return None;
    }
    if n == 1 {
        return Some(img.get(0, 0));
    }
    let xs = xs.clamp(0.0, hi);
    let ys = ys.clamp(0.0, hi);
    let x0 = (xs.floor() as usize).min(n - 2);
    let y0 = (ys.floor() as usize).min(n - 2);
    let fx = xs - x0 as f64;
    let fy = ys - y0 as f64;
    let p = img.pixels();
    let i = y0 * n + x0;
    let top = (1.0 - fx) * p[i] + fx * p[i + 1];
    let bottom = (1.0 - fx) * p[i + n] + fx * p[i + n + 1];
    Some((1.0 - fy) * top + fy * bottom)
}

fn warp(img: &Image, fill: f64, source_of: impl Fn(f64, f64) -> (f64, f64)) -> Image {
    let n = img.size();
    let mut out = Vec::with_capacity(n * n);
    for y in 0..n {
        for x in 0..n {
            let (xs, ys) = source_of(x as f64, y as f64);
            out.push(sample_bilinear(img, xs, ys).unwrap_or(fill));
        }
    }
    Image::from_vec_unchecked(n, out)
}

fn center(img: &Image) -> f64 {
    (img.size() as f64 - 1.0) / 2.0
}

/// Rotates `img` counterclockwise by `degrees` about its center.
pub fn rotate(img: &Image, degrees: f64, fill: f64) -> Result<Image> {
    if !degrees.is_finite() {
        return Err(invalid(format!("rotation angle {degrees} is not finite")));
    }
    check_fill(fill)?;
    let (s, c) = sin_cos_degrees(degrees);
    if s == 0.0 && c == 1.0 {
        return Ok(img.clone());
    }
    let ctr = center(img);
    // Work in y-up coordinates (u, w) so positive angles turn content
    // counterclockwise on screen; source = R(-θ) · destination.
    Ok(warp(img, fill, |x, y| {
        let u = x - ctr;
        let w = ctr - y;
        let us = u * c + w * s;
        let ws = -u * s + w * c;
        (ctr + us, ctr - ws)
    }))
}

/// Shifts content by `dx` columns (right) and `dy` rows (down).
pub fn translate(img: &Image, dx: f64, dy: f64, fill: f64) -> Result<Image> {
    if !dx.is_finite() || !dy.is_finite() {
        return Err(invalid(format!("shift ({dx}, {dy}) is not finite")));
    }
    check_fill(fill)?;
    if dx == 0.0 && dy == 0.0 {
        return Ok(img.clone());
    }
    Ok(warp(img, fill, |x, y| (x - dx, y - dy)))
}

/// Magnifies (`factor > 1`) or shrinks content about the image center.
pub fn scale(img: &Image, factor: f64, fill: f64) -> Result<Image> {
    check_scale(factor)?;
    check_fill(fill)?;
    if factor == 1.0 {
        return Ok(img.clone());
    }
    let ctr = center(img);
    let inv = 1.0 / factor;
    Ok(warp(img, fill, |x, y| {
        (ctr + (x - ctr) * inv, ctr + (y - ctr) * inv)
    }))
}

/// Elementwise limiter: values above `threshold` are replaced by it.
pub fn clip(img: &Image, threshold: f64) -> Result<Image> {
    if !threshold.is_finite() {
        return Err(invalid(format!("threshold {threshold} is not finite")));
    }
    let pixels = img
        .pixels()
        .iter()
        .map(|&v| if v <= threshold { v } else { threshold })
        .collect();
    Ok(Image::from_vec_unchecked(img.size(), pixels))
}
