//! Rotation, translation and scaling of an image relative to a reference,
//! measured as the argmax of normalized cross-correlation over a discrete
//! grid of transform parameters applied to the reference.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::image::Image;
use crate::ncc::Centered;
use crate::par::{self, Execution};
use crate::transform::{clip, rotate, scale, translate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PropertyKind {
    Rotation,
    Translation,
    Scaling,
}

impl PropertyKind {
    /// Parameter value that leaves an image unchanged.
    pub fn identity(self) -> f64 {
        match self {
            PropertyKind::Scaling => 1.0,
            _ => 0.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PropertyKind::Rotation => "rotation",
            PropertyKind::Translation => "translation",
            PropertyKind::Scaling => "scaling",
        }
    }
}

impl fmt::Display for PropertyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PropertyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rotation" => Ok(PropertyKind::Rotation),
            "translation" => Ok(PropertyKind::Translation),
            "scaling" | "scale" => Ok(PropertyKind::Scaling),
            other => Err(invalid(format!("unknown property kind {other:?}"))),
        }
    }
}

/// Axis along which a scalar translation property is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    #[default]
    X,
    Y,
}

/// Discretized search domain for one transform parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "spacing", rename_all = "lowercase")]
pub enum SearchGrid {
    /// `min, min + step, …` up to `max` (inclusive when it falls on the grid).
    Linear { min: f64, max: f64, step: f64 },
    /// `count` points with constant ratio from `min` to `max`; both positive.
    Geometric { min: f64, max: f64, count: usize },
}

impl SearchGrid {
    pub fn linear(min: f64, max: f64, step: f64) -> Result<Self> {
        let g = SearchGrid::Linear { min, max, step };
        g.validate()?;
        Ok(g)
    }

    pub fn geometric(min: f64, max: f64, count: usize) -> Result<Self> {
        let g = SearchGrid::Geometric { min, max, count };
        g.validate()?;
        Ok(g)
    }

    /// Single-point grid.
    pub fn point(value: f64) -> Self {
        SearchGrid::Linear {
            min: value,
            max: value,
            step: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            SearchGrid::Linear { min, max, step } => {
                if !(min.is_finite() && max.is_finite() && step.is_finite()) {
                    return Err(invalid("grid bounds and step must be finite"));
                }
                if step <= 0.0 {
                    return Err(invalid(format!("grid step must be positive, got {step}")));
                }
                if min > max {
                    return Err(invalid(format!("empty grid: min {min} > max {max}")));
                }
            }
            SearchGrid::Geometric { min, max, count } => {
                if !(min.is_finite() && max.is_finite()) || min <= 0.0 || min > max {
                    return Err(invalid(format!(
                        "geometric grid needs 0 < min <= max, got [{min}, {max}]"
                    )));
                }
                if count == 0 || (count == 1 && min != max) {
                    return Err(invalid("geometric grid needs at least two points"));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        match *self {
            SearchGrid::Linear { min, max, step } => ((max - min) / step + 1e-9).floor() as usize + 1,
            SearchGrid::Geometric { count, .. } => count,
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn value(&self, i: usize) -> f64 {
        match *self {
            SearchGrid::Linear { min, step, .. } => min + i as f64 * step,
            SearchGrid::Geometric { min, max, count } => {
                if count == 1 {
                    min
                } else if i + 1 == count {
                    max
                } else {
                    min * (max / min).powf(i as f64 / (count - 1) as f64)
                }
            }
        }
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.value(i)).collect()
    }

    /// Largest gap between neighbouring grid points.
    pub fn max_step(&self) -> f64 {
        match *self {
            SearchGrid::Linear { step, .. } => step,
            SearchGrid::Geometric { min, max, count } => {
                if count < 2 {
                    0.0
                } else {
                    max - self.value(count - 2).max(min)
                }
            }
        }
    }

    pub fn default_rotation() -> Self {
        SearchGrid::Linear {
            min: -90.0,
            max: 90.0,
            step: 0.5,
        }
    }

    /// `[-N/4, N/4]` in 1-pixel steps.
    pub fn default_translation(size: usize) -> Self {
        let half = (size / 4) as f64;
        SearchGrid::Linear {
            min: -half,
            max: half,
            step: 1.0,
        }
    }

    pub fn default_scaling() -> Self {
        SearchGrid::Geometric {
            min: 0.25,
            max: 4.0,
            count: 121,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropertyMeasurement {
    pub kind: PropertyKind,
    /// Rotation in degrees, scaling factor, or the x shift for translation.
    pub value: f64,
    /// y shift; only present for translation.
    pub value_y: Option<f64>,
    pub peak_correlation: f64,
}

impl PropertyMeasurement {
    /// Scalar property along `axis` (the axis matters only for translation).
    pub fn scalar(&self, axis: Axis) -> f64 {
        match (axis, self.value_y) {
            (Axis::Y, Some(dy)) => dy,
            _ => self.value,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimateOptions {
    /// Parabolic refinement through the argmax and its two neighbours.
    pub refine: bool,
    /// Reject measurements whose peak correlation falls below this value.
    pub min_peak: Option<f64>,
    pub execution: Execution,
}

/// Threshold applied when clipped rotation matching is requested without an
/// explicit `T`: 80 % of the reference peak.
pub fn default_threshold(reference: &Image) -> f64 {
    0.8 * reference.max()
}

fn check_pair(reference: &Image, image: &Image) -> Result<Centered> {
    if reference.size() != image.size() {
        return Err(invalid(format!(
            "reference is {}x{0} but image is {}x{1}",
            reference.size(),
            image.size()
        )));
    }
    // Both must carry structure.
    Centered::new(reference)?;
    Centered::new(image)
}

/// Evaluates the correlation at every grid index. Grid points whose
/// transformed reference degenerates (e.g. shifted out of frame) score -inf.
fn scores<F>(len: usize, exec: Execution, target: &Centered, transformed: F) -> Result<Vec<f64>>
where
    F: Fn(usize) -> Result<Image> + Sync + Send,
{
    let raw = par::map_indexed(len, exec, |i| -> Result<f64> {
        let img = transformed(i)?;
        match target.correlate(&img) {
            Ok(r) => Ok(r),
            Err(Error::DegenerateInput(_)) => Ok(f64::NEG_INFINITY),
            Err(e) => Err(e),
        }
    });
    let out: Vec<f64> = raw.into_iter().collect::<Result<_>>()?;
    if out.iter().all(|r| *r == f64::NEG_INFINITY) {
        return Err(Error::DegenerateInput(
            "every transformed reference has zero variance".into(),
        ));
    }
    Ok(out)
}

/// First index of the maximum; `better(a, b)` breaks exact ties.
fn argmax_by(values: &[f64], prefer: impl Fn(usize, usize) -> bool) -> usize {
    let mut best = 0;
    for i in 1..values.len() {
        if values[i] > values[best] || (values[i] == values[best] && prefer(i, best)) {
            best = i;
        }
    }
    best
}

/// Vertex of the parabola through three points, clamped to the outer two.
fn parabolic_vertex(x: [f64; 3], y: [f64; 3]) -> f64 {
    if !y.iter().all(|v| v.is_finite()) {
        return x[1];
    }
    let d1 = (y[1] - y[0]) / (x[1] - x[0]);
    let d2 = (y[2] - y[1]) / (x[2] - x[1]);
    let curvature = (d2 - d1) / (x[2] - x[0]);
    if curvature >= 0.0 {
        return x[1];
    }
    let vertex = 0.5 * (x[0] + x[1]) - d1 / (2.0 * curvature);
    vertex.clamp(x[0], x[2])
}

fn refine_1d(grid: &SearchGrid, scores: &[f64], best: usize) -> f64 {
    if best == 0 || best + 1 >= scores.len() {
        return grid.value(best);
    }
    parabolic_vertex(
        [grid.value(best - 1), grid.value(best), grid.value(best + 1)],
        [scores[best - 1], scores[best], scores[best + 1]],
    )
}

fn check_peak(peak: f64, opts: &EstimateOptions) -> Result<()> {
    match opts.min_peak {
        Some(min_peak) if peak < min_peak => Err(Error::LowPeak { peak, min_peak }),
        _ => Ok(()),
    }
}

pub fn estimate_translation(
    reference: &Image,
    image: &Image,
    grid_x: &SearchGrid,
    grid_y: &SearchGrid,
) -> Result<PropertyMeasurement> {
    estimate_translation_with(reference, image, grid_x, grid_y, &EstimateOptions::default())
}

/// Argmax over `(dx, dy)` of `r(translate(reference, dx, dy), image)`.
/// Ties resolve to the lexicographically smallest `(dx, dy)`.
pub fn estimate_translation_with(
    reference: &Image,
    image: &Image,
    grid_x: &SearchGrid,
    grid_y: &SearchGrid,
    opts: &EstimateOptions,
) -> Result<PropertyMeasurement> {
    grid_x.validate()?;
    grid_y.validate()?;
    let target = check_pair(reference, image)?;
    let (nx, ny) = (grid_x.len(), grid_y.len());
    // dx-major ordering makes "first maximum" the lexicographic minimum.
    let s = scores(nx * ny, opts.execution, &target, |i| {
        translate(reference, grid_x.value(i / ny), grid_y.value(i % ny), 0.0)
    })?;
    let best = argmax_by(&s, |_, _| false);
    let (bx, by) = (best / ny, best % ny);
    let peak = s[best];
    check_peak(peak, opts)?;
    let (mut dx, mut dy) = (grid_x.value(bx), grid_y.value(by));
    if opts.refine {
        let row: Vec<f64> = (0..nx).map(|i| s[i * ny + by]).collect();
        let col: Vec<f64> = (0..ny).map(|j| s[bx * ny + j]).collect();
        dx = refine_1d(grid_x, &row, bx);
        dy = refine_1d(grid_y, &col, by);
    }
    Ok(PropertyMeasurement {
        kind: PropertyKind::Translation,
        value: dx,
        value_y: Some(dy),
        peak_correlation: peak,
    })
}

pub fn estimate_rotation(
    reference: &Image,
    image: &Image,
    grid: &SearchGrid,
    threshold: Option<f64>,
) -> Result<PropertyMeasurement> {
    estimate_rotation_with(reference, image, grid, threshold, &EstimateOptions::default())
}

/// Argmax over δ of `r(rotate(reference, δ), image)`, or with a threshold
/// `T`, of `r(rotate(clip(reference, T), δ), clip(image, T))`.
/// Ties resolve to the smallest δ.
pub fn estimate_rotation_with(
    reference: &Image,
    image: &Image,
    grid: &SearchGrid,
    threshold: Option<f64>,
    opts: &EstimateOptions,
) -> Result<PropertyMeasurement> {
    grid.validate()?;
    check_pair(reference, image)?;
    let (reference, image) = match threshold {
        Some(t) => (clip(reference, t)?, clip(image, t)?),
        None => (reference.clone(), image.clone()),
    };
    let target = check_pair(&reference, &image)?;
    let s = scores(grid.len(), opts.execution, &target, |i| {
        rotate(&reference, grid.value(i), 0.0)
    })?;
    let best = argmax_by(&s, |_, _| false);
    finish_1d(PropertyKind::Rotation, grid, &s, best, opts)
}

pub fn estimate_scaling(
    reference: &Image,
    image: &Image,
    grid: &SearchGrid,
) -> Result<PropertyMeasurement> {
    estimate_scaling_with(reference, image, grid, &EstimateOptions::default())
}

/// Argmax over δ of `r(scale(reference, δ), image)`. Ties resolve to the
/// factor closest to 1, then the smallest factor.
pub fn estimate_scaling_with(
    reference: &Image,
    image: &Image,
    grid: &SearchGrid,
    opts: &EstimateOptions,
) -> Result<PropertyMeasurement> {
    grid.validate()?;
    let target = check_pair(reference, image)?;
    let s = scores(grid.len(), opts.execution, &target, |i| {
        scale(reference, grid.value(i), 0.0)
    })?;
    let best = argmax_by(&s, |i, b| {
        (grid.value(i) - 1.0).abs() < (grid.value(b) - 1.0).abs()
    });
    finish_1d(PropertyKind::Scaling, grid, &s, best, opts)
}

fn finish_1d(
    kind: PropertyKind,
    grid: &SearchGrid,
    s: &[f64],
    best: usize,
    opts: &EstimateOptions,
) -> Result<PropertyMeasurement> {
    let peak = s[best];
    check_peak(peak, opts)?;
    let value = if opts.refine {
        refine_1d(grid, s, best)
    } else {
        grid.value(best)
    };
    Ok(PropertyMeasurement {
        kind,
        value,
        value_y: None,
        peak_correlation: peak,
    })
}

/// How one scalar property is measured: which grid, and for rotation an
/// optional clipping threshold, for translation the axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropertyEstimator {
    pub kind: PropertyKind,
    pub grid: SearchGrid,
    /// Clipping threshold for rotation matching.
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default)]
    pub axis: Axis,
    #[serde(default)]
    pub options: EstimateOptions,
    /// A second property that also varies across the images.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nuisance: Option<Nuisance>,
}

fn default_rounds() -> usize {
    3
}

/// Another property searched alternately with the measured one, so that
/// its presence in the image does not bias the measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Nuisance {
    pub kind: PropertyKind,
    pub grid: SearchGrid,
    #[serde(default)]
    pub axis: Axis,
    /// Maximum number of alternations.
    #[serde(default = "default_rounds")]
    pub rounds: usize,
}

impl Nuisance {
    pub fn new(kind: PropertyKind, grid: SearchGrid) -> Self {
        Nuisance {
            kind,
            grid,
            axis: Axis::X,
            rounds: default_rounds(),
        }
    }
}

fn apply_property(kind: PropertyKind, axis: Axis, img: &Image, value: f64) -> Result<Image> {
    match (kind, axis) {
        (PropertyKind::Rotation, _) => rotate(img, value, 0.0),
        (PropertyKind::Scaling, _) => scale(img, value, 0.0),
        (PropertyKind::Translation, Axis::X) => translate(img, value, 0.0, 0.0),
        (PropertyKind::Translation, Axis::Y) => translate(img, 0.0, value, 0.0),
    }
}

impl PropertyEstimator {
    pub fn new(kind: PropertyKind, grid: SearchGrid) -> Self {
        PropertyEstimator {
            kind,
            grid,
            threshold: None,
            axis: Axis::X,
            options: EstimateOptions::default(),
            nuisance: None,
        }
    }

    pub fn with_nuisance(mut self, nuisance: Option<Nuisance>) -> Self {
        self.nuisance = nuisance;
        self
    }

    pub fn with_threshold(mut self, threshold: Option<f64>) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn with_axis(mut self, axis: Axis) -> Self {
        self.axis = axis;
        self
    }

    pub fn with_options(mut self, options: EstimateOptions) -> Self {
        self.options = options;
        self
    }

    /// Measures the property. With a nuisance, alternates between measuring
    /// the property against the reference carrying the current nuisance
    /// estimate and re-measuring the nuisance against the reference carrying
    /// the property, starting from the identity nuisance.
    pub fn measure(&self, reference: &Image, image: &Image) -> Result<PropertyMeasurement> {
        let Some(n) = self.nuisance else {
            return self.measure_plain(reference, image);
        };
        if n.kind == self.kind {
            return Err(invalid(format!("nuisance must differ from the measured {}", self.kind)));
        }
        if n.rounds == 0 {
            return Err(invalid("nuisance rounds must be at least 1"));
        }
        let other = PropertyEstimator {
            kind: n.kind,
            grid: n.grid,
            threshold: None,
            axis: n.axis,
            options: self.options,
            nuisance: None,
        };
        let mut nu = n.kind.identity();
        for _ in 0..n.rounds {
            let m = self.measure_plain(&apply_property(n.kind, n.axis, reference, nu)?, image)?;
            let with_main = apply_property(self.kind, self.axis, reference, m.scalar(self.axis))?;
            let next = other.measure_plain(&with_main, image)?.scalar(n.axis);
            if next == nu {
                return Ok(m);
            }
            nu = next;
        }
        self.measure_plain(&apply_property(n.kind, n.axis, reference, nu)?, image)
    }

    fn measure_plain(&self, reference: &Image, image: &Image) -> Result<PropertyMeasurement> {
        match self.kind {
            PropertyKind::Rotation => {
                estimate_rotation_with(reference, image, &self.grid, self.threshold, &self.options)
            }
            PropertyKind::Scaling => estimate_scaling_with(reference, image, &self.grid, &self.options),
            // Both shifts are searched so one cannot bias the other;
            // `axis` only selects which one is reported as the scalar.
            PropertyKind::Translation => {
                estimate_translation_with(reference, image, &self.grid, &self.grid, &self.options)
            }
        }
    }

    /// Scalar measured value along the configured axis.
    pub fn measure_scalar(&self, reference: &Image, image: &Image) -> Result<f64> {
        Ok(self.measure(reference, image)?.scalar(self.axis))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::asymmetric_target;
    use crate::ncc::cross_correlation;

    #[test]
    fn grid_counts_and_values() {
        let g = SearchGrid::linear(-30.0, 30.0, 0.1).unwrap();
        assert_eq!(g.len(), 601);
        assert!((g.value(600) - 30.0).abs() < 1e-9);
        assert_eq!(SearchGrid::linear(0.5, 2.0, 0.005).unwrap().len(), 301);
        assert_eq!(SearchGrid::linear(-6.0, 6.0, 0.08).unwrap().len(), 151);
        let geo = SearchGrid::default_scaling();
        assert_eq!(geo.len(), 121);
        assert_eq!(geo.value(0), 0.25);
        assert_eq!(geo.value(120), 4.0);
        assert!((geo.value(60) - 1.0).abs() < 1e-12);
        assert!(SearchGrid::linear(1.0, 0.0, 1.0).is_err());
        assert!(SearchGrid::linear(0.0, 1.0, 0.0).is_err());
        assert!(SearchGrid::geometric(0.0, 1.0, 3).is_err());
        assert_eq!(SearchGrid::default_translation(28).values().len(), 15);
    }

    #[test]
    fn self_match_returns_identity() {
        let r = asymmetric_target(28);
        let t = estimate_translation(
            &r,
            &r,
            &SearchGrid::linear(-3.0, 3.0, 1.0).unwrap(),
            &SearchGrid::linear(-3.0, 3.0, 1.0).unwrap(),
        )
        .unwrap();
        assert_eq!((t.value, t.value_y), (0.0, Some(0.0)));
        assert!((t.peak_correlation - 1.0).abs() < 1e-12);
        let rot = estimate_rotation(&r, &r, &SearchGrid::linear(-10.0, 10.0, 0.5).unwrap(), None)
            .unwrap();
        assert_eq!(rot.value, 0.0);
        let s = estimate_scaling(&r, &r, &SearchGrid::default_scaling()).unwrap();
        assert!((s.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn translation_recovered_by_enumeration() {
        let r = asymmetric_target(28);
        let img = translate(&r, 3.0, -2.0, 0.0).unwrap();
        let g = SearchGrid::linear(-6.0, 6.0, 1.0).unwrap();
        let m = estimate_translation(&r, &img, &g, &g).unwrap();
        assert_eq!((m.value, m.value_y), (3.0, Some(-2.0)));
        // independent full enumeration
        let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
        for dx in -6..=6 {
            for dy in -6..=6 {
                let cand = translate(&r, dx as f64, dy as f64, 0.0).unwrap();
                let c = cross_correlation(&cand, &img).unwrap();
                if c > best.0 {
                    best = (c, dx as f64, dy as f64);
                }
            }
        }
        assert_eq!((best.1, best.2), (3.0, -2.0));
    }

    #[test]
    fn scalar_translation_is_unbiased_by_the_other_shift() {
        let r = asymmetric_target(28);
        let img = translate(&r, 3.0, -2.0, 0.0).unwrap();
        let g = SearchGrid::linear(-6.0, 6.0, 1.0).unwrap();
        let est = PropertyEstimator::new(PropertyKind::Translation, g);
        assert_eq!(est.measure_scalar(&r, &img).unwrap(), 3.0);
        assert_eq!(est.with_axis(Axis::Y).measure_scalar(&r, &img).unwrap(), -2.0);
    }

    #[test]
    fn rotation_and_scaling_recovered() {
        let r = asymmetric_target(28);
        let g = SearchGrid::linear(-30.0, 30.0, 0.5).unwrap();
        let m = estimate_rotation(&r, &rotate(&r, 10.0, 0.0).unwrap(), &g, None).unwrap();
        assert!((m.value - 10.0).abs() <= 0.5);
        let m = estimate_rotation(&r, &rotate(&r, 10.0, 0.0).unwrap(), &g, Some(0.5)).unwrap();
        assert!((m.value - 10.0).abs() <= 0.5);
        let sg = SearchGrid::linear(0.5, 2.0, 0.05).unwrap();
        let m = estimate_scaling(&r, &scale(&r, 1.5, 0.0).unwrap(), &sg).unwrap();
        assert!((m.value - 1.5).abs() <= 0.05);
    }

    #[test]
    fn refinement_gets_off_grid_angle_closer() {
        let r = asymmetric_target(28);
        let img = rotate(&r, 7.3, 0.0).unwrap();
        let g = SearchGrid::linear(-20.0, 20.0, 1.0).unwrap();
        let coarse = estimate_rotation(&r, &img, &g, None).unwrap();
        let opts = EstimateOptions {
            refine: true,
            ..Default::default()
        };
        let fine = estimate_rotation_with(&r, &img, &g, None, &opts).unwrap();
        assert!((fine.value - coarse.value).abs() <= 1.0);
        assert!((fine.value - 7.3).abs() < (coarse.value - 7.3).abs());
    }

    #[test]
    fn self_peak_dominates_other_candidates() {
        let r = asymmetric_target(28);
        let g = SearchGrid::linear(-5.0, 5.0, 0.5).unwrap();
        let self_peak = estimate_rotation(&r, &r, &g, None).unwrap().peak_correlation;
        for d in [-3.0, 1.5, 4.0] {
            let other = rotate(&r, d, 0.0).unwrap();
            assert!(cross_correlation(&r, &other).unwrap() <= self_peak);
        }
    }

    #[test]
    fn errors_and_filters() {
        let r = asymmetric_target(28);
        let flat = Image::new(28, vec![0.5; 784]).unwrap();
        let g = SearchGrid::linear(-5.0, 5.0, 1.0).unwrap();
        assert!(matches!(
            estimate_rotation(&r, &flat, &g, None),
            Err(Error::DegenerateInput(_))
        ));
        assert!(matches!(
            estimate_scaling(&flat, &r, &SearchGrid::default_scaling()),
            Err(Error::DegenerateInput(_))
        ));
        assert!(estimate_rotation(&r, &asymmetric_target(20), &g, None).is_err());
        let bad = SearchGrid::Linear { min: 1.0, max: 0.0, step: 1.0 };
        assert!(matches!(
            estimate_rotation(&r, &r, &bad, None),
            Err(Error::InvalidArgument(_))
        ));
        let opts = EstimateOptions {
            min_peak: Some(0.9999),
            ..Default::default()
        };
        let img = rotate(&r, 13.3, 0.0).unwrap();
        assert!(matches!(
            estimate_rotation_with(&r, &img, &g, None, &opts),
            Err(Error::LowPeak { .. })
        ));
    }

    #[test]
    fn scaling_tie_break_prefers_unity() {
        let s = vec![0.5; 5];
        let g = SearchGrid::linear(0.8, 1.2, 0.1).unwrap();
        let best = argmax_by(&s, |i, b| (g.value(i) - 1.0).abs() < (g.value(b) - 1.0).abs());
        assert_eq!(best, 2);
        assert_eq!(argmax_by(&s, |_, _| false), 0);
    }

    #[test]
    fn nuisance_search_removes_scale_bias() {
        let r = asymmetric_target(28);
        let img = scale(&r, 1.15, 0.0).unwrap();
        let rot = PropertyEstimator::new(PropertyKind::Rotation, SearchGrid::linear(-45.0, 45.0, 0.5).unwrap());
        let biased = rot.measure_scalar(&r, &img).unwrap();
        let grid = SearchGrid::linear(0.5, 1.5, 0.01).unwrap();
        let joint = rot.with_nuisance(Some(Nuisance::new(PropertyKind::Scaling, grid)));
        assert!(biased.abs() >= 1.0);
        assert_eq!(joint.measure_scalar(&r, &img).unwrap(), 0.0);
        let same = rot.with_nuisance(Some(Nuisance::new(PropertyKind::Rotation, grid)));
        assert!(same.measure(&r, &img).is_err());
    }

    #[test]
    fn parabola_vertex() {
        let v = parabolic_vertex([0.0, 1.0, 2.0], [0.0, 1.0, 0.5]);
        // y = -0.75x^2 + 1.75x  => vertex 7/6
        assert!((v - 7.0 / 6.0).abs() < 1e-12);
        assert_eq!(parabolic_vertex([0.0, 1.0, 2.0], [1.0, 0.0, 1.0]), 1.0);
    }

    #[test]
    fn determinism_across_execution_modes() {
        let r = asymmetric_target(28);
        let img = rotate(&scale(&r, 1.1, 0.0).unwrap(), 4.2, 0.0).unwrap();
        let g = SearchGrid::linear(-10.0, 10.0, 0.5).unwrap();
        let seq = EstimateOptions {
            execution: Execution::Sequential,
            ..Default::default()
        };
        let a = estimate_rotation_with(&r, &img, &g, None, &seq).unwrap();
        let b = estimate_rotation(&r, &img, &g, None).unwrap();
        assert_eq!(a, b);
    }
}
