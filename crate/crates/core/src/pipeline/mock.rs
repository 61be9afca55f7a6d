//! Ground-truth image generator: warps a reference by properties that are
//! known tanh functions of the codes.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimate::{Axis, PropertyKind};
use crate::fixtures::asymmetric_target;
use crate::image::Image;
use crate::sar::{render_scene_at_angle_with, RadarConfig, ScatterScene};
use crate::transform::{rotate, scale, translate, SCALE_RANGE};
use crate::par::Execution;

/// `δ(c) = offset + gain·tanh(Σ slopes_i·c_i + quadratic·[c1², c2², c1·c2] + bias)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropertyMapping {
    pub property: PropertyKind,
    pub gain: f64,
    pub slopes: Vec<f64>,
    #[serde(default)]
    pub bias: f64,
    #[serde(default)]
    pub offset: f64,
    /// Coefficients of `c1², c2², c1·c2`; 2-code only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadratic: Option<[f64; 3]>,
    /// Shift direction for translation.
    #[serde(default)]
    pub axis: Axis,
}

impl PropertyMapping {
    pub fn tanh(property: PropertyKind, gain: f64, slopes: Vec<f64>, bias: f64, offset: f64) -> Self {
        PropertyMapping {
            property,
            gain,
            slopes,
            bias,
            offset,
            quadratic: None,
            axis: Axis::X,
        }
    }

    pub fn with_quadratic(mut self, q: [f64; 3]) -> Self {
        self.quadratic = Some(q);
        self
    }

    pub fn inner(&self, codes: &[f64]) -> f64 {
        let mut u = self.bias;
        for (s, c) in self.slopes.iter().zip(codes) {
            u += s * c;
        }
        if let (Some(q), [c1, c2]) = (self.quadratic, codes) {
            u += q[0] * c1 * c1 + q[1] * c2 * c2 + q[2] * c1 * c2;
        }
        u
    }

    pub fn value(&self, codes: &[f64]) -> f64 {
        self.offset + self.gain * self.inner(codes).tanh()
    }

    fn validate(&self) -> Result<()> {
        let finite = [self.gain, self.bias, self.offset]
            .iter()
            .chain(&self.slopes)
            .chain(self.quadratic.iter().flatten())
            .all(|v| v.is_finite());
        if !finite {
            return Err(invalid(format!("{} mapping must be finite", self.property)));
        }
        if !(1..=2).contains(&self.slopes.len()) {
            return Err(invalid(format!("{} mapping needs 1 or 2 slopes", self.property)));
        }
        if self.quadratic.is_some() && self.slopes.len() != 2 {
            return Err(invalid("quadratic terms need two codes"));
        }
        if self.property == PropertyKind::Scaling {
            let (lo, hi) = (self.offset - self.gain.abs(), self.offset + self.gain.abs());
            if !(lo >= SCALE_RANGE.0 && hi <= SCALE_RANGE.1) {
                return Err(invalid(format!(
                    "scaling mapping range [{lo}, {hi}] leaves [{}, {}]",
                    SCALE_RANGE.0, SCALE_RANGE.1
                )));
            }
        }
        Ok(())
    }
}

/// Ground-truth property values carried in manifests.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub rotation_deg: Option<f64>,
    pub translation_px: Option<f64>,
    pub scale: Option<f64>,
}

impl GroundTruth {
    pub fn get(&self, kind: PropertyKind) -> Option<f64> {
        match kind {
            PropertyKind::Rotation => self.rotation_deg,
            PropertyKind::Translation => self.translation_px,
            PropertyKind::Scaling => self.scale,
        }
    }

    fn set(&mut self, kind: PropertyKind, v: f64) {
        match kind {
            PropertyKind::Rotation => self.rotation_deg = Some(v),
            PropertyKind::Translation => self.translation_px = Some(v),
            PropertyKind::Scaling => self.scale = Some(v),
        }
    }
}

fn default_order() -> Vec<PropertyKind> {
    vec![PropertyKind::Scaling, PropertyKind::Rotation, PropertyKind::Translation]
}

fn default_size() -> usize {
    28
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockGeneratorSpec {
    /// Reference image file, relative to the spec file. Without one the
    /// built-in asymmetric target of `reference_size` is used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<PathBuf>,
    #[serde(default = "default_size")]
    pub reference_size: usize,
    #[serde(rename = "mapping")]
    pub mappings: Vec<PropertyMapping>,
    #[serde(default = "default_order")]
    pub order: Vec<PropertyKind>,
    /// Half-width of the uniform per-pixel noise.
    #[serde(default)]
    pub noise_amplitude: f64,
    #[serde(default)]
    pub fill: f64,
}

impl MockGeneratorSpec {
    pub fn new(mappings: Vec<PropertyMapping>) -> Self {
        MockGeneratorSpec {
            reference: None,
            reference_size: default_size(),
            mappings,
            order: default_order(),
            noise_amplitude: 0.0,
            fill: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mappings.is_empty() {
            return Err(invalid("mock generator needs at least one mapping"));
        }
        let dim = self.mappings[0].slopes.len();
        for (i, m) in self.mappings.iter().enumerate() {
            m.validate()?;
            if m.slopes.len() != dim {
                return Err(invalid("all mappings must use the same number of codes"));
            }
            if self.mappings[..i].iter().any(|o| o.property == m.property) {
                return Err(invalid(format!("duplicate mapping for {}", m.property)));
            }
        }
        let mut order = self.order.clone();
        order.sort();
        order.dedup();
        if order.len() != 3 || self.order.len() != 3 {
            return Err(invalid("order must list rotation, translation and scaling once each"));
        }
        if !(self.noise_amplitude >= 0.0 && self.noise_amplitude.is_finite()) {
            return Err(invalid("noise amplitude must be nonnegative"));
        }
        if !self.fill.is_finite() || self.reference_size == 0 {
            return Err(invalid("invalid fill or reference size"));
        }
        Ok(())
    }

    pub fn code_dim(&self) -> usize {
        self.mappings.first().map_or(0, |m| m.slopes.len())
    }

    pub fn parse(text: &str, location: &str) -> Result<Self> {
        let spec: MockGeneratorSpec =
            toml::from_str(text).map_err(|e| Error::parse(location, e.to_string()))?;
        spec.validate().map_err(|e| Error::parse(location, e.to_string()))?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| invalid(format!("cannot serialize generator: {e}")))
    }
}

/// Anything that turns codes into an image: the mock, a simulator sweep, or
/// a trained generator behind an adapter.
pub trait Generator: Sync {
    fn code_dim(&self) -> usize;
    fn generate(&self, codes: &[f64], seed: u64) -> Result<Image>;
    fn ground_truth(&self, codes: &[f64]) -> GroundTruth;
}

#[derive(Debug, Clone)]
pub struct MockGenerator {
    spec: MockGeneratorSpec,
    reference: Image,
}

impl MockGenerator {
    pub fn new(spec: MockGeneratorSpec, reference: Image) -> Result<Self> {
        spec.validate()?;
        Ok(MockGenerator { spec, reference })
    }

    /// Uses the built-in target when the spec names no reference file.
    pub fn from_spec(spec: MockGeneratorSpec, base_dir: &Path) -> Result<Self> {
        let reference = match &spec.reference {
            Some(p) => Image::load(base_dir.join(p))?,
            None => asymmetric_target(spec.reference_size),
        };
        Self::new(spec, reference)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec = MockGeneratorSpec::parse(&text, &path.display().to_string())?;
        Self::from_spec(spec, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn spec(&self) -> &MockGeneratorSpec {
        &self.spec
    }

    pub fn reference(&self) -> &Image {
        &self.reference
    }

    fn mapping(&self, kind: PropertyKind) -> Option<&PropertyMapping> {
        self.spec.mappings.iter().find(|m| m.property == kind)
    }
}

impl Generator for MockGenerator {
    fn code_dim(&self) -> usize {
        self.spec.code_dim()
    }

    fn generate(&self, codes: &[f64], seed: u64) -> Result<Image> {
        if codes.len() != self.code_dim() {
            return Err(invalid(format!(
                "generator takes {} code(s), got {}",
                self.code_dim(),
                codes.len()
            )));
        }
        if !codes.iter().all(|c| c.is_finite()) {
            return Err(invalid("codes must be finite"));
        }
        let fill = self.spec.fill;
        let mut img = self.reference.clone();
        for &kind in &self.spec.order {
            let Some(m) = self.mapping(kind) else { continue };
            let v = m.value(codes);
            img = match kind {
                PropertyKind::Scaling => scale(&img, v, fill)?,
                PropertyKind::Rotation => rotate(&img, v, fill)?,
                PropertyKind::Translation => match m.axis {
                    Axis::X => translate(&img, v, 0.0, fill)?,
                    Axis::Y => translate(&img, 0.0, v, fill)?,
                },
            };
        }
        let amp = self.spec.noise_amplitude;
        if amp > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let noisy = img
                .pixels()
                .iter()
                .map(|&p| (p + rng.random_range(-amp..=amp)).clamp(0.0, 1.0))
                .collect();
            img = Image::new(img.size(), noisy)?;
        }
        Ok(img)
    }

    fn ground_truth(&self, codes: &[f64]) -> GroundTruth {
        let mut gt = GroundTruth::default();
        for m in &self.spec.mappings {
            gt.set(m.property, m.value(codes));
        }
        gt
    }
}

/// Simulated SAR sweep: the scene is rotated by `offset + slope·c1` degrees
/// and imaged.
#[derive(Debug, Clone)]
pub struct SceneGenerator {
    pub radar: RadarConfig,
    pub scene: ScatterScene,
    pub offset_deg: f64,
    pub slope_deg: f64,
    pub execution: Execution,
}

impl Generator for SceneGenerator {
    fn code_dim(&self) -> usize {
        1
    }

    fn generate(&self, codes: &[f64], _seed: u64) -> Result<Image> {
        if codes.len() != 1 {
            return Err(invalid("scene sweep takes one code"));
        }
        render_scene_at_angle_with(&self.radar, &self.scene, self.angle(codes[0]), self.execution)
    }

    fn ground_truth(&self, codes: &[f64]) -> GroundTruth {
        GroundTruth {
            rotation_deg: Some(self.angle(codes[0])),
            ..GroundTruth::default()
        }
    }
}

impl SceneGenerator {
    pub fn angle(&self, c1: f64) -> f64 {
        self.offset_deg + self.slope_deg * c1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rotation_mock() -> MockGenerator {
        let spec = MockGeneratorSpec::new(vec![PropertyMapping::tanh(
            PropertyKind::Rotation,
            40.0,
            vec![1.0],
            0.0,
            0.0,
        )]);
        MockGenerator::new(spec, asymmetric_target(28)).unwrap()
    }

    #[test]
    fn zero_code_returns_reference() {
        let g = rotation_mock();
        assert_eq!(g.generate(&[0.0], 1).unwrap(), *g.reference());
        assert!(matches!(g.generate(&[0.0, 1.0], 1), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn seeded_noise_is_reproducible_and_clipped() {
        let mut g = rotation_mock();
        g.spec.noise_amplitude = 0.2;
        let a = g.generate(&[0.3], 9).unwrap();
        assert_eq!(a, g.generate(&[0.3], 9).unwrap());
        assert_ne!(a, g.generate(&[0.3], 10).unwrap());
        assert!(a.pixels().iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn ground_truth_matches_mapping() {
        let g = rotation_mock();
        let gt = g.ground_truth(&[0.5]);
        assert!((gt.rotation_deg.unwrap() - 40.0 * 0.5f64.tanh()).abs() < 1e-15);
        assert_eq!(gt.scale, None);
    }

    #[test]
    fn spec_validation() {
        let rot = PropertyMapping::tanh(PropertyKind::Rotation, 40.0, vec![1.0], 0.0, 0.0);
        let mut spec = MockGeneratorSpec::new(vec![rot.clone(), rot.clone()]);
        assert!(spec.validate().is_err());
        spec.mappings = vec![PropertyMapping::tanh(PropertyKind::Scaling, 1.5, vec![1.0], 0.0, 1.0)];
        assert!(spec.validate().is_err());
        spec.mappings = vec![rot.clone(), PropertyMapping::tanh(PropertyKind::Scaling, 0.3, vec![1.0, 0.0], 0.0, 1.0)];
        assert!(spec.validate().is_err());
        spec.mappings = vec![rot];
        spec.order = vec![PropertyKind::Rotation; 3];
        assert!(spec.validate().is_err());
    }

    #[test]
    fn spec_file_round_trip() {
        let text = r#"
            noise_amplitude = 0.01
            [[mapping]]
            property = "rotation"
            gain = 40.0
            slopes = [1.2, 0.0]
            quadratic = [0.1, 0.0, 0.3]
            [[mapping]]
            property = "scaling"
            gain = 0.3
            slopes = [0.0, 1.0]
            offset = 1.0
        "#;
        let spec = MockGeneratorSpec::parse(text, "mem").unwrap();
        assert_eq!(spec.code_dim(), 2);
        assert_eq!(spec.order, default_order());
        let again = MockGeneratorSpec::parse(&spec.to_toml().unwrap(), "mem").unwrap();
        assert_eq!(again, spec);
        assert!(MockGeneratorSpec::parse("mapping = []\nbogus = 1", "mem").is_err());
    }
}
