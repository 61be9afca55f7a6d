//! Calibration loop: sweep codes through a generator, measure a property
//! on every image, fit a model, then invert it for desired values and check
//! what the generator actually produces there.

mod manifest;
mod mock;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use manifest::{CalibrationDataset, ManifestEntry};
pub use mock::{
    Generator, GroundTruth, MockGenerator, MockGeneratorSpec, PropertyMapping, SceneGenerator,
};

use crate::error::{invalid, Error, Result};
use crate::estimate::{PropertyEstimator, PropertyKind, SearchGrid};
use crate::fit::{fit, CalibrationSample, Family, FitOptions, PropertyModel, TwoPropertyModel};
use crate::image::Image;
use crate::par::{self, Execution};
use crate::sar::RadarConfig;
use crate::solve::{
    intersect_level_sets, invert_1code, level_set_2code, sample_level_set, IntersectOptions, Region,
};

/// Uniform code grid over `[min, max]` per code; a 2-code grid is the
/// Cartesian product, c1-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeGrid {
    pub min: f64,
    pub max: f64,
    pub count: usize,
    pub dim: usize,
}

impl CodeGrid {
    pub fn new(min: f64, max: f64, count: usize, dim: usize) -> Result<Self> {
        let g = CodeGrid { min, max, count, dim };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(invalid("code grid must be non-empty"));
        }
        if !(1..=2).contains(&self.dim) {
            return Err(invalid("code grids have 1 or 2 codes"));
        }
        if !(self.min.is_finite() && self.max.is_finite() && self.min <= self.max) {
            return Err(invalid("code grid bounds must be finite with min <= max"));
        }
        if self.count > 1 && self.min == self.max {
            return Err(invalid("several grid points need min < max"));
        }
        Ok(())
    }

    pub fn axis(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![0.5 * (self.min + self.max)];
        }
        (0..self.count)
            .map(|i| self.min + (self.max - self.min) * i as f64 / (self.count - 1) as f64)
            .collect()
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        let axis = self.axis();
        if self.dim == 1 {
            return axis.iter().map(|&c| vec![c]).collect();
        }
        axis.iter()
            .flat_map(|&a| axis.iter().map(move |&b| vec![a, b]))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "lowercase")]
pub enum SeedPolicy {
    /// Every entry uses the same noise seed.
    Fixed { seed: u64 },
    /// Entry `i` gets a seed hashed from the master seed and `i`.
    Derived { master: u64 },
}

impl Default for SeedPolicy {
    fn default() -> Self {
        SeedPolicy::Derived { master: 0 }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl SeedPolicy {
    pub fn seed_for(&self, index: usize) -> u64 {
        match *self {
            SeedPolicy::Fixed { seed } => seed,
            SeedPolicy::Derived { master } => splitmix64(master ^ splitmix64(index as u64)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageFormat {
    #[default]
    Pgm,
    F32,
}

impl ImageFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ImageFormat::Pgm => "pgm",
            ImageFormat::F32 => "f32",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepOptions {
    pub format: ImageFormat,
    pub seed_policy: SeedPolicy,
    pub execution: Execution,
}

pub const MANIFEST_NAME: &str = "manifest.tsv";

/// Generates one image per grid point into `out_dir/images` and writes
/// `out_dir/manifest.tsv`. Images are generated in parallel and written
/// afterwards in entry order.
pub fn sweep(
    generator: &dyn Generator,
    grid: &CodeGrid,
    opts: &SweepOptions,
    out_dir: &Path,
) -> Result<CalibrationDataset> {
    grid.validate()?;
    if grid.dim != generator.code_dim() {
        return Err(invalid(format!(
            "grid has {} code(s), generator takes {}",
            grid.dim,
            generator.code_dim()
        )));
    }
    let points = grid.points();
    let images = par::map_indexed(points.len(), opts.execution, |i| {
        generator.generate(&points[i], opts.seed_policy.seed_for(i))
    });

    let img_dir = out_dir.join("images");
    fs::create_dir_all(&img_dir).map_err(|e| Error::io(&img_dir, e))?;
    let width = points.len().to_string().len().max(4);
    let mut entries = Vec::with_capacity(points.len());
    for (i, (codes, img)) in points.into_iter().zip(images).enumerate() {
        let img = img?;
        let rel = PathBuf::from("images").join(format!("img_{i:0width$}.{}", opts.format.extension()));
        img.save(out_dir.join(&rel))?;
        entries.push(ManifestEntry {
            image_path: rel,
            ground_truth: generator.ground_truth(&codes),
            codes,
            noise_seed: opts.seed_policy.seed_for(i),
        });
    }
    let ds = CalibrationDataset::new(out_dir, entries);
    ds.save(out_dir.join(MANIFEST_NAME))?;
    Ok(ds)
}

fn with_path(e: Error, path: &Path) -> Error {
    let p = path.display();
    match e {
        Error::DegenerateInput(m) => Error::DegenerateInput(format!("{p}: {m}")),
        Error::InvalidArgument(m) => Error::InvalidArgument(format!("{p}: {m}")),
        Error::LowPeak { peak, min_peak } => Error::Validation(format!(
            "{p}: correlation peak {peak} below minimum {min_peak}"
        )),
        other => other,
    }
}

/// Measures every entry against `reference`, in entry order.
pub fn measure_dataset(
    ds: &CalibrationDataset,
    reference: &Image,
    estimator: &PropertyEstimator,
    exec: Execution,
) -> Result<Vec<CalibrationSample>> {
    if ds.is_empty() {
        return Err(Error::Validation("dataset has no entries".into()));
    }
    ds.validate_structure()?;
    let results = par::map_slice(&ds.entries, exec, |e| {
        let path = ds.resolve(e);
        let img = Image::load(&path)?;
        let delta = estimator
            .measure_scalar(reference, &img)
            .map_err(|err| with_path(err, &path))?;
        Ok(CalibrationSample::new(e.codes.clone(), delta))
    });
    results.into_iter().collect()
}

/// Measures the dataset and fits `family` to the result.
pub fn calibrate(
    ds: &CalibrationDataset,
    reference: &Image,
    estimator: &PropertyEstimator,
    family: Family,
    fit_opts: &FitOptions,
    exec: Execution,
) -> Result<PropertyModel> {
    if family.code_dim() != ds.code_dim() {
        return Err(invalid(format!(
            "{family} takes {} code(s) but the dataset has {}",
            family.code_dim(),
            ds.code_dim()
        )));
    }
    let samples = measure_dataset(ds, reference, estimator, exec)?;
    let mut model = fit(family, estimator.kind, &samples, fit_opts)?;
    model.measurement = Some(*estimator);
    Ok(model)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetStatus {
    Ok,
    Unreachable,
    NoSolution,
    NoConvergence,
    MeasureFailed,
}

impl TargetStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TargetStatus::Ok => "ok",
            TargetStatus::Unreachable => "unreachable",
            TargetStatus::NoSolution => "no_solution",
            TargetStatus::NoConvergence => "no_convergence",
            TargetStatus::MeasureFailed => "measure_failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub property: PropertyKind,
    pub target: f64,
    /// Empty when no codes were found.
    pub codes: Vec<f64>,
    pub measured: Option<f64>,
    pub abs_error: Option<f64>,
    pub status: TargetStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropertyRms {
    pub property: PropertyKind,
    pub rms: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// Where the evaluated model came from.
    pub model: String,
    pub rows: Vec<ReportRow>,
    /// RMS of `abs_error` over the rows with status `ok`, per property.
    pub summary: Vec<PropertyRms>,
}

impl EvaluationReport {
    pub fn new(model: impl Into<String>, rows: Vec<ReportRow>) -> Self {
        let mut summary: Vec<PropertyRms> = Vec::new();
        for row in &rows {
            let Some(err) = row.abs_error else { continue };
            match summary.iter_mut().find(|s| s.property == row.property) {
                Some(s) => {
                    s.rms += err * err;
                    s.count += 1;
                }
                None => summary.push(PropertyRms {
                    property: row.property,
                    rms: err * err,
                    count: 1,
                }),
            }
        }
        for s in &mut summary {
            s.rms = (s.rms / s.count as f64).sqrt();
        }
        EvaluationReport {
            model: model.into(),
            rows,
            summary,
        }
    }

    pub fn rms(&self, kind: PropertyKind) -> Option<f64> {
        self.summary.iter().find(|s| s.property == kind).map(|s| s.rms)
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from("property,target,c1,c2,measured,abs_error,status\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.property,
                r.target,
                opt(r.codes.first().copied()),
                opt(r.codes.get(1).copied()),
                opt(r.measured),
                opt(r.abs_error),
                r.status.as_str()
            );
        }
        out
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// What `synthesize_*` needs besides the model and targets.
#[derive(Clone, Copy)]
pub struct SynthesisContext<'a> {
    pub generator: &'a dyn Generator,
    pub reference: &'a Image,
    pub region: Region,
    pub intersect: IntersectOptions,
    /// Points sampled along a 2-code level set before picking one.
    pub level_set_samples: usize,
    pub seed: u64,
    pub execution: Execution,
}

fn status_of(e: &Error) -> TargetStatus {
    match e {
        Error::Unreachable { .. } => TargetStatus::Unreachable,
        Error::NoConvergence(_) => TargetStatus::NoConvergence,
        _ => TargetStatus::MeasureFailed,
    }
}

fn remeasure(
    ctx: &SynthesisContext<'_>,
    codes: &[f64],
    seed: u64,
    estimators: &[(&PropertyEstimator, f64)],
) -> Vec<ReportRow> {
    let img = ctx.generator.generate(codes, seed);
    estimators
        .iter()
        .map(|&(est, target)| {
            let measured = img.as_ref().ok().and_then(|img| est.measure_scalar(ctx.reference, img).ok());
            ReportRow {
                property: est.kind,
                target,
                codes: codes.to_vec(),
                measured,
                abs_error: measured.map(|m| (m - target).abs()),
                status: if measured.is_some() { TargetStatus::Ok } else { TargetStatus::MeasureFailed },
            }
        })
        .collect()
}

fn failed_row(kind: PropertyKind, target: f64, status: TargetStatus) -> ReportRow {
    ReportRow {
        property: kind,
        target,
        codes: vec![],
        measured: None,
        abs_error: None,
        status,
    }
}

fn estimator_of(model: &PropertyModel, fallback: Option<&PropertyEstimator>) -> Result<PropertyEstimator> {
    fallback
        .copied()
        .or(model.measurement)
        .ok_or_else(|| invalid(format!("no estimator recorded for the {} model", model.property_kind)))
}

/// Codes for one desired value: the exact inverse for 1-code models, the
/// level-set point nearest the region center for 2-code models.
pub fn solve_single(model: &PropertyModel, target: f64, region: &Region, samples: usize) -> Result<Vec<f64>> {
    if model.family.code_dim() == 1 {
        return Ok(invert_1code(model, target)?.codes);
    }
    let ls = level_set_2code(model, target)?;
    let (m1, m2) = (0.5 * (region.c1.0 + region.c1.1), 0.5 * (region.c2.0 + region.c2.1));
    sample_level_set(&ls, region, samples)?
        .into_iter()
        .min_by(|a, b| {
            let da = (a[0] - m1).hypot(a[1] - m2);
            let db = (b[0] - m1).hypot(b[1] - m2);
            da.total_cmp(&db)
        })
        .map(|p| p.to_vec())
        .ok_or_else(|| Error::NoConvergence(format!("level set for {target} misses the code region")))
}

/// Inverts a single-property model for each target, generates an image at
/// the solved codes and re-measures it. Failed targets are reported, not fatal.
pub fn synthesize_1property(
    model: &PropertyModel,
    model_name: &str,
    targets: &[f64],
    estimator: Option<&PropertyEstimator>,
    ctx: &SynthesisContext<'_>,
) -> Result<EvaluationReport> {
    let est = estimator_of(model, estimator)?;
    if model.family.code_dim() != ctx.generator.code_dim() {
        return Err(invalid("model and generator code dimensions differ"));
    }
    let rows = par::map_indexed(targets.len(), ctx.execution, |i| {
        let target = targets[i];
        match solve_single(model, target, &ctx.region, ctx.level_set_samples) {
            Ok(codes) => remeasure(ctx, &codes, splitmix64(ctx.seed ^ i as u64), &[(&est, target)]),
            Err(e) => vec![failed_row(est.kind, target, status_of(&e))],
        }
    });
    Ok(EvaluationReport::new(model_name, rows.into_iter().flatten().collect()))
}

/// Intersects the two models' level sets for each `(target_a, target_b)`
/// pair and re-measures both properties at every solution.
pub fn synthesize_2property(
    pair: &TwoPropertyModel,
    model_name: &str,
    targets: &[(f64, f64)],
    estimators: (Option<&PropertyEstimator>, Option<&PropertyEstimator>),
    ctx: &SynthesisContext<'_>,
) -> Result<EvaluationReport> {
    let est_a = estimator_of(&pair.model_a, estimators.0)?;
    let est_b = estimator_of(&pair.model_b, estimators.1)?;
    if ctx.generator.code_dim() != 2 {
        return Err(invalid("two-property synthesis needs a 2-code generator"));
    }
    let rows = par::map_indexed(targets.len(), ctx.execution, |i| {
        let (ta, tb) = targets[i];
        let found = intersect_level_sets(&pair.model_a, ta, &pair.model_b, tb, &ctx.region, &ctx.intersect);
        match found {
            Ok(sols) if sols.is_empty() => vec![
                failed_row(est_a.kind, ta, TargetStatus::NoSolution),
                failed_row(est_b.kind, tb, TargetStatus::NoSolution),
            ],
            Ok(sols) => sols
                .iter()
                .enumerate()
                .flat_map(|(k, s)| {
                    let seed = splitmix64(ctx.seed ^ splitmix64(i as u64) ^ k as u64);
                    remeasure(ctx, &s.codes, seed, &[(&est_a, ta), (&est_b, tb)])
                })
                .collect(),
            Err(e) => vec![
                failed_row(est_a.kind, ta, status_of(&e)),
                failed_row(est_b.kind, tb, status_of(&e)),
            ],
        }
    });
    Ok(EvaluationReport::new(model_name, rows.into_iter().flatten().collect()))
}

/// Estimator settings per property.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorSet {
    pub rotation: PropertyEstimator,
    pub translation: PropertyEstimator,
    pub scaling: PropertyEstimator,
}

impl Default for EstimatorSet {
    fn default() -> Self {
        EstimatorSet {
            rotation: PropertyEstimator::new(PropertyKind::Rotation, SearchGrid::default_rotation()),
            translation: PropertyEstimator::new(PropertyKind::Translation, SearchGrid::default_translation(28)),
            scaling: PropertyEstimator::new(PropertyKind::Scaling, SearchGrid::default_scaling()),
        }
    }
}

impl EstimatorSet {
    pub fn get(&self, kind: PropertyKind) -> &PropertyEstimator {
        match kind {
            PropertyKind::Rotation => &self.rotation,
            PropertyKind::Translation => &self.translation,
            PropertyKind::Scaling => &self.scaling,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for kind in [PropertyKind::Rotation, PropertyKind::Translation, PropertyKind::Scaling] {
            let e = self.get(kind);
            if e.kind != kind {
                return Err(invalid(format!("estimator under [{kind}] measures {}", e.kind)));
            }
            e.grid.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub min: f64,
    pub max: f64,
    pub count: usize,
    pub format: ImageFormat,
    /// `false` gives every entry the master seed itself.
    pub derive_seeds: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            min: -1.5,
            max: 1.5,
            count: 30,
            format: ImageFormat::Pgm,
            derive_seeds: true,
        }
    }
}

/// Every tunable of the pipeline, loadable from TOML. Missing keys take
/// their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub execution: Execution,
    pub sweep: SweepConfig,
    pub estimators: EstimatorSet,
    pub fit: FitOptions,
    pub intersect: IntersectOptions,
    pub region: Region,
    pub level_set_samples: usize,
    pub radar: RadarConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            execution: Execution::default(),
            sweep: SweepConfig::default(),
            estimators: EstimatorSet::default(),
            fit: FitOptions::default(),
            intersect: IntersectOptions::default(),
            region: Region::default(),
            level_set_samples: 101,
            radar: RadarConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.estimators.validate()?;
        self.region.validate()?;
        self.radar.validate()?;
        CodeGrid::new(self.sweep.min, self.sweep.max, self.sweep.count, 1)?;
        if self.level_set_samples == 0 {
            return Err(invalid("level_set_samples must be positive"));
        }
        Ok(())
    }

    pub fn parse(text: &str, location: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::parse(location, e.to_string()))?;
        cfg.validate().map_err(|e| Error::parse(location, e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| invalid(format!("cannot serialize config: {e}")))
    }

    pub fn seed_policy(&self) -> SeedPolicy {
        if self.sweep.derive_seeds {
            SeedPolicy::Derived { master: self.seed }
        } else {
            SeedPolicy::Fixed { seed: self.seed }
        }
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            seed: self.fit.seed ^ self.seed,
            execution: self.execution,
            ..self.fit
        }
    }

    pub fn sweep_options(&self) -> SweepOptions {
        SweepOptions {
            format: self.sweep.format,
            seed_policy: self.seed_policy(),
            execution: self.execution,
        }
    }

    pub fn code_grid(&self, dim: usize) -> Result<CodeGrid> {
        CodeGrid::new(self.sweep.min, self.sweep.max, self.sweep.count, dim)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::asymmetric_target;

    fn rotation_mock(gain: f64) -> MockGenerator {
        let spec = MockGeneratorSpec::new(vec![PropertyMapping::tanh(
            PropertyKind::Rotation,
            gain,
            vec![1.0],
            0.0,
            0.0,
        )]);
        MockGenerator::new(spec, asymmetric_target(28)).unwrap()
    }

    #[test]
    fn grid_sizes() {
        assert_eq!(CodeGrid::new(-1.5, 1.5, 30, 1).unwrap().points().len(), 30);
        let g2 = CodeGrid::new(-1.5, 1.5, 30, 2).unwrap().points();
        assert_eq!(g2.len(), 900);
        assert_eq!(g2[1], vec![-1.5, g2[1][1]]);
        assert_eq!(CodeGrid::new(0.0, 0.0, 1, 1).unwrap().points(), vec![vec![0.0]]);
        assert!(CodeGrid::new(0.0, 1.0, 0, 1).is_err());
    }

    #[test]
    fn seeds_are_distinct_and_stable() {
        let p = SeedPolicy::Derived { master: 5 };
        assert_ne!(p.seed_for(0), p.seed_for(1));
        assert_eq!(p.seed_for(3), SeedPolicy::Derived { master: 5 }.seed_for(3));
        assert_eq!(SeedPolicy::Fixed { seed: 9 }.seed_for(100), 9);
    }

    #[test]
    fn single_point_sweep_is_reference() {
        let dir = tempfile::tempdir().unwrap();
        let g = rotation_mock(40.0);
        let opts = SweepOptions {
            format: ImageFormat::F32,
            ..SweepOptions::default()
        };
        let ds = sweep(&g, &CodeGrid::new(0.0, 0.0, 1, 1).unwrap(), &opts, dir.path()).unwrap();
        assert_eq!(ds.len(), 1);
        let img = Image::load(ds.resolve(&ds.entries[0])).unwrap();
        let back: Vec<f64> = g.reference().pixels().iter().map(|&p| p as f32 as f64).collect();
        assert_eq!(img.pixels(), &back[..]);
        assert_eq!(CalibrationDataset::load(dir.path().join(MANIFEST_NAME)).unwrap(), ds);
    }

    #[test]
    fn copies_of_reference_measure_identity() {
        let dir = tempfile::tempdir().unwrap();
        let g = rotation_mock(40.0);
        let grid = CodeGrid::new(0.0, 0.0, 1, 1).unwrap();
        let ds = sweep(&g, &grid, &SweepOptions::default(), dir.path()).unwrap();
        let reference = Image::load(ds.resolve(&ds.entries[0])).unwrap();
        let est = EstimatorSet::default();
        for kind in [PropertyKind::Rotation, PropertyKind::Translation, PropertyKind::Scaling] {
            let s = measure_dataset(&ds, &reference, est.get(kind), Execution::Sequential).unwrap();
            assert_eq!(s[0].delta, kind.identity());
        }
    }

    #[test]
    fn constant_mapping_gives_degenerate_fit() {
        let dir = tempfile::tempdir().unwrap();
        let g = rotation_mock(0.0);
        let grid = CodeGrid::new(-1.5, 1.5, 6, 1).unwrap();
        let ds = sweep(&g, &grid, &SweepOptions::default(), dir.path()).unwrap();
        let est = EstimatorSet::default().rotation;
        let reference = Image::load(ds.resolve(&ds.entries[0])).unwrap();
        let m = calibrate(&ds, &reference, &est, Family::Tanh1C, &FitOptions::default(), Execution::Parallel)
            .unwrap();
        assert!(m.degenerate);
        assert_eq!(m.measurement, Some(est));
    }

    #[test]
    fn measurement_errors_name_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let g = rotation_mock(40.0);
        let ds = sweep(&g, &CodeGrid::new(0.0, 0.0, 1, 1).unwrap(), &SweepOptions::default(), dir.path()).unwrap();
        let flat = Image::zeros(28);
        flat.save(ds.resolve(&ds.entries[0])).unwrap();
        let est = EstimatorSet::default().rotation;
        match measure_dataset(&ds, g.reference(), &est, Execution::Sequential) {
            Err(Error::DegenerateInput(m)) => assert!(m.contains("img_0000")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn report_aggregates_per_property() {
        let row = |p, err: Option<f64>| ReportRow {
            property: p,
            target: 1.0,
            codes: vec![0.1],
            measured: err.map(|e| 1.0 + e),
            abs_error: err,
            status: if err.is_some() { TargetStatus::Ok } else { TargetStatus::Unreachable },
        };
        let r = EvaluationReport::new(
            "m.toml",
            vec![
                row(PropertyKind::Rotation, Some(3.0)),
                row(PropertyKind::Rotation, Some(4.0)),
                row(PropertyKind::Scaling, None),
            ],
        );
        assert!((r.rms(PropertyKind::Rotation).unwrap() - 12.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(r.rms(PropertyKind::Scaling), None);
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.lines().last().unwrap().ends_with(",,,unreachable"));
    }

    #[test]
    fn unreachable_targets_do_not_abort() {
        let g = rotation_mock(40.0);
        let m = PropertyModel::new(Family::Tanh1C, PropertyKind::Rotation, vec![0.0, 1.0, 0.0, 40.0]).unwrap();
        let ctx = SynthesisContext {
            generator: &g,
            reference: g.reference(),
            region: Region::default(),
            intersect: IntersectOptions::default(),
            level_set_samples: 101,
            seed: 0,
            execution: Execution::Sequential,
        };
        let est = EstimatorSet::default().rotation;
        let r = synthesize_1property(&m, "m", &[20.0, 55.0, 0.0], Some(&est), &ctx).unwrap();
        assert_eq!(r.rows[1].status, TargetStatus::Unreachable);
        assert_eq!(r.rows[0].status, TargetStatus::Ok);
        assert!(r.rows[0].abs_error.unwrap() <= 1.0);
        assert_eq!(r.rows[2].measured, Some(0.0));
    }

    #[test]
    fn config_defaults_and_round_trip() {
        let cfg = PipelineConfig::parse("seed = 4\n[sweep]\ncount = 12\n", "mem").unwrap();
        assert_eq!(cfg.sweep.count, 12);
        assert_eq!(cfg.fit.max_iterations, 200);
        assert_eq!(cfg.intersect.bracket_grid, 64);
        assert_eq!(PipelineConfig::parse(&cfg.to_toml().unwrap(), "mem").unwrap(), cfg);
        assert!(PipelineConfig::parse("bogus = 1", "mem").is_err());
        assert!(PipelineConfig::parse("[estimators.rotation]\nkind = \"scaling\"\ngrid = { spacing = \"linear\", min = 0.5, max = 2.0, step = 0.1 }", "mem").is_err());
    }
}
