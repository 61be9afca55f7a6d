//! `sarlatent` command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error,
//! 3 numerical failure.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sarlatent::estimate::Axis;
use sarlatent::fit::{self, CalibrationSample, Family, PropertyModel, TwoPropertyModel};
use sarlatent::pipeline::{
    self, CalibrationDataset, CodeGrid, EvaluationReport, Generator, ImageFormat, MockGenerator, PipelineConfig,
    SceneGenerator, SynthesisContext, TargetStatus, MANIFEST_NAME,
};
use sarlatent::sar::{form_image, simulate_raw_with, SceneFile};
use sarlatent::solve::{intersect_level_sets, invert_1code, level_set_2code, sample_level_set};
use sarlatent::transform::{clip, rotate, scale, translate};
use sarlatent::{Error, Image, Nuisance, PropertyEstimator, PropertyKind, SearchGrid};

#[derive(Parser)]
#[command(name = "sarlatent", version, about = "Calibrate generator codes against measured SAR image properties")]
struct Cli {
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for every file the command writes.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Pipeline config (TOML). Missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Image a point-scatterer scene at one or more rotation angles.
    Simulate(SimulateArgs),
    /// Scale, rotate, translate and clip an image, in that order.
    Transform(TransformArgs),
    /// Measure one property of images against a reference; CSV on stdout.
    Measure(MeasureArgs),
    /// Generate images over a code grid and write a manifest.
    Sweep(SweepArgs),
    /// Fit a code-to-property model to a measured dataset.
    Fit(FitArgs),
    /// Solve a 1-code model for the codes giving each target value.
    Invert(InvertArgs),
    /// Sample the level set of a 2-code model; CSV on stdout.
    Levelset(LevelsetArgs),
    /// Intersect the level sets of two 2-code models; CSV on stdout.
    Intersect(IntersectArgs),
    /// Invert, generate and re-measure for a list of targets.
    Evaluate(EvaluateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Pgm,
    F32,
}

impl From<Format> for ImageFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Pgm => ImageFormat::Pgm,
            Format::F32 => ImageFormat::F32,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    X,
    Y,
}

impl From<AxisArg> for Axis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::X => Axis::X,
            AxisArg::Y => Axis::Y,
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// Scene file: `[[scatterer]]` entries and an optional `[radar]` table.
    #[arg(long)]
    scene: PathBuf,
    /// Scene rotation in degrees; repeat or comma-separate for several images.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "0")]
    angle: Vec<f64>,
    #[arg(long, value_enum, default_value = "pgm")]
    format: Format,
    /// File name prefix inside the output directory.
    #[arg(long, default_value = "sim")]
    prefix: String,
}

#[derive(Args)]
struct TransformArgs {
    #[arg(long)]
    input: PathBuf,
    /// Output file name; `.f32` selects raw floats, anything else PGM.
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    scale: Option<f64>,
    /// Degrees, counterclockwise as displayed.
    #[arg(long, allow_hyphen_values = true)]
    rotate: Option<f64>,
    /// Shift in pixels as `dx,dy`.
    #[arg(long, value_delimiter = ',', num_args = 1, allow_hyphen_values = true)]
    translate: Option<Vec<f64>>,
    /// Clip intensities above this threshold last.
    #[arg(long)]
    clip: Option<f64>,
    /// Value for pixels mapped from outside the source.
    #[arg(long, default_value_t = 0.0)]
    fill: f64,
}

#[derive(Args)]
struct GridArgs {
    /// Search grid minimum; needs --max and --step.
    #[arg(long, allow_hyphen_values = true, requires_all = ["max", "step"])]
    min: Option<f64>,
    #[arg(long, allow_hyphen_values = true, requires_all = ["min", "step"])]
    max: Option<f64>,
    #[arg(long, requires_all = ["min", "max"])]
    step: Option<f64>,
}

#[derive(Args)]
struct MeasureArgs {
    #[arg(long)]
    reference: PathBuf,
    /// rotation, translation or scaling.
    #[arg(long)]
    property: PropertyKind,
    /// Measure every entry of this manifest instead of listed images.
    #[arg(long, conflicts_with = "images")]
    manifest: Option<PathBuf>,
    images: Vec<PathBuf>,
    #[command(flatten)]
    grid: GridArgs,
    /// Clipping threshold for rotation matching.
    #[arg(long)]
    threshold: Option<f64>,
    /// Parabolic refinement of the grid argmax.
    #[arg(long)]
    refine: bool,
    /// A second property varying in the images, searched alternately.
    #[arg(long)]
    nuisance: Option<PropertyKind>,
    /// Also write the CSV to this file inside the output directory.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Mock generator spec (TOML); its reference image is written too.
    #[arg(long, conflicts_with = "scene", required_unless_present = "scene")]
    generator: Option<PathBuf>,
    /// Scene file; the sweep rotates it by `offset + slope·c1` degrees.
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    offset: f64,
    #[arg(long, default_value_t = 30.0, allow_hyphen_values = true)]
    slope: f64,
    #[arg(long, allow_hyphen_values = true)]
    min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    max: Option<f64>,
    /// Grid points per code axis.
    #[arg(long)]
    count: Option<usize>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// CSV written by `measure --manifest`.
    #[arg(long, required_unless_present = "reference")]
    measurements: Option<PathBuf>,
    /// Measure the manifest against this reference with the configured
    /// estimator instead of reading measurements.
    #[arg(long, conflicts_with = "measurements")]
    reference: Option<PathBuf>,
    /// LINEAR_1C, TANH_1C, LINEAR_2C, TANH_LIN_2C or TANH_QUAD_2C.
    #[arg(long)]
    family: Family,
    #[arg(long)]
    property: PropertyKind,
    /// Translation axis to fit.
    #[arg(long, value_enum, default_value = "x")]
    axis: AxisArg,
    /// Model file name inside the output directory.
    #[arg(long, default_value = "model.toml")]
    output: PathBuf,
}

#[derive(Args)]
struct InvertArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    target: Vec<f64>,
}

#[derive(Args)]
struct LevelsetArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    target: f64,
    /// Points to emit; defaults to the configured level-set sample count.
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Args)]
struct IntersectArgs {
    #[arg(long)]
    model_a: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    target_a: f64,
    #[arg(long)]
    model_b: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    target_b: f64,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    /// Second-property model; targets are then every pair of --target and --target-b.
    #[arg(long, requires = "target_b")]
    model_b: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    target: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, requires = "model_b")]
    target_b: Vec<f64>,
    /// Mock generator spec (TOML).
    #[arg(long, conflicts_with = "scene", required_unless_present = "scene")]
    generator: Option<PathBuf>,
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    offset: f64,
    #[arg(long, default_value_t = 30.0, allow_hyphen_values = true)]
    slope: f64,
    /// Reference image; the mock generator's own reference by default.
    #[arg(long, required_unless_present = "generator")]
    reference: Option<PathBuf>,
    /// Report file name inside the output directory.
    #[arg(long, default_value = "report.csv")]
    output: PathBuf,
}

/// Failure of a command, carrying its exit code.
enum Failure {
    Usage(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

type Outcome = Result<(), Failure>;

struct Context {
    config: PipelineConfig,
    out_dir: PathBuf,
}

impl Context {
    fn out(&self, name: &Path) -> PathBuf {
        self.out_dir.join(name)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Outcome {
    let mut config = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    fs::create_dir_all(&cli.out_dir).map_err(|e| io_error(&cli.out_dir, e))?;
    let ctx = Context {
        config,
        out_dir: cli.out_dir,
    };
    match cli.command {
        Command::Simulate(a) => simulate(&ctx, a),
        Command::Transform(a) => transform(&ctx, a),
        Command::Measure(a) => measure(&ctx, a),
        Command::Sweep(a) => sweep(&ctx, a),
        Command::Fit(a) => fit_model(&ctx, a),
        Command::Invert(a) => invert(&ctx, a),
        Command::Levelset(a) => levelset(&ctx, a),
        Command::Intersect(a) => intersect(&ctx, a),
        Command::Evaluate(a) => evaluate(&ctx, a),
    }
}

fn io_error(path: &Path, e: std::io::Error) -> Failure {
    Failure::Core(Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn csv_error(location: &Path, e: csv::Error) -> Failure {
    Failure::Core(Error::Parse {
        location: location.display().to_string(),
        message: e.to_string(),
    })
}

fn print(text: &str) -> Outcome {
    std::io::stdout()
        .write_all(text.as_bytes())
        .map_err(|e| io_error(Path::new("<stdout>"), e))
}

fn write_text(path: &Path, text: &str) -> Outcome {
    fs::write(path, text).map_err(|e| io_error(path, e))
}

fn simulate(ctx: &Context, a: SimulateArgs) -> Outcome {
    let file = SceneFile::load(&a.scene)?;
    let radar = file.radar_or(&ctx.config.radar);
    let scene = file.scene();
    let ext = ImageFormat::from(a.format).extension();
    for (i, &angle) in a.angle.iter().enumerate() {
        let raw = simulate_raw_with(&radar, &scene.rotated(angle), ctx.config.execution)?;
        let img = form_image(&raw)?;
        let path = ctx.out(Path::new(&format!("{}_{i:03}.{ext}", a.prefix)));
        img.save(&path)?;
        println!("{}\t{angle}", path.display());
    }
    Ok(())
}

fn transform(ctx: &Context, a: TransformArgs) -> Outcome {
    let mut img = Image::load(&a.input)?;
    if let Some(s) = a.scale {
        img = scale(&img, s, a.fill)?;
    }
    if let Some(d) = a.rotate {
        img = rotate(&img, d, a.fill)?;
    }
    if let Some(t) = &a.translate {
        let [dx, dy] = t[..] else {
            return Err(Failure::Usage(format!("--translate takes dx,dy, got {} value(s)", t.len())));
        };
        img = translate(&img, dx, dy, a.fill)?;
    }
    if let Some(t) = a.clip {
        img = clip(&img, t)?;
    }
    img.save(ctx.out(&a.output))?;
    Ok(())
}

fn measure(ctx: &Context, a: MeasureArgs) -> Outcome {
    let reference = Image::load(&a.reference)?;
    let mut est = *ctx.config.estimators.get(a.property);
    if let (Some(min), Some(max), Some(step)) = (a.grid.min, a.grid.max, a.grid.step) {
        est.grid = SearchGrid::linear(min, max, step)?;
    }
    if a.threshold.is_some() {
        est.threshold = a.threshold;
    }
    est.options.refine |= a.refine;
    est.options.execution = ctx.config.execution;
    if let Some(kind) = a.nuisance {
        est.nuisance = Some(Nuisance::new(kind, ctx.config.estimators.get(kind).grid));
    }

    // Rows carry the path as given (manifest-relative for manifests).
    let jobs: Vec<(String, PathBuf)> = match &a.manifest {
        Some(m) => {
            let ds = CalibrationDataset::load(m)?;
            ds.entries
                .iter()
                .map(|e| (e.image_path.display().to_string(), ds.resolve(e)))
                .collect()
        }
        None if a.images.is_empty() => return Err(Failure::Usage("no images to measure".into())),
        None => a.images.iter().map(|p| (p.display().to_string(), p.clone())).collect(),
    };

    let mut w = csv::Writer::from_writer(Vec::new());
    let header: &[&str] = match a.property {
        PropertyKind::Translation => &["path", "dx", "dy", "peak_correlation"],
        PropertyKind::Rotation => &["path", "rotation", "peak_correlation"],
        PropertyKind::Scaling => &["path", "scaling", "peak_correlation"],
    };
    w.write_record(header).expect("in-memory write");
    for (name, path) in jobs {
        let img = Image::load(&path)?;
        let m = est.measure(&reference, &img)?;
        let mut row = vec![name, m.value.to_string()];
        if let Some(dy) = m.value_y {
            row.push(dy.to_string());
        }
        row.push(m.peak_correlation.to_string());
        w.write_record(&row).expect("in-memory write");
    }
    let text = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv");
    if let Some(out) = &a.output {
        write_text(&ctx.out(out), &text)?;
    }
    print(&text)
}

fn sweep(ctx: &Context, a: SweepArgs) -> Outcome {
    let cfg = &ctx.config;
    let generator = load_generator(ctx, a.generator.as_deref(), a.scene.as_deref(), a.offset, a.slope)?;
    let grid = CodeGrid::new(
        a.min.unwrap_or(cfg.sweep.min),
        a.max.unwrap_or(cfg.sweep.max),
        a.count.unwrap_or(cfg.sweep.count),
        generator.code_dim(),
    )?;
    let mut opts = cfg.sweep_options();
    if let Some(f) = a.format {
        opts.format = f.into();
    }
    let ds = pipeline::sweep(generator.as_ref(), &grid, &opts, &ctx.out_dir)?;
    println!("{}\t{} images", ctx.out(Path::new(MANIFEST_NAME)).display(), ds.len());
    // Mock sweeps are measured against the untransformed target.
    if let Some(g) = &a.generator {
        let path = ctx.out(Path::new(&format!("reference.{}", opts.format.extension())));
        MockGenerator::load(g)?.reference().save(&path)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn load_generator(
    ctx: &Context,
    spec: Option<&Path>,
    scene: Option<&Path>,
    offset: f64,
    slope: f64,
) -> Result<Box<dyn Generator>, Failure> {
    match (spec, scene) {
        (Some(p), _) => Ok(Box::new(MockGenerator::load(p)?)),
        (None, Some(p)) => {
            let file = SceneFile::load(p)?;
            Ok(Box::new(SceneGenerator {
                radar: file.radar_or(&ctx.config.radar),
                scene: file.scene(),
                offset_deg: offset,
                slope_deg: slope,
                execution: ctx.config.execution,
            }))
        }
        (None, None) => Err(Failure::Usage("give --generator or --scene".into())),
    }
}

/// Pairs manifest entries with measured values by image path.
fn read_measurements(ds: &CalibrationDataset, path: &Path, column: &str) -> Result<Vec<CalibrationSample>, Failure> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let headers = r.headers().map_err(|e| csv_error(path, e))?.clone();
    let find = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            Failure::Core(Error::Parse {
                location: path.display().to_string(),
                message: format!("no {name:?} column"),
            })
        })
    };
    let (path_col, value_col) = (find("path")?, find(column)?);
    let mut values = HashMap::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let field = &rec[value_col];
        let v: f64 = field.parse().map_err(|_| {
            Failure::Core(Error::Parse {
                location: format!("{}:{}", path.display(), i + 2),
                message: format!("{column} value {field:?} is not a number"),
            })
        })?;
        values.insert(rec[path_col].to_string(), v);
    }
    ds.entries
        .iter()
        .map(|e| {
            let key = e.image_path.display().to_string();
            let delta = values.get(&key).copied().ok_or_else(|| {
                Failure::Core(Error::Validation(format!("no measurement for {key} in {}", path.display())))
            })?;
            Ok(CalibrationSample::new(e.codes.clone(), delta))
        })
        .collect()
}

fn fit_model(ctx: &Context, a: FitArgs) -> Outcome {
    let ds = CalibrationDataset::load(&a.manifest)?;
    let opts = ctx.config.fit_options();
    let model = match (&a.measurements, &a.reference) {
        (Some(m), _) => {
            let column = match (a.property, a.axis) {
                (PropertyKind::Rotation, _) => "rotation",
                (PropertyKind::Scaling, _) => "scaling",
                (PropertyKind::Translation, AxisArg::X) => "dx",
                (PropertyKind::Translation, AxisArg::Y) => "dy",
            };
            let samples = read_measurements(&ds, m, column)?;
            if a.family.code_dim() != ds.code_dim() {
                return Err(Failure::Core(Error::InvalidArgument(format!(
                    "{} takes {} code(s) but the dataset has {}",
                    a.family,
                    a.family.code_dim(),
                    ds.code_dim()
                ))));
            }
            fit::fit(a.family, a.property, &samples, &opts)?
        }
        (None, Some(r)) => {
            let reference = Image::load(r)?;
            let mut est: PropertyEstimator = *ctx.config.estimators.get(a.property);
            est.axis = a.axis.into();
            pipeline::calibrate(&ds, &reference, &est, a.family, &opts, ctx.config.execution)?
        }
        (None, None) => return Err(Failure::Usage("give --measurements or --reference".into())),
    };
    let path = ctx.out(&a.output);
    model.save(&path)?;
    println!(
        "{}\t{}\tfit_rms {}{}",
        path.display(),
        model.family,
        model.fit_rms,
        if model.degenerate { "\tdegenerate" } else { "" }
    );
    Ok(())
}

fn invert(_ctx: &Context, a: InvertArgs) -> Outcome {
    let model = PropertyModel::load(&a.model)?;
    let mut out = String::from("target,c1,predicted,status\n");
    let mut first_err = None;
    for &t in &a.target {
        match invert_1code(&model, t) {
            Ok(s) => out.push_str(&format!("{t},{},{},ok\n", s.codes[0], s.predicted[0])),
            Err(e) => {
                let status = match e {
                    Error::Unreachable { .. } => TargetStatus::Unreachable,
                    _ => TargetStatus::NoSolution,
                };
                out.push_str(&format!("{t},,,{}\n", status.as_str()));
                if !matches!(e, Error::Unreachable { .. }) {
                    print(&out)?;
                    return Err(e.into());
                }
                first_err.get_or_insert(e);
            }
        }
    }
    print(&out)?;
    first_err.map_or(Ok(()), |e| Err(e.into()))
}

fn levelset(ctx: &Context, a: LevelsetArgs) -> Outcome {
    let model = PropertyModel::load(&a.model)?;
    let ls = level_set_2code(&model, a.target)?;
    let n = a.samples.unwrap_or(ctx.config.level_set_samples);
    let mut out = String::from("c1,c2\n");
    for p in sample_level_set(&ls, &ctx.config.region, n)? {
        out.push_str(&format!("{},{}\n", p[0], p[1]));
    }
    print(&out)
}

fn intersect(ctx: &Context, a: IntersectArgs) -> Outcome {
    let model_a = PropertyModel::load(&a.model_a)?;
    let model_b = PropertyModel::load(&a.model_b)?;
    let mut opts = ctx.config.intersect;
    opts.execution = ctx.config.execution;
    let sols = intersect_level_sets(&model_a, a.target_a, &model_b, a.target_b, &ctx.config.region, &opts)?;
    let mut out = String::from("c1,c2,predicted_a,predicted_b,residual\n");
    for s in sols {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            s.codes[0], s.codes[1], s.predicted[0], s.predicted[1], s.residual
        ));
    }
    print(&out)
}

fn evaluate(ctx: &Context, a: EvaluateArgs) -> Outcome {
    let cfg = &ctx.config;
    let generator = load_generator(ctx, a.generator.as_deref(), a.scene.as_deref(), a.offset, a.slope)?;
    let reference = match (&a.reference, &a.generator) {
        (Some(r), _) => Image::load(r)?,
        (None, Some(g)) => MockGenerator::load(g)?.reference().clone(),
        (None, None) => return Err(Failure::Usage("give --reference".into())),
    };
    let mut intersect = cfg.intersect;
    intersect.execution = cfg.execution;
    let sctx = SynthesisContext {
        generator: generator.as_ref(),
        reference: &reference,
        region: cfg.region,
        intersect,
        level_set_samples: cfg.level_set_samples,
        seed: cfg.seed,
        execution: cfg.execution,
    };
    let model = PropertyModel::load(&a.model)?;
    let name = a.model.display().to_string();
    // Stored estimators win; the config fills in for models fitted without one.
    let fallback = |m: &PropertyModel| m.measurement.unwrap_or(*cfg.estimators.get(m.property_kind));
    let report: EvaluationReport = match &a.model_b {
        None => {
            let est = fallback(&model);
            pipeline::synthesize_1property(&model, &name, &a.target, Some(&est), &sctx)?
        }
        Some(pb) => {
            let pair = TwoPropertyModel::new(model, PropertyModel::load(pb)?)?;
            let targets: Vec<(f64, f64)> = a
                .target
                .iter()
                .flat_map(|&ta| a.target_b.iter().map(move |&tb| (ta, tb)))
                .collect();
            let (ea, eb) = (fallback(&pair.model_a), fallback(&pair.model_b));
            pipeline::synthesize_2property(&pair, &name, &targets, (Some(&ea), Some(&eb)), &sctx)?
        }
    };
    let path = ctx.out(&a.output);
    report.save_csv(&path)?;
    println!("{}", path.display());
    for s in &report.summary {
        println!("{}\trms {}\tcount {}", s.property, s.rms, s.count);
    }
    let failed = report.rows.iter().filter(|r| r.status != TargetStatus::Ok).count();
    if failed > 0 {
        println!("{failed} row(s) not ok");
    }
    Ok(())
}
