//! Point-scatterer SAR simulation.
//!
//! Each scatterer contributes a dechirped LFM-CW echo
//!
//! ```text
//! S(m, n) = σ · exp(j ω₀ 2d(t)/c) · exp(-j 2π (B/Tr) (t - m Tr) 2d(t)/c)
//! t       = m Tr + n Ts,   Ts = Tr / N
//! d(t)    = sqrt((d0 + y)² + (v t - x)²)
//! ```
//!
//! and the scene response is the plain sum over scatterers. The image is the
//! magnitude of the 2-D DFT of the `M × N` sample matrix (rows are pulses,
//! columns are range samples), shifted so zero frequency sits in the middle
//! and normalized to a peak of 1.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::image::Image;
use crate::par::{self, Execution};
use crate::transform::sin_cos_degrees;

pub const SPEED_OF_LIGHT: f64 = 2.997_924_58e8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadarConfig {
    /// Carrier frequency in Hz.
    pub f0: f64,
    /// Chirp bandwidth in Hz.
    pub bandwidth: f64,
    /// Pulse repetition interval in seconds.
    pub pri: f64,
    /// Platform speed in m/s.
    pub velocity: f64,
    /// Closest-approach distance in m.
    pub d0: f64,
    pub pulses: usize,
    pub range_cells: usize,
    pub c: f64,
}

impl Default for RadarConfig {
    /// 157 GHz carrier, 93.75 µs PRI and 28 × 28 samples. Bandwidth (1 GHz),
    /// speed and standoff are free choices: `d0` is 84 range cells so the
    /// scene origin lands in the middle range bin, and the speed
    /// `B·d0/(f0·M·Tr)` makes azimuth cells as long as range cells (0.15 m).
    fn default() -> Self {
        RadarConfig {
            f0: 157e9,
            bandwidth: 1e9,
            pri: 93.75e-6,
            velocity: 30.552_097_630_573,
            d0: 12.591_283_236,
            pulses: 28,
            range_cells: 28,
            c: SPEED_OF_LIGHT,
        }
    }
}

impl RadarConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("f0", self.f0),
            ("bandwidth", self.bandwidth),
            ("pri", self.pri),
            ("velocity", self.velocity),
            ("d0", self.d0),
            ("c", self.c),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(format!("radar {name} must be positive, got {v}")));
            }
        }
        if self.pulses == 0 || self.range_cells == 0 {
            return Err(invalid("pulse and range-cell counts must be at least 1"));
        }
        Ok(())
    }

    /// Fast-time sampling interval `Tr / N`.
    pub fn sample_interval(&self) -> f64 {
        self.pri / self.range_cells as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scatterer {
    /// Cross-range position in m.
    pub x: f64,
    /// Range offset from the closest-approach distance in m.
    pub y: f64,
    /// Reflectivity.
    pub sigma: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScatterScene {
    pub scatterers: Vec<Scatterer>,
}

impl ScatterScene {
    pub fn new(scatterers: Vec<Scatterer>) -> Result<Self> {
        let scene = ScatterScene { scatterers };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, s) in self.scatterers.iter().enumerate() {
            if !(s.x.is_finite() && s.y.is_finite()) {
                return Err(invalid(format!("scatterer {i} has non-finite position")));
            }
            if !(s.sigma.is_finite() && s.sigma >= 0.0) {
                return Err(invalid(format!(
                    "scatterer {i} reflectivity must be finite and >= 0"
                )));
            }
        }
        Ok(())
    }

    /// Scene with every scatterer turned by `degrees` about the origin.
    pub fn rotated(&self, degrees: f64) -> ScatterScene {
        let (s, c) = sin_cos_degrees(degrees);
        ScatterScene {
            scatterers: self
                .scatterers
                .iter()
                .map(|p| Scatterer {
                    x: p.x * c - p.y * s,
                    y: p.x * s + p.y * c,
                    sigma: p.sigma,
                })
                .collect(),
        }
    }
}

/// Scene description file: an optional `[radar]` table and a list of
/// `[[scatterer]]` entries with `x`, `y` and `sigma`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    /// Radar settings for this scene; callers supply their own when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radar: Option<RadarConfig>,
    #[serde(default, rename = "scatterer")]
    pub scatterers: Vec<Scatterer>,
}

impl SceneFile {
    pub fn parse(text: &str, location: &str) -> Result<Self> {
        let file: SceneFile =
            toml::from_str(text).map_err(|e| Error::parse(location, e.to_string()))?;
        if let Some(r) = &file.radar {
            r.validate()?;
        }
        ScatterScene::new(file.scatterers.clone())?;
        Ok(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn radar_or(&self, fallback: &RadarConfig) -> RadarConfig {
        self.radar.clone().unwrap_or_else(|| fallback.clone())
    }

    pub fn scene(&self) -> ScatterScene {
        ScatterScene {
            scatterers: self.scatterers.clone(),
        }
    }
}

/// `M × N` complex sample matrix, row-major (one row per pulse).
#[derive(Debug, Clone, PartialEq)]
pub struct RawData {
    pulses: usize,
    range_cells: usize,
    samples: Vec<Complex64>,
}

impl RawData {
    pub fn zeros(pulses: usize, range_cells: usize) -> Self {
        RawData {
            pulses,
            range_cells,
            samples: vec![Complex64::new(0.0, 0.0); pulses * range_cells],
        }
    }

    pub fn pulses(&self) -> usize {
        self.pulses
    }

    pub fn range_cells(&self) -> usize {
        self.range_cells
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn get(&self, m: usize, n: usize) -> Complex64 {
        self.samples[m * self.range_cells + n]
    }
}

/// Echo of a single scatterer at pulse `m`, range sample `n`.
#[inline]
fn echo(cfg: &RadarConfig, s: &Scatterer, m: usize, n: usize) -> Complex64 {
    let omega0 = 2.0 * PI * cfg.f0;
    let fast = n as f64 * cfg.sample_interval();
    let t = m as f64 * cfg.pri + fast;
    let range = cfg.d0 + s.y;
    let along = cfg.velocity * t - s.x;
    let d = (range * range + along * along).sqrt();
    let delay = 2.0 * d / cfg.c;
    let phase = omega0 * delay - 2.0 * PI * (cfg.bandwidth / cfg.pri) * fast * delay;
    Complex64::from_polar(s.sigma, phase)
}

pub fn simulate_raw(cfg: &RadarConfig, scene: &ScatterScene) -> Result<RawData> {
    simulate_raw_with(cfg, scene, Execution::default())
}

/// Sums scatterer echoes in scene order for every sample; pulses are
/// independent and may be computed in parallel.
pub fn simulate_raw_with(
    cfg: &RadarConfig,
    scene: &ScatterScene,
    exec: Execution,
) -> Result<RawData> {
    cfg.validate()?;
    scene.validate()?;
    let n = cfg.range_cells;
    let rows = par::map_indexed(cfg.pulses, exec, |m| {
        (0..n)
            .map(|k| {
                scene
                    .scatterers
                    .iter()
                    .fold(Complex64::new(0.0, 0.0), |acc, s| acc + echo(cfg, s, m, k))
            })
            .collect::<Vec<_>>()
    });
    Ok(RawData {
        pulses: cfg.pulses,
        range_cells: n,
        samples: rows.into_iter().flatten().collect(),
    })
}

/// Magnitude of the centered 2-D DFT, normalized to peak 1.
pub fn form_image(raw: &RawData) -> Result<Image> {
    let (m, n) = (raw.pulses, raw.range_cells);
    if m != n {
        return Err(invalid(format!(
            "images are square; raw data is {m}x{n}"
        )));
    }
    let mut data = raw.samples.clone();
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n);
    for row in data.chunks_exact_mut(n) {
        fft.process(row);
    }
    let mut column = vec![Complex64::new(0.0, 0.0); m];
    for k in 0..n {
        for (i, c) in column.iter_mut().enumerate() {
            *c = data[i * n + k];
        }
        fft.process(&mut column);
        for (i, c) in column.iter().enumerate() {
            data[i * n + k] = *c;
        }
    }
    let half = n / 2;
    let mut pixels = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let si = (i + half) % n;
            let sk = (k + half) % n;
            pixels[si * n + sk] = data[i * n + k].norm();
        }
    }
    let peak = pixels.iter().copied().fold(0.0f64, f64::max);
    if peak > 0.0 {
        for p in &mut pixels {
            *p /= peak;
        }
    }
    Image::new(n, pixels)
}

/// Image of `scene` after turning it by `theta` degrees about the origin.
pub fn render_scene_at_angle(cfg: &RadarConfig, scene: &ScatterScene, theta: f64) -> Result<Image> {
    render_scene_at_angle_with(cfg, scene, theta, Execution::default())
}

pub fn render_scene_at_angle_with(
    cfg: &RadarConfig,
    scene: &ScatterScene,
    theta: f64,
    exec: Execution,
) -> Result<Image> {
    if !theta.is_finite() {
        return Err(invalid(format!("angle {theta} is not finite")));
    }
    form_image(&simulate_raw_with(cfg, &scene.rotated(theta), exec)?)
}
