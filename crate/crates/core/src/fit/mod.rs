//! Models relating latent codes to a measured image property.
//!
//! Coefficients are stored in index order `v0, v1, …`:
//!
//! | family          | prediction                                              | len |
//! |-----------------|---------------------------------------------------------|-----|
//! | `LINEAR_1C`     | `v1·c1 + v0`                                            | 2   |
//! | `TANH_1C`       | `v3·tanh(v1·c1 + v2) + v0`                              | 4   |
//! | `LINEAR_2C`     | `v2·c2 + v1·c1 + v0`                                    | 3   |
//! | `TANH_LIN_2C`   | `v4·tanh(v1·c1 + v2·c2 + v3) + v0`                      | 5   |
//! | `TANH_QUAD_2C`  | `v7·tanh(v1·c1² + v2·c2² + v3·c1·c2 + v4·c1 + v5·c2 + v6) + v0` | 8 |
//!
//! The tanh families share one layout: offset first, then the coefficients of
//! the inner argument over a fixed basis, then the outer gain last. Fitted
//! tanh models are stored with a positive gain (`g·tanh(u) = -g·tanh(-u)`).

mod linear;
mod tanh;

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimate::{PropertyEstimator, PropertyKind};
use crate::par::Execution;

pub use linear::{fit_linear_1code, fit_linear_2code};
pub use tanh::{
    cost_gradient, fit_tanh_1code, fit_tanh_linear_2code, fit_tanh_quad_2code,
    lift_tanh_linear_to_quadratic,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Family {
    #[serde(rename = "LINEAR_1C")]
    Linear1C,
    #[serde(rename = "TANH_1C")]
    Tanh1C,
    #[serde(rename = "LINEAR_2C")]
    Linear2C,
    #[serde(rename = "TANH_LIN_2C")]
    TanhLin2C,
    #[serde(rename = "TANH_QUAD_2C")]
    TanhQuad2C,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::Linear1C,
        Family::Tanh1C,
        Family::Linear2C,
        Family::TanhLin2C,
        Family::TanhQuad2C,
    ];

    pub fn coefficient_count(self) -> usize {
        match self {
            Family::Linear1C => 2,
            Family::Tanh1C => 4,
            Family::Linear2C => 3,
            Family::TanhLin2C => 5,
            Family::TanhQuad2C => 8,
        }
    }

    pub fn code_dim(self) -> usize {
        match self {
            Family::Linear1C | Family::Tanh1C => 1,
            _ => 2,
        }
    }

    pub fn is_tanh(self) -> bool {
        matches!(self, Family::Tanh1C | Family::TanhLin2C | Family::TanhQuad2C)
    }

    /// Index of the outer gain for tanh families.
    pub fn gain_index(self) -> Option<usize> {
        self.is_tanh().then(|| self.coefficient_count() - 1)
    }

    /// Number of inner-argument basis functions (tanh) or slopes (linear).
    fn basis_len(self) -> usize {
        match self {
            Family::Linear1C => 1,
            Family::Linear2C => 2,
            Family::Tanh1C => 2,
            Family::TanhLin2C => 3,
            Family::TanhQuad2C => 6,
        }
    }

    /// Inner-argument basis at `codes`. For linear families the basis excludes
    /// the constant, which is `v0`.
    fn basis(self, codes: &[f64], out: &mut [f64; 6]) {
        let c1 = codes[0];
        match self {
            Family::Linear1C => out[0] = c1,
            Family::Tanh1C => {
                out[0] = c1;
                out[1] = 1.0;
            }
            Family::Linear2C => {
                out[0] = c1;
                out[1] = codes[1];
            }
            Family::TanhLin2C => {
                out[0] = c1;
                out[1] = codes[1];
                out[2] = 1.0;
            }
            Family::TanhQuad2C => {
                let c2 = codes[1];
                *out = [c1 * c1, c2 * c2, c1 * c2, c1, c2, 1.0];
            }
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Linear1C => "LINEAR_1C",
            Family::Tanh1C => "TANH_1C",
            Family::Linear2C => "LINEAR_2C",
            Family::TanhLin2C => "TANH_LIN_2C",
            Family::TanhQuad2C => "TANH_QUAD_2C",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_uppercase().replace('-', "_");
        Family::ALL
            .into_iter()
            .find(|f| f.as_str() == norm)
            .ok_or_else(|| invalid(format!("unknown model family {s:?}")))
    }
}

fn check_codes(family: Family, codes: &[f64]) -> Result<()> {
    if codes.len() != family.code_dim() {
        return Err(invalid(format!(
            "{family} takes {} code(s), got {}",
            family.code_dim(),
            codes.len()
        )));
    }
    Ok(())
}

/// Evaluates a family at `codes`; `coefficients` must have the family's length.
pub fn evaluate(family: Family, coefficients: &[f64], codes: &[f64]) -> f64 {
    let mut phi = [0.0; 6];
    family.basis(codes, &mut phi);
    let nb = family.basis_len();
    let inner: f64 = coefficients[1..=nb]
        .iter()
        .zip(&phi[..nb])
        .map(|(v, p)| v * p)
        .sum();
    if family.is_tanh() {
        coefficients[nb + 1] * inner.tanh() + coefficients[0]
    } else {
        inner + coefficients[0]
    }
}

/// Partial derivatives of the prediction with respect to each coefficient.
pub fn coefficient_jacobian(family: Family, coefficients: &[f64], codes: &[f64], out: &mut [f64]) {
    let mut phi = [0.0; 6];
    family.basis(codes, &mut phi);
    let nb = family.basis_len();
    out[0] = 1.0;
    if family.is_tanh() {
        let inner: f64 = coefficients[1..=nb]
            .iter()
            .zip(&phi[..nb])
            .map(|(v, p)| v * p)
            .sum();
        let t = inner.tanh();
        let gain = coefficients[nb + 1];
        let sech2 = 1.0 - t * t;
        for k in 0..nb {
            out[k + 1] = gain * sech2 * phi[k];
        }
        out[nb + 1] = t;
    } else {
        out[1..=nb].copy_from_slice(&phi[..nb]);
    }
}

/// Gradient of the prediction with respect to the codes.
pub fn code_gradient(family: Family, coefficients: &[f64], codes: &[f64]) -> [f64; 2] {
    let v = coefficients;
    let c1 = codes[0];
    let c2 = codes.get(1).copied().unwrap_or(0.0);
    let (inner_grad, inner) = match family {
        Family::Linear1C => return [v[1], 0.0],
        Family::Linear2C => return [v[1], v[2]],
        Family::Tanh1C => ([v[1], 0.0], v[1] * c1 + v[2]),
        Family::TanhLin2C => ([v[1], v[2]], v[1] * c1 + v[2] * c2 + v[3]),
        Family::TanhQuad2C => (
            [
                2.0 * v[1] * c1 + v[3] * c2 + v[4],
                2.0 * v[2] * c2 + v[3] * c1 + v[5],
            ],
            v[1] * c1 * c1 + v[2] * c2 * c2 + v[3] * c1 * c2 + v[4] * c1 + v[5] * c2 + v[6],
        ),
    };
    let gain = v[family.coefficient_count() - 1];
    let t = inner.tanh();
    let s = gain * (1.0 - t * t);
    [s * inner_grad[0], s * inner_grad[1]]
}

/// One measured (codes, property) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSample {
    pub codes: Vec<f64>,
    pub delta: f64,
    #[serde(default = "unit_weight")]
    pub weight: f64,
}

fn unit_weight() -> f64 {
    1.0
}

impl CalibrationSample {
    pub fn new(codes: Vec<f64>, delta: f64) -> Self {
        CalibrationSample {
            codes,
            delta,
            weight: 1.0,
        }
    }

    pub fn one(c1: f64, delta: f64) -> Self {
        Self::new(vec![c1], delta)
    }

    pub fn two(c1: f64, c2: f64, delta: f64) -> Self {
        Self::new(vec![c1, c2], delta)
    }
}

pub(crate) fn check_samples(samples: &[CalibrationSample], dim: usize) -> Result<()> {
    for (i, s) in samples.iter().enumerate() {
        if s.codes.len() != dim {
            return Err(invalid(format!(
                "sample {i} has {} code(s), expected {dim}",
                s.codes.len()
            )));
        }
        if !s.codes.iter().all(|c| c.is_finite()) || !s.delta.is_finite() {
            return Err(invalid(format!("sample {i} is not finite")));
        }
        if !(s.weight.is_finite() && s.weight > 0.0) {
            return Err(invalid(format!("sample {i} weight must be positive")));
        }
    }
    Ok(())
}

/// Weighted RMS of prediction residuals.
pub(crate) fn weighted_rms(family: Family, coefficients: &[f64], samples: &[CalibrationSample]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for s in samples {
        let r = evaluate(family, coefficients, &s.codes) - s.delta;
        num += s.weight * r * r;
        den += s.weight;
    }
    (num / den).sqrt()
}

/// Controls for the iterative tanh fits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Stop when an accepted step lowers the cost by less than this fraction.
    pub relative_tolerance: f64,
    /// Jittered restarts: always used for `TANH_QUAD_2C`, and as a fallback
    /// for the other tanh families when the first start fails.
    pub restarts: usize,
    pub seed: u64,
    pub execution: Execution,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iterations: 200,
            relative_tolerance: 1e-10,
            restarts: 8,
            seed: 0x5eed,
            execution: Execution::default(),
        }
    }
}

/// Fitted coefficient vector for one family and property.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyModel {
    pub family: Family,
    pub property_kind: PropertyKind,
    pub coefficients: Vec<f64>,
    pub fit_rms: f64,
    pub sample_count: usize,
    /// Set when the data carried no variation to fit.
    #[serde(default)]
    pub degenerate: bool,
    /// How the fitted property values were measured.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measurement: Option<PropertyEstimator>,
}

impl PropertyModel {
    /// Builds a model from explicit coefficients.
    pub fn new(family: Family, property_kind: PropertyKind, coefficients: Vec<f64>) -> Result<Self> {
        let model = PropertyModel {
            family,
            property_kind,
            coefficients,
            fit_rms: 0.0,
            sample_count: 0,
            degenerate: false,
            measurement: None,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.coefficients.len() != self.family.coefficient_count() {
            return Err(invalid(format!(
                "{} needs {} coefficients, got {}",
                self.family,
                self.family.coefficient_count(),
                self.coefficients.len()
            )));
        }
        if !self.coefficients.iter().all(|v| v.is_finite()) {
            return Err(invalid("model coefficients must be finite"));
        }
        if let Some(g) = self.family.gain_index() {
            if self.coefficients[g] == 0.0 {
                return Err(invalid("tanh model outer gain must be nonzero"));
            }
        }
        Ok(())
    }

    pub fn predict(&self, codes: &[f64]) -> Result<f64> {
        check_codes(self.family, codes)?;
        Ok(evaluate(self.family, &self.coefficients, codes))
    }

    /// d(prediction)/d(coefficients) at `codes`.
    pub fn jacobian(&self, codes: &[f64]) -> Result<Vec<f64>> {
        check_codes(self.family, codes)?;
        let mut out = vec![0.0; self.coefficients.len()];
        coefficient_jacobian(self.family, &self.coefficients, codes, &mut out);
        Ok(out)
    }

    /// d(prediction)/d(codes) at `codes`; the second entry is 0 for 1-code families.
    pub fn code_gradient(&self, codes: &[f64]) -> Result<[f64; 2]> {
        check_codes(self.family, codes)?;
        Ok(code_gradient(self.family, &self.coefficients, codes))
    }

    pub fn gain(&self) -> Option<f64> {
        self.family.gain_index().map(|i| self.coefficients[i])
    }

    pub fn offset(&self) -> f64 {
        self.coefficients[0]
    }

    /// Flips a tanh model into its positive-gain gauge. Predictions are unchanged.
    pub fn canonicalize(&mut self) {
        if let Some(g) = self.family.gain_index() {
            if self.coefficients[g] < 0.0 {
                for v in &mut self.coefficients[1..] {
                    *v = -*v;
                }
            }
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| invalid(format!("cannot serialize model: {e}")))
    }

    pub fn from_toml(text: &str, location: &str) -> Result<Self> {
        let model: PropertyModel =
            toml::from_str(text).map_err(|e| Error::parse(location, e.to_string()))?;
        model
            .validate()
            .map_err(|e| Error::parse(location, e.to_string()))?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_toml()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, &path.display().to_string())
    }
}

/// Two independently fitted 2-code models over the same code space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoPropertyModel {
    pub model_a: PropertyModel,
    pub model_b: PropertyModel,
}

impl TwoPropertyModel {
    pub fn new(model_a: PropertyModel, model_b: PropertyModel) -> Result<Self> {
        for m in [&model_a, &model_b] {
            if m.family.code_dim() != 2 {
                return Err(invalid(format!("{} is not a 2-code family", m.family)));
            }
        }
        Ok(TwoPropertyModel { model_a, model_b })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| invalid(format!("cannot serialize model pair: {e}")))
    }

    pub fn from_toml(text: &str, location: &str) -> Result<Self> {
        let pair: TwoPropertyModel =
            toml::from_str(text).map_err(|e| Error::parse(location, e.to_string()))?;
        Self::new(pair.model_a, pair.model_b).map_err(|e| Error::parse(location, e.to_string()))
    }
}

/// Fits the requested family.
pub fn fit(
    family: Family,
    property_kind: PropertyKind,
    samples: &[CalibrationSample],
    opts: &FitOptions,
) -> Result<PropertyModel> {
    let mut model = match family {
        Family::Linear1C => fit_linear_1code(samples)?,
        Family::Linear2C => fit_linear_2code(samples)?,
        Family::Tanh1C => fit_tanh_1code(samples, None, opts)?,
        Family::TanhLin2C => fit_tanh_linear_2code(samples, None, opts)?,
        Family::TanhQuad2C => fit_tanh_quad_2code(samples, None, opts)?,
    };
    model.property_kind = property_kind;
    Ok(model)
}

/// Fits the two properties independently with the same 2-code family.
pub fn fit_two_property_pair(
    samples_a: &[CalibrationSample],
    kind_a: PropertyKind,
    samples_b: &[CalibrationSample],
    kind_b: PropertyKind,
    family: Family,
    opts: &FitOptions,
) -> Result<TwoPropertyModel> {
    if !matches!(family, Family::TanhLin2C | Family::TanhQuad2C | Family::Linear2C) {
        return Err(invalid(format!("{family} is not a 2-code family")));
    }
    if samples_a.len() != samples_b.len()
        || samples_a.iter().zip(samples_b).any(|(a, b)| a.codes != b.codes)
    {
        return Err(invalid("both property datasets must share one code design"));
    }
    let label = |kind: PropertyKind, e: Error| match e {
        Error::FitFailure { message, best } => Error::FitFailure {
            message: format!("{kind}: {message}"),
            best,
        },
        Error::SingularDesign(m) => Error::SingularDesign(format!("{kind}: {m}")),
        Error::InvalidArgument(m) => Error::InvalidArgument(format!("{kind}: {m}")),
        other => other,
    };
    let a = fit(family, kind_a, samples_a, opts).map_err(|e| label(kind_a, e))?;
    let b = fit(family, kind_b, samples_b, opts).map_err(|e| label(kind_b, e))?;
    TwoPropertyModel::new(a, b)
}
