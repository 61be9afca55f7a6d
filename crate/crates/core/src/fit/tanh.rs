//! Levenberg–Marquardt fits for the saturating tanh families.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    check_samples, coefficient_jacobian, evaluate, weighted_rms, CalibrationSample, Family, FitOptions,
    PropertyModel,
};
use crate::error::{invalid, Error, Result};
use crate::estimate::PropertyKind;
use crate::par;

/// A start is converged when every cost-gradient component is below this
/// fraction of the constant-model cost.
const STATIONARITY: f64 = 1e-6;
const ATANH_CLAMP: f64 = 0.999;
const LAMBDA_INIT: f64 = 1e-3;
const LAMBDA_MAX: f64 = 1e20;

pub fn fit_tanh_1code(
    samples: &[CalibrationSample],
    init: Option<&[f64]>,
    opts: &FitOptions,
) -> Result<PropertyModel> {
    fit_tanh(Family::Tanh1C, samples, init, opts)
}

pub fn fit_tanh_linear_2code(
    samples: &[CalibrationSample],
    init: Option<&[f64]>,
    opts: &FitOptions,
) -> Result<PropertyModel> {
    fit_tanh(Family::TanhLin2C, samples, init, opts)
}

/// Seeding with [`lift_tanh_linear_to_quadratic`] of a `TANH_LIN_2C` fit
/// guarantees a residual no larger than that fit's.
pub fn fit_tanh_quad_2code(
    samples: &[CalibrationSample],
    init: Option<&[f64]>,
    opts: &FitOptions,
) -> Result<PropertyModel> {
    fit_tanh(Family::TanhQuad2C, samples, init, opts)
}

/// Embeds `TANH_LIN_2C` coefficients in `TANH_QUAD_2C` with zero quadratic terms.
pub fn lift_tanh_linear_to_quadratic(model: &PropertyModel) -> Result<Vec<f64>> {
    if model.family != Family::TanhLin2C {
        return Err(invalid(format!("expected TANH_LIN_2C, got {}", model.family)));
    }
    let v = &model.coefficients;
    Ok(vec![v[0], 0.0, 0.0, 0.0, v[1], v[2], v[3], v[4]])
}

fn cost(family: Family, v: &[f64], samples: &[CalibrationSample]) -> f64 {
    0.5 * samples
        .iter()
        .map(|s| s.weight * (evaluate(family, v, &s.codes) - s.delta).powi(2))
        .sum::<f64>()
}

/// Gradient of `½ Σ w (f(c; v) - δ)²` with respect to the coefficients.
pub fn cost_gradient(family: Family, v: &[f64], samples: &[CalibrationSample]) -> Vec<f64> {
    let mut g = vec![0.0; v.len()];
    let mut row = vec![0.0; v.len()];
    for s in samples {
        let r = evaluate(family, v, &s.codes) - s.delta;
        coefficient_jacobian(family, v, &s.codes, &mut row);
        for (gk, jk) in g.iter_mut().zip(&row) {
            *gk += s.weight * r * jk;
        }
    }
    g
}

/// Cost of the best constant model; the scale for the stationarity test.
fn constant_cost(samples: &[CalibrationSample]) -> f64 {
    let wsum: f64 = samples.iter().map(|s| s.weight).sum();
    let mean = samples.iter().map(|s| s.weight * s.delta).sum::<f64>() / wsum;
    0.5 * samples.iter().map(|s| s.weight * (s.delta - mean).powi(2)).sum::<f64>()
}

fn is_stationary(family: Family, v: &[f64], samples: &[CalibrationSample], scale: f64) -> bool {
    cost_gradient(family, v, samples)
        .iter()
        .all(|g| g.abs() <= STATIONARITY * scale)
}

struct Outcome {
    coefficients: Vec<f64>,
    cost: f64,
    converged: bool,
}

fn normal_system(family: Family, v: &[f64], samples: &[CalibrationSample]) -> (DMatrix<f64>, DVector<f64>) {
    let p = v.len();
    let mut h = DMatrix::zeros(p, p);
    let mut g = DVector::zeros(p);
    let mut row = vec![0.0; p];
    for s in samples {
        let r = evaluate(family, v, &s.codes) - s.delta;
        coefficient_jacobian(family, v, &s.codes, &mut row);
        for i in 0..p {
            g[i] += s.weight * r * row[i];
            for j in i..p {
                h[(i, j)] += s.weight * row[i] * row[j];
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            h[(i, j)] = h[(j, i)];
        }
    }
    (h, g)
}

fn levenberg_marquardt(
    family: Family,
    samples: &[CalibrationSample],
    start: Vec<f64>,
    scale: f64,
    opts: &FitOptions,
) -> Outcome {
    let mut v = start;
    let mut c = cost(family, &v, samples);
    let mut lambda = LAMBDA_INIT;
    if c.is_finite() {
        'outer: for _ in 0..opts.max_iterations {
            let (h, g) = normal_system(family, &v, samples);
            if g.iter().all(|x| x.abs() <= 1e-3 * STATIONARITY * scale) {
                break;
            }
            let max_diag = (0..v.len()).map(|i| h[(i, i)]).fold(0.0f64, f64::max);
            let floor = (max_diag * 1e-12).max(f64::MIN_POSITIVE);
            loop {
                let mut a = h.clone();
                for i in 0..v.len() {
                    a[(i, i)] += lambda * h[(i, i)].max(floor);
                }
                let step = a.cholesky().map(|ch| ch.solve(&(-&g)));
                if let Some(step) = step {
                    let trial: Vec<f64> = v.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
                    let tc = cost(family, &trial, samples);
                    if tc.is_finite() && tc < c {
                        let rel = (c - tc) / c;
                        v = trial;
                        c = tc;
                        lambda = (lambda / 10.0).max(1e-15);
                        // Stalled decrease alone is not enough; keep going until
                        // the gradient sits well inside the acceptance threshold.
                        if rel < opts.relative_tolerance
                            && is_stationary(family, &v, samples, 1e-2 * scale)
                        {
                            break 'outer;
                        }
                        break;
                    }
                }
                lambda *= 10.0;
                if lambda > LAMBDA_MAX {
                    break 'outer;
                }
            }
        }
    }
    let converged = c.is_finite() && is_stationary(family, &v, samples, scale);
    Outcome {
        coefficients: v,
        cost: c,
        converged,
    }
}

/// Weighted least squares `basis · x ≈ target`, or `None` when rank deficient.
fn weighted_lstsq(rows: &[Vec<f64>], target: &[f64], weights: &[f64]) -> Option<Vec<f64>> {
    let p = rows[0].len();
    let a = DMatrix::from_fn(rows.len(), p, |i, j| weights[i].sqrt() * rows[i][j]);
    let b = DVector::from_iterator(target.len(), target.iter().zip(weights).map(|(t, w)| w.sqrt() * t));
    let svd = a.svd(true, true);
    let hi = svd.singular_values.max();
    let lo = svd.singular_values.min();
    if !(hi > 0.0 && lo > 1e-10 * hi) {
        return None;
    }
    svd.solve(&b, 0.0).ok().map(|x| x.iter().copied().collect())
}

/// Offset at the weighted mean, gain at half the range, and the inner
/// linear terms from a line through `atanh` of the compressed data.
fn initial_guess(family: Family, samples: &[CalibrationSample]) -> Result<Vec<f64>> {
    let wsum: f64 = samples.iter().map(|s| s.weight).sum();
    let v0 = samples.iter().map(|s| s.weight * s.delta).sum::<f64>() / wsum;
    let (lo, hi) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), s| (a.min(s.delta), b.max(s.delta)));
    let gain = 0.5 * (hi - lo);
    let target: Vec<f64> = samples
        .iter()
        .map(|s| ((s.delta - v0) / gain).clamp(-ATANH_CLAMP, ATANH_CLAMP).atanh())
        .collect();
    let weights: Vec<f64> = samples.iter().map(|s| s.weight).collect();
    let rows: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| {
            let mut r = s.codes.clone();
            r.push(1.0);
            r
        })
        .collect();
    let line = weighted_lstsq(&rows, &target, &weights).ok_or_else(|| {
        Error::SingularDesign(format!("{family}: codes do not vary enough to fit"))
    })?;
    let mut v = vec![v0];
    if family == Family::TanhQuad2C {
        v.extend([0.0, 0.0, 0.0]);
    }
    v.extend(line);
    v.push(gain);
    debug_assert_eq!(v.len(), family.coefficient_count());
    Ok(v)
}

fn jitter(family: Family, base: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let last = base.len() - 1;
    let inner_scale = base[1..last].iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
    let quad = family == Family::TanhQuad2C;
    base.iter()
        .enumerate()
        .map(|(k, &x)| {
            if k == 0 {
                x + 0.1 * base[last] * rng.random_range(-1.0..1.0)
            } else if k == last {
                x * rng.random_range(0.5..1.5)
            } else if quad && k <= 3 {
                0.5 * inner_scale * rng.random_range(-1.0..1.0)
            } else {
                x * rng.random_range(0.5..1.5) + 0.25 * inner_scale * rng.random_range(-1.0..1.0)
            }
        })
        .collect()
}

fn fit_tanh(
    family: Family,
    samples: &[CalibrationSample],
    init: Option<&[f64]>,
    opts: &FitOptions,
) -> Result<PropertyModel> {
    check_samples(samples, family.code_dim())?;
    let p = family.coefficient_count();
    if samples.len() < p {
        return Err(Error::SingularDesign(format!(
            "{family} needs at least {p} samples, got {}",
            samples.len()
        )));
    }
    if let Some(init) = init {
        if init.len() != p || !init.iter().all(|x| x.is_finite()) {
            return Err(invalid(format!("{family} initial guess needs {p} finite values")));
        }
    }
    if opts.max_iterations == 0 {
        return Err(invalid("max_iterations must be positive"));
    }

    let scale = constant_cost(samples);
    if !(scale > 0.0) {
        return Ok(degenerate_model(family, samples));
    }

    let base = initial_guess(family, samples)?;
    let mut starts: Vec<Vec<f64>> = init.map(|v| v.to_vec()).into_iter().collect();
    starts.push(base.clone());
    let jittered = |count: usize| -> Vec<Vec<f64>> {
        (0..count)
            .map(|k| {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
                rng.set_stream(k as u64 + 1);
                jitter(family, &base, &mut rng)
            })
            .collect()
    };
    if family == Family::TanhQuad2C {
        starts.extend(jittered(opts.restarts));
    }

    let run = |starts: &[Vec<f64>]| -> Vec<Outcome> {
        par::map_slice(starts, opts.execution, |s| {
            levenberg_marquardt(family, samples, s.clone(), scale, opts)
        })
    };
    let mut outcomes = run(&starts);
    if family != Family::TanhQuad2C && !outcomes.iter().any(|o| o.converged) {
        outcomes.extend(run(&jittered(opts.restarts)));
    }

    // Lowest cost wins; ties keep the earliest start.
    let best = outcomes
        .into_iter()
        .reduce(|a, b| if b.cost < a.cost { b } else { a })
        .expect("at least one start");
    let mut model = PropertyModel {
        family,
        property_kind: PropertyKind::Rotation,
        fit_rms: weighted_rms(family, &best.coefficients, samples),
        coefficients: best.coefficients,
        sample_count: samples.len(),
        degenerate: false,
        measurement: None,
    };
    model.canonicalize();
    if !best.converged || !model.coefficients.iter().all(|x| x.is_finite()) {
        return Err(Error::FitFailure {
            message: format!(
                "{family} did not reach a stationary point in {} iterations",
                opts.max_iterations
            ),
            best: Box::new(model),
        });
    }
    Ok(model)
}

/// Constant data: the offset carries everything, the inner terms are zero
/// and the gain is a token positive value.
fn degenerate_model(family: Family, samples: &[CalibrationSample]) -> PropertyModel {
    let p = family.coefficient_count();
    let v0 = samples[0].delta;
    let mut coefficients = vec![0.0; p];
    coefficients[0] = v0;
    coefficients[p - 1] = f64::EPSILON * v0.abs().max(1.0);
    PropertyModel {
        family,
        property_kind: PropertyKind::Rotation,
        fit_rms: weighted_rms(family, &coefficients, samples),
        coefficients,
        sample_count: samples.len(),
        degenerate: true,
        measurement: None,
    }
}
