//! Closed-form weighted least squares for the linear families.

use nalgebra::{DMatrix, DVector};

use super::{check_samples, weighted_rms, CalibrationSample, Family, PropertyModel};
use crate::error::{invalid, Error, Result};
use crate::estimate::PropertyKind;

/// Ratio of smallest to largest singular value below which the design is
/// treated as rank deficient.
const RANK_TOL: f64 = 1e-10;

pub fn fit_linear_1code(samples: &[CalibrationSample]) -> Result<PropertyModel> {
    fit_linear(Family::Linear1C, samples)
}

pub fn fit_linear_2code(samples: &[CalibrationSample]) -> Result<PropertyModel> {
    fit_linear(Family::Linear2C, samples)
}

fn fit_linear(family: Family, samples: &[CalibrationSample]) -> Result<PropertyModel> {
    let dim = family.code_dim();
    check_samples(samples, dim)?;
    let p = family.coefficient_count();
    if samples.len() < p {
        return Err(Error::SingularDesign(format!(
            "{family} needs at least {p} samples, got {}",
            samples.len()
        )));
    }
    // Columns: 1, c1[, c2], so the solution is already in v0, v1[, v2] order.
    let design = DMatrix::from_fn(samples.len(), p, |i, j| {
        let s = &samples[i];
        let w = s.weight.sqrt();
        if j == 0 {
            w
        } else {
            w * s.codes[j - 1]
        }
    });
    let rhs = DVector::from_iterator(samples.len(), samples.iter().map(|s| s.weight.sqrt() * s.delta));

    let sv = design.singular_values();
    let (lo, hi) = sv.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    if !(hi > 0.0 && lo > RANK_TOL * hi) {
        return Err(Error::SingularDesign(format!(
            "{family} design matrix is rank deficient (codes do not vary enough)"
        )));
    }

    let normal = design.transpose() * &design;
    let moment = design.transpose() * rhs;
    let solution = normal
        .cholesky()
        .map(|c| c.solve(&moment))
        .ok_or_else(|| Error::SingularDesign(format!("{family} normal equations are singular")))?;
    let coefficients: Vec<f64> = solution.iter().copied().collect();
    if !coefficients.iter().all(|v| v.is_finite()) {
        return Err(invalid("linear fit produced non-finite coefficients"));
    }
    Ok(PropertyModel {
        family,
        property_kind: PropertyKind::Rotation,
        fit_rms: weighted_rms(family, &coefficients, samples),
        coefficients,
        sample_count: samples.len(),
        degenerate: false,
        measurement: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ssr(family: Family, v: &[f64], samples: &[CalibrationSample]) -> f64 {
        samples
            .iter()
            .map(|s| s.weight * (super::super::evaluate(family, v, &s.codes) - s.delta).powi(2))
            .sum()
    }

    #[test]
    fn exact_line() {
        let samples: Vec<_> = [0.0, 1.0, 2.0]
            .iter()
            .map(|&c| CalibrationSample::one(c, 2.0 * c + 1.0))
            .collect();
        let m = fit_linear_1code(&samples).unwrap();
        assert!((m.coefficients[0] - 1.0).abs() < 1e-12);
        assert!((m.coefficients[1] - 2.0).abs() < 1e-12);
        assert!(m.fit_rms < 1e-12);
    }

    #[test]
    fn singular_designs() {
        let same: Vec<_> = (0..5).map(|i| CalibrationSample::one(0.5, i as f64)).collect();
        assert!(matches!(fit_linear_1code(&same), Err(Error::SingularDesign(_))));
        let collinear: Vec<_> = (0..5)
            .map(|i| {
                let c = i as f64 * 0.25;
                CalibrationSample::two(c, 2.0 * c, c)
            })
            .collect();
        assert!(matches!(fit_linear_2code(&collinear), Err(Error::SingularDesign(_))));
        let bad = vec![CalibrationSample::one(0.0, f64::NAN), CalibrationSample::one(1.0, 0.0)];
        assert!(matches!(fit_linear_1code(&bad), Err(Error::InvalidArgument(_))));
    }

    /// 2x2 normal equations solved by hand.
    fn oracle_1code(samples: &[CalibrationSample]) -> (f64, f64) {
        let (mut sw, mut sc, mut scc, mut sd, mut scd) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for s in samples {
            let (w, c, d) = (s.weight, s.codes[0], s.delta);
            sw += w;
            sc += w * c;
            scc += w * c * c;
            sd += w * d;
            scd += w * c * d;
        }
        let det = sw * scc - sc * sc;
        let v1 = (sw * scd - sc * sd) / det;
        let v0 = (sd - v1 * sc) / sw;
        (v0, v1)
    }

    fn det3(m: [[f64; 3]; 3]) -> f64 {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// 3x3 normal equations solved by Cramer's rule.
    fn oracle_2code(samples: &[CalibrationSample]) -> [f64; 3] {
        let mut a = [[0.0; 3]; 3];
        let mut b = [0.0; 3];
        for s in samples {
            let row = [1.0, s.codes[0], s.codes[1]];
            for i in 0..3 {
                for j in 0..3 {
                    a[i][j] += s.weight * row[i] * row[j];
                }
                b[i] += s.weight * row[i] * s.delta;
            }
        }
        let d = det3(a);
        let mut out = [0.0; 3];
        for (k, o) in out.iter_mut().enumerate() {
            let mut m = a;
            for i in 0..3 {
                m[i][k] = b[i];
            }
            *o = det3(m) / d;
        }
        out
    }

    fn samples_1(max: usize) -> impl Strategy<Value = Vec<CalibrationSample>> {
        proptest::collection::vec((-1.0f64..1.0, -50.0f64..50.0, 0.1f64..3.0), 3..max).prop_map(|v| {
            v.into_iter()
                .map(|(c, d, w)| CalibrationSample { codes: vec![c], delta: d, weight: w })
                .collect()
        })
    }

    fn samples_2(max: usize) -> impl Strategy<Value = Vec<CalibrationSample>> {
        proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0, -50.0f64..50.0, 0.1f64..3.0), 4..max)
            .prop_map(|v| {
                v.into_iter()
                    .map(|(a, b, d, w)| CalibrationSample { codes: vec![a, b], delta: d, weight: w })
                    .collect()
            })
    }

    proptest! {
        #[test]
        fn matches_2x2_oracle(samples in samples_1(40)) {
            let spread = samples.iter().map(|s| s.codes[0]).fold(f64::NEG_INFINITY, f64::max)
                - samples.iter().map(|s| s.codes[0]).fold(f64::INFINITY, f64::min);
            prop_assume!(spread > 0.05);
            let m = fit_linear_1code(&samples).unwrap();
            let (v0, v1) = oracle_1code(&samples);
            prop_assert!((m.coefficients[0] - v0).abs() <= 1e-8 * (1.0 + v0.abs()));
            prop_assert!((m.coefficients[1] - v1).abs() <= 1e-8 * (1.0 + v1.abs()));
        }

        #[test]
        fn matches_3x3_oracle(samples in samples_2(40)) {
            let m = match fit_linear_2code(&samples) {
                Ok(m) => m,
                Err(Error::SingularDesign(_)) => return Ok(()),
                Err(e) => panic!("{e}"),
            };
            let o = oracle_2code(&samples);
            for k in 0..3 {
                prop_assert!((m.coefficients[k] - o[k]).abs() <= 1e-6 * (1.0 + o[k].abs()),
                    "coef {} {} vs {}", k, m.coefficients[k], o[k]);
            }
        }

        #[test]
        fn perturbation_never_lowers_residual(samples in samples_2(30), k in 0usize..3, sign in prop::bool::ANY) {
            let m = match fit_linear_2code(&samples) {
                Ok(m) => m,
                Err(_) => return Ok(()),
            };
            let base = ssr(Family::Linear2C, &m.coefficients, &samples);
            let mut v = m.coefficients.clone();
            v[k] += if sign { 1e-4 } else { -1e-4 };
            prop_assert!(ssr(Family::Linear2C, &v, &samples) >= base - 1e-9 * (1.0 + base));
        }
    }
}
