//! Inverting fitted models: which codes produce a desired property value.
//!
//! Tanh models are inverted through their inner argument. For a desired
//! value `δ` the inner argument must equal `atanh((δ - v0)/gain)`, which
//! turns the level set of a `TANH_LIN_2C` model into a line and that of a
//! `TANH_QUAD_2C` model into a conic.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fit::{Family, PropertyModel};
use crate::par::{self, Execution};

/// Codes reaching a desired value, with the model's prediction there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeSolution {
    pub codes: Vec<f64>,
    /// One prediction per inverted model.
    pub predicted: Vec<f64>,
    /// Largest `|predicted - desired|`.
    pub residual: f64,
}

fn unreachable(model: &PropertyModel, requested: f64) -> Error {
    let (min, max) = match model.gain() {
        Some(g) => (model.offset() - g.abs(), model.offset() + g.abs()),
        None => (model.offset(), model.offset()),
    };
    Error::Unreachable { requested, min, max }
}

/// `atanh((δ - v0)/gain)` for tanh models.
fn inner_target(model: &PropertyModel, delta: f64) -> Result<f64> {
    if !delta.is_finite() {
        return Err(invalid("desired value must be finite"));
    }
    let gain = model.gain().expect("tanh family");
    let ratio = (delta - model.offset()) / gain;
    if !(ratio.abs() < 1.0) {
        return Err(unreachable(model, delta));
    }
    Ok(ratio.atanh())
}

/// Solves a 1-code model for `c1`.
pub fn invert_1code(model: &PropertyModel, delta: f64) -> Result<CodeSolution> {
    model.validate()?;
    if !delta.is_finite() {
        return Err(invalid("desired value must be finite"));
    }
    let v = &model.coefficients;
    let c1 = match model.family {
        Family::Linear1C => {
            if v[1] == 0.0 {
                return Err(unreachable(model, delta));
            }
            (delta - v[0]) / v[1]
        }
        Family::Tanh1C => {
            let u = inner_target(model, delta)?;
            if v[1] == 0.0 {
                return Err(unreachable(model, delta));
            }
            (u - v[2]) / v[1]
        }
        other => return Err(invalid(format!("{other} is not a 1-code family"))),
    };
    if !c1.is_finite() {
        return Err(unreachable(model, delta));
    }
    let predicted = model.predict(&[c1])?;
    Ok(CodeSolution {
        codes: vec![c1],
        predicted: vec![predicted],
        residual: (predicted - delta).abs(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LevelSetKind {
    /// `a·c1 + b·c2 = k` with coefficients `[a, b]`.
    Line,
    /// `A·c1² + B·c2² + C·c1·c2 + D·c1 + E·c2 + F = k` with coefficients
    /// `[A, B, C, D, E, F]`.
    Conic,
}

/// Locus of codes at which a 2-code model predicts `target`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSet {
    pub kind: LevelSetKind,
    pub coefficients: Vec<f64>,
    pub level: f64,
    pub family: Family,
    pub target: f64,
}

impl LevelSet {
    /// Signed constraint value; zero on the set.
    pub fn constraint(&self, c1: f64, c2: f64) -> f64 {
        let k = &self.coefficients;
        match self.kind {
            LevelSetKind::Line => k[0] * c1 + k[1] * c2 - self.level,
            LevelSetKind::Conic => {
                k[0] * c1 * c1 + k[1] * c2 * c2 + k[2] * c1 * c2 + k[3] * c1 + k[4] * c2 + k[5]
                    - self.level
            }
        }
    }

    pub fn gradient(&self, c1: f64, c2: f64) -> [f64; 2] {
        let k = &self.coefficients;
        match self.kind {
            LevelSetKind::Line => [k[0], k[1]],
            LevelSetKind::Conic => [
                2.0 * k[0] * c1 + k[2] * c2 + k[3],
                2.0 * k[1] * c2 + k[2] * c1 + k[4],
            ],
        }
    }
}

/// Level set of a 2-code model at `delta`.
pub fn level_set_2code(model: &PropertyModel, delta: f64) -> Result<LevelSet> {
    model.validate()?;
    if !delta.is_finite() {
        return Err(invalid("desired value must be finite"));
    }
    let v = &model.coefficients;
    let (kind, coefficients, level) = match model.family {
        Family::Linear2C => (LevelSetKind::Line, vec![v[1], v[2]], delta - v[0]),
        Family::TanhLin2C => (
            LevelSetKind::Line,
            vec![v[1], v[2]],
            inner_target(model, delta)? - v[3],
        ),
        Family::TanhQuad2C => (LevelSetKind::Conic, v[1..=6].to_vec(), inner_target(model, delta)?),
        other => return Err(invalid(format!("{other} is not a 2-code family"))),
    };
    // Without any code dependence the set is empty or the whole plane.
    let active = match kind {
        LevelSetKind::Line => &coefficients[..2],
        LevelSetKind::Conic => &coefficients[..5],
    };
    if active.iter().all(|&x| x == 0.0) {
        return Err(unreachable(model, delta));
    }
    Ok(LevelSet {
        kind,
        coefficients,
        level,
        family: model.family,
        target: delta,
    })
}

/// Axis-aligned box in code space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub c1: (f64, f64),
    pub c2: (f64, f64),
}

impl Default for Region {
    fn default() -> Self {
        Region::square(1.5)
    }
}

impl Region {
    /// `[-half, half]²`.
    pub fn square(half: f64) -> Self {
        Region {
            c1: (-half, half),
            c2: (-half, half),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (lo, hi) in [self.c1, self.c2] {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(invalid(format!("invalid region bounds [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    pub fn contains(&self, c1: f64, c2: f64) -> bool {
        (self.c1.0..=self.c1.1).contains(&c1) && (self.c2.0..=self.c2.1).contains(&c2)
    }
}

/// Evenly spaced values in `[lo, hi]`; a single value sits at the midpoint.
fn spaced(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| {
        if n == 1 {
            0.5 * (lo + hi)
        } else {
            lo + (hi - lo) * i as f64 / (n - 1) as f64
        }
    })
}

/// Real roots of `a·x² + b·x + c = 0`, ascending.
fn quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    if a == 0.0 {
        return if b == 0.0 { vec![] } else { vec![-c / b] };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return vec![];
    }
    let sign = if b >= 0.0 { 1.0 } else { -1.0 };
    let q = -0.5 * (b + sign * disc.sqrt());
    let mut roots = if q == 0.0 {
        vec![0.0]
    } else if disc == 0.0 {
        vec![q / a]
    } else {
        vec![q / a, c / q]
    };
    roots.sort_by(f64::total_cmp);
    roots
}

/// Up to `n` points of the level set inside `region`.
pub fn sample_level_set(ls: &LevelSet, region: &Region, n: usize) -> Result<Vec<[f64; 2]>> {
    if n == 0 {
        return Err(invalid("sample count must be at least 1"));
    }
    region.validate()?;
    let points = match ls.kind {
        LevelSetKind::Line => sample_line(ls, region, n),
        LevelSetKind::Conic => sample_conic(ls, region, n),
    };
    Ok(points)
}

fn sample_line(ls: &LevelSet, region: &Region, n: usize) -> Vec<[f64; 2]> {
    let (a, b, k) = (ls.coefficients[0], ls.coefficients[1], ls.level);
    // Parametrize along the code with the smaller slope so points are spread
    // evenly along the segment; `swap` means the free variable is c2.
    let swap = a.abs() > b.abs();
    let (free, solved, p, q) = if swap {
        (region.c2, region.c1, b, a)
    } else {
        (region.c1, region.c2, a, b)
    };
    // solved = (k - p·free)/q must stay inside its bounds.
    let at = |t: f64| (k - p * t) / q;
    let (mut lo, mut hi) = free;
    if p != 0.0 {
        let t1 = (k - q * solved.0) / p;
        let t2 = (k - q * solved.1) / p;
        lo = lo.max(t1.min(t2));
        hi = hi.min(t1.max(t2));
    } else if !(solved.0..=solved.1).contains(&(k / q)) {
        return vec![];
    }
    if lo > hi {
        return vec![];
    }
    let shrink = 1e-12 * (free.1 - free.0);
    let (lo, hi) = if hi - lo > 2.0 * shrink {
        (lo + shrink, hi - shrink)
    } else {
        (lo, hi)
    };
    spaced(lo, hi, n)
        .map(|t| {
            let s = at(t);
            if swap {
                [s, t]
            } else {
                [t, s]
            }
        })
        .filter(|&[c1, c2]| region.contains(c1, c2))
        .collect()
}

/// Scans densely along both axes, keeping each point from the scan in which
/// the curve is the graph of a function with slope at most 1, so points are
/// spread along the whole curve and every root is well conditioned. The
/// points are then chained along the curve and thinned to `n`.
fn sample_conic(ls: &LevelSet, region: &Region, n: usize) -> Vec<[f64; 2]> {
    let k = &ls.coefficients;
    let m = (4 * n).clamp(512, 2048);
    let flat_in_c1 = |c1: f64, c2: f64| {
        let g = ls.gradient(c1, c2);
        g[0].abs() <= g[1].abs()
    };
    let mut found = Vec::new();
    for c1 in spaced(region.c1.0, region.c1.1, m) {
        let c = k[0] * c1 * c1 + k[3] * c1 + k[5] - ls.level;
        for c2 in quadratic_roots(k[1], k[2] * c1 + k[4], c) {
            if c2.is_finite() && region.contains(c1, c2) && flat_in_c1(c1, c2) {
                found.push([c1, c2]);
            }
        }
    }
    for c2 in spaced(region.c2.0, region.c2.1, m) {
        let c = k[1] * c2 * c2 + k[4] * c2 + k[5] - ls.level;
        for c1 in quadratic_roots(k[0], k[2] * c2 + k[3], c) {
            if c1.is_finite() && region.contains(c1, c2) && !flat_in_c1(c1, c2) {
                found.push([c1, c2]);
            }
        }
    }
    let step = ((region.c1.1 - region.c1.0).max(region.c2.1 - region.c2.0)) / (m - 1) as f64;
    let found = chain(found, region, 3.0 * step);
    if found.len() <= n {
        return found;
    }
    let last = found.len() - 1;
    (0..n)
        .map(|i| {
            let idx = if n == 1 { 0 } else { (i * last + (n - 1) / 2) / (n - 1) };
            found[idx]
        })
        .collect()
}

/// Orders points into pieces of curve by walking to the nearest unvisited
/// point, starting each piece at the point closest to the region edge. A
/// piece ends when the nearest point is farther than `gap`.
fn chain(mut pts: Vec<[f64; 2]>, region: &Region, gap: f64) -> Vec<[f64; 2]> {
    let edge = |p: &[f64; 2]| {
        (p[0] - region.c1.0)
            .min(region.c1.1 - p[0])
            .min(p[1] - region.c2.0)
            .min(region.c2.1 - p[1])
    };
    let dist = |a: &[f64; 2], b: &[f64; 2]| (a[0] - b[0]).hypot(a[1] - b[1]);
    let mut out = Vec::with_capacity(pts.len());
    while let Some(start) = (0..pts.len()).min_by(|&i, &j| edge(&pts[i]).total_cmp(&edge(&pts[j]))) {
        let mut cur = pts.remove(start);
        out.push(cur);
        while let Some(i) = (0..pts.len()).min_by(|&i, &j| dist(&cur, &pts[i]).total_cmp(&dist(&cur, &pts[j]))) {
            if dist(&cur, &pts[i]) > gap {
                break;
            }
            cur = pts.remove(i);
            out.push(cur);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntersectOptions {
    /// Bracketing cells per axis.
    pub bracket_grid: usize,
    /// Accepted residual in property units, per model.
    pub tolerance: f64,
    /// Solutions closer than this in code space are one solution.
    pub merge_distance: f64,
    pub max_iterations: usize,
    pub execution: Execution,
}

impl Default for IntersectOptions {
    fn default() -> Self {
        IntersectOptions {
            bracket_grid: 64,
            tolerance: 1e-8,
            merge_distance: 1e-6,
            max_iterations: 50,
            execution: Execution::default(),
        }
    }
}

enum NewtonResult {
    Root([f64; 2]),
    Outside,
    Diverged,
}

fn newton(a: &LevelSet, b: &LevelSet, start: [f64; 2], region: &Region, max_iter: usize) -> NewtonResult {
    let f = |c: [f64; 2]| [a.constraint(c[0], c[1]), b.constraint(c[0], c[1])];
    let norm = |r: [f64; 2]| r[0].abs().max(r[1].abs());
    let scale = |ls: &LevelSet| ls.coefficients.iter().fold(ls.level.abs(), |m, x| m.max(x.abs())).max(1.0);
    let eps = 1e-14 * scale(a).max(scale(b));
    let span = (region.c1.1 - region.c1.0).max(region.c2.1 - region.c2.0);
    let mut c = start;
    let mut r = f(c);
    for _ in 0..max_iter {
        if norm(r) <= eps {
            break;
        }
        let ga = a.gradient(c[0], c[1]);
        let gb = b.gradient(c[0], c[1]);
        let det = ga[0] * gb[1] - ga[1] * gb[0];
        let jscale = (ga[0].abs() + ga[1].abs()) * (gb[0].abs() + gb[1].abs());
        if !(det.abs() > 1e-14 * jscale) {
            return NewtonResult::Diverged;
        }
        let step = [
            -(gb[1] * r[0] - ga[1] * r[1]) / det,
            -(-gb[0] * r[0] + ga[0] * r[1]) / det,
        ];
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial = [c[0] + t * step[0], c[1] + t * step[1]];
            let tr = f(trial);
            if tr[0].is_finite() && tr[1].is_finite() && norm(tr) < norm(r) {
                c = trial;
                r = tr;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
        // Wandered far from the box: this bracket does not hold a root here.
        if (c[0] - region.c1.0).min(region.c1.1 - c[0]) < -span
            || (c[1] - region.c2.0).min(region.c2.1 - c[1]) < -span
        {
            return NewtonResult::Outside;
        }
    }
    if norm(r) > 1e-9 * scale(a).max(scale(b)) {
        return NewtonResult::Diverged;
    }
    if region.contains(c[0], c[1]) {
        NewtonResult::Root(c)
    } else {
        NewtonResult::Outside
    }
}

fn sign_change(values: [f64; 4]) -> bool {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    lo <= 0.0 && hi >= 0.0
}

/// Codes in `region` at which model `a` predicts `delta_a` and model `b`
/// predicts `delta_b`, sorted by `(c1, c2)`.
///
/// Returns an empty list when no bracket holds a solution, and
/// [`Error::NoConvergence`] when brackets exist but Newton fails on all of them.
pub fn intersect_level_sets(
    model_a: &PropertyModel,
    delta_a: f64,
    model_b: &PropertyModel,
    delta_b: f64,
    region: &Region,
    opts: &IntersectOptions,
) -> Result<Vec<CodeSolution>> {
    region.validate()?;
    if opts.bracket_grid == 0 || !(opts.tolerance > 0.0) || !(opts.merge_distance >= 0.0) {
        return Err(invalid("intersection options must be positive"));
    }
    let la = level_set_2code(model_a, delta_a)?;
    let lb = level_set_2code(model_b, delta_b)?;

    let m = opts.bracket_grid;
    let node = |i: usize, j: usize| {
        let c1 = region.c1.0 + (region.c1.1 - region.c1.0) * i as f64 / m as f64;
        let c2 = region.c2.0 + (region.c2.1 - region.c2.0) * j as f64 / m as f64;
        (c1, c2)
    };
    let values: Vec<(f64, f64)> = par::map_indexed((m + 1) * (m + 1), opts.execution, |idx| {
        let (c1, c2) = node(idx / (m + 1), idx % (m + 1));
        (la.constraint(c1, c2), lb.constraint(c1, c2))
    });
    let at = |i: usize, j: usize| values[i * (m + 1) + j];
    let mut brackets = Vec::new();
    for i in 0..m {
        for j in 0..m {
            let corners = [at(i, j), at(i + 1, j), at(i, j + 1), at(i + 1, j + 1)];
            if sign_change(corners.map(|c| c.0)) && sign_change(corners.map(|c| c.1)) {
                let (x0, y0) = node(i, j);
                let (x1, y1) = node(i + 1, j + 1);
                brackets.push([0.5 * (x0 + x1), 0.5 * (y0 + y1)]);
            }
        }
    }
    if brackets.is_empty() {
        return Ok(vec![]);
    }

    let results = par::map_slice(&brackets, opts.execution, |&start| {
        newton(&la, &lb, start, region, opts.max_iterations)
    });
    let mut roots = Vec::new();
    let mut diverged = 0usize;
    for r in results {
        match r {
            NewtonResult::Root(c) => roots.push(c),
            NewtonResult::Outside => {}
            NewtonResult::Diverged => diverged += 1,
        }
    }
    if roots.is_empty() && diverged == brackets.len() {
        return Err(Error::NoConvergence(format!(
            "Newton failed on all {} bracket(s)",
            brackets.len()
        )));
    }

    roots.sort_by(|p, q| p[0].total_cmp(&q[0]).then(p[1].total_cmp(&q[1])));
    let mut merged: Vec<[f64; 2]> = Vec::new();
    for c in roots {
        let dup = merged
            .iter()
            .any(|k| (k[0] - c[0]).hypot(k[1] - c[1]) <= opts.merge_distance);
        if !dup {
            merged.push(c);
        }
    }

    let mut out = Vec::with_capacity(merged.len());
    for c in merged {
        let pa = model_a.predict(&c)?;
        let pb = model_b.predict(&c)?;
        let residual = (pa - delta_a).abs().max((pb - delta_b).abs());
        if residual < opts.tolerance {
            out.push(CodeSolution {
                codes: c.to_vec(),
                predicted: vec![pa, pb],
                residual,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimate::PropertyKind;
    use proptest::prelude::*;

    fn model(family: Family, v: &[f64]) -> PropertyModel {
        PropertyModel::new(family, PropertyKind::Rotation, v.to_vec()).unwrap()
    }

    #[test]
    fn invert_examples() {
        let m = model(Family::Tanh1C, &[10.0, 2.0, 0.0, 30.0]);
        assert_eq!(invert_1code(&m, 10.0).unwrap().codes, vec![0.0]);
        match invert_1code(&m, 40.0) {
            Err(Error::Unreachable { min, max, .. }) => assert_eq!((min, max), (-20.0, 40.0)),
            other => panic!("{other:?}"),
        }
        let lin = model(Family::Linear1C, &[1.0, 2.0]);
        assert_eq!(invert_1code(&lin, 5.0).unwrap().codes, vec![2.0]);
        assert!(matches!(
            invert_1code(&model(Family::Linear1C, &[1.0, 0.0]), 5.0),
            Err(Error::Unreachable { .. })
        ));
        assert!(invert_1code(&model(Family::Linear2C, &[0.0, 1.0, 1.0]), 0.0).is_err());
    }

    #[test]
    fn line_level_sets() {
        let lin = model(Family::Linear2C, &[0.0, 1.0, 1.0]);
        let ls = level_set_2code(&lin, 0.0).unwrap();
        assert_eq!(ls.kind, LevelSetKind::Line);
        assert_eq!(lin.predict(&[0.5, -0.5]).unwrap(), 0.0);
        let pts = sample_level_set(&ls, &Region::square(1.0), 3).unwrap();
        assert_eq!(pts.len(), 3);
        for [c1, c2] in pts {
            assert!((c1 + c2).abs() < 1e-12);
        }

        let t = model(Family::TanhLin2C, &[5.0, 0.7, -0.4, 0.0, 12.0]);
        let ls = level_set_2code(&t, 5.0).unwrap();
        assert_eq!(ls.level, 0.0);
        assert_eq!(ls.constraint(0.0, 0.0), 0.0);
        assert!(matches!(level_set_2code(&t, 17.0), Err(Error::Unreachable { .. })));
    }

    #[test]
    fn circle_conic() {
        // P = c1² + c2², gain 1: level k = atanh(δ).
        let m = model(Family::TanhQuad2C, &[0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let delta = 0.5f64.tanh();
        let ls = level_set_2code(&m, delta).unwrap();
        assert_eq!(ls.kind, LevelSetKind::Conic);
        let pts = sample_level_set(&ls, &Region::square(1.5), 100).unwrap();
        assert!(!pts.is_empty() && pts.len() <= 100);
        for [c1, c2] in &pts {
            assert!((c1.hypot(*c2) - 0.5f64.sqrt()).abs() < 1e-9);
            assert!((m.predict(&[*c1, *c2]).unwrap() - delta).abs() < 1e-9);
        }
        // Negative level: no real points.
        let none = level_set_2code(&m, -0.2).unwrap();
        assert!(sample_level_set(&none, &Region::square(1.5), 50).unwrap().is_empty());
        assert!(sample_level_set(&none, &Region::square(1.5), 0).is_err());
    }

    #[test]
    fn conic_samples_walk_the_curve() {
        // Closed circle of radius √0.5: n points in order, evenly around it.
        let m = model(Family::TanhQuad2C, &[0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let ls = level_set_2code(&m, 0.5f64.tanh()).unwrap();
        let n = 40;
        let pts = sample_level_set(&ls, &Region::square(1.5), n).unwrap();
        assert_eq!(pts.len(), n);
        let arc = 2.0 * std::f64::consts::PI * 0.5f64.sqrt() / n as f64;
        for w in pts.windows(2) {
            let d = (w[0][0] - w[1][0]).hypot(w[0][1] - w[1][1]);
            assert!(d > 0.5 * arc && d < 1.5 * arc, "step {d} vs {arc}");
        }
        // A steep arc crossing the region: ends on opposite edges.
        let steep = model(Family::TanhQuad2C, &[0.0, 0.1, 0.0, 0.0, 1.0, 0.05, 0.0, 1.0]);
        let ls = level_set_2code(&steep, 0.2f64.tanh()).unwrap();
        let pts = sample_level_set(&ls, &Region::square(1.5), 5).unwrap();
        assert_eq!(pts.len(), 5);
        let (a, b) = (pts[0], pts[4]);
        assert!((a[1] - b[1]).abs() > 2.99, "{a:?} {b:?}");
    }

    #[test]
    fn line_outside_region_is_empty() {
        let lin = model(Family::Linear2C, &[0.0, 1.0, 1.0]);
        let ls = level_set_2code(&lin, 10.0).unwrap();
        assert!(sample_level_set(&ls, &Region::square(1.0), 5).unwrap().is_empty());
    }

    #[test]
    fn linear_intersections() {
        let a = model(Family::Linear2C, &[0.0, 1.0, 1.0]);
        let b = model(Family::Linear2C, &[0.0, 1.0, -1.0]);
        let sol = intersect_level_sets(&a, 1.0, &b, 0.0, &Region::default(), &IntersectOptions::default())
            .unwrap();
        assert_eq!(sol.len(), 1);
        assert!((sol[0].codes[0] - 0.5).abs() < 1e-12 && (sol[0].codes[1] - 0.5).abs() < 1e-12);

        let parallel = model(Family::Linear2C, &[0.0, 1.0, 1.0]);
        let sol = intersect_level_sets(&a, 1.0, &parallel, -1.0, &Region::default(), &IntersectOptions::default())
            .unwrap();
        assert!(sol.is_empty());
    }

    #[test]
    fn conic_pairs_return_all_sorted_solutions() {
        // Circle of radius 1 against the diagonal line: two solutions.
        let circle = model(Family::TanhQuad2C, &[0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let diag = model(Family::Linear2C, &[0.0, 1.0, -1.0]);
        let sol = intersect_level_sets(&circle, 1f64.tanh(), &diag, 0.0, &Region::default(), &IntersectOptions::default())
            .unwrap();
        assert_eq!(sol.len(), 2);
        let h = 0.5f64.sqrt();
        assert!((sol[0].codes[0] + h).abs() < 1e-9 && (sol[1].codes[0] - h).abs() < 1e-9);
        assert!(sol.iter().all(|s| s.residual < 1e-8));
    }

    proptest! {
        #[test]
        fn inversion_round_trip(
            v0 in -50.0f64..50.0, v1 in 0.2f64..3.0, v2 in -1.0f64..1.0, v3 in 1.0f64..60.0,
            frac in -0.99f64..0.99,
        ) {
            let m = model(Family::Tanh1C, &[v0, v1, v2, v3]);
            let delta = v0 + frac * v3;
            let s = invert_1code(&m, delta).unwrap();
            prop_assert!(s.residual <= 1e-9 * (1.0 + delta.abs()));
        }

        #[test]
        fn level_set_points_share_prediction(
            v in proptest::collection::vec(-1.0f64..1.0, 6),
            v0 in -5.0f64..5.0, gain in 5.0f64..40.0, frac in -0.9f64..0.9,
        ) {
            let mut coeffs = vec![v0];
            coeffs.extend(&v);
            coeffs.push(gain);
            let m = model(Family::TanhQuad2C, &coeffs);
            let delta = v0 + frac * gain;
            let ls = level_set_2code(&m, delta).unwrap();
            let pts = sample_level_set(&ls, &Region::default(), 40).unwrap();
            for [c1, c2] in pts {
                prop_assert!(ls.constraint(c1, c2).abs() < 1e-9);
                prop_assert!((m.predict(&[c1, c2]).unwrap() - delta).abs() < 1e-9 * gain.max(1.0));
            }
        }
    }
}
