//! Built-in structures and the Heisenberg-specific exact machinery: symplectic
//! area, horizontal lifts of planar polylines, the area-matching planner and
//! the exact Carnot–Carathéodory distance on the first Heisenberg group.
//!
//! Along a horizontal curve of `H^n` the vertical coordinate obeys
//! `ṫ = ½ Σ (y_i ẋ_i − x_i ẏ_i)`, the factor ½ coming from the fields
//! `X_j = ∂x_j + ½ y_j ∂t`, `X_{n+j} = ∂y_j − ½ x_j ∂t`. Consequently a closed
//! planar loop enclosing signed area `A` lifts to a vertical displacement of
//! `−A`, and the pure vertical distance is `2√(π|Δt|)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::connectivity::{BrokenGeodesic, Segment};
use crate::error::{Error, Result};
use crate::structure::{parse_model, ModelFile, StructureSpec};

pub const BUILTIN_NAMES: [&str; 3] = ["heisenberg-<n>", "engel", "perturbed-heisenberg"];

/// Half-width of the Heisenberg domain boxes.
const HEISENBERG_HALF_WIDTH: f64 = 5.0;
const ENGEL_HALF_WIDTH: f64 = 2.0;
const PERTURBED_HALF_WIDTH: f64 = 2.0;

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

fn heisenberg_coords(n: usize) -> Vec<String> {
    if n == 1 {
        return strings(&["x", "y", "t"]);
    }
    let mut c: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    c.extend((1..=n).map(|i| format!("y{i}")));
    c.push("t".into());
    c
}

fn heisenberg_file(n: usize) -> ModelFile {
    let coords = heisenberg_coords(n);
    let m = 2 * n + 1;
    let mut horizontal = Vec::with_capacity(2 * n);
    for j in 0..n {
        let mut comps = vec!["0".to_string(); m];
        comps[j] = "1".into();
        comps[m - 1] = format!("0.5*{}", coords[n + j]);
        horizontal.push(comps);
    }
    for j in 0..n {
        let mut comps = vec!["0".to_string(); m];
        comps[n + j] = "1".into();
        comps[m - 1] = format!("-0.5*{}", coords[j]);
        horizontal.push(comps);
    }
    let mut t = vec!["0".to_string(); m];
    t[m - 1] = "1".into();
    let mut weights = vec![1; 2 * n];
    weights.push(2);
    ModelFile {
        name: format!("heisenberg-{n}"),
        coords,
        horizontal,
        vertical: vec![t],
        domain: vec![[-HEISENBERG_HALF_WIDTH, HEISENBERG_HALF_WIDTH]; m],
        weights: Some(weights),
    }
}

fn engel_file() -> ModelFile {
    ModelFile {
        name: "engel".into(),
        coords: strings(&["x1", "x2", "x3", "x4"]),
        horizontal: vec![strings(&["1", "0", "0", "0"]), strings(&["0", "1", "x1", "0.5*x1^2"])],
        vertical: vec![strings(&["0", "0", "1", "x1"]), strings(&["0", "0", "0", "1"])],
        domain: vec![[-ENGEL_HALF_WIDTH, ENGEL_HALF_WIDTH]; 4],
        weights: Some(vec![1, 1, 2, 3]),
    }
}

/// Heisenberg fields with `X_1` rescaled by `e^{y/4}` and the frame still
/// declared orthonormal: a horizontal connection with non-zero symbols.
fn perturbed_file() -> ModelFile {
    ModelFile {
        name: "perturbed-heisenberg".into(),
        coords: strings(&["x", "y", "t"]),
        horizontal: vec![
            strings(&["exp(0.25*y)", "0", "0.5*y*exp(0.25*y)"]),
            strings(&["0", "1", "-0.5*x"]),
        ],
        vertical: vec![strings(&["0", "0", "1"])],
        domain: vec![[-PERTURBED_HALF_WIDTH, PERTURBED_HALF_WIDTH]; 3],
        weights: None,
    }
}

/// The model file of a built-in, in the same JSON format accepted by
/// [`parse_model`].
pub fn builtin_file(name: &str) -> Result<ModelFile> {
    match name {
        "engel" => Ok(engel_file()),
        "perturbed-heisenberg" => Ok(perturbed_file()),
        _ => {
            let n = name
                .strip_prefix("heisenberg-")
                .and_then(|s| s.parse::<usize>().ok())
                .filter(|&n| (1..=8).contains(&n))
                .ok_or_else(|| Error::UnknownModel(name.to_string()))?;
            Ok(heisenberg_file(n))
        }
    }
}

pub fn builtin_document(name: &str) -> Result<String> {
    Ok(serde_json::to_string_pretty(&builtin_file(name)?)?)
}

pub fn builtin(name: &str) -> Result<StructureSpec> {
    parse_model(&builtin_document(name)?)
}

/// Heisenberg dimension parameter `n` if `spec` is a Heisenberg model in the
/// built-in coordinates (fields are checked, not just the name).
pub fn heisenberg_n(spec: &StructureSpec) -> Option<usize> {
    let m = spec.dim();
    if m < 3 || m % 2 == 0 {
        return None;
    }
    let n = (m - 1) / 2;
    let reference = heisenberg_file(n);
    let ours = spec.to_model_file();
    let same_fields = ours.horizontal.len() == reference.horizontal.len()
        && crate::structure::from_model_file(&reference)
            .ok()
            .map(|r| {
                r.fields()
                    .zip(spec.fields())
                    .all(|(a, b)| a.components == b.components)
            })
            .unwrap_or(false);
    same_fields.then_some(n)
}

/// An ordered list of planar vertices in the projection `(x_1..x_n, y_1..y_n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanarPolyline {
    pub vertices: Vec<Vec<f64>>,
}

impl PlanarPolyline {
    pub fn new(vertices: Vec<Vec<f64>>) -> Result<PlanarPolyline> {
        if vertices.len() < 2 {
            return Err(Error::InvalidInput("a polyline needs at least two vertices".into()));
        }
        let d = vertices[0].len();
        if d == 0 || d % 2 != 0 || vertices.iter().any(|v| v.len() != d) {
            return Err(Error::Dimension("polyline vertices must share an even dimension".into()));
        }
        if vertices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput("consecutive polyline vertices coincide".into()));
        }
        Ok(PlanarPolyline { vertices })
    }

    pub fn pairs(&self) -> usize {
        self.vertices[0].len() / 2
    }

    pub fn length(&self) -> f64 {
        self.vertices.windows(2).map(|w| euclid(&w[0], &w[1])).sum()
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `∫ Σ_i (y_i dx_i − x_i dy_i)` along a straight segment: `Σ_i (y0_i x1_i − x0_i y1_i)`.
fn segment_area(a: &[f64], b: &[f64], n: usize) -> f64 {
    (0..n).map(|i| a[n + i] * b[i] - a[i] * b[n + i]).sum()
}

/// Symplectic area `∫ (y dx − x dy)` of the polyline, summed over the `n` pairs.
pub fn heisenberg_area(poly: &PlanarPolyline) -> f64 {
    let n = poly.pairs();
    poly.vertices.windows(2).map(|w| segment_area(&w[0], &w[1], n)).sum()
}

/// Horizontal lift through `start`; each planar segment becomes a unit-speed leg.
pub fn heisenberg_lift(poly: &PlanarPolyline, start: &[f64]) -> Result<BrokenGeodesic> {
    let n = poly.pairs();
    if start.len() != 2 * n + 1 {
        return Err(Error::Dimension("start point does not match the polyline dimension".into()));
    }
    let first = &poly.vertices[0];
    if euclid(&start[..2 * n], first) > 1e-12 * (1.0 + first.iter().map(|v| v.abs()).fold(0.0, f64::max)) {
        return Err(Error::InvalidInput("start point does not project to the first vertex".into()));
    }
    let mut t = start[2 * n];
    let mut breaks = vec![start.to_vec()];
    let mut segments = Vec::with_capacity(poly.vertices.len() - 1);
    for w in poly.vertices.windows(2) {
        let len = euclid(&w[0], &w[1]);
        let dir: Vec<f64> = w[0].iter().zip(&w[1]).map(|(a, b)| (b - a) / len).collect();
        t += 0.5 * segment_area(&w[0], &w[1], n);
        let mut p = w[1].clone();
        p.push(t);
        breaks.push(p);
        segments.push(Segment { dir, len });
    }
    Ok(BrokenGeodesic::from_parts(start.to_vec(), segments, breaks))
}

/// Broken geodesic from `p` to `q` on `H^n`: the lifted straight planar segment
/// followed by a regular `ngon` loop at `q̄` whose enclosed area cancels the
/// remaining vertical gap.
pub fn heisenberg_plan(p: &[f64], q: &[f64], ngon: usize) -> Result<BrokenGeodesic> {
    if ngon < 3 {
        return Err(Error::InvalidInput("ngon must be at least 3".into()));
    }
    if p.len() != q.len() || p.len() < 3 || p.len() % 2 == 0 {
        return Err(Error::Dimension("points must lie in the same H^n".into()));
    }
    let n = (p.len() - 1) / 2;
    let pbar = p[..2 * n].to_vec();
    let qbar = q[..2 * n].to_vec();
    let mut vertices = vec![pbar.clone()];
    let mut t_end = p[2 * n];
    if pbar != qbar {
        t_end += 0.5 * segment_area(&pbar, &qbar, n);
        vertices.push(qbar.clone());
    }
    let gap = q[2 * n] - t_end;
    let scale = 1.0 + q[2 * n].abs().max(p[2 * n].abs());
    if gap.abs() > 1e-15 * scale {
        // lifted loop changes t by −(signed area): orientation opposite to the gap
        let area = gap.abs();
        let radius = (2.0 * area / (ngon as f64 * (2.0 * PI / ngon as f64).sin())).sqrt();
        let orientation = if gap > 0.0 { -1.0 } else { 1.0 };
        // circle through q̄ in the (x_1, y_1) plane, centered at q̄ − radius·e_{x_1}
        for j in 1..ngon {
            let angle = orientation * 2.0 * PI * j as f64 / ngon as f64;
            let mut v = qbar.clone();
            v[0] += radius * (angle.cos() - 1.0);
            v[n] += radius * angle.sin();
            vertices.push(v);
        }
        vertices.push(qbar.clone());
    }
    if vertices.len() < 2 {
        return Ok(BrokenGeodesic::from_parts(p.to_vec(), Vec::new(), vec![p.to_vec()]));
    }
    let poly = PlanarPolyline::new(vertices)?;
    heisenberg_lift(&poly, p)
}

/// `p^{-1} q` in `H^1` for the group law matching the built-in fields.
fn heisenberg_relative(p: &[f64], q: &[f64]) -> (f64, f64, f64) {
    let (dx, dy) = (q[0] - p[0], q[1] - p[1]);
    let dt = q[2] - p[2] + 0.5 * (p[0] * q[1] - q[0] * p[1]);
    (dx, dy, dt)
}

/// `(2φ − sin 2φ) / (8 sin²φ)`: area of the circular segment cut off by a
/// chord of unit length whose arc subtends `2φ`.
fn segment_area_ratio(phi: f64) -> f64 {
    let s = phi.sin();
    let num = if phi < 1e-3 {
        let u = 2.0 * phi;
        let u3 = u * u * u;
        u3 / 6.0 - u3 * u * u / 120.0 + u3 * u3 * u / 5040.0
    } else {
        2.0 * phi - (2.0 * phi).sin()
    };
    num / (8.0 * s * s)
}

/// Exact Carnot–Carathéodory distance on `H^1`.
///
/// Length minimisers project to circular arcs (or the chord); the arc is
/// chosen so the circular segment between arc and chord has area `|Δt|`.
pub fn heisenberg_dc(p: &[f64], q: &[f64], tol: f64) -> Result<f64> {
    if p.len() != 3 || q.len() != 3 {
        return Err(Error::Dimension("the exact distance is available on heisenberg-1 only".into()));
    }
    let (dx, dy, dt) = heisenberg_relative(p, q);
    let chord = (dx * dx + dy * dy).sqrt();
    let area = dt.abs();
    if area == 0.0 {
        return Ok(chord);
    }
    if chord == 0.0 {
        return Ok(2.0 * (PI * area).sqrt());
    }
    let target = area / (chord * chord);
    // segment_area_ratio increases from 0 to ∞ on (0, π)
    let (mut lo, mut hi) = (0.0_f64, PI);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if segment_area_ratio(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    let phi = 0.5 * (lo + hi);
    let residual = (segment_area_ratio(phi) - target).abs() / target.max(1.0);
    if !(residual <= tol.max(1e-12)) && hi - lo > 1e-14 {
        return Err(Error::InvalidInput(format!(
            "arc parameter did not reach tolerance {tol:e} (residual {residual:e})"
        )));
    }
    let factor = if phi < 1e-8 { 1.0 + phi * phi / 6.0 } else { phi / phi.sin() };
    Ok(chord * factor)
}

/// Carnot dilation `δ_λ`: coordinate `i` scales by `λ^{w_i}`.
pub fn carnot_dilate(spec: &StructureSpec, lambda: f64, p: &[f64]) -> Result<Vec<f64>> {
    let w = spec.weights.as_ref().ok_or_else(|| Error::NotCarnot(spec.name.clone()))?;
    if p.len() != w.len() {
        return Err(Error::Dimension("point dimension differs from the model".into()));
    }
    Ok(p.iter().zip(w).map(|(x, &wi)| x * lambda.powi(wi as i32)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{growth_vector, DEFAULT_RANK_TOL};

    #[test]
    fn catalog() {
        let h = builtin("heisenberg-1").unwrap();
        assert_eq!((h.dim(), h.rank()), (3, 2));
        let e = builtin("engel").unwrap();
        assert_eq!((e.dim(), e.rank()), (4, 2));
        assert_eq!(growth_vector(&e, &[0.1, 0.2, 0.3, 0.4], DEFAULT_RANK_TOL).unwrap().layers, vec![2, 3, 4]);
        assert!(matches!(builtin("nope"), Err(Error::UnknownModel(_))));
        assert!(matches!(builtin("heisenberg-0"), Err(Error::UnknownModel(_))));
        assert!(builtin("perturbed-heisenberg").is_ok());
        assert_eq!(heisenberg_n(&builtin("heisenberg-2").unwrap()), Some(2));
        assert_eq!(heisenberg_n(&builtin("perturbed-heisenberg").unwrap()), None);
    }

    #[test]
    fn builtin_documents_round_trip() {
        for name in ["heisenberg-1", "heisenberg-3", "engel", "perturbed-heisenberg"] {
            let spec = builtin(name).unwrap();
            let again = parse_model(&spec.to_json()).unwrap();
            assert_eq!(again.to_model_file(), spec.to_model_file());
        }
    }

    fn square() -> PlanarPolyline {
        PlanarPolyline::new(vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![1.0, 1.0],
            vec![0.0, 1.0],
            vec![0.0, 0.0],
        ])
        .unwrap()
    }

    #[test]
    fn symplectic_area() {
        assert_eq!(heisenberg_area(&square()), -2.0);
        let mut rev = square();
        rev.vertices.reverse();
        assert_eq!(heisenberg_area(&rev), 2.0);
        let ray = PlanarPolyline::new(vec![vec![-1.0, -2.0], vec![0.5, 1.0]]).unwrap();
        assert_eq!(heisenberg_area(&ray), 0.0);
    }

    #[test]
    fn lifts() {
        let seg = PlanarPolyline::new(vec![vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let g = heisenberg_lift(&seg, &[0.0; 3]).unwrap();
        assert_eq!(g.endpoint(), &[1.0, 0.0, 0.0]);
        let g = heisenberg_lift(&square(), &[0.0; 3]).unwrap();
        assert_eq!(g.endpoint(), &[0.0, 0.0, -1.0]);
        assert_eq!(g.length(), 4.0);
        assert!(heisenberg_lift(&square(), &[1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn planner_examples() {
        let g = heisenberg_plan(&[0.0; 3], &[1.0, 0.0, 0.0], 8).unwrap();
        assert_eq!(g.length(), 1.0);
        assert_eq!(g.segments.len(), 1);
        let g = heisenberg_plan(&[0.0; 3], &[0.0, 0.0, 1.0], 4).unwrap();
        assert!((g.length() - 4.0).abs() < 1e-12);
        assert!(g.endpoint().iter().zip([0.0, 0.0, 1.0]).all(|(a, b)| (a - b).abs() < 1e-12));
        let g = heisenberg_plan(&[0.0; 3], &[0.0, 0.0, 1.0], 16).unwrap();
        let expected = 2.0 * (16.0 * (PI / 16.0).tan()).sqrt();
        assert!((g.length() - expected).abs() < 1e-12);
        assert!((g.length() - 3.568).abs() < 1e-3);
        let g = heisenberg_plan(&[0.0; 3], &[0.0, 0.0, -0.3], 5).unwrap();
        assert!((g.endpoint()[2] + 0.3).abs() < 1e-12);
        assert!(heisenberg_plan(&[0.0; 3], &[0.0; 3], 2).is_err());
    }

    #[test]
    fn dc_oracle_examples() {
        let o = [0.0; 3];
        assert!((heisenberg_dc(&o, &[1.0, 0.0, 0.0], 1e-12).unwrap() - 1.0).abs() < 1e-15);
        assert!((heisenberg_dc(&o, &[0.0, 0.0, 1.0], 1e-12).unwrap() - 2.0 * PI.sqrt()).abs() < 1e-14);
        assert!((heisenberg_dc(&o, &[1.0, 1.0, 0.0], 1e-12).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        // half circle of diameter 1 encloses π/8 and has length π/2
        let d = heisenberg_dc(&o, &[1.0, 0.0, PI / 8.0], 1e-12).unwrap();
        assert!((d - PI / 2.0).abs() < 1e-12, "{d}");
    }

    #[test]
    fn dilations() {
        let h = builtin("heisenberg-1").unwrap();
        assert_eq!(carnot_dilate(&h, 2.0, &[1.0, 1.0, 1.0]).unwrap(), vec![2.0, 2.0, 4.0]);
        assert_eq!(carnot_dilate(&h, 1.0, &[0.3, -1.0, 2.0]).unwrap(), vec![0.3, -1.0, 2.0]);
        let e = builtin("engel").unwrap();
        assert_eq!(carnot_dilate(&e, 3.0, &[1.0, 0.0, 0.0, 1.0]).unwrap(), vec![3.0, 0.0, 0.0, 27.0]);
        let p = builtin("perturbed-heisenberg").unwrap();
        assert!(matches!(carnot_dilate(&p, 2.0, &[0.0; 3]), Err(Error::NotCarnot(_))));
    }
}
