#![allow(dead_code)]

use proptest::prelude::*;
use subriemann::models::builtin;
use subriemann::StructureSpec;

pub const BUILTINS: [&str; 4] = ["heisenberg-1", "heisenberg-2", "engel", "perturbed-heisenberg"];
pub const CARNOT: [&str; 3] = ["heisenberg-1", "heisenberg-2", "engel"];

pub fn model(name: &str) -> StructureSpec {
    builtin(name).unwrap()
}

/// Point of the box scaled about its centre by `shrink`, from unit coordinates.
pub fn inner_point(spec: &StructureSpec, u: &[f64], shrink: f64) -> Vec<f64> {
    let c = spec.domain.center();
    (0..spec.dim())
        .map(|i| c[i] + shrink * (u[i] - 0.5) * (spec.domain.hi[i] - spec.domain.lo[i]))
        .collect()
}

pub fn unit_cube(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.0..1.0f64, n)
}

pub fn unit_vector(raw: &[f64]) -> Vec<f64> {
    let n = raw.iter().map(|a| a * a).sum::<f64>().sqrt();
    raw.iter().map(|a| a / n).collect()
}

/// Small polynomial/trig term in the chart coordinates, as source text.
pub fn coefficient_text(coords: &[String], a: f64, b: f64, c: f64, i: usize, j: usize, l: usize) -> String {
    let m = coords.len();
    let (xi, xj, xl) = (&coords[i % m], &coords[j % m], &coords[l % m]);
    format!("{a} + {b}*{xi}*{xj} + {c}*sin({xl})")
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
