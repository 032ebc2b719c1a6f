mod common;

use common::*;
use nalgebra::DVector;
use proptest::prelude::*;
use subriemann::connection::{
    christoffels, covariant_derivative, horizontal_hessian, riemannian_hessian, sublaplacian,
};
use subriemann::geometry::{frame_matrix, FrameField};
use subriemann::{parse_expression, Expr, StructureSpec};

type Raw = (f64, f64, f64, usize, usize, usize);

fn raw() -> impl Strategy<Value = Raw> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, 0..8usize, 0..8usize, 0..8usize)
}

fn coefficient(spec: &StructureSpec, r: Raw) -> Expr {
    let (a, b, c, i, j, l) = r;
    parse_expression(&coefficient_text(&spec.coords, a, b, c, i, j, l)).unwrap().resolve(&spec.coords)
}

fn coefficients(spec: &StructureSpec, raw: &[Raw]) -> Vec<Expr> {
    raw.iter().take(spec.rank()).map(|r| coefficient(spec, *r)).collect()
}

/// Chart field `Σ U^i X_i`.
fn horizontal_field(spec: &StructureSpec, u: &[Expr]) -> FrameField {
    let mut acc = spec.horizontal[0].scaled(&u[0]);
    for (i, c) in u.iter().enumerate().skip(1) {
        acc = acc.sum(&spec.horizontal[i].scaled(c));
    }
    acc
}

fn eval_all(es: &[Expr], p: &[f64]) -> Vec<f64> {
    es.iter().map(|e| e.eval(p).unwrap()).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn torsion_is_the_horizontal_bracket(
        name in prop::sample::select(BUILTINS.to_vec()),
        u in proptest::collection::vec(raw(), 4), v in proptest::collection::vec(raw(), 4),
        at in unit_cube(5),
    ) {
        let spec = model(name);
        let k = spec.rank();
        let p = inner_point(&spec, &at, 0.9);
        let (u, v) = (coefficients(&spec, &u), coefficients(&spec, &v));
        let duv = covariant_derivative(&spec, &u, &v, &p).unwrap();
        let dvu = covariant_derivative(&spec, &v, &u, &p).unwrap();
        let bracket = horizontal_field(&spec, &u).bracket(&horizontal_field(&spec, &v)).eval(&p).unwrap();
        let coeffs = frame_matrix(&spec, &p).unwrap().lu().solve(&DVector::from_vec(bracket)).unwrap();
        for r in 0..k {
            prop_assert!((duv[r] - dvu[r] - coeffs[r]).abs() <= 1e-9, "r={r}: {} vs {}", duv[r] - dvu[r], coeffs[r]);
        }
    }

    #[test]
    fn connection_is_metric(
        name in prop::sample::select(BUILTINS.to_vec()),
        u in proptest::collection::vec(raw(), 4), v in proptest::collection::vec(raw(), 4),
        z in proptest::collection::vec(raw(), 4), at in unit_cube(5),
    ) {
        let spec = model(name);
        let p = inner_point(&spec, &at, 0.9);
        let (u, v, z) = (coefficients(&spec, &u), coefficients(&spec, &v), coefficients(&spec, &z));
        let mut g = Expr::num(0.0);
        for (a, b) in u.iter().zip(&v) {
            g = subriemann::expr::add(g, subriemann::expr::mul(a.clone(), b.clone()));
        }
        let lhs = horizontal_field(&spec, &z).apply(&g).eval(&p).unwrap();
        let dzu = covariant_derivative(&spec, &z, &u, &p).unwrap();
        let dzv = covariant_derivative(&spec, &z, &v, &p).unwrap();
        let rhs = dot(&dzu, &eval_all(&v, &p)) + dot(&eval_all(&u, &p), &dzv);
        prop_assert!((lhs - rhs).abs() <= 1e-9, "{lhs} vs {rhs}");
    }

    #[test]
    fn horizontal_hessian_from_the_riemannian_one(
        name in prop::sample::select(BUILTINS.to_vec()),
        f in raw(), g in raw(), at in unit_cube(5),
    ) {
        let spec = model(name);
        let (k, m) = (spec.rank(), spec.dim());
        let p = inner_point(&spec, &at, 0.9);
        let f = subriemann::expr::add(coefficient(&spec, f), subriemann::expr::mul(coefficient(&spec, g), coefficient(&spec, g)));
        let hh = horizontal_hessian(&spec, &f, &p).unwrap();
        let full = riemannian_hessian(&spec, &f, &p).unwrap();
        let table = christoffels(&spec, &p).unwrap();
        let vertical: Vec<f64> = (k..m).map(|c| spec.field(c).apply(&f).eval(&p).unwrap()).collect();
        for i in 0..k {
            for j in 0..k {
                // B(X_i, X_j) has frame coefficients Γ^c_ij, c > k
                let b: f64 = (k..m).map(|c| 0.5 * (table.full(c, i, j) + table.full(c, j, i)) * vertical[c - k]).sum();
                let expected = full[(i, j)] + b;
                prop_assert!((hh.matrix[i][j] - expected).abs() <= 1e-9, "({i},{j}): {} vs {expected}", hh.matrix[i][j]);
            }
        }
    }

    #[test]
    fn trace_is_the_sublaplacian(name in prop::sample::select(BUILTINS.to_vec()), f in raw(), g in raw(), at in unit_cube(5)) {
        let spec = model(name);
        let p = inner_point(&spec, &at, 0.9);
        let f = subriemann::expr::mul(coefficient(&spec, f), coefficient(&spec, g));
        let trace = horizontal_hessian(&spec, &f, &p).unwrap().trace();
        let lap = sublaplacian(&spec, &f, &p).unwrap();
        prop_assert!((trace - lap).abs() <= 1e-12);
    }
}

#[test]
fn carnot_models_have_flat_horizontal_connection() {
    for name in CARNOT {
        let spec = model(name);
        let mut worst: f64 = 0.0;
        for i in 0..1000 {
            let u: Vec<f64> = subriemann::rng::uniform_cube(3, i, spec.dim(), 0.5).iter().map(|v| v + 0.5).collect();
            worst = worst.max(christoffels(&spec, &spec.domain.from_unit(&u)).unwrap().max_abs_horizontal());
        }
        assert!(worst <= 1e-12, "{name}: {worst}");
    }
}
