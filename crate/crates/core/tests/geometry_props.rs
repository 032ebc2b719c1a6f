mod common;

use common::*;
use proptest::prelude::*;
use subriemann::geometry::{growth_vector, FrameField};
use subriemann::parse_expression;

fn field(spec: &subriemann::StructureSpec, texts: &[String]) -> FrameField {
    FrameField::new(texts.iter().map(|t| parse_expression(t).unwrap().resolve(&spec.coords)).collect())
}

fn random_field(spec: &subriemann::StructureSpec, raw: &[(f64, f64, f64, usize, usize, usize)]) -> FrameField {
    let texts: Vec<String> = (0..spec.dim())
        .map(|i| {
            let (a, b, c, x, y, z) = raw[i];
            coefficient_text(&spec.coords, a, b, c, x, y, z)
        })
        .collect();
    field(spec, &texts)
}

fn raw_field() -> impl Strategy<Value = Vec<(f64, f64, f64, usize, usize, usize)>> {
    proptest::collection::vec((-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, 0..8usize, 0..8usize, 0..8usize), 5)
}

#[test]
fn jacobi_identity_for_heisenberg_frame() {
    let spec = model("heisenberg-1");
    let e: Vec<&FrameField> = spec.fields().collect();
    let jacobi = e[0].bracket(e[1]).bracket(e[2]).sum(&e[1].bracket(e[2]).bracket(e[0])).sum(&e[2].bracket(e[0]).bracket(e[1]));
    for i in 0..50 {
        let p = subriemann::rng::uniform_cube(11, i, 3, 2.0);
        let v = jacobi.eval(&p).unwrap();
        assert!(v.iter().all(|c| c.abs() <= 1e-12), "{v:?} at {p:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bracket_is_antisymmetric_and_bilinear(
        name in prop::sample::select(BUILTINS.to_vec()),
        u in raw_field(), v in raw_field(), w in raw_field(),
        a in -2.0..2.0f64, b in -2.0..2.0f64, at in unit_cube(5),
    ) {
        let spec = model(name);
        let (u, v, w) = (random_field(&spec, &u), random_field(&spec, &v), random_field(&spec, &w));
        let p = inner_point(&spec, &at, 0.9);
        let uv = u.bracket(&v).eval(&p).unwrap();
        let vu = v.bracket(&u).eval(&p).unwrap();
        for (x, y) in uv.iter().zip(&vu) {
            prop_assert!((x + y).abs() <= 1e-12 * (1.0 + x.abs()));
        }
        let combo = u.scaled(&subriemann::Expr::num(a)).sum(&w.scaled(&subriemann::Expr::num(b)));
        let lhs = combo.bracket(&v).eval(&p).unwrap();
        let wv = w.bracket(&v).eval(&p).unwrap();
        for i in 0..spec.dim() {
            let rhs = a * uv[i] + b * wv[i];
            prop_assert!((lhs[i] - rhs).abs() <= 1e-12 * (1.0 + rhs.abs() + uv[i].abs() + wv[i].abs()));
        }
    }

    #[test]
    fn growth_vector_is_constant_on_the_domain(name in prop::sample::select(CARNOT.to_vec()), at in unit_cube(5)) {
        let spec = model(name);
        let centre = growth_vector(&spec, &spec.domain.center(), 1e-9).unwrap();
        let here = growth_vector(&spec, &inner_point(&spec, &at, 1.0), 1e-9).unwrap();
        prop_assert_eq!(here.layers, centre.layers);
    }
}
