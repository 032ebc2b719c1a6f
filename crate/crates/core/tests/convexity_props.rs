mod common;

use common::*;
use proptest::prelude::*;
use subriemann::connection::horizontal_hessian;
use subriemann::convexity::{nconvexity_by_geodesics, nconvexity_by_hessian, ConvexityOptions, Verdict, Witness};
use subriemann::expr::{add, mul};
use subriemann::geodesic::nonholonomic_geodesic;
use subriemann::{parse_expression, Expr, StructureSpec};

fn resolved(spec: &StructureSpec, text: &str) -> Expr {
    parse_expression(text).unwrap().resolve(&spec.coords)
}

fn quick(seed: u64) -> ConvexityOptions {
    ConvexityOptions { samples: 60, geodesics: 30, seed, ..ConvexityOptions::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn carnot_hessian_is_the_symmetrised_second_derivative(
        name in prop::sample::select(CARNOT.to_vec()),
        a in -1.0..1.0f64, b in -1.0..1.0f64, c in -1.0..1.0f64, i in 0..5usize, j in 0..5usize, l in 0..5usize,
        at in unit_cube(5),
    ) {
        let spec = model(name);
        let k = spec.rank();
        let f = resolved(&spec, &format!("({}) * ({})", coefficient_text(&spec.coords, a, b, c, i, j, l), coefficient_text(&spec.coords, b, c, a, l, i, j)));
        let p = inner_point(&spec, &at, 0.9);
        let h = horizontal_hessian(&spec, &f, &p).unwrap();
        for r in 0..k {
            for s in 0..k {
                let xr = &spec.horizontal[r];
                let xs = &spec.horizontal[s];
                let sym = mul(Expr::num(0.5), add(xr.apply(&xs.apply(&f)), xs.apply(&xr.apply(&f))));
                let v = sym.eval(&p).unwrap();
                prop_assert!((h.matrix[r][s] - v).abs() <= 1e-10, "({r},{s}): {} vs {v}", h.matrix[r][s]);
            }
        }
    }

    #[test]
    fn coordinate_functions_are_affine_along_carnot_geodesics(
        n in prop::sample::select(vec![1usize, 2]),
        at in unit_cube(5), raw in proptest::collection::vec(-1.0..1.0f64, 4),
    ) {
        let spec = model(&format!("heisenberg-{n}"));
        let x0 = inner_point(&spec, &at, 0.5);
        prop_assume!(raw[..2 * n].iter().any(|v| v.abs() > 0.1));
        let v0 = unit_vector(&raw[..2 * n]);
        let curve = nonholonomic_geodesic(&spec, &x0, &v0, 1.0, 1e-3).unwrap();
        let xs: Vec<f64> = curve.points.iter().map(|p| p[0]).collect();
        for w in xs.windows(3) {
            prop_assert!((w[0] - 2.0 * w[1] + w[2]).abs() <= 1e-10);
        }
    }
}

#[test]
fn midpoint_test_has_no_false_alarms_on_convex_profiles() {
    let spec = model("heisenberg-1");
    for text in ["x^2", "x^2+y^2", "(x - 0.3*y)^2"] {
        let f = resolved(&spec, text);
        let opts = ConvexityOptions { tol: Some(1e-9), ..quick(5) };
        let v = nconvexity_by_geodesics(&spec, &f, &opts).unwrap();
        assert_eq!(v.verdict, Verdict::Convex, "{text}: {v:?}");
        assert!(v.triples > 0);
    }
}

#[test]
fn witnesses_reproduce_their_violation() {
    for (name, text) in [
        ("heisenberg-1", "x^2-y^2"),
        ("heisenberg-1", "x*y"),
        ("heisenberg-1", "-x^4"),
        ("engel", "x1*x2"),
        ("perturbed-heisenberg", "-(x^2)"),
    ] {
        let spec = model(name);
        let f = resolved(&spec, text);
        for verdict in [nconvexity_by_hessian(&spec, &f, &quick(9)).unwrap(), nconvexity_by_geodesics(&spec, &f, &quick(9)).unwrap()] {
            assert_eq!(verdict.verdict, Verdict::NotConvex, "{name} {text}: {verdict:?}");
            let witness = verdict.witness.as_ref().expect("violations carry a witness");
            let reproduced = witness.reproduce(&spec, &f).unwrap();
            let (stored, violated) = match witness {
                Witness::Hessian { eigenvalue, .. } => (*eigenvalue, reproduced < -verdict.tol),
                Witness::Geodesic { excess, .. } => (*excess, reproduced > verdict.tol),
            };
            assert!(violated, "{name} {text}: reproduced {reproduced}, tol {}", verdict.tol);
            assert!((reproduced - stored).abs() <= 2.0 * verdict.tol, "{name} {text}: {reproduced} vs {stored}");
        }
    }
}

#[test]
fn routes_agree_on_reference_functions() {
    let cases = [
        ("heisenberg-1", ["x^2", "x^2+y^2", "t", "x^4", "x^2-y^2", "x*y"].as_slice()),
        ("engel", ["x1^2+x2^2", "x1*x2"].as_slice()),
    ];
    for (name, fs) in cases {
        let spec = model(name);
        for text in fs {
            let f = resolved(&spec, text);
            let h = nconvexity_by_hessian(&spec, &f, &quick(1)).unwrap().verdict;
            let g = nconvexity_by_geodesics(&spec, &f, &quick(1)).unwrap().verdict;
            assert_eq!(h, g, "{name} {text}");
            assert_ne!(h, Verdict::Inconclusive, "{name} {text}");
        }
    }
}
