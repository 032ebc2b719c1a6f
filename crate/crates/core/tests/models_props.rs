mod common;

use std::f64::consts::PI;

use common::*;
use proptest::prelude::*;
use subriemann::connectivity::BrokenGeodesic;
use subriemann::geodesic::geodesic_endpoint;
use subriemann::models::{carnot_dilate, heisenberg_dc, heisenberg_lift, heisenberg_plan, PlanarPolyline};

/// Perimeter of the regular n-gon of area π relative to the circle's, 2√π.
fn ngon_ratio(n: usize) -> f64 {
    let n = n as f64;
    (n * (PI / n).tan() / PI).sqrt()
}

#[test]
fn planner_ratio_follows_the_regular_polygon() {
    let origin = [0.0, 0.0, 0.0];
    let oracle = heisenberg_dc(&origin, &[0.0, 0.0, 1.0], 1e-14).unwrap();
    assert!((oracle - 2.0 * PI.sqrt()).abs() <= 1e-12);
    for n in [3, 4, 6, 8, 16, 32, 64] {
        let plan = heisenberg_plan(&origin, &[0.0, 0.0, 1.0], n).unwrap();
        let ratio = plan.length() / oracle;
        assert!((ratio - ngon_ratio(n)).abs() <= 1e-12, "n={n}: {ratio} vs {}", ngon_ratio(n));
        assert!(max_abs_diff(plan.endpoint(), &[0.0, 0.0, 1.0]) <= 1e-12);
    }
    assert!(ngon_ratio(16) <= 1.007);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn lifted_polylines_match_integrated_geodesics(
        n in prop::sample::select(vec![1usize, 2]),
        verts in proptest::collection::vec(proptest::collection::vec(-0.6..0.6f64, 4), 2..6),
        t0 in -0.5..0.5f64,
    ) {
        let spec = model(&format!("heisenberg-{n}"));
        let verts: Vec<Vec<f64>> = verts.iter().map(|v| v[..2 * n].to_vec()).collect();
        prop_assume!(verts.windows(2).all(|w| max_abs_diff(&w[0], &w[1]) > 1e-3));
        let poly = PlanarPolyline::new(verts.clone()).unwrap();
        let mut start = verts[0].clone();
        start.push(t0);
        let lift = heisenberg_lift(&poly, &start).unwrap();
        let integrated = BrokenGeodesic::integrate(&spec, &start, lift.segments.clone(), 1e-3).unwrap();
        for (a, b) in lift.breaks.iter().zip(&integrated.breaks) {
            prop_assert!(max_abs_diff(a, b) <= 1e-7, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn exact_distance_is_dilation_homogeneous(p in unit_cube(3), q in unit_cube(3), lambda in 0.2..3.0f64) {
        let spec = model("heisenberg-1");
        let (p, q) = (inner_point(&spec, &p, 0.5), inner_point(&spec, &q, 0.5));
        let d = heisenberg_dc(&p, &q, 1e-14).unwrap();
        let dp = carnot_dilate(&spec, lambda, &p).unwrap();
        let dq = carnot_dilate(&spec, lambda, &q).unwrap();
        let scaled = heisenberg_dc(&dp, &dq, 1e-14).unwrap();
        prop_assert!((scaled - lambda * d).abs() <= 1e-9, "{scaled} vs {}", lambda * d);
    }

    #[test]
    fn straight_geodesics_realise_the_distance(
        at in unit_cube(3), theta in 0.0..(2.0 * PI), a in -0.8..0.8f64, b in -0.8..0.8f64,
    ) {
        let spec = model("heisenberg-1");
        let x0 = inner_point(&spec, &at, 0.25);
        let v = [theta.cos(), theta.sin()];
        let at_time = |s: f64| if s == 0.0 { x0.clone() } else { geodesic_endpoint(&spec, &x0, &v, s, 1e-3).unwrap().0 };
        let d = heisenberg_dc(&at_time(a), &at_time(b), 1e-14).unwrap();
        prop_assert!((d - (b - a).abs()).abs() <= 1e-9, "{d} vs {}", (b - a).abs());
    }
}
