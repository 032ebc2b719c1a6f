use proptest::prelude::*;
use subriemann::expr::{self, Expr, Func};
use subriemann::parse_expression;

const NAMES: [&str; 3] = ["x", "y", "t"];

fn coords() -> Vec<String> {
    NAMES.iter().map(|s| s.to_string()).collect()
}

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        (-3.0..3.0f64).prop_map(Expr::num),
        (0..3usize).prop_map(|i| Expr::coord(NAMES[i], i)),
    ]
}

/// Trees of depth at most 6 over + − × ^ sin cos exp, plus division by
/// `2 + u²` so evaluation never hits a pole.
fn tree() -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(6, 64, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(|a| Expr::Neg(Box::new(a))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Add(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Sub(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Mul(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| {
                let den = Expr::Add(Box::new(Expr::num(2.0)), Box::new(Expr::Pow(Box::new(b), 2)));
                Expr::Div(Box::new(a), Box::new(den))
            }),
            (inner.clone(), 0..4i32).prop_map(|(a, n)| Expr::Pow(Box::new(a), n)),
            inner.clone().prop_map(|a| Expr::Call(Func::Sin, Box::new(a))),
            inner.clone().prop_map(|a| Expr::Call(Func::Cos, Box::new(a))),
            inner.prop_map(|a| Expr::Call(Func::Exp, Box::new(expr::mul(Expr::num(0.1), a)))),
        ]
    })
}

fn points(seed: u64, n: usize) -> Vec<Vec<f64>> {
    (0..n as u64).map(|i| subriemann::rng::uniform_cube(seed, i, 3, 1.0)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn printed_trees_reparse_to_equal_values(e in tree(), seed in any::<u64>()) {
        let back = parse_expression(&e.to_string()).unwrap().resolve(&coords());
        for p in points(seed, 100) {
            let (a, b) = (e.eval(&p), back.eval(&p));
            match (a, b) {
                (Ok(a), Ok(b)) => prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "{a} vs {b} for {e}"),
                (a, b) => prop_assert_eq!(a.is_err(), b.is_err()),
            }
        }
    }

    #[test]
    fn symbolic_derivative_matches_central_difference(e in tree(), seed in any::<u64>(), var in 0..3usize) {
        let d = e.derivative(var);
        let h = 1e-5;
        for p in points(seed, 10) {
            let mut lo = p.clone();
            let mut hi = p.clone();
            lo[var] -= h;
            hi[var] += h;
            let (Ok(fl), Ok(fh), Ok(v), Ok(dv)) = (e.eval(&lo), e.eval(&hi), e.eval(&p), d.eval(&p)) else { continue };
            let fd = (fh - fl) / (2.0 * h);
            // central-difference truncation plus rounding, relative to the size of f
            prop_assert!((dv - fd).abs() <= 1e-6 * (1.0 + v.abs()), "{dv} vs {fd} for {e}");
        }
    }
}
