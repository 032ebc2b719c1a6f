//! The acceptance suite: one check function per criterion, each reporting
//! per-model metrics against fixed thresholds.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::connection::{christoffels, horizontal_hessian};
use crate::connectivity::{
    ballbox_probe, commutator_flow, dc_lower, dh_upper, steer, BallBoxOptions, DhOptions, DistanceOptions, SteerOptions,
};
use crate::convexity::{lipschitz_estimate, lower_bound_check, nconvexity_by_geodesics, nconvexity_by_hessian, ConvexityOptions, Verdict};
use crate::error::Result;
use crate::expr::{add, mul, parse_expression, Expr};
use crate::geodesic::{geodesic_endpoint, geodesic_from_constraints, nonholonomic_geodesic, riemannian_geodesic, DEFAULT_STEP};
use crate::geometry::{bracket_field, MultiIndex};
use crate::models::{builtin, heisenberg_dc, heisenberg_plan};
use crate::rng;
use crate::structure::StructureSpec;

pub const CRITERIA: [(u8, &str); 13] = [
    (1, "carnot-flatness"),
    (2, "geodesic-exactness"),
    (3, "formulation-cross-check"),
    (4, "riemannian-coincidence"),
    (5, "commutator-flow"),
    (6, "steering"),
    (7, "distance-sandwich"),
    (8, "planner-dc-equals-dh"),
    (9, "ball-box"),
    (10, "convexity-equivalence"),
    (11, "lower-bound"),
    (12, "lipschitz"),
    (13, "determinism"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub model: String,
    pub passed: bool,
    pub metrics: BTreeMap<String, f64>,
    /// Human-readable summary of what was compared.
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub id: u8,
    pub name: String,
    pub status: Status,
    pub checks: Vec<Check>,
}

impl CriterionReport {
    /// One line: `[PASS] 6 steering: heisenberg-1 ok, engel ok`.
    pub fn summary(&self) -> String {
        let tag = match self.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skipped => "SKIP",
        };
        let parts: Vec<String> =
            self.checks.iter().map(|c| format!("{} {}", c.model, if c.passed { "ok" } else { "FAILED" })).collect();
        format!("[{tag}] {:>2} {}: {}", self.id, self.name, if parts.is_empty() { "not applicable".into() } else { parts.join(", ") })
    }
}

/// Which models the suite runs on.
pub enum Scope<'a> {
    /// Every model named in the criteria.
    All,
    /// A single structure; criteria that name other models are skipped.
    Model(&'a StructureSpec),
}

pub struct Suite<'a> {
    pub scope: Scope<'a>,
    pub seed: u64,
}

fn metrics(items: &[(&str, f64)]) -> BTreeMap<String, f64> {
    items.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn check(model: &str, passed: bool, items: &[(&str, f64)], note: impl Into<String>) -> Check {
    Check { model: model.to_string(), passed, metrics: metrics(items), note: note.into() }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn unit_vector<R: Rng>(g: &mut R, k: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..k).map(|_| g.gen_range(-1.0..=1.0)).collect();
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 1e-3 && n <= 1.0 {
            return v.iter().map(|a| a / n).collect();
        }
    }
}

fn ball_point<R: Rng>(g: &mut R, centre: &[f64], radius: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = centre.iter().map(|_| g.gen_range(-1.0..=1.0)).collect();
        if v.iter().map(|a| a * a).sum::<f64>() <= 1.0 {
            return v.iter().zip(centre).map(|(a, c)| c + radius * a).collect();
        }
    }
}

fn half_box_point(spec: &StructureSpec, seed: u64, index: u64) -> Vec<f64> {
    let u: Vec<f64> = rng::uniform_cube(seed, index, spec.dim(), 0.5).iter().map(|v| v + 0.5).collect();
    spec.domain.half().from_unit(&u)
}

/// `f` written with the chart coordinates of `spec`.
fn expr(text: &str) -> Expr {
    parse_expression(text).expect("suite expressions parse")
}

/// Least-squares slope of `log r` against `log t`.
fn loglog_slope(ts: &[f64], rs: &[f64]) -> f64 {
    let xs: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let ys: Vec<f64> = rs.iter().map(|r| r.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

impl Suite<'_> {
    /// Models this criterion runs on: the named ones, or the scoped model
    /// when it is one of them or the criterion applies to any structure.
    fn models(&self, named: &[&str], generic: bool) -> Result<Vec<StructureSpec>> {
        match &self.scope {
            Scope::All => named.iter().map(|n| builtin(n)).collect(),
            Scope::Model(spec) => {
                if generic || named.contains(&spec.name.as_str()) {
                    Ok(vec![(*spec).clone()])
                } else {
                    Ok(Vec::new())
                }
            }
        }
    }

    pub fn run(&self, id: u8) -> Result<CriterionReport> {
        let checks = match id {
            1 => self.carnot_flatness()?,
            2 => self.geodesic_exactness()?,
            3 => self.formulation_cross_check()?,
            4 => self.riemannian_coincidence()?,
            5 => self.commutator_flow()?,
            6 => self.steering()?,
            7 => self.distance_sandwich()?,
            8 => self.planner()?,
            9 => self.ball_box()?,
            10 => self.convexity_equivalence()?,
            11 => self.lower_bound()?,
            12 => self.lipschitz()?,
            13 => self.determinism()?,
            _ => return Err(crate::Error::InvalidInput(format!("no acceptance criterion {id}"))),
        };
        let name = CRITERIA[(id - 1) as usize].1.to_string();
        let status = if checks.is_empty() {
            Status::Skipped
        } else if checks.iter().all(|c| c.passed) {
            Status::Pass
        } else {
            Status::Fail
        };
        Ok(CriterionReport { id, name, status, checks })
    }

    pub fn run_all(&self) -> Result<Vec<CriterionReport>> {
        CRITERIA.iter().map(|(id, _)| self.run(*id)).collect()
    }

    fn carnot_flatness(&self) -> Result<Vec<Check>> {
        let mut out = Vec::new();
        for spec in self.models(&["heisenberg-1", "heisenberg-2", "engel"], false)? {
            let mut worst: f64 = 0.0;
            for i in 0..1000 {
                let u: Vec<f64> = rng::uniform_cube(self.seed, i, spec.dim(), 0.5).iter().map(|v| v + 0.5).collect();
                worst = worst.max(christoffels(&spec, &spec.domain.from_unit(&u))?.max_abs_horizontal());
            }
            out.push(check(&spec.name, worst <= 1e-12, &[("max_abs_christoffel", worst)], "max |Γ^r_ij| over 1000 points <= 1e-12"));
        }
        Ok(out)
    }

    fn geodesic_exactness(&self) -> Result<Vec<Check>> {
        let mut out = Vec::new();
        for spec in self.models(&["heisenberg-1"], false)? {
            let r2 = std::f64::consts::FRAC_1_SQRT_2;
            let cases: [(&[f64], &[f64], f64, &[f64]); 3] = [
                (&[0.0, 0.0, 0.0], &[1.0, 0.0], 1.0, &[1.0, 0.0, 0.0]),
                (&[0.0, 1.0, 0.0], &[1.0, 0.0], 1.0, &[1.0, 1.0, 0.5]),
                (&[0.0, 0.0, 0.0], &[r2, r2], 2f64.sqrt(), &[1.0, 1.0, 0.0]),
            ];
            let mut endpoint_err: f64 = 0.0;
            let mut drift: f64 = 0.0;
            for (x0, v0, t, want) in cases {
                let c = nonholonomic_geodesic(&spec, x0, v0, t, DEFAULT_STEP)?;
                endpoint_err = endpoint_err.max(dist(c.endpoint(), want));
                drift = drift.max(c.speed_drift());
            }
            let mut homog: f64 = 0.0;
            for i in 0..20u64 {
                let mut g = rng::stream(self.seed, i);
                let x0 = half_box_point(&spec, self.seed ^ 0x2, i);
                let v: Vec<f64> = unit_vector(&mut g, spec.rank()).iter().map(|a| a * g.gen_range(0.5..1.5)).collect();
                let c = nonholonomic_geodesic(&spec, &x0, &v, 2.0, DEFAULT_STEP)?;
                drift = drift.max(c.speed_drift());
                let v2: Vec<f64> = v.iter().map(|a| 2.0 * a).collect();
                let a = geodesic_endpoint(&spec, &x0, &v2, 0.5, DEFAULT_STEP)?.0;
                let b = geodesic_endpoint(&spec, &x0, &v, 1.0, DEFAULT_STEP)?.0;
                homog = homog.max(dist(&a, &b));
            }
            let ok = endpoint_err <= 1e-8 && drift <= 1e-9 && homog <= 1e-8;
            out.push(check(
                &spec.name,
                ok,
                &[("endpoint_error", endpoint_err), ("speed_drift", drift), ("homogeneity_error", homog)],
                "closed-form endpoints <= 1e-8, speed drift <= 1e-9, |γ_2v(0.5) − γ_v(1)| <= 1e-8",
            ));
        }
        Ok(out)
    }

    fn formulation_cross_check(&self) -> Result<Vec<Check>> {
        let mut out = Vec::new();
        for spec in self.models(&["heisenberg-1", "perturbed-heisenberg"], true)? {
            let mut worst: f64 = 0.0;
            for i in 0..20u64 {
                let x0 = half_box_point(&spec, self.seed ^ 0x3, i);
                let v0 = unit_vector(&mut rng::stream(self.seed ^ 0x3, 1000 + i), spec.rank());
                let a = nonholonomic_geodesic(&spec, &x0, &v0, 0.5, DEFAULT_STEP)?;
                let b = geodesic_from_constraints(&spec, &x0, &v0, 0.5, DEFAULT_STEP)?;
                for (p, q) in a.points.iter().zip(&b.points) {
                    worst = worst.max(dist(p, q));
                }
                if a.len() != b.len() {
                    worst = f64::INFINITY;
                }
            }
            out.push(check(&spec.name, worst <= 1e-6, &[("max_deviation", worst)], "frame ODE vs constraint form, 20 runs, T = 0.5, <= 1e-6"));
        }
        Ok(out)
    }

    fn riemannian_coincidence(&self) -> Result<Vec<Check>> {
        let mut out = Vec::new();
        for spec in self.models(&["heisenberg-1", "engel"], false)? {
            let mut worst: f64 = 0.0;
            for i in 0..20u64 {
                let x0 = half_box_point(&spec, self.seed ^ 0x4, i);
                let v0 = unit_vector(&mut rng::stream(self.seed ^ 0x4, 1000 + i), spec.rank());
                let mut w0 = v0.clone();
                w0.resize(spec.dim(), 0.0);
                let a = nonholonomic_geodesic(&spec, &x0, &v0, 1.0, DEFAULT_STEP)?;
                let b = riemannian_geodesic(&spec, &x0, &w0, 1.0, DEFAULT_STEP)?;
                for (p, q) in a.points.iter().zip(&b.points) {
                    worst = worst.max(dist(p, q));
                }
            }
            out.push(check(&spec.name, worst <= 1e-8, &[("max_deviation", worst)], "nonholonomic vs Riemannian geodesic from horizontal data <= 1e-8"));
        }
        Ok(out)
    }

    fn commutator_flow(&self) -> Result<Vec<Check>> {
        let mut out = Vec::new();
        let ts = [0.2, 0.1, 0.05, 0.025];
        // remainder of Ψ_I(t)(p) − p − t^r E_I(p)
        let slope = |spec: &StructureSpec, index: &MultiIndex, p: &[f64]| -> Result<(f64, f64)> {
            let e = bracket_field(spec, index).eval(p)?;
            let w = index.weight() as i32;
            let mut rs = Vec::new();
            for &t in &ts {
                let (end, _) = commutator_flow(spec, index, t, p, DEFAULT_STEP)?;
                let r: Vec<f64> = end.iter().zip(p).zip(&e).map(|((a, b), c)| a - b - t.powi(w) * c).collect();
                rs.push(r.iter().map(|x| x * x).sum::<f64>().sqrt());
            }
            let largest = rs.iter().copied().fold(0.0, f64::max);
            // an identically vanishing remainder has no slope
            Ok(if largest <= 1e-13 { (f64::INFINITY, largest) } else { (loglog_slope(&ts, &rs), largest) })
        };
        for spec in self.models(&["heisenberg-1", "engel"], false)? {
            let c = if spec.name == "engel" {
                let p = [0.3, -0.2, 0.1, 0.05];
                let (s2, r2) = slope(&spec, &MultiIndex(vec![0, 1]), &p)?;
                let (s3, r3) = slope(&spec, &MultiIndex(vec![0, 0, 1]), &p)?;
                check(
                    &spec.name,
                    s2 >= 2.8 && s3 >= 3.8,
                    &[("slope_weight2", s2), ("slope_weight3", s3), ("max_remainder_weight2", r2), ("max_remainder_weight3", r3)],
                    "remainder slopes >= 2.8 (weight 2) and >= 3.8 (weight 3); infinite means the remainder vanishes",
                )
            } else {
                let (end, _) = commutator_flow(&spec, &MultiIndex(vec![0, 1]), 0.1, &[0.0; 3], DEFAULT_STEP)?;
                let err = dist(&end, &[0.0, 0.0, -0.01]);
                let (s2, r2) = slope(&spec, &MultiIndex(vec![0, 1]), &[0.3, -0.2, 0.1])?;
                check(
                    &spec.name,
                    err <= 1e-9 && s2 >= 2.8,
                    &[("endpoint_error", err), ("slope_weight2", s2), ("max_remainder_weight2", r2)],
                    "Ψ_(1,2)(0.1)(0) = (0,0,−0.01) <= 1e-9; remainder slope >= 2.8; infinite means the remainder vanishes",
                )
            };
            out.push(c);
        }
        Ok(out)
    }

    fn steering(&self) -> Result<Vec<Check>> {
        let mut out = Vec::new();
        let opts = SteerOptions::default();
        for spec in self.models(&["heisenberg-1", "engel"], true)? {
            let p = spec.domain.center();
            let mut ok = 0;
            let mut worst_res: f64 = 0.0;
            let mut worst_iters = 0;
            let mut multi_hop = 0;
            for i in 0..100u64 {
                let q = half_box_point(&spec, self.seed ^ 0x6, i);
                let st = steer(&spec, &p, &q, &opts)?;
                worst_res = worst_res.max(st.residual);
                worst_iters = worst_iters.max(st.max_hop_iterations);
                if st.hops() > 1 {
                    multi_hop += 1;
                }
                if st.converged && st.residual <= 1e-6 && st.max_hop_iterations <= 50 {
                    ok += 1;
                }
            }
            out.push(check(
                &spec.name,
                ok == 100,
                &[
                    ("converged", ok as f64),
                    ("max_residual", worst_res),
                    ("max_newton_iterations", worst_iters as f64),
                    ("multi_hop_plans", multi_hop as f64),
                ],
                "100/100 half-box targets to residual <= 1e-6, each inversion within 50 Newton iterations",
            ));
        }
        Ok(out)
    }

    fn distance_sandwich(&self) -> Result<Vec<Check>> {
        let mut out = Vec::new();
        for spec in self.models(&["heisenberg-1"], false)? {
            let opts = DhOptions { seed: self.seed, restarts: 2, ..DhOptions::default() };
            let mut ratios = Vec::new();
            let mut lower_ok = true;
            for i in 0..50u64 {
                let mut g = rng::stream(self.seed ^ 0x7, i);
                let a = ball_point(&mut g, &[0.0; 3], 0.2);
                let b = ball_point(&mut g, &[0.0; 3], 0.2);
                let up = dh_upper(&spec, &a, &b, &opts)?.length;
                let lo = dc_lower(&spec, &a, &b)?;
                lower_ok &= lo <= up;
                ratios.push(up / heisenberg_dc(&a, &b, 1e-12)?);
            }
            ratios.sort_by(f64::total_cmp);
            let (min, max) = (ratios[0], ratios[ratios.len() - 1]);
            let median = 0.5 * (ratios[24] + ratios[25]);
            let ok = lower_ok && min >= 1.0 - 1e-3 && max <= 3.0 && median <= 1.2;
            out.push(check(
                &spec.name,
                ok,
                &[("lower_below_upper", if lower_ok { 1.0 } else { 0.0 }), ("min_ratio", min), ("max_ratio", max), ("median_ratio", median)],
                "50 pairs in B(0,0.2): dc_lower <= dh_upper, dh_upper/d_c in [1-1e-3, 3], median <= 1.2",
            ));
        }
        Ok(out)
    }

    fn planner(&self) -> Result<Vec<Check>> {
        let mut out = Vec::new();
        for spec in self.models(&["heisenberg-1"], false)? {
            let (p, q) = ([0.0; 3], [0.0, 0.0, 1.0]);
            let oracle = 2.0 * std::f64::consts::PI.sqrt();
            let r16 = heisenberg_plan(&p, &q, 16)?.length() / oracle;
            let r32 = heisenberg_plan(&p, &q, 32)?.length() / oracle;
            let dh4 = dh_upper(&spec, &p, &q, &DhOptions { budget: 4, seed: self.seed, ..DhOptions::default() })?.length;
            out.push(check(
                &spec.name,
                r16 <= 1.007 && r32 <= 1.001 && dh4 <= 4.01,
                &[("ratio_ngon16", r16), ("ratio_ngon32", r32), ("dh_upper_budget4", dh4)],
                "planner/2√π <= 1.007 (n=16), <= 1.001 (n=32); dh_upper budget 4 <= 4.01 for q = (0,0,1)",
            ));
        }
        Ok(out)
    }

    fn ball_box(&self) -> Result<Vec<Check>> {
        let mut out = Vec::new();
        for spec in self.models(&["heisenberg-1", "engel"], true)? {
            let eps = if spec.name == "heisenberg-1" { 0.2 } else { 0.1 };
            let opts = BallBoxOptions { seed: self.seed, ..BallBoxOptions::default() };
            let r = ballbox_probe(&spec, &spec.domain.center(), eps, &opts)?;
            out.push(check(
                &spec.name,
                r.violations_a == 0,
                &[
                    ("eps", eps),
                    ("violations_a", r.violations_a as f64),
                    ("misses_b", r.misses_b as f64),
                    ("c_hat", r.c_hat),
                    ("big_c_hat", r.big_c_hat),
                ],
                "0 violations of F(Box(ε/N)) ⊂ ball(ε) over 200 samples",
            ));
        }
        Ok(out)
    }

    fn convexity_equivalence(&self) -> Result<Vec<Check>> {
        let mut out = Vec::new();
        let opts = ConvexityOptions { seed: self.seed, ..ConvexityOptions::default() };
        for spec in self.models(&["heisenberg-1", "engel"], false)? {
            let fs: &[&str] = if spec.name == "engel" { &["x1^2+x2^2", "x1*x2"] } else { &["x^2", "x^2+y^2", "t", "x^4", "x^2-y^2", "x*y"] };
            let mut agree = 0;
            let mut verdicts = Vec::new();
            for f in fs {
                let e = expr(f);
                let a = nconvexity_by_hessian(&spec, &e, &opts)?.verdict;
                let b = nconvexity_by_geodesics(&spec, &e, &opts)?.verdict;
                if a == b && a != Verdict::Inconclusive {
                    agree += 1;
                }
                verdicts.push((a, b));
            }
            // symmetrized second frame derivatives, built symbolically
            let mut identity: f64 = 0.0;
            let k = spec.rank();
            for (n, f) in fs.iter().enumerate() {
                let e = expr(f).resolve(&spec.coords);
                let first: Vec<Expr> = spec.horizontal.iter().map(|x| x.apply(&e)).collect();
                for s in 0..20u64 {
                    let p = half_box_point(&spec, self.seed ^ 0xa, 100 * n as u64 + s);
                    let h = horizontal_hessian(&spec, &e, &p)?;
                    for i in 0..k {
                        for j in 0..k {
                            let sym = mul(Expr::num(0.5), add(spec.horizontal[i].apply(&first[j]), spec.horizontal[j].apply(&first[i])));
                            identity = identity.max((h.matrix[i][j] - sym.eval(&p)?).abs());
                        }
                    }
                }
            }
            let ok = agree == fs.len() && identity <= 1e-10;
            out.push(check(
                &spec.name,
                ok,
                &[("functions", fs.len() as f64), ("agreeing_verdicts", agree as f64), ("symmetrized_identity_error", identity)],
                format!("Hessian and geodesic verdicts agree on {}; Hess^H = ½(X_iX_j f + X_jX_i f) <= 1e-10", fs.join(", ")),
            ));
        }
        Ok(out)
    }

    fn lower_bound(&self) -> Result<Vec<Check>> {
        let mut out = Vec::new();
        for spec in self.models(&["heisenberg-1"], false)? {
            let mut total = 0;
            let mut min_slack = f64::INFINITY;
            for f in ["x^2+y^2", "x", "t"] {
                let r = lower_bound_check(&spec, &expr(f), &[0.0; 3], 0.2, None, 500, self.seed, DEFAULT_STEP)?;
                total += r.violations;
                min_slack = min_slack.min(r.min_slack);
            }
            out.push(check(
                &spec.name,
                total == 0,
                &[("violations", total as f64), ("min_slack", min_slack)],
                "f(p) >= 2^N f(y0) − (2^N − 1)C at 500 points within 0.2 for x^2+y^2, x, t",
            ));
        }
        Ok(out)
    }

    fn lipschitz(&self) -> Result<Vec<Check>> {
        let mut out = Vec::new();
        for spec in self.models(&["heisenberg-1"], false)? {
            let d = DistanceOptions { seed: self.seed, ..DistanceOptions::default() };
            let x = lipschitz_estimate(&spec, &expr("x"), &[0.0; 3], 0.3, 200, &d)?;
            let mut finite = true;
            let mut others: f64 = 0.0;
            for f in ["t", "x^2+y^2", "x*y"] {
                let r = lipschitz_estimate(&spec, &expr(f), &[0.0; 3], 0.3, 50, &d)?;
                finite &= r.sup_quotient.is_finite();
                others = others.max(r.sup_quotient);
            }
            out.push(check(
                &spec.name,
                x.sup_quotient <= 1.01 && finite,
                &[("sup_quotient_x", x.sup_quotient), ("pairs_x", x.pairs as f64), ("max_sup_quotient_others", others)],
                "sup |Δx|/d̂ over 200 pairs in B(0,0.3) <= 1.01; t, x^2+y^2, x*y give finite quotients",
            ));
        }
        Ok(out)
    }

    /// Two in-process runs of a seeded sample serialize identically.
    fn determinism(&self) -> Result<Vec<Check>> {
        let mut out = Vec::new();
        for spec in self.models(&["heisenberg-1"], true)? {
            let run = || -> Result<String> {
                let p = spec.domain.center();
                let mut parts = Vec::new();
                for i in 0..3u64 {
                    let q = half_box_point(&spec, self.seed ^ 0xd, i);
                    parts.push(serde_json::to_string(&steer(&spec, &p, &q, &SteerOptions::default())?.plan)?);
                }
                let c = ConvexityOptions { samples: 20, geodesics: 10, seed: self.seed, ..ConvexityOptions::default() };
                let f = expr(if spec.coords.len() == 3 && spec.coords[0] == "x" { "x*y" } else { "0" }).resolve(&spec.coords);
                parts.push(serde_json::to_string(&nconvexity_by_geodesics(&spec, &f, &c)?)?);
                Ok(parts.join("\n"))
            };
            let (a, b) = (run()?, run()?);
            out.push(check(&spec.name, a == b, &[("bytes", a.len() as f64)], "repeated seeded run is byte-identical"));
        }
        Ok(out)
    }
}
