//! n-convexity by two routes (horizontal Hessian and midpoint convexity
//! along nonholonomic geodesics), the 2^N lower bound for n-convex functions
//! bounded above, and empirical Lipschitz quotients.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::connection::{hessian_matrix, ScalarField};
use crate::connectivity::{adapted_frame, estimate_distance, f_map_with_frame, leg_count, segment_count, DistanceOptions};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::geodesic::{geodesic_endpoint, nonholonomic_geodesic, DEFAULT_STEP};
use crate::geometry::DEFAULT_RANK_TOL;
use crate::rng;
use crate::structure::StructureSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Convex,
    NotConvex,
    Inconclusive,
}

/// Data needed to reproduce a convexity violation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Witness {
    /// `Hess^H f(point)` has eigenvalue `eigenvalue` along `direction` (frame coefficients).
    Hessian { point: Vec<f64>, direction: Vec<f64>, eigenvalue: f64 },
    /// Along the geodesic from `start` with frame velocity `velocity`,
    /// `f(γ(t2)) − ½f(γ(t1)) − ½f(γ(t3)) = excess` with `t2` the midpoint.
    Geodesic { start: Vec<f64>, velocity: Vec<f64>, times: [f64; 3], step: f64, values: [f64; 3], excess: f64 },
}

impl Witness {
    /// Recomputes the violation: the eigenvalue (Hessian witness, via the
    /// Rayleigh quotient of the stored direction) or the midpoint excess.
    pub fn reproduce(&self, spec: &StructureSpec, f: &Expr) -> Result<f64> {
        let sf = ScalarField::new(spec, f)?;
        match self {
            Witness::Hessian { point, direction, .. } => {
                let h = hessian_matrix(spec, &sf, point)?;
                let v = DVector::from_column_slice(direction);
                Ok((v.transpose() * h * &v)[(0, 0)] / v.norm_squared())
            }
            Witness::Geodesic { start, velocity, times, step, .. } => {
                let mut vals = [0.0; 3];
                for (v, &t) in vals.iter_mut().zip(times) {
                    let x = if t == 0.0 { start.clone() } else { geodesic_endpoint(spec, start, velocity, t, *step)?.0 };
                    *v = sf.value(&x)?;
                }
                Ok(vals[1] - 0.5 * (vals[0] + vals[2]))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Route {
    Hessian,
    Geodesic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityVerdict {
    pub route: Route,
    pub verdict: Verdict,
    pub witness: Option<Witness>,
    /// Hessian route: smallest eigenvalue seen. Geodesic route: smallest
    /// midpoint slack `½f(γ(t1)) + ½f(γ(t3)) − f(γ(t2))`.
    pub min_observed: f64,
    /// Points (Hessian) or geodesics (geodesic route) that were evaluated.
    pub samples: usize,
    /// Midpoint triples tested (zero for the Hessian route).
    pub triples: usize,
    /// Samples skipped because `f` or the frame could not be evaluated.
    pub skipped: usize,
    pub tol: f64,
    /// Largest `|f|` seen, used to scale the default tolerance.
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityOptions {
    /// Points for the Hessian route.
    pub samples: usize,
    pub geodesics: usize,
    pub points_per_geodesic: usize,
    /// Each geodesic is integrated over `[−span, span]`, clipped to the domain.
    pub span: f64,
    pub step: f64,
    /// Absolute tolerance; `None` uses `1e−8(1 + scale)` for eigenvalues and
    /// `1e−7(1 + scale)` for midpoint triples.
    pub tol: Option<f64>,
    pub seed: u64,
}

impl Default for ConvexityOptions {
    fn default() -> Self {
        ConvexityOptions {
            samples: 200,
            geodesics: 200,
            points_per_geodesic: 21,
            span: 2.0,
            step: DEFAULT_STEP,
            tol: None,
            seed: rng::DEFAULT_SEED,
        }
    }
}

fn domain_sample(spec: &StructureSpec, seed: u64, index: u64) -> Vec<f64> {
    let u: Vec<f64> = rng::uniform_cube(seed, index, spec.dim(), 0.5).iter().map(|v| v + 0.5).collect();
    spec.domain.from_unit(&u)
}

/// Uniform unit vector in `R^k` by rejection from the cube.
fn unit_direction<R: Rng>(g: &mut R, k: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..k).map(|_| g.gen_range(-1.0..=1.0)).collect();
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 1e-3 && n <= 1.0 {
            return v.iter().map(|a| a / n).collect();
        }
    }
}

/// Sign convention for eigenvectors: largest entry positive.
fn canonical_sign(mut v: Vec<f64>) -> Vec<f64> {
    let big = v.iter().copied().fold(0.0, |a: f64, b| if b.abs() > a.abs() { b } else { a });
    if big < 0.0 {
        v.iter_mut().for_each(|a| *a = -*a);
    }
    v
}

/// Smallest eigenvalue of `Hess^H f` over sampled domain points.
pub fn nconvexity_by_hessian(spec: &StructureSpec, f: &Expr, opts: &ConvexityOptions) -> Result<ConvexityVerdict> {
    let sf = ScalarField::new(spec, f)?;
    let mut scale: f64 = 0.0;
    let mut worst: Option<(f64, Vec<f64>, Vec<f64>)> = None;
    let mut samples = 0;
    let mut skipped = 0;
    for i in 0..opts.samples {
        let p = domain_sample(spec, opts.seed, i as u64);
        let (value, h) = match (sf.value(&p), hessian_matrix(spec, &sf, &p)) {
            (Ok(v), Ok(h)) => (v, h),
            _ => {
                skipped += 1;
                continue;
            }
        };
        samples += 1;
        scale = scale.max(value.abs());
        let eig = h.symmetric_eigen();
        let (idx, &lambda) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("rank is at least one");
        if worst.as_ref().is_none_or(|w| lambda < w.0) {
            let dir = canonical_sign(eig.eigenvectors.column(idx).iter().copied().collect());
            worst = Some((lambda, p, dir));
        }
    }
    let tol = opts.tol.unwrap_or(1e-8 * (1.0 + scale));
    let Some((lambda, point, direction)) = worst else {
        return Ok(ConvexityVerdict {
            route: Route::Hessian,
            verdict: Verdict::Inconclusive,
            witness: None,
            min_observed: f64::NAN,
            samples,
            triples: 0,
            skipped,
            tol,
            scale,
        });
    };
    let convex = lambda >= -tol;
    Ok(ConvexityVerdict {
        route: Route::Hessian,
        verdict: if convex { Verdict::Convex } else { Verdict::NotConvex },
        witness: (!convex).then_some(Witness::Hessian { point, direction, eigenvalue: lambda }),
        min_observed: lambda,
        samples,
        triples: 0,
        skipped,
        tol,
        scale,
    })
}

struct Sampled {
    start: Vec<f64>,
    velocity: Vec<f64>,
    /// `(time, f)` on a uniform grid, in increasing time.
    values: Vec<(f64, f64)>,
}

fn sample_geodesic(spec: &StructureSpec, sf: &ScalarField, x0: Vec<f64>, v0: Vec<f64>, opts: &ConvexityOptions) -> Result<Sampled> {
    let back = nonholonomic_geodesic(spec, &x0, &v0, -opts.span, opts.step)?;
    let fwd = nonholonomic_geodesic(spec, &x0, &v0, opts.span, opts.step)?;
    // both runs share the grid spacing span / ceil(span / step)
    let mut pts: Vec<(f64, &[f64])> = back.times.iter().zip(&back.points).rev().map(|(t, p)| (*t, p.as_slice())).collect();
    pts.pop();
    pts.extend(fwd.times.iter().zip(&fwd.points).map(|(t, p)| (*t, p.as_slice())));
    let n = opts.points_per_geodesic.max(3);
    let stride = ((pts.len() - 1) / (n - 1)).max(1);
    let centre = back.times.len() - 1;
    // keep t = 0 on the subgrid
    let first = centre % stride;
    let mut values = Vec::new();
    for &(t, p) in pts.iter().skip(first).step_by(stride) {
        values.push((t, sf.value(p)?));
    }
    Ok(Sampled { start: x0, velocity: v0, values })
}

/// Midpoint convexity of `f` along sampled nonholonomic geodesics.
pub fn nconvexity_by_geodesics(spec: &StructureSpec, f: &Expr, opts: &ConvexityOptions) -> Result<ConvexityVerdict> {
    if !(opts.span > 0.0) || !(opts.step > 0.0) {
        return Err(Error::InvalidInput("span and step must be positive".into()));
    }
    let sf = ScalarField::new(spec, f)?;
    let k = spec.rank();
    let mut runs = Vec::new();
    let mut skipped = 0;
    for i in 0..opts.geodesics {
        let x0 = domain_sample(spec, opts.seed, 2 * i as u64);
        let v0 = unit_direction(&mut rng::stream(opts.seed, 2 * i as u64 + 1), k);
        match sample_geodesic(spec, &sf, x0, v0, opts) {
            Ok(s) => runs.push(s),
            Err(_) => skipped += 1,
        }
    }
    let scale = runs.iter().flat_map(|r| r.values.iter().map(|v| v.1.abs())).fold(0.0, f64::max);
    let tol = opts.tol.unwrap_or(1e-7 * (1.0 + scale));
    let mut triples = 0;
    let mut worst: Option<(f64, usize, [usize; 3])> = None;
    for (g, run) in runs.iter().enumerate() {
        let n = run.values.len();
        for a in 0..n {
            for c in (a + 2..n).step_by(2) {
                let b = (a + c) / 2;
                triples += 1;
                let slack = 0.5 * (run.values[a].1 + run.values[c].1) - run.values[b].1;
                if worst.is_none_or(|w| slack < w.0) {
                    worst = Some((slack, g, [a, b, c]));
                }
            }
        }
    }
    let Some((slack, g, idx)) = worst else {
        return Ok(ConvexityVerdict {
            route: Route::Geodesic,
            verdict: Verdict::Inconclusive,
            witness: None,
            min_observed: f64::NAN,
            samples: runs.len(),
            triples,
            skipped,
            tol,
            scale,
        });
    };
    let convex = slack >= -tol;
    let run = &runs[g];
    let witness = (!convex).then(|| Witness::Geodesic {
        start: run.start.clone(),
        velocity: run.velocity.clone(),
        times: idx.map(|i| run.values[i].0),
        step: opts.step,
        values: idx.map(|i| run.values[i].1),
        excess: -slack,
    });
    Ok(ConvexityVerdict {
        route: Route::Geodesic,
        verdict: if convex { Verdict::Convex } else { Verdict::NotConvex },
        witness,
        min_observed: slack,
        samples: runs.len(),
        triples,
        skipped,
        tol,
        scale,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundSample {
    pub point: Vec<f64>,
    /// Length of the broken geodesic from `y0`, an upper bound on `d_H(y0, point)`.
    pub distance: f64,
    pub value: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundReport {
    pub y0: Vec<f64>,
    pub radius: f64,
    /// Segment count `N` in the bound, from the nominal leg counts `3·2^{r−1} − 1`.
    pub nominal_n: usize,
    pub actual_n: usize,
    /// Upper bound `C` of `f` on the probe neighbourhood.
    pub c: f64,
    /// `true` when `C` is the sampled supremum rather than supplied.
    pub c_sampled: bool,
    /// `2^N f(y0) − (2^N − 1) C`.
    pub bound: f64,
    pub violations: usize,
    /// Smallest `f(p) − bound` over the samples.
    pub min_slack: f64,
    pub samples: Vec<LowerBoundSample>,
}

/// Checks `f(p) ≥ 2^N f(y0) − (2^N − 1) C` at points `p = F^{y0}(t)`.
///
/// Parameters are drawn from the cube of half-width `radius / L`, where `L`
/// is the total number of legs, so every broken geodesic from `y0` has length
/// at most `radius`.
pub fn lower_bound_check(
    spec: &StructureSpec,
    f: &Expr,
    y0: &[f64],
    radius: f64,
    c: Option<f64>,
    samples: usize,
    seed: u64,
    step: f64,
) -> Result<LowerBoundReport> {
    if !(radius >= 0.0) {
        return Err(Error::InvalidInput("radius must be non-negative".into()));
    }
    let sf = ScalarField::new(spec, f)?;
    let frame = adapted_frame(spec, y0, DEFAULT_RANK_TOL)?;
    let (nominal_n, actual_n) = segment_count(&frame.growth_vector(DEFAULT_RANK_TOL));
    let legs: usize = frame.weights.iter().map(|&w| leg_count(w)).sum();
    let half = radius / legs as f64;
    let m = spec.dim();
    let f0 = sf.value(y0)?;
    let mut pts = Vec::with_capacity(samples);
    for i in 0..samples {
        let t = rng::uniform_cube(seed, i as u64, m, half);
        let (end, plan) = f_map_with_frame(spec, &frame, &t, step)?;
        let value = sf.value(&end)?;
        pts.push(LowerBoundSample { point: end, distance: plan.length(), value, ok: true });
    }
    let c_sampled = c.is_none();
    let c = c.unwrap_or_else(|| pts.iter().map(|s| s.value).fold(f0, f64::max));
    let two_n = 2f64.powi(nominal_n as i32);
    let bound = two_n * f0 - (two_n - 1.0) * c;
    let tol = 1e-9 * two_n * (1.0 + f0.abs() + c.abs());
    let mut violations = 0;
    let mut min_slack = f64::INFINITY;
    for s in &mut pts {
        let slack = s.value - bound;
        min_slack = min_slack.min(slack);
        s.ok = slack >= -tol;
        if !s.ok {
            violations += 1;
        }
    }
    Ok(LowerBoundReport { y0: y0.to_vec(), radius, nominal_n, actual_n, c, c_sampled, bound, violations, min_slack, samples: pts })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzReport {
    pub sup_quotient: f64,
    /// Pair attaining the supremum.
    pub argmax: Option<(Vec<f64>, Vec<f64>)>,
    pub pairs: usize,
    /// Pairs dropped because the distance estimate failed.
    pub skipped: usize,
}

/// `sup |f(p) − f(q)| / d̂(p, q)` over pairs drawn uniformly from the chart
/// ball of radius `radius` about `centre`.
pub fn lipschitz_estimate(
    spec: &StructureSpec,
    f: &Expr,
    centre: &[f64],
    radius: f64,
    pairs: usize,
    dist: &DistanceOptions,
) -> Result<LipschitzReport> {
    if pairs == 0 {
        return Err(Error::InvalidInput("at least one pair is required".into()));
    }
    let sf = ScalarField::new(spec, f)?;
    let m = spec.dim();
    let ball = |index: u64| -> Vec<f64> {
        let mut g = rng::stream(dist.seed, index);
        loop {
            let v: Vec<f64> = (0..m).map(|_| g.gen_range(-1.0..=1.0)).collect();
            if v.iter().map(|a| a * a).sum::<f64>() <= 1.0 {
                return v.iter().zip(centre).map(|(a, c)| c + radius * a).collect();
            }
        }
    };
    let mut report = LipschitzReport { sup_quotient: 0.0, argmax: None, pairs: 0, skipped: 0 };
    for i in 0..pairs {
        let p = ball(2 * i as u64);
        let q = ball(2 * i as u64 + 1);
        let d = match estimate_distance(spec, &p, &q, dist) {
            Ok(d) if d > 0.0 => d,
            _ => {
                report.skipped += 1;
                continue;
            }
        };
        report.pairs += 1;
        let quotient = (sf.value(&p)? - sf.value(&q)?).abs() / d;
        if report.argmax.is_none() || quotient > report.sup_quotient {
            report.sup_quotient = quotient;
            report.argmax = Some((p, q));
        }
    }
    Ok(report)
}
