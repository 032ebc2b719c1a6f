//! Commutator flows, adapted frames, the composed flow map `F^y`, Newton
//! steering, broken-geodesic distance estimates and the ball-box probe.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodesic::{geodesic_endpoint, nonholonomic_geodesic, HorizontalCurve, DEFAULT_STEP};
use crate::geometry::{bracket_tower, numerical_rank, FrameField, GrowthVector, MultiIndex, BRACKET_DEPTH_CAP, DEFAULT_RANK_TOL};
use crate::rng;
use crate::structure::StructureSpec;

/// One unit-speed leg: frame direction and duration (= length).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub dir: Vec<f64>,
    pub len: f64,
}

/// A concatenation of nonholonomic geodesic legs with their break points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BrokenGeodesic {
    pub start: Vec<f64>,
    pub segments: Vec<Segment>,
    /// `breaks[0] = start`, `breaks[s + 1]` = end of segment `s`.
    #[serde(skip)]
    pub breaks: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BrokenGeodesicFile {
    start: Vec<f64>,
    segments: Vec<Segment>,
}

impl BrokenGeodesic {
    pub(crate) fn from_parts(start: Vec<f64>, segments: Vec<Segment>, breaks: Vec<Vec<f64>>) -> BrokenGeodesic {
        debug_assert_eq!(breaks.len(), segments.len() + 1);
        BrokenGeodesic { start, segments, breaks }
    }

    pub fn trivial(start: &[f64]) -> BrokenGeodesic {
        BrokenGeodesic { start: start.to_vec(), segments: Vec::new(), breaks: vec![start.to_vec()] }
    }

    /// Integrate the legs from `start`. Directions must be unit frame vectors.
    pub fn integrate(spec: &StructureSpec, start: &[f64], segments: Vec<Segment>, step: f64) -> Result<BrokenGeodesic> {
        if start.len() != spec.dim() {
            return Err(Error::Dimension(format!("start has {} coordinates, expected {}", start.len(), spec.dim())));
        }
        let mut breaks = Vec::with_capacity(segments.len() + 1);
        breaks.push(start.to_vec());
        let mut x = start.to_vec();
        for (s, seg) in segments.iter().enumerate() {
            if seg.dir.len() != spec.rank() {
                return Err(Error::Dimension(format!("segment {s} direction must have {} entries", spec.rank())));
            }
            let norm = seg.dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidInput(format!("segment {s} direction is not a unit vector")));
            }
            if !(seg.len >= 0.0) || !seg.len.is_finite() {
                return Err(Error::InvalidInput(format!("segment {s} has an invalid duration")));
            }
            if seg.len > 0.0 {
                x = geodesic_endpoint(spec, &x, &seg.dir, seg.len, step)?.0;
            }
            breaks.push(x.clone());
        }
        Ok(BrokenGeodesic { start: start.to_vec(), segments, breaks })
    }

    pub fn from_json(spec: &StructureSpec, text: &str, step: f64) -> Result<BrokenGeodesic> {
        let file: BrokenGeodesicFile = serde_json::from_str(text)?;
        BrokenGeodesic::integrate(spec, &file.start, file.segments, step)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("broken geodesic serializes")
    }

    /// Total length `Σ len` (legs have unit speed).
    pub fn length(&self) -> f64 {
        self.segments.iter().map(|s| s.len).sum()
    }

    pub fn endpoint(&self) -> &[f64] {
        self.breaks.last().expect("breaks are never empty")
    }

    /// Number of legs with positive duration.
    pub fn active_segments(&self) -> usize {
        self.segments.iter().filter(|s| s.len > 0.0).count()
    }

    /// Append `other`, which must start where `self` ends.
    pub fn append(&mut self, other: BrokenGeodesic) -> Result<()> {
        let end = self.endpoint();
        let gap = end.iter().zip(&other.start).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if gap > 1e-12 * (1.0 + end.iter().map(|v| v.abs()).fold(0.0, f64::max)) {
            return Err(Error::InvalidInput(format!("cannot chain plans: gap {gap:e}")));
        }
        self.segments.extend(other.segments);
        self.breaks.extend(other.breaks.into_iter().skip(1));
        Ok(())
    }

    /// Sampled curve of every positive-length leg.
    pub fn curves(&self, spec: &StructureSpec, step: f64) -> Result<Vec<HorizontalCurve>> {
        self.segments
            .iter()
            .zip(&self.breaks)
            .filter(|(s, _)| s.len > 0.0)
            .map(|(s, start)| nonholonomic_geodesic(spec, start, &s.dir, s.len, step))
            .collect()
    }

    fn without_empty(mut self) -> BrokenGeodesic {
        let mut breaks = vec![self.breaks[0].clone()];
        let mut segments = Vec::new();
        for (s, b) in self.segments.drain(..).zip(self.breaks.into_iter().skip(1)) {
            if s.len > 0.0 {
                segments.push(s);
                breaks.push(b);
            }
        }
        BrokenGeodesic { start: self.start, segments, breaks }
    }
}

fn unit(k: usize, i: usize, sign: f64) -> Vec<f64> {
    let mut d = vec![0.0; k];
    d[i] = sign;
    d
}

/// Legs of `Ψ_I(t)` as `(frame index, signed time)`.
///
/// `Ψ_I(t) = [Ψ_{i_1}, Ψ_J](t)`, applying `Ψ_{i_1}(t)`, `Ψ_J(t)`, `Ψ_{i_1}(−t)`,
/// `Ψ_J(−t)` in that order. For `t < 0` the two commutator slots trade places
/// and `|t|` is used, which reverses the leading displacement.
fn flow_legs(index: &[usize], t: f64, out: &mut Vec<(usize, f64)>) {
    if index.len() == 1 {
        out.push((index[0], t));
        return;
    }
    let (head, tail) = index.split_at(1);
    let (a, b, s) = if t >= 0.0 { (head, tail, t) } else { (tail, head, -t) };
    flow_legs(a, s, out);
    flow_legs(b, s, out);
    flow_legs(a, -s, out);
    flow_legs(b, -s, out);
}

/// Number of legs in `Ψ_I` for `|I| = r`: `1, 4, 10, 22, …`.
pub fn leg_count(r: usize) -> usize {
    if r <= 1 {
        1
    } else {
        2 + 2 * leg_count(r - 1)
    }
}

/// Nominal leg count `3·2^{r−1} − 1` of a weight-`r` commutator flow; the
/// explicit concatenation has [`leg_count`] legs.
pub fn nominal_leg_count(r: usize) -> usize {
    3 * (1usize << (r - 1)) - 1
}

fn legs_to_segments(k: usize, legs: &[(usize, f64)]) -> Vec<Segment> {
    legs.iter()
        .filter(|(_, s)| *s != 0.0)
        .map(|&(i, s)| Segment { dir: unit(k, i, s.signum()), len: s.abs() })
        .collect()
}

/// `Ψ_I(t)` from `start`: endpoint and the explicit concatenation of legs.
pub fn commutator_flow(
    spec: &StructureSpec,
    index: &MultiIndex,
    t: f64,
    start: &[f64],
    step: f64,
) -> Result<(Vec<f64>, BrokenGeodesic)> {
    let k = spec.rank();
    if index.0.is_empty() || index.0.iter().any(|&i| i >= k) {
        return Err(Error::InvalidInput(format!("multi-index {index} is not valid for rank {k}")));
    }
    if !t.is_finite() {
        return Err(Error::InvalidInput("flow parameter must be finite".into()));
    }
    let mut legs = Vec::with_capacity(leg_count(index.weight()));
    flow_legs(&index.0, t, &mut legs);
    let plan = BrokenGeodesic::integrate(spec, start, legs_to_segments(k, &legs), step)?;
    Ok((plan.endpoint().to_vec(), plan))
}

/// Bracket frame `{E_I}` chosen greedily at a base point.
#[derive(Debug, Clone, Serialize)]
pub struct AdaptedFrame {
    pub base: Vec<f64>,
    pub indices: Vec<MultiIndex>,
    pub weights: Vec<usize>,
    /// Cumulative counts `n_1, …, n_l` of members with weight `≤ r`.
    pub layers: Vec<usize>,
    #[serde(skip)]
    fields: Vec<FrameField>,
}

impl AdaptedFrame {
    /// Columns `E_I(x)`.
    pub fn matrix_at(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let m = self.fields.len();
        let mut a = DMatrix::zeros(x.len(), m);
        for (c, f) in self.fields.iter().enumerate() {
            a.set_column(c, &DVector::from_vec(f.eval(x)?));
        }
        Ok(a)
    }

    pub fn growth_vector(&self, tol: f64) -> GrowthVector {
        GrowthVector { layers: self.layers.clone(), tol, bracket_generating: true, depth_cap: BRACKET_DEPTH_CAP }
    }
}

/// Greedy selection in length-then-lexicographic order of right-nested
/// brackets, keeping those that raise the numerical rank at `y`.
pub fn adapted_frame(spec: &StructureSpec, y: &[f64], tol: f64) -> Result<AdaptedFrame> {
    let m = spec.dim();
    if y.len() != m {
        return Err(Error::Dimension(format!("point has {} coordinates, expected {m}", y.len())));
    }
    let cap = m.min(BRACKET_DEPTH_CAP);
    let tower = bracket_tower(spec, cap);
    let mut cols: Vec<DVector<f64>> = Vec::new();
    let mut indices = Vec::new();
    let mut fields = Vec::new();
    let mut layers = Vec::new();
    'outer: for layer in tower {
        for (idx, field) in layer {
            let v = DVector::from_vec(field.eval(y)?);
            cols.push(v);
            if numerical_rank(&cols, tol) == cols.len() {
                indices.push(idx);
                fields.push(field);
                if cols.len() == m {
                    layers.push(cols.len());
                    break 'outer;
                }
            } else {
                cols.pop();
            }
        }
        layers.push(cols.len());
    }
    if cols.len() < m {
        return Err(Error::NotBracketGenerating { point: y.to_vec(), rank: cols.len(), dim: m, depth: cap });
    }
    let weights = indices.iter().map(MultiIndex::weight).collect();
    Ok(AdaptedFrame { base: y.to_vec(), indices, weights, layers, fields })
}

fn f_map_segments(spec: &StructureSpec, frame: &AdaptedFrame, params: &[f64]) -> Vec<Segment> {
    let mut legs = Vec::new();
    for (idx, &t) in frame.indices.iter().zip(params) {
        if t != 0.0 {
            flow_legs(&idx.0, t, &mut legs);
        }
    }
    legs_to_segments(spec.rank(), &legs)
}

/// `F^y(t) = Ψ_m(t_m) ∘ ⋯ ∘ Ψ_1(t_1)(y)` for a given adapted frame.
pub fn f_map_with_frame(
    spec: &StructureSpec,
    frame: &AdaptedFrame,
    params: &[f64],
    step: f64,
) -> Result<(Vec<f64>, BrokenGeodesic)> {
    if params.len() != frame.indices.len() {
        return Err(Error::Dimension(format!("expected {} flow parameters", frame.indices.len())));
    }
    let plan = BrokenGeodesic::integrate(spec, &frame.base, f_map_segments(spec, frame, params), step)?;
    Ok((plan.endpoint().to_vec(), plan))
}

/// `F^y` with the adapted frame at `y` (default rank tolerance).
pub fn f_map(spec: &StructureSpec, y: &[f64], params: &[f64], step: f64) -> Result<(Vec<f64>, BrokenGeodesic)> {
    let frame = adapted_frame(spec, y, DEFAULT_RANK_TOL)?;
    f_map_with_frame(spec, &frame, params, step)
}

/// `(nominal_N, actual_N)` for a growth vector.
pub fn segment_count(gv: &GrowthVector) -> (usize, usize) {
    let mut nominal = 0;
    let mut actual = 0;
    let mut prev = 0;
    for (r, &n) in gv.layers.iter().enumerate() {
        let new = n.saturating_sub(prev);
        nominal += new * nominal_leg_count(r + 1);
        actual += new * leg_count(r + 1);
        prev = n;
    }
    (nominal, actual)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteerOptions {
    pub tol: f64,
    pub maxiter: usize,
    pub step: f64,
    pub rank_tol: f64,
}

impl Default for SteerOptions {
    fn default() -> Self {
        SteerOptions { tol: 1e-6, maxiter: 50, step: DEFAULT_STEP, rank_tol: DEFAULT_RANK_TOL }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SteerResult {
    pub plan: BrokenGeodesic,
    /// Flow parameters `t_i` of each hop; a single entry when `F^p` was
    /// inverted directly.
    pub params: Vec<Vec<f64>>,
    pub residual: f64,
    /// Newton iterations over all attempts, including failed ones.
    pub iterations: usize,
    /// Iterations of the most expensive successful inversion.
    pub max_hop_iterations: usize,
    pub converged: bool,
    /// Adapted frame at `p`.
    pub frame: AdaptedFrame,
}

impl SteerResult {
    pub fn hops(&self) -> usize {
        self.params.len()
    }

    /// Largest `|t_i|` over all hops.
    pub fn max_param(&self) -> f64 {
        self.params.iter().map(|p| max_abs(p)).fold(0.0, f64::max)
    }
}

/// Bisection depth for the hop fallback; only failing hops are split.
const MAX_HOP_DEPTH: usize = 6;
/// Newton gives up after this many consecutive iterations that each remove
/// less than a tenth of the residual.
const STALL_LIMIT: usize = 3;

/// Newton step size for the finite-difference Jacobian in scaled parameters.
const JACOBIAN_STEP: f64 = 1e-5;
const MAX_HALVINGS: usize = 8;
/// Integration step while searching; exact on the polynomial built-in groups.
const SEARCH_STEP: f64 = 0.05;
const FINE_POLISH_GATE: f64 = 1e-3;

fn scaled_to_time(s: f64, w: usize) -> f64 {
    s.signum() * s.abs().powf(1.0 / w as f64)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a: f64, b| a.max(b.abs()))
}

struct NewtonRun {
    s: Vec<f64>,
    residual: f64,
    iterations: usize,
}

/// Damped Newton on `G(s) = F^p(t(s)) − target` in scaled parameters.
///
/// Each iteration first tries a chord step with the frame matrix at `p`,
/// which is the derivative of `F^p` at `s = 0`. On nilpotent models `G` is
/// triangular in the graded order but only Lipschitz where some `s_i`
/// changes sign, and the chord step resolves it in a couple of iterations
/// where Newton can stall on the kinks. The chord step is kept when it at
/// least halves the residual.
fn newton(
    spec: &StructureSpec,
    frame: &AdaptedFrame,
    chord: Option<&nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
    target: &[f64],
    s0: Vec<f64>,
    step: f64,
    polish: f64,
    budget: usize,
) -> NewtonRun {
    let m = spec.dim();
    let residual_of = |s: &[f64]| -> Option<DVector<f64>> {
        let t: Vec<f64> = s.iter().zip(&frame.weights).map(|(&s, &w)| scaled_to_time(s, w)).collect();
        let segments = f_map_segments(spec, frame, &t);
        let plan = BrokenGeodesic::integrate(spec, &frame.base, segments, step).ok()?;
        Some(DVector::from_iterator(m, plan.endpoint().iter().zip(target).map(|(a, b)| a - b)))
    };
    let mut s = s0;
    let mut g = match residual_of(&s) {
        Some(g) => g,
        None => {
            s = vec![0.0; m];
            residual_of(&s).expect("F^p(0) is the base point")
        }
    };
    let mut r = g.norm();
    let mut iterations = 0;
    let mut stalled = 0;
    while iterations < budget && r > polish && stalled < STALL_LIMIT {
        iterations += 1;
        if let Some(delta) = chord.and_then(|lu| lu.solve(&g)) {
            let trial: Vec<f64> = s.iter().zip(delta.iter()).map(|(a, d)| a - d).collect();
            if let Some(gt) = residual_of(&trial) {
                let rt = gt.norm();
                if rt <= 0.5 * r {
                    stalled = 0;
                    s = trial;
                    g = gt;
                    r = rt;
                    continue;
                }
            }
        }
        let mut jac = DMatrix::zeros(m, m);
        for i in 0..m {
            let mut plus = s.clone();
            plus[i] += JACOBIAN_STEP;
            let mut minus = s.clone();
            minus[i] -= JACOBIAN_STEP;
            let col = match (residual_of(&plus), residual_of(&minus)) {
                (Some(a), Some(b)) => (a - b) / (2.0 * JACOBIAN_STEP),
                (Some(a), None) => (a - &g) / JACOBIAN_STEP,
                (None, Some(b)) => (&g - b) / JACOBIAN_STEP,
                (None, None) => DVector::zeros(m),
            };
            jac.set_column(i, &col);
        }
        let svd = jac.svd(true, true);
        let smax = svd.singular_values.max();
        let delta = match svd.solve(&(-&g), 1e-12 * smax.max(f64::MIN_POSITIVE)) {
            Ok(d) => d,
            Err(_) => break,
        };
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let trial: Vec<f64> = s.iter().zip(delta.iter()).map(|(a, d)| a + lambda * d).collect();
            if let Some(gt) = residual_of(&trial) {
                let rt = gt.norm();
                if rt < r {
                    stalled = if rt > 0.9 * r { stalled + 1 } else { 0 };
                    s = trial;
                    g = gt;
                    r = rt;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    NewtonRun { s, residual: r, iterations }
}

/// Broken geodesic from `p` to `q`.
///
/// `F^p` is inverted directly first. If that fails, usually because the
/// commutator legs leave the domain, the chart segment from `p` to `q` is
/// bisected recursively (at most 64 hops) and the hop plans are concatenated;
/// each hop starts at the actual endpoint of the previous one.
pub fn steer(spec: &StructureSpec, p: &[f64], q: &[f64], opts: &SteerOptions) -> Result<SteerResult> {
    let m = spec.dim();
    if p.len() != m || q.len() != m {
        return Err(Error::Dimension(format!("points must have {m} coordinates")));
    }
    if !spec.domain.contains(p) || !spec.domain.contains(q) {
        return Err(Error::InvalidInput("steering endpoints must lie in the domain".into()));
    }
    if !(opts.tol > 0.0) || !(opts.step > 0.0) {
        return Err(Error::InvalidInput("tolerance and step must be positive".into()));
    }
    let direct = steer_direct(spec, p, q, opts, true)?;
    if direct.converged {
        return Ok(direct);
    }
    let mut acc = Hops { plan: BrokenGeodesic::trivial(p), params: Vec::new(), residual: 0.0, iterations: direct.iterations, max_hop_iterations: 0 };
    let mid: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    if steer_hops(spec, p, &mid, opts, MAX_HOP_DEPTH - 1, &mut acc)? {
        let start = acc.plan.endpoint().to_vec();
        if steer_hops(spec, &start, q, opts, MAX_HOP_DEPTH - 1, &mut acc)? {
            return Ok(SteerResult {
                plan: acc.plan,
                params: acc.params,
                residual: acc.residual,
                iterations: acc.iterations,
                max_hop_iterations: acc.max_hop_iterations,
                converged: acc.residual <= opts.tol,
                frame: direct.frame,
            });
        }
    }
    Ok(SteerResult { iterations: acc.iterations, ..direct })
}

struct Hops {
    plan: BrokenGeodesic,
    params: Vec<Vec<f64>>,
    residual: f64,
    iterations: usize,
    max_hop_iterations: usize,
}

/// Steers `a → b` directly, bisecting the chart segment up to `depth` more
/// times when the direct inversion fails.
fn steer_hops(spec: &StructureSpec, a: &[f64], b: &[f64], opts: &SteerOptions, depth: usize, acc: &mut Hops) -> Result<bool> {
    let hop = steer_direct(spec, a, b, opts, false)?;
    acc.iterations += hop.iterations;
    if hop.converged {
        acc.max_hop_iterations = acc.max_hop_iterations.max(hop.iterations);
        acc.residual = hop.residual;
        acc.params.extend(hop.params);
        acc.plan.append(hop.plan)?;
        return Ok(true);
    }
    if depth == 0 {
        return Ok(false);
    }
    let mid: Vec<f64> = a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect();
    if !steer_hops(spec, a, &mid, opts, depth - 1, acc)? {
        return Ok(false);
    }
    let start = acc.plan.endpoint().to_vec();
    steer_hops(spec, &start, b, opts, depth - 1, acc)
}

/// Damped Newton inversion of `F^p`, starting from the frame coefficients of
/// `q − p` and, if `continuation` is set, falling back to continuation along
/// the chart segment in 2, 4 and 8 stages. The residual is driven well below `tol` when possible so
/// that the plan length is not distorted by the endpoint error.
fn steer_direct(spec: &StructureSpec, p: &[f64], q: &[f64], opts: &SteerOptions, continuation: bool) -> Result<SteerResult> {
    let m = spec.dim();
    let frame = adapted_frame(spec, p, opts.rank_tol)?;
    let scale = 1.0 + max_abs(q);
    let polish = (1e-13 * scale).min(opts.tol);
    let trivial = p == q;
    let lu = frame.matrix_at(p).ok().map(|a| a.lu());
    let chord = lu.as_ref();
    let initial = |target: &[f64]| -> Vec<f64> {
        let d = DVector::from_iterator(m, target.iter().zip(p).map(|(a, b)| a - b));
        chord.and_then(|lu| lu.solve(&d)).map(|v| v.iter().copied().collect()).unwrap_or_else(|| vec![0.0; m])
    };
    let coarse = opts.step.max(SEARCH_STEP);
    let (s, residual, iterations) = if trivial {
        (vec![0.0; m], 0.0, 0)
    } else {
        let run = newton(spec, &frame, chord, q, initial(q), coarse, polish, opts.maxiter);
        let mut best = (run.s, run.residual, run.iterations);
        let mut used = best.2;
        for stages in [2usize, 4, 8] {
            if !continuation || best.1 <= opts.tol || used >= opts.maxiter {
                break;
            }
            // continuation along the chart segment p → q
            let mut s = vec![0.0; m];
            for j in 1..=stages {
                let lam = j as f64 / stages as f64;
                let target: Vec<f64> = p.iter().zip(q).map(|(a, b)| a + lam * (b - a)).collect();
                let stage_polish = if j == stages { polish } else { opts.tol };
                let remaining = opts.maxiter.saturating_sub(used);
                if remaining == 0 {
                    break;
                }
                let run = newton(spec, &frame, chord, &target, s, coarse, stage_polish, remaining);
                used += run.iterations;
                s = run.s;
                if j == stages && run.residual < best.1 {
                    best = (s.clone(), run.residual, used);
                }
                if run.residual > opts.tol {
                    break;
                }
            }
        }
        // a coarse search that did not get close will not converge at the fine step either
        if coarse > opts.step && best.1 <= FINE_POLISH_GATE * scale {
            let remaining = opts.maxiter.saturating_sub(used).max(3);
            let run = newton(spec, &frame, chord, q, best.0, opts.step, polish, remaining);
            used += run.iterations;
            best = (run.s, run.residual, used);
        }
        best
    };
    let params: Vec<f64> = s.iter().zip(&frame.weights).map(|(&s, &w)| scaled_to_time(s, w)).collect();
    let plan = if trivial {
        BrokenGeodesic::trivial(p)
    } else {
        f_map_with_frame(spec, &frame, &params, opts.step)?.1.without_empty()
    };
    Ok(SteerResult {
        plan,
        params: vec![params],
        residual,
        iterations,
        max_hop_iterations: iterations,
        converged: residual <= opts.tol,
        frame,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DhOptions {
    pub budget: usize,
    pub restarts: usize,
    pub step: f64,
    pub seed: u64,
    pub steer: SteerOptions,
    /// Integration step used while searching; the final plan is re-integrated at `step`.
    pub search_step: f64,
    /// Nelder–Mead evaluations per penalty stage and unknown.
    pub evals_per_unknown: usize,
}

impl Default for DhOptions {
    fn default() -> Self {
        DhOptions {
            budget: 8,
            restarts: 4,
            step: DEFAULT_STEP,
            seed: rng::DEFAULT_SEED,
            steer: SteerOptions::default(),
            search_step: 0.02,
            evals_per_unknown: 60,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DhResult {
    pub length: f64,
    pub plan: BrokenGeodesic,
    pub steer_length: f64,
    pub budget: usize,
    /// The budget was smaller than the steering plan; `plan` is the steering plan.
    pub infeasible_budget: bool,
    /// Chart distance between the plan endpoint and the target.
    pub gap: f64,
}

/// Penalty weights of the refinement stages.
const PENALTY_SCHEDULE: [f64; 3] = [1e2, 1e4, 1e6];

/// Unit vector from hyperspherical angles.
fn direction_from_angles(angles: &[f64]) -> Vec<f64> {
    let k = angles.len() + 1;
    let mut d = vec![0.0; k];
    let mut sin_prod = 1.0;
    for (i, a) in angles.iter().enumerate() {
        d[i] = sin_prod * a.cos();
        sin_prod *= a.sin();
    }
    d[k - 1] = sin_prod;
    d
}

fn angles_from_direction(d: &[f64]) -> Vec<f64> {
    let k = d.len();
    let mut angles = vec![0.0; k - 1];
    for i in 0..k - 1 {
        let tail = d[i + 1..].iter().map(|v| v * v).sum::<f64>().sqrt();
        angles[i] = if i == k - 2 { d[k - 1].atan2(d[k - 2]) } else { tail.atan2(d[i]) };
    }
    angles
}

/// Plan encoding for the search: per segment `k − 1` angles then a duration
/// whose absolute value is used.
struct PlanCodec {
    k: usize,
    segments: usize,
}

impl PlanCodec {
    fn width(&self) -> usize {
        self.k
    }

    fn decode(&self, z: &[f64]) -> Vec<Segment> {
        z.chunks(self.width())
            .map(|c| Segment { dir: direction_from_angles(&c[..self.k - 1]), len: c[self.k - 1].abs() })
            .collect()
    }

    fn encode(&self, segments: &[Segment]) -> Vec<f64> {
        let mut z = Vec::with_capacity(self.segments * self.width());
        for s in segments.iter().take(self.segments) {
            z.extend(angles_from_direction(&s.dir));
            z.push(s.len);
        }
        while z.len() < self.segments * self.width() {
            z.extend(std::iter::repeat_n(0.0, self.k - 1));
            z.push(0.0);
        }
        z
    }
}

fn gap_of(spec: &StructureSpec, p: &[f64], q: &[f64], segments: Vec<Segment>, step: f64) -> Option<(f64, BrokenGeodesic)> {
    let plan = BrokenGeodesic::integrate(spec, p, segments, step).ok()?;
    let gap = plan.endpoint().iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    Some((gap, plan))
}

/// Minimal Nelder–Mead with adaptive coefficients.
fn nelder_mead<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64], scales: &[f64], max_evals: usize) -> (Vec<f64>, f64) {
    let n = x0.len();
    let nf = n as f64;
    let (alpha, beta, gamma, delta) = (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf);
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), f(x0)));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += scales[i];
        let v = f(&x);
        simplex.push((x, v));
    }
    let mut evals = n + 1;
    let order = |s: &mut Vec<(Vec<f64>, f64)>| s.sort_by(|a, b| a.1.total_cmp(&b.1));
    while evals < max_evals {
        order(&mut simplex);
        let best = simplex[0].1;
        let worst = simplex[n].1;
        if worst.is_finite() && (worst - best).abs() <= 1e-14 * (1.0 + best.abs()) {
            break;
        }
        let centroid: Vec<f64> = (0..n).map(|j| simplex[..n].iter().map(|(x, _)| x[j]).sum::<f64>() / nf).collect();
        let along = |t: f64| -> Vec<f64> { (0..n).map(|j| centroid[j] + t * (simplex[n].0[j] - centroid[j])).collect() };
        let xr = along(-alpha);
        let fr = f(&xr);
        evals += 1;
        if fr < simplex[0].1 {
            let xe = along(-alpha * beta);
            let fe = f(&xe);
            evals += 1;
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[n].1 {
                let x = along(-alpha * gamma);
                let v = f(&x);
                (x, v)
            } else {
                let x = along(gamma);
                let v = f(&x);
                (x, v)
            };
            evals += 1;
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let x0 = simplex[0].0.clone();
                for item in simplex.iter_mut().skip(1) {
                    let x: Vec<f64> = x0.iter().zip(&item.0).map(|(a, b)| a + delta * (b - a)).collect();
                    let v = f(&x);
                    *item = (x, v);
                }
                evals += n;
            }
        }
    }
    order(&mut simplex);
    let (x, v) = simplex.swap_remove(0);
    (x, v)
}

/// Gauss–Newton projection of a plan onto the endpoint constraint, moving
/// the encoded parameters by minimum-norm steps.
fn project_plan(
    spec: &StructureSpec,
    codec: &PlanCodec,
    p: &[f64],
    q: &[f64],
    z0: Vec<f64>,
    step: f64,
    target: f64,
) -> Option<(Vec<f64>, f64)> {
    let m = spec.dim();
    let residual = |z: &[f64]| -> Option<DVector<f64>> {
        let plan = BrokenGeodesic::integrate(spec, p, codec.decode(z), step).ok()?;
        Some(DVector::from_iterator(m, plan.endpoint().iter().zip(q).map(|(a, b)| a - b)))
    };
    let mut z = z0;
    let mut g = residual(&z)?;
    let mut r = g.norm();
    let h = 1e-7;
    for _ in 0..30 {
        if r <= target {
            break;
        }
        let n = z.len();
        let mut jac = DMatrix::zeros(m, n);
        for i in 0..n {
            let mut a = z.clone();
            a[i] += h;
            let mut b = z.clone();
            b[i] -= h;
            if let (Some(ga), Some(gb)) = (residual(&a), residual(&b)) {
                jac.set_column(i, &((ga - gb) / (2.0 * h)));
            }
        }
        let svd = jac.svd(true, true);
        let smax = svd.singular_values.max();
        let delta = svd.solve(&(-&g), 1e-10 * smax.max(f64::MIN_POSITIVE)).ok()?;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let trial: Vec<f64> = z.iter().zip(delta.iter()).map(|(a, d)| a + lambda * d).collect();
            if let Some(gt) = residual(&trial) {
                if gt.norm() < r {
                    r = gt.norm();
                    g = gt;
                    z = trial;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Some((z, r))
}

/// Length of the encoded plan (`Σ |duration|`).
fn encoded_length(codec: &PlanCodec, z: &[f64]) -> f64 {
    z.chunks(codec.width()).map(|c| c[codec.k - 1].abs()).sum()
}

/// Seed plans: a straight leg along the horizontal part of `q − p` followed
/// by a regular polygonal loop in the first two frame directions, rotated
/// by `theta0` and oriented by `orientation`, scaled to minimise the gap.
fn fan_seed(
    spec: &StructureSpec,
    p: &[f64],
    q: &[f64],
    budget: usize,
    theta0: f64,
    orientation: f64,
    step: f64,
) -> Option<Vec<Segment>> {
    let k = spec.rank();
    let d = DVector::from_iterator(p.len(), q.iter().zip(p).map(|(a, b)| a - b));
    let frame = crate::geometry::FrameAt::new(spec, p).ok()?;
    let c = frame.coefficients(&d);
    let horiz: Vec<f64> = c.iter().take(k).copied().collect();
    let hn = norm(&horiz);
    let mut base = Vec::new();
    if hn > 1e-12 {
        base.push(Segment { dir: horiz.iter().map(|v| v / hn).collect(), len: hn });
    }
    let loop_sides = budget.saturating_sub(base.len());
    if loop_sides < 3 {
        return if base.is_empty() { None } else { Some(base) };
    }
    let build = |side: f64| -> Vec<Segment> {
        let mut segs = base.clone();
        for j in 0..loop_sides {
            let a = theta0 + orientation * 2.0 * PI * j as f64 / loop_sides as f64;
            let mut dir = vec![0.0; k];
            dir[0] = a.cos();
            dir[1] = a.sin();
            segs.push(Segment { dir, len: side });
        }
        segs
    };
    let score = |side: f64| gap_of(spec, p, q, build(side), step).map(|(g, _)| g).unwrap_or(f64::INFINITY);
    // log-scale scan, then golden section around the best grid point
    let grid: Vec<f64> = (0..25).map(|i| 1e-3 * 10f64.powf(i as f64 * 3.3 / 24.0)).collect();
    let (mut best_i, mut best_v) = (0, f64::INFINITY);
    for (i, &s) in grid.iter().enumerate() {
        let v = score(s);
        if v < best_v {
            best_i = i;
            best_v = v;
        }
    }
    let no_loop = score(0.0);
    if !best_v.is_finite() || no_loop <= best_v {
        return if base.is_empty() { None } else { Some(base) };
    }
    let mut lo = grid[best_i.saturating_sub(1)];
    let mut hi = grid[(best_i + 1).min(grid.len() - 1)];
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..40 {
        let a = hi - g * (hi - lo);
        let b = lo + g * (hi - lo);
        if score(a) < score(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    Some(build(0.5 * (lo + hi)))
}

fn refine(
    spec: &StructureSpec,
    p: &[f64],
    q: &[f64],
    codec: &PlanCodec,
    seed: &[Segment],
    opts: &DhOptions,
) -> Option<Vec<f64>> {
    let search_step = opts.search_step.max(opts.step);
    let mut z = codec.encode(seed);
    let n = z.len();
    let total = encoded_length(codec, &z).max(0.05);
    let scales: Vec<f64> = (0..n)
        .map(|i| if i % codec.width() == codec.k - 1 { 0.1 * total / codec.segments as f64 + 0.01 } else { 0.3 })
        .collect();
    for w in PENALTY_SCHEDULE {
        let objective = |z: &[f64]| -> f64 {
            match gap_of(spec, p, q, codec.decode(z), search_step) {
                Some((gap, _)) => encoded_length(codec, z) + w * gap * gap,
                None => f64::INFINITY,
            }
        };
        let (best, value) = nelder_mead(objective, &z, &scales, opts.evals_per_unknown * n);
        if !value.is_finite() {
            return None;
        }
        z = best;
    }
    Some(z)
}

/// Upper bound on the broken-geodesic distance `d_H(p, q)`.
///
/// Candidates are the steering plan, Nelder–Mead refinements of seeded plans
/// with at most `budget` legs (projected back onto the endpoint constraint),
/// and the result for half the budget when that budget is feasible; the
/// shortest feasible candidate wins, so the bound is monotone in the budget.
///
/// On graded models the search runs on `δ_λ(p), δ_λ(q)` for a `λ` that
/// scales with the pair, and the plan is mapped back by `δ_{1/λ}`, so the
/// result commutes with dilations.
pub fn dh_upper(spec: &StructureSpec, p: &[f64], q: &[f64], opts: &DhOptions) -> Result<DhResult> {
    let m = spec.dim();
    if p.len() != m || q.len() != m {
        return Err(Error::Dimension(format!("points must have {m} coordinates")));
    }
    let Some(lambda) = search_dilation(spec, p, q) else {
        return dh_upper_direct(spec, p, q, opts);
    };
    let w = spec.weights.as_ref().expect("graded model");
    let dilate = |x: &[f64]| -> Vec<f64> { x.iter().zip(w).map(|(a, &wi)| a * lambda.powi(wi as i32)).collect() };
    let scaled = dh_upper_direct(spec, &dilate(p), &dilate(q), opts)?;
    let back = |plan: &BrokenGeodesic| -> Vec<Segment> {
        plan.segments.iter().map(|s| Segment { dir: s.dir.clone(), len: s.len / lambda }).collect()
    };
    let Some((gap, plan)) = gap_of(spec, p, q, back(&scaled.plan), opts.step) else {
        return dh_upper_direct(spec, p, q, opts);
    };
    // integration error of the mapped-back plan must stay at the level of a direct solve
    if gap > 1e-9 * (1.0 + max_abs(q)) {
        return dh_upper_direct(spec, p, q, opts);
    }
    Ok(DhResult {
        length: plan.length(),
        plan,
        steer_length: scaled.steer_length / lambda,
        budget: scaled.budget,
        infeasible_budget: scaled.infeasible_budget,
        gap,
    })
}

/// Homogeneous size of the pair at which the search runs.
const SEARCH_SCALE: f64 = 0.3;

/// `λ` with `δ_λ` taking the pair to homogeneous size [`SEARCH_SCALE`],
/// capped so both images stay in the half-size domain box. Both the size and
/// the cap are dilation-covariant. `None` on ungraded models, for
/// coincident points, or when the domain is not symmetric about the origin.
fn search_dilation(spec: &StructureSpec, p: &[f64], q: &[f64]) -> Option<f64> {
    let w = spec.weights.as_ref()?;
    let half = spec.domain.half();
    let mut size: f64 = 0.0;
    let mut cap = f64::INFINITY;
    for i in 0..p.len() {
        let wi = w[i] as f64;
        if half.lo[i] != -half.hi[i] || !(half.hi[i] > 0.0) {
            return None;
        }
        size = size.max((q[i] - p[i]).abs().powf(1.0 / wi));
        for x in [p[i], q[i]] {
            if x != 0.0 {
                cap = cap.min((half.hi[i] / x.abs()).powf(1.0 / wi));
            }
        }
    }
    if !(size > 0.0) {
        return None;
    }
    let lambda = (SEARCH_SCALE / size).min(cap);
    (lambda.is_finite() && lambda > 0.0).then_some(lambda)
}

fn dh_upper_direct(spec: &StructureSpec, p: &[f64], q: &[f64], opts: &DhOptions) -> Result<DhResult> {
    let st = steer(spec, p, q, &opts.steer)?;
    if !st.converged {
        return Err(Error::NoConvergence { residual: st.residual, iterations: st.iterations });
    }
    let steer_plan = st.plan;
    let steer_length = steer_plan.length();
    let needed = steer_plan.active_segments();
    let gap_to_q = |plan: &BrokenGeodesic| -> f64 {
        plan.endpoint().iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    };
    let steer_gap = gap_to_q(&steer_plan);
    if needed == 0 || opts.budget < needed {
        return Ok(DhResult {
            length: steer_length,
            gap: steer_gap,
            plan: steer_plan,
            steer_length,
            budget: opts.budget,
            infeasible_budget: needed > 0,
        });
    }
    let accept_gap = (1e-10 * (1.0 + max_abs(q))).max(steer_gap);
    let mut best = (steer_length, steer_plan.clone(), steer_gap);
    let mut seeds: Vec<Vec<Segment>> = vec![steer_plan.segments.clone()];
    let half = opts.budget / 2;
    if half >= needed && half < opts.budget {
        let sub = dh_upper_direct(spec, p, q, &DhOptions { budget: half, ..opts.clone() })?;
        if sub.length < best.0 {
            best = (sub.length, sub.plan.clone(), sub.gap);
        }
        seeds.push(sub.plan.segments);
    }
    let search_step = opts.search_step.max(opts.step);
    for r in 0..opts.restarts {
        let mut g = rng::stream(opts.seed, r as u64);
        let theta0 = g.gen_range(0.0..2.0 * PI);
        let orientation = if r % 2 == 0 { 1.0 } else { -1.0 };
        if let Some(s) = fan_seed(spec, p, q, opts.budget, theta0, orientation, search_step) {
            seeds.push(s);
        }
    }
    let codec = PlanCodec { k: spec.rank(), segments: opts.budget };
    for seed in &seeds {
        if seed.len() > opts.budget {
            continue;
        }
        let Some(z) = refine(spec, p, q, &codec, seed, opts) else { continue };
        let target = 1e-13 * (1.0 + max_abs(q));
        let Some((z, _)) = project_plan(spec, &codec, p, q, z, search_step, target) else { continue };
        let Some((z, _)) = project_plan(spec, &codec, p, q, z, opts.step, target) else { continue };
        let Some((gap, plan)) = gap_of(spec, p, q, codec.decode(&z), opts.step) else { continue };
        let plan = plan.without_empty();
        if gap <= accept_gap && plan.length() < best.0 {
            best = (plan.length(), plan, gap);
        }
    }
    Ok(DhResult {
        length: best.0,
        plan: best.1,
        gap: best.2,
        steer_length,
        budget: opts.budget,
        infeasible_budget: false,
    })
}

/// Grid points per axis used by [`dc_lower`]: at most 9 and at most 9^4 points in total.
fn dc_grid_per_axis(m: usize) -> usize {
    let per = (6561f64.powf(1.0 / m as f64) + 1e-9).floor() as usize;
    per.clamp(2, 9)
}

/// Crude lower bound on `d_c(p, q)`: `|p − q| / σ_max`, with `σ_max` the
/// largest singular value of the horizontal frame block over a grid on the
/// cube of half-width `|p − q|` centred at `p`. A horizontal curve of length
/// `L` moves at most `σ_max L` in the chart while it stays in that cube, and
/// it cannot reach `q` without crossing the Euclidean ball the cube contains.
pub fn dc_lower(spec: &StructureSpec, p: &[f64], q: &[f64]) -> Result<f64> {
    let m = spec.dim();
    if p.len() != m || q.len() != m {
        return Err(Error::Dimension(format!("points must have {m} coordinates")));
    }
    let dist = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    if dist == 0.0 {
        return Ok(0.0);
    }
    let cube = crate::structure::DomainBox {
        lo: p.iter().map(|v| v - dist).collect(),
        hi: p.iter().map(|v| v + dist).collect(),
    };
    let k = spec.rank();
    let mut smax: f64 = 0.0;
    for x in cube.grid(dc_grid_per_axis(m)) {
        let mut a = DMatrix::zeros(m, k);
        for (c, f) in spec.horizontal.iter().enumerate() {
            // points outside the chart's valid region are skipped
            if let Ok(v) = f.eval(&x) {
                a.set_column(c, &DVector::from_vec(v));
            }
        }
        smax = smax.max(a.singular_values().max());
    }
    if smax <= 0.0 {
        return Err(Error::Sampling("horizontal frame vanished on the sampling grid".into()));
    }
    Ok(dist / smax)
}

/// How [`estimate_distance`] measures `d̂`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DistanceMethod {
    /// Length of the steering plan.
    Steer,
    /// [`dh_upper`] with the given budget and restarts.
    DhUpper { budget: usize, restarts: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceOptions {
    pub method: DistanceMethod,
    pub steer: SteerOptions,
    pub seed: u64,
}

impl Default for DistanceOptions {
    fn default() -> Self {
        DistanceOptions { method: DistanceMethod::Steer, steer: SteerOptions::default(), seed: rng::DEFAULT_SEED }
    }
}

/// Broken-geodesic distance estimate `d̂(p, q)` (an upper bound on `d_H`).
pub fn estimate_distance(spec: &StructureSpec, p: &[f64], q: &[f64], opts: &DistanceOptions) -> Result<f64> {
    match &opts.method {
        DistanceMethod::Steer => {
            let st = steer(spec, p, q, &opts.steer)?;
            if !st.converged {
                return Err(Error::NoConvergence { residual: st.residual, iterations: st.iterations });
            }
            Ok(st.plan.length())
        }
        DistanceMethod::DhUpper { budget, restarts } => {
            let o = DhOptions {
                budget: *budget,
                restarts: *restarts,
                step: opts.steer.step,
                seed: opts.seed,
                steer: opts.steer.clone(),
                ..DhOptions::default()
            };
            Ok(dh_upper(spec, p, q, &o)?.length)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallBoxOptions {
    pub samples: usize,
    pub step: f64,
    pub seed: u64,
    /// Largest admissible radius.
    pub eps0: f64,
    pub steer: SteerOptions,
}

impl Default for BallBoxOptions {
    fn default() -> Self {
        BallBoxOptions { samples: 200, step: DEFAULT_STEP, seed: rng::DEFAULT_SEED, eps0: 1.0, steer: SteerOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallBoxSample {
    pub part: char,
    pub index: usize,
    pub params: Vec<f64>,
    pub target: Vec<f64>,
    pub distance: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallBoxReport {
    pub eps: f64,
    pub nominal_n: usize,
    pub actual_n: usize,
    pub weights: Vec<usize>,
    /// Part (a): flow images of the parameter cube whose estimated distance exceeds `eps`.
    pub violations_a: usize,
    /// Part (b): weighted-box targets not reached with parameters in the cube.
    pub misses_b: usize,
    /// Largest `c` such that every part-(b) target with `d̂ ≤ c·eps` was hit.
    pub c_hat: f64,
    /// Smallest `C` such that every part-(b) target was steered with `max |t_i| ≤ C·eps/N`.
    pub big_c_hat: f64,
    pub samples: Vec<BallBoxSample>,
}

impl BallBoxReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("part,index,params,target,distance,ok\n");
        for s in &self.samples {
            let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(" ");
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                s.part,
                s.index,
                join(&s.params),
                join(&s.target),
                s.distance,
                s.ok
            ));
        }
        out
    }
}

/// Empirical check of the ball-box inclusions at `y` with radius `eps`.
pub fn ballbox_probe(spec: &StructureSpec, y: &[f64], eps: f64, opts: &BallBoxOptions) -> Result<BallBoxReport> {
    if !(eps >= 0.0) || eps > opts.eps0 {
        return Err(Error::InvalidInput(format!("radius must lie in [0, {}]", opts.eps0)));
    }
    let frame = adapted_frame(spec, y, opts.steer.rank_tol)?;
    let (nominal_n, actual_n) = segment_count(&frame.growth_vector(opts.steer.rank_tol));
    let mut report = BallBoxReport {
        eps,
        nominal_n,
        actual_n,
        weights: frame.weights.clone(),
        violations_a: 0,
        misses_b: 0,
        c_hat: 0.0,
        big_c_hat: 0.0,
        samples: Vec::new(),
    };
    if eps == 0.0 || opts.samples == 0 {
        return Ok(report);
    }
    let m = spec.dim();
    let radius = eps / nominal_n as f64;
    let steer_opts = SteerOptions { step: opts.step, ..opts.steer.clone() };
    for i in 0..opts.samples {
        let params = rng::uniform_cube(opts.seed, 2 * i as u64, m, radius);
        let (end, plan) = f_map_with_frame(spec, &frame, &params, opts.step)?;
        let mut d = plan.length();
        if let Ok(st) = steer(spec, y, &end, &steer_opts) {
            if st.converged {
                d = d.min(st.plan.length());
            }
        }
        let ok = d <= eps * (1.0 + 1e-12);
        if !ok {
            report.violations_a += 1;
        }
        report.samples.push(BallBoxSample { part: 'a', index: i, params, target: end, distance: d, ok });
    }
    let e_y = frame.matrix_at(y)?;
    let mut hit_d: Vec<f64> = Vec::new();
    let mut miss_d: Vec<f64> = Vec::new();
    for i in 0..opts.samples {
        // weighted box of a random radius in (0, eps], so both hits and misses occur
        let mut g = rng::stream(opts.seed, 2 * i as u64 + 1);
        let r = eps * (1.0 - g.gen::<f64>());
        let s: Vec<f64> = frame
            .weights
            .iter()
            .map(|&w| {
                let half = r.powi(w as i32);
                g.gen_range(-half..=half)
            })
            .collect();
        let target: Vec<f64> = (e_y.clone() * DVector::from_column_slice(&s)).iter().zip(y).map(|(d, b)| b + d).collect();
        if !spec.domain.contains(&target) {
            continue;
        }
        let st = steer(spec, y, &target, &steer_opts)?;
        let tmax = st.max_param();
        let d = st.plan.length();
        let ok = st.converged && st.hops() == 1 && tmax <= radius * (1.0 + 1e-12);
        if st.converged {
            report.big_c_hat = report.big_c_hat.max(tmax * nominal_n as f64 / eps);
        }
        if ok {
            hit_d.push(d);
        } else {
            report.misses_b += 1;
            miss_d.push(d);
        }
        let params = st.params.into_iter().flatten().collect();
        report.samples.push(BallBoxSample { part: 'b', index: i, params, target, distance: d, ok });
    }
    report.c_hat = if let Some(min_miss) = miss_d.iter().copied().reduce(f64::min) {
        min_miss / eps
    } else {
        hit_d.iter().copied().fold(0.0, f64::max) / eps
    };
    Ok(report)
}
