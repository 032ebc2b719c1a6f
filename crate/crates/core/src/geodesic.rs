//! Nonholonomic geodesics (frame form and constraint form), Riemannian
//! geodesics of the frame metric and the horizontal exponential map.
//!
//! All integrators are classical fixed-step RK4. The step actually used is
//! `T / ceil(|T| / step)` so the final sample lands exactly on `T`. Leaving
//! the domain truncates the curve and sets a flag instead of failing.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::connection::{christoffels, horizontal_symbols, quadratic_term};
use crate::error::{EvalError, Error, Result};
use crate::geometry::FrameAt;
use crate::structure::StructureSpec;

/// Default integration step.
pub const DEFAULT_STEP: f64 = 1e-3;

/// A sampled trajectory: chart points and frame-coordinate velocities.
///
/// For horizontal curves the velocities have `k` entries; curves produced by
/// [`riemannian_geodesic`] carry all `m` frame coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizontalCurve {
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub velocities: Vec<Vec<f64>>,
    pub step: f64,
    /// Set when the trajectory left the domain before reaching the final time.
    pub truncated: bool,
    pub exit_time: Option<f64>,
}

impl HorizontalCurve {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn endpoint(&self) -> &[f64] {
        self.points.last().expect("curves have at least one sample")
    }

    pub fn final_velocity(&self) -> &[f64] {
        self.velocities.last().expect("curves have at least one sample")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("curves have at least one sample")
    }

    /// Largest deviation of the frame speed from its initial value.
    pub fn speed_drift(&self) -> f64 {
        let norm = |v: &Vec<f64>| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let s0 = norm(&self.velocities[0]);
        self.velocities.iter().map(|v| (norm(v) - s0).abs()).fold(0.0, f64::max)
    }

    /// CSV with header `t,x1..xm,u1..uk`.
    pub fn to_csv(&self) -> String {
        let m = self.points.first().map_or(0, Vec::len);
        let k = self.velocities.first().map_or(0, Vec::len);
        let mut header = vec!["t".to_string()];
        header.extend((1..=m).map(|i| format!("x{i}")));
        header.extend((1..=k).map(|i| format!("u{i}")));
        let mut out = header.join(",");
        out.push('\n');
        for s in 0..self.len() {
            let mut row = vec![self.times[s].to_string()];
            row.extend(self.points[s].iter().map(f64::to_string));
            row.extend(self.velocities[s].iter().map(f64::to_string));
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Raw RK4 output on the full state vector.
pub(crate) struct Integration {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub step: f64,
    pub truncated: bool,
    pub exit_time: Option<f64>,
}

impl Integration {
    pub fn last(&self) -> &[f64] {
        self.states.last().expect("non-empty")
    }
}

fn blowup_at(time: f64) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Eval(EvalError::NonFinite) => Error::BlowUp { time },
        other => other,
    }
}

/// Fixed-step RK4 on `state`, whose first `m` entries are a chart point that
/// must stay in the domain. With `record == false` only the first and last
/// states are kept.
pub(crate) fn integrate<F>(
    spec: &StructureSpec,
    state0: Vec<f64>,
    t_final: f64,
    step: f64,
    record: bool,
    rhs: F,
) -> Result<Integration>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let m = spec.dim();
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::InvalidInput(format!("step must be positive, got {step}")));
    }
    if !t_final.is_finite() {
        return Err(Error::InvalidInput("final time must be finite".into()));
    }
    if state0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("initial data must be finite".into()));
    }
    if !spec.domain.contains(&state0[..m]) {
        return Err(Error::InvalidInput(format!("start point {:?} lies outside the domain", &state0[..m])));
    }
    let n = (t_final.abs() / step).ceil() as usize;
    let h = if n == 0 { 0.0 } else { t_final / n as f64 };
    let mut times = vec![0.0];
    let mut states = vec![state0.clone()];
    let mut y = state0;
    let mut truncated = false;
    let mut exit_time = None;
    let mut t_cur = 0.0;
    let dim = y.len();
    let mut tmp = vec![0.0; dim];
    for s in 0..n {
        let t_next = if s + 1 == n { t_final } else { (s + 1) as f64 * h };
        let t_here = s as f64 * h;
        let k1 = rhs(&y).map_err(blowup_at(t_here))?;
        for i in 0..dim {
            tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        let k2 = rhs(&tmp).map_err(blowup_at(t_here))?;
        for i in 0..dim {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        let k3 = rhs(&tmp).map_err(blowup_at(t_here))?;
        for i in 0..dim {
            tmp[i] = y[i] + h * k3[i];
        }
        let k4 = rhs(&tmp).map_err(blowup_at(t_here))?;
        let next: Vec<f64> = (0..dim)
            .map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect();
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp { time: t_next });
        }
        if !spec.domain.contains(&next[..m]) {
            truncated = true;
            exit_time = Some(t_next);
            break;
        }
        y = next;
        t_cur = t_next;
        if record {
            times.push(t_next);
            states.push(y.clone());
        }
    }
    if !record && t_cur != 0.0 {
        times.push(t_cur);
        states.push(y);
    }
    Ok(Integration { times, states, step: h.abs(), truncated, exit_time })
}

/// `ẋ = Σ u^i X_i(x)`, `u̇^r = −Γ^r_ij(x) u^i u^j`.
pub(crate) fn horizontal_rhs(spec: &StructureSpec, state: &[f64]) -> Result<Vec<f64>> {
    let m = spec.dim();
    let k = spec.rank();
    let x = &state[..m];
    let u = &state[m..];
    let frame = FrameAt::new(spec, x)?;
    let gamma = horizontal_symbols(spec, &frame, x)?;
    let mut out = vec![0.0; m + k];
    for i in 0..k {
        if u[i] == 0.0 {
            continue;
        }
        for r in 0..m {
            out[r] += frame.a[(r, i)] * u[i];
        }
    }
    quadratic_term(&gamma, u, &mut out[m..]);
    Ok(out)
}

fn check_inputs(spec: &StructureSpec, x0: &[f64], v0: &[f64], expected: usize) -> Result<()> {
    if x0.len() != spec.dim() {
        return Err(Error::Dimension(format!("start point has {} coordinates, expected {}", x0.len(), spec.dim())));
    }
    if v0.len() != expected {
        return Err(Error::Dimension(format!("initial velocity has {} entries, expected {expected}", v0.len())));
    }
    Ok(())
}

fn split_curve(m: usize, run: Integration) -> HorizontalCurve {
    let (points, velocities) = run.states.into_iter().map(|s| (s[..m].to_vec(), s[m..].to_vec())).unzip();
    HorizontalCurve {
        times: run.times,
        points,
        velocities,
        step: run.step,
        truncated: run.truncated,
        exit_time: run.exit_time,
    }
}

/// Nonholonomic geodesic `D_γ̇ γ̇ = 0` from `x0` with frame velocity `v0`,
/// sampled on `[0, T]` (or `[T, 0]` backwards when `T < 0`).
pub fn nonholonomic_geodesic(spec: &StructureSpec, x0: &[f64], v0: &[f64], t: f64, step: f64) -> Result<HorizontalCurve> {
    check_inputs(spec, x0, v0, spec.rank())?;
    let mut state = x0.to_vec();
    state.extend_from_slice(v0);
    let run = integrate(spec, state, t, step, true, |s| horizontal_rhs(spec, s))?;
    Ok(split_curve(spec.dim(), run))
}

/// Endpoint and final frame velocity of a nonholonomic geodesic without
/// storing samples. Errors with [`Error::DomainExit`] if the domain is left.
pub fn geodesic_endpoint(spec: &StructureSpec, x0: &[f64], v0: &[f64], t: f64, step: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    check_inputs(spec, x0, v0, spec.rank())?;
    let mut state = x0.to_vec();
    state.extend_from_slice(v0);
    let run = integrate(spec, state, t, step, false, |s| horizontal_rhs(spec, s))?;
    if let Some(time) = run.exit_time {
        return Err(Error::DomainExit { time });
    }
    let m = spec.dim();
    let last = run.last();
    Ok((last[..m].to_vec(), last[m..].to_vec()))
}

/// `exp^H_x(v) = γ_v(1)`, integrated with step `1e-3 / max(1, |v|)`.
pub fn horizontal_exponential(spec: &StructureSpec, x0: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    horizontal_exponential_with_step(spec, x0, v, DEFAULT_STEP / norm.max(1.0))
}

pub fn horizontal_exponential_with_step(spec: &StructureSpec, x0: &[f64], v: &[f64], step: f64) -> Result<Vec<f64>> {
    Ok(geodesic_endpoint(spec, x0, v, 1.0, step)?.0)
}

/// Geodesic of the Riemannian metric making the whole frame orthonormal:
/// `ẋ = Σ w^a E_a`, `ẇ^c = −Γ^c_ab w^a w^b`. Velocities carry `m` entries.
pub fn riemannian_geodesic(spec: &StructureSpec, x0: &[f64], w0: &[f64], t: f64, step: f64) -> Result<HorizontalCurve> {
    let m = spec.dim();
    check_inputs(spec, x0, w0, m)?;
    let mut state = x0.to_vec();
    state.extend_from_slice(w0);
    let rhs = |s: &[f64]| -> Result<Vec<f64>> {
        let x = &s[..m];
        let w = &s[m..];
        let a = crate::geometry::frame_matrix(spec, x)?;
        let table = christoffels(spec, x)?;
        let mut out = vec![0.0; 2 * m];
        let dx = &a * DVector::from_column_slice(w);
        out[..m].copy_from_slice(dx.as_slice());
        for c in 0..m {
            let mut acc = 0.0;
            for i in 0..m {
                for j in 0..m {
                    acc += table.full(c, i, j) * w[i] * w[j];
                }
            }
            out[m + c] = -acc;
        }
        Ok(out)
    };
    let run = integrate(spec, state, t, step, true, rhs)?;
    Ok(split_curve(m, run))
}

/// Coordinate metric data at a point: `G = A⁻ᵀA⁻¹`, its inverse `AAᵀ`, and the
/// exact partials `∂_e(A⁻¹) = −A⁻¹ (∂_e A) A⁻¹`.
struct CoordinateMetric {
    a_inv: DMatrix<f64>,
    g_inv: DMatrix<f64>,
    d_a_inv: Vec<DMatrix<f64>>,
    d_g: Vec<DMatrix<f64>>,
}

impl CoordinateMetric {
    fn at(spec: &StructureSpec, q: &[f64]) -> Result<CoordinateMetric> {
        let m = spec.dim();
        let frame = FrameAt::new(spec, q)?;
        let a_inv = frame.inverse();
        let g_inv = &frame.a * frame.a.transpose();
        let jac: Vec<DMatrix<f64>> = spec.fields().map(|f| f.eval_jacobian(q)).collect::<Result<_>>()?;
        let mut d_a_inv = Vec::with_capacity(m);
        let mut d_g = Vec::with_capacity(m);
        for e in 0..m {
            let d_a = DMatrix::from_fn(m, m, |i, col| jac[col][(i, e)]);
            let dai = -(&a_inv * d_a * &a_inv);
            let dg = dai.transpose() * &a_inv + a_inv.transpose() * &dai;
            d_a_inv.push(dai);
            d_g.push(dg);
        }
        Ok(CoordinateMetric { a_inv, g_inv, d_a_inv, d_g })
    }

    /// `Γ^c_ab` of `G`, flattened as `(c * m + a) * m + b`.
    fn christoffels(&self) -> Vec<f64> {
        let m = self.g_inv.nrows();
        let mut lowered = vec![0.0; m * m * m];
        for d in 0..m {
            for a in 0..m {
                for b in 0..m {
                    lowered[(d * m + a) * m + b] =
                        0.5 * (self.d_g[a][(d, b)] + self.d_g[b][(d, a)] - self.d_g[d][(a, b)]);
                }
            }
        }
        let mut out = vec![0.0; m * m * m];
        for c in 0..m {
            for d in 0..m {
                let g = self.g_inv[(c, d)];
                if g == 0.0 {
                    continue;
                }
                for ab in 0..m * m {
                    out[c * m * m + ab] += g * lowered[d * m * m + ab];
                }
            }
        }
        out
    }
}

/// `q̈^c + (Γ^c_ab + (μ_i)_{a;b} (μ_i)^c) q̇^a q̇^b = 0` with `μ_i` the
/// coframe members dual to the vertical frame fields.
fn constraint_rhs(spec: &StructureSpec, state: &[f64]) -> Result<Vec<f64>> {
    let m = spec.dim();
    let k = spec.rank();
    let q = &state[..m];
    let v = &state[m..];
    let metric = CoordinateMetric::at(spec, q)?;
    let gamma = metric.christoffels();
    let mut out = vec![0.0; 2 * m];
    out[..m].copy_from_slice(v);
    // (∇μ_i)(q̇, q̇) = Σ_ab (∂_b μ_{i,a} − Γ^d_ab μ_{i,d}) v^a v^b
    let mut lambda = vec![0.0; m - k];
    for (i, l) in lambda.iter_mut().enumerate() {
        let row = k + i;
        let mut acc = 0.0;
        for a in 0..m {
            for b in 0..m {
                let mut cov = metric.d_a_inv[b][(row, a)];
                for d in 0..m {
                    cov -= gamma[(d * m + a) * m + b] * metric.a_inv[(row, d)];
                }
                acc += cov * v[a] * v[b];
            }
        }
        *l = acc;
    }
    for c in 0..m {
        let mut acc = 0.0;
        for a in 0..m {
            for b in 0..m {
                acc += gamma[(c * m + a) * m + b] * v[a] * v[b];
            }
        }
        for (i, l) in lambda.iter().enumerate() {
            // (μ_i)^c = Σ_d G^{cd} μ_{i,d}
            let raised: f64 = (0..m).map(|d| metric.g_inv[(c, d)] * metric.a_inv[(k + i, d)]).sum();
            acc += l * raised;
        }
        out[m + c] = -acc;
    }
    Ok(out)
}

/// Nonholonomic geodesic from the coordinate constraint form. The returned
/// curve carries frame velocities recovered as `(A⁻¹ q̇)_{1..k}`.
pub fn geodesic_from_constraints(spec: &StructureSpec, x0: &[f64], v0: &[f64], t: f64, step: f64) -> Result<HorizontalCurve> {
    let m = spec.dim();
    let k = spec.rank();
    check_inputs(spec, x0, v0, k)?;
    let frame = FrameAt::new(spec, x0)?;
    let qdot = frame.a.columns(0, k) * DVector::from_column_slice(v0);
    let mut state = x0.to_vec();
    state.extend_from_slice(qdot.as_slice());
    let run = integrate(spec, state, t, step, true, |s| constraint_rhs(spec, s))?;
    let mut curve = split_curve(m, run);
    for (p, vel) in curve.points.iter().zip(curve.velocities.iter_mut()) {
        let frame = FrameAt::new(spec, p)?;
        let c = frame.coefficients(&DVector::from_column_slice(vel));
        *vel = c.iter().take(k).copied().collect();
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::builtin;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn heisenberg_examples() {
        let h = builtin("heisenberg-1").unwrap();
        let c = nonholonomic_geodesic(&h, &[0.0; 3], &[1.0, 0.0], 1.0, DEFAULT_STEP).unwrap();
        assert!(close(c.endpoint(), &[1.0, 0.0, 0.0], 1e-12));
        assert_eq!(c.len(), 1001);
        let c = nonholonomic_geodesic(&h, &[0.0, 1.0, 0.0], &[1.0, 0.0], 1.0, DEFAULT_STEP).unwrap();
        assert!(close(c.endpoint(), &[1.0, 1.0, 0.5], 1e-12));
        let s = 0.5f64.sqrt();
        let c = nonholonomic_geodesic(&h, &[0.0; 3], &[s, s], 2f64.sqrt(), DEFAULT_STEP).unwrap();
        assert!(close(c.endpoint(), &[1.0, 1.0, 0.0], 1e-12));
    }

    #[test]
    fn exponential_examples() {
        let h = builtin("heisenberg-1").unwrap();
        assert!(close(&horizontal_exponential(&h, &[0.0; 3], &[1.0, 0.0]).unwrap(), &[1.0, 0.0, 0.0], 1e-12));
        assert_eq!(horizontal_exponential(&h, &[0.0; 3], &[0.0, 0.0]).unwrap(), vec![0.0; 3]);
        let p = horizontal_exponential(&h, &[0.0, 1.0, 0.0], &[1.0, 0.0]).unwrap();
        assert!(close(&p, &[1.0, 1.0, 0.5], 1e-12));
    }

    #[test]
    fn truncation_sets_flag() {
        let h = builtin("heisenberg-1").unwrap();
        let c = nonholonomic_geodesic(&h, &[4.5, 0.0, 0.0], &[1.0, 0.0], 2.0, 0.01).unwrap();
        assert!(c.truncated);
        let exit = c.exit_time.unwrap();
        assert!(exit > 0.5 && exit < 0.52, "{exit}");
        assert!(h.domain.contains(c.endpoint()));
        assert!(matches!(
            geodesic_endpoint(&h, &[4.5, 0.0, 0.0], &[1.0, 0.0], 2.0, 0.01),
            Err(Error::DomainExit { .. })
        ));
        assert!(nonholonomic_geodesic(&h, &[9.0, 0.0, 0.0], &[1.0, 0.0], 1.0, 0.01).is_err());
        assert!(nonholonomic_geodesic(&h, &[0.0; 3], &[1.0, 0.0], 1.0, 0.0).is_err());
    }

    #[test]
    fn backwards_time() {
        let h = builtin("heisenberg-1").unwrap();
        let c = nonholonomic_geodesic(&h, &[0.0; 3], &[1.0, 0.0], -1.0, DEFAULT_STEP).unwrap();
        assert!(close(c.endpoint(), &[-1.0, 0.0, 0.0], 1e-12));
        assert_eq!(c.final_time(), -1.0);
    }

    #[test]
    fn riemannian_matches_on_carnot() {
        for name in ["heisenberg-1", "engel"] {
            let spec = builtin(name).unwrap();
            let x0: Vec<f64> = (0..spec.dim()).map(|i| 0.1 * i as f64).collect();
            let mut w0 = vec![0.0; spec.dim()];
            w0[0] = 0.6;
            w0[1] = -0.8;
            let r = riemannian_geodesic(&spec, &x0, &w0, 1.0, DEFAULT_STEP).unwrap();
            let n = nonholonomic_geodesic(&spec, &x0, &w0[..2], 1.0, DEFAULT_STEP).unwrap();
            assert!(close(r.endpoint(), n.endpoint(), 1e-8), "{name}");
        }
        let h = builtin("heisenberg-1").unwrap();
        let r = riemannian_geodesic(&h, &[0.0; 3], &[0.0, 0.0, 1.0], 1.0, DEFAULT_STEP).unwrap();
        assert!(r.speed_drift() < 1e-9);
    }

    #[test]
    fn constraint_form_agrees() {
        let h = builtin("heisenberg-1").unwrap();
        let c = geodesic_from_constraints(&h, &[0.0, 1.0, 0.0], &[1.0, 0.0], 1.0, DEFAULT_STEP).unwrap();
        assert!(close(c.endpoint(), &[1.0, 1.0, 0.5], 1e-7));
        let p = builtin("perturbed-heisenberg").unwrap();
        let x0 = [0.2, -0.3, 0.1];
        let v0 = [0.6, 0.8];
        let a = geodesic_from_constraints(&p, &x0, &v0, 0.5, DEFAULT_STEP).unwrap();
        let b = nonholonomic_geodesic(&p, &x0, &v0, 0.5, DEFAULT_STEP).unwrap();
        assert!(close(a.endpoint(), b.endpoint(), 1e-6));
        assert!(close(a.final_velocity(), b.final_velocity(), 1e-6));
        let z = geodesic_from_constraints(&p, &x0, &[0.0, 0.0], 0.5, DEFAULT_STEP).unwrap();
        assert_eq!(z.endpoint(), &x0);
    }

    #[test]
    fn csv_header() {
        let h = builtin("heisenberg-1").unwrap();
        let c = nonholonomic_geodesic(&h, &[0.0; 3], &[1.0, 0.0], 0.002, DEFAULT_STEP).unwrap();
        let csv = c.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("t,x1,x2,x3,u1,u2"));
        assert_eq!(lines.count(), 3);
    }
}
