//! Christoffel symbols of the horizontal connection and of the Levi-Civita
//! connection of the frame metric, transport along curves, and the horizontal
//! gradient, divergence, sublaplacian and Hessian.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{EvalError, Error, Result};
use crate::expr::Expr;
use crate::geodesic::HorizontalCurve;
use crate::geometry::{horizontal_bracket_coefficients, structure_functions, FrameAt};
use crate::structure::StructureSpec;

/// `∇_{E_a} E_b = Σ_c Γ^c_ab E_c` for the full frame, and its horizontal block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChristoffelTable {
    pub point: Vec<f64>,
    pub k: usize,
    pub m: usize,
    /// `full[(c * m + a) * m + b] = Γ^c_ab`
    full: Vec<f64>,
}

impl ChristoffelTable {
    /// `Γ^c_ab`, full frame.
    pub fn full(&self, c: usize, a: usize, b: usize) -> f64 {
        self.full[(c * self.m + a) * self.m + b]
    }

    /// `Γ^r_ij`, horizontal indices only.
    pub fn horizontal(&self, r: usize, i: usize, j: usize) -> f64 {
        debug_assert!(r < self.k && i < self.k && j < self.k);
        self.full(r, i, j)
    }

    /// `[r][i][j]`
    pub fn horizontal_nested(&self) -> Vec<Vec<Vec<f64>>> {
        let k = self.k;
        (0..k).map(|r| (0..k).map(|i| (0..k).map(|j| self.horizontal(r, i, j)).collect()).collect()).collect()
    }

    /// `[c][a][b]`
    pub fn full_nested(&self) -> Vec<Vec<Vec<f64>>> {
        let m = self.m;
        (0..m).map(|c| (0..m).map(|a| (0..m).map(|b| self.full(c, a, b)).collect()).collect()).collect()
    }

    pub fn max_abs_horizontal(&self) -> f64 {
        let k = self.k;
        let mut worst: f64 = 0.0;
        for r in 0..k {
            for i in 0..k {
                for j in 0..k {
                    worst = worst.max(self.horizontal(r, i, j).abs());
                }
            }
        }
        worst
    }

    /// Frame coefficients of `B(X_i, X_j) = ∇_{X_i}X_j − D_{X_i}X_j`, a vertical
    /// vector; entry `c` of the result is the coefficient on `E_{k+c}`.
    pub fn second_fundamental(&self, i: usize, j: usize) -> Vec<f64> {
        (self.k..self.m).map(|c| self.full(c, i, j)).collect()
    }
}

/// Orthonormal-frame Koszul formula `Γ^c_ab = ½(c_ab^c − c_bc^a + c_ca^b)`.
pub fn christoffels(spec: &StructureSpec, p: &[f64]) -> Result<ChristoffelTable> {
    let c = structure_functions(spec, p)?;
    let m = spec.dim();
    let mut full = vec![0.0; m * m * m];
    for cc in 0..m {
        for a in 0..m {
            for b in 0..m {
                full[(cc * m + a) * m + b] = 0.5 * (c.get(a, b, cc) - c.get(b, cc, a) + c.get(cc, a, b));
            }
        }
    }
    Ok(ChristoffelTable { point: p.to_vec(), k: spec.rank(), m, full })
}

/// Horizontal symbols only, `[r][i][j]` flattened as `(r * k + i) * k + j`.
///
/// Uses only brackets of horizontal pairs, which are precomputed symbolically.
pub(crate) fn horizontal_symbols(spec: &StructureSpec, frame: &FrameAt, p: &[f64]) -> Result<Vec<f64>> {
    let k = spec.rank();
    let coeffs = horizontal_bracket_coefficients(spec, frame, p)?;
    // c(i, j, d) for horizontal i, j, d
    let c = |i: usize, j: usize, d: usize| -> f64 {
        use std::cmp::Ordering;
        match i.cmp(&j) {
            Ordering::Equal => 0.0,
            Ordering::Less => coeffs[(d, spec.bracket_slot(i, j))],
            Ordering::Greater => -coeffs[(d, spec.bracket_slot(j, i))],
        }
    };
    let mut out = vec![0.0; k * k * k];
    for r in 0..k {
        for i in 0..k {
            for j in 0..k {
                out[(r * k + i) * k + j] = 0.5 * (c(i, j, r) - c(j, r, i) + c(r, i, j));
            }
        }
    }
    Ok(out)
}

/// `−Γ^r_ij u^i u^j` from a flattened horizontal table.
pub(crate) fn quadratic_term(gamma: &[f64], u: &[f64], out: &mut [f64]) {
    let k = u.len();
    for r in 0..k {
        let mut acc = 0.0;
        for i in 0..k {
            if u[i] == 0.0 {
                continue;
            }
            for j in 0..k {
                acc += gamma[(r * k + i) * k + j] * u[i] * u[j];
            }
        }
        out[r] = -acc;
    }
}

/// A scalar function with its symbolic first and second partial derivatives.
#[derive(Debug, Clone)]
pub struct ScalarField {
    pub f: Expr,
    grad: Vec<Expr>,
    hess: Vec<Vec<Expr>>,
}

impl ScalarField {
    /// Resolves `f` against the chart; unknown identifiers are rejected here.
    pub fn new(spec: &StructureSpec, f: &Expr) -> Result<ScalarField> {
        let f = f.resolve(&spec.coords);
        if let Some(name) = f.unresolved().into_iter().next() {
            return Err(Error::Eval(EvalError::UnknownIdentifier(name)));
        }
        let m = spec.dim();
        let grad: Vec<Expr> = (0..m).map(|j| f.derivative(j)).collect();
        let hess = grad.iter().map(|g| (0..m).map(|j| g.derivative(j)).collect()).collect();
        Ok(ScalarField { f, grad, hess })
    }

    pub fn value(&self, p: &[f64]) -> Result<f64> {
        Ok(self.f.eval(p)?)
    }

    fn gradient(&self, p: &[f64]) -> Result<DVector<f64>> {
        let mut g = DVector::zeros(self.grad.len());
        for (i, e) in self.grad.iter().enumerate() {
            if !e.is_zero() {
                g[i] = e.eval(p)?;
            }
        }
        Ok(g)
    }

    fn hessian(&self, p: &[f64]) -> Result<DMatrix<f64>> {
        let m = self.grad.len();
        let mut h = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let e = &self.hess[i][j];
                if !e.is_zero() {
                    let v = e.eval(p)?;
                    h[(i, j)] = v;
                    h[(j, i)] = v;
                }
            }
        }
        Ok(h)
    }
}

/// First and second frame derivatives of a scalar at a point:
/// `first[a] = E_a f`, `second[(a, b)] = E_a E_b f`.
struct FrameDerivatives {
    first: DVector<f64>,
    second: DMatrix<f64>,
}

fn frame_derivatives(spec: &StructureSpec, f: &ScalarField, p: &[f64], count: usize) -> Result<FrameDerivatives> {
    let grad = f.gradient(p)?;
    let hess = f.hessian(p)?;
    let mut cols = Vec::with_capacity(count);
    let mut jacs = Vec::with_capacity(count);
    for a in 0..count {
        let field = spec.field(a);
        cols.push(DVector::from_vec(field.eval(p)?));
        jacs.push(field.eval_jacobian(p)?);
    }
    let first = DVector::from_fn(count, |a, _| cols[a].dot(&grad));
    // E_a(E_b f) = (J_b E_a)·∇f + E_aᵀ ∇²f E_b
    let second = DMatrix::from_fn(count, count, |a, b| {
        (&jacs[b] * &cols[a]).dot(&grad) + (cols[a].transpose() * &hess * &cols[b])[(0, 0)]
    });
    Ok(FrameDerivatives { first, second })
}

/// `(X_1 f, …, X_k f)(p)`.
pub fn horizontal_gradient(spec: &StructureSpec, f: &Expr, p: &[f64]) -> Result<Vec<f64>> {
    check_point(spec, p)?;
    let sf = ScalarField::new(spec, f)?;
    let grad = sf.gradient(p)?;
    spec.horizontal
        .iter()
        .map(|x| Ok(DVector::from_vec(x.eval(p)?).dot(&grad)))
        .collect()
}

/// `Σ_i (X_i X^i + X^j Γ^i_ij)(p)` for the horizontal field `Σ X^i X_i`.
pub fn horizontal_divergence(spec: &StructureSpec, coefficients: &[Expr], p: &[f64]) -> Result<f64> {
    check_point(spec, p)?;
    let k = spec.rank();
    if coefficients.len() != k {
        return Err(Error::Dimension(format!("expected {k} frame coefficients, got {}", coefficients.len())));
    }
    let frame = FrameAt::new(spec, p)?;
    let gamma = horizontal_symbols(spec, &frame, p)?;
    let mut total = 0.0;
    let mut values = Vec::with_capacity(k);
    for (i, c) in coefficients.iter().enumerate() {
        let sf = ScalarField::new(spec, c)?;
        values.push(sf.value(p)?);
        let grad = sf.gradient(p)?;
        total += DVector::from_vec(spec.horizontal[i].eval(p)?).dot(&grad);
    }
    for i in 0..k {
        for (j, vj) in values.iter().enumerate() {
            total += vj * gamma[(i * k + i) * k + j];
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizontalHessian {
    pub point: Vec<f64>,
    /// Row-major k×k.
    pub matrix: Vec<Vec<f64>>,
}

impl HorizontalHessian {
    pub fn as_matrix(&self) -> DMatrix<f64> {
        let k = self.matrix.len();
        DMatrix::from_fn(k, k, |i, j| self.matrix[i][j])
    }

    pub fn trace(&self) -> f64 {
        (0..self.matrix.len()).map(|i| self.matrix[i][i]).sum()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.as_matrix().symmetric_eigenvalues().min()
    }
}

pub(crate) fn hessian_matrix(spec: &StructureSpec, f: &ScalarField, p: &[f64]) -> Result<DMatrix<f64>> {
    let k = spec.rank();
    let frame = FrameAt::new(spec, p)?;
    let gamma = horizontal_symbols(spec, &frame, p)?;
    let d = frame_derivatives(spec, f, p, k)?;
    Ok(DMatrix::from_fn(k, k, |i, j| {
        let mut h = 0.5 * (d.second[(i, j)] + d.second[(j, i)]);
        for r in 0..k {
            h += 0.5 * d.first[r] * (gamma[(j * k + i) * k + r] + gamma[(i * k + j) * k + r]);
        }
        h
    }))
}

/// `H_ij = ½(X_i X_j f + X_j X_i f) + ½ (X_r f)(Γ^j_ir + Γ^i_jr)`.
pub fn horizontal_hessian(spec: &StructureSpec, f: &Expr, p: &[f64]) -> Result<HorizontalHessian> {
    check_point(spec, p)?;
    let sf = ScalarField::new(spec, f)?;
    let h = hessian_matrix(spec, &sf, p)?;
    let k = h.nrows();
    Ok(HorizontalHessian {
        point: p.to_vec(),
        matrix: (0..k).map(|i| (0..k).map(|j| h[(i, j)]).collect()).collect(),
    })
}

/// Trace of the horizontal Hessian.
pub fn sublaplacian(spec: &StructureSpec, f: &Expr, p: &[f64]) -> Result<f64> {
    Ok(horizontal_hessian(spec, f, p)?.trace())
}

/// Hessian of `f` for the frame metric, in the full frame: `E_a E_b f − Γ^c_ab E_c f`.
pub fn riemannian_hessian(spec: &StructureSpec, f: &Expr, p: &[f64]) -> Result<DMatrix<f64>> {
    check_point(spec, p)?;
    let sf = ScalarField::new(spec, f)?;
    let m = spec.dim();
    let table = christoffels(spec, p)?;
    let d = frame_derivatives(spec, &sf, p, m)?;
    Ok(DMatrix::from_fn(m, m, |a, b| {
        let mut h = d.second[(a, b)];
        for c in 0..m {
            h -= table.full(c, a, b) * d.first[c];
        }
        h
    }))
}

/// Frame coefficients of `D_U V = (U V^r + U^i V^j Γ^r_ij) X_r` for horizontal
/// fields given by their frame coefficients.
pub fn covariant_derivative(spec: &StructureSpec, u: &[Expr], v: &[Expr], p: &[f64]) -> Result<Vec<f64>> {
    check_point(spec, p)?;
    let k = spec.rank();
    if u.len() != k || v.len() != k {
        return Err(Error::Dimension(format!("expected {k} frame coefficients")));
    }
    let frame = FrameAt::new(spec, p)?;
    let gamma = horizontal_symbols(spec, &frame, p)?;
    let uv: Vec<f64> = u.iter().map(|e| ScalarField::new(spec, e)?.value(p)).collect::<Result<_>>()?;
    let vv: Vec<f64> = v.iter().map(|e| ScalarField::new(spec, e)?.value(p)).collect::<Result<_>>()?;
    let uchart = frame.a.columns(0, k) * DVector::from_column_slice(&uv);
    let mut out = vec![0.0; k];
    for r in 0..k {
        let sf = ScalarField::new(spec, &v[r])?;
        out[r] = sf.gradient(p)?.dot(&uchart);
        for i in 0..k {
            for j in 0..k {
                out[r] += uv[i] * vv[j] * gamma[(r * k + i) * k + j];
            }
        }
    }
    Ok(out)
}

/// `D/dt Y = (Ẏ^r + Y^j γ̇^i Γ^r_ij) X_r` along a sampled horizontal curve, with
/// `Ẏ` from central differences (second-order one-sided at the ends).
pub fn covariant_derivative_along(
    spec: &StructureSpec,
    curve: &HorizontalCurve,
    y: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    let k = spec.rank();
    let n = curve.len();
    if y.len() != n {
        return Err(Error::Sampling(format!("{} field samples for {n} curve samples", y.len())));
    }
    if n < 3 {
        return Err(Error::Sampling("at least three samples are required".into()));
    }
    if y.iter().any(|v| v.len() != k) || curve.velocities.iter().any(|v| v.len() != k) {
        return Err(Error::Dimension(format!("field and velocity samples must have {k} entries")));
    }
    let t = &curve.times;
    let mut out = Vec::with_capacity(n);
    for s in 0..n {
        let ydot: Vec<f64> = (0..k)
            .map(|r| {
                if s == 0 {
                    let h = t[1] - t[0];
                    (-3.0 * y[0][r] + 4.0 * y[1][r] - y[2][r]) / (2.0 * h)
                } else if s == n - 1 {
                    let h = t[n - 1] - t[n - 2];
                    (3.0 * y[n - 1][r] - 4.0 * y[n - 2][r] + y[n - 3][r]) / (2.0 * h)
                } else {
                    (y[s + 1][r] - y[s - 1][r]) / (t[s + 1] - t[s - 1])
                }
            })
            .collect();
        let p = &curve.points[s];
        let frame = FrameAt::new(spec, p)?;
        let gamma = horizontal_symbols(spec, &frame, p)?;
        let u = &curve.velocities[s];
        let mut d = ydot;
        for r in 0..k {
            for i in 0..k {
                for j in 0..k {
                    d[r] += y[s][j] * u[i] * gamma[(r * k + i) * k + j];
                }
            }
        }
        out.push(d);
    }
    Ok(out)
}

/// Four-point midpoint interpolation of a sampled quantity on a uniform grid,
/// falling back to the two-point mean near the ends of short curves.
fn midpoint(samples: &[Vec<f64>], s: usize) -> Vec<f64> {
    let n = samples.len();
    if n >= 4 {
        let base = s.saturating_sub(1).min(n - 4);
        let (a, b, c, d) = (&samples[base], &samples[base + 1], &samples[base + 2], &samples[base + 3]);
        // cubic through four equally spaced nodes evaluated at the middle of interval s
        let x = (s - base) as f64 + 0.5;
        let l0 = -(x - 1.0) * (x - 2.0) * (x - 3.0) / 6.0;
        let l1 = x * (x - 2.0) * (x - 3.0) / 2.0;
        let l2 = -x * (x - 1.0) * (x - 3.0) / 2.0;
        let l3 = x * (x - 1.0) * (x - 2.0) / 6.0;
        (0..a.len()).map(|i| l0 * a[i] + l1 * b[i] + l2 * c[i] + l3 * d[i]).collect()
    } else {
        samples[s].iter().zip(&samples[s + 1]).map(|(a, b)| 0.5 * (a + b)).collect()
    }
}

/// Solve `Ẏ^r = −Y^j γ̇^i Γ^r_ij` along the sampled curve by RK4 and return `Y(T)`.
pub fn parallel_transport(spec: &StructureSpec, curve: &HorizontalCurve, y0: &[f64]) -> Result<Vec<f64>> {
    let k = spec.rank();
    if y0.len() != k {
        return Err(Error::Dimension(format!("expected a {k}-vector")));
    }
    let n = curve.len();
    if n == 0 {
        return Err(Error::Sampling("empty curve".into()));
    }
    let rhs = |p: &[f64], u: &[f64], y: &[f64]| -> Result<Vec<f64>> {
        let frame = FrameAt::new(spec, p)?;
        let gamma = horizontal_symbols(spec, &frame, p)?;
        let mut d = vec![0.0; k];
        for r in 0..k {
            for i in 0..k {
                for j in 0..k {
                    d[r] -= y[j] * u[i] * gamma[(r * k + i) * k + j];
                }
            }
        }
        Ok(d)
    };
    let axpy = |y: &[f64], a: f64, d: &[f64]| -> Vec<f64> { y.iter().zip(d).map(|(y, d)| y + a * d).collect() };
    let mut y = y0.to_vec();
    for s in 0..n - 1 {
        let h = curve.times[s + 1] - curve.times[s];
        let pm = midpoint(&curve.points, s);
        let um = midpoint(&curve.velocities, s);
        let k1 = rhs(&curve.points[s], &curve.velocities[s], &y)?;
        let k2 = rhs(&pm, &um, &axpy(&y, 0.5 * h, &k1))?;
        let k3 = rhs(&pm, &um, &axpy(&y, 0.5 * h, &k2))?;
        let k4 = rhs(&curve.points[s + 1], &curve.velocities[s + 1], &axpy(&y, h, &k3))?;
        for r in 0..k {
            y[r] += h / 6.0 * (k1[r] + 2.0 * k2[r] + 2.0 * k3[r] + k4[r]);
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp { time: curve.times[s + 1] });
        }
    }
    Ok(y)
}

fn check_point(spec: &StructureSpec, p: &[f64]) -> Result<()> {
    if p.len() != spec.dim() {
        return Err(Error::Dimension(format!("point has {} coordinates, expected {}", p.len(), spec.dim())));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expression;
    use crate::models::builtin;

    fn e(s: &str) -> Expr {
        parse_expression(s).unwrap()
    }

    #[test]
    fn carnot_horizontal_symbols_vanish() {
        for name in ["heisenberg-1", "heisenberg-2", "engel"] {
            let spec = builtin(name).unwrap();
            let p: Vec<f64> = (0..spec.dim()).map(|i| 0.3 * i as f64 - 0.5).collect();
            let t = christoffels(&spec, &p).unwrap();
            assert!(t.max_abs_horizontal() <= 1e-12, "{name}");
        }
    }

    #[test]
    fn perturbed_symbols() {
        let spec = builtin("perturbed-heisenberg").unwrap();
        let t = christoffels(&spec, &[0.0, 1.0, 0.0]).unwrap();
        assert!(t.max_abs_horizontal() > 0.1, "{:?}", t.horizontal_nested());
        assert!((t.horizontal(0, 0, 1) + 0.25).abs() < 1e-12, "{:?}", t.horizontal_nested());
        assert_eq!(t.horizontal(0, 1, 0), 0.0);
        assert!((t.horizontal(1, 0, 0) - 0.25).abs() < 1e-12);
        let frame = FrameAt::new(&spec, &[0.0, 1.0, 0.0]).unwrap();
        let fast = horizontal_symbols(&spec, &frame, &[0.0, 1.0, 0.0]).unwrap();
        for r in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    assert!((fast[(r * 2 + i) * 2 + j] - t.horizontal(r, i, j)).abs() < 1e-14);
                    assert!((t.horizontal(r, i, j) + t.horizontal(j, i, r)).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn gradient_examples() {
        let h = builtin("heisenberg-1").unwrap();
        assert_eq!(horizontal_gradient(&h, &e("x"), &[0.3, -2.0, 1.0]).unwrap(), vec![1.0, 0.0]);
        assert_eq!(horizontal_gradient(&h, &e("t"), &[0.0, 1.0, 0.0]).unwrap(), vec![0.5, 0.0]);
        assert_eq!(horizontal_gradient(&h, &e("3"), &[0.0, 1.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        assert!(horizontal_gradient(&h, &e("q"), &[0.0; 3]).is_err());
    }

    #[test]
    fn divergence_examples() {
        let h = builtin("heisenberg-1").unwrap();
        let p = [0.7, -0.1, 2.0];
        assert!((horizontal_divergence(&h, &[e("x"), e("y")], &p).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(horizontal_divergence(&h, &[e("y"), e("0")], &p).unwrap(), 0.0);
        let en = builtin("engel").unwrap();
        assert_eq!(horizontal_divergence(&en, &[e("2"), e("-1")], &[0.1, 0.2, 0.3, 0.4]).unwrap(), 0.0);
    }

    #[test]
    fn hessian_and_sublaplacian_examples() {
        let h = builtin("heisenberg-1").unwrap();
        let p = [0.4, -0.9, 1.3];
        let z = horizontal_hessian(&h, &e("t"), &p).unwrap();
        assert!(z.matrix.iter().flatten().all(|v| v.abs() < 1e-15));
        let id = horizontal_hessian(&h, &e("x^2+y^2"), &p).unwrap();
        assert_eq!(id.matrix, vec![vec![2.0, 0.0], vec![0.0, 2.0]]);
        let d = horizontal_hessian(&h, &e("x^2-y^2"), &p).unwrap();
        assert_eq!(d.matrix, vec![vec![2.0, 0.0], vec![0.0, -2.0]]);
        assert!((sublaplacian(&h, &e("x^2+y^2"), &p).unwrap() - 4.0).abs() < 1e-14);
        assert!((sublaplacian(&h, &e("x^2+y^2+t^2"), &[1.0, 1.0, 0.0]).unwrap() - 5.0).abs() < 1e-14);
        assert!(sublaplacian(&h, &e("t"), &p).unwrap().abs() < 1e-15);
    }
}
