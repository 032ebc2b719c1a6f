//! Frame evaluation, Lie brackets, structure functions, growth vectors and
//! horizontal projection.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{self, Expr};
use crate::structure::StructureSpec;

/// Default relative rank tolerance for bracket-span decisions.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

/// Longest bracket considered by [`growth_vector`] and adapted frames.
pub const BRACKET_DEPTH_CAP: usize = 6;

/// A vector field on the chart with its symbolic Jacobian.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameField {
    pub components: Vec<Expr>,
    /// `jacobian[i][j] = ∂ components[i] / ∂ x_j`
    pub jacobian: Vec<Vec<Expr>>,
}

impl FrameField {
    pub fn new(components: Vec<Expr>) -> FrameField {
        let m = components.len();
        let jacobian = components
            .iter()
            .map(|c| (0..m).map(|j| c.derivative(j)).collect())
            .collect();
        FrameField { components, jacobian }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(Expr::is_zero)
    }

    pub fn eval(&self, p: &[f64]) -> Result<Vec<f64>> {
        self.components.iter().map(|c| c.eval(p).map_err(Error::from)).collect()
    }

    pub fn eval_jacobian(&self, p: &[f64]) -> Result<DMatrix<f64>> {
        let m = self.dim();
        let mut out = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                let e = &self.jacobian[i][j];
                if !e.is_zero() {
                    out[(i, j)] = e.eval(p)?;
                }
            }
        }
        Ok(out)
    }

    /// `[self, other] = J_other · self − J_self · other`, exactly.
    pub fn bracket(&self, other: &FrameField) -> FrameField {
        let m = self.dim();
        let comps = (0..m)
            .map(|i| {
                let mut acc = Expr::num(0.0);
                for j in 0..m {
                    acc = expr::add(acc, expr::mul(other.jacobian[i][j].clone(), self.components[j].clone()));
                    acc = expr::sub(acc, expr::mul(self.jacobian[i][j].clone(), other.components[j].clone()));
                }
                acc
            })
            .collect();
        FrameField::new(comps)
    }

    /// The derivation `f ↦ Σ_j V^j ∂_j f`.
    pub fn apply(&self, f: &Expr) -> Expr {
        let mut acc = Expr::num(0.0);
        for (j, c) in self.components.iter().enumerate() {
            acc = expr::add(acc, expr::mul(c.clone(), f.derivative(j)));
        }
        acc
    }

    pub fn scaled(&self, by: &Expr) -> FrameField {
        FrameField::new(self.components.iter().map(|c| expr::mul(by.clone(), c.clone())).collect())
    }

    pub fn sum(&self, other: &FrameField) -> FrameField {
        FrameField::new(
            self.components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| expr::add(a.clone(), b.clone()))
                .collect(),
        )
    }
}

/// Exact symbolic bracket `[U, V]`.
pub fn lie_bracket(u: &FrameField, v: &FrameField) -> FrameField {
    u.bracket(v)
}

/// m×m matrix whose column `a` is frame member `a` at `p`.
pub fn frame_matrix(spec: &StructureSpec, p: &[f64]) -> Result<DMatrix<f64>> {
    let m = spec.dim();
    if p.len() != m {
        return Err(Error::Dimension(format!("point has {} coordinates, expected {m}", p.len())));
    }
    let mut a = DMatrix::zeros(m, m);
    for (col, field) in spec.fields().enumerate() {
        for (row, c) in field.components.iter().enumerate() {
            a[(row, col)] = c.eval(p)?;
        }
    }
    Ok(a)
}

/// Frame matrix at a point together with its LU factorisation.
pub(crate) struct FrameAt {
    pub a: DMatrix<f64>,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl FrameAt {
    pub fn new(spec: &StructureSpec, p: &[f64]) -> Result<FrameAt> {
        let a = frame_matrix(spec, p)?;
        let lu = a.clone().lu();
        if !lu.is_invertible() {
            return Err(Error::SingularFrame(p.to_vec()));
        }
        Ok(FrameAt { a, lu })
    }

    /// Frame coefficients of a chart vector.
    pub fn coefficients(&self, v: &DVector<f64>) -> DVector<f64> {
        self.lu.solve(v).expect("invertible frame")
    }

    pub fn coefficients_many(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        self.lu.solve(v).expect("invertible frame")
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.lu.try_inverse().expect("invertible frame")
    }
}

/// Structure functions `c_{ab}^d` with `[E_a, E_b] = Σ_d c_{ab}^d E_d`.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureFunctions {
    pub m: usize,
    data: Vec<f64>,
}

impl StructureFunctions {
    pub fn get(&self, a: usize, b: usize, d: usize) -> f64 {
        self.data[(a * self.m + b) * self.m + d]
    }
}

pub fn structure_functions(spec: &StructureSpec, p: &[f64]) -> Result<StructureFunctions> {
    let frame = FrameAt::new(spec, p)?;
    let m = spec.dim();
    let jac: Vec<DMatrix<f64>> = spec.fields().map(|f| f.eval_jacobian(p)).collect::<Result<_>>()?;
    let npairs = m * (m - 1) / 2;
    let mut rhs = DMatrix::zeros(m, npairs.max(1));
    let mut col = 0;
    for a in 0..m {
        for b in (a + 1)..m {
            let ea = frame.a.column(a);
            let eb = frame.a.column(b);
            let br = &jac[b] * ea - &jac[a] * eb;
            rhs.set_column(col, &br);
            col += 1;
        }
    }
    let coeffs = frame.coefficients_many(&rhs);
    let mut data = vec![0.0; m * m * m];
    let mut col = 0;
    for a in 0..m {
        for b in (a + 1)..m {
            for d in 0..m {
                let c = coeffs[(d, col)];
                data[(a * m + b) * m + d] = c;
                data[(b * m + a) * m + d] = -c;
            }
            col += 1;
        }
    }
    Ok(StructureFunctions { m, data })
}

/// Chart components of the bracket fields of horizontal pairs, evaluated at `p`,
/// expanded in the frame: `out[slot][d]` for the pair slot of `(i, j)`, `i < j`.
pub(crate) fn horizontal_bracket_coefficients(
    spec: &StructureSpec,
    frame: &FrameAt,
    p: &[f64],
) -> Result<DMatrix<f64>> {
    let m = spec.dim();
    let brackets = spec.horizontal_brackets();
    let mut rhs = DMatrix::zeros(m, brackets.len().max(1));
    for (col, field) in brackets.iter().enumerate() {
        for (row, c) in field.components.iter().enumerate() {
            if !c.is_zero() {
                rhs[(row, col)] = c.eval(p)?;
            }
        }
    }
    Ok(frame.coefficients_many(&rhs))
}

/// A multi-index `(i_1, …, i_r)` over horizontal frame members, stored 0-based.
///
/// It names the right-nested bracket `E_I = [E_{i_1}, E_{(i_2, …, i_r)}]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MultiIndex(pub Vec<usize>);

impl MultiIndex {
    pub fn single(i: usize) -> MultiIndex {
        MultiIndex(vec![i])
    }

    /// Build from 1-based entries as written on the command line.
    pub fn from_one_based(entries: &[usize], k: usize) -> Result<MultiIndex> {
        if entries.is_empty() {
            return Err(Error::InvalidInput("multi-index must be non-empty".into()));
        }
        if let Some(bad) = entries.iter().find(|&&e| e == 0 || e > k) {
            return Err(Error::InvalidInput(format!("multi-index entry {bad} outside 1..={k}")));
        }
        Ok(MultiIndex(entries.iter().map(|e| e - 1).collect()))
    }

    pub fn weight(&self) -> usize {
        self.0.len()
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.0.iter().map(|e| e + 1).collect()
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.one_based().iter().map(|e| e.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// Symbolic bracket field `E_I`.
pub fn bracket_field(spec: &StructureSpec, index: &MultiIndex) -> FrameField {
    let (first, rest) = index.0.split_first().expect("non-empty multi-index");
    if rest.is_empty() {
        return spec.horizontal[*first].clone();
    }
    let inner = bracket_field(spec, &MultiIndex(rest.to_vec()));
    spec.horizontal[*first].bracket(&inner)
}

/// All right-nested brackets up to `depth`, in length-then-lexicographic order.
/// Multi-indices whose field is symbolically zero are dropped together with
/// every extension of them.
pub(crate) fn bracket_tower(spec: &StructureSpec, depth: usize) -> Vec<Vec<(MultiIndex, FrameField)>> {
    let k = spec.rank();
    let mut layers: Vec<Vec<(MultiIndex, FrameField)>> = Vec::new();
    let first: Vec<_> = (0..k).map(|i| (MultiIndex::single(i), spec.horizontal[i].clone())).collect();
    layers.push(first);
    for _ in 1..depth {
        let prev = layers.last().expect("layer");
        let mut next = Vec::new();
        for i in 0..k {
            for (j_idx, j_field) in prev {
                let field = spec.horizontal[i].bracket(j_field);
                if field.is_zero() {
                    continue;
                }
                let mut idx = vec![i];
                idx.extend_from_slice(&j_idx.0);
                next.push((MultiIndex(idx), field));
            }
        }
        if next.is_empty() {
            break;
        }
        layers.push(next);
    }
    layers
}

/// Number of singular values above `tol · σ_max`.
pub(crate) fn numerical_rank(columns: &[DVector<f64>], tol: f64) -> usize {
    if columns.is_empty() {
        return 0;
    }
    let m = columns[0].len();
    let mat = DMatrix::from_fn(m, columns.len(), |r, c| columns[c][r]);
    let sv = mat.singular_values();
    let max = sv.max();
    if max <= 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * max).count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthVector {
    /// `(n_1, …, n_l)`; `n_1 = k`.
    pub layers: Vec<usize>,
    pub tol: f64,
    /// `false` is the "degree exceeds bound" verdict: rank m was not reached
    /// within the bracket depth cap.
    pub bracket_generating: bool,
    pub depth_cap: usize,
}

impl GrowthVector {
    pub fn step(&self) -> usize {
        self.layers.len()
    }
}

pub fn growth_vector(spec: &StructureSpec, p: &[f64], tol: f64) -> Result<GrowthVector> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput("rank tolerance must be positive".into()));
    }
    let m = spec.dim();
    let cap = m.min(BRACKET_DEPTH_CAP);
    let tower = bracket_tower(spec, cap);
    let mut cols: Vec<DVector<f64>> = Vec::new();
    let mut layers = Vec::new();
    for layer in &tower {
        for (_, field) in layer {
            cols.push(DVector::from_vec(field.eval(p)?));
        }
        let r = numerical_rank(&cols, tol);
        layers.push(r);
        if r == m {
            break;
        }
    }
    let generating = layers.last() == Some(&m);
    Ok(GrowthVector { layers, tol, bracket_generating: generating, depth_cap: cap })
}

/// Horizontal frame coordinates of the g-orthogonal projection of `v`.
pub fn project_horizontal(spec: &StructureSpec, p: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    if v.len() != spec.dim() {
        return Err(Error::Dimension("vector length differs from chart dimension".into()));
    }
    let frame = FrameAt::new(spec, p)?;
    let c = frame.coefficients(&DVector::from_column_slice(v));
    Ok(c.iter().take(spec.rank()).copied().collect())
}

/// Largest g-norm of the vertical part of the finite-difference velocity.
pub fn horizontality_defect(spec: &StructureSpec, times: &[f64], points: &[Vec<f64>]) -> Result<f64> {
    if times.len() != points.len() {
        return Err(Error::Sampling("times and points differ in length".into()));
    }
    if points.len() < 2 {
        return Err(Error::Sampling("at least two samples are required".into()));
    }
    let k = spec.rank();
    let mut worst: f64 = 0.0;
    for s in 0..points.len() - 1 {
        let dt = times[s + 1] - times[s];
        if !(dt > 0.0) {
            return Err(Error::Sampling(format!("non-increasing time at sample {s}")));
        }
        if points[s] == points[s + 1] {
            return Err(Error::Sampling(format!("repeated point at sample {s}")));
        }
        let mid: Vec<f64> = points[s].iter().zip(&points[s + 1]).map(|(a, b)| 0.5 * (a + b)).collect();
        let vel = DVector::from_iterator(
            mid.len(),
            points[s].iter().zip(&points[s + 1]).map(|(a, b)| (b - a) / dt),
        );
        let frame = FrameAt::new(spec, &mid)?;
        let c = frame.coefficients(&vel);
        let vertical = c.iter().skip(k).map(|x| x * x).sum::<f64>().sqrt();
        worst = worst.max(vertical);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::builtin;

    #[test]
    fn heisenberg_frame_matrix() {
        let h = builtin("heisenberg-1").unwrap();
        assert_eq!(frame_matrix(&h, &[0.0, 0.0, 0.0]).unwrap(), DMatrix::identity(3, 3));
        let a = frame_matrix(&h, &[0.0, 1.0, 0.0]).unwrap();
        assert_eq!(a.column(0).as_slice(), &[1.0, 0.0, 0.5]);
        assert_eq!(a.column(1).as_slice(), &[0.0, 1.0, 0.0]);
        assert_eq!(a.column(2).as_slice(), &[0.0, 0.0, 1.0]);
        let e = builtin("engel").unwrap();
        assert_eq!(frame_matrix(&e, &[0.0; 4]).unwrap(), DMatrix::identity(4, 4));
    }

    #[test]
    fn brackets() {
        let h = builtin("heisenberg-1").unwrap();
        let b = lie_bracket(&h.horizontal[0], &h.horizontal[1]);
        assert_eq!(b.components, vec![Expr::num(0.0), Expr::num(0.0), Expr::num(-1.0)]);
        assert!(lie_bracket(&h.horizontal[0], &h.horizontal[0]).is_zero());
        let e = builtin("engel").unwrap();
        let b = bracket_field(&e, &MultiIndex(vec![0, 0, 1]));
        assert_eq!(b.eval(&[0.3, -0.2, 0.1, 0.7]).unwrap(), vec![0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn structure_function_examples() {
        let h = builtin("heisenberg-1").unwrap();
        for p in [[0.0, 0.0, 0.0], [0.4, -1.3, 2.0]] {
            let c = structure_functions(&h, &p).unwrap();
            assert!((c.get(0, 1, 2) + 1.0).abs() < 1e-15);
            assert_eq!(c.get(0, 1, 0), 0.0);
            assert_eq!(c.get(0, 1, 1), 0.0);
            for a in 0..3 {
                for d in 0..3 {
                    assert_eq!(c.get(a, a, d), 0.0);
                }
            }
        }
        let e = builtin("engel").unwrap();
        let c = structure_functions(&e, &[0.0; 4]).unwrap();
        assert!((c.get(0, 1, 2) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn growth_vectors() {
        let h = builtin("heisenberg-1").unwrap();
        assert_eq!(growth_vector(&h, &[0.0; 3], DEFAULT_RANK_TOL).unwrap().layers, vec![2, 3]);
        let e = builtin("engel").unwrap();
        assert_eq!(growth_vector(&e, &[0.0; 4], DEFAULT_RANK_TOL).unwrap().layers, vec![2, 3, 4]);
        let h5 = builtin("heisenberg-5").unwrap();
        let p: Vec<f64> = (0..11).map(|i| 0.1 * i as f64 - 0.4).collect();
        let gv = growth_vector(&h5, &p, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(gv.layers, vec![10, 11]);
        assert!(gv.bracket_generating);
        assert!(growth_vector(&h, &[0.0; 3], 0.0).is_err());
    }

    #[test]
    fn non_generating_distribution_gets_verdict() {
        // integrable: span{∂x, ∂y} in R^3
        let doc = r#"{"name":"flat","coords":["x","y","z"],
            "horizontal":[["1","0","0"],["0","1","0"]],
            "vertical":[["0","0","1"]],"domain":[[-1,1],[-1,1],[-1,1]]}"#;
        let spec = crate::structure::parse_model(doc).unwrap();
        let gv = growth_vector(&spec, &[0.0; 3], DEFAULT_RANK_TOL).unwrap();
        assert!(!gv.bracket_generating);
        assert_eq!(gv.layers, vec![2]);
    }

    #[test]
    fn projection_examples() {
        let h = builtin("heisenberg-1").unwrap();
        let p = [0.0, 1.0, 0.0];
        let c = project_horizontal(&h, &p, &[1.0, 0.0, 0.5]).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-15 && c[1].abs() < 1e-15);
        assert_eq!(project_horizontal(&h, &[0.0; 3], &[0.0, 0.0, 1.0]).unwrap(), vec![0.0, 0.0]);
        let c = project_horizontal(&h, &p, &[1.0, 0.0, 0.0]).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-15 && c[1].abs() < 1e-15);
    }

    #[test]
    fn defect_of_vertical_line() {
        let h = builtin("heisenberg-1").unwrap();
        let times: Vec<f64> = (0..11).map(|i| i as f64 * 0.1).collect();
        let pts: Vec<Vec<f64>> = times.iter().map(|&s| vec![0.0, 0.0, s]).collect();
        let d = horizontality_defect(&h, &times, &pts).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
        let rep = vec![vec![0.0; 3], vec![0.0; 3]];
        assert!(matches!(horizontality_defect(&h, &[0.0, 1.0], &rep), Err(Error::Sampling(_))));
        assert!(horizontality_defect(&h, &[0.0], &rep[..1]).is_err());
    }
}
