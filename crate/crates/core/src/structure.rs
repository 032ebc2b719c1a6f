//! Structure specifications: a chart, a frame declared orthonormal, and a domain box.
//!
//! Declaring the whole frame `X_1..X_k, T_1..T_{m-k}` orthonormal fixes the
//! horizontal distribution, the sub-Riemannian metric on it, the complement,
//! and the orthogonal extension all at once. Every metric computation in the
//! crate works with frame coefficients, never with chart norms.

use std::sync::OnceLock;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{parse_expression, Expr};
use crate::geometry::FrameField;

/// Relative singular-value threshold used when validating frame independence.
pub const FRAME_RANK_TOL: f64 = 1e-9;

/// Upper bound on the number of grid points visited by [`parse_model`].
pub const VALIDATION_POINT_CAP: usize = 100_000;

/// On-disk model description (UTF-8 JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub name: String,
    pub coords: Vec<String>,
    pub horizontal: Vec<Vec<String>>,
    pub vertical: Vec<Vec<String>>,
    pub domain: Vec<[f64; 2]>,
    /// Carnot coordinate weights; only meaningful for graded built-ins.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl DomainBox {
    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter().zip(self.lo.iter().zip(&self.hi)).all(|(x, (lo, hi))| {
            let slack = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
            *x >= lo - slack && *x <= hi + slack
        })
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    /// The box with the same center and half the side lengths.
    pub fn half(&self) -> DomainBox {
        let c = self.center();
        let lo = c.iter().zip(&self.lo).map(|(c, l)| c + 0.5 * (l - c)).collect();
        let hi = c.iter().zip(&self.hi).map(|(c, h)| c + 0.5 * (h - c)).collect();
        DomainBox { lo, hi }
    }

    /// Map a point of the unit cube into the box.
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(u, (lo, hi))| lo + u * (hi - lo))
            .collect()
    }

    /// Regular grid with `per_axis` points per coordinate (per_axis >= 2).
    pub fn grid(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let m = self.dim();
        let total = per_axis.pow(m as u32);
        (0..total)
            .map(|mut idx| {
                let mut u = vec![0.0; m];
                for slot in u.iter_mut() {
                    *slot = (idx % per_axis) as f64 / (per_axis - 1) as f64;
                    idx /= per_axis;
                }
                self.from_unit(&u)
            })
            .collect()
    }
}

/// A validated sub-Riemannian structure on a single chart.
#[derive(Debug)]
pub struct StructureSpec {
    pub name: String,
    pub coords: Vec<String>,
    pub horizontal: Vec<FrameField>,
    pub vertical: Vec<FrameField>,
    pub domain: DomainBox,
    pub weights: Option<Vec<u32>>,
    horizontal_brackets: OnceLock<Vec<FrameField>>,
}

impl Clone for StructureSpec {
    fn clone(&self) -> Self {
        StructureSpec {
            name: self.name.clone(),
            coords: self.coords.clone(),
            horizontal: self.horizontal.clone(),
            vertical: self.vertical.clone(),
            domain: self.domain.clone(),
            weights: self.weights.clone(),
            horizontal_brackets: OnceLock::new(),
        }
    }
}

impl StructureSpec {
    /// Chart dimension m.
    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// Horizontal rank k.
    pub fn rank(&self) -> usize {
        self.horizontal.len()
    }

    /// Frame member `a` (horizontal first, then vertical).
    pub fn field(&self, a: usize) -> &FrameField {
        let k = self.rank();
        if a < k {
            &self.horizontal[a]
        } else {
            &self.vertical[a - k]
        }
    }

    pub fn fields(&self) -> impl Iterator<Item = &FrameField> {
        self.horizontal.iter().chain(self.vertical.iter())
    }

    /// Symbolic brackets `[X_i, X_j]` for horizontal `i < j`, in row-major pair order.
    pub fn horizontal_brackets(&self) -> &[FrameField] {
        self.horizontal_brackets.get_or_init(|| {
            let k = self.rank();
            let mut out = Vec::with_capacity(k * (k.saturating_sub(1)) / 2);
            for i in 0..k {
                for j in (i + 1)..k {
                    out.push(self.horizontal[i].bracket(&self.horizontal[j]));
                }
            }
            out
        })
    }

    /// Index into [`Self::horizontal_brackets`] for the pair `i < j`.
    pub(crate) fn bracket_slot(&self, i: usize, j: usize) -> usize {
        let k = self.rank();
        debug_assert!(i < j && j < k);
        i * k - i * (i + 1) / 2 + (j - i - 1)
    }

    /// Build from already-parsed pieces and run the full validation.
    pub fn from_parts(
        name: &str,
        coords: Vec<String>,
        horizontal: Vec<Vec<Expr>>,
        vertical: Vec<Vec<Expr>>,
        domain: DomainBox,
        weights: Option<Vec<u32>>,
    ) -> Result<StructureSpec> {
        let m = coords.len();
        let k = horizontal.len();
        if m == 0 {
            return Err(Error::Schema("at least one coordinate is required".into()));
        }
        for (i, c) in coords.iter().enumerate() {
            let valid = c.chars().next().is_some_and(|ch| ch.is_ascii_alphabetic() || ch == '_')
                && c.chars().all(|ch| ch.is_ascii_alphanumeric() || ch == '_');
            if !valid || ["sin", "cos", "exp"].contains(&c.as_str()) {
                return Err(Error::Schema(format!("invalid coordinate name '{c}'")));
            }
            if coords[..i].contains(c) {
                return Err(Error::Schema(format!("duplicate coordinate name '{c}'")));
            }
        }
        if k == 0 {
            return Err(Error::Schema("horizontal rank must be at least 1".into()));
        }
        if k >= m {
            return Err(Error::Schema(format!("horizontal rank {k} must be below the dimension {m}")));
        }
        if vertical.len() != m - k {
            return Err(Error::Dimension(format!(
                "expected {} vertical fields, found {}",
                m - k,
                vertical.len()
            )));
        }
        for (kind, list) in [("horizontal", &horizontal), ("vertical", &vertical)] {
            for (i, v) in list.iter().enumerate() {
                if v.len() != m {
                    return Err(Error::Dimension(format!(
                        "{kind} field {} has {} components, expected {m}",
                        i + 1,
                        v.len()
                    )));
                }
            }
        }
        if domain.dim() != m || domain.hi.len() != m {
            return Err(Error::Dimension(format!("domain has {} intervals, expected {m}", domain.dim())));
        }
        for (i, (lo, hi)) in domain.lo.iter().zip(&domain.hi).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Schema(format!("domain interval {} is empty or not finite", i + 1)));
            }
        }
        if let Some(w) = &weights {
            if w.len() != m || w.iter().any(|&x| x == 0) {
                return Err(Error::Schema("weights must be m positive integers".into()));
            }
        }
        let resolve = |list: Vec<Vec<Expr>>| -> Result<Vec<FrameField>> {
            list.into_iter()
                .map(|comps| {
                    let comps: Vec<Expr> = comps.iter().map(|e| e.resolve(&coords)).collect();
                    if let Some(name) = comps.iter().flat_map(|e| e.unresolved()).next() {
                        return Err(Error::Schema(format!("unknown identifier '{name}'")));
                    }
                    Ok(FrameField::new(comps))
                })
                .collect()
        };
        let spec = StructureSpec {
            name: name.to_string(),
            horizontal: resolve(horizontal)?,
            vertical: resolve(vertical)?,
            coords,
            domain,
            weights,
            horizontal_brackets: OnceLock::new(),
        };
        spec.check_independence()?;
        Ok(spec)
    }

    fn check_independence(&self) -> Result<()> {
        let m = self.dim();
        let mut per_axis = 5usize;
        while per_axis > 2 && per_axis.pow(m as u32) > VALIDATION_POINT_CAP {
            per_axis -= 1;
        }
        if per_axis.pow(m as u32) > VALIDATION_POINT_CAP {
            // 2^m corners still too many: fall back to the center only
            return self.check_point(&self.domain.center());
        }
        for p in self.domain.grid(per_axis) {
            self.check_point(&p)?;
        }
        Ok(())
    }

    fn check_point(&self, p: &[f64]) -> Result<()> {
        let a = crate::geometry::frame_matrix(self, p)?;
        let sv = a.singular_values();
        let max = sv.max();
        let min = sv.min();
        let ratio = if max > 0.0 { min / max } else { 0.0 };
        if ratio <= FRAME_RANK_TOL {
            return Err(Error::DegenerateFrame { point: p.to_vec(), ratio });
        }
        Ok(())
    }

    /// Export back to the file format.
    pub fn to_model_file(&self) -> ModelFile {
        let render = |f: &FrameField| f.components.iter().map(|e| e.to_string()).collect();
        ModelFile {
            name: self.name.clone(),
            coords: self.coords.clone(),
            horizontal: self.horizontal.iter().map(render).collect(),
            vertical: self.vertical.iter().map(render).collect(),
            domain: self.domain.lo.iter().zip(&self.domain.hi).map(|(a, b)| [*a, *b]).collect(),
            weights: self.weights.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_model_file()).expect("model file serializes")
    }

    /// Frame matrix convenience (columns are frame members).
    pub fn frame_at(&self, p: &[f64]) -> Result<DMatrix<f64>> {
        crate::geometry::frame_matrix(self, p)
    }
}

/// Parse and validate a model document.
pub fn parse_model(document: &str) -> Result<StructureSpec> {
    let file: ModelFile =
        serde_json::from_str(document).map_err(|e| Error::Schema(format!("invalid model JSON: {e}")))?;
    from_model_file(&file)
}

pub fn from_model_file(file: &ModelFile) -> Result<StructureSpec> {
    let parse_list = |kind: &str, list: &[Vec<String>]| -> Result<Vec<Vec<Expr>>> {
        list.iter()
            .enumerate()
            .map(|(i, comps)| {
                comps
                    .iter()
                    .enumerate()
                    .map(|(j, text)| {
                        parse_expression(text).map_err(|e| match e {
                            Error::Syntax { offset, message } => Error::Schema(format!(
                                "{kind} field {} component {}: syntax error at byte {offset}: {message}",
                                i + 1,
                                j + 1
                            )),
                            other => other,
                        })
                    })
                    .collect()
            })
            .collect()
    };
    let domain = DomainBox {
        lo: file.domain.iter().map(|d| d[0]).collect(),
        hi: file.domain.iter().map(|d| d[1]).collect(),
    };
    StructureSpec::from_parts(
        &file.name,
        file.coords.clone(),
        parse_list("horizontal", &file.horizontal)?,
        parse_list("vertical", &file.vertical)?,
        domain,
        file.weights.clone(),
    )
}
