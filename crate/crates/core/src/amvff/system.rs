use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::nn::Correspondence;
use crate::points::PointSet;
use crate::taylor::{EvalScratch, StructuredTaylorMap};

/// Default refusal threshold for the design condition estimate.
pub const DEFAULT_CONDITION_LIMIT: f64 = 1e4;

/// Error equation `V = B x - l` with diagonal weights (`None` is `P = I`).
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSystem {
    pub design: DMatrix<f64>,
    pub observed: DVector<f64>,
    pub weights: Option<DVector<f64>>,
}

impl DesignSystem {
    pub fn new(design: DMatrix<f64>, observed: DVector<f64>) -> Result<Self> {
        if design.nrows() != observed.len() {
            return Err(Error::DimensionMismatch {
                expected: design.nrows(),
                found: observed.len(),
            });
        }
        Ok(Self {
            design,
            observed,
            weights: None,
        })
    }

    pub fn with_weights(mut self, weights: DVector<f64>) -> Result<Self> {
        if weights.len() != self.observed.len() {
            return Err(Error::DimensionMismatch {
                expected: self.observed.len(),
                found: weights.len(),
            });
        }
        if !weights.iter().all(|w| *w > 0.0 && w.is_finite()) {
            return Err(Error::Argument("weights must be positive and finite".into()));
        }
        self.weights = Some(weights);
        Ok(self)
    }

    /// `V^T P V` at `x`.
    pub fn weighted_residual(&self, x: &DVector<f64>) -> f64 {
        let v = &self.design * x - &self.observed;
        match &self.weights {
            None => v.norm_squared(),
            Some(w) => v.iter().zip(w.iter()).map(|(r, p)| p * r * r).sum(),
        }
    }
}

/// `M = B^T P B`, `W = B^T P l` and the design condition estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalSystem {
    pub normal: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub condition: f64,
}

impl NormalSystem {
    pub fn from_design(system: &DesignSystem, ridge: f64) -> Self {
        let (normal, rhs) = match &system.weights {
            None => (
                system.design.tr_mul(&system.design),
                system.design.tr_mul(&system.observed),
            ),
            Some(w) => {
                let mut pb = system.design.clone();
                for (mut row, p) in pb.row_iter_mut().zip(w.iter()) {
                    row *= *p;
                }
                (pb.tr_mul(&system.design), pb.tr_mul(&system.observed))
            }
        };
        let condition = SpdFactor::new(&normal, ridge, f64::INFINITY, "normal equations")
            .map(|f| f.condition)
            .unwrap_or(f64::INFINITY);
        Self {
            normal,
            rhs,
            condition,
        }
    }
}

/// Cholesky factor of a Jacobi-equilibrated SPD matrix.
///
/// The ridge is added in the equilibrated metric, where `tr(M)/cols = 1`.
/// The condition estimate is the ratio of extreme Cholesky diagonal
/// entries, which tracks the condition of the underlying design `B`
/// (the normal matrix squares it).
pub(crate) struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
    scale: DVector<f64>,
    pub condition: f64,
}

impl SpdFactor {
    pub fn new(m: &DMatrix<f64>, ridge: f64, limit: f64, context: &str) -> Result<Self> {
        if !m.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric(format!("{context}: non-finite normal matrix")));
        }
        let q = m.nrows();
        let mut scale = DVector::zeros(q);
        for i in 0..q {
            let d = m[(i, i)];
            if !(d > 0.0) {
                return Err(Error::Conditioning {
                    context: format!("{context}: unknown {i} has no support in the data"),
                    kappa: f64::INFINITY,
                });
            }
            scale[i] = 1.0 / d.sqrt();
        }
        let mut ms = m.clone();
        for j in 0..q {
            for i in 0..q {
                ms[(i, j)] *= scale[i] * scale[j];
            }
        }
        for i in 0..q {
            ms[(i, i)] += ridge;
        }
        let chol = ms.cholesky().ok_or_else(|| Error::Conditioning {
            context: format!("{context}: normal matrix is not positive definite"),
            kappa: f64::INFINITY,
        })?;
        let l = chol.l_dirty();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..q {
            let d = l[(i, i)].abs();
            lo = lo.min(d);
            hi = hi.max(d);
        }
        let condition = if lo > 0.0 {
            (hi / lo).max(1.0)
        } else {
            f64::INFINITY
        };
        if !(condition <= limit) {
            return Err(Error::Conditioning {
                context: context.to_string(),
                kappa: condition,
            });
        }
        Ok(Self {
            chol,
            scale,
            condition,
        })
    }

    /// Solves `M X = R` column by column.
    pub fn solve(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        let mut r = rhs.clone();
        for mut col in r.column_iter_mut() {
            col.component_mul_assign(&self.scale);
        }
        let mut x = self.chol.solve(&r);
        for mut col in x.column_iter_mut() {
            col.component_mul_assign(&self.scale);
        }
        x
    }
}

pub fn solve_normal(system: &DesignSystem, ridge: f64) -> Result<(DVector<f64>, f64)> {
    solve_normal_with_limit(system, ridge, DEFAULT_CONDITION_LIMIT)
}

/// Solves `(M + ridge I) v = W` in the equilibrated metric; refuses when
/// the condition estimate exceeds `limit`.
pub fn solve_normal_with_limit(system: &DesignSystem, ridge: f64, limit: f64) -> Result<(DVector<f64>, f64)> {
    if !system
        .design
        .iter()
        .chain(system.observed.iter())
        .all(|v| v.is_finite())
    {
        return Err(Error::Numeric("design system has non-finite entries".into()));
    }
    let ns = NormalSystem::from_design(system, ridge);
    let f = SpdFactor::new(&ns.normal, ridge, limit, "normal equations")?;
    let rhs = DMatrix::from_column_slice(ns.rhs.len(), 1, ns.rhs.as_slice());
    let v = f.solve(&rhs).column(0).into_owned();
    Ok((v, f.condition))
}

/// Active orders sorted, deduplicated and checked against the map.
pub(crate) fn normalize_orders(map: &StructuredTaylorMap, active: &[usize]) -> Result<Vec<usize>> {
    let mut v = active.to_vec();
    v.sort_unstable();
    v.dedup();
    if v.is_empty() {
        return Err(Error::Argument("no active orders".into()));
    }
    if let Some(&k) = v.iter().find(|&&k| k > map.order()) {
        return Err(Error::Argument(format!(
            "active order {k} exceeds map order {}",
            map.order()
        )));
    }
    Ok(v)
}

/// Pairs needed for the active blocks (each pair gives one equation per
/// output, and every output row has `sum N_k` unknowns).
pub(crate) fn min_pairs(map: &StructuredTaylorMap, active: &[usize]) -> usize {
    active.iter().map(|&k| map.block(k).ncols()).sum()
}

/// Dense design for the active coefficient blocks. Unknowns are ordered by
/// block ascending, then output row, then monomial column; `l` is the
/// observation minus the current prediction, so the solution is an
/// increment to the active coefficients.
pub fn build_mapping_system(
    fixed: &PointSet,
    moving: &PointSet,
    corr: &Correspondence,
    map: &StructuredTaylorMap,
    active_orders: &[usize],
) -> Result<DesignSystem> {
    corr.check_bounds(fixed, moving)?;
    crate::error::check_dim(map.dim(), fixed.dim())?;
    let active = normalize_orders(map, active_orders)?;
    let needed = min_pairs(map, &active);
    if corr.len() < needed {
        return Err(Error::InsufficientData {
            needed,
            got: corr.len(),
        });
    }
    let n = map.dim();
    let unknowns = n * needed;
    let mut b = DMatrix::zeros(n * corr.len(), unknowns);
    let mut l = DVector::zeros(n * corr.len());
    let basis = map.basis();
    let (mut diff, mut pw, mut feats) = (vec![0.0; n], Vec::new(), Vec::new());
    let mut pred = vec![0.0; n];
    let mut scratch = EvalScratch::default();
    for (p, &(mi, fi)) in corr.pairs.iter().enumerate() {
        let (y, x) = (moving.point(mi), fixed.point(fi));
        for j in 0..n {
            diff[j] = y[j] - map.center()[j];
        }
        basis.scaled_features(&diff, &mut pw, &mut feats);
        map.evaluate_into(y, &mut scratch, &mut pred);
        let mut col = 0;
        for &k in &active {
            let width = map.block(k).ncols();
            let off: usize = (0..k).map(|kk| map.block(kk).ncols()).sum();
            for i in 0..n {
                for a in 0..width {
                    b[(p * n + i, col + i * width + a)] = feats[off + a];
                }
            }
            col += n * width;
        }
        for i in 0..n {
            l[p * n + i] = x[i] - pred[i];
        }
    }
    DesignSystem::new(b, l)
}

/// Design for the center coordinates with all coefficients frozen.
pub fn build_center_system(
    fixed: &PointSet,
    moving: &PointSet,
    corr: &Correspondence,
    map: &StructuredTaylorMap,
) -> Result<DesignSystem> {
    corr.check_bounds(fixed, moving)?;
    crate::error::check_dim(map.dim(), fixed.dim())?;
    if map.order() < 1 {
        return Err(Error::Argument(
            "center system needs a map of order at least 1".into(),
        ));
    }
    if corr.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let n = map.dim();
    let mut b = DMatrix::zeros(n * corr.len(), n);
    let mut l = DVector::zeros(n * corr.len());
    let mut jac = DMatrix::zeros(n, n);
    let mut scratch = EvalScratch::default();
    let mut pred = vec![0.0; n];
    for (p, &(mi, fi)) in corr.pairs.iter().enumerate() {
        let (y, x) = (moving.point(mi), fixed.point(fi));
        map.center_jacobian_into(y, &mut scratch, &mut jac);
        map.evaluate_into(y, &mut scratch, &mut pred);
        for i in 0..n {
            for j in 0..n {
                b[(p * n + i, j)] = jac[(i, j)];
            }
            l[p * n + i] = x[i] - pred[i];
        }
    }
    for j in 0..n {
        if b.column(j).iter().all(|v| *v == 0.0) {
            return Err(Error::Degenerate(format!(
                "prediction does not depend on center coordinate {j}"
            )));
        }
    }
    DesignSystem::new(b, l)
}
