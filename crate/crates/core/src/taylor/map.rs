use nalgebra::DMatrix;

use super::multi_index::{basis_len, MonomialBasis};
use crate::error::{check_dim, Error, Result};
use crate::points::PointSet;

/// `tau(y) = sum_k (1/k!) J^[k] phi^[k](y - c)` truncated at `order`.
///
/// `blocks[k]` is `dim x N_k`; the 1/k! factor is applied during
/// evaluation so the blocks hold plain partial derivatives.
#[derive(Debug, Clone)]
pub struct StructuredTaylorMap {
    center: Vec<f64>,
    blocks: Vec<DMatrix<f64>>,
    basis: MonomialBasis,
}

impl PartialEq for StructuredTaylorMap {
    fn eq(&self, other: &Self) -> bool {
        self.center == other.center && self.blocks == other.blocks
    }
}

/// Reusable buffers for repeated evaluation.
#[derive(Debug, Default, Clone)]
pub struct EvalScratch {
    diff: Vec<f64>,
    powers: Vec<f64>,
    features: Vec<f64>,
}

impl StructuredTaylorMap {
    /// Identity map of the given order (at least 1) centered at the origin.
    pub fn identity(dim: usize, order: usize) -> Self {
        let mut map = Self::zeros(dim, order.max(1), vec![0.0; dim]);
        map.blocks[1] = DMatrix::identity(dim, dim);
        map
    }

    pub fn zeros(dim: usize, order: usize, center: Vec<f64>) -> Self {
        assert_eq!(center.len(), dim, "center dimension");
        let blocks = (0..=order)
            .map(|k| DMatrix::zeros(dim, basis_len(dim, k)))
            .collect();
        Self {
            center,
            blocks,
            basis: MonomialBasis::new(dim, order),
        }
    }

    pub fn from_blocks(center: Vec<f64>, blocks: Vec<DMatrix<f64>>) -> Result<Self> {
        let dim = center.len();
        if dim == 0 {
            return Err(Error::Argument("map dimension must be at least 1".into()));
        }
        if blocks.is_empty() {
            return Err(Error::Argument("map needs at least the order-0 block".into()));
        }
        for (k, b) in blocks.iter().enumerate() {
            if b.nrows() != dim || b.ncols() != basis_len(dim, k) {
                return Err(Error::Argument(format!(
                    "block {k} has shape {}x{}, expected {}x{}",
                    b.nrows(),
                    b.ncols(),
                    dim,
                    basis_len(dim, k)
                )));
            }
        }
        if !center.iter().all(|v| v.is_finite()) || !blocks.iter().all(|b| b.iter().all(|v| v.is_finite())) {
            return Err(Error::Numeric("non-finite map coefficient".into()));
        }
        let order = blocks.len() - 1;
        Ok(Self {
            center,
            blocks,
            basis: MonomialBasis::new(dim, order),
        })
    }

    /// Order-1 map `y -> A y + t` with center at the origin.
    pub fn affine(linear: &DMatrix<f64>, translation: &[f64]) -> Result<Self> {
        let n = translation.len();
        if linear.nrows() != n || linear.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: linear.nrows(),
            });
        }
        Self::from_blocks(
            vec![0.0; n],
            vec![DMatrix::from_column_slice(n, 1, translation), linear.clone()],
        )
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn order(&self) -> usize {
        self.blocks.len() - 1
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    pub fn block(&self, k: usize) -> &DMatrix<f64> {
        &self.blocks[k]
    }

    pub fn basis(&self) -> &MonomialBasis {
        &self.basis
    }

    pub(crate) fn block_mut(&mut self, k: usize) -> &mut DMatrix<f64> {
        &mut self.blocks[k]
    }

    pub(crate) fn set_center(&mut self, c: &[f64]) {
        self.center.copy_from_slice(c);
    }

    pub fn with_center(mut self, c: &[f64]) -> Result<Self> {
        check_dim(self.dim(), c.len())?;
        self.set_center(c);
        Ok(self)
    }

    pub fn with_block(mut self, k: usize, block: DMatrix<f64>) -> Result<Self> {
        if k > self.order() || block.shape() != self.blocks[k].shape() {
            return Err(Error::Argument(format!("block {k} does not fit this map")));
        }
        self.blocks[k] = block;
        Ok(self)
    }

    /// Same coefficients at a different truncation order; new blocks are zero.
    pub fn lifted(&self, order: usize) -> Self {
        let n = self.dim();
        let mut blocks = self.blocks.clone();
        blocks.truncate(order + 1);
        while blocks.len() <= order {
            let k = blocks.len();
            blocks.push(DMatrix::zeros(n, basis_len(n, k)));
        }
        Self {
            center: self.center.clone(),
            blocks,
            basis: MonomialBasis::new(n, order),
        }
    }

    /// Number of scalar coefficients in the listed orders.
    pub fn param_count(&self, orders: &[usize]) -> usize {
        orders.iter().map(|&k| self.blocks[k].len()).sum()
    }

    pub fn evaluate(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), y.len())?;
        let mut out = vec![0.0; self.dim()];
        self.evaluate_into(y, &mut EvalScratch::default(), &mut out);
        if out.iter().all(|v| v.is_finite()) {
            Ok(out)
        } else {
            Err(Error::Numeric(
                "map evaluation produced a non-finite value".into(),
            ))
        }
    }

    /// Unchecked evaluation; `y` and `out` must have length `dim`.
    pub fn evaluate_into(&self, y: &[f64], scratch: &mut EvalScratch, out: &mut [f64]) {
        scratch.diff.clear();
        scratch
            .diff
            .extend(y.iter().zip(&self.center).map(|(a, b)| a - b));
        self.basis
            .scaled_features(&scratch.diff, &mut scratch.powers, &mut scratch.features);
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut offset = 0;
        for b in &self.blocks {
            let cols = b.ncols();
            let feats = &scratch.features[offset..offset + cols];
            for (col, &f) in feats.iter().enumerate() {
                if f != 0.0 {
                    for (i, o) in out.iter_mut().enumerate() {
                        *o += b[(i, col)] * f;
                    }
                }
            }
            offset += cols;
        }
    }

    pub fn apply(&self, points: &PointSet) -> Result<PointSet> {
        check_dim(self.dim(), points.dim())?;
        let n = self.dim();
        let mut coords = vec![0.0; points.coords().len()];
        let mut scratch = EvalScratch::default();
        for (y, out) in points.iter().zip(coords.chunks_exact_mut(n)) {
            self.evaluate_into(y, &mut scratch, out);
        }
        PointSet::new(n, coords)
    }

    /// `d tau(y) / d c`, a `dim x dim` matrix (column j is the derivative
    /// with respect to `c_j`).
    pub fn center_jacobian(&self, y: &[f64]) -> Result<DMatrix<f64>> {
        check_dim(self.dim(), y.len())?;
        let n = self.dim();
        let mut out = DMatrix::zeros(n, n);
        self.center_jacobian_into(y, &mut EvalScratch::default(), &mut out);
        Ok(out)
    }

    pub(crate) fn center_jacobian_into(&self, y: &[f64], scratch: &mut EvalScratch, out: &mut DMatrix<f64>) {
        let n = self.dim();
        scratch.diff.clear();
        scratch
            .diff
            .extend(y.iter().zip(&self.center).map(|(a, b)| a - b));
        self.basis.powers(&scratch.diff, &mut scratch.powers);
        let pw = &scratch.powers;
        let stride = self.order() + 1;
        out.fill(0.0);
        for (bb, block) in self.basis.blocks().iter().zip(&self.blocks).skip(1) {
            for (col, (mi, w)) in bb.indices.iter().zip(&bb.weights).enumerate() {
                let e = mi.exponents();
                for j in 0..n {
                    if e[j] == 0 {
                        continue;
                    }
                    let mut v = e[j] as f64 * pw[j * stride + e[j] as usize - 1];
                    for i in 0..n {
                        if i != j && e[i] > 0 {
                            v *= pw[i * stride + e[i] as usize];
                        }
                    }
                    let coef = -bb.inv_factorial * w * v;
                    if coef != 0.0 {
                        for r in 0..n {
                            out[(r, j)] += block[(r, col)] * coef;
                        }
                    }
                }
            }
        }
    }
}
