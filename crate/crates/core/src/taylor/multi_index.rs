//! Multi-indices and generalized monomial vectors.
//!
//! Order k monomials in n variables are listed in graded lexicographic
//! order with the first coordinate dominant, so in 2D the order-2 block is
//! `y1^2, y1 y2, y2^2` and in 3D it is
//! `y1^2, y1 y2, y1 y3, y2^2, y2 y3, y3^2`. Every entry carries its
//! multinomial coefficient `k! / (m1! ... mn!)`.

use crate::error::{check_dim, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex {
    exponents: Vec<u32>,
}

impl MultiIndex {
    pub fn new(exponents: Vec<u32>) -> Self {
        Self { exponents }
    }

    pub fn exponents(&self) -> &[u32] {
        &self.exponents
    }

    pub fn order(&self) -> u32 {
        self.exponents.iter().sum()
    }

    pub fn dim(&self) -> usize {
        self.exponents.len()
    }

    /// `k! / (m1! ... mn!)`, built as a product of binomials so it stays
    /// exact in floating point well past 20!.
    pub fn multinomial(&self) -> f64 {
        let mut acc = 1.0;
        let mut total = 0u32;
        for &m in &self.exponents {
            total += m;
            acc *= binomial(total as u64, m as u64) as f64;
        }
        acc
    }
}

/// Binomial coefficient C(n, k), zero when k > n.
pub fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u64 = 1;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Number of order-k monomials in n variables, C(n+k-1, n-1).
pub fn basis_len(n: usize, k: usize) -> usize {
    if n == 0 {
        return usize::from(k == 0);
    }
    binomial((n + k - 1) as u64, (n - 1) as u64) as usize
}

pub fn enumerate_multi_indices(n: usize, k: usize) -> Vec<MultiIndex> {
    let mut out = Vec::with_capacity(basis_len(n, k));
    let mut scratch = vec![0u32; n];
    fill(&mut scratch, 0, k as u32, &mut out);
    out
}

fn fill(scratch: &mut [u32], pos: usize, remaining: u32, out: &mut Vec<MultiIndex>) {
    let n = scratch.len();
    if n == 0 {
        if remaining == 0 {
            out.push(MultiIndex::new(Vec::new()));
        }
        return;
    }
    if pos == n - 1 {
        scratch[pos] = remaining;
        out.push(MultiIndex::new(scratch.to_vec()));
        return;
    }
    for e in (0..=remaining).rev() {
        scratch[pos] = e;
        fill(scratch, pos + 1, remaining - e, out);
    }
}

/// Order-k generalized monomial vector together with its index layout.
#[derive(Debug, Clone, PartialEq)]
pub struct MonomialVector {
    pub order: usize,
    pub entries: Vec<f64>,
    pub basis: Vec<MultiIndex>,
}

pub fn monomial_vector(y: &[f64], c: &[f64], k: usize) -> Result<MonomialVector> {
    check_dim(y.len(), c.len())?;
    let d: Vec<f64> = y.iter().zip(c).map(|(a, b)| a - b).collect();
    let basis = enumerate_multi_indices(y.len(), k);
    let entries = basis
        .iter()
        .map(|mi| {
            let mono: f64 = mi
                .exponents()
                .iter()
                .zip(&d)
                .map(|(&e, &x)| x.powi(e as i32))
                .product();
            mi.multinomial() * mono
        })
        .collect();
    Ok(MonomialVector {
        order: k,
        entries,
        basis,
    })
}

/// Precomputed layout of all blocks up to some order, reused for fast
/// evaluation of many points.
#[derive(Debug, Clone, PartialEq)]
pub struct MonomialBasis {
    dim: usize,
    blocks: Vec<BasisBlock>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasisBlock {
    pub order: usize,
    pub indices: Vec<MultiIndex>,
    /// Multinomial coefficient per index.
    pub weights: Vec<f64>,
    /// 1/k!
    pub inv_factorial: f64,
}

impl MonomialBasis {
    pub fn new(dim: usize, max_order: usize) -> Self {
        let mut fact = 1.0;
        let blocks = (0..=max_order)
            .map(|k| {
                if k > 0 {
                    fact *= k as f64;
                }
                let indices = enumerate_multi_indices(dim, k);
                let weights = indices.iter().map(MultiIndex::multinomial).collect();
                BasisBlock {
                    order: k,
                    indices,
                    weights,
                    inv_factorial: 1.0 / fact,
                }
            })
            .collect();
        Self { dim, blocks }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_order(&self) -> usize {
        self.blocks.len() - 1
    }

    pub fn block(&self, k: usize) -> &BasisBlock {
        &self.blocks[k]
    }

    pub fn blocks(&self) -> &[BasisBlock] {
        &self.blocks
    }

    /// Powers table `pw[i * (m+1) + e] = d_i^e`.
    pub(crate) fn powers(&self, d: &[f64], pw: &mut Vec<f64>) {
        let stride = self.max_order() + 1;
        pw.clear();
        pw.resize(self.dim * stride, 1.0);
        for (i, &x) in d.iter().enumerate() {
            for e in 1..stride {
                pw[i * stride + e] = pw[i * stride + e - 1] * x;
            }
        }
    }

    /// Monomial value of `mi` (without multinomial weight) from a powers table.
    #[inline]
    pub(crate) fn raw_monomial(&self, mi: &MultiIndex, pw: &[f64]) -> f64 {
        let stride = self.max_order() + 1;
        let mut v = 1.0;
        for (i, &e) in mi.exponents().iter().enumerate() {
            if e > 0 {
                v *= pw[i * stride + e as usize];
            }
        }
        v
    }

    /// Writes `(1/k!) phi^[k](d)` for every block into `out`, blocks
    /// concatenated in ascending order.
    pub fn scaled_features(&self, d: &[f64], pw: &mut Vec<f64>, out: &mut Vec<f64>) {
        self.powers(d, pw);
        out.clear();
        for b in &self.blocks {
            for (mi, w) in b.indices.iter().zip(&b.weights) {
                out.push(b.inv_factorial * w * self.raw_monomial(mi, pw));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_2d_layout() {
        let got: Vec<Vec<u32>> = enumerate_multi_indices(2, 2)
            .into_iter()
            .map(|m| m.exponents().to_vec())
            .collect();
        assert_eq!(got, vec![vec![2, 0], vec![1, 1], vec![0, 2]]);
    }

    #[test]
    fn layout_3d_second_order() {
        let got: Vec<Vec<u32>> = enumerate_multi_indices(3, 2)
            .into_iter()
            .map(|m| m.exponents().to_vec())
            .collect();
        assert_eq!(
            got,
            vec![
                vec![2, 0, 0],
                vec![1, 1, 0],
                vec![1, 0, 1],
                vec![0, 2, 0],
                vec![0, 1, 1],
                vec![0, 0, 2]
            ]
        );
        let m = monomial_vector(&[1.0, 1.0, 1.0], &[0.0; 3], 2).unwrap();
        assert_eq!(m.entries, vec![1.0, 2.0, 2.0, 1.0, 2.0, 1.0]);
    }

    #[test]
    fn zeroth_order_is_single_empty_monomial() {
        let v = enumerate_multi_indices(3, 0);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].exponents(), &[0, 0, 0]);
    }

    #[test]
    fn cross_term_carries_two() {
        let m = monomial_vector(&[1.0, 1.0], &[0.0, 0.0], 2).unwrap();
        assert_eq!(m.entries, vec![1.0, 2.0, 1.0]);
    }

    #[test]
    fn vanishes_at_center() {
        for k in 1..5 {
            let m = monomial_vector(&[0.3, -0.2], &[0.3, -0.2], k).unwrap();
            assert!(m.entries.iter().all(|&e| e == 0.0));
        }
    }

    #[test]
    fn mismatch_is_rejected() {
        assert!(monomial_vector(&[1.0], &[0.0, 0.0], 2).is_err());
    }

    #[test]
    fn multinomial_of_large_order() {
        // 12!/(4!4!4!) = 34650
        assert_eq!(MultiIndex::new(vec![4, 4, 4]).multinomial(), 34650.0);
    }

    #[test]
    fn scaled_features_match_monomial_vector() {
        let basis = MonomialBasis::new(3, 4);
        let d = [0.3, -1.1, 0.7];
        let (mut pw, mut out) = (Vec::new(), Vec::new());
        basis.scaled_features(&d, &mut pw, &mut out);
        let mut expect = Vec::new();
        let mut fact = 1.0;
        for k in 0..=4 {
            if k > 0 {
                fact *= k as f64;
            }
            let m = monomial_vector(&d, &[0.0; 3], k).unwrap();
            expect.extend(m.entries.iter().map(|e| e / fact));
        }
        assert_eq!(out.len(), expect.len());
        for (a, b) in out.iter().zip(&expect) {
            assert!((a - b).abs() <= 1e-14 * b.abs().max(1.0));
        }
    }
}
