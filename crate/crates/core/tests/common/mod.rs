//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use taylor_icp::{PointSet, StructuredTaylorMap};

/// Sparse polynomial: exponent vector -> coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly {
    pub vars: usize,
    pub terms: BTreeMap<Vec<u32>, f64>,
}

impl Poly {
    pub fn zero(vars: usize) -> Self {
        Self {
            vars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(vars: usize, c: f64) -> Self {
        let mut p = Self::zero(vars);
        p.add_term(vec![0; vars], c);
        p
    }

    pub fn var(vars: usize, j: usize) -> Self {
        let mut e = vec![0; vars];
        e[j] = 1;
        let mut p = Self::zero(vars);
        p.add_term(e, 1.0);
        p
    }

    fn add_term(&mut self, e: Vec<u32>, c: f64) {
        *self.terms.entry(e).or_insert(0.0) += c;
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.add_term(e.clone(), *c);
        }
        out
    }

    pub fn scale(&self, s: f64) -> Poly {
        let mut out = self.clone();
        out.terms.values_mut().for_each(|c| *c *= s);
        out
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = Poly::zero(self.vars);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                let e: Vec<u32> = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.add_term(e, ca * cb);
            }
        }
        out
    }

    pub fn pow(&self, k: u32) -> Poly {
        (0..k).fold(Poly::constant(self.vars, 1.0), |acc, _| acc.mul(self))
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| c * e.iter().zip(y).map(|(&k, &v)| v.powi(k as i32)).product::<f64>())
            .sum()
    }

    /// Highest total degree among terms with a non-negligible coefficient.
    pub fn degree(&self, tol: f64) -> u32 {
        self.terms
            .iter()
            .filter(|(_, c)| c.abs() > tol)
            .map(|(e, _)| e.iter().sum())
            .max()
            .unwrap_or(0)
    }

    /// Substitutes `inner[j]` for variable j.
    pub fn compose(&self, inner: &[Poly]) -> Poly {
        let vars = inner[0].vars;
        let mut out = Poly::zero(vars);
        for (e, c) in &self.terms {
            let mut term = Poly::constant(vars, *c);
            for (j, &k) in e.iter().enumerate() {
                term = term.mul(&inner[j].pow(k));
            }
            out = out.add(&term);
        }
        out
    }
}

fn factorial(k: u32) -> f64 {
    (1..=k).map(f64::from).product()
}

/// Exponents of total degree `k` in `n` variables, first coordinate
/// dominant: for n = 2, k = 2 this is x^2, xy, y^2.
pub fn graded_exponents(n: usize, k: u32) -> Vec<Vec<u32>> {
    if n == 1 {
        return vec![vec![k]];
    }
    let mut out = Vec::new();
    for first in (0..=k).rev() {
        for mut rest in graded_exponents(n - 1, k - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Expands `sum_k (1/k!) J^[k] phi^[k](y - c)` term by term.
pub fn expand_map(map: &StructuredTaylorMap) -> Vec<Poly> {
    let n = map.dim();
    let shifted: Vec<Poly> = (0..n)
        .map(|j| Poly::var(n, j).add(&Poly::constant(n, -map.center()[j])))
        .collect();
    let mut out = vec![Poly::zero(n); n];
    for k in 0..=map.order() {
        let exps = graded_exponents(n, k as u32);
        let block = map.block(k);
        assert_eq!(block.ncols(), exps.len());
        for (col, e) in exps.iter().enumerate() {
            let multinomial = factorial(k as u32) / e.iter().map(|&a| factorial(a)).product::<f64>();
            let mono = e
                .iter()
                .enumerate()
                .fold(Poly::constant(n, 1.0), |acc, (j, &a)| acc.mul(&shifted[j].pow(a)));
            for (i, poly) in out.iter_mut().enumerate() {
                let coeff = block[(i, col)] * multinomial / factorial(k as u32);
                *poly = poly.add(&mono.scale(coeff));
            }
        }
    }
    out
}

/// Exhaustive nearest fixed point for every moving point; ties keep the
/// lowest index.
pub fn brute_force_nn(fixed: &PointSet, moving: &PointSet) -> Vec<(usize, f64)> {
    moving
        .iter()
        .map(|q| {
            let mut best = (usize::MAX, f64::INFINITY);
            for (i, p) in fixed.iter().enumerate() {
                let d2: f64 = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
                if d2 < best.1 {
                    best = (i, d2);
                }
            }
            (best.0, best.1.sqrt())
        })
        .collect()
}

/// Least squares through Householder QR and back substitution.
pub fn qr_least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let qr = a.clone().qr();
    let (q, r) = (qr.q(), qr.r());
    let rhs = q.transpose() * b;
    let n = r.ncols();
    let mut x = DVector::zeros(n);
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| r[(i, j)] * x[j]).sum();
        x[i] = (rhs[i] - s) / r[(i, i)];
    }
    x
}

/// Central difference of a vector-valued function along coordinate `j`.
pub fn central_diff(f: impl Fn(&[f64]) -> Vec<f64>, x: &[f64], j: usize, h: f64) -> Vec<f64> {
    let mut hi = x.to_vec();
    let mut lo = x.to_vec();
    hi[j] += h;
    lo[j] -= h;
    f(&hi)
        .iter()
        .zip(f(&lo))
        .map(|(a, b)| (a - b) / (2.0 * h))
        .collect()
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(1.0)
}

/// Seeded probe points for the checks.
pub struct Probe(ChaCha8Rng);

impl Probe {
    pub fn new(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Uniform in `[-r, r]`.
    pub fn sym(&mut self, r: f64) -> f64 {
        r * (2.0 * self.0.gen::<f64>() - 1.0)
    }

    /// Uniform in the unit ball of dimension `n`, by rejection.
    pub fn in_ball(&mut self, n: usize) -> Vec<f64> {
        loop {
            let p: Vec<f64> = (0..n).map(|_| self.sym(1.0)).collect();
            if p.iter().map(|v| v * v).sum::<f64>() <= 1.0 {
                return p;
            }
        }
    }
}
