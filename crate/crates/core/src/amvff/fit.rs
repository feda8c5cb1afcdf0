use nalgebra::{DMatrix, DVector};

use super::system::{min_pairs, normalize_orders, SpdFactor};
use super::FitConfig;
use crate::error::{check_dim, Error, Result};
use crate::nn::Correspondence;
use crate::points::PointSet;
use crate::taylor::{EvalScratch, StructuredTaylorMap};

#[derive(Debug, Clone)]
pub struct MappingFit {
    pub map: StructuredTaylorMap,
    /// Accepted quasi-Newton steps.
    pub iterations: usize,
    /// `false` when the loop stopped on the iteration cap or on repeated
    /// residual growth rather than on a small update.
    pub converged: bool,
    /// Norm of the last normal-equation update.
    pub update_norm: f64,
    /// Distance travelled in parameter space.
    pub step_norm: f64,
    pub initial_residual: f64,
    pub final_residual: f64,
    pub condition: f64,
}

/// Fits every block of `map`.
pub fn fit_mapping_params(
    fixed: &PointSet,
    moving: &PointSet,
    corr: &Correspondence,
    map: &StructuredTaylorMap,
    config: &FitConfig,
) -> Result<MappingFit> {
    let all: Vec<usize> = (0..=map.order()).collect();
    fit_blocks(fixed, moving, corr, map, &all, config)
}

/// Raises `map` to `new_order` and fits only the new blocks, keeping every
/// lower block frozen.
pub fn fit_lifted_block(
    fixed: &PointSet,
    moving: &PointSet,
    corr: &Correspondence,
    map: &StructuredTaylorMap,
    new_order: usize,
    config: &FitConfig,
) -> Result<MappingFit> {
    if new_order <= map.order() {
        return Err(Error::Argument(format!(
            "lift to order {new_order} from order {} adds no block",
            map.order()
        )));
    }
    let lifted = map.lifted(new_order);
    let active: Vec<usize> = (map.order() + 1..=new_order).collect();
    fit_blocks(fixed, moving, corr, &lifted, &active, config)
}

/// Layout of the active blocks inside one row of the feature matrix.
struct Layout {
    /// (order, offset in the feature row, width)
    blocks: Vec<(usize, usize, usize)>,
    width: usize,
    dim: usize,
}

impl Layout {
    fn flatten(&self, coef: &DMatrix<f64>) -> DVector<f64> {
        let mut v = Vec::with_capacity(self.width * self.dim);
        for &(_, off, w) in &self.blocks {
            for i in 0..self.dim {
                for a in 0..w {
                    v.push(coef[(i, off + a)]);
                }
            }
        }
        DVector::from_vec(v)
    }

    fn unflatten(&self, v: &DVector<f64>) -> DMatrix<f64> {
        let mut coef = DMatrix::zeros(self.dim, self.width);
        let mut idx = 0;
        for &(_, off, w) in &self.blocks {
            for i in 0..self.dim {
                for a in 0..w {
                    coef[(i, off + a)] = v[idx];
                    idx += 1;
                }
            }
        }
        coef
    }
}

/// Coefficient fit with Algorithm-2 style quasi-Newton steps.
///
/// With `P = I` the normal matrix is `I_n (x) G` with `G = Phi^T Phi`, so a
/// single factorization of `G` serves every output coordinate.
///
/// The BFGS secant pair is `(h, v_prev - v_new)`: the difference of the
/// normal-equation updates, i.e. of the gradient `B^T (B x - l)`
/// preconditioned by `M^-1`. For an exactly linear model this keeps `H`
/// at the identity.
pub(crate) fn fit_blocks(
    fixed: &PointSet,
    moving: &PointSet,
    corr: &Correspondence,
    map: &StructuredTaylorMap,
    active_orders: &[usize],
    config: &FitConfig,
) -> Result<MappingFit> {
    config.validate()?;
    corr.check_bounds(fixed, moving)?;
    check_dim(map.dim(), fixed.dim())?;
    let active = normalize_orders(map, active_orders)?;
    let needed = min_pairs(map, &active);
    if corr.len() < needed {
        return Err(Error::InsufficientData {
            needed,
            got: corr.len(),
        });
    }
    let n = map.dim();
    let basis = map.basis();
    let mut offsets = Vec::with_capacity(map.order() + 1);
    let mut acc = 0;
    for k in 0..=map.order() {
        offsets.push(acc);
        acc += map.block(k).ncols();
    }
    let mut blocks = Vec::new();
    let mut width = 0;
    for &k in &active {
        let w = map.block(k).ncols();
        blocks.push((k, width, w));
        width += w;
    }
    let layout = Layout {
        blocks,
        width,
        dim: n,
    };
    let frozen: Vec<usize> = (0..=map.order()).filter(|k| !active.contains(k)).collect();

    let rows = corr.len();
    let mut phi = DMatrix::zeros(rows, width);
    // observation minus frozen-block prediction
    let mut target = DMatrix::zeros(rows, n);
    let (mut diff, mut pw, mut feats) = (vec![0.0; n], Vec::new(), Vec::new());
    for (p, &(mi, fi)) in corr.pairs.iter().enumerate() {
        let (y, x) = (moving.point(mi), fixed.point(fi));
        for j in 0..n {
            diff[j] = y[j] - map.center()[j];
        }
        basis.scaled_features(&diff, &mut pw, &mut feats);
        for &(k, off, w) in &layout.blocks {
            for a in 0..w {
                phi[(p, off + a)] = feats[offsets[k] + a];
            }
        }
        for i in 0..n {
            let mut v = x[i];
            for &k in &frozen {
                let b = map.block(k);
                for a in 0..b.ncols() {
                    v -= b[(i, a)] * feats[offsets[k] + a];
                }
            }
            target[(p, i)] = v;
        }
    }

    let gram = phi.tr_mul(&phi);
    let factor = SpdFactor::new(&gram, config.ridge, config.condition_limit, "coefficient fit")?;

    let mut coef = DMatrix::zeros(n, width);
    for &(k, off, w) in &layout.blocks {
        let b = map.block(k);
        for i in 0..n {
            for a in 0..w {
                coef[(i, off + a)] = b[(i, a)];
            }
        }
    }
    let start = layout.flatten(&coef);

    let residual = |c: &DMatrix<f64>| -> DMatrix<f64> { &target - &phi * c.transpose() };
    let mut resid = residual(&coef);
    let initial = resid.norm_squared();
    let mut best = (initial, coef.clone());
    let mut prev_sse = initial;
    let mut rises = 0;
    let mut h_inv = DMatrix::<f64>::identity(layout.width * n, layout.width * n);
    let mut prev: Option<(DVector<f64>, DVector<f64>)> = None;
    let mut converged = false;
    let mut iterations = 0;
    let mut update_norm = f64::INFINITY;

    for _ in 0..config.max_inner_iters {
        let grad = phi.tr_mul(&resid);
        let v = layout.flatten(&factor.solve(&grad).transpose());
        if let Some((s, v_prev)) = &prev {
            bfgs_inverse_update(&mut h_inv, s, &(v_prev - &v));
        }
        update_norm = v.norm();
        if !update_norm.is_finite() {
            return Err(Error::Numeric("coefficient update is not finite".into()));
        }
        if update_norm < config.residual_threshold {
            converged = true;
            break;
        }
        let h = &h_inv * &v;
        coef += layout.unflatten(&h);
        iterations += 1;
        resid = residual(&coef);
        let sse = resid.norm_squared();
        if !sse.is_finite() {
            break;
        }
        if sse < best.0 {
            best = (sse, coef.clone());
        }
        if sse > prev_sse {
            rises += 1;
            if rises >= 3 {
                break;
            }
        } else {
            rises = 0;
        }
        prev_sse = sse;
        prev = Some((h, v));
    }

    let (final_residual, coef) = best;
    let mut out = map.clone();
    for &(k, off, w) in &layout.blocks {
        let b = out.block_mut(k);
        for i in 0..n {
            for a in 0..w {
                b[(i, a)] = coef[(i, off + a)];
            }
        }
    }
    let step_norm = (layout.flatten(&coef) - start).norm();
    Ok(MappingFit {
        map: out,
        iterations,
        converged,
        update_norm,
        step_norm,
        initial_residual: initial,
        final_residual,
        condition: factor.condition,
    })
}

/// Inverse-Hessian BFGS update, skipped when the curvature condition fails.
fn bfgs_inverse_update(h: &mut DMatrix<f64>, s: &DVector<f64>, y: &DVector<f64>) {
    let sy = s.dot(y);
    if !(sy > 1e-12 * s.norm() * y.norm()) {
        return;
    }
    let rho = 1.0 / sy;
    let hy = &*h * y;
    let yhy = y.dot(&hy);
    // H+ = H - rho (s hy^T + hy s^T) + (rho^2 y^T H y + rho) s s^T
    h.ger(-rho, s, &hy, 1.0);
    h.ger(-rho, &hy, s, 1.0);
    h.ger(rho * rho * yhy + rho, s, s, 1.0);
}

#[derive(Debug, Clone)]
pub struct CenterFit {
    pub center: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Norm of the first update (zero when already at the optimum).
    pub first_update_norm: f64,
    pub update_norm: f64,
    pub initial_residual: f64,
    pub final_residual: f64,
}

impl CenterFit {
    pub fn apply_to(&self, map: &StructuredTaylorMap) -> StructuredTaylorMap {
        let mut m = map.clone();
        m.set_center(&self.center);
        m
    }
}

/// Gauss-Newton on the center with every coefficient block frozen.
pub fn fit_center_params(
    fixed: &PointSet,
    moving: &PointSet,
    corr: &Correspondence,
    map: &StructuredTaylorMap,
    config: &FitConfig,
) -> Result<CenterFit> {
    config.validate()?;
    if map.order() < 2 {
        return Err(Error::Degenerate(
            "the center of an affine map is absorbed by its constant block".into(),
        ));
    }
    corr.check_bounds(fixed, moving)?;
    check_dim(map.dim(), fixed.dim())?;
    if corr.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let n = map.dim();
    let mut cur = map.clone();
    let mut scratch = EvalScratch::default();
    let mut jac = DMatrix::zeros(n, n);
    let mut pred = vec![0.0; n];

    let sse_of = |m: &StructuredTaylorMap, scratch: &mut EvalScratch, pred: &mut [f64]| -> f64 {
        let mut ss = 0.0;
        for &(mi, fi) in &corr.pairs {
            m.evaluate_into(moving.point(mi), scratch, pred);
            ss += crate::nn::dist2(pred, fixed.point(fi));
        }
        ss
    };

    let initial = sse_of(&cur, &mut scratch, &mut pred);
    let mut best = (initial, cur.center().to_vec());
    let mut prev_sse = initial;
    let mut rises = 0;
    let mut iterations = 0;
    let mut converged = false;
    let mut first_update_norm = f64::NAN;
    let mut update_norm = f64::INFINITY;

    for _ in 0..config.max_inner_iters {
        let mut m = DMatrix::zeros(n, n);
        let mut w = DMatrix::zeros(n, 1);
        let mut any = vec![false; n];
        for &(mi, fi) in &corr.pairs {
            let (y, x) = (moving.point(mi), fixed.point(fi));
            cur.center_jacobian_into(y, &mut scratch, &mut jac);
            cur.evaluate_into(y, &mut scratch, &mut pred);
            for j in 0..n {
                for i in 0..n {
                    if jac[(i, j)] != 0.0 {
                        any[j] = true;
                    }
                }
            }
            for a in 0..n {
                for b in 0..n {
                    let mut s = 0.0;
                    for i in 0..n {
                        s += jac[(i, a)] * jac[(i, b)];
                    }
                    m[(a, b)] += s;
                }
                let mut s = 0.0;
                for i in 0..n {
                    s += jac[(i, a)] * (x[i] - pred[i]);
                }
                w[(a, 0)] += s;
            }
        }
        if let Some(j) = any.iter().position(|v| !v) {
            return Err(Error::Degenerate(format!(
                "prediction does not depend on center coordinate {j}"
            )));
        }
        let factor = SpdFactor::new(&m, config.ridge, config.condition_limit, "center fit")?;
        let v = factor.solve(&w).column(0).into_owned();
        update_norm = v.norm();
        if first_update_norm.is_nan() {
            first_update_norm = update_norm;
        }
        if !update_norm.is_finite() {
            return Err(Error::Numeric("center update is not finite".into()));
        }
        if update_norm < config.residual_threshold {
            converged = true;
            break;
        }
        let c: Vec<f64> = cur.center().iter().zip(v.iter()).map(|(a, b)| a + b).collect();
        cur.set_center(&c);
        iterations += 1;
        let sse = sse_of(&cur, &mut scratch, &mut pred);
        if sse < best.0 {
            best = (sse, c);
        }
        if sse > prev_sse {
            rises += 1;
            if rises >= 3 {
                break;
            }
        } else {
            rises = 0;
        }
        prev_sse = sse;
    }
    Ok(CenterFit {
        center: best.1,
        iterations,
        converged,
        first_update_norm,
        update_norm,
        initial_residual: initial,
        final_residual: best.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk(count: usize) -> PointSet {
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        let coords = (0..count)
            .flat_map(|i| {
                let r = ((i as f64 + 0.5) / count as f64).sqrt();
                let t = i as f64 * golden;
                [r * t.cos(), r * t.sin()]
            })
            .collect();
        PointSet::new(2, coords).unwrap()
    }

    fn quad_map(center: Vec<f64>) -> StructuredTaylorMap {
        let j0 = DMatrix::from_column_slice(2, 1, &[0.05, -0.02]);
        let j1 = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, -0.15, 1.0]);
        let j2 = DMatrix::from_row_slice(2, 3, &[0.3, -0.2, 0.1, 0.25, 0.15, -0.3]);
        StructuredTaylorMap::from_blocks(center, vec![j0, j1, j2]).unwrap()
    }

    #[test]
    fn recovers_quadratic_generator() {
        let y = disk(60);
        let truth = quad_map(vec![0.0, 0.0]);
        let x = truth.apply(&y).unwrap();
        let corr = Correspondence::identity(&x, &y).unwrap();
        let fit = fit_mapping_params(
            &x,
            &y,
            &corr,
            &StructuredTaylorMap::identity(2, 2),
            &FitConfig::default(),
        )
        .unwrap();
        for (a, b) in fit.map.blocks().iter().zip(truth.blocks()) {
            assert!((a - b).amax() < 1e-8);
        }
        assert!(fit.converged);
        assert!(fit.final_residual < 1e-16);
    }

    #[test]
    fn identity_data_stays_identity() {
        let y = disk(40);
        let corr = Correspondence::identity(&y, &y).unwrap();
        let fit = fit_mapping_params(
            &y,
            &y,
            &corr,
            &StructuredTaylorMap::identity(2, 2),
            &FitConfig::default(),
        )
        .unwrap();
        let id = StructuredTaylorMap::identity(2, 2);
        for (a, b) in fit.map.blocks().iter().zip(id.blocks()) {
            assert!((a - b).amax() < 1e-9);
        }
    }

    #[test]
    fn lifted_block_leaves_lower_blocks() {
        let y = disk(60);
        let truth = quad_map(vec![0.0, 0.0]);
        let x = truth.apply(&y).unwrap();
        let corr = Correspondence::identity(&x, &y).unwrap();
        let base = truth.lifted(1);
        let fit = fit_lifted_block(&x, &y, &corr, &base, 2, &FitConfig::default()).unwrap();
        assert_eq!(fit.map.block(0), truth.block(0));
        assert_eq!(fit.map.block(1), truth.block(1));
        assert!((fit.map.block(2) - truth.block(2)).amax() < 1e-9);
    }

    #[test]
    fn center_recovered_with_frozen_coefficients() {
        let y = disk(80);
        let truth = quad_map(vec![0.3, -0.2]);
        let x = truth.apply(&y).unwrap();
        let corr = Correspondence::identity(&x, &y).unwrap();
        let start = truth.clone().with_center(&[0.0, 0.0]).unwrap();
        let fit = fit_center_params(&x, &y, &corr, &start, &FitConfig::default()).unwrap();
        assert!((fit.center[0] - 0.3).abs() < 1e-6 && (fit.center[1] + 0.2).abs() < 1e-6);
        let at = fit_center_params(&x, &y, &corr, &truth, &FitConfig::default()).unwrap();
        assert!(at.first_update_norm < 1e-10);
    }

    #[test]
    fn center_rejected_for_affine() {
        let y = disk(10);
        let corr = Correspondence::identity(&y, &y).unwrap();
        assert!(matches!(
            fit_center_params(
                &y,
                &y,
                &corr,
                &StructuredTaylorMap::identity(2, 1),
                &FitConfig::default()
            ),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn bfgs_secant_holds() {
        let mut h = DMatrix::identity(3, 3);
        let s = DVector::from_vec(vec![1.0, 0.5, -0.2]);
        let y = DVector::from_vec(vec![2.0, 0.1, 0.3]);
        bfgs_inverse_update(&mut h, &s, &y);
        assert!((&h * &y - &s).amax() < 1e-12);
        assert!((&h - h.transpose()).amax() < 1e-14);
    }
}
