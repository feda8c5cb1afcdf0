//! Rigid, affine and restricted projective stages fitted on fixed
//! correspondences.
//!
//! The affine stage keeps the rigid rotation `Q` frozen and fits
//! `x ~ Q R y + t + dt` with `R` upper triangular. The projective stage
//! keeps the whole affine block frozen and estimates only the tilt row
//! `(a6, a7)` of the homography plus a translation increment.

use nalgebra::{DMatrix, DVector, Matrix4, Vector4};

use crate::error::{check_dim, Error, Result};
use crate::nn::Correspondence;
use crate::points::PointSet;
use crate::taylor::StructuredTaylorMap;

/// Condition number above which a linear-stage design is called rank deficient.
pub const LINEAR_CONDITION_LIMIT: f64 = 1e10;

#[derive(Debug, Clone, PartialEq)]
pub struct RigidTransform {
    pub rotation: DMatrix<f64>,
    pub translation: DVector<f64>,
}

impl RigidTransform {
    pub fn identity(dim: usize) -> Self {
        Self {
            rotation: DMatrix::identity(dim, dim),
            translation: DVector::zeros(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.translation.len()
    }

    pub fn to_map(&self) -> StructuredTaylorMap {
        StructuredTaylorMap::affine(&self.rotation, self.translation.as_slice())
            .expect("rigid transform is square and finite")
    }

    pub fn apply(&self, points: &PointSet) -> Result<PointSet> {
        self.to_map().apply(points)
    }
}

fn pair_means(fixed: &PointSet, moving: &PointSet, corr: &Correspondence) -> (DVector<f64>, DVector<f64>) {
    let n = fixed.dim();
    let mut xm = DVector::zeros(n);
    let mut ym = DVector::zeros(n);
    for &(m, f) in &corr.pairs {
        for i in 0..n {
            xm[i] += fixed.point(f)[i];
            ym[i] += moving.point(m)[i];
        }
    }
    let k = corr.len() as f64;
    (xm / k, ym / k)
}

/// Least-squares rotation and translation, reflection suppressed.
pub fn fit_rigid(fixed: &PointSet, moving: &PointSet, corr: &Correspondence) -> Result<RigidTransform> {
    corr.check_bounds(fixed, moving)?;
    let n = fixed.dim();
    if corr.len() < n {
        return Err(Error::InsufficientData {
            needed: n,
            got: corr.len(),
        });
    }
    let (xm, ym) = pair_means(fixed, moving, corr);
    let mut cov = DMatrix::<f64>::zeros(n, n);
    for &(m, f) in &corr.pairs {
        let (x, y) = (fixed.point(f), moving.point(m));
        for i in 0..n {
            let dx = x[i] - xm[i];
            for j in 0..n {
                cov[(i, j)] += dx * (y[j] - ym[j]);
            }
        }
    }
    let svd = cov.svd(true, true);
    let mut u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let s = &svd.singular_values;

    if n >= 2 {
        let mut sorted: Vec<f64> = s.iter().copied().collect();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let (top, second) = (sorted[0], sorted[n - 2]);
        if !(top > 0.0) || second <= 1e-12 * top {
            return Err(Error::Conditioning {
                context: "rigid fit (points span too few dimensions)".into(),
                kappa: if second > 0.0 { top / second } else { f64::INFINITY },
            });
        }
    }
    if (&u * &v_t).determinant() < 0.0 {
        let smallest = s.imin();
        u.column_mut(smallest).neg_mut();
    }
    let rotation = u * v_t;
    let translation = &xm - &rotation * &ym;
    Ok(RigidTransform {
        rotation,
        translation,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffineRefinement {
    pub upper: DMatrix<f64>,
    /// Global-frame translation increment.
    pub dt: DVector<f64>,
}

impl AffineRefinement {
    pub fn identity(dim: usize) -> Self {
        Self {
            upper: DMatrix::identity(dim, dim),
            dt: DVector::zeros(dim),
        }
    }

    /// `Q R`, the linear factor after refinement.
    pub fn linear(&self, rigid: &RigidTransform) -> DMatrix<f64> {
        &rigid.rotation * &self.upper
    }

    /// Accumulated translation `t + dt`.
    pub fn translation(&self, rigid: &RigidTransform) -> DVector<f64> {
        &rigid.translation + &self.dt
    }

    pub fn to_map(&self, rigid: &RigidTransform) -> StructuredTaylorMap {
        StructuredTaylorMap::affine(&self.linear(rigid), self.translation(rigid).as_slice())
            .expect("affine refinement is square and finite")
    }
}

/// Fits `R` and `dt` with the rigid rotation frozen. `moving` is the stage
/// input (before the rigid transform is applied).
pub fn fit_affine_residual(
    fixed: &PointSet,
    moving: &PointSet,
    corr: &Correspondence,
    rigid: &RigidTransform,
) -> Result<AffineRefinement> {
    corr.check_bounds(fixed, moving)?;
    let n = fixed.dim();
    check_dim(n, rigid.dim())?;
    if corr.len() < n + 1 {
        return Err(Error::InsufficientData {
            needed: n + 1,
            got: corr.len(),
        });
    }
    let qt = rigid.rotation.transpose();
    // u = Q^T (x - t), then each row i solves u_i ~ R[i, i..] y[i..] + dt'_i
    let k = corr.len();
    let mut u = DMatrix::zeros(k, n);
    for (row, &(_, f)) in corr.pairs.iter().enumerate() {
        let x = DVector::from_column_slice(fixed.point(f)) - &rigid.translation;
        let ux = &qt * x;
        for i in 0..n {
            u[(row, i)] = ux[i];
        }
    }
    let mut upper = DMatrix::zeros(n, n);
    let mut dt_local = DVector::zeros(n);
    for i in 0..n {
        let cols = n - i + 1;
        let mut design = DMatrix::zeros(k, cols);
        for (row, &(m, _)) in corr.pairs.iter().enumerate() {
            let y = moving.point(m);
            for j in i..n {
                design[(row, j - i)] = y[j];
            }
            design[(row, cols - 1)] = 1.0;
        }
        let rhs = u.column(i).into_owned();
        let sol = solve_small_lsq(design, rhs, "affine refinement")?;
        for j in i..n {
            upper[(i, j)] = sol[j - i];
        }
        dt_local[i] = sol[cols - 1];
    }
    if (0..n).any(|i| !(upper[(i, i)] > 0.0)) {
        return Err(Error::Degenerate(
            "affine refinement produced a non-positive scale on the diagonal".into(),
        ));
    }
    Ok(AffineRefinement {
        upper,
        dt: &rigid.rotation * dt_local,
    })
}

fn solve_small_lsq(design: DMatrix<f64>, rhs: DVector<f64>, context: &str) -> Result<DVector<f64>> {
    let svd = design.svd(true, true);
    let s = &svd.singular_values;
    let (smax, smin) = (s.max(), s.min());
    let kappa = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(kappa <= LINEAR_CONDITION_LIMIT) {
        return Err(Error::Conditioning {
            context: context.to_string(),
            kappa,
        });
    }
    svd.solve(&rhs, 0.0)
        .map_err(|e| Error::Numeric(format!("{context}: {e}")))
}

/// 2D homography, `x ~ H [y; 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Homography {
    pub matrix: [[f64; 3]; 3],
}

/// Below this `|w'|` a point is too close to the horizon line.
pub const HORIZON_EPS: f64 = 1e-9;

impl Homography {
    pub fn evaluate(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_dim(2, y.len())?;
        let h = &self.matrix;
        let w = h[2][0] * y[0] + h[2][1] * y[1] + h[2][2];
        if w.abs() < HORIZON_EPS {
            return Err(Error::Numeric("point maps to the homography horizon".into()));
        }
        Ok(vec![
            (h[0][0] * y[0] + h[0][1] * y[1] + h[0][2]) / w,
            (h[1][0] * y[0] + h[1][1] * y[1] + h[1][2]) / w,
        ])
    }

    pub fn apply(&self, points: &PointSet) -> Result<PointSet> {
        check_dim(2, points.dim())?;
        let mut coords = Vec::with_capacity(points.coords().len());
        for p in points.iter() {
            coords.extend(self.evaluate(p)?);
        }
        PointSet::new(2, coords)
    }
}

/// `[a0 a1 a2; a3 a4 a5]`: `x' = a0 x + a1 y + a2`, `y' = a3 x + a4 y + a5`.
pub type AffineParams = [f64; 6];

pub fn affine_params(linear: &DMatrix<f64>, translation: &DVector<f64>) -> Result<AffineParams> {
    if linear.shape() != (2, 2) || translation.len() != 2 {
        return Err(Error::UnsupportedDimension(translation.len()));
    }
    Ok([
        linear[(0, 0)],
        linear[(0, 1)],
        translation[0],
        linear[(1, 0)],
        linear[(1, 1)],
        translation[1],
    ])
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectiveRefinement {
    pub tilt: [f64; 2],
    pub dt: [f64; 2],
    /// Pairs dropped by the horizon guard over all iterations.
    pub excluded: usize,
    pub iterations: usize,
}

impl ProjectiveRefinement {
    pub fn zero() -> Self {
        Self {
            tilt: [0.0; 2],
            dt: [0.0; 2],
            excluded: 0,
            iterations: 0,
        }
    }

    pub fn params(&self) -> [f64; 4] {
        [self.tilt[0], self.tilt[1], self.dt[0], self.dt[1]]
    }

    pub fn homography(&self, a: &AffineParams) -> Homography {
        Homography {
            matrix: [
                [a[0], a[1], a[2] + self.dt[0]],
                [a[3], a[4], a[5] + self.dt[1]],
                [self.tilt[0], self.tilt[1], 1.0],
            ],
        }
    }
}

/// Algebraic residual of one pair at `theta = (a6, a7, dtx, dty)`:
/// `r = (A y + a + dt) - x (a6 y1 + a7 y2 + 1)`.
pub fn projective_residual(theta: &[f64; 4], a: &AffineParams, y: &[f64], x: &[f64]) -> [f64; 2] {
    let w = theta[0] * y[0] + theta[1] * y[1] + 1.0;
    [
        a[0] * y[0] + a[1] * y[1] + a[2] + theta[2] - x[0] * w,
        a[3] * y[0] + a[4] * y[1] + a[5] + theta[3] - x[1] * w,
    ]
}

/// Linearization rows in the error-equation convention `V = J d - l` with
/// `l` the current residual; this is the negated gradient of
/// [`projective_residual`].
pub fn projective_jacobian(y: &[f64], x: &[f64]) -> [[f64; 4]; 2] {
    [
        [y[0] * x[0], y[1] * x[0], -1.0, 0.0],
        [y[0] * x[1], y[1] * x[1], 0.0, -1.0],
    ]
}

const PROJECTIVE_MAX_ITERS: usize = 20;
const PROJECTIVE_TOL: f64 = 1e-10;

/// Refines tilt and translation with the affine parameters `a` frozen.
/// `moving` is the stage input, the same set the affine parameters act on.
pub fn fit_projective_restricted(
    fixed: &PointSet,
    moving: &PointSet,
    corr: &Correspondence,
    a: &AffineParams,
) -> Result<ProjectiveRefinement> {
    refine_projective(fixed, moving, corr, a, [0.0; 4])
}

pub(crate) fn refine_projective(
    fixed: &PointSet,
    moving: &PointSet,
    corr: &Correspondence,
    a: &AffineParams,
    start: [f64; 4],
) -> Result<ProjectiveRefinement> {
    if fixed.dim() != 2 {
        return Err(Error::UnsupportedDimension(fixed.dim()));
    }
    corr.check_bounds(fixed, moving)?;
    if corr.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: corr.len(),
        });
    }
    let mut theta = start;
    let mut excluded = 0;
    let mut iterations = 0;
    let mut prev_norm = f64::INFINITY;
    let mut growth = 0;
    while iterations < PROJECTIVE_MAX_ITERS {
        iterations += 1;
        let mut m = Matrix4::<f64>::zeros();
        let mut w = Vector4::<f64>::zeros();
        let mut used = 0;
        for &(mi, fi) in &corr.pairs {
            let (y, x) = (moving.point(mi), fixed.point(fi));
            let wp = theta[0] * y[0] + theta[1] * y[1] + 1.0;
            if wp.abs() < HORIZON_EPS {
                excluded += 1;
                continue;
            }
            used += 1;
            let r = projective_residual(&theta, a, y, x);
            let jac = projective_jacobian(y, x);
            for (row, l) in jac.iter().zip(r) {
                let jr = Vector4::from_row_slice(row);
                m += jr * jr.transpose();
                w += jr * l;
            }
        }
        if used < 2 {
            return Err(Error::InsufficientData { needed: 2, got: used });
        }
        let delta = m
            .cholesky()
            .ok_or_else(|| Error::Conditioning {
                context: "projective refinement".into(),
                kappa: f64::INFINITY,
            })?
            .solve(&w);
        if !delta.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric("projective update is not finite".into()));
        }
        for i in 0..4 {
            theta[i] += delta[i];
        }
        let norm = delta.amax();
        if norm < PROJECTIVE_TOL {
            break;
        }
        if norm > prev_norm {
            growth += 1;
            if growth >= 3 {
                return Err(Error::NonConvergence(
                    "projective refinement update grew for 3 consecutive iterations".into(),
                ));
            }
        } else {
            growth = 0;
        }
        prev_norm = norm;
    }

    // The algebraic optimum need not lower the geometric error; shrink the
    // step toward the affine solution until it does.
    let base = geometric_sse(fixed, moving, corr, a, &[0.0; 4]);
    let mut scale = 1.0;
    let mut trial = theta;
    for _ in 0..60 {
        if geometric_sse(fixed, moving, corr, a, &trial) <= base {
            break;
        }
        scale *= 0.5;
        trial = theta.map(|v| v * scale);
    }
    if geometric_sse(fixed, moving, corr, a, &trial) > base {
        trial = [0.0; 4];
    }
    Ok(ProjectiveRefinement {
        tilt: [trial[0], trial[1]],
        dt: [trial[2], trial[3]],
        excluded,
        iterations,
    })
}

fn geometric_sse(
    fixed: &PointSet,
    moving: &PointSet,
    corr: &Correspondence,
    a: &AffineParams,
    theta: &[f64; 4],
) -> f64 {
    let mut ss = 0.0;
    for &(mi, fi) in &corr.pairs {
        let (y, x) = (moving.point(mi), fixed.point(fi));
        let w = theta[0] * y[0] + theta[1] * y[1] + 1.0;
        if w.abs() < HORIZON_EPS {
            return f64::INFINITY;
        }
        let px = (a[0] * y[0] + a[1] * y[1] + a[2] + theta[2]) / w;
        let py = (a[3] * y[0] + a[4] * y[1] + a[5] + theta[3]) / w;
        ss += (px - x[0]).powi(2) + (py - x[1]).powi(2);
    }
    ss
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Rotation3;

    fn cloud3() -> PointSet {
        let mut v = Vec::new();
        for i in 0..30 {
            let t = i as f64 * 0.37;
            v.extend([t.sin() * 1.3, (1.7 * t).cos(), 0.2 * t - 2.0 + (0.5 * t).sin()]);
        }
        PointSet::new(3, v).unwrap()
    }

    fn transform(p: &PointSet, a: &DMatrix<f64>, t: &[f64]) -> PointSet {
        StructuredTaylorMap::affine(a, t).unwrap().apply(p).unwrap()
    }

    #[test]
    fn rigid_identity() {
        let p = cloud3();
        let c = Correspondence::identity(&p, &p).unwrap();
        let r = fit_rigid(&p, &p, &c).unwrap();
        assert!((r.rotation - DMatrix::<f64>::identity(3, 3)).amax() < 1e-12);
        assert!(r.translation.amax() < 1e-12);
    }

    #[test]
    fn rigid_recovers_known_motion() {
        let p = cloud3();
        let rot = Rotation3::from_axis_angle(&nalgebra::Vector3::z_axis(), 30f64.to_radians());
        let rm = DMatrix::from_iterator(3, 3, rot.matrix().iter().copied());
        let q = transform(&p, &rm, &[1.0, 2.0, 3.0]);
        let c = Correspondence::identity(&q, &p).unwrap();
        let r = fit_rigid(&q, &p, &c).unwrap();
        assert!((&r.rotation - &rm).amax() < 1e-10);
        assert!((r.translation - DVector::from_vec(vec![1.0, 2.0, 3.0])).amax() < 1e-10);
    }

    #[test]
    fn rigid_mirror_keeps_positive_determinant() {
        let p = cloud3();
        let mirror = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 1.0, 1.0]));
        let q = transform(&p, &mirror, &[0.0; 3]);
        let c = Correspondence::identity(&q, &p).unwrap();
        let r = fit_rigid(&q, &p, &c).unwrap();
        assert!((r.rotation.determinant() - 1.0).abs() < 1e-10);
        let res = crate::nn::rmse(&q, &r.apply(&p).unwrap(), &c).unwrap();
        assert!(res > 1e-3);
    }

    #[test]
    fn rigid_rejects_collinear_and_tiny() {
        let line = PointSet::new(3, (0..10).flat_map(|i| [i as f64, 2.0 * i as f64, 0.0]).collect()).unwrap();
        let c = Correspondence::identity(&line, &line).unwrap();
        assert!(matches!(
            fit_rigid(&line, &line, &c),
            Err(Error::Conditioning { .. })
        ));
        let two = PointSet::new(3, vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
        let c = Correspondence::identity(&two, &two).unwrap();
        assert!(matches!(
            fit_rigid(&two, &two, &c),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn affine_scale_and_shear() {
        let p = PointSet::new(
            2,
            (0..25)
                .flat_map(|i| [(i % 5) as f64 - 2.0, (i / 5) as f64 - 2.0 + 0.1 * (i % 3) as f64])
                .collect(),
        )
        .unwrap();
        let th = 0.4f64;
        let q = DMatrix::from_row_slice(2, 2, &[th.cos(), -th.sin(), th.sin(), th.cos()]);
        let rigid = RigidTransform {
            rotation: q.clone(),
            translation: DVector::from_vec(vec![0.3, -0.1]),
        };
        for upper in [
            DMatrix::from_row_slice(2, 2, &[1.2, 0.0, 0.0, 0.8]),
            DMatrix::from_row_slice(2, 2, &[1.1, 0.35, 0.0, 0.9]),
        ] {
            let t = [0.5, -0.25];
            let fixed = transform(&p, &(&q * &upper), &t);
            let c = Correspondence::identity(&fixed, &p).unwrap();
            let a = fit_affine_residual(&fixed, &p, &c, &rigid).unwrap();
            assert!((&a.upper - &upper).amax() < 1e-8);
            let expect_dt = DVector::from_vec(t.to_vec()) - &rigid.translation;
            assert!((&a.dt - expect_dt).amax() < 1e-8);
        }
    }

    #[test]
    fn affine_after_rigid_data_is_identity() {
        let p = cloud3();
        let rot = Rotation3::from_euler_angles(0.3, -0.2, 0.9);
        let rm = DMatrix::from_iterator(3, 3, rot.matrix().iter().copied());
        let fixed = transform(&p, &rm, &[0.1, 0.2, -0.3]);
        let c = Correspondence::identity(&fixed, &p).unwrap();
        let r = fit_rigid(&fixed, &p, &c).unwrap();
        let a = fit_affine_residual(&fixed, &p, &c, &r).unwrap();
        assert!((a.upper - DMatrix::<f64>::identity(3, 3)).amax() < 1e-10);
        assert!(a.dt.amax() < 1e-10);
    }

    fn grid2() -> PointSet {
        PointSet::new(
            2,
            (0..49)
                .flat_map(|i| [(i % 7) as f64 / 3.0 - 1.0, (i / 7) as f64 / 3.0 - 1.0])
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn projective_recovers_tilt() {
        let p = grid2();
        let a: AffineParams = [1.05, 0.1, 0.2, -0.05, 0.95, -0.1];
        let truth = ProjectiveRefinement {
            tilt: [0.05, -0.03],
            dt: [0.0, 0.0],
            excluded: 0,
            iterations: 0,
        };
        let fixed = truth.homography(&a).apply(&p).unwrap();
        let c = Correspondence::identity(&fixed, &p).unwrap();
        let fit = fit_projective_restricted(&fixed, &p, &c, &a).unwrap();
        assert!((fit.tilt[0] - 0.05).abs() < 1e-6 && (fit.tilt[1] + 0.03).abs() < 1e-6);
        assert!(fit.dt.iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn projective_zero_tilt_on_affine_data() {
        let p = grid2();
        let a: AffineParams = [0.9, 0.2, 0.1, -0.1, 1.1, 0.3];
        let h = ProjectiveRefinement::zero().homography(&a);
        let fixed = h.apply(&p).unwrap();
        let c = Correspondence::identity(&fixed, &p).unwrap();
        let fit = fit_projective_restricted(&fixed, &p, &c, &a).unwrap();
        assert!(fit.params().iter().all(|v| v.abs() < 1e-10));
        let lin = DMatrix::from_row_slice(2, 2, &[a[0], a[1], a[3], a[4]]);
        let aff = transform(&p, &lin, &[a[2], a[5]]);
        let proj = ProjectiveRefinement::zero().homography(&a).apply(&p).unwrap();
        for (u, v) in aff.coords().iter().zip(proj.coords()) {
            assert!((u - v).abs() <= 4.0 * f64::EPSILON * u.abs().max(1.0));
        }
    }

    #[test]
    fn projective_rejects_3d() {
        let p = cloud3();
        let c = Correspondence::identity(&p, &p).unwrap();
        assert!(matches!(
            fit_projective_restricted(&p, &p, &c, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]),
            Err(Error::UnsupportedDimension(3))
        ));
    }

    #[test]
    fn horizon_pairs_are_excluded() {
        let p = grid2();
        let c = Correspondence::identity(&p, &p).unwrap();
        let a: AffineParams = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0];
        // starting at a6 = -1 puts every y1 = 1 point on the horizon
        let fit = refine_projective(&p, &p, &c, &a, [-1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(fit.excluded, 7);
        assert!(fit.params().iter().all(|v| v.abs() < 1e-10));
        let h = ProjectiveRefinement {
            tilt: [-1.0, 0.0],
            ..ProjectiveRefinement::zero()
        }
        .homography(&a);
        assert!(h.evaluate(&[1.0, 0.3]).is_err());
    }
}
