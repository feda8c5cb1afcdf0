//! Synthetic deformations and test shapes.
//!
//! All randomness comes from seeded ChaCha streams, so every generator is a
//! pure function of its spec.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linear::fit_rigid;
use crate::nn::{rmse, Correspondence};
use crate::points::{normalize, PointSet};
use crate::taylor::{basis_len, MonomialBasis, StructuredTaylorMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaylorWarpSpec {
    pub dim: usize,
    pub order: usize,
    pub coeff_range: f64,
    pub identity_diagonal: bool,
    pub seed: u64,
}

impl Default for TaylorWarpSpec {
    fn default() -> Self {
        Self {
            dim: 2,
            order: 3,
            coeff_range: 0.3,
            identity_diagonal: true,
            seed: 0,
        }
    }
}

pub(crate) fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn uniform(rng: &mut ChaCha8Rng, r: f64) -> f64 {
    r * (2.0 * rng.gen::<f64>() - 1.0)
}

/// Random map centered at the origin, coefficients i.i.d. in `[-r, r]`.
pub fn random_taylor_warp(spec: &TaylorWarpSpec) -> Result<StructuredTaylorMap> {
    if !(spec.coeff_range >= 0.0) || spec.dim == 0 {
        return Err(Error::Argument(
            "warp spec needs dim >= 1 and coeff_range >= 0".into(),
        ));
    }
    let n = spec.dim;
    let mut rng = rng_for(spec.seed, 0);
    let mut blocks = Vec::with_capacity(spec.order + 1);
    for k in 0..=spec.order {
        let mut b = DMatrix::zeros(n, basis_len(n, k));
        for i in 0..n {
            for a in 0..b.ncols() {
                b[(i, a)] = uniform(&mut rng, spec.coeff_range);
            }
        }
        if k == 1 && spec.identity_diagonal {
            for i in 0..n {
                b[(i, i)] = 1.0;
            }
        }
        blocks.push(b);
    }
    StructuredTaylorMap::from_blocks(vec![0.0; n], blocks)
}

/// RMSD with known correspondences after the best rigid alignment.
pub fn post_rigid_rmsd(original: &PointSet, warped: &PointSet) -> Result<f64> {
    let corr = Correspondence::identity(warped, original)?;
    let rigid = fit_rigid(warped, original, &corr)?;
    rmse(warped, &rigid.apply(original)?, &corr)
}

/// `identity + s (map - identity)`.
pub fn scale_deviation(map: &StructuredTaylorMap, s: f64) -> StructuredTaylorMap {
    let n = map.dim();
    let mut out = map.clone();
    for k in 0..=map.order() {
        let b = out.block_mut(k);
        if k == 1 {
            let id = DMatrix::<f64>::identity(n, n);
            *b = &id + (&*b - &id) * s;
        } else {
            *b *= s;
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct Calibrated<T> {
    pub warp: T,
    pub scale: f64,
    pub achieved: f64,
}

/// Scalar bisection so that `measure(s)` hits `target` within `tol`.
/// Assumes `measure(0) = 0` and growth with `s`.
fn bisect_scale(mut measure: impl FnMut(f64) -> Result<f64>, target: f64, tol: f64) -> Result<(f64, f64)> {
    if !(target > 0.0) || !(tol > 0.0) {
        return Err(Error::Argument(
            "calibration target and tolerance must be positive".into(),
        ));
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut f_hi = measure(hi)?;
    if (f_hi - target).abs() <= tol {
        return Ok((hi, f_hi));
    }
    let mut steps = 0;
    while f_hi < target {
        lo = hi;
        hi *= 2.0;
        f_hi = measure(hi)?;
        steps += 1;
        if (f_hi - target).abs() <= tol {
            return Ok((hi, f_hi));
        }
        if steps >= 60 {
            return Err(Error::Calibration(format!(
                "RMSD {f_hi:.3e} never reaches {target:.3e}"
            )));
        }
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let f = measure(mid)?;
        if (f - target).abs() <= tol {
            return Ok((mid, f));
        }
        if f < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::Calibration(format!(
        "no scale within 60 bisection steps hits RMSD {target:.3e} +- {tol:.1e}"
    )))
}

/// Random warp whose post-rigid RMSD on `points` is `target +- tol`.
pub fn calibrate_rmsd(
    points: &PointSet,
    spec: &TaylorWarpSpec,
    target: f64,
    tol: f64,
) -> Result<Calibrated<StructuredTaylorMap>> {
    let base = random_taylor_warp(spec)?;
    let (scale, achieved) = bisect_scale(
        |s| post_rigid_rmsd(points, &scale_deviation(&base, s).apply(points)?),
        target,
        tol,
    )?;
    Ok(Calibrated {
        warp: scale_deviation(&base, scale),
        scale,
        achieved,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BumpWarpSpec {
    /// Baseline map; only its blocks 0..=2 are used.
    pub base: TaylorWarpSpec,
    pub template_perturbation: f64,
    pub seed: u64,
}

impl Default for BumpWarpSpec {
    fn default() -> Self {
        Self {
            base: TaylorWarpSpec {
                dim: 3,
                order: 2,
                coeff_range: 0.07,
                identity_diagonal: true,
                seed: 0,
            },
            template_perturbation: 0.03,
            seed: 0,
        }
    }
}

/// `b(r; sigma) = exp(-1 / (1 - (r/sigma)^2))` inside the support, else 0.
pub fn bump(r: f64, sigma: f64) -> f64 {
    let u = r / sigma;
    if u.abs() < 1.0 {
        (-1.0 / (1.0 - u * u)).exp()
    } else {
        0.0
    }
}

/// Two quadratic templates blended by normalized compact bumps:
/// `tau(y) = A y + t + 1/2 (w1 Q1 + w2 Q2) phi2(y - origin)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BumpWarp {
    pub linear: Vec<Vec<f64>>,
    pub translation: Vec<f64>,
    pub q1: Vec<Vec<f64>>,
    pub q2: Vec<Vec<f64>>,
    pub c1: Vec<f64>,
    pub c2: Vec<f64>,
    pub sigma: f64,
    pub origin: Vec<f64>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl BumpWarp {
    pub fn dim(&self) -> usize {
        self.translation.len()
    }

    pub fn bumps(&self, y: &[f64]) -> (f64, f64) {
        let d1 = crate::nn::dist2(y, &self.c1).sqrt();
        let d2 = crate::nn::dist2(y, &self.c2).sqrt();
        (bump(d1, self.sigma), bump(d2, self.sigma))
    }

    /// Normalized weights, `(0, 0)` outside both supports.
    pub fn weights(&self, y: &[f64]) -> (f64, f64) {
        let (b1, b2) = self.bumps(y);
        let s = b1 + b2;
        if s > 0.0 {
            (b1 / s, b2 / s)
        } else {
            (0.0, 0.0)
        }
    }

    /// Field with arbitrary weights, used for probing the blend directly.
    pub fn evaluate_with_weights(&self, y: &[f64], w: (f64, f64)) -> Vec<f64> {
        let n = self.dim();
        let basis = MonomialBasis::new(n, 2);
        let d: Vec<f64> = y.iter().zip(&self.origin).map(|(a, b)| a - b).collect();
        let (mut pw, mut feats) = (Vec::new(), Vec::new());
        basis.scaled_features(&d, &mut pw, &mut feats);
        let off = 1 + n;
        let mut out = self.translation.clone();
        for i in 0..n {
            for j in 0..n {
                out[i] += self.linear[i][j] * y[j];
            }
            if w.0 != 0.0 || w.1 != 0.0 {
                for a in 0..basis_len(n, 2) {
                    out[i] += (w.0 * self.q1[i][a] + w.1 * self.q2[i][a]) * feats[off + a];
                }
            }
        }
        out
    }

    pub fn evaluate(&self, y: &[f64]) -> Vec<f64> {
        self.evaluate_with_weights(y, self.weights(y))
    }

    pub fn apply(&self, points: &PointSet) -> Result<PointSet> {
        crate::error::check_dim(self.dim(), points.dim())?;
        PointSet::new(
            points.dim(),
            points.iter().flat_map(|y| self.evaluate(y)).collect(),
        )
    }

    /// Shrinks or grows everything except the identity part.
    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        for (i, row) in out.linear.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                let id = if i == j { 1.0 } else { 0.0 };
                *v = id + s * (*v - id);
            }
        }
        out.translation.iter_mut().for_each(|v| *v *= s);
        for q in [&mut out.q1, &mut out.q2] {
            q.iter_mut().flatten().for_each(|v| *v *= s);
        }
        out
    }
}

/// Builds the two-center bump field for `points` and applies it.
pub fn bump_warp(points: &PointSet, spec: &BumpWarpSpec) -> Result<(PointSet, BumpWarp)> {
    let field = bump_field(points, spec)?;
    Ok((field.apply(points)?, field))
}

pub fn bump_field(points: &PointSet, spec: &BumpWarpSpec) -> Result<BumpWarp> {
    let n = points.dim();
    if points.len() < 2 {
        return Err(Error::Degenerate("bump warp needs at least two points".into()));
    }
    if spec.base.dim != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: spec.base.dim,
        });
    }
    // min/max-x points, lowest index on ties
    let (mut lo, mut hi) = (0, 0);
    for (i, p) in points.iter().enumerate() {
        if p[0] < points.point(lo)[0] {
            lo = i;
        }
        if p[0] > points.point(hi)[0] {
            hi = i;
        }
    }
    let c1 = points.point(lo).to_vec();
    let c2 = points.point(hi).to_vec();
    let sigma = 0.5 * crate::nn::dist2(&c1, &c2).sqrt();
    if !(sigma > 0.0) {
        return Err(Error::Degenerate("bump centers coincide".into()));
    }
    let base = random_taylor_warp(&TaylorWarpSpec {
        order: 2,
        ..spec.base.clone()
    })?;
    let mut rng = rng_for(spec.seed, 1);
    let qbar = base.block(2);
    let mut q1 = qbar.clone();
    let mut q2 = qbar.clone();
    for q in [&mut q1, &mut q2] {
        for v in q.iter_mut() {
            *v += uniform(&mut rng, spec.template_perturbation);
        }
    }
    Ok(BumpWarp {
        linear: rows(base.block(1)),
        translation: base.block(0).iter().copied().collect(),
        q1: rows(&q1),
        q2: rows(&q2),
        c1,
        c2,
        sigma,
        origin: vec![0.0; n],
    })
}

/// Bump field scaled so the post-rigid RMSD is `target +- tol`.
pub fn calibrate_bump_rmsd(
    points: &PointSet,
    spec: &BumpWarpSpec,
    target: f64,
    tol: f64,
) -> Result<Calibrated<BumpWarp>> {
    let field = bump_field(points, spec)?;
    let (scale, achieved) = bisect_scale(
        |s| post_rigid_rmsd(points, &field.scaled(s).apply(points)?),
        target,
        tol,
    )?;
    Ok(Calibrated {
        warp: field.scaled(scale),
        scale,
        achieved,
    })
}

/// Points of the fish curve `(cos t - sin^2 t / sqrt 2, cos t sin t)`,
/// normalized.
pub fn fish_2d(count: usize) -> PointSet {
    let coords: Vec<f64> = (0..count)
        .flat_map(|i| {
            let t = std::f64::consts::TAU * i as f64 / count as f64;
            let (s, c) = t.sin_cos();
            [c - s * s / std::f64::consts::SQRT_2, c * s]
        })
        .collect();
    normalize(&PointSet::new(2, coords).expect("finite")).expect("non-degenerate")
}

/// Sunflower sampling of the unit disk.
pub fn unit_disk(count: usize) -> PointSet {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let coords = (0..count)
        .flat_map(|i| {
            let r = ((i as f64 + 0.5) / count as f64).sqrt();
            let t = i as f64 * golden;
            [r * t.cos(), r * t.sin()]
        })
        .collect();
    PointSet::new(2, coords).expect("finite")
}

fn rejection_sample(
    count: usize,
    seed: u64,
    bound: [f64; 3],
    inside: impl Fn(&[f64; 3]) -> bool,
) -> PointSet {
    let mut rng = rng_for(seed, 2);
    let mut coords = Vec::with_capacity(count * 3);
    while coords.len() < count * 3 {
        let p = [
            uniform(&mut rng, bound[0]),
            uniform(&mut rng, bound[1]),
            uniform(&mut rng, bound[2]),
        ];
        if inside(&p) {
            coords.extend(p);
        }
    }
    normalize(&PointSet::new(3, coords).expect("finite")).expect("non-degenerate")
}

/// A lumpy solid, uniform samples inside `r < 1 + 0.2 sin(3 az) cos(2 el)`
/// with a flattened z axis. Normalized.
pub fn lumpy_solid(count: usize, seed: u64) -> PointSet {
    rejection_sample(count, seed, [1.3, 1.3, 1.0], |p| {
        let (x, y, z) = (p[0], p[1], p[2] / 0.75);
        let r = (x * x + y * y + z * z).sqrt();
        let az = y.atan2(x);
        let el = (z / r.max(1e-12)).asin();
        r < 1.0 + 0.2 * (3.0 * az).sin() * (2.0 * el).cos()
    })
}

/// Two lobes joined at a pinched waist: solid of revolution about the x
/// axis with radius `sqrt(|x| (1 - x^2) / 2)`. Normalized. The extreme-x
/// points sit at the lobe tips, so each lobe lies inside one bump support.
pub fn pinched_solid(count: usize, seed: u64) -> PointSet {
    rejection_sample(count, seed, [1.0, 0.45, 0.45], |p| {
        let rho2 = 0.5 * p[0].abs() * (1.0 - p[0] * p[0]);
        p[1] * p[1] + p[2] * p[2] < rho2
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_range_is_identity() {
        let spec = TaylorWarpSpec {
            coeff_range: 0.0,
            ..TaylorWarpSpec::default()
        };
        assert_eq!(
            random_taylor_warp(&spec).unwrap(),
            StructuredTaylorMap::identity(2, 3).lifted(3)
        );
    }

    #[test]
    fn seeded_and_pinned() {
        let spec = TaylorWarpSpec {
            seed: 11,
            ..TaylorWarpSpec::default()
        };
        let a = random_taylor_warp(&spec).unwrap();
        assert_eq!(a, random_taylor_warp(&spec).unwrap());
        assert_eq!(a.block(1)[(0, 0)], 1.0);
        assert_eq!(a.block(1)[(1, 1)], 1.0);
        assert!(a.block(2).amax() > 0.0);
        assert!(a.blocks().iter().flat_map(|b| b.iter()).all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn bump_value_at_half_sigma() {
        assert!((bump(0.5, 1.0) - (-4.0f64 / 3.0).exp()).abs() < 1e-15);
        assert!((bump(0.5, 1.0) - 0.26360).abs() < 5e-6);
        assert_eq!(bump(1.0, 1.0), 0.0);
        assert_eq!(bump(2.0, 1.0), 0.0);
    }

    #[test]
    fn calibration_rejects_zero_target() {
        let p = unit_disk(50);
        assert!(calibrate_rmsd(&p, &TaylorWarpSpec::default(), 0.0, 1e-3).is_err());
    }

    #[test]
    fn calibration_fixpoint() {
        let p = unit_disk(200);
        let spec = TaylorWarpSpec::default();
        let own = post_rigid_rmsd(&p, &random_taylor_warp(&spec).unwrap().apply(&p).unwrap()).unwrap();
        let c = calibrate_rmsd(&p, &spec, own, 1e-6).unwrap();
        assert_eq!(c.scale, 1.0);
        assert!((c.achieved - own).abs() <= 1e-6);
    }

    #[test]
    fn coincident_centers_rejected() {
        let p = PointSet::new(3, vec![0.0, 0.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
        assert!(matches!(
            bump_field(&p, &BumpWarpSpec::default()),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn fish_is_normalized() {
        let f = fish_2d(200);
        assert_eq!(f.len(), 200);
        assert!(f.centroid().iter().all(|c| c.abs() < 1e-12));
    }
}
