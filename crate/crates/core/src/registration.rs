//! Analytic ICP: normalization, staged linear initialization, then
//! nearest-neighbor correspondence alternating with structured Taylor fits
//! of gradually increasing order.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::amvff::{fit_center_params, fit_mapping_params, gate_order, FitConfig, MappingFit};
use crate::clock::Stopwatch;
use crate::error::{check_dim, Error, Result};
use crate::linear::{
    affine_params, fit_affine_residual, fit_projective_restricted, fit_rigid, AffineRefinement,
    ProjectiveRefinement, RigidTransform,
};
use crate::nn::{nearest_with_tree, rmse, Correspondence, KdTree};
use crate::points::{denormalize_with, normalize, NormMeta, PointSet};
use crate::taylor::{ChainStage, MapChain, StructuredTaylorMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    #[default]
    Taylor,
    Projective,
}

impl std::str::FromStr for Branch {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "taylor" => Ok(Branch::Taylor),
            "projective" => Ok(Branch::Projective),
            other => Err(Error::Argument(format!("unknown branch {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IcpConfig {
    pub rmse_threshold: f64,
    pub max_outer_iters: usize,
    /// Passes of the rigid/affine initialization.
    pub init_passes: usize,
    pub branch: Branch,
    /// Order cap and lift period live here.
    pub fit: FitConfig,
    pub seed: u64,
}

impl Default for IcpConfig {
    fn default() -> Self {
        Self {
            rmse_threshold: 1e-4,
            max_outer_iters: 30,
            init_passes: 4,
            branch: Branch::Taylor,
            fit: FitConfig::default(),
            seed: 0,
        }
    }
}

impl IcpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rmse_threshold > 0.0) {
            return Err(Error::Argument("rmse_threshold must be positive".into()));
        }
        if self.max_outer_iters < 1 || self.init_passes < 1 {
            return Err(Error::Argument("iteration counts must be at least 1".into()));
        }
        self.fit.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Rigid,
    Affine,
    Projective,
    Taylor,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Rigid => "rigid",
            Stage::Affine => "affine",
            Stage::Projective => "projective",
            Stage::Taylor => "taylor",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub stage: Stage,
    pub order: usize,
    pub rmse: f64,
    pub wall_ms: f64,
    pub update_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RegistrationTrace {
    pub iterations: Vec<TraceRecord>,
}

impl RegistrationTrace {
    pub fn last(&self) -> Option<&TraceRecord> {
        self.iterations.last()
    }

    pub fn len(&self) -> usize {
        self.iterations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterations.is_empty()
    }

    /// Same records with timing removed, for reproducibility checks.
    pub fn without_timing(&self) -> Vec<(usize, Stage, usize, u64, u64)> {
        self.iterations
            .iter()
            .map(|r| {
                (
                    r.iter,
                    r.stage,
                    r.order,
                    r.rmse.to_bits(),
                    r.update_norm.to_bits(),
                )
            })
            .collect()
    }
}

struct Recorder {
    clock: Stopwatch,
    trace: RegistrationTrace,
}

impl Recorder {
    fn new() -> Self {
        Self {
            clock: Stopwatch::start(),
            trace: RegistrationTrace::default(),
        }
    }

    fn push(&mut self, stage: Stage, order: usize, rmse: f64, update_norm: f64) {
        let last = self.trace.last().map(|r| r.wall_ms);
        let mut ms = self.clock.elapsed_ms();
        if let Some(prev) = last {
            if ms <= prev {
                ms = prev + 1e-6;
            }
        }
        let iter = self.trace.len() + 1;
        self.trace.iterations.push(TraceRecord {
            iter,
            stage,
            order,
            rmse,
            wall_ms: ms,
            update_norm,
        });
    }
}

/// Result of the linear initialization.
#[derive(Debug, Clone)]
pub struct StageInit {
    pub correspondence: Correspondence,
    pub rigid: RigidTransform,
    /// Identity when only the rigid pass ran.
    pub affine: AffineRefinement,
    pub projective: Option<ProjectiveRefinement>,
    pub passes: usize,
    /// NN RMSE of the initialized moving set.
    pub rmse: f64,
    /// The initialized moving set.
    pub aligned: PointSet,
}

impl StageInit {
    /// The initialization as one chain stage.
    pub fn stage(&self) -> Result<ChainStage> {
        linear_stage(&self.rigid, &self.affine, self.projective.as_ref())
    }
}

fn linear_stage(
    rigid: &RigidTransform,
    affine: &AffineRefinement,
    projective: Option<&ProjectiveRefinement>,
) -> Result<ChainStage> {
    let lin = affine.linear(rigid);
    let t = affine.translation(rigid);
    Ok(match projective {
        Some(p) => ChainStage::Projective(p.homography(&affine_params(&lin, &t)?)),
        None => ChainStage::Taylor(StructuredTaylorMap::affine(&lin, t.as_slice())?),
    })
}

/// Linear initialization on already-normalized sets.
pub fn stage_init(fixed: &PointSet, moving: &PointSet, config: &IcpConfig) -> Result<StageInit> {
    let tree = KdTree::build(fixed);
    stage_init_inner(fixed, moving, config, &tree, &mut Recorder::new())
}

fn flat_params(lin: &DMatrix<f64>, t: &[f64], tilt: [f64; 2]) -> Vec<f64> {
    lin.iter().copied().chain(t.iter().copied()).chain(tilt).collect()
}

fn stage_init_inner(
    fixed: &PointSet,
    moving: &PointSet,
    config: &IcpConfig,
    tree: &KdTree,
    rec: &mut Recorder,
) -> Result<StageInit> {
    config.validate()?;
    check_dim(fixed.dim(), moving.dim())?;
    let n = fixed.dim();
    if config.branch == Branch::Projective && n != 2 {
        return Err(Error::UnsupportedDimension(n));
    }
    let mut current = moving.without_meta();
    let mut corr = nearest_with_tree(tree, fixed, &current)?;
    let mut rigid = RigidTransform::identity(n);
    let mut affine = AffineRefinement::identity(n);
    let mut projective = None;
    let mut prev_params = flat_params(&DMatrix::identity(n, n), &vec![0.0; n], [0.0; 2]);
    let mut prev_rmse = rmse(fixed, &current, &corr)?;
    let mut cur_rmse = prev_rmse;
    let mut passes = 0;

    for pass in 1..=config.init_passes {
        passes = pass;
        rigid = fit_rigid(fixed, moving, &corr)?;
        let mut stage = Stage::Rigid;
        affine = AffineRefinement::identity(n);
        if pass >= 2 {
            affine = fit_affine_residual(fixed, moving, &corr, &rigid)?;
            stage = Stage::Affine;
        }
        let lin = affine.linear(&rigid);
        let t = affine.translation(&rigid);
        let mut tilt = [0.0; 2];
        if pass >= 3 && config.branch == Branch::Projective {
            let p = fit_projective_restricted(fixed, moving, &corr, &affine_params(&lin, &t)?)?;
            tilt = p.tilt;
            projective = Some(p);
            stage = Stage::Projective;
        }
        current = linear_stage(&rigid, &affine, projective.as_ref())?.apply(moving)?;
        let params = match &projective {
            Some(p) => {
                let dt = [t[0] + p.dt[0], t[1] + p.dt[1]];
                flat_params(&lin, &dt, tilt)
            }
            None => flat_params(&lin, t.as_slice(), tilt),
        };
        let update = params
            .iter()
            .zip(&prev_params)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        prev_params = params;
        corr = nearest_with_tree(tree, fixed, &current)?;
        cur_rmse = rmse(fixed, &current, &corr)?;
        if !cur_rmse.is_finite() {
            return Err(Error::Numeric("RMSE is not finite".into()));
        }
        rec.push(stage, 1, cur_rmse, update);
        if stage == Stage::Projective {
            break;
        }
        let settled = update < config.fit.residual_threshold
            || (pass > 1 && (prev_rmse - cur_rmse).abs() < config.fit.residual_threshold);
        prev_rmse = cur_rmse;
        if settled {
            break;
        }
    }
    Ok(StageInit {
        correspondence: corr,
        rigid,
        affine,
        projective,
        passes,
        rmse: cur_rmse,
        aligned: current,
    })
}

#[derive(Debug, Clone)]
pub struct RegistrationResult {
    /// Applies to the original moving set and lands in the fixed set's frame.
    pub chain: MapChain,
    pub correspondence: Correspondence,
    pub trace: RegistrationTrace,
    /// Registered moving set in the fixed set's original units.
    pub registered: PointSet,
    /// RMSE in normalized units; equal to the last trace row.
    pub final_rmse: f64,
    /// RMSE in the fixed set's original units.
    pub final_rmse_denormalized: f64,
    pub fixed_meta: NormMeta,
    pub moving_meta: NormMeta,
    pub warnings: Vec<String>,
    pub wall_ms: f64,
}

impl RegistrationResult {
    pub fn degree_bound(&self) -> u128 {
        self.chain.degree_bound()
    }
}

fn meta_map(meta: &NormMeta, forward: bool) -> StructuredTaylorMap {
    let n = meta.centroid.len();
    let (lin, t): (f64, Vec<f64>) = if forward {
        (
            1.0 / meta.scale,
            meta.centroid.iter().map(|c| -c / meta.scale).collect(),
        )
    } else {
        (meta.scale, meta.centroid.clone())
    };
    StructuredTaylorMap::affine(&(DMatrix::identity(n, n) * lin), &t).expect("normalization map is finite")
}

/// Full registration of `moving` onto `fixed`.
pub fn analytic_icp(fixed: &PointSet, moving: &PointSet, config: &IcpConfig) -> Result<RegistrationResult> {
    config.validate()?;
    check_dim(fixed.dim(), moving.dim())?;
    if fixed.is_empty() || moving.is_empty() {
        return Err(Error::Argument("registration needs non-empty point sets".into()));
    }
    let mut rec = Recorder::new();
    let fixed_n = normalize(fixed)?;
    let moving_n = normalize(moving)?;
    let fixed_meta = fixed_n.norm_meta().cloned().expect("normalize records metadata");
    let moving_meta = moving_n.norm_meta().cloned().expect("normalize records metadata");
    let tree = KdTree::build(&fixed_n);

    let init = stage_init_inner(&fixed_n, &moving_n, config, &tree, &mut rec)?;
    let mut chain = MapChain::new();
    chain.push(meta_map(&moving_meta, true));
    chain.push(init.stage()?);

    let fit_cfg = &config.fit;
    let mut warnings = Vec::new();
    let mut current = init.aligned.clone();
    let mut corr = init.correspondence.clone();
    let mut cur_rmse = init.rmse;
    let mut cap = fit_cfg.order_cap;
    let mut deg = cap.min(2);
    // The projective branch replaces Taylor lifting rather than preceding it.
    let outer = match config.branch {
        Branch::Taylor => config.max_outer_iters,
        Branch::Projective => 0,
    };

    for i in 1..=outer {
        if cur_rmse < config.rmse_threshold {
            break;
        }
        if i > 1 && (i - 1) % fit_cfg.lift_period == 0 && deg < cap {
            deg = gate_order(
                cur_rmse,
                deg,
                &FitConfig {
                    order_cap: cap,
                    ..fit_cfg.clone()
                },
            );
        }
        let fit = match fit_at(&fixed_n, &current, &corr, deg, fit_cfg) {
            Ok(f) => f,
            Err(e @ (Error::Conditioning { .. } | Error::InsufficientData { .. })) if deg > 1 => {
                warnings.push(format!(
                    "iteration {i}: order {deg} fit failed ({e}); retrying at order {}",
                    deg - 1
                ));
                deg -= 1;
                cap = deg;
                match fit_at(&fixed_n, &current, &corr, deg, fit_cfg) {
                    Ok(f) => f,
                    Err(e) => {
                        warnings.push(format!(
                            "iteration {i}: retry failed ({e}); stopping with best result"
                        ));
                        break;
                    }
                }
            }
            Err(e @ (Error::Conditioning { .. } | Error::InsufficientData { .. })) => {
                warnings.push(format!("iteration {i}: {e}; stopping with best result"));
                break;
            }
            Err(e) => return Err(e),
        };
        if !fit.converged {
            warnings.push(format!(
                "iteration {i}: coefficient fit stopped before convergence"
            ));
        }
        let mut map = fit.map;
        if deg >= 2 {
            match fit_center_params(&fixed_n, &current, &corr, &map, fit_cfg) {
                Ok(c) if c.final_residual <= fit.final_residual => map = c.apply_to(&map),
                Ok(_) => {}
                Err(e) => warnings.push(format!("iteration {i}: center fit skipped ({e})")),
            }
        }
        let next = map.apply(&current)?;
        let next_corr = nearest_with_tree(&tree, &fixed_n, &next)?;
        let next_rmse = rmse(&fixed_n, &next, &next_corr)?;
        if !next_rmse.is_finite() {
            return Err(Error::Numeric("RMSE is not finite".into()));
        }
        rec.push(Stage::Taylor, deg, next_rmse, fit.step_norm);
        chain.push(map);
        current = next;
        corr = next_corr;
        cur_rmse = next_rmse;
    }

    chain.push(meta_map(&fixed_meta, false));
    let registered = denormalize_with(&current, &fixed_meta);
    let wall_ms = rec.trace.last().map(|r| r.wall_ms).unwrap_or(0.0);
    Ok(RegistrationResult {
        chain,
        correspondence: corr,
        trace: rec.trace,
        registered,
        final_rmse: cur_rmse,
        final_rmse_denormalized: cur_rmse * fixed_meta.scale,
        fixed_meta,
        moving_meta,
        warnings,
        wall_ms,
    })
}

fn fit_at(
    fixed: &PointSet,
    moving: &PointSet,
    corr: &Correspondence,
    deg: usize,
    cfg: &FitConfig,
) -> Result<MappingFit> {
    let init = StructuredTaylorMap::identity(fixed.dim(), deg);
    fit_mapping_params(fixed, moving, corr, &init, cfg)
}
