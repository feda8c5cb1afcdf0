//! Plain Rust side of the browser demo, testable off the browser.

use nalgebra::DMatrix;
use taylor_icp::points::denormalize_with;
use taylor_icp::synth::{calibrate_rmsd, fish_2d, unit_disk, TaylorWarpSpec};
use taylor_icp::taylor::ChainStage;
use taylor_icp::{analytic_icp, Error, IcpConfig, PointSet, Result, Stage, StructuredTaylorMap};

/// `x1 = y1 + a1 y2 + a2 y1^2 / 2`, `x2 = y2 + a3 y1 y2`.
pub fn shear_bend_map(a1: f64, a2: f64, a3: f64) -> Result<StructuredTaylorMap> {
    let j1 = DMatrix::from_row_slice(2, 2, &[1.0, a1, 0.0, 1.0]);
    let j2 = DMatrix::from_row_slice(2, 3, &[a2, 0.0, 0.0, 0.0, a3, 0.0]);
    StructuredTaylorMap::from_blocks(vec![0.0, 0.0], vec![DMatrix::zeros(2, 1), j1, j2])
}

/// Image of a `lines x lines` grid on `[-1, 1]^2`. The result holds
/// `2 * lines` polylines of `samples` points each, horizontal lines first,
/// flattened as `x, y` pairs.
pub fn warp_grid(map: &StructuredTaylorMap, lines: usize, samples: usize) -> Result<Vec<f64>> {
    if lines < 2 || samples < 2 {
        return Err(Error::Argument(
            "grid needs at least 2 lines and 2 samples".into(),
        ));
    }
    let at = |i: usize, m: usize| -1.0 + 2.0 * i as f64 / (m - 1) as f64;
    let mut out = Vec::with_capacity(4 * lines * samples);
    for horizontal in [true, false] {
        for l in 0..lines {
            for s in 0..samples {
                let (u, v) = (at(s, samples), at(l, lines));
                let y = if horizontal { [u, v] } else { [v, u] };
                out.extend(map.evaluate(&y)?);
            }
        }
    }
    Ok(out)
}

/// Moving shape and its warped copy, calibrated to the given post-rigid
/// RMSD.
pub fn deform_pair(shape: &str, count: usize, seed: u64, rmsd: f64) -> Result<(PointSet, PointSet)> {
    let moving = match shape {
        "fish" => fish_2d(count),
        "disk" => unit_disk(count),
        other => return Err(Error::Argument(format!("unknown shape {other:?}"))),
    };
    let spec = TaylorWarpSpec {
        seed,
        ..TaylorWarpSpec::default()
    };
    let cal = calibrate_rmsd(&moving, &spec, rmsd, 0.04 * rmsd)?;
    let fixed = cal.warp.apply(&moving)?;
    Ok((moving, fixed))
}

#[derive(Debug, Clone)]
pub struct Frames {
    /// Moving set after each chain stage, in the fixed set's frame.
    pub points: Vec<Vec<f64>>,
    pub labels: Vec<String>,
    pub rmse: Vec<f64>,
    pub degree_bound: u128,
}

/// Registers and replays the chain stage by stage.
pub fn register_frames(fixed: &PointSet, moving: &PointSet, order_cap: usize) -> Result<Frames> {
    let mut config = IcpConfig::default();
    config.fit.order_cap = order_cap;
    let result = analytic_icp(fixed, moving, &config)?;
    let stages = result.chain.stages();
    let trace = &result.trace.iterations;
    let last_init = trace.iter().filter(|t| t.stage != Stage::Taylor).count();
    let taylor: Vec<_> = trace.iter().filter(|t| t.stage == Stage::Taylor).collect();

    let mut current = stages[0].apply(moving)?;
    let mut frames = Frames {
        points: vec![denormalize_with(&current, &result.fixed_meta).into_coords()],
        labels: vec!["start".into()],
        rmse: vec![f64::NAN],
        degree_bound: result.degree_bound(),
    };
    for (k, stage) in stages[1..stages.len() - 1].iter().enumerate() {
        current = stage.apply(&current)?;
        frames
            .points
            .push(denormalize_with(&current, &result.fixed_meta).into_coords());
        let (label, rmse) = match (k, stage) {
            (0, ChainStage::Projective(_)) => ("projective".to_string(), trace[last_init - 1].rmse),
            (0, _) => (trace[last_init - 1].stage.to_string(), trace[last_init - 1].rmse),
            (_, _) => {
                let t = taylor[k - 1];
                (format!("taylor order {}", t.order), t.rmse)
            }
        };
        frames.labels.push(label);
        frames.rmse.push(rmse * result.fixed_meta.scale);
    }
    Ok(frames)
}
