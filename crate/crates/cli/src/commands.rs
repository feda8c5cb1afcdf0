use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Serialize;
use taylor_icp::clock::Stopwatch;
use taylor_icp::io::{read_cloud, save_map, trace_csv, write_cloud, RunReport};
use taylor_icp::points::denormalize_with;
use taylor_icp::synth::{
    bump_field, calibrate_bump_rmsd, calibrate_rmsd, lumpy_solid, random_taylor_warp, BumpWarp, BumpWarpSpec,
    TaylorWarpSpec,
};
use taylor_icp::{
    analytic_icp, nearest_neighbors, normalize, rmse, Error, FitConfig, IcpConfig, MapChain, NormMeta,
    Result, StructuredTaylorMap,
};

use crate::{BenchArgs, DeformArgs, EvalArgs, Mode, RegisterArgs};

/// Calibration tolerance relative to the requested RMSD.
const RMSD_REL_TOL: f64 = 0.04;

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(Error::from)
}

fn report_path(a: &RegisterArgs) -> PathBuf {
    a.out_report
        .clone()
        .unwrap_or_else(|| a.out_trace.with_extension("json"))
}

pub fn register(a: &RegisterArgs) -> Result<()> {
    let fixed = read_cloud(&a.fixed)?;
    let moving = read_cloud(&a.moving)?;
    let config = IcpConfig {
        rmse_threshold: a.rmse_threshold,
        max_outer_iters: a.max_iters,
        branch: a.branch.into(),
        seed: a.seed,
        fit: FitConfig {
            order_cap: a.order_cap,
            ..FitConfig::default()
        },
        ..IcpConfig::default()
    };
    let result = analytic_icp(&fixed, &moving, &config)?;
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    save_map(&a.out_map, &result.chain)?;
    write_text(&a.out_trace, &trace_csv(&result.trace))?;
    write_text(&report_path(a), &RunReport::new(&config, &result).to_json())?;
    println!(
        "final_rmse {:?} (normalized {:?}), degree bound {}",
        result.final_rmse_denormalized,
        result.final_rmse,
        result.degree_bound()
    );
    Ok(())
}

fn normalization_map(meta: &NormMeta, forward: bool) -> Result<StructuredTaylorMap> {
    let n = meta.centroid.len();
    let mut lin = nalgebra::DMatrix::zeros(n, n);
    let (s, t): (f64, Vec<f64>) = if forward {
        (
            1.0 / meta.scale,
            meta.centroid.iter().map(|c| -c / meta.scale).collect(),
        )
    } else {
        (meta.scale, meta.centroid.clone())
    };
    lin.fill_diagonal(s);
    StructuredTaylorMap::affine(&lin, &t)
}

#[derive(Serialize)]
struct BumpTruth<'a> {
    format: &'static str,
    version: u32,
    /// The field acts on coordinates normalized with this metadata.
    normalization: &'a NormMeta,
    field: &'a BumpWarp,
}

pub fn deform(a: &DeformArgs) -> Result<()> {
    let points = read_cloud(&a.input)?;
    let normalized = normalize(&points)?;
    let meta = normalized
        .norm_meta()
        .cloned()
        .expect("normalize records metadata");
    let n = points.dim();
    match a.mode {
        Mode::Taylor => {
            let spec = TaylorWarpSpec {
                dim: n,
                order: a.order.unwrap_or(3),
                coeff_range: a.coeff_range.unwrap_or(0.3),
                identity_diagonal: true,
                seed: a.seed,
            };
            let warp = match a.target_rmsd {
                Some(t) => {
                    let cal = calibrate_rmsd(&normalized, &spec, t, RMSD_REL_TOL * t)?;
                    eprintln!("calibrated scale {:?}, RMSD {:?}", cal.scale, cal.achieved);
                    cal.warp
                }
                None => random_taylor_warp(&spec)?,
            };
            let warped = denormalize_with(&warp.apply(&normalized)?, &meta);
            write_cloud(&a.out, &warped)?;
            let mut truth = MapChain::new();
            truth.push(normalization_map(&meta, true)?);
            truth.push(warp);
            truth.push(normalization_map(&meta, false)?);
            save_map(&a.out_truth, &truth)?;
        }
        Mode::Bump => {
            let mut spec = BumpWarpSpec {
                seed: a.seed,
                ..BumpWarpSpec::default()
            };
            spec.base.dim = n;
            spec.base.seed = a.seed;
            if let Some(o) = a.order {
                spec.base.order = o;
            }
            if let Some(r) = a.coeff_range {
                spec.base.coeff_range = r;
            }
            let field = match a.target_rmsd {
                Some(t) => {
                    let cal = calibrate_bump_rmsd(&normalized, &spec, t, RMSD_REL_TOL * t)?;
                    eprintln!("calibrated scale {:?}, RMSD {:?}", cal.scale, cal.achieved);
                    cal.warp
                }
                None => bump_field(&normalized, &spec)?,
            };
            let warped = denormalize_with(&field.apply(&normalized)?, &meta);
            write_cloud(&a.out, &warped)?;
            let truth = BumpTruth {
                format: "taylor-icp-bump-warp",
                version: 1,
                normalization: &meta,
                field: &field,
            };
            let json = serde_json::to_string_pretty(&truth).map_err(|e| Error::Format(e.to_string()))?;
            write_text(&a.out_truth, &json)?;
        }
    }
    Ok(())
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let fixed = read_cloud(&a.fixed)?;
    let moving = read_cloud(&a.moving)?;
    let chain = taylor_icp::io::load_map(&a.map)?;
    let registered = chain.apply(&moving)?;
    let corr = nearest_neighbors(&fixed, &registered)?;
    println!("{:?}", rmse(&fixed, &registered, &corr)?);
    Ok(())
}

struct BenchRow {
    size: usize,
    trial: usize,
    seed: u64,
    wall_ms: f64,
    iterations: usize,
    rmsd: f64,
    final_rmse: f64,
}

fn bench_trial(size: usize, trial: usize, seed: u64, a: &BenchArgs) -> Result<BenchRow> {
    let moving = lumpy_solid(size, seed);
    let spec = TaylorWarpSpec {
        dim: 3,
        seed,
        ..TaylorWarpSpec::default()
    };
    let cal = calibrate_rmsd(&moving, &spec, a.target_rmsd, RMSD_REL_TOL * a.target_rmsd)?;
    let fixed = cal.warp.apply(&moving)?;
    // A vanishing threshold makes every run use the full iteration budget.
    let config = IcpConfig {
        rmse_threshold: f64::MIN_POSITIVE,
        max_outer_iters: a.max_iters,
        seed,
        ..IcpConfig::default()
    };
    let clock = Stopwatch::start();
    let result = analytic_icp(&fixed, &moving, &config)?;
    Ok(BenchRow {
        size,
        trial,
        seed,
        wall_ms: clock.elapsed_ms(),
        iterations: result.trace.len(),
        rmsd: cal.achieved,
        final_rmse: result.final_rmse_denormalized,
    })
}

/// Least-squares slope of `ln y` against `ln x`.
fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let m = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let (mx, my) = (lx.iter().sum::<f64>() / m, ly.iter().sum::<f64>() / m);
    let num: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    num / den
}

pub fn bench(a: &BenchArgs) -> Result<()> {
    if a.trials == 0 || a.jobs == 0 || a.sizes.iter().any(|&s| s < 10) {
        return Err(Error::Argument(
            "bench needs trials >= 1, jobs >= 1 and sizes >= 10".into(),
        ));
    }
    let tasks: Vec<(usize, usize, u64)> = a
        .sizes
        .iter()
        .flat_map(|&s| (0..a.trials).map(move |t| (s, t)))
        .enumerate()
        .map(|(i, (s, t))| (s, t, a.seed.wrapping_add(i as u64)))
        .collect();
    let slots: Vec<Mutex<Option<Result<BenchRow>>>> = tasks.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..a.jobs.min(tasks.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(size, trial, seed)) = tasks.get(i) else {
                    break;
                };
                let row = bench_trial(size, trial, seed, a);
                *slots[i].lock().expect("slot lock") = Some(row);
            });
        }
    });
    let mut rows = Vec::with_capacity(tasks.len());
    for slot in slots {
        rows.push(slot.into_inner().expect("slot lock").expect("every task ran")?);
    }
    let mut csv = String::from("size,trial,seed,wall_ms,iterations,rmsd,final_rmse\n");
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{:?},{},{:?},{:?}",
            r.size, r.trial, r.seed, r.wall_ms, r.iterations, r.rmsd, r.final_rmse
        );
    }
    write_text(&a.out, &csv)?;
    if a.sizes.len() >= 2 {
        let means: Vec<(f64, f64)> = a
            .sizes
            .iter()
            .map(|&s| {
                let times: Vec<f64> = rows.iter().filter(|r| r.size == s).map(|r| r.wall_ms).collect();
                (s as f64, times.iter().sum::<f64>() / times.len() as f64)
            })
            .collect();
        println!("log-log slope {:.3}", log_log_slope(&means));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(f64, f64)> = [1.0, 2.0, 4.0, 8.0]
            .iter()
            .map(|&x: &f64| (x, 3.0 * x.powf(1.5)))
            .collect();
        assert!((log_log_slope(&pts) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn normalization_maps_invert() {
        let meta = NormMeta {
            centroid: vec![1.0, -2.0],
            scale: 3.0,
        };
        let mut chain = MapChain::new();
        chain.push(normalization_map(&meta, true).unwrap());
        chain.push(normalization_map(&meta, false).unwrap());
        let y = chain.evaluate(&[0.5, 7.0]).unwrap();
        assert!((y[0] - 0.5).abs() < 1e-14 && (y[1] - 7.0).abs() < 1e-14, "{y:?}");
    }
}
