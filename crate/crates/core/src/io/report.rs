use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::amvff::BFGS_SECANT;
use crate::registration::{IcpConfig, RegistrationResult, RegistrationTrace, TraceRecord};

pub const TRACE_HEADER: &str = "iter,stage,order,rmse,wall_ms,update_norm";

/// One CSV row per trace record.
pub fn trace_csv(trace: &RegistrationTrace) -> String {
    let mut s = String::from(TRACE_HEADER);
    s.push('\n');
    for r in &trace.iterations {
        let _ = writeln!(
            s,
            "{},{},{},{:?},{:?},{:?}",
            r.iter, r.stage, r.order, r.rmse, r.wall_ms, r.update_norm
        );
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalRmse {
    pub normalized: f64,
    pub denormalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: IcpConfig,
    pub bfgs_secant: String,
    pub trace: Vec<TraceRecord>,
    pub final_rmse: FinalRmse,
    pub degree_bound: u128,
    pub wall_ms: f64,
    pub seed: u64,
    pub warnings: Vec<String>,
}

impl RunReport {
    pub fn new(config: &IcpConfig, result: &RegistrationResult) -> Self {
        Self {
            config: config.clone(),
            bfgs_secant: BFGS_SECANT.into(),
            trace: result.trace.iterations.clone(),
            final_rmse: FinalRmse {
                normalized: result.final_rmse,
                denormalized: result.final_rmse_denormalized,
            },
            degree_bound: result.degree_bound(),
            wall_ms: result.wall_ms,
            seed: config.seed,
            warnings: result.warnings.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
