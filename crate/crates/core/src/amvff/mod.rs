//! Coefficient and center fitting for structured Taylor maps, plus the
//! residual gate that decides when the fitted order may grow.

mod fit;
mod system;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use fit::{fit_center_params, fit_lifted_block, fit_mapping_params, CenterFit, MappingFit};
pub use system::{
    build_center_system, build_mapping_system, solve_normal, solve_normal_with_limit, DesignSystem,
    NormalSystem, DEFAULT_CONDITION_LIMIT,
};

/// Which gradient feeds the BFGS secant pair; echoed in run reports.
pub const BFGS_SECANT: &str = "difference of normal-equation updates M^-1 B^T (l - B x)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    /// Stop once the normal-equation update norm drops below this.
    pub residual_threshold: f64,
    pub max_inner_iters: usize,
    pub order_cap: usize,
    pub lift_period: usize,
    pub gate_base: f64,
    pub gate_decay: f64,
    pub ridge: f64,
    pub condition_limit: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            residual_threshold: 1e-10,
            max_inner_iters: 50,
            order_cap: 4,
            lift_period: 2,
            gate_base: 0.1,
            gate_decay: 0.5,
            ridge: 1e-10,
            condition_limit: DEFAULT_CONDITION_LIMIT,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Argument(format!("fit config: {what}")));
        if !(self.residual_threshold > 0.0) {
            return bad("residual_threshold must be positive");
        }
        if self.max_inner_iters < 1 {
            return bad("max_inner_iters must be at least 1");
        }
        if self.order_cap < 1 {
            return bad("order_cap must be at least 1");
        }
        if self.lift_period < 1 {
            return bad("lift_period must be at least 1");
        }
        if !(self.gate_decay > 0.0 && self.gate_decay < 1.0) {
            return bad("gate_decay must lie in (0, 1)");
        }
        if !(self.gate_base > 0.0) {
            return bad("gate_base must be positive");
        }
        if !(self.ridge >= 0.0) {
            return bad("ridge must be non-negative");
        }
        if !(self.condition_limit > 1.0) {
            return bad("condition_limit must exceed 1");
        }
        Ok(())
    }

    /// `delta_0 * alpha^order`.
    pub fn gate_threshold(&self, order: usize) -> f64 {
        self.gate_base * self.gate_decay.powi(order as i32)
    }
}

/// Next order: one higher when the residual is under the gate and the cap
/// allows it, otherwise unchanged.
pub fn gate_order(current_rmse: f64, current_order: usize, config: &FitConfig) -> usize {
    if current_order < config.order_cap && current_rmse < config.gate_threshold(current_order) {
        current_order + 1
    } else {
        current_order
    }
}
