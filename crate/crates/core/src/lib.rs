//! Non-rigid point set registration with structured truncated Taylor maps.
//!
//! A deformation is a chain of maps
//! `tau(y) = sum_k (1/k!) J^[k] phi^[k](y - c)`; registration fits them by
//! nearest-neighbor ICP after a rigid and affine initialization, raising
//! the truncation order as the residual falls.
//!
//! ```
//! use taylor_icp::{analytic_icp, synth, IcpConfig};
//!
//! let moving = synth::fish_2d(120);
//! let warp = synth::random_taylor_warp(&synth::TaylorWarpSpec {
//!     coeff_range: 0.05,
//!     seed: 3,
//!     ..Default::default()
//! })
//! .unwrap();
//! let fixed = warp.apply(&moving).unwrap();
//! let result = analytic_icp(&fixed, &moving, &IcpConfig::default()).unwrap();
//! assert!(result.final_rmse < 0.05);
//! ```

// NaN must fail these checks, so `!(x > 0.0)` is deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod amvff;
pub mod clock;
mod error;
pub mod io;
pub mod linear;
pub mod nn;
pub mod points;
pub mod registration;
pub mod synth;
pub mod taylor;

pub use amvff::{gate_order, FitConfig};
pub use error::{Error, ErrorKind, Result};
pub use nn::{nearest_neighbors, rmse, Correspondence};
pub use points::{normalize, NormMeta, PointSet};
pub use registration::{
    analytic_icp, stage_init, Branch, IcpConfig, RegistrationResult, RegistrationTrace, Stage,
};
pub use taylor::{MapChain, StructuredTaylorMap};
