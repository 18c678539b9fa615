//! Split-field time-harmonic Maxwell stencil with naive, spatially blocked and
//! wavefront-diamond engines, plus traffic/cache models, a tuner and an
//! equivalence verifier.

pub mod bandwidth;
pub mod barrier;
pub mod coeffs;
pub mod config;
pub mod docs;
pub mod error;
pub mod field;
pub mod kernels;
pub mod models;
pub mod mwd;
pub mod reference;
pub mod report;
pub mod tuner;
pub mod verify;

pub use error::{Error, Result};
pub use field::{allocate_state, linear_index, Component, ComplexScalar, Family, GridDims, ProblemState};
pub use mwd::{build_tiling_plan, run_mwd, ThreadGroupShape, TilingPlan};
pub use reference::{run_naive, run_spatial_blocked, RunOptions};
pub use report::{emit_report, EngineKind, RunReport};
