//! Wavefront-diamond engines: a single-threaded (1WD) and a multicore (MWD)
//! variant sharing one tiling plan, tile queue and executor.

mod exec;
mod plan;
mod queue;

pub use exec::{execute_mwd, run_mwd, MwdOutcome, SanitizerReport, ThreadGroupShape, X_CHUNK_QUANTUM};
pub use plan::{
    build_tiling_plan, level_family, padded_steps, validate_tiling, Stage, Tile, TileLevel, TilingPlan,
};
pub use queue::{read_trace, write_trace, TileQueue, TraceRecord};
