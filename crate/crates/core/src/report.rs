//! Run reports and their JSON-lines / CSV emission.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::field::{GridDims, ProblemState};
use crate::models::{self, MachineProfile, Variant};
use crate::mwd::ThreadGroupShape;
use crate::Result;

/// Bumped whenever a field of [`RunReport`] changes meaning or name.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

pub const CSV_COLUMNS: [&str; 12] = [
    "engine",
    "grid",
    "threads",
    "dw",
    "bz",
    "tgz",
    "tgx",
    "tgc",
    "mlups",
    "balance_model",
    "cache_model_bytes",
    "predicted_mlups",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineKind {
    Naive,
    Spatial,
    #[serde(rename = "1wd")]
    OneWd,
    Mwd,
}

impl EngineKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EngineKind::Naive => "naive",
            EngineKind::Spatial => "spatial",
            EngineKind::OneWd => "1wd",
            EngineKind::Mwd => "mwd",
        }
    }
}

impl std::fmt::Display for EngineKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for EngineKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "naive" => Ok(EngineKind::Naive),
            "spatial" => Ok(EngineKind::Spatial),
            "1wd" => Ok(EngineKind::OneWd),
            "mwd" => Ok(EngineKind::Mwd),
            other => Err(crate::Error::Config(format!("unknown engine '{other}' (naive|spatial|1wd|mwd)"))),
        }
    }
}

/// Outcome of the optional naive-oracle comparison.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum Verification {
    #[default]
    NotRun,
    Passed,
    Failed { max_abs_diff: f64 },
}

/// One engine run. Model fields are predictions, not measurements.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub engine: EngineKind,
    pub grid: GridDims,
    /// Timesteps executed, including diamond padding.
    pub steps: usize,
    pub requested_steps: usize,
    pub threads: usize,
    pub shape: Option<ThreadGroupShape>,
    pub num_groups: Option<usize>,
    pub dw: Option<usize>,
    pub bz: Option<usize>,
    pub block_y: Option<usize>,
    pub block_x: Option<usize>,
    pub seconds: f64,
    pub lups: u64,
    /// Absent for empty runs or when no clock is available.
    pub mlups: Option<f64>,
    pub balance_model: f64,
    pub cache_model_bytes: Option<u64>,
    pub bandwidth_gbs: f64,
    pub predicted_mlups: f64,
    pub verification: Verification,
    /// Hex digest of the interior and ghost field values after the run.
    pub field_digest: String,
}

impl RunReport {
    pub(crate) fn new(
        engine: EngineKind,
        state: &ProblemState,
        steps: usize,
        requested_steps: usize,
        threads: usize,
        variant: Variant,
        profile: &MachineProfile,
        seconds: f64,
    ) -> Self {
        let lups = state.dims.interior_cells() as u64 * steps as u64;
        let balance = models::code_balance(variant);
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            engine,
            grid: state.dims,
            steps,
            requested_steps,
            threads,
            shape: None,
            num_groups: None,
            dw: None,
            bz: None,
            block_y: None,
            block_x: None,
            seconds,
            lups,
            mlups: mlups(lups, seconds),
            balance_model: balance,
            cache_model_bytes: None,
            bandwidth_gbs: profile.bandwidth_gbs,
            predicted_mlups: models::predict_throughput(profile, balance),
            verification: Verification::NotRun,
            field_digest: format!("{:016x}", state.field_digest()),
        }
    }

    fn csv_row(&self) -> CsvRow {
        CsvRow {
            engine: self.engine.as_str(),
            grid: self.grid.to_string(),
            threads: self.threads,
            dw: self.dw,
            bz: self.bz,
            tgz: self.shape.map(|s| s.tgz),
            tgx: self.shape.map(|s| s.tgx),
            tgc: self.shape.map(|s| s.tgc),
            mlups: self.mlups,
            balance_model: self.balance_model,
            cache_model_bytes: self.cache_model_bytes,
            predicted_mlups: self.predicted_mlups,
        }
    }
}

#[derive(Serialize)]
struct CsvRow {
    engine: &'static str,
    grid: String,
    threads: usize,
    dw: Option<usize>,
    bz: Option<usize>,
    tgz: Option<usize>,
    tgx: Option<usize>,
    tgc: Option<usize>,
    mlups: Option<f64>,
    balance_model: f64,
    cache_model_bytes: Option<u64>,
    predicted_mlups: f64,
}

pub fn mlups(lups: u64, seconds: f64) -> Option<f64> {
    (lups > 0 && seconds > 0.0).then(|| lups as f64 / seconds / 1e6)
}

/// Appends one JSON object per report to `jsonl` and one row per report to
/// `csv` (writing the header when the file is new or empty).
pub fn emit_report(reports: &[RunReport], jsonl: impl AsRef<Path>, csv: impl AsRef<Path>) -> Result<()> {
    if reports.is_empty() {
        return Err(crate::Error::Config("no reports to emit".into()));
    }
    let mut out = OpenOptions::new().create(true).append(true).open(jsonl)?;
    for r in reports {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }

    let file = OpenOptions::new().create(true).append(true).open(csv.as_ref())?;
    let fresh = file.metadata()?.len() == 0;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    if fresh {
        w.write_record(CSV_COLUMNS)?;
    }
    for r in reports {
        w.serialize(r.csv_row())?;
    }
    w.flush()?;
    Ok(())
}

/// Wall-clock stopwatch; reads zero where no monotonic clock exists (wasm).
pub(crate) struct Stopwatch {
    #[cfg(not(target_arch = "wasm32"))]
    start: std::time::Instant,
}

impl Stopwatch {
    pub(crate) fn start() -> Self {
        Self {
            #[cfg(not(target_arch = "wasm32"))]
            start: std::time::Instant::now(),
        }
    }

    pub(crate) fn seconds(&self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        {
            self.start.elapsed().as_secs_f64()
        }
        #[cfg(target_arch = "wasm32")]
        {
            0.0
        }
    }
}
