//! Cache-pruned search over diamond width, wavefront block and group shape.

use std::cmp::Reverse;

use serde::{Deserialize, Serialize};

use crate::coeffs::{build_benchmark_problem, SchemeParams};
use crate::field::{GridDims, ProblemState};
use crate::models::{self, MachineProfile, Variant};
use crate::mwd::{build_tiling_plan, execute_mwd, ThreadGroupShape};
use crate::reference::{choose_spatial_blocks, run_naive, RunOptions};
use crate::report::Stopwatch;
use crate::verify::compare_states;
use crate::{Error, Result};

pub const MAX_DW: usize = 32;
pub const MAX_BZ: usize = 16;
/// Candidates within this fraction of the best throughput count as tied.
pub const TIE_WINDOW: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub dw: usize,
    pub bz: usize,
    pub shape: ThreadGroupShape,
    pub num_groups: usize,
    pub cache_model_bytes: u64,
    pub balance_model: f64,
    pub predicted_mlups: f64,
}

/// All valid thread-group shapes for `threads` workers, optionally capped by
/// the wavefront block (tgz ≤ bz) and by the x extent (one chunk per worker).
pub fn shapes_for(threads: usize, bz: usize, nx: usize) -> Vec<ThreadGroupShape> {
    let max_tgx = nx.div_ceil(crate::mwd::X_CHUNK_QUANTUM).max(1);
    let mut out = Vec::new();
    for g in (1..=threads).filter(|g| threads % g == 0) {
        for tgc in [1, 2, 3, 6].into_iter().filter(|c| g % c == 0) {
            let rest = g / tgc;
            for tgz in (1..=rest.min(bz)).filter(|z| rest % z == 0) {
                let tgx = rest / tgz;
                if tgx <= max_tgx {
                    out.push(ThreadGroupShape::new(tgz, tgx, tgc));
                }
            }
        }
    }
    out
}

/// Every (dw, bz, shape) whose aggregate tile footprint fits the usable
/// cache, sorted by model code balance (then larger groups first).
pub fn enumerate_candidates(dims: &GridDims, threads: usize, profile: &MachineProfile) -> Result<Vec<Candidate>> {
    if threads == 0 {
        return Err(Error::Config("thread count must be at least 1".into()));
    }
    profile.validate()?;
    let budget = profile.usable_cache_bytes();
    let mut out = Vec::new();
    for dw in (4..=dims.ny.min(MAX_DW)).step_by(4).filter(|dw| dims.ny % dw == 0) {
        let balance = models::code_balance(Variant::Diamond { dw });
        for bz in 1..=MAX_BZ {
            for shape in shapes_for(threads, bz, dims.nx) {
                let num_groups = threads / shape.group_size();
                let bytes = models::aggregate_cache_bytes(dims.nx, dw, bz, num_groups);
                if bytes as f64 <= budget {
                    out.push(Candidate {
                        dw,
                        bz,
                        shape,
                        num_groups,
                        cache_model_bytes: bytes,
                        balance_model: balance,
                        predicted_mlups: models::predict_throughput(profile, balance),
                    });
                }
            }
        }
    }
    out.sort_by(|a, b| {
        a.balance_model
            .total_cmp(&b.balance_model)
            .then(Reverse(a.shape.group_size()).cmp(&Reverse(b.shape.group_size())))
            .then(a.bz.cmp(&b.bz))
            .then((a.shape.tgz, a.shape.tgx, a.shape.tgc).cmp(&(b.shape.tgz, b.shape.tgx, b.shape.tgc)))
    });
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneOptions {
    pub threads: usize,
    pub profile: MachineProfile,
    /// Each candidate repeats trials until this much time has accumulated.
    pub min_trial_seconds: f64,
    /// Only the first `n` candidates in model order are timed.
    pub max_candidates: Option<usize>,
}

impl Default for TuneOptions {
    fn default() -> Self {
        Self { threads: 1, profile: MachineProfile::default(), min_trial_seconds: 0.2, max_candidates: Some(24) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TrialOutcome {
    Timed { steps: usize, runs: usize, seconds: f64, mlups: f64 },
    Skipped { reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialEntry {
    pub candidate: Candidate,
    pub outcome: TrialOutcome,
}

impl TrialEntry {
    pub fn mlups(&self) -> Option<f64> {
        match self.outcome {
            TrialOutcome::Timed { mlups, .. } => Some(mlups),
            TrialOutcome::Skipped { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "engine", rename_all = "snake_case")]
pub enum TunedConfig {
    Mwd { dw: usize, bz: usize, shape: ThreadGroupShape, num_groups: usize, mlups: f64 },
    Spatial { block_y: usize, block_x: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub winner: TunedConfig,
    pub table: Vec<TrialEntry>,
}

/// Times each candidate on fresh copies of `template`, picks the fastest
/// (ties within 2% go to larger dw, then larger groups) and verifies the
/// winner bitwise against the naive engine on a small grid before returning it.
pub fn tune(template: &ProblemState, trial_steps: usize, candidates: &[Candidate], opts: &TuneOptions) -> Result<TuneResult> {
    let dims = template.dims;
    let fallback = || {
        let (block_y, block_x) = choose_spatial_blocks(&dims, opts.threads, &opts.profile);
        TunedConfig::Spatial { block_y, block_x }
    };
    if candidates.is_empty() {
        log::warn!("no diamond configuration fits the cache budget; falling back to spatial blocking");
        return Ok(TuneResult { winner: fallback(), table: Vec::new() });
    }
    let take = opts.max_candidates.unwrap_or(usize::MAX).min(candidates.len());

    let mut warmed_up = false;
    let mut table = Vec::with_capacity(take);
    for cand in &candidates[..take] {
        let outcome = match time_candidate(template, trial_steps, cand, opts, &mut warmed_up) {
            Ok(o) => o,
            Err(e) => {
                log::warn!("skipping dw={} bz={} shape={}: {e}", cand.dw, cand.bz, cand.shape);
                TrialOutcome::Skipped { reason: e.to_string() }
            }
        };
        table.push(TrialEntry { candidate: *cand, outcome });
    }

    let mut ranked: Vec<usize> = (0..table.len()).filter(|&i| table[i].mlups().is_some()).collect();
    while let Some(best) = pick_best(&table, &ranked) {
        let c = table[best].candidate;
        match verify_config(c.dw, c.bz, c.shape, opts.threads) {
            Ok(true) => {
                let winner = TunedConfig::Mwd {
                    dw: c.dw,
                    bz: c.bz,
                    shape: c.shape,
                    num_groups: c.num_groups,
                    mlups: table[best].mlups().unwrap(),
                };
                return Ok(TuneResult { winner, table });
            }
            Ok(false) => log::error!("winner dw={} bz={} shape={} failed verification", c.dw, c.bz, c.shape),
            Err(e) => log::error!("verification of dw={} bz={} shape={} errored: {e}", c.dw, c.bz, c.shape),
        }
        ranked.retain(|&i| i != best);
    }
    log::warn!("no timed candidate survived; falling back to spatial blocking");
    Ok(TuneResult { winner: fallback(), table })
}

/// Index of the fastest entry among `ranked`, applying the tie window.
pub fn pick_best(table: &[TrialEntry], ranked: &[usize]) -> Option<usize> {
    let top = ranked.iter().filter_map(|&i| table[i].mlups()).fold(f64::NEG_INFINITY, f64::max);
    ranked
        .iter()
        .copied()
        .filter(|&i| table[i].mlups().is_some_and(|m| m >= top * (1.0 - TIE_WINDOW)))
        .max_by_key(|&i| (table[i].candidate.dw, table[i].candidate.shape.group_size(), Reverse(i)))
}

fn time_candidate(
    template: &ProblemState,
    trial_steps: usize,
    cand: &Candidate,
    opts: &TuneOptions,
    warmed_up: &mut bool,
) -> Result<TrialOutcome> {
    // at least two full diamond passes
    let steps = trial_steps.max(cand.dw);
    let plan = build_tiling_plan(template.dims, steps, cand.dw, cand.bz)?;
    if !*warmed_up {
        execute_mwd(&mut template.clone(), &plan, cand.shape, opts.threads, false)?;
        *warmed_up = true;
    }
    let (mut runs, mut seconds) = (0, 0.0);
    while runs == 0 || seconds < opts.min_trial_seconds {
        let mut state = template.clone();
        let clock = Stopwatch::start();
        execute_mwd(&mut state, &plan, cand.shape, opts.threads, false)?;
        seconds += clock.seconds();
        runs += 1;
        if seconds == 0.0 {
            break; // no clock
        }
    }
    let lups = template.dims.interior_cells() as f64 * plan.steps as f64 * runs as f64;
    let mlups = if seconds > 0.0 { lups / seconds / 1e6 } else { 0.0 };
    Ok(TrialOutcome::Timed { steps: plan.steps, runs, seconds, mlups })
}

/// Small-grid bitwise check of one configuration against the naive engine.
pub fn verify_config(dw: usize, bz: usize, shape: ThreadGroupShape, threads: usize) -> Result<bool> {
    let dims = GridDims::new(16, 2 * dw, 12)?;
    let mut oracle = build_benchmark_problem(dims, &SchemeParams::default())?;
    oracle.randomize_fields(0x5eed);
    let mut tiled = oracle.clone();
    let plan = build_tiling_plan(dims, dw, dw, bz)?;
    run_naive(&mut oracle, plan.steps, &RunOptions::default())?;
    execute_mwd(&mut tiled, &plan, shape, threads, false)?;
    Ok(compare_states(&oracle, &tiled)?.is_bitwise_equal())
}

/// Trial table as CSV text.
pub fn trial_table_csv(table: &[TrialEntry]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "dw",
        "bz",
        "tgz",
        "tgx",
        "tgc",
        "num_groups",
        "cache_model_bytes",
        "balance_model",
        "predicted_mlups",
        "status",
        "steps",
        "runs",
        "seconds",
        "mlups",
    ])?;
    for e in table {
        let c = &e.candidate;
        let mut row = vec![
            c.dw.to_string(),
            c.bz.to_string(),
            c.shape.tgz.to_string(),
            c.shape.tgx.to_string(),
            c.shape.tgc.to_string(),
            c.num_groups.to_string(),
            c.cache_model_bytes.to_string(),
            c.balance_model.to_string(),
            c.predicted_mlups.to_string(),
        ];
        match &e.outcome {
            TrialOutcome::Timed { steps, runs, seconds, mlups } => {
                row.extend(["timed".into(), steps.to_string(), runs.to_string(), seconds.to_string(), mlups.to_string()])
            }
            TrialOutcome::Skipped { .. } => row.extend(["skipped".into(), String::new(), String::new(), String::new(), String::new()]),
        }
        w.write_record(&row)?;
    }
    String::from_utf8(w.into_inner().map_err(|e| Error::Serialize(e.to_string()))?)
        .map_err(|e| Error::Serialize(e.to_string()))
}
