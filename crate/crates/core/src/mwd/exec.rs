use std::ops::Range;
use std::sync::atomic::{AtomicU8, AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::plan::{Stage, TilingPlan};
use super::queue::{TileQueue, TraceRecord};
use crate::barrier::SpinBarrier;
use crate::field::{Family, ProblemState};
use crate::kernels::{Plain, Region, StateView};
use crate::models::{self, Variant};
use crate::reference::{split_range, RunOptions};
use crate::report::{EngineKind, RunReport, Stopwatch};
use crate::{Error, Result};

/// x-chunks handed to workers are multiples of this many complex values.
pub const X_CHUNK_QUANTUM: usize = 8;

/// Factorisation of one thread group: wavefront (z) × x × component workers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ThreadGroupShape {
    pub tgz: usize,
    pub tgx: usize,
    pub tgc: usize,
}

impl ThreadGroupShape {
    pub const SERIAL: Self = Self { tgz: 1, tgx: 1, tgc: 1 };

    pub fn new(tgz: usize, tgx: usize, tgc: usize) -> Self {
        Self { tgz, tgx, tgc }
    }

    pub fn group_size(&self) -> usize {
        self.tgz * self.tgx * self.tgc
    }

    /// Checks the shape against a thread budget and returns the group count.
    pub fn num_groups(&self, total_threads: usize) -> Result<usize> {
        if self.tgz == 0 || self.tgx == 0 {
            return Err(Error::Config(format!("shape {self}: tgz and tgx must be at least 1")));
        }
        if ![1, 2, 3, 6].contains(&self.tgc) {
            return Err(Error::Config(format!("shape {self}: tgc must be 1, 2, 3 or 6")));
        }
        if total_threads == 0 || total_threads % self.group_size() != 0 {
            return Err(Error::Config(format!(
                "group size {} of shape {self} does not divide {total_threads} threads",
                self.group_size()
            )));
        }
        Ok(total_threads / self.group_size())
    }

    /// Family-relative component indices owned by component worker `rc`.
    /// Pairs for `tgc = 3` are the two splits of one physical component.
    pub fn component_subset(&self, rc: usize) -> Range<usize> {
        let per = 6 / self.tgc;
        rc * per..(rc + 1) * per
    }

    /// x-range of x-worker `rx`; may be empty when `nx` is small.
    pub fn x_chunk(&self, nx: usize, rx: usize) -> Range<usize> {
        let chunk = nx.div_ceil(self.tgx).next_multiple_of(X_CHUNK_QUANTUM);
        (rx * chunk).min(nx)..((rx + 1) * chunk).min(nx)
    }

    /// (z, x, component) coordinates of group member `rank`.
    pub fn role(&self, rank: usize) -> (usize, usize, usize) {
        (rank / (self.tgc * self.tgx), (rank / self.tgc) % self.tgx, rank % self.tgc)
    }
}

impl Default for ThreadGroupShape {
    fn default() -> Self {
        Self::SERIAL
    }
}

impl std::fmt::Display for ThreadGroupShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.tgz, self.tgx, self.tgc)
    }
}

impl std::str::FromStr for ThreadGroupShape {
    type Err = Error;

    /// Accepts `tgz,tgx,tgc` or `tgzxtgxxtgc`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split([',', 'x']).map(str::trim).collect();
        let nums: Option<Vec<usize>> = parts.iter().map(|p| p.parse().ok()).collect();
        match nums.as_deref() {
            Some(&[tgz, tgx, tgc]) => Ok(Self { tgz, tgx, tgc }),
            _ => Err(Error::Config(format!("cannot parse thread-group shape '{s}' (expected tgz,tgx,tgc)"))),
        }
    }
}

/// Exactly-once counters, one per (level, family component, interior cell).
pub struct Sanitizer {
    cells: usize,
    counts: Vec<AtomicU8>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SanitizerReport {
    pub max_multiplicity: u8,
    pub missing: u64,
    pub updates_h: u64,
    pub updates_e: u64,
}

impl Sanitizer {
    fn new(plan: &TilingPlan) -> Self {
        let cells = plan.dims.interior_cells();
        let n = 2 * plan.steps * 6 * cells;
        Self { cells, counts: (0..n).map(|_| AtomicU8::new(0)).collect() }
    }

    fn record(&self, plan: &TilingPlan, level: usize, comp_in_family: usize, region: &Region) {
        let d = plan.dims;
        let base = ((level - 1) * 6 + comp_in_family) * self.cells;
        for z in region.z0..region.z1 {
            for y in region.y0..region.y1 {
                for x in region.x0..region.x1 {
                    let c = &self.counts[base + (z * d.ny + y) * d.nx + x];
                    c.fetch_add(1, Ordering::Relaxed);
                }
            }
        }
    }

    fn report(&self) -> SanitizerReport {
        let mut r = SanitizerReport { max_multiplicity: 0, missing: 0, updates_h: 0, updates_e: 0 };
        for (n, c) in self.counts.iter().enumerate() {
            let v = c.load(Ordering::Relaxed);
            r.max_multiplicity = r.max_multiplicity.max(v);
            if v == 0 {
                r.missing += 1;
            }
            // per-family totals count lattice updates, so one component stands in
            if (n / self.cells) % 6 == 0 {
                let level = n / self.cells / 6 + 1;
                match super::plan::level_family(level) {
                    Family::H => r.updates_h += v as u64,
                    Family::E => r.updates_e += v as u64,
                }
            }
        }
        r
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MwdOutcome {
    pub num_groups: usize,
    pub trace: Vec<TraceRecord>,
    pub sanitizer: Option<SanitizerReport>,
}

const FINISHED: usize = usize::MAX;

struct GroupCtx<'a> {
    view: StateView,
    plan: &'a TilingPlan,
    queue: &'a TileQueue<'a>,
    shape: ThreadGroupShape,
    barrier: SpinBarrier,
    slot: AtomicUsize,
    failure: &'a Mutex<Option<Error>>,
    sanitizer: Option<&'a Sanitizer>,
}

impl GroupCtx<'_> {
    fn work(&self, group: usize, rank: usize) {
        loop {
            if rank == 0 {
                let next = match self.queue.pop(group) {
                    Ok(Some(k)) => k,
                    Ok(None) => FINISHED,
                    Err(e) => {
                        self.failure.lock().expect("poisoned").get_or_insert(e);
                        FINISHED
                    }
                };
                self.slot.store(next, Ordering::Release);
            }
            self.barrier.wait();
            let k = self.slot.load(Ordering::Acquire);
            if k == FINISHED {
                return;
            }
            for stage in self.plan.stages(k) {
                self.run_stage(rank, &stage);
                self.barrier.wait();
            }
            if rank == 0 {
                self.queue.complete(k);
            }
        }
    }

    fn run_stage(&self, rank: usize, stage: &Stage) {
        let (rz, rx, rc) = self.shape.role(rank);
        // FED: worker rz always owns the same offsets inside the moving window.
        let off = split_range(self.plan.bz, self.shape.tgz, rz);
        let z0 = (stage.window + off.start as isize).max(stage.z0 as isize) as usize;
        let z1 = (stage.window + off.end as isize).min(stage.z1 as isize).max(z0 as isize) as usize;
        let region = Region::new(self.shape.x_chunk(self.plan.dims.nx, rx), stage.y0..stage.y1, z0..z1);
        if region.is_empty() {
            return;
        }
        let comps = stage.family.components();
        for c in self.shape.component_subset(rc) {
            // SAFETY: within a stage, workers own disjoint (component, x, z)
            // blocks of one family and read only the other family; stages are
            // separated by the group barrier, and concurrently running tiles
            // are independent in the plan's dependency graph.
            unsafe { self.view.update_region(&mut Plain, comps[c], &region) }
            if let Some(s) = self.sanitizer {
                s.record(self.plan, stage.level, c, &region);
            }
        }
    }
}

/// Executes `plan` on `state` with `threads` workers in groups of `shape`,
/// without timing. Runs inline when a single thread is requested.
pub fn execute_mwd(
    state: &mut ProblemState,
    plan: &TilingPlan,
    shape: ThreadGroupShape,
    threads: usize,
    sanitize: bool,
) -> Result<MwdOutcome> {
    let groups = shape.num_groups(threads)?;
    if shape.tgz > plan.bz {
        return Err(Error::Config(format!("tgz = {} exceeds the wavefront block bz = {}", shape.tgz, plan.bz)));
    }
    if plan.dims != state.dims {
        return Err(Error::Config(format!("plan built for {} but state is {}", plan.dims, state.dims)));
    }
    let sanitizer = sanitize.then(|| Sanitizer::new(plan));
    let queue = TileQueue::new(plan, groups);
    let failure = Mutex::new(None);
    let view = StateView::new(state);
    let g = shape.group_size();
    let ctxs: Vec<GroupCtx> = (0..groups)
        .map(|_| GroupCtx {
            view,
            plan,
            queue: &queue,
            shape,
            barrier: SpinBarrier::new(g),
            slot: AtomicUsize::new(FINISHED),
            failure: &failure,
            sanitizer: sanitizer.as_ref(),
        })
        .collect();

    if threads == 1 {
        ctxs[0].work(0, 0);
    } else {
        std::thread::scope(|s| {
            for (group, ctx) in ctxs.iter().enumerate() {
                for rank in 0..g {
                    s.spawn(move || ctx.work(group, rank));
                }
            }
        });
    }
    drop(ctxs);

    if let Some(e) = failure.into_inner().expect("poisoned") {
        return Err(e);
    }
    Ok(MwdOutcome { num_groups: groups, trace: queue.into_trace(), sanitizer: sanitizer.map(|s| s.report()) })
}

/// Runs the wavefront-diamond engine and reports timing and model values.
pub fn run_mwd(
    state: &mut ProblemState,
    plan: &TilingPlan,
    shape: ThreadGroupShape,
    opts: &RunOptions,
) -> Result<RunReport> {
    opts.profile.validate()?;
    let clock = Stopwatch::start();
    let outcome = execute_mwd(state, plan, shape, opts.threads, false)?;
    let seconds = clock.seconds();
    Ok(mwd_report(state, plan, shape, opts, outcome.num_groups, seconds))
}

fn mwd_report(
    state: &ProblemState,
    plan: &TilingPlan,
    shape: ThreadGroupShape,
    opts: &RunOptions,
    groups: usize,
    seconds: f64,
) -> RunReport {
    let engine = if opts.threads == 1 { EngineKind::OneWd } else { EngineKind::Mwd };
    let mut r = RunReport::new(
        engine,
        state,
        plan.steps,
        plan.requested_steps,
        opts.threads,
        Variant::Diamond { dw: plan.dw },
        &opts.profile,
        seconds,
    );
    r.shape = Some(shape);
    r.num_groups = Some(groups);
    r.dw = Some(plan.dw);
    r.bz = Some(plan.bz);
    r.cache_model_bytes = Some(models::aggregate_cache_bytes(plan.dims.nx, plan.dw, plan.bz, groups));
    r
}
