//! Baseline engines: full-grid sweep and y/x-blocked sweep, each optionally
//! split into static z-slabs across threads.

use std::ops::Range;

use crate::barrier::SpinBarrier;
use crate::field::{Family, GridDims, ProblemState};
use crate::kernels::{Plain, Region, StateView};
use crate::models::{self, MachineProfile, Variant};
use crate::report::{EngineKind, RunReport, Stopwatch};
use crate::{Error, Result};

/// Settings shared by every engine run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunOptions {
    pub threads: usize,
    pub profile: MachineProfile,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { threads: 1, profile: MachineProfile::default() }
    }
}

impl RunOptions {
    pub fn with_threads(threads: usize) -> Self {
        Self { threads, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        if self.threads == 0 {
            return Err(Error::Config("thread count must be at least 1".into()));
        }
        self.profile.validate()
    }
}

/// Advances `steps` timesteps with one full-interior sweep per component.
pub fn run_naive(state: &mut ProblemState, steps: usize, opts: &RunOptions) -> Result<RunReport> {
    opts.validate()?;
    let dims = state.dims;
    let clock = Stopwatch::start();
    sweep(state, steps, opts.threads, |view, family, z| {
        let region = Region::new(0..dims.nx, 0..dims.ny, z);
        for &comp in family.components() {
            // SAFETY: components of one family write distinct arrays and read
            // only the other family; threads own disjoint z-slabs.
            unsafe { view.update_region(&mut Plain, comp, &region) }
        }
    });
    let seconds = clock.seconds();
    Ok(RunReport::new(EngineKind::Naive, state, steps, steps, opts.threads, Variant::Naive, &opts.profile, seconds))
}

/// Advances `steps` timesteps, tiling each half-step over y (and x) blocks;
/// z stays the outer loop inside every block.
pub fn run_spatial_blocked(
    state: &mut ProblemState,
    steps: usize,
    block_y: usize,
    block_x: usize,
    opts: &RunOptions,
) -> Result<RunReport> {
    opts.validate()?;
    if block_y == 0 || block_x == 0 {
        return Err(Error::Config(format!("block sizes must be positive, got y={block_y} x={block_x}")));
    }
    let dims = state.dims;
    let (by, bx) = (block_y.min(dims.ny), block_x.min(dims.nx));
    if !layer_condition_holds(bx, by, opts.threads, &opts.profile) {
        log::warn!(
            "layer condition violated: blocks {by}x{bx} on {} threads need {} B, usable cache {} B",
            opts.threads,
            models::layer_condition_bytes(bx, by, opts.threads),
            opts.profile.usable_cache_bytes()
        );
    }
    let clock = Stopwatch::start();
    sweep(state, steps, opts.threads, |view, family, z| {
        for y0 in (0..dims.ny).step_by(by) {
            for x0 in (0..dims.nx).step_by(bx) {
                let region = Region::new(x0..(x0 + bx).min(dims.nx), y0..(y0 + by).min(dims.ny), z.clone());
                for &comp in family.components() {
                    // SAFETY: as in run_naive; blocks within a slab are disjoint.
                    unsafe { view.update_region(&mut Plain, comp, &region) }
                }
            }
        }
    });
    let seconds = clock.seconds();
    let mut report =
        RunReport::new(EngineKind::Spatial, state, steps, steps, opts.threads, Variant::Spatial, &opts.profile, seconds);
    report.block_y = Some(by);
    report.block_x = Some(bx);
    Ok(report)
}

pub fn layer_condition_holds(block_x: usize, block_y: usize, threads: usize, profile: &MachineProfile) -> bool {
    models::layer_condition_bytes(block_x, block_y, threads) as f64 <= profile.usable_cache_bytes()
}

/// Largest blocks satisfying the layer condition: full x rows first, then
/// y halved until two operand layers per thread fit; x is halved (down to 8)
/// only if a single row is still too large.
pub fn choose_spatial_blocks(dims: &GridDims, threads: usize, profile: &MachineProfile) -> (usize, usize) {
    let (mut by, mut bx) = (dims.ny, dims.nx);
    while by > 1 && !layer_condition_holds(bx, by, threads, profile) {
        by = by.div_ceil(2);
    }
    while bx > 8 && !layer_condition_holds(bx, by, threads, profile) {
        bx = bx.div_ceil(2);
    }
    (by, bx)
}

/// Static z-slab `rank` of `parts` over `0..n`.
pub(crate) fn split_range(n: usize, parts: usize, rank: usize) -> Range<usize> {
    let base = n / parts;
    let extra = n % parts;
    let start = rank * base + rank.min(extra);
    start..start + base + usize::from(rank < extra)
}

/// Runs `half_step` for H then E of every timestep, either inline or on
/// `threads` workers separated by a barrier after each half-step.
fn sweep<F>(state: &mut ProblemState, steps: usize, threads: usize, half_step: F)
where
    F: Fn(&StateView, Family, Range<usize>) + Sync,
{
    let nz = state.dims.nz;
    let view = StateView::new(state);
    if threads == 1 {
        for _ in 0..steps {
            half_step(&view, Family::H, 0..nz);
            half_step(&view, Family::E, 0..nz);
        }
        return;
    }
    let barrier = SpinBarrier::new(threads);
    std::thread::scope(|s| {
        for rank in 0..threads {
            let (barrier, half_step) = (&barrier, &half_step);
            s.spawn(move || {
                let z = split_range(nz, threads, rank);
                for _ in 0..steps {
                    for family in [Family::H, Family::E] {
                        half_step(&view, family, z.clone());
                        barrier.wait();
                    }
                }
            });
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_range_covers() {
        for n in [1, 7, 48, 96] {
            for parts in 1..=9 {
                let mut next = 0;
                for r in 0..parts {
                    let rg = split_range(n, parts, r);
                    assert_eq!(rg.start, next);
                    next = rg.end;
                }
                assert_eq!(next, n);
            }
        }
    }

    #[test]
    fn chosen_blocks_fit() {
        let p = MachineProfile { cache_bytes: 1 << 20, ..Default::default() };
        let dims = GridDims::cube(256).unwrap();
        let (by, bx) = choose_spatial_blocks(&dims, 4, &p);
        assert!(layer_condition_holds(bx, by, 4, &p));
        assert_eq!(bx, 256);
        let roomy = choose_spatial_blocks(&dims, 1, &MachineProfile::default());
        assert_eq!(roomy, (256, 256));
    }
}
