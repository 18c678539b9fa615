//! Engine equivalence checks and schedule-trace replay.

use serde::{Deserialize, Serialize};

use crate::field::{Axis, Component, Family, ProblemState, ALL_COMPONENTS};
use crate::mwd::{TilingPlan, TraceRecord};
use crate::{Error, Result};

/// Relative tolerance of the diagnostic fallback mode.
pub const RELAXED_TOLERANCE: f64 = 1e-13;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellLocation {
    pub component: Component,
    pub x: usize,
    pub y: usize,
    pub z: usize,
    pub offset: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// Largest |a − b| over real and imaginary parts. Any bitwise difference
    /// that compares numerically equal (±0) counts as `f64::MIN_POSITIVE`.
    pub max_abs_diff: f64,
    /// Largest |a − b| / max(|a|, |b|) over differing parts.
    pub max_rel_diff: f64,
    pub differing: u64,
    pub first_difference: Option<CellLocation>,
}

impl Comparison {
    pub fn is_bitwise_equal(&self) -> bool {
        self.differing == 0
    }

    /// Passes bitwise, or within [`RELAXED_TOLERANCE`] when `relaxed`.
    pub fn passes(&self, relaxed: bool) -> bool {
        self.is_bitwise_equal() || (relaxed && self.max_rel_diff <= RELAXED_TOLERANCE)
    }
}

/// Exact scan of the interior of all 12 field arrays.
pub fn compare_states(a: &ProblemState, b: &ProblemState) -> Result<Comparison> {
    if a.dims != b.dims {
        return Err(Error::Mismatch(format!("grids differ: {} vs {}", a.dims, b.dims)));
    }
    let d = a.dims;
    let mut out = Comparison { max_abs_diff: 0.0, max_rel_diff: 0.0, differing: 0, first_difference: None };
    for comp in ALL_COMPONENTS {
        let (fa, fb) = (a.field(comp), b.field(comp));
        for z in 0..d.nz {
            for y in 0..d.ny {
                for x in 0..d.nx {
                    let i = d.index(x, y, z);
                    let (u, v) = (fa[i], fb[i]);
                    let mut differs = false;
                    for (p, q) in [(u.re, v.re), (u.im, v.im)] {
                        if p.to_bits() == q.to_bits() {
                            continue;
                        }
                        differs = true;
                        let diff = (p - q).abs();
                        let abs = if diff > 0.0 { diff } else if diff.is_nan() { f64::INFINITY } else { f64::MIN_POSITIVE };
                        out.max_abs_diff = out.max_abs_diff.max(abs);
                        let scale = p.abs().max(q.abs());
                        let rel = if scale > 0.0 { abs / scale } else { f64::INFINITY };
                        out.max_rel_diff = out.max_rel_diff.max(rel);
                    }
                    if differs {
                        out.differing += 1;
                        out.first_difference
                            .get_or_insert(CellLocation { component: comp, x, y, z, offset: i });
                    }
                }
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    /// A tile appears more than once in the trace.
    DuplicateTile { tile: usize },
    /// An update tuple was applied `count ≠ 1` times.
    Multiplicity { level: usize, component: Component, y: usize, z: usize, count: u32 },
    /// A tile started before one of its dependencies finished.
    DependencyOrder { tile: usize, dependency: usize },
    /// A value was read at the wrong version during replay.
    StaleRead {
        tile: usize,
        level: usize,
        component: Component,
        y: usize,
        z: usize,
        operand: Component,
        expected: u32,
        found: u32,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceCheck {
    /// First violations found, capped at [`TraceCheck::MAX_LISTED`].
    pub violations: Vec<Violation>,
    pub violation_count: u64,
    /// Lattice updates applied per family (x lines count `nx` each).
    pub updates_h: u64,
    pub updates_e: u64,
}

impl TraceCheck {
    pub const MAX_LISTED: usize = 1000;

    pub fn is_clean(&self) -> bool {
        self.violation_count == 0
    }

    fn push(&mut self, v: Violation) {
        self.violation_count += 1;
        if self.violations.len() < Self::MAX_LISTED {
            self.violations.push(v);
        }
    }
}

/// Replays `trace` against `plan` on a virtual (component, y, z) lattice.
///
/// Tiles are replayed in start order. x is not modelled: every stage covers
/// all of x, so the x-shifted reads see the same versions as the unshifted ones.
pub fn check_schedule_trace(plan: &TilingPlan, trace: &[TraceRecord]) -> Result<TraceCheck> {
    let n = plan.num_tiles();
    let mut check = TraceCheck { violations: Vec::new(), violation_count: 0, updates_h: 0, updates_e: 0 };
    let mut record: Vec<Option<&TraceRecord>> = vec![None; n];
    for r in trace {
        if r.tile >= n {
            return Err(Error::Mismatch(format!("trace names tile {} but the plan has {n}", r.tile)));
        }
        if record[r.tile].is_some() {
            check.push(Violation::DuplicateTile { tile: r.tile });
        } else {
            record[r.tile] = Some(r);
        }
    }
    let missing: Vec<usize> = (0..n).filter(|&k| record[k].is_none()).collect();
    if !missing.is_empty() {
        return Err(Error::TruncatedTrace { missing });
    }

    for k in 0..n {
        let me = record[k].unwrap();
        for &d in &plan.deps[k] {
            if me.start < record[d].unwrap().end {
                check.push(Violation::DependencyOrder { tile: k, dependency: d });
            }
        }
    }

    let d = plan.dims;
    let (ny, nz) = (d.ny, d.nz);
    let cell = |y: usize, z: usize| z * ny + y;
    let mut version = vec![vec![0u32; ny * nz]; 12];
    let levels = 2 * plan.steps;
    let mut count = vec![0u32; levels * 6 * ny * nz];

    let mut order: Vec<&TraceRecord> = trace.iter().collect();
    order.sort_by_key(|r| (r.start, r.tile));
    for r in order {
        for stage in plan.stages(r.tile) {
            let step = (stage.level - 1) / 2;
            // versions: each E/H value counts the updates applied to it
            let (own, operand) = match stage.family {
                Family::H => (step as u32, step as u32),
                Family::E => (step as u32, step as u32 + 1),
            };
            for (ci, &comp) in stage.family.components().iter().enumerate() {
                let desc = comp.descriptor();
                for z in stage.z0..stage.z1 {
                    for y in stage.y0..stage.y1 {
                        let mut reads = vec![(comp, y as isize, z as isize, own)];
                        let (sy, sz) = match desc.shift_axis {
                            Axis::X => (0, 0),
                            Axis::Y => (desc.shift_sign as isize, 0),
                            Axis::Z => (0, desc.shift_sign as isize),
                        };
                        for op in desc.operand_pair {
                            reads.push((op, y as isize, z as isize, operand));
                            reads.push((op, y as isize + sy, z as isize + sz, operand));
                        }
                        for (rc, ry, rz, expected) in reads {
                            if ry < 0 || rz < 0 || ry >= ny as isize || rz >= nz as isize {
                                continue; // Dirichlet ghost
                            }
                            let found = version[rc.index()][cell(ry as usize, rz as usize)];
                            if found != expected {
                                check.push(Violation::StaleRead {
                                    tile: r.tile,
                                    level: stage.level,
                                    component: comp,
                                    y,
                                    z,
                                    operand: rc,
                                    expected,
                                    found,
                                });
                            }
                        }
                        version[comp.index()][cell(y, z)] += 1;
                        count[((stage.level - 1) * 6 + ci) * ny * nz + cell(y, z)] += 1;
                    }
                }
            }
        }
    }

    for level in 1..=levels {
        let family = crate::mwd::level_family(level);
        for (ci, &comp) in family.components().iter().enumerate() {
            for z in 0..nz {
                for y in 0..ny {
                    let c = count[((level - 1) * 6 + ci) * ny * nz + cell(y, z)];
                    if c != 1 {
                        check.push(Violation::Multiplicity { level, component: comp, y, z, count: c });
                    }
                    if ci == 0 {
                        let lups = c as u64 * d.nx as u64;
                        match family {
                            Family::H => check.updates_h += lups,
                            Family::E => check.updates_e += lups,
                        }
                    }
                }
            }
        }
    }
    Ok(check)
}
