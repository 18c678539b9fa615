//! Diamond tiling of the (y, half-step) plane with a z-wavefront inside each
//! diamond.
//!
//! Half-step levels: level 0 is the initial E field, odd level `2n+1` is the H
//! update of step `n`, even level `2n+2` the E update of step `n`. Along y an E
//! cell sits at position `q = 2y`, an H cell at `q = 2y+1`, so every update
//! point has `q ≡ level (mod 2)`. A point reads its two neighbours one level
//! down and overwrites its own value from two levels down; those are also the
//! only write-after-read hazards of the in-place arrays. Diamonds are squares
//! of side `2·dw` in the rotated coordinates `(q + level, level − q)`.

use std::collections::{BTreeMap, BTreeSet};
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::field::{Family, GridDims};
use crate::{Error, Result};

/// Contiguous y-range updated at one level of a tile.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TileLevel {
    pub level: usize,
    pub y0: usize,
    pub y1: usize,
}

impl TileLevel {
    pub fn family(&self) -> Family {
        level_family(self.level)
    }

    /// Zero-based timestep this level belongs to.
    pub fn step(&self) -> usize {
        (self.level - 1) / 2
    }
}

pub fn level_family(level: usize) -> Family {
    debug_assert!(level >= 1);
    if level % 2 == 1 {
        Family::H
    } else {
        Family::E
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tile {
    pub id: usize,
    /// Diamond coordinates in the rotated lattice.
    pub i: i64,
    pub j: i64,
    /// Temporal slab `i + j`; consecutive slabs are `dw/2` timesteps apart.
    pub slab: i64,
    /// Horizontal position `i − j`; a row of the tessellation.
    pub position: i64,
    /// Levels in ascending order, each with the y-cells it updates.
    pub levels: Vec<TileLevel>,
    /// z lag of each level relative to the wavefront front.
    pub lags: Vec<usize>,
}

impl Tile {
    /// Interior cells updated per x line, summed over levels.
    pub fn yz_updates(&self, nz: usize) -> usize {
        self.levels.iter().map(|l| (l.y1 - l.y0) * nz).sum()
    }

    pub fn max_lag(&self) -> usize {
        self.lags.last().copied().unwrap_or(0)
    }

    /// Digest of the update set, used to tag trace records.
    pub fn update_digest(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.levels.hash(&mut h);
        h.finish()
    }
}

/// One level of one wavefront step: the block of cells a tile updates before
/// its workers synchronise.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Stage {
    pub step: usize,
    pub level: usize,
    pub family: Family,
    pub y0: usize,
    pub y1: usize,
    /// Unclipped start of this level's `bz`-wide z window.
    pub window: isize,
    pub z0: usize,
    pub z1: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TilingPlan {
    pub dims: GridDims,
    pub dw: usize,
    pub bz: usize,
    /// Wavefront tile width `dw + bz − 1`.
    pub ww: usize,
    /// Diamonds per tessellation row, `ny / dw`.
    pub rows: usize,
    pub requested_steps: usize,
    /// Timesteps actually executed, a multiple of `dw / 2`.
    pub steps: usize,
    /// Number of distinct temporal slabs.
    pub slabs: usize,
    /// Tiles sorted by (slab, position); `tiles[k].id == k`.
    pub tiles: Vec<Tile>,
    /// `deps[k]`: tiles that must finish before tile `k` starts.
    pub deps: Vec<Vec<usize>>,
    /// Inverse of `deps`.
    pub successors: Vec<Vec<usize>>,
}

impl TilingPlan {
    pub fn num_tiles(&self) -> usize {
        self.tiles.len()
    }

    /// Tiles with no dependencies, in id order: the initial queue.
    pub fn initial_tiles(&self) -> Vec<usize> {
        (0..self.tiles.len()).filter(|&k| self.deps[k].is_empty()).collect()
    }

    /// Number of wavefront steps needed to sweep tile `k` across z.
    pub fn wavefront_steps(&self, k: usize) -> usize {
        (self.dims.nz + self.tiles[k].max_lag()).div_ceil(self.bz)
    }

    /// Stages of tile `k` in execution order.
    pub fn stages(&self, k: usize) -> impl Iterator<Item = Stage> + '_ {
        let tile = &self.tiles[k];
        let (nz, bz) = (self.dims.nz as isize, self.bz as isize);
        (0..self.wavefront_steps(k)).flat_map(move |w| {
            tile.levels.iter().zip(&tile.lags).filter_map(move |(l, &lag)| {
                let lo = w as isize * bz - lag as isize;
                let (z0, z1) = (lo.clamp(0, nz) as usize, (lo + bz).clamp(0, nz) as usize);
                (z0 < z1).then_some(Stage {
                    step: w,
                    level: l.level,
                    family: l.family(),
                    y0: l.y0,
                    y1: l.y1,
                    window: lo,
                    z0,
                    z1,
                })
            })
        })
    }

    /// Fault injection: forgets that `tile` waits for `dep`.
    pub fn drop_dependency(&mut self, tile: usize, dep: usize) -> bool {
        let Some(p) = self.deps[tile].iter().position(|&d| d == dep) else {
            return false;
        };
        self.deps[tile].remove(p);
        self.successors[dep].retain(|&s| s != tile);
        true
    }
}

/// Pads `steps` to a whole number of diamond passes of `dw/2` timesteps.
pub fn padded_steps(steps: usize, dw: usize) -> usize {
    steps.div_ceil(dw / 2) * (dw / 2)
}

pub fn validate_tiling(dims: &GridDims, dw: usize, bz: usize) -> Result<()> {
    if dw < 4 || dw % 4 != 0 {
        return Err(Error::Plan(format!("diamond width {dw} must be a positive multiple of 4")));
    }
    if dims.ny % dw != 0 {
        return Err(Error::Plan(format!("diamond width {dw} does not divide ny = {}", dims.ny)));
    }
    if bz < 1 {
        return Err(Error::Plan("wavefront block bz must be at least 1".into()));
    }
    Ok(())
}

/// Builds the tiling and its tile dependency graph for `steps` timesteps
/// (padded up to whole diamond passes).
pub fn build_tiling_plan(dims: GridDims, steps: usize, dw: usize, bz: usize) -> Result<TilingPlan> {
    dims.validate()?;
    validate_tiling(&dims, dw, bz)?;
    let t_pad = padded_steps(steps, dw);
    let max_level = 2 * t_pad as i64;
    let nq = 2 * dims.ny as i64;
    let width = 2 * dw as i64;
    let tile_of = |q: i64, l: i64| ((q + l).div_euclid(width), (l - q).div_euclid(width));

    // Collect each tile's points level by level; q ascends within a level.
    let mut points: BTreeMap<(i64, i64), BTreeMap<i64, (i64, i64)>> = BTreeMap::new();
    for l in 1..=max_level {
        for q in (l % 2..nq).step_by(2) {
            let e = points.entry(tile_of(q, l)).or_default().entry(l).or_insert((q, q));
            e.1 = q;
        }
    }

    let mut keys: Vec<(i64, i64)> = points.keys().copied().collect();
    keys.sort_by_key(|&(i, j)| (i + j, i - j));
    let index: BTreeMap<(i64, i64), usize> = keys.iter().enumerate().map(|(k, &key)| (key, k)).collect();

    let mut tiles = Vec::with_capacity(keys.len());
    for (id, &(i, j)) in keys.iter().enumerate() {
        let mut levels = Vec::new();
        let mut lags = Vec::new();
        let mut lag = 0;
        for (n, (&l, &(q0, q1))) in points[&(i, j)].iter().enumerate() {
            let family = level_family(l as usize);
            if n > 0 && family == Family::H {
                lag += 1;
            }
            // E at q = 2y, H at q = 2y + 1: y = q / 2 either way.
            levels.push(TileLevel { level: l as usize, y0: (q0 / 2) as usize, y1: (q1 / 2 + 1) as usize });
            lags.push(lag);
        }
        debug_assert!(levels.windows(2).all(|w| w[1].level == w[0].level + 1));
        tiles.push(Tile { id, i, j, slab: i + j, position: i - j, levels, lags });
    }

    // Tile edges from point dependencies; interior-only, level ≥ 1.
    let mut deps: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); tiles.len()];
    for l in 1..=max_level {
        for q in (l % 2..nq).step_by(2) {
            let me = index[&tile_of(q, l)];
            for (dq, dl) in [(-1, 1), (1, 1), (0, 2)] {
                let (pq, pl) = (q + dq, l - dl);
                if pl >= 1 && (0..nq).contains(&pq) {
                    let other = index[&tile_of(pq, pl)];
                    if other != me {
                        deps[me].insert(other);
                    }
                }
            }
        }
    }
    // Drop edges implied through another direct dependency.
    let reduced: Vec<Vec<usize>> = (0..tiles.len())
        .map(|k| {
            deps[k]
                .iter()
                .copied()
                .filter(|d| !deps[k].iter().any(|e| e != d && deps[*e].contains(d)))
                .collect()
        })
        .collect();
    let mut successors = vec![Vec::new(); tiles.len()];
    for (k, ds) in reduced.iter().enumerate() {
        for &d in ds {
            successors[d].push(k);
        }
    }

    let slabs = tiles.iter().map(|t| t.slab).collect::<BTreeSet<_>>().len();
    Ok(TilingPlan {
        dims,
        dw,
        bz,
        ww: dw + bz - 1,
        rows: dims.ny / dw,
        requested_steps: steps,
        steps: t_pad,
        slabs,
        tiles,
        deps: reduced,
        successors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan(ny: usize, steps: usize, dw: usize, bz: usize) -> TilingPlan {
        build_tiling_plan(GridDims::new(8, ny, 8).unwrap(), steps, dw, bz).unwrap()
    }

    #[test]
    fn basic_shape() {
        let p = plan(16, 8, 4, 4);
        assert_eq!(p.rows, 4);
        assert_eq!(p.ww, 7);
        assert_eq!(p.steps, 8);
        assert_eq!(padded_steps(5, 8), 8);
        assert_eq!(padded_steps(0, 8), 0);
        assert_eq!(padded_steps(9, 4), 10);
    }

    #[test]
    fn rejects_bad_parameters() {
        let d = GridDims::new(8, 16, 8).unwrap();
        assert!(matches!(build_tiling_plan(d, 4, 6, 1), Err(Error::Plan(_))));
        assert!(matches!(build_tiling_plan(d, 4, 12, 1), Err(Error::Plan(_))));
        assert!(matches!(build_tiling_plan(d, 4, 4, 0), Err(Error::Plan(_))));
        assert!(matches!(build_tiling_plan(d, 4, 0, 1), Err(Error::Plan(_))));
    }

    #[test]
    fn exact_cover_by_brute_force() {
        for (ny, steps, dw) in [(16, 8, 4), (16, 3, 8), (24, 7, 4), (32, 16, 8)] {
            let p = plan(ny, steps, dw, 2);
            let mut seen = vec![0u8; ny * 2 * p.steps];
            for t in &p.tiles {
                for l in &t.levels {
                    for y in l.y0..l.y1 {
                        seen[(l.level - 1) * ny + y] += 1;
                    }
                }
            }
            assert!(seen.iter().all(|&c| c == 1), "ny={ny} dw={dw}");
        }
    }

    #[test]
    fn full_diamonds_start_and_end_on_e() {
        let p = plan(32, 16, 8, 1);
        let mut full = 0;
        for t in &p.tiles {
            let points: usize = t.levels.iter().map(|l| l.y1 - l.y0).sum();
            if points == p.dw * p.dw {
                assert_eq!(t.levels.len(), 2 * p.dw - 1);
                full += 1;
                assert_eq!(t.levels[0].family(), Family::E);
                assert_eq!(t.levels.last().unwrap().family(), Family::E);
                let widest = t.levels.iter().map(|l| l.y1 - l.y0).max().unwrap();
                assert_eq!(widest, p.dw);
                assert_eq!(t.max_lag(), p.dw - 1);
            }
        }
        assert!(full > 0);
    }

    #[test]
    fn interior_diamonds_wait_for_two() {
        let p = plan(32, 16, 4, 1);
        let max = p.deps.iter().map(Vec::len).max().unwrap();
        assert_eq!(max, 2);
        for (k, t) in p.tiles.iter().enumerate() {
            for &d in &p.deps[k] {
                assert_eq!(p.tiles[d].slab, t.slab - 1);
                assert!(d < k);
            }
            // half-diamonds clipped by the y boundaries
            let lo = p.tiles.iter().map(|t| t.position).min().unwrap();
            let hi = p.tiles.iter().map(|t| t.position).max().unwrap();
            if t.slab >= 0 && (t.position == lo || t.position == hi) {
                assert_eq!(p.deps[k].len(), 1);
            }
        }
    }

    #[test]
    fn stages_cover_every_z_once() {
        let p = plan(16, 4, 4, 3);
        for k in 0..p.num_tiles() {
            let mut per_level: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
            for s in p.stages(k) {
                per_level.entry(s.level).or_default().push((s.z0, s.z1));
            }
            for (_, ranges) in per_level {
                let mut next = 0;
                for (z0, z1) in ranges {
                    assert_eq!(z0, next);
                    next = z1;
                }
                assert_eq!(next, p.dims.nz);
            }
        }
    }

    #[test]
    fn dropping_a_dependency_updates_both_sides() {
        let mut p = plan(16, 8, 4, 1);
        let k = (0..p.num_tiles()).find(|&k| !p.deps[k].is_empty()).unwrap();
        let d = p.deps[k][0];
        assert!(p.drop_dependency(k, d));
        assert!(!p.deps[k].contains(&d));
        assert!(!p.successors[d].contains(&k));
        assert!(!p.drop_dependency(k, d));
    }
}
