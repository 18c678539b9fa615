//! The twelve split-component update kernels.
//!
//! Every engine funnels through [`StateView::update_region`], so a given
//! cell update is always the same sequence of floating-point operations no
//! matter which engine or thread count produced it.

use crate::field::{
    ComplexScalar as C, Component, ComponentDescriptor, Family, GridDims, ProblemState,
    ALL_COMPONENTS, NUM_COMPONENTS, NUM_SOURCES,
};
use std::collections::HashSet;
use std::ops::Range;

/// Half-open interior box `[x0,x1) × [y0,y1) × [z0,z1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Region {
    pub x0: usize,
    pub x1: usize,
    pub y0: usize,
    pub y1: usize,
    pub z0: usize,
    pub z1: usize,
}

impl Region {
    pub fn new(x: Range<usize>, y: Range<usize>, z: Range<usize>) -> Self {
        Self { x0: x.start, x1: x.end, y0: y.start, y1: y.end, z0: z.start, z1: z.end }
    }

    pub fn full(dims: &GridDims) -> Self {
        Self::new(0..dims.nx, 0..dims.ny, 0..dims.nz)
    }

    pub fn is_empty(&self) -> bool {
        self.x0 >= self.x1 || self.y0 >= self.y1 || self.z0 >= self.z1
    }

    pub fn cells(&self) -> usize {
        if self.is_empty() {
            0
        } else {
            (self.x1 - self.x0) * (self.y1 - self.y0) * (self.z1 - self.z0)
        }
    }

    pub fn within(&self, dims: &GridDims) -> bool {
        self.x1 <= dims.nx && self.y1 <= dims.ny && self.z1 <= dims.nz
    }
}

/// Complex arithmetic used by the kernels. The plain implementation is free;
/// the counting one is used to audit the flop count of the real code path.
pub trait ComplexOps {
    fn add(&mut self, a: C, b: C) -> C;
    fn sub(&mut self, a: C, b: C) -> C;
    fn mul(&mut self, a: C, b: C) -> C;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Plain;

impl ComplexOps for Plain {
    #[inline(always)]
    fn add(&mut self, a: C, b: C) -> C {
        a + b
    }
    #[inline(always)]
    fn sub(&mut self, a: C, b: C) -> C {
        a - b
    }
    #[inline(always)]
    fn mul(&mut self, a: C, b: C) -> C {
        a * b
    }
}

/// Counts real floating-point operations: 2 per complex add/sub, 6 per multiply.
#[derive(Clone, Copy, Debug, Default)]
pub struct FlopCounter {
    pub flops: u64,
}

impl ComplexOps for FlopCounter {
    fn add(&mut self, a: C, b: C) -> C {
        self.flops += 2;
        a + b
    }
    fn sub(&mut self, a: C, b: C) -> C {
        self.flops += 2;
        a - b
    }
    fn mul(&mut self, a: C, b: C) -> C {
        self.flops += 6;
        a * b
    }
}

#[inline(always)]
#[allow(clippy::too_many_arguments)]
fn update_row<O: ComplexOps>(
    ops: &mut O,
    f: &mut [C],
    t: &[C],
    c: &[C],
    a: &[C],
    b: &[C],
    a_shift: &[C],
    b_shift: &[C],
    src: Option<&[C]>,
) {
    let n = f.len();
    let (t, c, a, b, a_shift, b_shift) = (&t[..n], &c[..n], &a[..n], &b[..n], &a_shift[..n], &b_shift[..n]);
    match src {
        Some(src) => {
            let src = &src[..n];
            for i in 0..n {
                let near = ops.add(a[i], b[i]);
                let far = ops.add(a_shift[i], b_shift[i]);
                let diff = ops.sub(far, near);
                let decay = ops.mul(t[i], f[i]);
                let curl = ops.mul(c[i], diff);
                let v = ops.add(decay, curl);
                f[i] = ops.add(v, src[i]);
            }
        }
        None => {
            for i in 0..n {
                let near = ops.add(a[i], b[i]);
                let far = ops.add(a_shift[i], b_shift[i]);
                let diff = ops.sub(far, near);
                let decay = ops.mul(t[i], f[i]);
                let curl = ops.mul(c[i], diff);
                f[i] = ops.add(decay, curl);
            }
        }
    }
}

/// Raw, shareable view of a [`ProblemState`].
///
/// Engines hand copies of this view to worker threads. Soundness rests on the
/// caller: concurrent `update_region` calls must write disjoint cells, and no
/// cell may be written while another thread reads it.
#[derive(Clone, Copy, Debug)]
pub struct StateView {
    dims: GridDims,
    len: usize,
    fields: [*mut C; NUM_COMPONENTS],
    t: [*const C; NUM_COMPONENTS],
    c: [*const C; NUM_COMPONENTS],
    src: [*const C; NUM_SOURCES],
}

// SAFETY: the view is only a bundle of pointers into arrays owned by a
// ProblemState that outlives every engine run; access discipline is the
// engines' responsibility (see type docs).
unsafe impl Send for StateView {}
unsafe impl Sync for StateView {}

impl StateView {
    pub fn new(state: &mut ProblemState) -> Self {
        let len = state.dims.padded_cells();
        Self {
            dims: state.dims,
            len,
            fields: std::array::from_fn(|i| state.fields[i].as_mut_ptr()),
            t: std::array::from_fn(|i| state.coeff_t[i].as_ptr()),
            c: std::array::from_fn(|i| state.coeff_c[i].as_ptr()),
            src: std::array::from_fn(|i| state.coeff_src[i].as_ptr()),
        }
    }

    pub fn dims(&self) -> &GridDims {
        &self.dims
    }

    /// Applies the update of `comp` to every cell of `region`, z outermost.
    ///
    /// # Safety
    /// No other thread may concurrently write any cell this call reads or
    /// read/write any cell it writes; `region` must lie inside the interior.
    #[inline]
    pub unsafe fn update_region<O: ComplexOps>(&self, ops: &mut O, comp: Component, region: &Region) {
        if region.is_empty() {
            return;
        }
        debug_assert!(region.within(&self.dims), "{region:?} outside {}", self.dims);
        let d: &ComponentDescriptor = comp.descriptor();
        let shift = d.shift_offset(&self.dims);
        let [ia, ib] = d.operand_pair.map(|c| c.index());
        let k = comp.index();
        let n = region.x1 - region.x0;
        let slice = |p: *const C, start: usize| {
            debug_assert!(start + n <= self.len);
            std::slice::from_raw_parts(p.add(start), n)
        };
        for z in region.z0..region.z1 {
            for y in region.y0..region.y1 {
                let i = self.dims.index(region.x0, y, z);
                let j = (i as isize + shift) as usize;
                let f = std::slice::from_raw_parts_mut(self.fields[k].add(i), n);
                update_row(
                    ops,
                    f,
                    slice(self.t[k], i),
                    slice(self.c[k], i),
                    slice(self.fields[ia], i),
                    slice(self.fields[ib], i),
                    slice(self.fields[ia], j),
                    slice(self.fields[ib], j),
                    d.source_slot.map(|s| slice(self.src[s], i)),
                );
            }
        }
    }
}

/// Updates one component over `region` on an exclusively borrowed state.
pub fn update_component_region(state: &mut ProblemState, comp: Component, region: &Region) {
    assert!(region.within(&state.dims), "{region:?} outside {}", state.dims);
    let view = StateView::new(state);
    // SAFETY: exclusive borrow, single thread.
    unsafe { view.update_region(&mut Plain, comp, region) }
}

/// One full timestep: the six H components over the whole interior, then the six E.
pub fn step_reference(state: &mut ProblemState) {
    step_with(state, &mut Plain);
}

fn step_with<O: ComplexOps>(state: &mut ProblemState, ops: &mut O) {
    let region = Region::full(&state.dims);
    let view = StateView::new(state);
    for family in [Family::H, Family::E] {
        for &comp in family.components() {
            // SAFETY: exclusive borrow, single thread.
            unsafe { view.update_region(ops, comp, &region) }
        }
    }
}

/// Flops executed by one instrumented timestep.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FlopReport {
    pub per_component: [u64; NUM_COMPONENTS],
    pub cells: u64,
}

impl FlopReport {
    pub fn total(&self) -> u64 {
        self.per_component.iter().sum()
    }

    pub fn per_lup(&self) -> f64 {
        self.total() as f64 / self.cells as f64
    }
}

/// Runs one timestep through the counting arithmetic and reports flops per component.
pub fn count_step_flops(state: &mut ProblemState) -> FlopReport {
    let region = Region::full(&state.dims);
    let view = StateView::new(state);
    let mut per_component = [0u64; NUM_COMPONENTS];
    for family in [Family::H, Family::E] {
        for &comp in family.components() {
            let mut counter = FlopCounter::default();
            // SAFETY: exclusive borrow, single thread.
            unsafe { view.update_region(&mut counter, comp, &region) }
            per_component[comp.index()] = counter.flops;
        }
    }
    FlopReport { per_component, cells: region.cells() as u64 }
}

/// Identifies one of the 40 arrays.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ArrayId {
    Field(Component),
    Decay(Component),
    Curl(Component),
    Source(usize),
}

/// The (array, signed offset) reads a component update performs per cell.
pub fn kernel_reads(comp: Component, dims: &GridDims) -> Vec<(ArrayId, isize)> {
    let d = comp.descriptor();
    let s = d.shift_offset(dims);
    let [a, b] = d.operand_pair;
    let mut reads = vec![
        (ArrayId::Decay(comp), 0),
        (ArrayId::Field(comp), 0),
        (ArrayId::Curl(comp), 0),
        (ArrayId::Field(a), 0),
        (ArrayId::Field(b), 0),
        (ArrayId::Field(a), s),
        (ArrayId::Field(b), s),
    ];
    if let Some(slot) = d.source_slot {
        reads.push((ArrayId::Source(slot), 0));
    }
    reads
}

/// Memory traffic of one loop nest, in 64-bit reals.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct Traffic {
    pub read_reals: u64,
    pub write_reals: u64,
}

impl Traffic {
    pub fn total(&self) -> u64 {
        self.read_reals + self.write_reals
    }
}

/// Counts distinct array elements read and written by one component sweep of
/// `region`, under a cache that always holds neighbouring rows of the current
/// x–y layer and holds the previous layer only when `layer_condition` is set.
pub fn count_region_traffic(dims: &GridDims, comp: Component, region: &Region, layer_condition: bool) -> Traffic {
    let reads = kernel_reads(comp, dims);
    let mut cached: HashSet<(ArrayId, usize)> = HashSet::new();
    let mut written: HashSet<usize> = HashSet::new();
    let mut traffic = Traffic::default();
    for z in region.z0..region.z1 {
        if !layer_condition {
            cached.clear();
        }
        for y in region.y0..region.y1 {
            for x in region.x0..region.x1 {
                let i = dims.index(x, y, z);
                for &(array, off) in &reads {
                    if cached.insert((array, (i as isize + off) as usize)) {
                        traffic.read_reals += 2;
                    }
                }
                if written.insert(i) {
                    traffic.write_reals += 2;
                }
            }
        }
    }
    traffic
}

/// Steady-state reals moved per cell by one component's loop nest: every
/// distinct stream counts once, shifted streams along x and y always reuse
/// cached rows, and shifted z streams do so only under the layer condition.
pub fn traffic_per_cell(comp: Component, layer_condition: bool) -> Traffic {
    let d = comp.descriptor();
    let streams = kernel_reads(comp, &GridDims { nx: 4, ny: 4, nz: 4 })
        .iter()
        .filter(|(_, off)| *off == 0 || (d.shift_axis == crate::field::Axis::Z && !layer_condition))
        .count() as u64;
    Traffic { read_reals: 2 * streams, write_reals: 2 }
}

/// Model code balance in bytes per lattice update summed over all twelve loops.
pub fn code_balance_from_kernels(layer_condition: bool) -> u64 {
    ALL_COMPONENTS.iter().map(|&c| traffic_per_cell(c, layer_condition).total() * 8).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::{build_benchmark_problem, SchemeParams};
    use crate::field::{Axis, ProblemState};

    fn scalar_state(dims: GridDims, comp: Component, t: C, f: C, c: C, src: C) -> ProblemState {
        let mut s = ProblemState::allocate(dims).unwrap();
        let k = comp.index();
        let d = comp.descriptor();
        for z in 0..dims.nz {
            for y in 0..dims.ny {
                for x in 0..dims.nx {
                    let i = dims.index(x, y, z);
                    s.coeff_t[k].as_mut_slice()[i] = t;
                    s.coeff_c[k].as_mut_slice()[i] = c;
                    s.fields[k].as_mut_slice()[i] = f;
                    if let Some(slot) = d.source_slot {
                        s.coeff_src[slot].as_mut_slice()[i] = src;
                    }
                }
            }
        }
        s
    }

    #[test]
    fn single_cell_update_matches_scalar_oracle() {
        // HXZ carries a source and shifts along +z, reading EYX + EYZ.
        let dims = GridDims::cube(4).unwrap();
        let comp = Component::Hxz;
        let mut s = scalar_state(dims, comp, C::new(0.5, 0.0), C::new(2.0, 0.0), C::new(1.0, 0.0), C::new(0.1, 0.0));
        // operand difference at (1,1,1): (A+B)[z=2] - (A+B)[z=1] = 0.25
        s.field_mut(Component::Eyx)[dims.index(1, 1, 2)] = C::new(0.125, 0.0);
        s.field_mut(Component::Eyz)[dims.index(1, 1, 2)] = C::new(0.125, 0.0);
        update_component_region(&mut s, comp, &Region::new(1..2, 1..2, 1..2));
        let got = s.field(comp)[dims.index(1, 1, 1)];
        // 0.5*2 + 1*0.25 + 0.1
        let expect = 0.5 * 2.0 + 1.0 * 0.25 + 0.1;
        assert!((got.re - expect).abs() < 1e-15 && got.im == 0.0, "{got}");
        assert!((got.re - 1.35).abs() < 1e-15);
    }

    #[test]
    fn identity_coefficients_leave_field_bitwise_unchanged() {
        let dims = GridDims::new(6, 5, 4).unwrap();
        for comp in ALL_COMPONENTS {
            let mut s = ProblemState::allocate(dims).unwrap();
            s.randomize_fields(3);
            let k = comp.index();
            for v in s.coeff_t[k].as_mut_slice() {
                *v = C::new(1.0, 0.0);
            }
            let before = s.field(comp).to_vec();
            update_component_region(&mut s, comp, &Region::full(&dims));
            let after = s.field(comp);
            for (a, b) in before.iter().zip(after) {
                assert_eq!(a.re.to_bits(), b.re.to_bits());
                assert_eq!(a.im.to_bits(), b.im.to_bits());
            }
        }
    }

    #[test]
    fn flop_count_is_248_per_lup() {
        let mut s = build_benchmark_problem(GridDims::cube(8).unwrap(), &SchemeParams::default()).unwrap();
        let r = count_step_flops(&mut s);
        for comp in ALL_COMPONENTS {
            let per = r.per_component[comp.index()] / r.cells;
            assert_eq!(per, if comp.descriptor().has_source() { 22 } else { 20 }, "{comp}");
        }
        assert_eq!(r.total(), 248 * 512);
    }

    #[test]
    fn h_reads_forward_e_reads_backward() {
        let dims = GridDims::cube(4).unwrap();
        for comp in ALL_COMPONENTS {
            let offs: Vec<isize> = kernel_reads(comp, &dims).iter().map(|r| r.1).filter(|&o| o != 0).collect();
            assert_eq!(offs.len(), 2);
            for o in offs {
                match comp.descriptor().family {
                    Family::H => assert!(o > 0),
                    Family::E => assert!(o < 0),
                }
            }
        }
    }

    #[test]
    fn zero_state_is_fixed_point() {
        let sp = SchemeParams::default().with_sources(C::new(0.0, 0.0), C::new(0.0, 0.0));
        let mut s = build_benchmark_problem(GridDims::cube(6).unwrap(), &sp).unwrap();
        for _ in 0..5 {
            step_reference(&mut s);
        }
        assert!(s.fields.iter().all(|f| f.as_slice().iter().all(|v| v.re == 0.0 && v.im == 0.0)));
    }

    #[test]
    fn power_of_two_source_scaling_is_exact() {
        let dims = GridDims::cube(12).unwrap();
        let sp = SchemeParams::default();
        let mut a = build_benchmark_problem(dims, &sp).unwrap();
        let mut b = a.clone();
        for src in b.coeff_src.iter_mut() {
            for v in src.as_mut_slice() {
                *v *= 2.0;
            }
        }
        for _ in 0..6 {
            step_reference(&mut a);
            step_reference(&mut b);
        }
        for (fa, fb) in a.fields.iter().zip(&b.fields) {
            for (x, y) in fa.as_slice().iter().zip(fb.as_slice()) {
                assert_eq!((x.re * 2.0).to_bits(), y.re.to_bits());
                assert_eq!((x.im * 2.0).to_bits(), y.im.to_bits());
            }
        }
    }

    /// Support of one H-then-E step from a single source cell, computed by
    /// walking the descriptors' read offsets independently of the kernels.
    #[test]
    fn single_source_support_after_one_step() {
        let dims = GridDims::cube(8).unwrap();
        let mut s = ProblemState::allocate(dims).unwrap();
        for comp in ALL_COMPONENTS {
            for v in s.coeff_t[comp.index()].as_mut_slice() {
                *v = C::new(1.0, 0.0);
            }
            for v in s.coeff_c[comp.index()].as_mut_slice() {
                *v = C::new(0.5, 0.25);
            }
        }
        let (sx, sy, sz) = (3, 4, 5);
        let src_idx = dims.index(sx, sy, sz);
        s.coeff_src[2].as_mut_slice()[src_idx] = C::new(1.0, 0.0); // HXZ
        step_reference(&mut s);

        let mut expected: HashSet<(Component, usize)> = HashSet::new();
        expected.insert((Component::Hxz, src_idx));
        for comp in crate::field::E_COMPONENTS {
            let d = comp.descriptor();
            if !d.operand_pair.contains(&Component::Hxz) {
                continue;
            }
            let s_off = d.shift_offset(&dims);
            // E at i reads H at i and i + s_off (s_off < 0)
            for cell in [src_idx as isize, src_idx as isize - s_off] {
                expected.insert((comp, cell as usize));
            }
        }
        let mut got = HashSet::new();
        for comp in ALL_COMPONENTS {
            for (i, v) in s.field(comp).iter().enumerate() {
                if v.norm() != 0.0 {
                    got.insert((comp, i));
                }
            }
        }
        assert_eq!(got, expected);
        assert!(s.ghosts_are_zero());
    }

    #[test]
    fn traffic_counts_match_loop_accounting() {
        let dims = GridDims::new(8, 6, 5).unwrap();
        let region = Region::full(&dims);
        let cells = region.cells() as u64;
        let layer = (dims.nx * dims.ny) as u64;
        let rows = (dims.nx * dims.nz) as u64;
        let cols = (dims.ny * dims.nz) as u64;
        for comp in ALL_COMPONENTS {
            let d = comp.descriptor();
            let src = if d.has_source() { 2 } else { 0 };
            let naive = count_region_traffic(&dims, comp, &region, false);
            let blocked = count_region_traffic(&dims, comp, &region, true);
            assert_eq!(naive.write_reals, 2 * cells);
            let (n_expect, b_expect) = match d.shift_axis {
                // shifted z streams are re-read every layer without the layer condition
                Axis::Z => ((14 + src) * cells, (10 + src) * cells + 4 * layer),
                Axis::Y => ((10 + src) * cells + 4 * rows, (10 + src) * cells + 4 * rows),
                Axis::X => ((10 + src) * cells + 4 * cols, (10 + src) * cells + 4 * cols),
            };
            assert_eq!(naive.read_reals, n_expect, "{comp} naive");
            assert_eq!(blocked.read_reals, b_expect, "{comp} blocked");
            let per = traffic_per_cell(comp, false).total();
            assert_eq!(per, if d.has_source() { 18 } else { 12 });
            let per_lc = traffic_per_cell(comp, true).total();
            assert_eq!(per_lc, if d.has_source() { 14 } else { 12 });
        }
        assert_eq!(code_balance_from_kernels(false), 1344);
        assert_eq!(code_balance_from_kernels(true), 1216);
    }
}
