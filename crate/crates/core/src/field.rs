//! Grid geometry, split-field component table and the 40-array problem state.
//!
//! Every field and coefficient lives in its own ghost-padded array with the
//! x axis unit-stride and z slowest. Ghost cells are one layer wide and hold
//! the homogeneous Dirichlet boundary value (zero); kernels never write them.

use crate::error::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Double-complex field amplitude.
pub type ComplexScalar = Complex64;

/// Width of the ghost layer on every face.
pub const GHOST: usize = 1;

/// Number of split field components (6 E + 6 H).
pub const NUM_COMPONENTS: usize = 12;

/// Number of components carrying a source term (the z-shift ones).
pub const NUM_SOURCES: usize = 4;

/// Total number of domain-sized arrays: 12 fields + 12 t + 12 c + 4 src.
pub const NUM_ARRAYS: usize = NUM_COMPONENTS + NUM_COMPONENTS + NUM_COMPONENTS + NUM_SOURCES;

/// Bytes per stored complex value.
pub const BYTES_PER_VALUE: usize = 16;

/// Storage per interior cell over all arrays.
pub const BYTES_PER_CELL: usize = NUM_ARRAYS * BYTES_PER_VALUE;

/// Interior extents of the structured grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridDims {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl GridDims {
    pub const MIN_EXTENT: usize = 4;

    pub fn new(nx: usize, ny: usize, nz: usize) -> Result<Self> {
        let dims = Self { nx, ny, nz };
        dims.validate()?;
        Ok(dims)
    }

    pub fn cube(n: usize) -> Result<Self> {
        Self::new(n, n, n)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < Self::MIN_EXTENT || self.ny < Self::MIN_EXTENT || self.nz < Self::MIN_EXTENT {
            return Err(Error::Config(format!(
                "grid {self} too small: every extent must be at least {}",
                Self::MIN_EXTENT
            )));
        }
        Ok(())
    }

    pub fn ghost(&self) -> usize {
        GHOST
    }

    /// Padded extents (n + 2·ghost) per axis.
    pub fn padded(&self) -> [usize; 3] {
        [self.nx + 2 * GHOST, self.ny + 2 * GHOST, self.nz + 2 * GHOST]
    }

    pub fn padded_cells(&self) -> usize {
        let [px, py, pz] = self.padded();
        px * py * pz
    }

    pub fn interior_cells(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    /// Array stride of a unit step along `axis`.
    pub fn stride(&self, axis: Axis) -> usize {
        let [px, py, _] = self.padded();
        match axis {
            Axis::X => 1,
            Axis::Y => px,
            Axis::Z => px * py,
        }
    }

    /// Offset of the interior cell `(x, y, z)` inside a padded array.
    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        debug_assert!(x < self.nx && y < self.ny && z < self.nz, "({x},{y},{z}) outside {self}");
        let [px, py, _] = self.padded();
        (z + GHOST) * py * px + (y + GHOST) * px + (x + GHOST)
    }

    /// Bytes used by all 40 arrays including ghost layers.
    pub fn footprint_bytes(&self) -> u64 {
        (NUM_ARRAYS * BYTES_PER_VALUE) as u64 * self.padded_cells() as u64
    }

    /// Bytes attributable to interior cells (640 per cell).
    pub fn interior_footprint_bytes(&self) -> u64 {
        BYTES_PER_CELL as u64 * self.interior_cells() as u64
    }
}

impl fmt::Display for GridDims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.nx, self.ny, self.nz)
    }
}

impl std::str::FromStr for GridDims {
    type Err = Error;

    /// Accepts `N` for a cube or `NXxNYxNZ`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(['x', 'X']).collect();
        let parse = |p: &str| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("invalid grid extent `{p}` in `{s}`")))
        };
        match parts.as_slice() {
            [n] => Self::cube(parse(n)?),
            [x, y, z] => Self::new(parse(x)?, parse(y)?, parse(z)?),
            _ => Err(Error::Config(format!("invalid grid `{s}`, expected N or NXxNYxNZ"))),
        }
    }
}

/// Offset of interior cell `(x, y, z)`; free-function form of [`GridDims::index`].
pub fn linear_index(dims: &GridDims, x: usize, y: usize, z: usize) -> usize {
    dims.index(x, y, z)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    E,
    H,
}

impl Family {
    pub fn other(self) -> Self {
        match self {
            Family::E => Family::H,
            Family::H => Family::E,
        }
    }

    /// The six components of this family in update order.
    pub fn components(self) -> &'static [Component; 6] {
        match self {
            Family::E => &E_COMPONENTS,
            Family::H => &H_COMPONENTS,
        }
    }
}

/// One of the twelve split components; the two letters after the family name
/// are the physical component and the derivative axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Component {
    Exy = 0,
    Exz,
    Eyx,
    Eyz,
    Ezx,
    Ezy,
    Hxy,
    Hxz,
    Hyx,
    Hyz,
    Hzx,
    Hzy,
}

pub const E_COMPONENTS: [Component; 6] =
    [Component::Exy, Component::Exz, Component::Eyx, Component::Eyz, Component::Ezx, Component::Ezy];
pub const H_COMPONENTS: [Component; 6] =
    [Component::Hxy, Component::Hxz, Component::Hyx, Component::Hyz, Component::Hzx, Component::Hzy];
pub const ALL_COMPONENTS: [Component; 12] = [
    Component::Exy,
    Component::Exz,
    Component::Eyx,
    Component::Eyz,
    Component::Ezx,
    Component::Ezy,
    Component::Hxy,
    Component::Hxz,
    Component::Hyx,
    Component::Hyz,
    Component::Hzx,
    Component::Hzy,
];

impl Component {
    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        ALL_COMPONENTS.get(i).copied()
    }

    #[inline]
    pub fn descriptor(self) -> &'static ComponentDescriptor {
        &DESCRIPTORS[self.index()]
    }

    pub fn name(self) -> &'static str {
        match self {
            Component::Exy => "EXY",
            Component::Exz => "EXZ",
            Component::Eyx => "EYX",
            Component::Eyz => "EYZ",
            Component::Ezx => "EZX",
            Component::Ezy => "EZY",
            Component::Hxy => "HXY",
            Component::Hxz => "HXZ",
            Component::Hyx => "HYX",
            Component::Hyz => "HYZ",
            Component::Hzx => "HZX",
            Component::Hzy => "HZY",
        }
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Static shape of one split-component update
/// `F ← t·F + c·sign·((A+B)[i+s] − (A+B)[i]) (+ src)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ComponentDescriptor {
    pub id: Component,
    pub family: Family,
    pub shift_axis: Axis,
    /// +1 for H (reads forward neighbours), −1 for E (reads backward ones).
    pub shift_sign: i8,
    /// The two splits of one physical component of the other family.
    pub operand_pair: [Component; 2],
    /// Orientation of the curl term relative to the kernel's difference
    /// `(A+B)[i+s] − (A+B)[i]`; folded into the `c` coefficient at setup.
    pub difference_sign: i8,
    /// Slot in the source array set, for the four z-shift components.
    pub source_slot: Option<usize>,
}

impl ComponentDescriptor {
    pub fn has_source(&self) -> bool {
        self.source_slot.is_some()
    }

    /// Number of coefficient arrays read by this update (t, c and maybe src).
    pub fn coefficient_count(&self) -> usize {
        if self.has_source() {
            3
        } else {
            2
        }
    }

    /// Signed array offset of the shifted operand read.
    pub fn shift_offset(&self, dims: &GridDims) -> isize {
        self.shift_sign as isize * dims.stride(self.shift_axis) as isize
    }
}

const fn desc(
    id: Component,
    family: Family,
    shift_axis: Axis,
    operand_pair: [Component; 2],
    difference_sign: i8,
    source_slot: Option<usize>,
) -> ComponentDescriptor {
    let shift_sign = match family {
        Family::H => 1,
        Family::E => -1,
    };
    ComponentDescriptor { id, family, shift_axis, shift_sign, operand_pair, difference_sign, source_slot }
}

use Component as C;

// Curl orientation: (curl F)_a has sign +1 for the derivative along b when
// (a, b) is cyclic (xy, yz, zx). E components see a backward difference
// through the kernel, which flips the sign once more; the family's own sign
// (+1/ε for E, −1/μ for H) is carried by `c` itself.
static DESCRIPTORS: [ComponentDescriptor; 12] = [
    desc(C::Exy, Family::E, Axis::Y, [C::Hzx, C::Hzy], -1, None),
    desc(C::Exz, Family::E, Axis::Z, [C::Hyx, C::Hyz], 1, Some(0)),
    desc(C::Eyx, Family::E, Axis::X, [C::Hzx, C::Hzy], 1, None),
    desc(C::Eyz, Family::E, Axis::Z, [C::Hxy, C::Hxz], -1, Some(1)),
    desc(C::Ezx, Family::E, Axis::X, [C::Hyx, C::Hyz], -1, None),
    desc(C::Ezy, Family::E, Axis::Y, [C::Hxy, C::Hxz], 1, None),
    desc(C::Hxy, Family::H, Axis::Y, [C::Ezx, C::Ezy], 1, None),
    desc(C::Hxz, Family::H, Axis::Z, [C::Eyx, C::Eyz], -1, Some(2)),
    desc(C::Hyx, Family::H, Axis::X, [C::Ezx, C::Ezy], -1, None),
    desc(C::Hyz, Family::H, Axis::Z, [C::Exy, C::Exz], 1, Some(3)),
    desc(C::Hzx, Family::H, Axis::X, [C::Eyx, C::Eyz], 1, None),
    desc(C::Hzy, Family::H, Axis::Y, [C::Exy, C::Exz], -1, None),
];

/// All twelve descriptors, indexed by [`Component::index`].
pub fn descriptors() -> &'static [ComponentDescriptor; 12] {
    &DESCRIPTORS
}

/// A zero-initialised, 64-byte aligned array of complex values.
pub struct AlignedBuf {
    blocks: Vec<CacheLine>,
    len: usize,
}

pub const ALIGNMENT: usize = 64;

#[derive(Clone, Copy)]
#[repr(C, align(64))]
struct CacheLine([ComplexScalar; 4]);

const ZERO_LINE: CacheLine = CacheLine([ComplexScalar::new(0.0, 0.0); 4]);

impl AlignedBuf {
    pub fn zeroed(len: usize) -> Result<Self> {
        let nblocks = len.div_ceil(4);
        let mut blocks = Vec::new();
        blocks
            .try_reserve_exact(nblocks)
            .map_err(|_| Error::Allocation { bytes: nblocks as u64 * ALIGNMENT as u64 })?;
        blocks.resize(nblocks, ZERO_LINE);
        Ok(Self { blocks, len })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn as_slice(&self) -> &[ComplexScalar] {
        // SAFETY: CacheLine is repr(C) over 4 contiguous Complex64 values and
        // the vector holds at least `len` of them.
        unsafe { std::slice::from_raw_parts(self.blocks.as_ptr().cast(), self.len) }
    }

    pub fn as_mut_slice(&mut self) -> &mut [ComplexScalar] {
        // SAFETY: as above, with unique access through &mut self.
        unsafe { std::slice::from_raw_parts_mut(self.blocks.as_mut_ptr().cast(), self.len) }
    }

    pub fn as_ptr(&self) -> *const ComplexScalar {
        self.blocks.as_ptr().cast()
    }

    pub fn as_mut_ptr(&mut self) -> *mut ComplexScalar {
        self.blocks.as_mut_ptr().cast()
    }
}

impl Clone for AlignedBuf {
    fn clone(&self) -> Self {
        Self { blocks: self.blocks.clone(), len: self.len }
    }
}

impl fmt::Debug for AlignedBuf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AlignedBuf").field("len", &self.len).finish()
    }
}

/// Field components plus the precomputed update coefficients.
#[derive(Clone, Debug)]
pub struct ProblemState {
    pub dims: GridDims,
    pub fields: [AlignedBuf; NUM_COMPONENTS],
    /// Decay multiplier per component.
    pub coeff_t: [AlignedBuf; NUM_COMPONENTS],
    /// Curl multiplier per component, spacing and orientation folded in.
    pub coeff_c: [AlignedBuf; NUM_COMPONENTS],
    /// Pre-scaled additive source term for the z-shift components.
    pub coeff_src: [AlignedBuf; NUM_SOURCES],
}

fn zeroed_arrays<const N: usize>(len: usize) -> Result<[AlignedBuf; N]> {
    let mut v = Vec::with_capacity(N);
    for _ in 0..N {
        v.push(AlignedBuf::zeroed(len)?);
    }
    Ok(v.try_into().unwrap_or_else(|_| unreachable!()))
}

impl ProblemState {
    /// Allocates all 40 arrays, zero-initialised.
    pub fn allocate(dims: GridDims) -> Result<Self> {
        dims.validate()?;
        let len = dims.padded_cells();
        let wrap = |e: Error| match e {
            Error::Allocation { .. } => Error::Allocation { bytes: dims.footprint_bytes() },
            other => other,
        };
        Ok(Self {
            dims,
            fields: zeroed_arrays(len).map_err(wrap)?,
            coeff_t: zeroed_arrays(len).map_err(wrap)?,
            coeff_c: zeroed_arrays(len).map_err(wrap)?,
            coeff_src: zeroed_arrays(len).map_err(wrap)?,
        })
    }

    pub fn footprint_bytes(&self) -> u64 {
        self.dims.footprint_bytes()
    }

    pub fn field(&self, c: Component) -> &[ComplexScalar] {
        self.fields[c.index()].as_slice()
    }

    pub fn field_mut(&mut self, c: Component) -> &mut [ComplexScalar] {
        self.fields[c.index()].as_mut_slice()
    }

    /// Iterates over the 40 arrays (fields first).
    pub fn arrays(&self) -> impl Iterator<Item = &AlignedBuf> {
        self.fields.iter().chain(&self.coeff_t).chain(&self.coeff_c).chain(&self.coeff_src)
    }

    /// True when every ghost cell of every field array is exactly zero.
    pub fn ghosts_are_zero(&self) -> bool {
        let [px, py, pz] = self.dims.padded();
        let is_ghost = |i: usize| {
            let x = i % px;
            let y = (i / px) % py;
            let z = i / (px * py);
            x == 0 || y == 0 || z == 0 || x == px - 1 || y == py - 1 || z == pz - 1
        };
        self.fields.iter().all(|f| {
            f.as_slice().iter().enumerate().all(|(i, v)| !is_ghost(i) || (v.re == 0.0 && v.im == 0.0))
        })
    }

    /// Fills the interior of every field array with reproducible random
    /// values in [-1, 1); ghosts stay zero.
    pub fn randomize_fields(&mut self, seed: u64) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let dims = self.dims;
        for f in self.fields.iter_mut() {
            let s = f.as_mut_slice();
            for z in 0..dims.nz {
                for y in 0..dims.ny {
                    for x in 0..dims.nx {
                        s[dims.index(x, y, z)] =
                            ComplexScalar::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                    }
                }
            }
        }
    }

    /// Order-sensitive digest of the twelve field arrays (bit patterns).
    pub fn field_digest(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for f in &self.fields {
            for v in f.as_slice() {
                v.re.to_bits().hash(&mut h);
                v.im.to_bits().hash(&mut h);
            }
        }
        h.finish()
    }
}

/// Free-function form of [`ProblemState::allocate`].
pub fn allocate_state(dims: GridDims) -> Result<ProblemState> {
    ProblemState::allocate(dims)
}
