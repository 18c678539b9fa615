//! Update coefficients of the time-harmonic iteration and benchmark problems.
//!
//! Each implicit half-step is solved for the new value ahead of time, so the
//! kernels only evaluate `F_new = t·F_old + c·difference + src`. The grid
//! spacing and the curl orientation are folded into `c`.

use crate::error::{Error, Result};
use crate::field::{
    Axis, ComplexScalar, Component, Family, GridDims, ProblemState, ALL_COMPONENTS,
};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

/// Material parameters seen by one split-component update.
///
/// `sigma` and `sigma_star` are the conductivities along the component's own
/// derivative axis, which is how a split-field absorbing layer would grade them.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaterialCell {
    pub eps: ComplexScalar,
    pub mu: f64,
    pub sigma: f64,
    pub sigma_star: f64,
}

impl MaterialCell {
    pub const VACUUM: Self =
        Self { eps: ComplexScalar::new(1.0, 0.0), mu: 1.0, sigma: 0.0, sigma_star: 0.0 };
}

/// One voxel of a material map, with optionally directional conductivities.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaterialVoxel {
    pub eps: ComplexScalar,
    pub mu: f64,
    pub sigma: [f64; 3],
    pub sigma_star: [f64; 3],
}

impl MaterialVoxel {
    pub const VACUUM: Self = Self::isotropic(ComplexScalar::new(1.0, 0.0), 1.0, 0.0, 0.0);

    pub const fn isotropic(eps: ComplexScalar, mu: f64, sigma: f64, sigma_star: f64) -> Self {
        Self { eps, mu, sigma: [sigma; 3], sigma_star: [sigma_star; 3] }
    }

    /// Material as seen by `component`: conductivities taken along its derivative axis.
    pub fn cell_for(&self, component: Component) -> MaterialCell {
        let axis = match component.descriptor().shift_axis {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        };
        MaterialCell { eps: self.eps, mu: self.mu, sigma: self.sigma[axis], sigma_star: self.sigma_star[axis] }
    }
}

/// Pseudo-time iteration parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeParams {
    /// Angular frequency ω.
    pub omega: f64,
    /// Pseudo-time step τ.
    pub tau: f64,
    /// Uniform grid spacing Δ.
    pub delta: f64,
    /// Electric source amplitude S_E on the injection plane.
    pub source_e: ComplexScalar,
    /// Magnetic source amplitude S_H on the injection plane.
    pub source_h: ComplexScalar,
}

impl Default for SchemeParams {
    fn default() -> Self {
        Self {
            omega: 1.0,
            tau: 0.5,
            delta: 1.0,
            source_e: ComplexScalar::new(1.0, 0.0),
            source_h: ComplexScalar::new(1.0, 0.0),
        }
    }
}

impl SchemeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !(self.delta > 0.0) {
            return Err(Error::Config(format!(
                "tau and delta must be positive (tau={}, delta={})",
                self.tau, self.delta
            )));
        }
        if !(self.omega * self.tau).is_finite() || (self.omega * self.tau).abs() > std::f64::consts::PI {
            return Err(Error::Config(format!(
                "omega*tau = {} outside [-pi, pi]",
                self.omega * self.tau
            )));
        }
        Ok(())
    }

    pub fn with_sources(mut self, e: ComplexScalar, h: ComplexScalar) -> Self {
        self.source_e = e;
        self.source_h = h;
        self
    }
}

/// Direction of the pseudo-time iteration for an E update.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum IterationMode {
    Forward,
    /// Used for negative-permittivity cells of the E family.
    Back,
}

impl IterationMode {
    pub fn for_cell(family: Family, mat: &MaterialCell) -> Self {
        if family == Family::E && mat.eps.re < 0.0 {
            IterationMode::Back
        } else {
            IterationMode::Forward
        }
    }
}

/// Multipliers of `F_new = t·F_old + c·(Δ·curl term) + src`, before the
/// per-component curl orientation is applied to `c`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Coefficients {
    pub t: ComplexScalar,
    pub c: ComplexScalar,
    pub src: ComplexScalar,
}

fn cis(theta: f64) -> ComplexScalar {
    ComplexScalar::from_polar(1.0, theta)
}

/// Solves one implicit half-step for the new value in closed form.
///
/// The source amplitude used is `sp.source_e` for E and `sp.source_h` for H;
/// callers zero it where no source is injected.
pub fn derive_coefficients(
    mat: &MaterialCell,
    sp: &SchemeParams,
    family: Family,
    mode: IterationMode,
) -> Result<Coefficients> {
    let one = ComplexScalar::new(1.0, 0.0);
    let tau = sp.tau;
    let wt = sp.omega * tau;
    let singular = |what: &str| Error::SingularCoefficient {
        x: 0,
        y: 0,
        z: 0,
        component: format!("{family:?}"),
        detail: what.to_string(),
    };
    if mat.eps.norm() == 0.0 || mat.mu == 0.0 {
        return Err(singular("zero permittivity or permeability"));
    }
    let coeffs = match (family, mode) {
        (Family::H, _) => {
            let denom = cis(wt / 2.0) + tau * mat.sigma_star / mat.mu;
            if denom.norm() == 0.0 {
                return Err(singular("e^{i omega tau/2} + tau sigma*/mu = 0"));
            }
            Coefficients {
                t: cis(-wt / 2.0) / denom,
                c: -(one * (tau / (mat.mu * sp.delta))) / denom,
                src: sp.source_h * tau / denom,
            }
        }
        (Family::E, IterationMode::Forward) => {
            let denom = one + tau * mat.sigma / mat.eps;
            if denom.norm() == 0.0 {
                return Err(singular("1 + tau sigma/eps = 0"));
            }
            Coefficients {
                t: cis(-wt) / denom,
                c: (tau / sp.delta) / mat.eps * cis(-wt / 2.0) / denom,
                src: sp.source_e * tau * cis(-wt) / denom,
            }
        }
        (Family::E, IterationMode::Back) => {
            let denom = one / tau - mat.sigma / mat.eps;
            if denom.norm() == 0.0 {
                return Err(singular("1/tau - sigma/eps = 0"));
            }
            Coefficients {
                t: cis(wt) / (denom * tau),
                c: -(one / (mat.eps * sp.delta)) * cis(wt / 2.0) / denom,
                src: -sp.source_e / denom,
            }
        }
    };
    if !(coeffs.t.is_finite() && coeffs.c.is_finite() && coeffs.src.is_finite()) {
        return Err(singular("non-finite coefficient"));
    }
    Ok(coeffs)
}

/// z index of the plane-wave injection layer.
pub fn source_plane(dims: &GridDims) -> usize {
    dims.nz / 4
}

/// Fills the coefficient arrays of `state` from a per-cell material function.
/// Sources are injected on the plane `z = nz/4` only.
pub fn fill_coefficients<M>(state: &mut ProblemState, sp: &SchemeParams, material: M) -> Result<()>
where
    M: Fn(usize, usize, usize) -> MaterialVoxel,
{
    sp.validate()?;
    let dims = state.dims;
    let plane = source_plane(&dims);
    let unsourced = sp.with_sources(ComplexScalar::new(0.0, 0.0), ComplexScalar::new(0.0, 0.0));
    for z in 0..dims.nz {
        for y in 0..dims.ny {
            for x in 0..dims.nx {
                let voxel = material(x, y, z);
                let i = dims.index(x, y, z);
                for comp in ALL_COMPONENTS {
                    let d = comp.descriptor();
                    let mat = voxel.cell_for(comp);
                    let mode = IterationMode::for_cell(d.family, &mat);
                    let params = if d.has_source() && z == plane { sp } else { &unsourced };
                    let k = derive_coefficients(&mat, params, d.family, mode).map_err(|e| match e {
                        Error::SingularCoefficient { detail, .. } => Error::SingularCoefficient {
                            x,
                            y,
                            z,
                            component: comp.name().to_string(),
                            detail,
                        },
                        other => other,
                    })?;
                    state.coeff_t[comp.index()].as_mut_slice()[i] = k.t;
                    state.coeff_c[comp.index()].as_mut_slice()[i] = k.c * d.difference_sign as f64;
                    if let Some(slot) = d.source_slot {
                        state.coeff_src[slot].as_mut_slice()[i] = k.src;
                    }
                }
            }
        }
    }
    Ok(())
}

/// Homogeneous vacuum, Dirichlet walls and a plane-wave source layer.
pub fn build_benchmark_problem(dims: GridDims, sp: &SchemeParams) -> Result<ProblemState> {
    sp.validate()?;
    let mut state = ProblemState::allocate(dims)?;
    let plane = source_plane(&dims);
    let unsourced = sp.with_sources(ComplexScalar::new(0.0, 0.0), ComplexScalar::new(0.0, 0.0));
    for comp in ALL_COMPONENTS {
        let d = comp.descriptor();
        let mat = MaterialVoxel::VACUUM.cell_for(comp);
        let mode = IterationMode::for_cell(d.family, &mat);
        let bulk = derive_coefficients(&mat, &unsourced, d.family, mode)?;
        let sourced = derive_coefficients(&mat, sp, d.family, mode)?;
        let c = bulk.c * d.difference_sign as f64;
        for z in 0..dims.nz {
            for y in 0..dims.ny {
                let row = dims.index(0, y, z);
                state.coeff_t[comp.index()].as_mut_slice()[row..row + dims.nx].fill(bulk.t);
                state.coeff_c[comp.index()].as_mut_slice()[row..row + dims.nx].fill(c);
                if let Some(slot) = d.source_slot {
                    if z == plane {
                        state.coeff_src[slot].as_mut_slice()[row..row + dims.nx].fill(sourced.src);
                    }
                }
            }
        }
    }
    Ok(state)
}

/// Builds a problem from a material map in the voxel file layout.
pub fn build_problem_from_materials(
    dims: GridDims,
    sp: &SchemeParams,
    voxels: &[MaterialVoxel],
) -> Result<ProblemState> {
    if voxels.len() != dims.interior_cells() {
        return Err(Error::Config(format!(
            "material map has {} voxels, grid {dims} needs {}",
            voxels.len(),
            dims.interior_cells()
        )));
    }
    let mut state = ProblemState::allocate(dims)?;
    fill_coefficients(&mut state, sp, |x, y, z| voxels[x + dims.nx * (y + dims.ny * z)])?;
    Ok(state)
}

/// Bytes per voxel record: (eps_re, eps_im, mu, sigma, sigma_star) as f64 LE.
pub const VOXEL_RECORD_BYTES: usize = 40;

/// Reads a voxel material map (x fastest, little-endian f64 records).
pub fn read_material_map(path: impl AsRef<Path>, dims: &GridDims) -> Result<Vec<MaterialVoxel>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path.as_ref())?.read_to_end(&mut bytes)?;
    let expected = dims.interior_cells() * VOXEL_RECORD_BYTES;
    if bytes.len() != expected {
        return Err(Error::Config(format!(
            "material map {} has {} bytes, expected {expected} for grid {dims}",
            path.as_ref().display(),
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(VOXEL_RECORD_BYTES)
        .map(|r| {
            let f = |k: usize| f64::from_le_bytes(r[8 * k..8 * k + 8].try_into().unwrap());
            MaterialVoxel::isotropic(ComplexScalar::new(f(0), f(1)), f(2), f(3), f(4))
        })
        .collect())
}

/// Writes isotropic voxels in the layout read by [`read_material_map`].
pub fn write_material_map(path: impl AsRef<Path>, voxels: &[MaterialVoxel]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for v in voxels {
        for x in [v.eps.re, v.eps.im, v.mu, v.sigma[0], v.sigma_star[0]] {
            out.write_all(&x.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}
