//! Closed-form traffic and cache models.

use serde::{Deserialize, Serialize};

/// Flops per lattice-site update: 4 loops at 22 plus 8 loops at 20.
pub const FLOPS_PER_LUP: u64 = 4 * 22 + 8 * 20;

pub const MIB: f64 = 1024.0 * 1024.0;

/// Cache and bandwidth characteristics of the target machine.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MachineProfile {
    /// Last-level cache capacity in bytes.
    pub cache_bytes: u64,
    /// Share of the cache assumed available to tile data.
    pub usable_fraction: f64,
    /// Sustained memory bandwidth in GB/s (1e9 bytes).
    pub bandwidth_gbs: f64,
}

impl MachineProfile {
    /// 18-core Haswell-EP socket: 45 MiB L3, half usable, 50 GB/s.
    pub const HASWELL_EP: Self =
        Self { cache_bytes: 45 * 1024 * 1024, usable_fraction: 0.5, bandwidth_gbs: 50.0 };

    pub fn usable_cache_bytes(&self) -> f64 {
        self.cache_bytes as f64 * self.usable_fraction
    }

    pub fn validate(&self) -> crate::Result<()> {
        if !(self.usable_fraction > 0.0 && self.usable_fraction <= 1.0) {
            return Err(crate::Error::Config(format!(
                "usable_fraction {} outside (0, 1]",
                self.usable_fraction
            )));
        }
        if !(self.bandwidth_gbs > 0.0) {
            return Err(crate::Error::Config(format!("bandwidth {} GB/s must be positive", self.bandwidth_gbs)));
        }
        Ok(())
    }
}

impl Default for MachineProfile {
    fn default() -> Self {
        Self::HASWELL_EP
    }
}

/// Which traffic model applies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "variant")]
pub enum Variant {
    Naive,
    Spatial,
    Diamond { dw: usize },
}

/// Memory traffic in bytes per lattice update.
pub fn code_balance(variant: Variant) -> f64 {
    match variant {
        // 4 source loops stream 18 reals, 8 others stream 12
        Variant::Naive => (4 * (18 + 12 + 12) * 8) as f64,
        // layer condition saves the 4 shifted reals of each source loop
        Variant::Spatial => (4 * ((18 - 4) + 12 + 12) * 8) as f64,
        Variant::Diamond { dw } => diamond_code_balance(dw),
    }
}

/// Writes `6·(2dw−1)` plus reads `40·dw + 12` complex values per diamond of
/// `dw²/2` lattice updates.
pub fn diamond_code_balance(dw: usize) -> f64 {
    let dw = dw as f64;
    16.0 * (6.0 * (2.0 * dw - 1.0) + (40.0 * dw + 12.0)) / (dw * dw / 2.0)
}

/// Wavefront tile width along z.
pub fn wavefront_width(dw: usize, bz: usize) -> usize {
    dw + bz - 1
}

/// Bytes of one wavefront-diamond tile: 40 values over the tile area plus
/// 12 neighbour components around it, for every x.
pub fn cache_block_bytes(nx: usize, dw: usize, bz: usize) -> u64 {
    let (nx, dw, bz) = (nx as u64, dw as u64, bz as u64);
    let ww = dw + bz - 1;
    16 * nx * (40 * (dw * dw / 2 + dw * (bz - 1)) + 12 * (dw + ww))
}

/// Cache demand of `num_groups` concurrently active tiles.
pub fn aggregate_cache_bytes(nx: usize, dw: usize, bz: usize, num_groups: usize) -> u64 {
    cache_block_bytes(nx, dw, bz) * num_groups as u64
}

/// Cache needed for the spatially blocked sweep to keep two x–y layers of the
/// two z-shifted operand arrays per thread.
pub fn layer_condition_bytes(block_x: usize, block_y: usize, threads: usize) -> u64 {
    (threads * 2 * 2 * block_x * block_y * 16) as u64
}

/// Bandwidth-bound throughput limit in MLUP/s.
pub fn predict_throughput(profile: &MachineProfile, balance: f64) -> f64 {
    profile.bandwidth_gbs * 1e9 / balance / 1e6
}

/// Flops per byte for a given code balance.
pub fn arithmetic_intensity(balance: f64) -> f64 {
    FLOPS_PER_LUP as f64 / balance
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anchor_values() {
        assert_eq!(code_balance(Variant::Naive), 1344.0);
        assert_eq!(code_balance(Variant::Spatial), 1216.0);
        assert_eq!(code_balance(Variant::Diamond { dw: 8 }), 211.0);
        assert_eq!(code_balance(Variant::Diamond { dw: 4 }), 428.0);
        assert_eq!(code_balance(Variant::Diamond { dw: 16 }), 104.75);
        assert_eq!(code_balance(Variant::Naive) - code_balance(Variant::Spatial), 128.0);
        assert_eq!(FLOPS_PER_LUP, 248);
    }

    #[test]
    fn kernel_traffic_agrees_with_closed_form() {
        assert_eq!(crate::kernels::code_balance_from_kernels(false) as f64, code_balance(Variant::Naive));
        assert_eq!(crate::kernels::code_balance_from_kernels(true) as f64, code_balance(Variant::Spatial));
    }

    #[test]
    fn cache_block_examples() {
        for nx in [1, 8, 480] {
            assert_eq!(cache_block_bytes(nx, 4, 4), 14912 * nx as u64);
        }
        assert_eq!(wavefront_width(4, 4), 7);
        assert_eq!(cache_block_bytes(480, 4, 6), 9_799_680);
        assert_eq!(aggregate_cache_bytes(480, 4, 6, 3), 3 * 9_799_680);
        assert!((aggregate_cache_bytes(480, 4, 6, 3) as f64 / MIB - 28.04).abs() < 0.01);
        assert_eq!(cache_block_bytes(480, 8, 1), 11_304_960);
        assert!((aggregate_cache_bytes(480, 8, 1, 2) as f64 / MIB - 21.56).abs() < 0.01);
    }

    #[test]
    fn throughput_examples() {
        let p = MachineProfile { bandwidth_gbs: 50.0, ..Default::default() };
        assert!((predict_throughput(&p, 1216.0) - 41.1).abs() < 0.05);
        assert!((predict_throughput(&p, 1344.0) - 37.2).abs() < 0.05);
        for b in [100.0, 211.0, 1216.0] {
            assert_eq!(predict_throughput(&p, b / 2.0), 2.0 * predict_throughput(&p, b));
        }
    }

    #[test]
    fn intensities() {
        assert_eq!(format!("{:.2}", arithmetic_intensity(1344.0)), "0.18");
        assert_eq!(format!("{:.2}", arithmetic_intensity(1216.0)), "0.20");
    }

    #[test]
    fn monotonicity() {
        let mut prev = f64::INFINITY;
        for dw in (4..=64).step_by(4) {
            let b = diamond_code_balance(dw);
            assert!(b < prev);
            prev = b;
        }
        for nx in [8, 16, 32] {
            for dw in [4, 8, 12] {
                for bz in [1, 2, 4] {
                    let c = cache_block_bytes(nx, dw, bz);
                    assert!(cache_block_bytes(nx + 8, dw, bz) > c);
                    assert!(cache_block_bytes(nx, dw + 4, bz) > c);
                    assert!(cache_block_bytes(nx, dw, bz + 1) > c);
                }
            }
        }
    }

    #[test]
    fn profile_validation() {
        assert!(MachineProfile::default().validate().is_ok());
        assert!(MachineProfile { usable_fraction: 0.0, ..Default::default() }.validate().is_err());
        assert!(MachineProfile { bandwidth_gbs: -1.0, ..Default::default() }.validate().is_err());
    }
}
