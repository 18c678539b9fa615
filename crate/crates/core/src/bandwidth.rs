//! Streaming triad micro-benchmark (`a ← b + s·c`).

use serde::{Deserialize, Serialize};

use crate::report::Stopwatch;

pub const SWEEPS: usize = 5;
/// Used when the last-level cache size cannot be read from sysfs.
pub const FALLBACK_CACHE_BYTES: u64 = 32 * 1024 * 1024;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandwidthResult {
    /// Best sweep, in GB/s (1e9 bytes), counting 24 bytes per element.
    pub gbs: f64,
    pub sweeps_gbs: Vec<f64>,
    pub threads: usize,
    pub bytes_per_array: usize,
}

/// Largest cache reported under `/sys/devices/system/cpu/cpu0/cache`.
pub fn last_level_cache_bytes() -> Option<u64> {
    let dir = std::fs::read_dir("/sys/devices/system/cpu/cpu0/cache").ok()?;
    dir.filter_map(|e| std::fs::read_to_string(e.ok()?.path().join("size")).ok())
        .filter_map(|s| parse_size(s.trim()))
        .max()
}

fn parse_size(s: &str) -> Option<u64> {
    let (num, mult) = match s.chars().last()? {
        'K' | 'k' => (&s[..s.len() - 1], 1024),
        'M' | 'm' => (&s[..s.len() - 1], 1024 * 1024),
        'G' | 'g' => (&s[..s.len() - 1], 1024 * 1024 * 1024),
        _ => (s, 1),
    };
    num.parse::<u64>().ok().map(|n| n * mult)
}

/// Array size that defeats the cache: four times its capacity.
pub fn default_array_bytes() -> usize {
    (4 * last_level_cache_bytes().unwrap_or(FALLBACK_CACHE_BYTES)) as usize
}

/// Best of [`SWEEPS`] triad sweeps over three arrays of `bytes_per_array`
/// bytes each, split statically across `threads` workers.
pub fn measure_bandwidth(threads: usize, bytes_per_array: usize) -> BandwidthResult {
    let threads = threads.max(1);
    let n = (bytes_per_array / 8).max(threads * 64);
    let (mut a, b, c) = (vec![0.0f64; n], vec![1.0f64; n], vec![2.0f64; n]);
    let s = 3.0;
    let chunk = n.div_ceil(threads);
    let triad = |a: &mut [f64], b: &[f64], c: &[f64]| {
        for ((a, b), c) in a.iter_mut().zip(b).zip(c) {
            *a = b + s * c;
        }
    };
    let mut sweeps = Vec::with_capacity(SWEEPS);
    for _ in 0..SWEEPS {
        let clock = Stopwatch::start();
        if threads == 1 {
            triad(&mut a, &b, &c);
        } else {
            std::thread::scope(|sc| {
                for ((a, b), c) in a.chunks_mut(chunk).zip(b.chunks(chunk)).zip(c.chunks(chunk)) {
                    sc.spawn(move || triad(a, b, c));
                }
            });
        }
        let secs = clock.seconds();
        std::hint::black_box(&a);
        if secs > 0.0 {
            sweeps.push(24.0 * n as f64 / secs / 1e9);
        }
    }
    let gbs = sweeps.iter().copied().fold(0.0, f64::max);
    BandwidthResult { gbs, sweeps_gbs: sweeps, threads, bytes_per_array: n * 8 }
}
