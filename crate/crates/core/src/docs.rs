//! Generated model tables for `docs/model_tables.md`.

use std::fmt::Write;

use crate::models::{self, MachineProfile, Variant, FLOPS_PER_LUP};

pub const TABLE_DW: [usize; 4] = [4, 8, 12, 16];
pub const TABLE_BZ: [usize; 3] = [1, 6, 9];

/// Markdown tables of every closed-form model, computed from [`crate::models`].
pub fn generate_model_tables() -> String {
    let p = MachineProfile::default();
    let mut s = String::new();
    let w = &mut s;
    let _ = writeln!(w, "# Model tables\n");
    let _ = writeln!(w, "Generated by `thiim model --tables`; do not edit by hand.\n");
    let _ = writeln!(
        w,
        "Machine profile: {:.0} MiB cache, usable fraction {}, {} GB/s. {} flops per lattice update.\n",
        p.cache_bytes as f64 / models::MIB,
        p.usable_fraction,
        p.bandwidth_gbs,
        FLOPS_PER_LUP
    );

    let _ = writeln!(w, "## Streaming engines\n");
    let _ = writeln!(w, "| engine | bytes/LUP | flops/byte | predicted MLUP/s |");
    let _ = writeln!(w, "|---|---:|---:|---:|");
    for (name, v) in [("naive", Variant::Naive), ("spatial", Variant::Spatial)] {
        let b = models::code_balance(v);
        let _ = writeln!(
            w,
            "| {name} | {b} | {:.2} | {:.1} |",
            models::arithmetic_intensity(b),
            models::predict_throughput(&p, b)
        );
    }

    let _ = writeln!(w, "\n## Diamond code balance\n");
    let _ = writeln!(w, "| dw | bytes/LUP | flops/byte | predicted MLUP/s |");
    let _ = writeln!(w, "|---:|---:|---:|---:|");
    for dw in TABLE_DW {
        let b = models::code_balance(Variant::Diamond { dw });
        let _ = writeln!(
            w,
            "| {dw} | {b} | {:.2} | {:.1} |",
            models::arithmetic_intensity(b),
            models::predict_throughput(&p, b)
        );
    }

    let _ = writeln!(w, "\n## Cache block size per tile\n");
    let _ = writeln!(w, "Bytes per x-cell (multiply by nx); `ww = dw + bz - 1` in parentheses.\n");
    let _ = write!(w, "| dw |");
    for bz in TABLE_BZ {
        let _ = write!(w, " bz = {bz} |");
    }
    let _ = writeln!(w, "\n|---:|{}", "---:|".repeat(TABLE_BZ.len()));
    for dw in TABLE_DW {
        let _ = write!(w, "| {dw} |");
        for bz in TABLE_BZ {
            let _ = write!(w, " {} ({}) |", models::cache_block_bytes(1, dw, bz), models::wavefront_width(dw, bz));
        }
        let _ = writeln!(w);
    }
    let _ = writeln!(w, "\nReference cell: dw = 4, bz = 4 gives {} bytes per x-cell.", models::cache_block_bytes(1, 4, 4));

    let _ = writeln!(w, "\n## Worked cache budgets (nx = 480)\n");
    let _ = writeln!(w, "| dw | bz | groups | bytes | MiB | fits {:.1} MiB |", p.usable_cache_bytes() / models::MIB);
    let _ = writeln!(w, "|---:|---:|---:|---:|---:|---|");
    for (dw, bz, g) in [(4, 6, 3), (8, 1, 2)] {
        let b = models::aggregate_cache_bytes(480, dw, bz, g);
        let fits = if b as f64 <= p.usable_cache_bytes() { "yes" } else { "no" };
        let _ = writeln!(w, "| {dw} | {bz} | {g} | {b} | {:.2} | {fits} |", b as f64 / models::MIB);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anchors_present() {
        let t = generate_model_tables();
        for needle in ["| naive | 1344 |", "| spatial | 1216 |", "| 41.1 |", "| 4 | 428 |", "| 16 | 104.75 |", "14912 bytes"] {
            assert!(t.contains(needle), "missing {needle}");
        }
        assert!(t.contains("| 8 | 211 |"));
    }

    #[test]
    fn committed_tables_are_current() {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../docs/model_tables.md");
        let on_disk = std::fs::read_to_string(path).expect("docs/model_tables.md missing");
        assert_eq!(on_disk, generate_model_tables(), "regenerate with `thiim model --tables > docs/model_tables.md`");
    }
}
