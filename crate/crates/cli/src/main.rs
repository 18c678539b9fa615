use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use thiim_core::bandwidth;
use thiim_core::coeffs::{build_benchmark_problem, build_problem_from_materials, read_material_map, SchemeParams};
use thiim_core::config::BenchConfig;
use thiim_core::docs::generate_model_tables;
use thiim_core::models::{self, MachineProfile, Variant};
use thiim_core::mwd::{build_tiling_plan, execute_mwd, write_trace};
use thiim_core::reference::choose_spatial_blocks;
use thiim_core::report::Verification;
use thiim_core::tuner::{self, TuneOptions, TunedConfig};
use thiim_core::verify::{check_schedule_trace, compare_states};
use thiim_core::{
    emit_report, run_mwd, run_naive, run_spatial_blocked, EngineKind, Error, GridDims, ProblemState, RunOptions,
    RunReport, ThreadGroupShape,
};

/// Grids at or below this many interior cells get `--check` by default.
const AUTO_CHECK_CELLS: usize = 96 * 96 * 96;

#[derive(Parser)]
#[command(name = "thiim", version, about = "Split-field Maxwell stencil benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one engine configuration
    Run(RunArgs),
    /// Time cache-feasible diamond configurations and pick the fastest
    Tune(TuneArgs),
    /// Compare naive, spatial and wavefront-diamond results bitwise
    Verify(VerifyArgs),
    /// Print traffic, cache and throughput model values
    Model(ModelArgs),
    /// Thread-count, grid-size or group-size sweeps
    Sweep(SweepArgs),
    /// Measure streaming memory bandwidth
    Bandwidth(BandwidthArgs),
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Flat key = value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Grid size: N or NXxNYxNZ
    #[arg(long)]
    grid: Option<GridDims>,
    #[arg(long, env = "THIIM_THREADS")]
    threads: Option<usize>,
    /// Last-level cache size in bytes
    #[arg(long)]
    cache_bytes: Option<u64>,
    #[arg(long)]
    usable_fraction: Option<f64>,
    /// Memory bandwidth in GB/s used for predictions
    #[arg(long)]
    bandwidth_gbs: Option<f64>,
    /// Directory receiving runs.jsonl and runs.csv
    #[arg(long, env = "THIIM_REPORT_DIR")]
    report_dir: Option<PathBuf>,
}

impl Common {
    fn config(&self, extra: BenchConfig) -> Result<BenchConfig, Error> {
        let file = match &self.config {
            Some(p) => BenchConfig::load(p)?,
            None => BenchConfig::default(),
        };
        let flags = BenchConfig {
            grid: self.grid,
            threads: self.threads,
            cache_bytes: self.cache_bytes,
            usable_fraction: self.usable_fraction,
            bandwidth_gbs: self.bandwidth_gbs,
            ..extra
        };
        Ok(file.merged(&flags))
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    engine: Option<EngineKind>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    dw: Option<usize>,
    #[arg(long)]
    bz: Option<usize>,
    /// Thread-group shape tgz,tgx,tgc
    #[arg(long)]
    shape: Option<ThreadGroupShape>,
    #[arg(long)]
    block_y: Option<usize>,
    #[arg(long)]
    block_x: Option<usize>,
    /// Randomise the initial fields with this seed
    #[arg(long)]
    seed: Option<u64>,
    /// Voxel material map (eps_re, eps_im, mu, sigma, sigma_star per cell)
    #[arg(long)]
    materials: Option<PathBuf>,
    /// Rerun the naive engine and require bitwise equality
    #[arg(long, overrides_with = "no_check")]
    check: bool,
    #[arg(long)]
    no_check: bool,
    /// Accept 1e-13 relative differences in --check (diagnostics only)
    #[arg(long)]
    relaxed: bool,
    /// Write the tile schedule of a diamond run as JSON lines
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Count every update and replay the schedule (small grids)
    #[arg(long)]
    sanitize: bool,
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 8)]
    trial_steps: usize,
    #[arg(long, default_value_t = 0.2)]
    min_trial_seconds: f64,
    /// Time only the first N candidates in model order
    #[arg(long, default_value_t = 24)]
    max_candidates: usize,
    /// Write the full trial table as CSV
    #[arg(long)]
    table: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, default_value_t = 4)]
    dw: usize,
    #[arg(long, default_value_t = 2)]
    bz: usize,
    #[arg(long)]
    shape: Option<ThreadGroupShape>,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    relaxed: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelVariant {
    Naive,
    Spatial,
    Diamond,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, value_enum)]
    variant: Option<ModelVariant>,
    #[arg(long, default_value_t = 8)]
    dw: usize,
    #[arg(long)]
    bz: Option<usize>,
    #[arg(long, default_value_t = 480)]
    nx: usize,
    #[arg(long, default_value_t = 1)]
    groups: usize,
    #[arg(long, default_value_t = 50.0)]
    bandwidth_gbs: f64,
    /// Print the generated markdown tables
    #[arg(long)]
    tables: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepKind {
    Threads,
    Grid,
    Group,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(value_enum)]
    kind: SweepKind,
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 8)]
    steps: usize,
    #[arg(long, default_value_t = 64)]
    from: usize,
    #[arg(long, default_value_t = 512)]
    to: usize,
    #[arg(long, default_value_t = 64)]
    step: usize,
    #[arg(long, default_value_t = 0.1)]
    min_trial_seconds: f64,
    #[arg(long, default_value_t = 8)]
    max_candidates: usize,
}

#[derive(Args)]
struct BandwidthArgs {
    #[arg(long, env = "THIIM_THREADS")]
    threads: Option<usize>,
    /// Bytes per array in MiB (default: four times the last-level cache)
    #[arg(long)]
    array_mib: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Tune(a) => cmd_tune(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Model(a) => cmd_model(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Bandwidth(a) => cmd_bandwidth(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Mismatch(_) | Error::Deadlock { .. } | Error::TruncatedTrace { .. } => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn available_threads() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn grid_of(cfg: &BenchConfig, default: usize) -> Result<GridDims, Error> {
    cfg.grid.map(Ok).unwrap_or_else(|| GridDims::cube(default))
}

fn build_state(dims: GridDims, materials: Option<&Path>, seed: Option<u64>) -> Result<ProblemState, Error> {
    let sp = SchemeParams::default();
    let mut state = match materials {
        Some(p) => build_problem_from_materials(dims, &sp, &read_material_map(p, &dims)?)?,
        None => build_benchmark_problem(dims, &sp)?,
    };
    if let Some(seed) = seed {
        state.randomize_fields(seed);
    }
    Ok(state)
}

fn emit(reports: &[RunReport], dir: Option<&Path>) -> Result<(), Error> {
    for r in reports {
        println!("{}", serde_json::to_string(r)?);
    }
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir)?;
        emit_report(reports, dir.join("runs.jsonl"), dir.join("runs.csv"))?;
    }
    Ok(())
}

/// Default shape: one single-thread group per worker.
fn default_shape(_threads: usize) -> ThreadGroupShape {
    ThreadGroupShape::SERIAL
}

struct EngineSpec {
    engine: EngineKind,
    steps: usize,
    dw: usize,
    bz: usize,
    shape: ThreadGroupShape,
    blocks: Option<(usize, usize)>,
}

fn execute(state: &mut ProblemState, spec: &EngineSpec, opts: &RunOptions) -> Result<RunReport, Error> {
    match spec.engine {
        EngineKind::Naive => run_naive(state, spec.steps, opts),
        EngineKind::Spatial => {
            let (by, bx) = spec.blocks.unwrap_or_else(|| choose_spatial_blocks(&state.dims, opts.threads, &opts.profile));
            run_spatial_blocked(state, spec.steps, by, bx, opts)
        }
        EngineKind::OneWd | EngineKind::Mwd => {
            let plan = build_tiling_plan(state.dims, spec.steps, spec.dw, spec.bz)?;
            run_mwd(state, &plan, spec.shape, opts)
        }
    }
}

fn cmd_run(a: RunArgs) -> Result<ExitCode, Error> {
    let cfg = a.common.config(BenchConfig {
        steps: a.steps,
        engine: a.engine,
        dw: a.dw,
        bz: a.bz,
        shape: a.shape,
        seed: a.seed,
        ..Default::default()
    })?;
    let dims = grid_of(&cfg, 64)?;
    let engine = cfg.engine.unwrap_or(EngineKind::Mwd);
    let threads = if engine == EngineKind::OneWd { 1 } else { cfg.threads.unwrap_or_else(available_threads) };
    let opts = RunOptions { threads, profile: cfg.profile(MachineProfile::default())? };
    let spec = EngineSpec {
        engine,
        steps: cfg.steps.unwrap_or(8),
        dw: cfg.dw.unwrap_or(4),
        bz: cfg.bz.unwrap_or(2),
        shape: cfg.shape.unwrap_or_else(|| default_shape(threads)),
        blocks: match (a.block_y, a.block_x) {
            (None, None) => None,
            (y, x) => Some((y.unwrap_or(dims.ny), x.unwrap_or(dims.nx))),
        },
    };

    let initial = build_state(dims, a.materials.as_deref(), cfg.seed)?;
    let mut state = initial.clone();
    let mut report = if matches!(engine, EngineKind::OneWd | EngineKind::Mwd) && (a.trace.is_some() || a.sanitize) {
        let plan = build_tiling_plan(dims, spec.steps, spec.dw, spec.bz)?;
        let out = execute_mwd(&mut state, &plan, spec.shape, threads, a.sanitize)?;
        if let Some(path) = &a.trace {
            write_trace(&out.trace, std::io::BufWriter::new(std::fs::File::create(path)?))?;
        }
        if let Some(s) = out.sanitizer {
            let check = check_schedule_trace(&plan, &out.trace)?;
            eprintln!("sanitizer: {}", serde_json::to_string(&s)?);
            if s.max_multiplicity != 1 || s.missing != 0 || !check.is_clean() {
                return Err(Error::Mismatch(format!(
                    "schedule violations: {} (first: {:?})",
                    check.violation_count,
                    check.violations.first()
                )));
            }
        }
        // time a clean rerun for the report
        state = initial.clone();
        run_mwd(&mut state, &plan, spec.shape, &opts)?
    } else {
        execute(&mut state, &spec, &opts)?
    };

    let check = (a.check || dims.interior_cells() <= AUTO_CHECK_CELLS) && !a.no_check;
    let mut code = ExitCode::SUCCESS;
    if check && report.steps > 0 {
        let mut oracle = initial;
        run_naive(&mut oracle, report.steps, &RunOptions { threads, ..opts })?;
        let cmp = compare_states(&oracle, &state)?;
        report.verification = if cmp.passes(a.relaxed) {
            Verification::Passed
        } else {
            code = ExitCode::from(1);
            eprintln!("verification failed: {cmp:?}");
            Verification::Failed { max_abs_diff: cmp.max_abs_diff }
        };
    }
    emit(&[report], a.common.report_dir.as_deref())?;
    Ok(code)
}

fn cmd_tune(a: TuneArgs) -> Result<ExitCode, Error> {
    let cfg = a.common.config(BenchConfig::default())?;
    let dims = grid_of(&cfg, 64)?;
    let threads = cfg.threads.unwrap_or_else(available_threads);
    let profile = cfg.profile(MachineProfile::default())?;
    let template = build_state(dims, None, None)?;
    let candidates = tuner::enumerate_candidates(&dims, threads, &profile)?;
    let opts = TuneOptions {
        threads,
        profile,
        min_trial_seconds: a.min_trial_seconds,
        max_candidates: Some(a.max_candidates),
    };
    let result = tuner::tune(&template, a.trial_steps, &candidates, &opts)?;
    let csv = tuner::trial_table_csv(&result.table)?;
    match &a.table {
        Some(p) => std::fs::write(p, csv)?,
        None => eprint!("{csv}"),
    }
    println!("{}", serde_json::to_string(&result.winner)?);
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(a: VerifyArgs) -> Result<ExitCode, Error> {
    let cfg = a.common.config(BenchConfig::default())?;
    let dims = grid_of(&cfg, 48)?;
    let threads = cfg.threads.unwrap_or(1);
    let shape = a.shape.unwrap_or_else(|| default_shape(threads));
    let opts = RunOptions { threads, profile: cfg.profile(MachineProfile::default())? };
    let plan = build_tiling_plan(dims, a.steps.unwrap_or(2 * a.dw), a.dw, a.bz)?;

    let initial = build_state(dims, None, Some(a.seed))?;
    let mut naive = initial.clone();
    run_naive(&mut naive, plan.steps, &RunOptions::default())?;

    let mut spatial = initial.clone();
    let (by, bx) = choose_spatial_blocks(&dims, threads, &opts.profile);
    run_spatial_blocked(&mut spatial, plan.steps, by, bx, &opts)?;

    let mut tiled = initial;
    let out = execute_mwd(&mut tiled, &plan, shape, threads, false)?;
    let trace = check_schedule_trace(&plan, &out.trace)?;

    let s = compare_states(&naive, &spatial)?;
    let m = compare_states(&naive, &tiled)?;
    println!(
        "{}",
        serde_json::json!({
            "grid": dims.to_string(),
            "steps": plan.steps,
            "threads": threads,
            "dw": plan.dw,
            "bz": plan.bz,
            "shape": shape.to_string(),
            "spatial_vs_naive": s,
            "mwd_vs_naive": m,
            "trace_violations": trace.violation_count,
        })
    );
    let ok = s.passes(a.relaxed) && m.passes(a.relaxed) && trace.is_clean();
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_model(a: ModelArgs) -> Result<ExitCode, Error> {
    if a.tables {
        print!("{}", generate_model_tables());
        return Ok(ExitCode::SUCCESS);
    }
    let profile = MachineProfile { bandwidth_gbs: a.bandwidth_gbs, ..Default::default() };
    profile.validate()?;
    let variants: Vec<(String, Variant)> = match a.variant {
        Some(ModelVariant::Naive) => vec![("naive".into(), Variant::Naive)],
        Some(ModelVariant::Spatial) => vec![("spatial".into(), Variant::Spatial)],
        Some(ModelVariant::Diamond) => vec![(format!("diamond dw={}", a.dw), Variant::Diamond { dw: a.dw })],
        None => vec![
            ("naive".into(), Variant::Naive),
            ("spatial".into(), Variant::Spatial),
            (format!("diamond dw={}", a.dw), Variant::Diamond { dw: a.dw }),
        ],
    };
    if let Variant::Diamond { dw } = variants.last().unwrap().1 {
        if dw < 4 {
            return Err(Error::Config(format!("diamond width {dw} must be at least 4")));
        }
    }
    for (name, v) in variants {
        let b = models::code_balance(v);
        println!(
            "{name}: {b} B/LUP, {:.2} flops/B, {:.1} MLUP/s at {} GB/s",
            models::arithmetic_intensity(b),
            models::predict_throughput(&profile, b),
            profile.bandwidth_gbs
        );
    }
    if let Some(bz) = a.bz {
        if bz == 0 {
            return Err(Error::Config("bz must be at least 1".into()));
        }
        let tile = models::cache_block_bytes(a.nx, a.dw, bz);
        let total = models::aggregate_cache_bytes(a.nx, a.dw, bz, a.groups);
        println!(
            "cache block nx={} dw={} bz={} ww={}: {tile} B per tile, {total} B for {} groups ({:.2} MiB)",
            a.nx,
            a.dw,
            bz,
            models::wavefront_width(a.dw, bz),
            a.groups,
            total as f64 / models::MIB
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(a: SweepArgs) -> Result<ExitCode, Error> {
    let cfg = a.common.config(BenchConfig::default())?;
    let profile = cfg.profile(MachineProfile::default())?;
    let max_threads = cfg.threads.unwrap_or_else(available_threads);
    let dir = a.common.report_dir.as_deref();
    let mut reports = Vec::new();
    let tune_opts = |threads| TuneOptions {
        threads,
        profile,
        min_trial_seconds: a.min_trial_seconds,
        max_candidates: Some(a.max_candidates),
    };

    match a.kind {
        SweepKind::Threads => {
            let dims = grid_of(&cfg, 128)?;
            let template = build_state(dims, None, None)?;
            for threads in 1..=max_threads {
                let opts = RunOptions { threads, profile };
                let (by, bx) = choose_spatial_blocks(&dims, threads, &profile);
                reports.push(run_spatial_blocked(&mut template.clone(), a.steps, by, bx, &opts)?);
                if let Some(r) = run_tuned(&template, a.steps, &tune_opts(threads))? {
                    reports.push(r);
                }
            }
        }
        SweepKind::Grid => {
            if a.step == 0 {
                return Err(Error::Config("--step must be positive".into()));
            }
            for n in (a.from..=a.to).step_by(a.step) {
                let dims = GridDims::cube(n)?;
                let template = build_state(dims, None, None)?;
                let opts = RunOptions { threads: max_threads, profile };
                let (by, bx) = choose_spatial_blocks(&dims, max_threads, &profile);
                reports.push(run_spatial_blocked(&mut template.clone(), a.steps, by, bx, &opts)?);
                if let Some(r) = run_tuned(&template, a.steps, &tune_opts(max_threads))? {
                    reports.push(r);
                }
            }
        }
        SweepKind::Group => {
            let dims = grid_of(&cfg, 128)?;
            let template = build_state(dims, None, None)?;
            let candidates = tuner::enumerate_candidates(&dims, max_threads, &profile)?;
            let opts = RunOptions { threads: max_threads, profile };
            for g in (1..=max_threads).filter(|g| max_threads % g == 0) {
                // the model-best feasible configuration at this group size
                if let Some(c) = candidates.iter().find(|c| c.shape.group_size() == g) {
                    let plan = build_tiling_plan(dims, a.steps, c.dw, c.bz)?;
                    reports.push(run_mwd(&mut template.clone(), &plan, c.shape, &opts)?);
                }
            }
        }
    }
    emit(&reports, dir)?;
    Ok(ExitCode::SUCCESS)
}

fn run_tuned(template: &ProblemState, steps: usize, opts: &TuneOptions) -> Result<Option<RunReport>, Error> {
    let candidates = tuner::enumerate_candidates(&template.dims, opts.threads, &opts.profile)?;
    let result = tuner::tune(template, steps, &candidates, opts)?;
    let run = RunOptions { threads: opts.threads, profile: opts.profile };
    match result.winner {
        TunedConfig::Mwd { dw, bz, shape, .. } => {
            let plan = build_tiling_plan(template.dims, steps, dw, bz)?;
            Ok(Some(run_mwd(&mut template.clone(), &plan, shape, &run)?))
        }
        TunedConfig::Spatial { .. } => Ok(None),
    }
}

fn cmd_bandwidth(a: BandwidthArgs) -> Result<ExitCode, Error> {
    let threads = a.threads.unwrap_or_else(available_threads);
    let bytes = a.array_mib.map(|m| m << 20).unwrap_or_else(bandwidth::default_array_bytes);
    let r = bandwidth::measure_bandwidth(threads, bytes);
    println!("{}", serde_json::to_string(&r)?);
    Ok(ExitCode::SUCCESS)
}
