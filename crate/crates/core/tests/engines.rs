use thiim_core::coeffs::{build_benchmark_problem, SchemeParams};
use thiim_core::mwd::{build_tiling_plan, execute_mwd, ThreadGroupShape};
use thiim_core::verify::{check_schedule_trace, compare_states};
use thiim_core::{run_naive, run_spatial_blocked, GridDims, ProblemState, RunOptions};

fn problem(dims: GridDims, seed: u64) -> ProblemState {
    let mut s = build_benchmark_problem(dims, &SchemeParams::default()).unwrap();
    s.randomize_fields(seed);
    s
}

fn mwd_matches_naive(dims: GridDims, steps: usize, dw: usize, bz: usize, shape: ThreadGroupShape, threads: usize) {
    let plan = build_tiling_plan(dims, steps, dw, bz).unwrap();
    let mut oracle = problem(dims, 11);
    let mut tiled = oracle.clone();
    run_naive(&mut oracle, plan.steps, &RunOptions::default()).unwrap();
    let out = execute_mwd(&mut tiled, &plan, shape, threads, true).unwrap();
    let cmp = compare_states(&oracle, &tiled).unwrap();
    assert!(cmp.is_bitwise_equal(), "{dims} dw={dw} bz={bz} {shape}/{threads}: {cmp:?}");
    assert!(tiled.ghosts_are_zero());
    let san = out.sanitizer.unwrap();
    assert_eq!((san.max_multiplicity, san.missing), (1, 0));
    let check = check_schedule_trace(&plan, &out.trace).unwrap();
    assert!(check.is_clean(), "{:?}", &check.violations[..check.violations.len().min(5)]);
}

#[test]
fn one_wd_matches_naive() {
    for (dw, bz) in [(4, 1), (4, 2), (4, 4), (8, 1), (8, 3)] {
        mwd_matches_naive(GridDims::new(8, 16, 12).unwrap(), 5, dw, bz, ThreadGroupShape::SERIAL, 1);
    }
}

#[test]
fn multithreaded_shapes_match_naive() {
    let dims = GridDims::new(20, 16, 10).unwrap();
    for (shape, threads) in [
        (ThreadGroupShape::new(1, 1, 1), 3),
        (ThreadGroupShape::new(2, 1, 1), 4),
        (ThreadGroupShape::new(1, 2, 1), 2),
        (ThreadGroupShape::new(1, 1, 2), 4),
        (ThreadGroupShape::new(1, 1, 3), 3),
        (ThreadGroupShape::new(1, 1, 6), 6),
        (ThreadGroupShape::new(2, 2, 3), 12),
    ] {
        mwd_matches_naive(dims, 6, 4, 2, shape, threads);
    }
}

#[test]
fn threaded_baselines_match_serial() {
    let dims = GridDims::new(12, 10, 9).unwrap();
    let mut serial = problem(dims, 5);
    let init = serial.clone();
    run_naive(&mut serial, 3, &RunOptions::default()).unwrap();
    for threads in [2, 3, 4] {
        let mut s = init.clone();
        run_naive(&mut s, 3, &RunOptions::with_threads(threads)).unwrap();
        assert!(compare_states(&serial, &s).unwrap().is_bitwise_equal());
        for (by, bx) in [(1, 1), (3, 5), (10, 12), (64, 64)] {
            let mut s = init.clone();
            run_spatial_blocked(&mut s, 3, by, bx, &RunOptions::with_threads(threads)).unwrap();
            assert!(compare_states(&serial, &s).unwrap().is_bitwise_equal());
        }
    }
}
