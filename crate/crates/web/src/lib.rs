//! Browser bindings: model curves, a tiling-plan diagram and a small field
//! simulation advanced by the single-threaded diamond engine.
//!
//! Everything crosses the boundary as JSON text or flat arrays so the page
//! needs no generated TypeScript glue beyond what wasm-bindgen emits.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use thiim_core::coeffs::{build_benchmark_problem, source_plane, SchemeParams};
use thiim_core::field::{Component, ALL_COMPONENTS};
use thiim_core::models::{self, MachineProfile, Variant};
use thiim_core::mwd::{build_tiling_plan, execute_mwd, ThreadGroupShape, TileQueue, TilingPlan};
use thiim_core::verify::compare_states;
use thiim_core::{run_naive, GridDims, ProblemState, RunOptions};

fn js_err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

#[derive(Serialize)]
struct CurvePoint {
    dw: usize,
    balance: f64,
    predicted_mlups: f64,
    /// Per-tile cache block in MiB for each entry of `bz_values`.
    block_mib: Vec<f64>,
    /// Largest group count whose aggregate still fits, per `bz`.
    max_groups: Vec<usize>,
}

#[derive(Serialize)]
struct Curves {
    nx: usize,
    bz_values: Vec<usize>,
    usable_mib: f64,
    naive: f64,
    spatial: f64,
    naive_mlups: f64,
    spatial_mlups: f64,
    points: Vec<CurvePoint>,
}

fn curves(nx: usize, bandwidth_gbs: f64, cache_mib: f64, usable_fraction: f64) -> thiim_core::Result<Curves> {
    let profile = MachineProfile {
        cache_bytes: (cache_mib * models::MIB) as u64,
        usable_fraction,
        bandwidth_gbs,
    };
    profile.validate()?;
    if nx == 0 {
        return Err(thiim_core::Error::Config("nx must be positive".into()));
    }
    let bz_values = vec![1, 6, 9];
    let budget = profile.usable_cache_bytes();
    let points = (4..=32)
        .step_by(4)
        .map(|dw| {
            let balance = models::code_balance(Variant::Diamond { dw });
            let blocks: Vec<u64> = bz_values.iter().map(|&bz| models::cache_block_bytes(nx, dw, bz)).collect();
            CurvePoint {
                dw,
                balance,
                predicted_mlups: models::predict_throughput(&profile, balance),
                block_mib: blocks.iter().map(|&b| b as f64 / models::MIB).collect(),
                max_groups: blocks.iter().map(|&b| (budget / b as f64).floor() as usize).collect(),
            }
        })
        .collect();
    let (naive, spatial) = (models::code_balance(Variant::Naive), models::code_balance(Variant::Spatial));
    Ok(Curves {
        nx,
        bz_values,
        usable_mib: budget / models::MIB,
        naive,
        spatial,
        naive_mlups: models::predict_throughput(&profile, naive),
        spatial_mlups: models::predict_throughput(&profile, spatial),
        points,
    })
}

/// Code balance, throughput and cache-block curves over diamond widths 4..32, as JSON.
#[wasm_bindgen(js_name = modelCurves)]
pub fn model_curves(nx: usize, bandwidth_gbs: f64, cache_mib: f64, usable_fraction: f64) -> Result<String, JsValue> {
    let c = curves(nx, bandwidth_gbs, cache_mib, usable_fraction).map_err(js_err)?;
    serde_json::to_string(&c).map_err(js_err)
}

#[derive(Serialize)]
struct PlanTile {
    id: usize,
    slab: i64,
    /// Position in a one-group execution order.
    order: usize,
    /// (level, y0, y1) per level.
    levels: Vec<(usize, usize, usize)>,
    deps: Vec<usize>,
}

#[derive(Serialize)]
struct PlanView {
    ny: usize,
    dw: usize,
    bz: usize,
    steps: usize,
    levels: usize,
    tiles: Vec<PlanTile>,
}

fn plan_view(plan: &TilingPlan) -> thiim_core::Result<PlanView> {
    let queue = TileQueue::new(plan, 1);
    let mut order = vec![0; plan.num_tiles()];
    let mut n = 0;
    while let Some(k) = queue.pop(0)? {
        order[k] = n;
        n += 1;
        queue.complete(k);
    }
    let tiles = plan
        .tiles
        .iter()
        .map(|t| PlanTile {
            id: t.id,
            slab: t.slab,
            order: order[t.id],
            levels: t.levels.iter().map(|l| (l.level, l.y0, l.y1)).collect(),
            deps: plan.deps[t.id].clone(),
        })
        .collect();
    Ok(PlanView { ny: plan.dims.ny, dw: plan.dw, bz: plan.bz, steps: plan.steps, levels: 2 * plan.steps, tiles })
}

/// Diamond tiles of the (y, time) plane with dependencies and a legal
/// execution order, as JSON.
#[wasm_bindgen(js_name = tilingPlan)]
pub fn tiling_plan(ny: usize, steps: usize, dw: usize, bz: usize) -> Result<String, JsValue> {
    let dims = GridDims::new(8, ny, 8).map_err(js_err)?;
    let plan = build_tiling_plan(dims, steps, dw, bz).map_err(js_err)?;
    serde_json::to_string(&plan_view(&plan).map_err(js_err)?).map_err(js_err)
}

/// A small problem advanced by the single-threaded diamond engine, with a
/// naive shadow copy for a bitwise check after every advance.
#[wasm_bindgen]
pub struct Simulation {
    state: ProblemState,
    shadow: ProblemState,
    plan: TilingPlan,
    steps_done: usize,
    last_diff: f64,
    last_equal: bool,
}

#[wasm_bindgen]
impl Simulation {
    /// `n`³ grid; each advance runs `passes` diamond passes of `dw / 2` steps.
    #[wasm_bindgen(constructor)]
    pub fn new(n: usize, dw: usize, bz: usize) -> Result<Simulation, JsValue> {
        let dims = GridDims::cube(n).map_err(js_err)?;
        let state = build_benchmark_problem(dims, &SchemeParams::default()).map_err(js_err)?;
        let plan = build_tiling_plan(dims, dw / 2, dw, bz).map_err(js_err)?;
        Ok(Simulation { shadow: state.clone(), state, plan, steps_done: 0, last_diff: 0.0, last_equal: true })
    }

    pub fn advance(&mut self, passes: usize) -> Result<(), JsValue> {
        for _ in 0..passes {
            execute_mwd(&mut self.state, &self.plan, ThreadGroupShape::SERIAL, 1, false).map_err(js_err)?;
            run_naive(&mut self.shadow, self.plan.steps, &RunOptions::default()).map_err(js_err)?;
            self.steps_done += self.plan.steps;
        }
        let cmp = compare_states(&self.shadow, &self.state).map_err(js_err)?;
        self.last_diff = cmp.max_abs_diff;
        self.last_equal = cmp.is_bitwise_equal();
        Ok(())
    }

    #[wasm_bindgen(getter)]
    pub fn steps(&self) -> usize {
        self.steps_done
    }

    #[wasm_bindgen(getter)]
    pub fn n(&self) -> usize {
        self.state.dims.nx
    }

    /// Whether the diamond engine matched the naive shadow bit for bit at the last advance.
    #[wasm_bindgen(getter, js_name = bitwiseEqual)]
    pub fn bitwise_equal(&self) -> bool {
        self.last_equal
    }

    #[wasm_bindgen(getter, js_name = maxAbsDiff)]
    pub fn max_abs_diff(&self) -> f64 {
        self.last_diff
    }

    /// Magnitude of component `comp` (0–11) on the y–z plane through the
    /// middle of x, row-major with z as rows.
    #[wasm_bindgen(js_name = sliceYz)]
    pub fn slice_yz(&self, comp: usize) -> Result<Vec<f32>, JsValue> {
        let c = Component::from_index(comp).ok_or_else(|| js_err(format!("component {comp} out of range")))?;
        Ok(slice(&self.state, c))
    }

    /// z index of the source plane.
    #[wasm_bindgen(getter, js_name = sourcePlane)]
    pub fn source_plane(&self) -> usize {
        source_plane(&self.state.dims)
    }
}

fn slice(state: &ProblemState, c: Component) -> Vec<f32> {
    let d = state.dims;
    let f = state.field(c);
    let x = d.nx / 2;
    let mut out = Vec::with_capacity(d.ny * d.nz);
    for z in 0..d.nz {
        for y in 0..d.ny {
            out.push(f[d.index(x, y, z)].norm() as f32);
        }
    }
    out
}

/// Component names in index order, comma separated.
#[wasm_bindgen(js_name = componentNames)]
pub fn component_names() -> String {
    ALL_COMPONENTS.iter().map(|c| c.name()).collect::<Vec<_>>().join(",")
}
