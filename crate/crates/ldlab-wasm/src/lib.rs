//! Browser bindings: three interactive demos over the core library. Every
//! export takes plain numbers or strings and returns a JSON string so the
//! page needs no generated glue beyond wasm-bindgen's own. The functions
//! compile and run natively as well, which is how they are tested.

use ldlab::measures::{dbl_distance, dbl_to_dirac, from_path, DiscreteMeasure};
use ldlab::models::{builtin, check_multiscale, check_single, Builtin, GridSpec, NoiseSchedule};
use ldlab::sde::{simulate_single, Path, TimeGrid};
use ldlab::steering::{build_schedule, run_steered, SteeredOptions};
use serde_json::json;
use wasm_bindgen::prelude::wasm_bindgen;

/// Caps the polyline sent to the canvas; the dynamics happen on the full
/// grid either way.
const MAX_PLOT_POINTS: usize = 1500;

fn error_json(msg: impl std::fmt::Display) -> String {
    json!({ "error": msg.to_string() }).to_string()
}

fn path_json(path: &Path) -> serde_json::Value {
    let n = path.grid.n;
    let stride = (n / MAX_PLOT_POINTS).max(1);
    let mut t = Vec::new();
    let mut y = Vec::new();
    for j in (0..=n).step_by(stride) {
        t.push(path.grid.node(j));
        y.push(path.state(j)[0]);
    }
    if n % stride != 0 {
        t.push(path.grid.node(n));
        y.push(path.state(n)[0]);
    }
    json!({ "t": t, "y": y })
}

fn measure_json(m: &DiscreteMeasure) -> serde_json::Value {
    let atoms: Vec<_> = m.atoms.iter().map(|(x, w)| json!([x[0], w])).collect();
    serde_json::Value::Array(atoms)
}

/// Uncontrolled relaxation demo: one path of the one-dimensional quadratic
/// model at noise `s = eps^(1/4)`, its binned occupation measure, and the
/// flat distance of that measure to the point mass at the origin.
#[wasm_bindgen]
pub fn lln_run(eps: f64, seed: u32) -> String {
    match lln_run_inner(eps, seed) {
        Ok(s) => s,
        Err(e) => error_json(e),
    }
}

fn lln_run_inner(eps: f64, seed: u32) -> ldlab::Result<String> {
    let model = builtin("quadratic", &[])?;
    let model = match model {
        Builtin::Single(m) => m,
        Builtin::Multiscale(_) => unreachable!(),
    };
    let sched = NoiseSchedule::power(0.25)?;
    let grid = TimeGrid::covering(0.0, 1.0, eps / 10.0 * 0.999)?;
    let run = simulate_single(&model, &sched, eps, &grid, seed as u64, None)?;
    let occupation = from_path(&run.path, true)?.coarsen(0.02)?;
    let dbl = dbl_to_dirac(&occupation.measure, &[0.0])?;
    Ok(json!({
        "eps": eps,
        "s": sched.eval(eps)?,
        "steps": grid.n,
        "path": path_json(&run.path),
        "occupation": measure_json(&occupation.measure),
        "dbl_to_origin": dbl,
    })
    .to_string())
}

/// Steering demo: drive the quadratic model's occupation measure onto the
/// two-atom target `w1 delta_{x1} + (1 - w1) delta_{x2}` and report the
/// realized measure, control cost, and distance to the target.
#[wasm_bindgen]
pub fn steer_demo(eps: f64, seed: u32, x1: f64, w1: f64, x2: f64) -> String {
    match steer_demo_inner(eps, seed, x1, w1, x2) {
        Ok(s) => s,
        Err(e) => error_json(e),
    }
}

fn steer_demo_inner(eps: f64, seed: u32, x1: f64, w1: f64, x2: f64) -> ldlab::Result<String> {
    let model = match builtin("quadratic", &[])? {
        Builtin::Single(m) => m,
        Builtin::Multiscale(_) => unreachable!(),
    };
    let target = DiscreteMeasure::new(1, vec![(vec![x1], w1), (vec![x2], 1.0 - w1)])?;
    let schedule = build_schedule(&target, eps)?;
    let sched = NoiseSchedule::power(0.25)?;
    let grid = TimeGrid::covering(0.0, 1.0, eps * eps / 10.0 * 0.999)?;
    let opts = SteeredOptions {
        store_path: true,
        ..Default::default()
    };
    let out = run_steered(&model, &schedule, &sched, eps, &grid, seed as u64, &opts)?;
    let dbl = dbl_distance(&out.measure, &target)?;
    let segments: Vec<_> = schedule
        .segments
        .iter()
        .map(|seg| {
            json!({
                "start": seg.start,
                "end": seg.end,
                "atom": target.atoms[seg.atom].0[0],
                "kind": format!("{:?}", seg.kind),
            })
        })
        .collect();
    Ok(json!({
        "eps": eps,
        "steps": grid.n,
        "path": path_json(out.path.as_ref().expect("stored path")),
        "measure": measure_json(&out.measure),
        "target": measure_json(&target),
        "segments": segments,
        "cost": out.cost,
        "travel_cost": out.travel_cost,
        "hold_cost": out.hold_cost,
        "dbl_to_target": dbl,
    })
    .to_string())
}

/// Assumption checker demo: run every clause for a named builtin model and
/// return the report as structured JSON.
#[wasm_bindgen]
pub fn check_demo(model: &str) -> String {
    match check_demo_inner(model) {
        Ok(s) => s,
        Err(e) => error_json(e),
    }
}

fn check_demo_inner(name: &str) -> ldlab::Result<String> {
    let report = match builtin(name, &[])? {
        Builtin::Single(m) => check_single(&m, &GridSpec::default_for(m.d))?,
        Builtin::Multiscale(m) => check_multiscale(&m, &GridSpec::default_for(m.m + m.d))?,
    };
    let clauses: Vec<_> = report
        .clauses
        .iter()
        .map(|c| {
            json!({
                "name": c.name,
                "status": format!("{:?}", c.status),
                "detail": c.detail,
            })
        })
        .collect();
    Ok(json!({
        "model": name,
        "passed": report.passed(),
        "clauses": clauses,
    })
    .to_string())
}
