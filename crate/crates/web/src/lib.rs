//! WebAssembly bindings for the browser demo. Every export takes plain
//! values and returns a JSON string; errors become JS exceptions.

use std::collections::BTreeMap;

use lpmech::algebroid::PhasePoint;
use lpmech::dynamics::{compare_reparametrized, integrate, HamiltonianField, IntegrateOptions, Method};
use lpmech::models::{self, SystemBundle, SystemParams};
use lpmech::verify::{verify_system, VerifyOptions};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

/// Rows kept in a returned trajectory; longer runs are thinned evenly.
const MAX_ROWS: usize = 2000;

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct Request {
    system: String,
    #[serde(default)]
    params: BTreeMap<String, Vec<f64>>,
    energy: Option<f64>,
    q0: Option<Vec<f64>>,
    y0: Option<Vec<f64>>,
}

fn bundle(request: &str) -> Result<SystemBundle, String> {
    let r: Request = serde_json::from_str(request).map_err(|e| format!("bad request: {e}"))?;
    let mut b = models::by_name(&r.system, &SystemParams(r.params)).map_err(|e| e.to_string())?;
    if let Some(e) = r.energy {
        b = b.with_energy(e);
    }
    if r.q0.is_some() || r.y0.is_some() {
        let q = r.q0.unwrap_or_else(|| b.initial.q.clone());
        let y = r.y0.unwrap_or_else(|| b.initial.y.clone());
        b = b.with_initial(PhasePoint::new(q, y)).map_err(|e| e.to_string())?;
    }
    Ok(b)
}

fn labels(b: &SystemBundle) -> Vec<String> {
    let q = (1..=b.base_dim()).map(|i| format!("q{i}"));
    q.chain((1..=b.fiber_dim()).map(|a| format!("y{a}"))).collect()
}

fn thin<T: Clone>(v: &[T]) -> Vec<T> {
    let stride = v.len().div_ceil(MAX_ROWS).max(1);
    let mut out: Vec<T> = v.iter().step_by(stride).cloned().collect();
    if !(v.len() - 1).is_multiple_of(stride) {
        out.push(v[v.len() - 1].clone());
    }
    out
}

fn json<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct TrajectoryOut {
    system: String,
    labels: Vec<String>,
    times: Vec<f64>,
    states: Vec<Vec<f64>>,
    energy: Vec<f64>,
    completed: bool,
}

pub fn simulate_json(request: &str, t_final: f64, step: f64) -> Result<String, String> {
    let b = bundle(request)?;
    if !(step > 0.0 && t_final >= 0.0 && t_final / step <= 1e6) {
        return Err("need step > 0, t_final ≥ 0 and at most 10⁶ steps".into());
    }
    let h = b.hamiltonian();
    let field = HamiltonianField::new(&b.model, &h);
    let traj = integrate(&field, &b.initial.packed(), 0.0, t_final, &IntegrateOptions::new(Method::rk4(step)), &[]);
    let states = thin(&traj.states);
    let energy = states.iter().map(|z| lpmech::calculus::ScalarField::value(&h, z).unwrap_or(f64::NAN)).collect();
    json(&TrajectoryOut {
        system: b.name.clone(),
        labels: labels(&b),
        times: thin(&traj.times),
        states,
        energy,
        completed: traj.completed(),
    })
}

#[derive(Serialize)]
struct ReparamOut {
    system: String,
    energy: f64,
    s: Vec<f64>,
    h: Vec<f64>,
    gaps: Vec<f64>,
    sup_gap: f64,
    strictly_increasing: bool,
}

pub fn reparam_json(request: &str, s_final: f64, step: f64) -> Result<String, String> {
    let b = bundle(request)?;
    if !(step > 0.0 && s_final > 0.0 && s_final / step <= 1e6) {
        return Err("need step > 0, s_final > 0 and at most 10⁶ steps".into());
    }
    let c = compare_reparametrized(&b.model, &b.metric, &b.potential, b.energy, &b.initial, s_final, step)
        .map_err(|e| e.to_string())?;
    json(&ReparamOut {
        system: b.name.clone(),
        energy: b.energy.0,
        s: thin(&c.reparam.s),
        h: thin(&c.reparam.h),
        gaps: thin(&c.gaps),
        sup_gap: c.sup_gap,
        strictly_increasing: c.strictly_increasing(),
    })
}

pub fn verify_json(request: &str, samples: usize, seed: u64) -> Result<String, String> {
    let b = bundle(request)?;
    let opts = VerifyOptions { samples, seed, ..Default::default() };
    json(&verify_system(&b, &opts).map_err(|e| e.to_string())?)
}

/// Integrates `X_H` with RK4. `request` is `{"system": .., "params": {..},
/// "energy": .., "q0": [..], "y0": [..]}`.
#[wasm_bindgen]
pub fn simulate(request: &str, t_final: f64, step: f64) -> Result<String, JsError> {
    simulate_json(request, t_final, step).map_err(|e| JsError::new(&e))
}

/// Mechanical trajectory against the reparametrized Jacobi-metric geodesic.
#[wasm_bindgen]
pub fn reparam(request: &str, s_final: f64, step: f64) -> Result<String, JsError> {
    reparam_json(request, s_final, step).map_err(|e| JsError::new(&e))
}

/// Runs the invariant suite.
#[wasm_bindgen]
pub fn verify(request: &str, samples: usize, seed: u32) -> Result<String, JsError> {
    verify_json(request, samples, u64::from(seed)).map_err(|e| JsError::new(&e))
}
