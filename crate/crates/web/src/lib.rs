//! wasm-bindgen surface for the static demo page in `www/`.
//!
//! Each export has a plain Rust counterpart (`*_impl`) so the logic can be
//! tested natively; the exported wrappers only convert errors.

use ibc_core::design::{augment, closed_loop_radius, design_gains};
use ibc_core::experiment::{run_experiment, run_sweep, GainCache, RunConfig, SweepSpec};
use ibc_core::linearize::design_model_for;
use ibc_core::{Controller, Scenario, WeightConfig};
use wasm_bindgen::prelude::*;

const UNCONGESTED: &str = include_str!("../../core/scenarios/uncongested.toml");
const CONGESTED: &str = include_str!("../../core/scenarios/congested.toml");

/// TOML text of a shipped scenario (`uncongested` or `congested`).
#[wasm_bindgen]
pub fn builtin_scenario(name: &str) -> Option<String> {
    match name {
        "uncongested" => Some(UNCONGESTED.into()),
        "congested" => Some(CONGESTED.into()),
        _ => None,
    }
}

fn parse(toml: &str) -> Result<Scenario, String> {
    Scenario::from_toml_str(toml).map_err(|e| e.to_string())
}

fn controller(name: &str) -> Result<Controller, String> {
    name.parse().map_err(|e: ibc_core::Error| e.to_string())
}

/// One closed-loop run, flattened for canvas drawing. Matrices are row-major
/// `steps x sections`.
#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct SimulationView {
    steps: usize,
    sections: usize,
    tts: f64,
    baseline_tts: f64,
    saturations: usize,
    rel_a: Vec<f64>,
    rel_b: Vec<f64>,
    eps: Vec<f64>,
}

#[wasm_bindgen]
impl SimulationView {
    pub fn steps(&self) -> usize {
        self.steps
    }
    pub fn sections(&self) -> usize {
        self.sections
    }
    pub fn tts(&self) -> f64 {
        self.tts
    }
    pub fn baseline_tts(&self) -> f64 {
        self.baseline_tts
    }
    pub fn saturations(&self) -> usize {
        self.saturations
    }
    pub fn relative_a(&self) -> Vec<f64> {
        self.rel_a.clone()
    }
    pub fn relative_b(&self) -> Vec<f64> {
        self.rel_b.clone()
    }
    /// Commanded sharing factor per model step.
    pub fn eps(&self) -> Vec<f64> {
        self.eps.clone()
    }
}

pub fn simulate_impl(
    toml: &str,
    controller_name: &str,
    p1: f64,
    p2: f64,
    capacity_drop: bool,
    activation_step: usize,
) -> Result<SimulationView, String> {
    let scn = parse(toml)?;
    let cfg = RunConfig {
        controller: controller(controller_name)?,
        weights: WeightConfig::lqi(p1, p2),
        activation_step,
        ..RunConfig::no_control(capacity_drop)
    };
    let (row, tr) = run_experiment(&scn, &cfg, &GainCache::new()).map_err(|e| e.to_string())?;
    let (steps, n) = (tr.steps(), tr.n_sections());
    let mut view = SimulationView {
        steps,
        sections: n,
        tts: row.tts,
        baseline_tts: row.baseline_tts,
        saturations: row.saturations,
        rel_a: Vec::with_capacity(steps * n),
        rel_b: Vec::with_capacity(steps * n),
        eps: Vec::with_capacity(steps * n),
    };
    for k in 0..steps {
        for i in 0..n {
            view.rel_a.push(tr.relative_density_a(k, i));
            view.rel_b.push(tr.relative_density_b(k, i));
            view.eps.push(tr.eps_cmd[k][i]);
        }
    }
    Ok(view)
}

#[wasm_bindgen]
pub fn simulate(
    toml: &str,
    controller: &str,
    p1: f64,
    p2: f64,
    capacity_drop: bool,
    activation_step: usize,
) -> Result<SimulationView, JsError> {
    simulate_impl(toml, controller, p1, p2, capacity_drop, activation_step)
        .map_err(|e| JsError::new(&e))
}

/// Flat `[p1, p2, tts, ...]` triples, then the no-control TTS as the last
/// element. Failed designs have `tts = NaN`.
pub fn sweep_impl(
    toml: &str,
    controller_name: &str,
    count: usize,
    seed: u64,
    capacity_drop: bool,
) -> Result<Vec<f64>, String> {
    let scn = parse(toml)?;
    let spec = SweepSpec {
        count,
        seed,
        controller: controller(controller_name)?,
        capacity_drop,
        ..SweepSpec::default()
    };
    let rep = run_sweep(&scn, &spec, &GainCache::new()).map_err(|e| e.to_string())?;
    let mut out = Vec::with_capacity(3 * rep.rows.len() + 1);
    let mut baseline = f64::NAN;
    for r in &rep.rows {
        out.extend([r.p1, r.p2, if r.error.is_some() { f64::NAN } else { r.tts }]);
        baseline = r.baseline_tts;
    }
    out.push(baseline);
    Ok(out)
}

#[wasm_bindgen]
pub fn sweep(
    toml: &str,
    controller: &str,
    count: usize,
    seed: u64,
    capacity_drop: bool,
) -> Result<Vec<f64>, JsError> {
    sweep_impl(toml, controller, count, seed, capacity_drop).map_err(|e| JsError::new(&e))
}

/// Designed gains: row-major `n x 4n` matrix, then iterations, then the
/// closed-loop spectral radius.
pub fn design_impl(toml: &str, p1: f64, p2: f64, sigma: f64) -> Result<Vec<f64>, String> {
    let scn = parse(toml)?;
    let w = if p1 == f64::NEG_INFINITY {
        WeightConfig::lq(p2)
    } else {
        WeightConfig::lqi(p1, p2)
    };
    let g = design_gains(&scn, sigma, w).map_err(|e| e.to_string())?;
    let lin = design_model_for(&scn, sigma).map_err(|e| e.to_string())?;
    let aug = augment(&lin, w).map_err(|e| e.to_string())?;
    let mut out: Vec<f64> = Vec::with_capacity(g.k.len() + 2);
    for r in 0..g.k.nrows() {
        out.extend(g.k.row(r).iter());
    }
    out.push(g.meta.iterations as f64);
    out.push(closed_loop_radius(&aug, &g));
    Ok(out)
}

#[wasm_bindgen]
pub fn design(toml: &str, p1: f64, p2: f64, sigma: f64) -> Result<Vec<f64>, JsError> {
    design_impl(toml, p1, p2, sigma).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simulate_view_shapes() {
        let v = simulate_impl(UNCONGESTED, "lq", f64::NEG_INFINITY, -3.0, true, 0).unwrap();
        assert_eq!((v.steps(), v.sections()), (360, 6));
        assert_eq!(v.relative_a().len(), 360 * 6);
        assert!(v.tts() < v.baseline_tts());
        assert!(v.relative_a().iter().all(|r| *r < 1.0));
    }

    #[test]
    fn sweep_layout() {
        let out = sweep_impl(CONGESTED, "lqi", 3, 4, true).unwrap();
        assert_eq!(out.len(), 10);
        assert!(out[9] > 0.0 && out.iter().all(|v| !v.is_nan()));
    }

    #[test]
    fn design_layout() {
        let out = design_impl(UNCONGESTED, -2.5, -3.0, 0.95).unwrap();
        assert_eq!(out.len(), 6 * 24 + 2);
        assert!(out[6 * 24 + 1] < 1.0);
    }

    #[test]
    fn bad_input_is_an_error() {
        assert!(simulate_impl("nonsense", "lq", 0.0, 0.0, true, 0).is_err());
        assert!(simulate_impl(UNCONGESTED, "pid", 0.0, 0.0, true, 0).is_err());
        assert!(builtin_scenario("x").is_none());
    }
}
