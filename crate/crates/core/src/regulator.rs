//! Closed-loop LQ / LQI regulator in differential (velocity) form.

use nalgebra::DVector;

use crate::ctm::{SimulationTrace, Simulator};
use crate::design::GainSet;
use crate::error::{Error, Result};
use crate::linearize::relative_density;
use crate::model::{Direction, SharingFactor};
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegulatorMode {
    Lq,
    Lqi,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegulatorState {
    /// Last truncated command, per section.
    pub eps_prev: Vec<f64>,
    /// Previous measurement `[rho_tilde_a; rho_tilde_b; gamma]`; `None`
    /// until the first step.
    pub x_prev: Option<DVector<f64>>,
    pub gamma: Vec<f64>,
    pub mode: RegulatorMode,
}

impl RegulatorState {
    pub fn new(n: usize, eps_initial: f64, mode: RegulatorMode) -> Self {
        Self {
            eps_prev: vec![eps_initial; n],
            x_prev: None,
            gamma: vec![eps_initial; n],
            mode,
        }
    }

    pub fn for_gains(gains: &GainSet, eps_initial: f64) -> Self {
        let mode = if gains.is_lq() {
            RegulatorMode::Lq
        } else {
            RegulatorMode::Lqi
        };
        Self::new(gains.n_sections(), eps_initial, mode)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegulatorOutput {
    pub eps: Vec<f64>,
    /// Sections whose raw command fell outside the bounds.
    pub saturated: usize,
}

/// Untruncated differential update
/// `eps_prev - Kp (x - x_prev) - KI (rho_tilde_a - rho_tilde_b)`.
pub fn differential_command(
    gains: &GainSet,
    eps_prev: &DVector<f64>,
    x: &DVector<f64>,
    x_prev: &DVector<f64>,
) -> DVector<f64> {
    let n = gains.n_sections();
    let balance = x.rows(0, n) - x.rows(n, n);
    eps_prev - &gains.kp * (x - x_prev) - &gains.ki * balance
}

/// Positional form `eps_n - K1 (x - x_n) - K2 y` with `y` the running sum of
/// `H (x - x_n)` over past steps.
pub fn positional_command(
    gains: &GainSet,
    eps_nominal: &DVector<f64>,
    x: &DVector<f64>,
    x_nominal: &DVector<f64>,
    y: &DVector<f64>,
) -> DVector<f64> {
    eps_nominal - &gains.k1 * (x - x_nominal) - &gains.k2 * y
}

/// Measurement vector from section densities, using the previous command as
/// the width reference and as `gamma`.
pub fn measurement(
    rho_a: &[f64],
    rho_b: &[f64],
    eps_prev: &[f64],
    rho_cr: f64,
) -> Result<DVector<f64>> {
    let n = eps_prev.len();
    if rho_a.len() != n || rho_b.len() != n {
        return Err(Error::Domain(format!(
            "measurement has {}+{} densities for {n} sections",
            rho_a.len(),
            rho_b.len()
        )));
    }
    let mut x = DVector::zeros(3 * n);
    for i in 0..n {
        let eps = SharingFactor::new(eps_prev[i])?;
        x[i] = relative_density(rho_a[i], eps, rho_cr, Direction::A)?;
        x[n + i] = relative_density(rho_b[i], eps, rho_cr, Direction::B)?;
        x[2 * n + i] = eps_prev[i];
    }
    Ok(x)
}

/// One control step: measure, update, truncate. The truncated value is what
/// is remembered for the next step.
pub fn regulator_step(
    state: &mut RegulatorState,
    gains: &GainSet,
    rho_a: &[f64],
    rho_b: &[f64],
    rho_cr: f64,
    eps_min: &[f64],
    eps_max: &[f64],
) -> Result<RegulatorOutput> {
    let n = gains.n_sections();
    if state.eps_prev.len() != n || eps_min.len() != n || eps_max.len() != n {
        return Err(Error::Domain(
            "regulator state, gains and bounds disagree on section count".into(),
        ));
    }
    state.gamma.clone_from(&state.eps_prev);
    let x = measurement(rho_a, rho_b, &state.eps_prev, rho_cr)?;
    let x_prev = state.x_prev.take().unwrap_or_else(|| x.clone());
    let prev = DVector::from_column_slice(&state.eps_prev);
    let raw = differential_command(gains, &prev, &x, &x_prev);
    let mut saturated = 0;
    let eps: Vec<f64> = (0..n)
        .map(|i| {
            let v = raw[i];
            if v < eps_min[i] || v > eps_max[i] {
                saturated += 1;
            }
            v.clamp(eps_min[i], eps_max[i])
        })
        .collect();
    state.eps_prev.clone_from(&eps);
    state.x_prev = Some(x);
    Ok(RegulatorOutput { eps, saturated })
}

/// Runs the plant with the regulator switched on from control step
/// `activation_step`; before that the scenario's initial width is held.
pub fn run_closed_loop(
    scenario: &Scenario,
    gains: &GainSet,
    activation_step: usize,
) -> Result<SimulationTrace> {
    let kc = scenario.control_steps();
    if activation_step > kc {
        return Err(Error::Domain(format!(
            "activation step {activation_step} beyond {kc} control steps"
        )));
    }
    if gains.n_sections() != scenario.n_sections() {
        return Err(Error::Domain(format!(
            "gains designed for {} sections, scenario has {}",
            gains.n_sections(),
            scenario.n_sections()
        )));
    }
    let hold = vec![scenario.eps_initial; scenario.n_sections()];
    let mut reg = RegulatorState::for_gains(gains, scenario.eps_initial);
    let mut sim = Simulator::new(scenario);
    for c in 0..kc {
        if c < activation_step {
            sim.advance(&hold)?;
            continue;
        }
        let st = sim.state();
        let out = regulator_step(
            &mut reg,
            gains,
            &st.rho_a,
            &st.rho_b,
            scenario.params.rho_cr,
            &scenario.eps_min,
            &scenario.eps_max,
        )?;
        sim.record_saturations(out.saturated);
        sim.advance(&out.eps)?;
    }
    Ok(sim.finish())
}
