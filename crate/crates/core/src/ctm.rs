//! Extended cell transmission model for the two-direction stretch.
//!
//! Direction a runs from section 1 to section n, direction b from n to 1.
//! Sharing factors are commanded once per control interval and held for
//! `M` model steps; the widening side of every change is delayed by one
//! control interval.

use crate::error::{Error, Result};
use crate::model::{demand_fn, supply_fn};
use crate::scenario::{Demands, Scenario};

/// Plant state at one model instant.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficState {
    pub rho_a: Vec<f64>,
    pub rho_b: Vec<f64>,
    /// Commanded sharing factors of the previous control interval.
    pub eps_prev: Vec<f64>,
}

impl TrafficState {
    pub fn initial(scenario: &Scenario) -> Self {
        Self {
            rho_a: scenario.initial_a.clone(),
            rho_b: scenario.initial_b.clone(),
            eps_prev: vec![scenario.eps_initial; scenario.n_sections()],
        }
    }

    /// Vehicles on the stretch, both directions.
    pub fn vehicles(&self, lengths: &[f64]) -> f64 {
        lengths
            .iter()
            .zip(self.rho_a.iter().zip(&self.rho_b))
            .map(|(l, (a, b))| l * (a + b))
            .sum()
    }
}

/// Mainstream exit flows of every section, veh/h.
#[derive(Debug, Clone, PartialEq)]
pub struct Flows {
    pub q_a: Vec<f64>,
    pub q_b: Vec<f64>,
}

/// Sharing factors actually applied to each direction given the new and the
/// previous command: the narrowed side switches at once, the widened side
/// keeps its old width for one more interval.
pub fn apply_delay(eps_now: &[f64], eps_prev: &[f64]) -> (Vec<f64>, Vec<f64>) {
    eps_now
        .iter()
        .zip(eps_prev)
        .map(|(&now, &prev)| (now.min(prev), (1.0 - now).min(1.0 - prev)))
        .unzip()
}

/// CTM flows for one model step with applied shares `eps_a`, `eps_b`.
pub fn compute_flows(
    scenario: &Scenario,
    rho_a: &[f64],
    rho_b: &[f64],
    eps_a: &[f64],
    eps_b: &[f64],
    demands: &Demands,
) -> Flows {
    let p = &scenario.params;
    let n = rho_a.len();
    let mut q_a = vec![0.0; n];
    let mut q_b = vec![0.0; n];
    for i in 0..n {
        let send = demand_fn(p, rho_a[i], eps_a[i]);
        q_a[i] = if i + 1 < n {
            let j = i + 1;
            let recv = supply_fn(p, rho_a[j], eps_a[j]) / (1.0 - scenario.exit_rates_a[j])
                - p.lambda_r * demands.ramp_a[j];
            send.min(recv)
        } else {
            send
        };
        q_a[i] = q_a[i].max(0.0);

        let send = demand_fn(p, rho_b[i], eps_b[i]);
        q_b[i] = if i > 0 {
            let j = i - 1;
            let recv = supply_fn(p, rho_b[j], eps_b[j]) / (1.0 - scenario.exit_rates_b[j])
                - p.lambda_r * demands.ramp_b[j];
            send.min(recv)
        } else {
            send
        };
        q_b[i] = q_b[i].max(0.0);
    }
    Flows { q_a, q_b }
}

/// Conservation update over one model step. Returns the new densities.
pub fn step(
    scenario: &Scenario,
    rho_a: &[f64],
    rho_b: &[f64],
    flows: &Flows,
    demands: &Demands,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let t = scenario.params.t_model;
    let n = rho_a.len();
    let mut next_a = vec![0.0; n];
    let mut next_b = vec![0.0; n];
    for i in 0..n {
        let gain = t / scenario.lengths[i];
        let inflow_a = if i == 0 {
            demands.mainstream_a
        } else {
            (1.0 - scenario.exit_rates_a[i]) * flows.q_a[i - 1] + demands.ramp_a[i]
        };
        next_a[i] = rho_a[i] + gain * (inflow_a - flows.q_a[i]);

        let inflow_b = if i + 1 == n {
            demands.mainstream_b
        } else {
            (1.0 - scenario.exit_rates_b[i]) * flows.q_b[i + 1] + demands.ramp_b[i]
        };
        next_b[i] = rho_b[i] + gain * (inflow_b - flows.q_b[i]);

        if next_a[i] < 0.0 || next_b[i] < 0.0 || !next_a[i].is_finite() || !next_b[i].is_finite() {
            return Err(Error::Invariant(format!(
                "density left [0, inf) in section {}: a={} b={}",
                i + 1,
                next_a[i],
                next_b[i]
            )));
        }
    }
    Ok((next_a, next_b))
}

/// Time-indexed record of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub lengths: Vec<f64>,
    pub t_model: f64,
    pub rho_cr: f64,
    /// Sharing factor in force before the first command.
    pub eps_initial: f64,
    /// States for k = 0..=K.
    pub rho_a: Vec<Vec<f64>>,
    pub rho_b: Vec<Vec<f64>>,
    /// Flows, commands and applied shares for k = 0..K.
    pub q_a: Vec<Vec<f64>>,
    pub q_b: Vec<Vec<f64>>,
    pub eps_cmd: Vec<Vec<f64>>,
    pub eps_a: Vec<Vec<f64>>,
    pub eps_b: Vec<Vec<f64>>,
    /// Number of (control step, section) commands clipped by the bounds.
    pub saturations: usize,
    pub tts: f64,
}

impl SimulationTrace {
    pub fn n_sections(&self) -> usize {
        self.lengths.len()
    }

    pub fn steps(&self) -> usize {
        self.q_a.len()
    }

    fn eps_before(&self, k: usize, i: usize) -> f64 {
        if k == 0 {
            self.eps_initial
        } else {
            self.eps_cmd[k - 1][i]
        }
    }

    /// Relative density of direction a at instant k, using the command in
    /// force over the preceding model step.
    pub fn relative_density_a(&self, k: usize, i: usize) -> f64 {
        self.rho_a[k][i] / (self.eps_before(k, i) * self.rho_cr)
    }

    pub fn relative_density_b(&self, k: usize, i: usize) -> f64 {
        self.rho_b[k][i] / ((1.0 - self.eps_before(k, i)) * self.rho_cr)
    }

    pub fn max_relative_density(&self) -> f64 {
        let n = self.n_sections();
        (0..self.rho_a.len())
            .flat_map(|k| (0..n).map(move |i| (k, i)))
            .map(|(k, i)| {
                self.relative_density_a(k, i)
                    .max(self.relative_density_b(k, i))
            })
            .fold(0.0, f64::max)
    }
}

/// Total time spent, veh·h: `T * sum_{k=1..K} sum_i L_i (rho_a + rho_b)`.
pub fn tts(trace: &SimulationTrace) -> f64 {
    trace
        .rho_a
        .iter()
        .zip(&trace.rho_b)
        .skip(1)
        .map(|(a, b)| {
            trace
                .lengths
                .iter()
                .zip(a.iter().zip(b))
                .map(|(l, (ra, rb))| l * (ra + rb))
                .sum::<f64>()
        })
        .sum::<f64>()
        * trace.t_model
}

/// Steps the plant one control interval at a time.
#[derive(Debug, Clone)]
pub struct Simulator<'a> {
    scenario: &'a Scenario,
    k: usize,
    state: TrafficState,
    trace: SimulationTrace,
}

impl<'a> Simulator<'a> {
    pub fn new(scenario: &'a Scenario) -> Self {
        let state = TrafficState::initial(scenario);
        let k_total = scenario.horizon_steps;
        let trace = SimulationTrace {
            lengths: scenario.lengths.clone(),
            t_model: scenario.params.t_model,
            rho_cr: scenario.params.rho_cr,
            eps_initial: scenario.eps_initial,
            rho_a: {
                let mut v = Vec::with_capacity(k_total + 1);
                v.push(state.rho_a.clone());
                v
            },
            rho_b: {
                let mut v = Vec::with_capacity(k_total + 1);
                v.push(state.rho_b.clone());
                v
            },
            q_a: Vec::with_capacity(k_total),
            q_b: Vec::with_capacity(k_total),
            eps_cmd: Vec::with_capacity(k_total),
            eps_a: Vec::with_capacity(k_total),
            eps_b: Vec::with_capacity(k_total),
            saturations: 0,
            tts: 0.0,
        };
        Self {
            scenario,
            k: 0,
            state,
            trace,
        }
    }

    pub fn state(&self) -> &TrafficState {
        &self.state
    }

    /// Current model step index.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn done(&self) -> bool {
        self.k >= self.scenario.horizon_steps
    }

    pub(crate) fn record_saturations(&mut self, count: usize) {
        self.trace.saturations += count;
    }

    /// Applies `eps_cmd` for one control interval (or what is left of the
    /// horizon).
    pub fn advance(&mut self, eps_cmd: &[f64]) -> Result<()> {
        let n = self.scenario.n_sections();
        if eps_cmd.len() != n {
            return Err(Error::Domain(format!(
                "expected {n} sharing factors, got {}",
                eps_cmd.len()
            )));
        }
        let (eps_a, eps_b) = apply_delay(eps_cmd, &self.state.eps_prev);
        let m = self.scenario.steps_per_control();
        for _ in 0..m {
            if self.done() {
                break;
            }
            let demands = self.scenario.demands_at(self.k);
            let flows = compute_flows(
                self.scenario,
                &self.state.rho_a,
                &self.state.rho_b,
                &eps_a,
                &eps_b,
                &demands,
            );
            let (a, b) = step(
                self.scenario,
                &self.state.rho_a,
                &self.state.rho_b,
                &flows,
                &demands,
            )?;
            self.state.rho_a = a;
            self.state.rho_b = b;
            self.trace.rho_a.push(self.state.rho_a.clone());
            self.trace.rho_b.push(self.state.rho_b.clone());
            self.trace.q_a.push(flows.q_a);
            self.trace.q_b.push(flows.q_b);
            self.trace.eps_cmd.push(eps_cmd.to_vec());
            self.trace.eps_a.push(eps_a.clone());
            self.trace.eps_b.push(eps_b.clone());
            self.k += 1;
        }
        self.state.eps_prev = eps_cmd.to_vec();
        Ok(())
    }

    pub fn finish(mut self) -> SimulationTrace {
        self.trace.tts = tts(&self.trace);
        self.trace
    }
}

/// Runs the plant under a fixed per-control-step command schedule.
pub fn run_open_loop(scenario: &Scenario, eps_schedule: &[Vec<f64>]) -> Result<SimulationTrace> {
    if eps_schedule.len() != scenario.control_steps() {
        return Err(Error::Domain(format!(
            "schedule has {} control steps, horizon needs {}",
            eps_schedule.len(),
            scenario.control_steps()
        )));
    }
    let mut sim = Simulator::new(scenario);
    for eps in eps_schedule {
        sim.advance(eps)?;
    }
    Ok(sim.finish())
}

/// Constant-width schedule, i.e. the no-control case.
pub fn constant_schedule(scenario: &Scenario, eps: f64) -> Vec<Vec<f64>> {
    vec![vec![eps; scenario.n_sections()]; scenario.control_steps()]
}
