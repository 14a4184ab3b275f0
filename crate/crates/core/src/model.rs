//! Triangular fundamental diagram scaled by the per-section sharing factor,
//! plus the CTM demand and supply functions.
//!
//! Units are hours, kilometres and vehicles throughout. A "share" is the
//! fraction of the total road width given to one direction: `eps` for
//! direction a and `1 - eps` for direction b.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance for the FD consistency checks.
const CONSISTENCY_RTOL: f64 = 1e-9;

/// Capacity-drop coefficients used when the drop is switched on.
pub const DROP_LAMBDA_R: f64 = 0.7;
pub const DROP_LAMBDA_D: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    A,
    B,
}

impl Direction {
    pub fn label(self) -> &'static str {
        match self {
            Direction::A => "a",
            Direction::B => "b",
        }
    }
}

/// Physical constants of the plant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Free speed, km/h.
    pub v_f: f64,
    /// Back-wave speed, km/h.
    pub w_s: f64,
    /// Total cross-road capacity, veh/h.
    pub q_cap: f64,
    /// Total critical density, veh/km.
    pub rho_cr: f64,
    /// Total jam density, veh/km.
    pub rho_max: f64,
    pub lambda_r: f64,
    pub lambda_d: f64,
    /// Model time step, h.
    pub t_model: f64,
    /// Control time step, h.
    pub t_control: f64,
}

impl Default for ModelParams {
    /// The 3 km test stretch: 12000 veh/h total capacity, 10 s model step,
    /// 60 s control step, capacity drop enabled.
    fn default() -> Self {
        Self {
            v_f: 100.0,
            w_s: 12.0,
            q_cap: 12000.0,
            rho_cr: 120.0,
            rho_max: 1120.0,
            lambda_r: DROP_LAMBDA_R,
            lambda_d: DROP_LAMBDA_D,
            t_model: 10.0 / 3600.0,
            t_control: 60.0 / 3600.0,
        }
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= CONSISTENCY_RTOL * a.abs().max(b.abs()).max(1.0)
}

impl ModelParams {
    /// Builds a consistent parameter set from free speed, back-wave speed and
    /// capacity; critical and jam densities follow from the triangular shape.
    pub fn from_triangle(v_f: f64, w_s: f64, q_cap: f64) -> Self {
        let rho_cr = q_cap / v_f;
        Self {
            v_f,
            w_s,
            q_cap,
            rho_cr,
            rho_max: rho_cr + q_cap / w_s,
            ..Self::default()
        }
    }

    pub fn with_capacity_drop(mut self, on: bool) -> Self {
        if on {
            self.lambda_r = DROP_LAMBDA_R;
            self.lambda_d = DROP_LAMBDA_D;
        } else {
            self.lambda_r = 1.0;
            self.lambda_d = 0.0;
        }
        self
    }

    pub fn capacity_drop(&self) -> bool {
        !(self.lambda_r == 1.0 && self.lambda_d == 0.0)
    }

    /// Number of model steps per control step.
    pub fn steps_per_control(&self) -> usize {
        (self.t_control / self.t_model).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("v_f", self.v_f),
            ("w_s", self.w_s),
            ("q_cap", self.q_cap),
            ("rho_cr", self.rho_cr),
            ("t_model", self.t_model),
            ("t_control", self.t_control),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::validation(
                    name,
                    format!("must be positive, got {v}"),
                ));
            }
        }
        if !(self.rho_max > self.rho_cr) {
            return Err(Error::validation(
                "rho_max",
                format!(
                    "jam density {} must exceed critical density {}",
                    self.rho_max, self.rho_cr
                ),
            ));
        }
        if !close(self.q_cap, self.v_f * self.rho_cr) {
            return Err(Error::validation(
                "q_cap",
                format!(
                    "q_cap = v_f * rho_cr violated: {} != {} * {}",
                    self.q_cap, self.v_f, self.rho_cr
                ),
            ));
        }
        if !close(self.w_s, self.q_cap / (self.rho_max - self.rho_cr)) {
            return Err(Error::validation(
                "w_s",
                format!(
                    "w_s = q_cap / (rho_max - rho_cr) violated: {} != {}",
                    self.w_s,
                    self.q_cap / (self.rho_max - self.rho_cr)
                ),
            ));
        }
        let ratio = self.t_control / self.t_model;
        if ratio < 1.0 - 1e-9 || !close(ratio, ratio.round()) {
            return Err(Error::validation(
                "t_control",
                format!("control step must be a positive integer multiple of the model step, ratio {ratio}"),
            ));
        }
        let no_drop = self.lambda_r == 1.0 && self.lambda_d == 0.0;
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        if !(no_drop || (open_unit(self.lambda_r) && open_unit(self.lambda_d))) {
            return Err(Error::validation(
                "lambda",
                format!(
                    "(lambda_r, lambda_d) must be (1, 0) or lie in (0,1)^2, got ({}, {})",
                    self.lambda_r, self.lambda_d
                ),
            ));
        }
        Ok(())
    }
}

/// Sharing factor: the fraction of total road width assigned to direction a.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct SharingFactor(f64);

impl SharingFactor {
    pub fn new(value: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::Domain(format!(
                "sharing factor {value} outside [0, 1]"
            )));
        }
        Ok(Self(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Width fraction seen by `dir`.
    pub fn share(self, dir: Direction) -> f64 {
        match dir {
            Direction::A => self.0,
            Direction::B => 1.0 - self.0,
        }
    }

    pub fn truncate(value: f64, min: f64, max: f64) -> f64 {
        value.clamp(min, max)
    }
}

/// Capacity, critical density and jam density of one direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectionalFd {
    pub capacity: f64,
    pub critical_density: f64,
    pub jam_density: f64,
}

pub fn fd_params_for_direction(
    params: &ModelParams,
    eps: SharingFactor,
    dir: Direction,
) -> DirectionalFd {
    let s = eps.share(dir);
    DirectionalFd {
        capacity: s * params.q_cap,
        critical_density: s * params.rho_cr,
        jam_density: s * params.rho_max,
    }
}

/// Demand (sending) function for a direction holding width fraction `share`.
///
/// The capacity-drop term is negative above the scaled critical density
/// because `rho_cr - rho_max < 0`. Above the scaled jam density the free-flow
/// branch still applies; no extra clamp is added there.
#[inline]
pub fn demand_fn(params: &ModelParams, rho: f64, share: f64) -> f64 {
    let drop = params.lambda_d * params.q_cap * (rho - share * params.rho_cr)
        / (params.rho_cr - params.rho_max);
    (share * params.q_cap + drop).min(params.v_f * rho)
}

/// Supply (receiving) function, clamped at zero for over-jammed sections.
#[inline]
pub fn supply_fn(params: &ModelParams, rho: f64, share: f64) -> f64 {
    (share * params.q_cap)
        .min(params.w_s * (share * params.rho_max - rho))
        .max(0.0)
}

/// Nominal triangular FD (full width).
pub fn triangular_fd(params: &ModelParams, rho: f64) -> f64 {
    (params.v_f * rho)
        .min(params.w_s * (params.rho_max - rho))
        .max(0.0)
}
