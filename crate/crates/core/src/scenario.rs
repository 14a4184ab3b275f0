//! Scenario description and its structured-text (TOML) file format.
//!
//! File layout (sections are numbered from 1, times are in minutes):
//!
//! ```toml
//! name = "uncongested"
//!
//! [params]
//! free_speed = 100.0        # km/h
//! backwave_speed = 12.0     # km/h
//! capacity = 12000.0        # veh/h, both directions
//! critical_density = 120.0  # veh/km
//! jam_density = 1120.0      # veh/km
//! capacity_drop = true      # (lambda_r, lambda_d) = (0.7, 0.4), else (1, 0)
//! model_step_s = 10.0
//! control_step_s = 60.0
//! horizon_steps = 360
//!
//! [sections]
//! length_km = [0.5, 0.5, 0.5, 0.5, 0.5, 0.5]
//! eps_min = 0.16            # scalar or per-section array
//! eps_max = 0.84
//! initial_density_a = [5.0, 5.0, 5.0, 5.0, 18.5, 29.4]
//! initial_density_b = [14.4, 14.4, 14.5, 5.0, 5.0, 5.0]
//!
//! [mainstream]
//! a = [[0.0, 500.0], [60.0, 500.0]]   # [minute, veh/h]
//! b = [[0.0, 500.0], [60.0, 500.0]]
//!
//! [[ramp]]
//! direction = "a"
//! section = 2
//! exit_rate = 0.1
//!
//! [[ramp]]
//! direction = "a"
//! section = 5
//! demand = [[0.0, 1500.0], [60.0, 1500.0]]
//!
//! [design]                  # optional, defaults shown
//! sigma = 0.95
//! nominal_mainstream = 5000.0
//! nominal_onramp = 1000.0
//! nominal_eps = 0.5
//! nominal_relative_density = 1.0
//! ```
//!
//! Explicit `lambda_r` / `lambda_d` keys in `[params]` override `capacity_drop`.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Direction, ModelParams};
use crate::profile::Profile;

/// Nominal operating point used for controller design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DesignConfig {
    pub sigma: f64,
    pub nominal_mainstream: f64,
    pub nominal_onramp: f64,
    pub nominal_eps: f64,
    pub nominal_relative_density: f64,
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self {
            sigma: 0.95,
            nominal_mainstream: 5000.0,
            nominal_onramp: 1000.0,
            nominal_eps: 0.5,
            nominal_relative_density: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub params: ModelParams,
    /// Section lengths, km.
    pub lengths: Vec<f64>,
    pub exit_rates_a: Vec<f64>,
    pub exit_rates_b: Vec<f64>,
    /// On-ramp demand per section; empty profile where there is no on-ramp.
    pub onramp_a: Vec<Profile>,
    pub onramp_b: Vec<Profile>,
    /// Upstream mainstream demand entering section 1 (direction a).
    pub mainstream_a: Profile,
    /// Upstream mainstream demand entering section n (direction b).
    pub mainstream_b: Profile,
    pub initial_a: Vec<f64>,
    pub initial_b: Vec<f64>,
    pub eps_min: Vec<f64>,
    pub eps_max: Vec<f64>,
    /// Sharing factor in force before the first control decision.
    pub eps_initial: f64,
    /// Horizon in model steps.
    pub horizon_steps: usize,
    pub design: DesignConfig,
}

/// External inflows at one model instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Demands {
    pub mainstream_a: f64,
    pub mainstream_b: f64,
    pub ramp_a: Vec<f64>,
    pub ramp_b: Vec<f64>,
}

impl Demands {
    pub fn zeros(n: usize) -> Self {
        Self {
            mainstream_a: 0.0,
            mainstream_b: 0.0,
            ramp_a: vec![0.0; n],
            ramp_b: vec![0.0; n],
        }
    }
}

impl Scenario {
    pub fn n_sections(&self) -> usize {
        self.lengths.len()
    }

    pub fn steps_per_control(&self) -> usize {
        self.params.steps_per_control()
    }

    pub fn control_steps(&self) -> usize {
        self.horizon_steps / self.steps_per_control()
    }

    pub fn has_onramp(&self, dir: Direction, i: usize) -> bool {
        match dir {
            Direction::A => !self.onramp_a[i].is_empty(),
            Direction::B => !self.onramp_b[i].is_empty(),
        }
    }

    pub fn demands_at(&self, k: usize) -> Demands {
        let t = k as f64 * self.params.t_model;
        Demands {
            mainstream_a: self.mainstream_a.sample(t),
            mainstream_b: self.mainstream_b.sample(t),
            ramp_a: self.onramp_a.iter().map(|p| p.sample(t)).collect(),
            ramp_b: self.onramp_b.iter().map(|p| p.sample(t)).collect(),
        }
    }

    pub fn with_capacity_drop(mut self, on: bool) -> Self {
        self.params = self.params.with_capacity_drop(on);
        self
    }

    /// Uniform stretch with no ramps, no demand and an empty initial state.
    pub fn empty(n: usize, horizon_steps: usize) -> Self {
        Self {
            name: "empty".into(),
            params: ModelParams::default(),
            lengths: vec![0.5; n],
            exit_rates_a: vec![0.0; n],
            exit_rates_b: vec![0.0; n],
            onramp_a: vec![Profile::default(); n],
            onramp_b: vec![Profile::default(); n],
            mainstream_a: Profile::constant(0.0),
            mainstream_b: Profile::constant(0.0),
            initial_a: vec![0.0; n],
            initial_b: vec![0.0; n],
            eps_min: vec![0.16; n],
            eps_max: vec![0.84; n],
            eps_initial: 0.5,
            horizon_steps,
            design: DesignConfig::default(),
        }
    }

    /// Hash of everything the linear design depends on.
    pub fn design_hash(&self) -> u64 {
        let mut h = DefaultHasher::new();
        let p = &self.params;
        for v in [
            p.v_f,
            p.w_s,
            p.q_cap,
            p.rho_cr,
            p.rho_max,
            p.t_model,
            p.t_control,
        ] {
            v.to_bits().hash(&mut h);
        }
        for v in self
            .lengths
            .iter()
            .chain(&self.exit_rates_a)
            .chain(&self.exit_rates_b)
        {
            v.to_bits().hash(&mut h);
        }
        for i in 0..self.n_sections() {
            self.has_onramp(Direction::A, i).hash(&mut h);
            self.has_onramp(Direction::B, i).hash(&mut h);
        }
        let d = &self.design;
        for v in [
            d.sigma,
            d.nominal_mainstream,
            d.nominal_onramp,
            d.nominal_eps,
            d.nominal_relative_density,
        ] {
            v.to_bits().hash(&mut h);
        }
        h.finish()
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let n = self.n_sections();
        if n == 0 {
            return Err(Error::validation(
                "sections.length_km",
                "at least one section required",
            ));
        }
        let per_section: [(&str, usize); 8] = [
            ("exit_rates_a", self.exit_rates_a.len()),
            ("exit_rates_b", self.exit_rates_b.len()),
            ("onramp_a", self.onramp_a.len()),
            ("onramp_b", self.onramp_b.len()),
            ("sections.initial_density_a", self.initial_a.len()),
            ("sections.initial_density_b", self.initial_b.len()),
            ("sections.eps_min", self.eps_min.len()),
            ("sections.eps_max", self.eps_max.len()),
        ];
        for (field, len) in per_section {
            if len != n {
                return Err(Error::validation(
                    field,
                    format!("expected {n} entries, got {len}"),
                ));
            }
        }
        let min_len = self.lengths.iter().copied().fold(f64::INFINITY, f64::min);
        if !(min_len > 0.0) {
            return Err(Error::validation(
                "sections.length_km",
                "lengths must be positive",
            ));
        }
        if self.params.v_f * self.params.t_model > min_len * (1.0 + 1e-12) {
            return Err(Error::validation(
                "sections.length_km",
                format!(
                    "CFL condition violated: v_f * T = {:.4} km exceeds shortest section {min_len} km",
                    self.params.v_f * self.params.t_model
                ),
            ));
        }
        for (field, rates) in [
            ("exit_rate (a)", &self.exit_rates_a),
            ("exit_rate (b)", &self.exit_rates_b),
        ] {
            if let Some(b) = rates.iter().find(|b| !(0.0..1.0).contains(*b)) {
                return Err(Error::validation(
                    field,
                    format!("exit rate {b} outside [0, 1)"),
                ));
            }
        }
        // the most upstream section of each direction takes the mainstream inflow only
        if self.exit_rates_a[0] != 0.0 || !self.onramp_a[0].is_empty() {
            return Err(Error::validation(
                "ramp",
                "direction a section 1 cannot carry a ramp",
            ));
        }
        if self.exit_rates_b[n - 1] != 0.0 || !self.onramp_b[n - 1].is_empty() {
            return Err(Error::validation(
                "ramp",
                format!("direction b section {n} cannot carry a ramp"),
            ));
        }
        let m = self.steps_per_control();
        if self.horizon_steps == 0 || !self.horizon_steps.is_multiple_of(m) {
            return Err(Error::validation(
                "params.horizon_steps",
                format!(
                    "{} is not a positive multiple of {m} model steps per control step",
                    self.horizon_steps
                ),
            ));
        }
        let t_end = self.horizon_steps as f64 * self.params.t_model;
        let profiles = std::iter::once(("mainstream.a", &self.mainstream_a))
            .chain(std::iter::once(("mainstream.b", &self.mainstream_b)))
            .chain(self.onramp_a.iter().map(|p| ("ramp.demand (a)", p)))
            .chain(self.onramp_b.iter().map(|p| ("ramp.demand (b)", p)));
        for (field, p) in profiles {
            if p.is_empty() {
                continue;
            }
            let inside = p
                .points()
                .iter()
                .filter(|(t, _)| (0.0..=t_end).contains(t))
                .map(|pt| pt.1);
            let lowest = inside
                .chain([p.sample(0.0), p.sample(t_end)])
                .fold(f64::INFINITY, f64::min);
            if lowest < 0.0 {
                return Err(Error::validation(
                    field,
                    format!("demand profile goes negative ({lowest})"),
                ));
            }
        }
        for (field, rho) in [
            ("sections.initial_density_a", &self.initial_a),
            ("sections.initial_density_b", &self.initial_b),
        ] {
            if let Some(r) = rho
                .iter()
                .find(|r| !(**r >= 0.0 && **r < self.params.rho_max))
            {
                return Err(Error::validation(
                    field,
                    format!("density {r} outside [0, rho_max)"),
                ));
            }
        }
        for i in 0..n {
            let (lo, hi) = (self.eps_min[i], self.eps_max[i]);
            if !(0.0 < lo && lo < hi && hi < 1.0) {
                return Err(Error::validation(
                    "sections.eps_min/eps_max",
                    format!(
                        "section {}: need 0 < eps_min < eps_max < 1, got [{lo}, {hi}]",
                        i + 1
                    ),
                ));
            }
            if !(lo..=hi).contains(&self.eps_initial) {
                return Err(Error::validation(
                    "sections.eps_initial",
                    format!(
                        "initial sharing factor {} outside bounds of section {}",
                        self.eps_initial,
                        i + 1
                    ),
                ));
            }
        }
        let d = &self.design;
        if !(0.0..=1.0).contains(&d.sigma) {
            return Err(Error::validation(
                "design.sigma",
                format!("{} outside [0, 1]", d.sigma),
            ));
        }
        if !(d.nominal_eps > 0.0 && d.nominal_eps < 1.0) {
            return Err(Error::validation(
                "design.nominal_eps",
                "must lie in (0, 1)",
            ));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let scenario = file.into_scenario()?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    Scenario::load(path)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    description: Option<String>,
    params: ParamsFile,
    sections: SectionsFile,
    mainstream: MainstreamFile,
    #[serde(default)]
    ramp: Vec<RampFile>,
    #[serde(default)]
    design: DesignConfig,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsFile {
    free_speed: f64,
    backwave_speed: f64,
    capacity: f64,
    critical_density: f64,
    jam_density: f64,
    #[serde(default)]
    capacity_drop: bool,
    lambda_r: Option<f64>,
    lambda_d: Option<f64>,
    model_step_s: f64,
    control_step_s: f64,
    horizon_steps: usize,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ScalarOrVec {
    Scalar(f64),
    Vec(Vec<f64>),
}

impl ScalarOrVec {
    fn expand(self, n: usize) -> Vec<f64> {
        match self {
            ScalarOrVec::Scalar(v) => vec![v; n],
            ScalarOrVec::Vec(v) => v,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SectionsFile {
    length_km: Vec<f64>,
    eps_min: ScalarOrVec,
    eps_max: ScalarOrVec,
    #[serde(default)]
    eps_initial: Option<f64>,
    initial_density_a: Vec<f64>,
    initial_density_b: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MainstreamFile {
    a: Vec<[f64; 2]>,
    b: Vec<[f64; 2]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RampFile {
    direction: Direction,
    section: usize,
    #[serde(default)]
    exit_rate: Option<f64>,
    #[serde(default)]
    demand: Option<Vec<[f64; 2]>>,
}

fn minutes_profile(field: &str, pts: Vec<[f64; 2]>) -> Result<Profile> {
    if pts.is_empty() {
        return Err(Error::validation(
            field,
            "profile needs at least one breakpoint",
        ));
    }
    Profile::new(pts.into_iter().map(|[t, v]| (t / 60.0, v)).collect())
        .map_err(|e| Error::validation(field, e.to_string()))
}

impl ScenarioFile {
    fn into_scenario(self) -> Result<Scenario> {
        let _ = self.description;
        let p = &self.params;
        let mut params = ModelParams {
            v_f: p.free_speed,
            w_s: p.backwave_speed,
            q_cap: p.capacity,
            rho_cr: p.critical_density,
            rho_max: p.jam_density,
            t_model: p.model_step_s / 3600.0,
            t_control: p.control_step_s / 3600.0,
            ..ModelParams::default()
        }
        .with_capacity_drop(p.capacity_drop);
        if let Some(l) = p.lambda_r {
            params.lambda_r = l;
        }
        if let Some(l) = p.lambda_d {
            params.lambda_d = l;
        }

        let n = self.sections.length_km.len();
        let mut exit_a = vec![0.0; n];
        let mut exit_b = vec![0.0; n];
        let mut on_a = vec![Profile::default(); n];
        let mut on_b = vec![Profile::default(); n];
        for r in self.ramp {
            if r.section == 0 || r.section > n {
                return Err(Error::validation(
                    "ramp.section",
                    format!("section {} outside 1..={n}", r.section),
                ));
            }
            let i = r.section - 1;
            if r.exit_rate.is_none() && r.demand.is_none() {
                return Err(Error::validation(
                    "ramp",
                    format!(
                        "ramp at section {} needs `exit_rate` or `demand`",
                        r.section
                    ),
                ));
            }
            let (exits, ons) = match r.direction {
                Direction::A => (&mut exit_a, &mut on_a),
                Direction::B => (&mut exit_b, &mut on_b),
            };
            if let Some(beta) = r.exit_rate {
                if exits[i] != 0.0 {
                    return Err(Error::validation(
                        "ramp",
                        format!("duplicate off-ramp at section {}", r.section),
                    ));
                }
                exits[i] = beta;
            }
            if let Some(d) = r.demand {
                if !ons[i].is_empty() {
                    return Err(Error::validation(
                        "ramp",
                        format!("duplicate on-ramp at section {}", r.section),
                    ));
                }
                ons[i] = minutes_profile("ramp.demand", d)?;
            }
        }

        Ok(Scenario {
            name: self.name.unwrap_or_else(|| "scenario".into()),
            params,
            eps_min: self.sections.eps_min.expand(n),
            eps_max: self.sections.eps_max.expand(n),
            eps_initial: self.sections.eps_initial.unwrap_or(0.5),
            lengths: self.sections.length_km,
            exit_rates_a: exit_a,
            exit_rates_b: exit_b,
            onramp_a: on_a,
            onramp_b: on_b,
            mainstream_a: minutes_profile("mainstream.a", self.mainstream.a)?,
            mainstream_b: minutes_profile("mainstream.b", self.mainstream.b)?,
            initial_a: self.sections.initial_density_a,
            initial_b: self.sections.initial_density_b,
            horizon_steps: self.params.horizon_steps,
            design: self.design,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "mini"
[params]
free_speed = 100.0
backwave_speed = 12.0
capacity = 12000.0
critical_density = 120.0
jam_density = 1120.0
capacity_drop = true
model_step_s = 10.0
control_step_s = 60.0
horizon_steps = 12

[sections]
length_km = [0.5, 0.5, 0.5]
eps_min = 0.16
eps_max = [0.84, 0.84, 0.84]
initial_density_a = [1.0, 2.0, 3.0]
initial_density_b = [0.0, 0.0, 0.0]

[mainstream]
a = [[0.0, 1000.0], [60.0, 2000.0]]
b = [[0.0, 500.0]]

[[ramp]]
direction = "a"
section = 2
exit_rate = 0.1

[[ramp]]
direction = "b"
section = 1
demand = [[0.0, 300.0]]
"#;

    #[test]
    fn parses_minimal_file() {
        let s = Scenario::from_toml_str(MINIMAL).unwrap();
        assert_eq!(s.n_sections(), 3);
        assert_eq!(s.exit_rates_a, vec![0.0, 0.1, 0.0]);
        assert!(s.has_onramp(Direction::B, 0));
        assert_eq!(s.params.lambda_r, 0.7);
        assert_eq!(s.control_steps(), 2);
        assert_eq!(s.mainstream_a.sample(0.5), 1500.0);
        assert_eq!(s.eps_min, vec![0.16; 3]);
    }

    #[test]
    fn inconsistent_capacity_is_reported_by_field() {
        let bad = MINIMAL.replace("capacity = 12000.0", "capacity = 11000.0");
        match Scenario::from_toml_str(&bad) {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "q_cap"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cfl_violation_is_rejected() {
        let bad = MINIMAL.replace("length_km = [0.5, 0.5, 0.5]", "length_km = [0.5, 0.2, 0.5]");
        let err = Scenario::from_toml_str(&bad).unwrap_err();
        assert!(err.to_string().contains("CFL"), "{err}");
    }

    #[test]
    fn negative_demand_is_rejected() {
        let bad = MINIMAL.replace("b = [[0.0, 500.0]]", "b = [[0.0, 500.0], [1.0, -1.0]]");
        assert!(Scenario::from_toml_str(&bad).is_err());
    }

    #[test]
    fn upstream_ramp_is_rejected() {
        let bad = MINIMAL.replace("section = 2\nexit_rate", "section = 1\nexit_rate");
        assert!(Scenario::from_toml_str(&bad).is_err());
    }

    #[test]
    fn unknown_key_is_a_parse_error() {
        let bad = MINIMAL.replace("name = \"mini\"", "name = \"mini\"\nbogus = 1");
        assert!(matches!(
            Scenario::from_toml_str(&bad),
            Err(Error::Parse(_))
        ));
    }

    #[test]
    fn horizon_must_be_whole_control_steps() {
        let bad = MINIMAL.replace("horizon_steps = 12", "horizon_steps = 13");
        assert!(Scenario::from_toml_str(&bad).is_err());
    }
}
