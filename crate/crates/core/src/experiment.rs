//! Experiment runs, weight sweeps and summary tables.
//!
//! Report CSV columns, in order:
//! `scenario,controller,capacity_drop,activation_step,sigma,p1,p2,tts,baseline_tts,improvement_pct,saturations,max_relative_density,error`.
//! Floats are written in shortest round-trip form (`-inf` for the LQ `p1`).

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ctm::{constant_schedule, run_open_loop, SimulationTrace};
use crate::design::{design_gains, GainSet, WeightConfig};
use crate::error::{Error, Result};
use crate::regulator::run_closed_loop;
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Controller {
    None,
    Lqi,
    Lq,
}

impl Controller {
    pub fn label(self) -> &'static str {
        match self {
            Controller::None => "none",
            Controller::Lq => "lq",
            Controller::Lqi => "lqi",
        }
    }
}

impl FromStr for Controller {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" | "no-control" => Ok(Controller::None),
            "lq" => Ok(Controller::Lq),
            "lqi" => Ok(Controller::Lqi),
            _ => Err(Error::Parse(format!(
                "unknown controller {s:?} (none, lq, lqi)"
            ))),
        }
    }
}

/// One experiment configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub controller: Controller,
    pub weights: WeightConfig,
    pub sigma: f64,
    pub capacity_drop: bool,
    pub activation_step: usize,
}

impl RunConfig {
    pub fn no_control(capacity_drop: bool) -> Self {
        Self {
            controller: Controller::None,
            weights: WeightConfig::lq(0.0),
            sigma: 0.95,
            capacity_drop,
            activation_step: 0,
        }
    }

    pub fn lq(p2: f64, capacity_drop: bool) -> Self {
        Self {
            controller: Controller::Lq,
            weights: WeightConfig::lq(p2),
            ..Self::no_control(capacity_drop)
        }
    }

    pub fn lqi(p1: f64, p2: f64, capacity_drop: bool) -> Self {
        Self {
            controller: Controller::Lqi,
            weights: WeightConfig::lqi(p1, p2),
            ..Self::no_control(capacity_drop)
        }
    }

    /// Weights actually used: LQ always has `S = 0`.
    pub fn effective_weights(&self) -> WeightConfig {
        match self.controller {
            Controller::Lq => WeightConfig::lq(self.weights.p2),
            _ => self.weights,
        }
    }
}

/// One report row.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub scenario: String,
    pub controller: Controller,
    pub capacity_drop: bool,
    pub activation_step: usize,
    pub sigma: f64,
    pub p1: f64,
    pub p2: f64,
    pub tts: f64,
    pub baseline_tts: f64,
    pub improvement_pct: f64,
    pub saturations: usize,
    pub max_relative_density: f64,
    pub error: Option<String>,
}

pub fn improvement_pct(baseline: f64, tts: f64) -> f64 {
    if baseline == 0.0 {
        0.0
    } else {
        100.0 * (baseline - tts) / baseline
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
}

type CacheKey = (u64, u64, u64, u64);

/// Designed gains keyed by `(sigma, p1, p2, design hash)`.
#[derive(Debug, Default)]
pub struct GainCache {
    map: Mutex<HashMap<CacheKey, Arc<GainSet>>>,
}

impl GainCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get_or_design(
        &self,
        scenario: &Scenario,
        sigma: f64,
        weights: WeightConfig,
    ) -> Result<Arc<GainSet>> {
        let key = (
            sigma.to_bits(),
            weights.p1.to_bits(),
            weights.p2.to_bits(),
            scenario.design_hash(),
        );
        if let Some(g) = self.map.lock().expect("gain cache poisoned").get(&key) {
            return Ok(Arc::clone(g));
        }
        let g = Arc::new(design_gains(scenario, sigma, weights)?);
        self.map
            .lock()
            .expect("gain cache poisoned")
            .insert(key, Arc::clone(&g));
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.map.lock().expect("gain cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// No-control TTS of the scenario with the given capacity-drop setting.
pub fn baseline_tts(scenario: &Scenario, capacity_drop: bool) -> Result<f64> {
    let s = scenario.clone().with_capacity_drop(capacity_drop);
    Ok(run_open_loop(&s, &constant_schedule(&s, s.eps_initial))?.tts)
}

fn simulate(scenario: &Scenario, cfg: &RunConfig, cache: &GainCache) -> Result<SimulationTrace> {
    let s = scenario.clone().with_capacity_drop(cfg.capacity_drop);
    match cfg.controller {
        Controller::None => run_open_loop(&s, &constant_schedule(&s, s.eps_initial)),
        Controller::Lq | Controller::Lqi => {
            let w = cfg.effective_weights();
            if cfg.controller == Controller::Lqi && !w.p1.is_finite() {
                return Err(Error::Design(
                    "lqi needs a finite p1; use lq for S = 0".into(),
                ));
            }
            // gains depend on the design point only, never on capacity drop
            let gains = cache.get_or_design(scenario, cfg.sigma, w)?;
            run_closed_loop(&s, &gains, cfg.activation_step)
        }
    }
}

fn row_for(
    scenario: &Scenario,
    cfg: &RunConfig,
    baseline: f64,
    result: std::result::Result<&SimulationTrace, &Error>,
) -> ReportRow {
    let w = cfg.effective_weights();
    let (p1, p2) = match cfg.controller {
        Controller::None => (f64::NAN, f64::NAN),
        _ => (w.p1, w.p2),
    };
    let mut row = ReportRow {
        scenario: scenario.name.clone(),
        controller: cfg.controller,
        capacity_drop: cfg.capacity_drop,
        activation_step: cfg.activation_step,
        sigma: cfg.sigma,
        p1,
        p2,
        tts: f64::NAN,
        baseline_tts: baseline,
        improvement_pct: f64::NAN,
        saturations: 0,
        max_relative_density: f64::NAN,
        error: None,
    };
    match result {
        Ok(tr) => {
            row.tts = tr.tts;
            row.improvement_pct = improvement_pct(baseline, tr.tts);
            row.saturations = tr.saturations;
            row.max_relative_density = tr.max_relative_density();
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

/// Runs one configuration and returns its report row with the trace.
pub fn run_experiment(
    scenario: &Scenario,
    cfg: &RunConfig,
    cache: &GainCache,
) -> Result<(ReportRow, SimulationTrace)> {
    let baseline = baseline_tts(scenario, cfg.capacity_drop)?;
    let trace = simulate(scenario, cfg, cache)?;
    Ok((row_for(scenario, cfg, baseline, Ok(&trace)), trace))
}

/// Random weight sweep over a rectangle of `(p1, p2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSpec {
    pub count: usize,
    pub p1_range: (f64, f64),
    pub p2_range: (f64, f64),
    pub seed: u64,
    pub controller: Controller,
    pub sigma: f64,
    pub capacity_drop: bool,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            count: 1000,
            p1_range: (-5.0, 2.0),
            p2_range: (-5.0, 2.0),
            seed: 1,
            controller: Controller::Lqi,
            sigma: 0.95,
            capacity_drop: true,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::validation("count", "at least one sample required"));
        }
        for (name, (lo, hi)) in [("p1_range", self.p1_range), ("p2_range", self.p2_range)] {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::validation(
                    name,
                    format!("need finite lo < hi, got [{lo}, {hi}]"),
                ));
            }
        }
        if self.controller == Controller::None {
            return Err(Error::validation("controller", "sweeps need lq or lqi"));
        }
        Ok(())
    }

    /// Sample set; a pure function of the seed. Both exponents are always
    /// drawn so LQ and LQI sweeps with one seed share their `p2` values.
    pub fn samples(&self) -> Vec<WeightConfig> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..self.count)
            .map(|_| {
                let p1 = rng.gen_range(self.p1_range.0..=self.p1_range.1);
                let p2 = rng.gen_range(self.p2_range.0..=self.p2_range.1);
                match self.controller {
                    Controller::Lq => WeightConfig::lq(p2),
                    _ => WeightConfig::lqi(p1, p2),
                }
            })
            .collect()
    }
}

/// Runs every sample of the sweep. Design failures end up in the row's
/// `error` field; rows keep sample order regardless of scheduling.
pub fn run_sweep(
    scenario: &Scenario,
    spec: &SweepSpec,
    cache: &GainCache,
) -> Result<ExperimentReport> {
    spec.validate()?;
    let baseline = baseline_tts(scenario, spec.capacity_drop)?;
    let configs: Vec<RunConfig> = spec
        .samples()
        .into_iter()
        .map(|w| RunConfig {
            controller: spec.controller,
            weights: w,
            sigma: spec.sigma,
            capacity_drop: spec.capacity_drop,
            activation_step: 0,
        })
        .collect();
    let one = |cfg: &RunConfig| {
        let res = simulate(scenario, cfg, cache);
        row_for(scenario, cfg, baseline, res.as_ref())
    };
    #[cfg(feature = "parallel")]
    let rows = {
        use rayon::prelude::*;
        configs.par_iter().map(one).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let rows = configs.iter().map(one).collect();
    Ok(ExperimentReport { rows })
}

const REPORT_HEADER: [&str; 13] = [
    "scenario",
    "controller",
    "capacity_drop",
    "activation_step",
    "sigma",
    "p1",
    "p2",
    "tts",
    "baseline_tts",
    "improvement_pct",
    "saturations",
    "max_relative_density",
    "error",
];

impl ExperimentReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(REPORT_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.scenario.clone(),
                r.controller.label().to_string(),
                r.capacity_drop.to_string(),
                r.activation_step.to_string(),
                r.sigma.to_string(),
                r.p1.to_string(),
                r.p2.to_string(),
                r.tts.to_string(),
                r.baseline_tts.to_string(),
                r.improvement_pct.to_string(),
                r.saturations.to_string(),
                r.max_relative_density.to_string(),
                r.error.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(input);
        let header = rd.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != REPORT_HEADER {
            return Err(Error::Parse(format!(
                "unexpected report header: {}",
                header.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut rows = Vec::new();
        for (no, rec) in rd.records().enumerate() {
            let rec = rec?;
            let at = |i: usize| rec.get(i).unwrap_or("");
            let line = no + 2;
            let f = |i: usize| -> Result<f64> {
                at(i)
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {line}, {}: {e}", REPORT_HEADER[i])))
            };
            let u = |i: usize| -> Result<usize> {
                at(i)
                    .parse::<usize>()
                    .map_err(|e| Error::Parse(format!("line {line}, {}: {e}", REPORT_HEADER[i])))
            };
            let b = |i: usize| -> Result<bool> {
                at(i)
                    .parse::<bool>()
                    .map_err(|e| Error::Parse(format!("line {line}, {}: {e}", REPORT_HEADER[i])))
            };
            rows.push(ReportRow {
                scenario: at(0).to_string(),
                controller: at(1).parse()?,
                capacity_drop: b(2)?,
                activation_step: u(3)?,
                sigma: f(4)?,
                p1: f(5)?,
                p2: f(6)?,
                tts: f(7)?,
                baseline_tts: f(8)?,
                improvement_pct: f(9)?,
                saturations: u(10)?,
                max_relative_density: f(11)?,
                error: Some(at(12).to_string()).filter(|s| !s.is_empty()),
            });
        }
        Ok(Self { rows })
    }
}

/// Table-1 style grid: one line per (scenario, capacity drop), one column per
/// controller variant, cells `TTS (improvement %)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryTable {
    pub columns: Vec<String>,
    pub rows: Vec<SummaryLine>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryLine {
    pub scenario: String,
    pub capacity_drop: bool,
    /// `(tts, improvement %)` per column.
    pub cells: Vec<Option<(f64, f64)>>,
}

fn column_label(r: &ReportRow) -> String {
    let mut s = match r.controller {
        Controller::None => "no-control".to_string(),
        Controller::Lq => format!("LQ (-inf, {})", r.p2),
        Controller::Lqi => format!("LQI ({}, {})", r.p1, r.p2),
    };
    if r.controller != Controller::None && r.activation_step > 0 {
        s += &format!(" from k_c={}", r.activation_step);
    }
    s
}

/// Builds the grid. Improvements are taken against the no-control row of the
/// same line when there is one, otherwise against each row's stored baseline.
/// Rows with errors are skipped.
pub fn summarize(reports: &[ExperimentReport]) -> SummaryTable {
    let rows: Vec<&ReportRow> = reports
        .iter()
        .flat_map(|r| r.rows.iter())
        .filter(|r| r.error.is_none())
        .collect();
    let mut columns: Vec<(Controller, String)> = Vec::new();
    for r in &rows {
        let key = (r.controller, column_label(r));
        if !columns.contains(&key) {
            columns.push(key);
        }
    }
    columns.sort_by_key(|a| a.0);
    let mut lines: BTreeMap<(String, std::cmp::Reverse<bool>), Vec<Option<(f64, f64)>>> =
        BTreeMap::new();
    let mut no_control: HashMap<(String, bool), f64> = HashMap::new();
    for r in &rows {
        if r.controller == Controller::None {
            no_control.insert((r.scenario.clone(), r.capacity_drop), r.tts);
        }
    }
    for r in &rows {
        let col = columns
            .iter()
            .position(|c| c.1 == column_label(r))
            .expect("column registered");
        let base = no_control
            .get(&(r.scenario.clone(), r.capacity_drop))
            .copied()
            .unwrap_or(r.baseline_tts);
        let cells = lines
            .entry((r.scenario.clone(), std::cmp::Reverse(r.capacity_drop)))
            .or_insert_with(|| vec![None; columns.len()]);
        cells[col] = Some((r.tts, improvement_pct(base, r.tts)));
    }
    SummaryTable {
        columns: columns.into_iter().map(|c| c.1).collect(),
        rows: lines
            .into_iter()
            .map(|((scenario, drop), cells)| SummaryLine {
                scenario,
                capacity_drop: drop.0,
                cells,
            })
            .collect(),
    }
}

impl SummaryTable {
    fn line_label(l: &SummaryLine) -> String {
        format!(
            "{} {} capacity drop",
            l.scenario,
            if l.capacity_drop { "with" } else { "without" }
        )
    }

    pub fn to_text(&self) -> String {
        let mut head = vec!["scenario".to_string()];
        head.extend(self.columns.iter().cloned());
        let body: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|l| {
                let mut v = vec![Self::line_label(l)];
                v.extend(l.cells.iter().map(|c| match c {
                    Some((t, p)) => format!("{t:.1} ({p:.1})"),
                    None => "-".into(),
                }));
                v
            })
            .collect();
        let widths: Vec<usize> = (0..head.len())
            .map(|i| {
                body.iter()
                    .map(|r| r[i].len())
                    .chain([head[i].len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = String::new();
        for r in std::iter::once(&head).chain(body.iter()) {
            let cells: Vec<String> = r
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (c, w))| {
                    if i == 0 {
                        format!("{c:<w$}")
                    } else {
                        format!("{c:>w$}")
                    }
                })
                .collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        }
        out
    }

    /// Long form: `scenario,capacity_drop,controller,tts,improvement_pct`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "scenario",
            "capacity_drop",
            "controller",
            "tts",
            "improvement_pct",
        ])?;
        for l in &self.rows {
            for (col, cell) in self.columns.iter().zip(&l.cells) {
                if let Some((t, p)) = cell {
                    w.write_record([
                        l.scenario.clone(),
                        l.capacity_drop.to_string(),
                        col.clone(),
                        t.to_string(),
                        p.to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario() -> Scenario {
        Scenario::from_toml_str(include_str!("../scenarios/uncongested.toml")).unwrap()
    }

    #[test]
    fn controller_parsing() {
        assert_eq!("LQI".parse::<Controller>().unwrap(), Controller::Lqi);
        assert_eq!("none".parse::<Controller>().unwrap(), Controller::None);
        assert!("mpc".parse::<Controller>().is_err());
    }

    #[test]
    fn samples_depend_only_on_seed() {
        let spec = SweepSpec {
            count: 50,
            ..SweepSpec::default()
        };
        assert_eq!(spec.samples(), spec.samples());
        let other = SweepSpec { seed: 2, ..spec };
        assert_ne!(spec.samples(), other.samples());
        assert!(spec
            .samples()
            .iter()
            .all(|w| (-5.0..=2.0).contains(&w.p1) && (-5.0..=2.0).contains(&w.p2)));
        let lq = SweepSpec {
            controller: Controller::Lq,
            ..spec
        };
        for (a, b) in lq.samples().iter().zip(spec.samples()) {
            assert!(a.is_lq());
            assert_eq!(a.p2, b.p2);
        }
    }

    #[test]
    fn sweep_spec_validation() {
        assert!(SweepSpec {
            count: 0,
            ..SweepSpec::default()
        }
        .validate()
        .is_err());
        assert!(SweepSpec {
            p1_range: (1.0, 1.0),
            ..SweepSpec::default()
        }
        .validate()
        .is_err());
        assert!(SweepSpec {
            controller: Controller::None,
            ..SweepSpec::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn single_sample_sweep_matches_run_experiment() {
        let s = scenario();
        let spec = SweepSpec {
            count: 1,
            ..SweepSpec::default()
        };
        let cache = GainCache::new();
        let rep = run_sweep(&s, &spec, &cache).unwrap();
        let w = spec.samples()[0];
        let cfg = RunConfig {
            controller: Controller::Lqi,
            weights: w,
            sigma: 0.95,
            capacity_drop: true,
            activation_step: 0,
        };
        let (row, _) = run_experiment(&s, &cfg, &cache).unwrap();
        assert_eq!(rep.rows, vec![row]);
        assert_eq!(cache.len(), 1);
    }

    #[test]
    fn no_control_row_has_zero_improvement() {
        let s = scenario();
        let (row, trace) =
            run_experiment(&s, &RunConfig::no_control(true), &GainCache::new()).unwrap();
        assert_eq!(row.improvement_pct, 0.0);
        assert_eq!(row.tts, trace.tts);
        let table = summarize(&[ExperimentReport { rows: vec![row] }]);
        assert_eq!(table.columns, vec!["no-control"]);
        assert_eq!(table.rows[0].cells[0].unwrap().1, 0.0);
    }

    #[test]
    fn empty_summary_has_header_only() {
        let t = summarize(&[]);
        assert!(t.rows.is_empty());
        assert_eq!(t.to_text().trim(), "scenario");
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap().trim(),
            "scenario,capacity_drop,controller,tts,improvement_pct"
        );
    }

    #[test]
    fn lqi_without_finite_p1_is_rejected() {
        let cfg = RunConfig {
            weights: WeightConfig::lq(-3.0),
            ..RunConfig::lqi(0.0, 0.0, true)
        };
        assert!(run_experiment(&scenario(), &cfg, &GainCache::new()).is_err());
    }

    #[test]
    fn report_csv_round_trip() {
        let rows = vec![
            ReportRow {
                scenario: "x".into(),
                controller: Controller::Lq,
                capacity_drop: false,
                activation_step: 12,
                sigma: 0.95,
                p1: f64::NEG_INFINITY,
                p2: -3.0,
                tts: 1.0 / 3.0,
                baseline_tts: 200.123456789,
                improvement_pct: improvement_pct(200.123456789, 1.0 / 3.0),
                saturations: 4,
                max_relative_density: 0.9,
                error: None,
            },
            ReportRow {
                scenario: "y, quoted".into(),
                controller: Controller::Lqi,
                capacity_drop: true,
                activation_step: 0,
                sigma: 1.0,
                p1: -1.0,
                p2: 2.0,
                tts: f64::NAN,
                baseline_tts: 1.0,
                improvement_pct: f64::NAN,
                saturations: 0,
                max_relative_density: f64::NAN,
                error: Some("design error: boom".into()),
            },
        ];
        let rep = ExperimentReport { rows };
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let back = ExperimentReport::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.rows[0], rep.rows[0]);
        assert_eq!(back.rows[1].error, rep.rows[1].error);
        assert!(back.rows[1].tts.is_nan());
        assert_eq!(
            back.rows[0].improvement_pct,
            improvement_pct(back.rows[0].baseline_tts, back.rows[0].tts)
        );
    }
}
