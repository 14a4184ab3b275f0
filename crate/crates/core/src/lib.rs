//! Internal boundary control of bidirectional lane-free highway traffic.
//!
//! The crate holds the extended cell transmission model used as the plant,
//! the linearised relative-density design model, LQ/LQI gain design through
//! the discrete Riccati recursion, the closed-loop regulator and the
//! experiment harness (scenario files, robustness sweeps, TTS tables).

pub mod ctm;
pub mod design;
pub mod error;
pub mod experiment;
pub mod export;
pub mod linearize;
pub mod model;
pub mod profile;
pub mod regulator;
pub mod scenario;

pub use design::{design_gains, GainSet, WeightConfig};
pub use error::{Error, Result};
pub use experiment::{
    run_experiment, run_sweep, summarize, Controller, ExperimentReport, GainCache, RunConfig,
    SweepSpec,
};
pub use model::{Direction, ModelParams, SharingFactor};
pub use regulator::run_closed_loop;
pub use scenario::{load_scenario, Scenario};
