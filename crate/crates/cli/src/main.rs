use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ibc_core::design::design_gains;
use ibc_core::export::{write_gains, write_trace_csv};
use ibc_core::{
    load_scenario, run_experiment, run_sweep, summarize, Controller, Error, ExperimentReport,
    GainCache, RunConfig, SweepSpec, WeightConfig,
};

#[derive(Parser, Debug)]
#[command(
    name = "ibc",
    version,
    about = "Lane-free bidirectional highway with internal boundary control"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    None,
    Lq,
    Lqi,
}

impl From<Mode> for Controller {
    fn from(m: Mode) -> Self {
        match m {
            Mode::None => Controller::None,
            Mode::Lq => Controller::Lq,
            Mode::Lqi => Controller::Lqi,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Text,
    Csv,
}

#[derive(clap::Args, Debug)]
struct DesignArgs {
    /// Integral weight exponent, S = 10^p1 I (ignored for lq)
    #[arg(long, default_value_t = -2.5, allow_hyphen_values = true)]
    p1: f64,
    /// Input weight exponent, R = 10^p2 I
    #[arg(long, default_value_t = -3.0, allow_hyphen_values = true)]
    p2: f64,
    /// Mainstream share used by the design model
    #[arg(long, default_value_t = 0.95)]
    sigma: f64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one experiment; prints the report row as CSV
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Lqi)]
        controller: Mode,
        #[command(flatten)]
        design: DesignArgs,
        #[arg(long, value_enum, default_value_t = Switch::On)]
        capacity_drop: Switch,
        /// Control step at which the regulator is switched on
        #[arg(long, default_value_t = 0)]
        activation_step: usize,
        /// Per-step, per-section trace CSV
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Report CSV (stdout when absent)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve for the regulator gains and write the gain file
    Design {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Lqi)]
        controller: Mode,
        #[command(flatten)]
        design: DesignArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Random (p1, p2) sweep; one report row per sample
    Sweep {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Lqi)]
        controller: Mode,
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = -5.0, allow_hyphen_values = true)]
        p1_min: f64,
        #[arg(long, default_value_t = 2.0, allow_hyphen_values = true)]
        p1_max: f64,
        #[arg(long, default_value_t = -5.0, allow_hyphen_values = true)]
        p2_min: f64,
        #[arg(long, default_value_t = 2.0, allow_hyphen_values = true)]
        p2_max: f64,
        #[arg(long, default_value_t = 0.95)]
        sigma: f64,
        #[arg(long, value_enum, default_value_t = Switch::On)]
        capacity_drop: Switch,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Collect report files into a TTS / improvement table
    Summarize {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Failure as printed on stderr: one JSON object per line.
#[derive(Debug)]
struct Failure {
    kind: &'static str,
    field: Option<String>,
    message: String,
    path: Option<PathBuf>,
}

impl Failure {
    fn at(mut self, path: &Path) -> Self {
        self.path.get_or_insert_with(|| path.to_path_buf());
        self
    }

    fn line(&self) -> String {
        let mut obj = serde_json::Map::new();
        obj.insert("error".into(), self.kind.into());
        obj.insert("message".into(), self.message.clone().into());
        if let Some(f) = &self.field {
            obj.insert("field".into(), f.clone().into());
        }
        if let Some(p) = &self.path {
            obj.insert("path".into(), p.display().to_string().into());
        }
        serde_json::Value::Object(obj).to_string()
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let (kind, field) = match &e {
            Error::Domain(_) => ("domain", None),
            Error::Validation { field, .. } => ("validation", Some(field.clone())),
            Error::Parse(_) => ("parse", None),
            Error::Design(_) => ("design", None),
            Error::Invariant(_) => ("invariant", None),
            Error::Io(_) => ("io", None),
            Error::Csv(_) => ("parse", None),
        };
        Failure {
            kind,
            field,
            message: e.to_string(),
            path: None,
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Error::Io(e).into()
    }
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Failure::from(e).at(p))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate {
            scenario,
            controller,
            design,
            capacity_drop,
            activation_step,
            trace,
            out,
        } => {
            let scn = load_scenario(&scenario).map_err(|e| Failure::from(e).at(&scenario))?;
            let cfg = RunConfig {
                controller: controller.into(),
                weights: WeightConfig::lqi(design.p1, design.p2),
                sigma: design.sigma,
                capacity_drop: matches!(capacity_drop, Switch::On),
                activation_step,
            };
            let (row, tr) = run_experiment(&scn, &cfg, &GainCache::new())?;
            if let Some(p) = &trace {
                let f = File::create(p).map_err(|e| Failure::from(e).at(p))?;
                write_trace_csv(&tr, BufWriter::new(f)).map_err(|e| Failure::from(e).at(p))?;
            }
            ExperimentReport { rows: vec![row] }.write_csv(sink(out.as_deref())?)?;
        }
        Command::Design {
            scenario,
            controller,
            design,
            out,
        } => {
            let scn = load_scenario(&scenario).map_err(|e| Failure::from(e).at(&scenario))?;
            let weights = match controller {
                Mode::Lq => WeightConfig::lq(design.p2),
                Mode::Lqi => WeightConfig::lqi(design.p1, design.p2),
                Mode::None => {
                    return Err(Failure {
                        kind: "validation",
                        field: Some("controller".into()),
                        message: "no gains to design for controller `none`".into(),
                        path: None,
                    })
                }
            };
            let gains = design_gains(&scn, design.sigma, weights)?;
            let mut w = sink(out.as_deref())?;
            write_gains(&gains, &mut w)?;
            w.flush()?;
        }
        Command::Sweep {
            scenario,
            controller,
            count,
            seed,
            p1_min,
            p1_max,
            p2_min,
            p2_max,
            sigma,
            capacity_drop,
            out,
        } => {
            let scn = load_scenario(&scenario).map_err(|e| Failure::from(e).at(&scenario))?;
            let spec = SweepSpec {
                count,
                p1_range: (p1_min, p1_max),
                p2_range: (p2_min, p2_max),
                seed,
                controller: controller.into(),
                sigma,
                capacity_drop: matches!(capacity_drop, Switch::On),
            };
            let rep = run_sweep(&scn, &spec, &GainCache::new())?;
            rep.write_csv(sink(out.as_deref())?)?;
        }
        Command::Summarize {
            reports,
            format,
            out,
        } => {
            let mut all = Vec::with_capacity(reports.len());
            for p in &reports {
                let f = File::open(p).map_err(|e| Failure::from(e).at(p))?;
                all.push(
                    ExperimentReport::read_csv(BufReader::new(f))
                        .map_err(|e| Failure::from(e).at(p))?,
                );
            }
            let table = summarize(&all);
            let mut w = sink(out.as_deref())?;
            match format {
                Format::Text => w.write_all(table.to_text().as_bytes())?,
                Format::Csv => table.write_csv(&mut w)?,
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help / --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let f = Failure {
                kind: "usage",
                field: None,
                message: e.kind().to_string(),
                path: None,
            };
            eprint!("{}", e.render());
            eprintln!("{}", f.line());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.line());
            ExitCode::FAILURE
        }
    }
}
