use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use modefusion::config::RunConfig;
use modefusion::pipeline::{self, PipelineError};
use modefusion::synth::{generate_city, CitySpec, SynthError};
use serde_json::json;

#[derive(Parser)]
#[command(name = "modefusion", version, about = "Trip-diary fusion and mode-choice evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Run configuration (TOML).
    #[arg(short, long)]
    config: PathBuf,
    /// Override a configuration value, e.g. `--set window.delta_f=900`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig, PipelineError> {
        Ok(RunConfig::load(&self.config, &self.overrides)?)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Match raw vehicle positions to the planned feed and write the segment store.
    IngestTraces {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        traces: PathBuf,
    },
    /// Rebuild operated timetables from the segment store.
    BuildRealGtfs {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Service dates to rebuild; all stored dates when omitted.
        #[arg(long = "date")]
        dates: Vec<NaiveDate>,
    },
    /// Fuse survey trips into labelled instances.
    Fuse {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Run the scenario and classifier evaluation.
    Evaluate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Instance file; defaults to the fusion output.
        #[arg(long)]
        instances: Option<PathBuf>,
    },
    /// Generate a synthetic city fixture set.
    Synth {
        /// City specification (TOML); built-in defaults when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a summary of report.json.
    Report { path: PathBuf },
}

fn emit(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn print_json(v: &impl serde::Serialize) {
    emit(&(serde_json::to_string_pretty(v).expect("summary serialises") + "\n"));
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::IngestTraces { cfg, traces } => {
            let s = pipeline::run_ingest(&cfg.load()?, &traces)?;
            emit(&format!("matched {} unmatched {} corrupt {}\n", s.stats.matched, s.stats.unmatched, s.read.corrupt));
            print_json(&s);
        }
        Command::BuildRealGtfs { cfg, dates } => print_json(&pipeline::run_build_real(&cfg.load()?, &dates)?),
        Command::Fuse { cfg } => print_json(&pipeline::run_fuse(&cfg.load()?)?.manifest),
        Command::Evaluate { cfg, instances } => {
            let report = pipeline::run_evaluate(&cfg.load()?, instances.as_deref())?;
            emit(&pipeline::render_report(&report));
        }
        Command::Synth { spec, seed, out } => {
            let mut city = match spec {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).map_err(|e| SynthError::Config(format!("{}: {e}", p.display())))?;
                    CitySpec::from_toml(&text)?
                }
                None => CitySpec::default(),
            };
            if let Some(s) = seed {
                city.seed = s;
            }
            let report = generate_city(&city, &out)?;
            print_json(&json!({ "out": out, "report": report }));
        }
        Command::Report { path } => emit(&pipeline::render_report(&pipeline::read_report(&path)?)),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
