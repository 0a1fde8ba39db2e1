use anyhow::Context;
use clap::{Parser, Subcommand};
use skywatch_core::runner::{record_trace, replay, run_scenario, EngineOptions, MetricsReport, RunnerError, ScenarioConfig};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;
use tracing_subscriber::EnvFilter;

const EXIT_INVALID_CONFIG: u8 = 2;
const EXIT_REPLAY: u8 = 3;

#[derive(Parser)]
#[command(name = "skywatch", version, about = "Overhead-camera ground-robot coordination: headless runs, replay, live gateway")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario headless and print its metrics.
    Run {
        scenario: PathBuf,
        /// Override the scenario's rng seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Write the metrics report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Record a JSON-lines trace.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Store every rendered frame in the trace.
        #[arg(long, requires = "trace")]
        full_frames: bool,
    },
    /// Recompute metrics from a recorded trace.
    Replay {
        trace: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve a scenario to the operator console over WebSocket.
    Serve {
        #[arg(long, default_value_t = skywatch_gateway::DEFAULT_PORT)]
        port: u16,
        #[arg(long)]
        scenario: PathBuf,
    },
}

enum Failure {
    InvalidConfig(String),
    Replay(String),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

fn load_config(path: &Path) -> Result<ScenarioConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::Other)?;
    ScenarioConfig::from_json(&text).map_err(|e| Failure::InvalidConfig(e.to_string()))
}

fn write_report(report: &MetricsReport, out: Option<&Path>) -> Result<(), Failure> {
    let json = report.to_json_pretty();
    match out {
        Some(p) => std::fs::write(p, json + "\n").with_context(|| format!("writing {}", p.display()))?,
        None => writeln!(std::io::stdout().lock(), "{json}").context("writing report")?,
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { scenario, seed, out, trace, full_frames } => {
            let mut cfg = load_config(&scenario)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let started = Instant::now();
            let report = match trace {
                Some(path) => {
                    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                    let mut w = BufWriter::new(file);
                    let report = record_trace(cfg, EngineOptions { full_frames }, &mut w).map_err(|e| match e {
                        RunnerError::InvalidConfig(e) => Failure::InvalidConfig(e.to_string()),
                        other => Failure::Other(other.into()),
                    })?;
                    w.flush().context("flushing trace")?;
                    report
                }
                None => run_scenario(cfg).map_err(|e| Failure::InvalidConfig(e.to_string()))?,
            };
            tracing::info!(wall_clock_s = started.elapsed().as_secs_f64(), "run finished");
            write_report(&report, out.as_deref())
        }
        Command::Replay { trace, out } => {
            let file = File::open(&trace).with_context(|| format!("opening {}", trace.display()))?;
            let report = replay(BufReader::new(file)).map_err(|e| Failure::Replay(e.to_string()))?;
            write_report(&report, out.as_deref())
        }
        Command::Serve { port, scenario } => {
            let cfg = load_config(&scenario)?;
            let rt = tokio::runtime::Runtime::new().context("starting runtime")?;
            rt.block_on(skywatch_gateway::serve(cfg, port)).map_err(|e| match e {
                skywatch_gateway::ServeError::InvalidConfig(e) => Failure::InvalidConfig(e.to_string()),
                other => Failure::Other(other.into()),
            })
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_env("SKYWATCH_LOG").unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::InvalidConfig(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_INVALID_CONFIG)
        }
        Err(Failure::Replay(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_REPLAY)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
