//! Headless scenario execution: configuration, the closed loop, metrics and
//! JSON-lines traces that replay to the same metrics.

mod config;
mod engine;
mod metrics;
mod trace;

pub use config::{
    validate_mode, CameraConfig, InvalidConfig, MissionConfig, NoiseConfig, Rates, RobotModeConfig, ScenarioConfig,
};
pub use engine::{derive_seed, Engine, EngineOptions};
pub use metrics::{MetricsAccumulator, MetricsReport, RobotMetrics};
pub use trace::{read_events, DetectionRecord, Event, EventData, ReplayError, RobotPose, TrackRecord, TRACE_FORMAT};

use std::io::{BufRead, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error(transparent)]
    InvalidConfig(#[from] InvalidConfig),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error("trace output: {0}")]
    Io(#[from] std::io::Error),
}

/// Runs `cfg` to completion, handing every event to `sink`.
pub fn run_with(
    cfg: ScenarioConfig,
    opts: EngineOptions,
    sink: &mut dyn FnMut(&Event),
) -> Result<MetricsReport, InvalidConfig> {
    let mut engine = Engine::new(cfg, opts)?;
    let mut acc = MetricsAccumulator::new(engine.config());
    let header = engine.header();
    sink(&header);
    while !engine.is_finished() {
        engine.step(&mut |ev| {
            acc.observe(&ev);
            sink(&ev);
        });
    }
    let end = engine.end_event();
    acc.observe(&end);
    sink(&end);
    Ok(acc.finish())
}

pub fn run_scenario(cfg: ScenarioConfig) -> Result<MetricsReport, InvalidConfig> {
    run_with(cfg, EngineOptions::default(), &mut |_| {})
}

/// Runs `cfg` and writes its trace, one event per line.
pub fn record_trace(
    cfg: ScenarioConfig,
    opts: EngineOptions,
    out: &mut dyn Write,
) -> Result<MetricsReport, RunnerError> {
    let mut io_err = None;
    let report = run_with(cfg, opts, &mut |ev| {
        if io_err.is_none() {
            if let Err(e) = writeln!(out, "{}", ev.to_line()) {
                io_err = Some(e);
            }
        }
    })?;
    match io_err {
        Some(e) => Err(e.into()),
        None => Ok(report),
    }
}

/// Recomputes the metrics of a recorded trace without simulating.
pub fn replay(reader: impl BufRead) -> Result<MetricsReport, ReplayError> {
    let events = read_events(reader)?;
    let EventData::Header { config, .. } = &events[0].data else {
        unreachable!("read_events checks the header");
    };
    config.validate().map_err(|e| ReplayError { line: 1, message: e.to_string() })?;
    let mut acc = MetricsAccumulator::new(config);
    for ev in &events[1..] {
        acc.observe(ev);
    }
    Ok(acc.finish())
}
