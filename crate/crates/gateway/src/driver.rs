//! The single owner of the running engine. Sessions reach it only through
//! [`DriverCommand`]s; it publishes [`Snapshot`]s into a latest-wins slot.

use crate::protocol::{RobotView, RunState, Snapshot, SnapshotTag, TrackView};
use skywatch_core::coordination::{CoordinationError, MissionMode};
use skywatch_core::perception::{bbox_overlay, best_track};
use skywatch_core::runner::{Engine, EngineOptions, InvalidConfig, MetricsAccumulator, ScenarioConfig};
use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;
use tokio::sync::{mpsc, oneshot, watch};
use tokio::time::{Instant, MissedTickBehavior};

/// Most simulated time the driver will catch up in one tick after a stall.
const MAX_CATCH_UP_S: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunControl {
    Start,
    Pause,
    Reset,
}

/// A request from a session, answered over `reply`.
#[derive(Debug)]
pub enum DriverCommand {
    /// Install `mode` at the next control tick. Numbered edits receive a
    /// fresh path id.
    Edit {
        robot_id: u8,
        mode: MissionMode,
        numbered: bool,
        reply: oneshot::Sender<Result<Option<u64>, CoordinationError>>,
    },
    Run { control: RunControl, reply: oneshot::Sender<RunState> },
}

/// Engine plus run control, stepped in simulated time.
#[derive(Debug, Clone)]
pub struct Driver {
    base: ScenarioConfig,
    engine: Engine,
    metrics: MetricsAccumulator,
    state: RunState,
    epoch: u64,
    next_path_id: u64,
    target_t: f64,
}

impl Driver {
    pub fn new(cfg: ScenarioConfig) -> Result<Self, InvalidConfig> {
        let engine = Engine::new(cfg.clone(), EngineOptions::default())?;
        let metrics = MetricsAccumulator::new(engine.config());
        Ok(Self { base: cfg, engine, metrics, state: RunState::Idle, epoch: 0, next_path_id: 1, target_t: 0.0 })
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn run_state(&self) -> RunState {
        self.state
    }

    pub fn control(&mut self, c: RunControl) -> RunState {
        match c {
            RunControl::Start if !self.engine.is_finished() => {
                self.state = RunState::Running;
                self.target_t = self.engine.t();
            }
            RunControl::Start => {}
            RunControl::Pause if self.state == RunState::Running => self.state = RunState::Paused,
            RunControl::Pause => {}
            RunControl::Reset => {
                self.engine = Engine::new(self.base.clone(), EngineOptions::default()).expect("validated at start");
                self.metrics = MetricsAccumulator::new(self.engine.config());
                self.state = RunState::Idle;
                self.epoch += 1;
                self.target_t = 0.0;
            }
        }
        self.state
    }

    pub fn edit(&mut self, robot_id: u8, mode: MissionMode, numbered: bool) -> Result<Option<u64>, CoordinationError> {
        self.engine.queue_edit(robot_id, mode)?;
        Ok(numbered.then(|| {
            self.next_path_id += 1;
            self.next_path_id - 1
        }))
    }

    pub fn handle(&mut self, cmd: DriverCommand) {
        match cmd {
            DriverCommand::Edit { robot_id, mode, numbered, reply } => {
                let _ = reply.send(self.edit(robot_id, mode, numbered));
            }
            DriverCommand::Run { control, reply } => {
                let _ = reply.send(self.control(control));
            }
        }
    }

    /// Steps through `sim_s` more seconds of simulated time while running.
    pub fn advance(&mut self, sim_s: f64) {
        if self.state != RunState::Running {
            return;
        }
        let dt = self.engine.config().rates.sim_dt;
        self.target_t = (self.target_t + sim_s).min(self.engine.t() + MAX_CATCH_UP_S);
        let metrics = &mut self.metrics;
        while !self.engine.is_finished() && self.engine.t() + 0.5 * dt <= self.target_t {
            self.engine.step(&mut |ev| metrics.observe(&ev));
        }
        if self.engine.is_finished() {
            self.state = RunState::Idle;
        }
    }

    pub fn snapshot(&self) -> Snapshot {
        let cfg = self.engine.config();
        let mission = self.engine.mission();
        let h = &cfg.camera.homography;
        let tracks = self.engine.tracks();
        let boxes: BTreeMap<u8, _> =
            bbox_overlay(tracks, h, |id| mission.body_radius(id).unwrap_or(0.0)).into_iter().collect();
        let robots = self
            .engine
            .world()
            .robots
            .iter()
            .map(|r| {
                let id = r.id();
                let mode = mission.mode(id);
                let boundary = match mode {
                    Some(MissionMode::BoundedWander { boundary }) => Some(boundary.vertices().to_vec()),
                    Some(MissionMode::Coverage { area, .. }) => Some(area.vertices().to_vec()),
                    _ => None,
                };
                RobotView {
                    id,
                    pose: r.pose,
                    track: best_track(tracks, id).map(|tr| TrackView { pose: tr.pose_est, status: tr.status }),
                    bbox: boxes.get(&id).copied(),
                    mode: mode.map_or("idle", MissionMode::name).to_string(),
                    path: mission.active_path(id).map(|p| p.points().to_vec()),
                    boundary,
                    coverage: self.metrics.robot_coverage(id),
                }
            })
            .collect();
        Snapshot {
            tag: SnapshotTag::Snapshot,
            t: self.engine.t(),
            epoch: self.epoch,
            run_state: self.state,
            robots,
            coverage: self.metrics.coverage_fraction().unwrap_or(0.0),
            frame_digest: self.engine.last_frame_digest().map(|d| format!("{d:016x}")),
        }
    }
}

/// Pacing of the driver task.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriverTiming {
    /// Simulated seconds per wall-clock second.
    pub speed: f64,
    /// Wall-clock period between stepping rounds.
    pub tick: Duration,
}

impl Default for DriverTiming {
    fn default() -> Self {
        Self { speed: 1.0, tick: Duration::from_millis(10) }
    }
}

/// Runs `driver` until every command sender is dropped, publishing a
/// snapshot after each stepping round and each command.
pub async fn drive(
    mut driver: Driver,
    mut commands: mpsc::Receiver<DriverCommand>,
    snapshots: watch::Sender<Arc<Snapshot>>,
    timing: DriverTiming,
) {
    let mut ticker = tokio::time::interval(timing.tick);
    ticker.set_missed_tick_behavior(MissedTickBehavior::Skip);
    let mut last = Instant::now();
    loop {
        tokio::select! {
            cmd = commands.recv() => match cmd {
                Some(cmd) => driver.handle(cmd),
                None => break,
            },
            now = ticker.tick() => {
                driver.advance((now - last).as_secs_f64() * timing.speed);
                last = now;
            }
        }
        snapshots.send_replace(Arc::new(driver.snapshot()));
    }
}
