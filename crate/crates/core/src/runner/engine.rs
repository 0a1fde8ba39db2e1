use super::config::{InvalidConfig, ScenarioConfig};
use super::trace::{DetectionRecord, Event, EventData, RobotPose, TrackRecord, TRACE_FORMAT};
use crate::control::Neighbor;
use crate::coordination::{mission_step, CoordinationError, CoordinatorState, Mission, MissionMode};
use crate::link::{decode_command, encode_command, seq_newer, Channel, CommandFrame, SendOutcome};
use crate::perception::{detect_scene, Detection, ObstacleDetection, Track, Tracker};
use crate::sim::{render_frame, Frame, Pose2, Twist, WorldState};
use base64::Engine as _;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::collections::BTreeMap;

/// Delivery times within this much of the current step count as due.
const POLL_EPS: f64 = 1e-9;
/// Gate for matching obstacle blobs between frames (m).
const OBSTACLE_GATE_M: f64 = 0.5;

/// Seed for one consumer of the scenario's random stream.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h = (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3);
    }
    // splitmix64 finalizer
    let mut z = master ^ h;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EngineOptions {
    /// Embed base64 OVF1 frame dumps in frame events.
    pub full_frames: bool,
}

/// Detection noise source; inactive when both sigmas are zero.
#[derive(Debug, Clone)]
struct Noise {
    rng: ChaCha8Rng,
    pos: Option<Normal<f64>>,
    heading: Option<Normal<f64>>,
}

impl Noise {
    fn apply(&mut self, dets: &mut [Detection]) {
        for d in dets {
            let p = &mut d.ground_pose;
            if let Some(n) = self.pos {
                let (dx, dy) = (n.sample(&mut self.rng), n.sample(&mut self.rng));
                *p = Pose2::new(p.x + dx, p.y + dy, p.theta);
            }
            if let Some(n) = self.heading {
                *p = Pose2::new(p.x, p.y, p.theta + n.sample(&mut self.rng));
            }
        }
    }
}

/// The fixed-step closed loop, advanced one `sim_dt` at a time.
///
/// Per step `k` at `t = k·sim_dt`: render, detect and track on frame
/// ticks; plan and send on control ticks; deliver due commands; step the
/// world to `(k+1)·sim_dt`.
#[derive(Debug, Clone)]
pub struct Engine {
    cfg: ScenarioConfig,
    opts: EngineOptions,
    world: WorldState,
    tracker: Tracker,
    obstacles: Vec<Neighbor>,
    mission: Mission,
    coord: CoordinatorState,
    channel: Channel,
    noise: Noise,
    next_seq: BTreeMap<u8, u16>,
    applied_seq: BTreeMap<u8, u16>,
    edits: Vec<(u8, MissionMode)>,
    step: u64,
    n_steps: u64,
    steps_per_frame: u64,
    steps_per_control: u64,
    frames_total: u64,
    controls_total: u64,
    frames: u64,
    controls: u64,
    superseded_seen: u64,
    last_digest: Option<u64>,
    last_detections: Vec<Detection>,
}

impl Engine {
    pub fn new(cfg: ScenarioConfig, opts: EngineOptions) -> Result<Self, InvalidConfig> {
        cfg.validate()?;
        let world = WorldState::new(cfg.arena.clone(), cfg.robots.clone(), cfg.obstacles.clone(), cfg.markings.clone())
            .map_err(|e| InvalidConfig::new("robots", e.to_string()))?;
        let mut mission = Mission::new(cfg.arena.clone(), cfg.mission.deconfliction.clone());
        for r in &cfg.robots {
            mission.add_robot(r.id, r.body_radius);
        }
        for (i, m) in cfg.mission.robots.iter().enumerate() {
            mission
                .set_mode(m.id, m.mode.clone())
                .map_err(|e| InvalidConfig::new(format!("mission.robots[{i}].mode"), e.to_string()))?;
        }
        let rates = &cfg.rates;
        let spf = rates.steps_per(rates.frame_hz).expect("validated");
        let spc = rates.steps_per(rates.control_hz).expect("validated");
        let n_steps = (cfg.duration_s / rates.sim_dt + 1e-9).floor() as u64;
        let count = |hz: f64| (cfg.duration_s * hz + 1e-9).floor() as u64;
        let normal = |s: f64| (s > 0.0).then(|| Normal::new(0.0, s).expect("finite sigma"));
        Ok(Self {
            world,
            tracker: Tracker::new(cfg.perception.clone()),
            obstacles: Vec::new(),
            mission,
            coord: CoordinatorState::default(),
            channel: Channel::new(cfg.link.clone(), derive_seed(cfg.seed, "link")),
            noise: Noise {
                rng: ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "noise")),
                pos: normal(cfg.noise.position_sigma_m),
                heading: normal(cfg.noise.heading_sigma_rad),
            },
            next_seq: BTreeMap::new(),
            applied_seq: BTreeMap::new(),
            edits: Vec::new(),
            step: 0,
            n_steps,
            steps_per_frame: spf,
            steps_per_control: spc,
            frames_total: count(rates.frame_hz),
            controls_total: count(rates.control_hz),
            frames: 0,
            controls: 0,
            superseded_seen: 0,
            last_digest: None,
            last_detections: Vec::new(),
            opts,
            cfg,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn tracks(&self) -> &[Track] {
        self.tracker.tracks()
    }

    pub fn mission(&self) -> &Mission {
        &self.mission
    }

    pub fn t(&self) -> f64 {
        self.world.t
    }

    pub fn steps_done(&self) -> u64 {
        self.step
    }

    pub fn total_steps(&self) -> u64 {
        self.n_steps
    }

    pub fn is_finished(&self) -> bool {
        self.step >= self.n_steps
    }

    pub fn last_frame_digest(&self) -> Option<u64> {
        self.last_digest
    }

    pub fn last_detections(&self) -> &[Detection] {
        &self.last_detections
    }

    pub fn frames_rendered(&self) -> u64 {
        self.frames
    }

    pub fn control_ticks(&self) -> u64 {
        self.controls
    }

    /// Queues a mode change, applied at the next control tick.
    pub fn queue_edit(&mut self, robot_id: u8, mode: MissionMode) -> Result<(), CoordinationError> {
        if self.mission.mode(robot_id).is_none() {
            return Err(CoordinationError::UnknownRobot(robot_id));
        }
        self.edits.push((robot_id, mode));
        Ok(())
    }

    pub fn header(&self) -> Event {
        Event { t: 0.0, data: EventData::Header { format: TRACE_FORMAT, config: Box::new(self.cfg.clone()) } }
    }

    pub fn end_event(&self) -> Event {
        Event {
            t: self.world.t,
            data: EventData::End { steps: self.step, frames: self.frames, control_ticks: self.controls },
        }
    }

    /// Advances one step, handing every event produced to `emit`. Does
    /// nothing once the configured duration is reached.
    pub fn step(&mut self, emit: &mut dyn FnMut(Event)) {
        if self.is_finished() {
            return;
        }
        let k = self.step;
        let dt = self.cfg.rates.sim_dt;
        let t = k as f64 * dt;

        if k.is_multiple_of(self.steps_per_frame) && self.frames < self.frames_total {
            self.frame_tick(t, emit);
        }
        if k.is_multiple_of(self.steps_per_control) && self.controls < self.controls_total {
            self.control_tick(t, emit);
        }
        self.deliver(t, emit);

        self.world.advance_to((k + 1) as f64 * dt).expect("positive step");
        self.step += 1;
        let total: u64 = self.world.robots.iter().map(|r| r.superseded).sum();
        let superseded = total - self.superseded_seen;
        self.superseded_seen = total;
        emit(Event {
            t: self.world.t,
            data: EventData::World {
                robots: self.world.robots.iter().map(|r| RobotPose { id: r.id(), pose: r.pose }).collect(),
                obstacles: self.world.obstacles.iter().map(|o| o.center).collect(),
                superseded,
            },
        });
    }

    fn frame_tick(&mut self, t: f64, emit: &mut dyn FnMut(Event)) {
        let cam = &self.cfg.camera;
        let frame: Frame = render_frame(&self.world, &cam.homography, cam.width, cam.height);
        let digest = frame.digest();
        let (mut dets, obstacle_dets) = detect_scene(&frame, &cam.homography, self.cfg.perception.min_blob_px);
        self.noise.apply(&mut dets);
        self.update_obstacles(&obstacle_dets);
        let tracks = self.tracker.update(&dets, t).expect("frame times increase");
        let tracks: Vec<TrackRecord> = tracks.iter().map(TrackRecord::from).collect();

        emit(Event {
            t,
            data: EventData::Frame {
                index: self.frames,
                digest: format!("{digest:016x}"),
                detections: dets.iter().map(|d| DetectionRecord { robot_id: d.robot_id, pose: d.ground_pose }).collect(),
                ovf1: self
                    .opts
                    .full_frames
                    .then(|| base64::engine::general_purpose::STANDARD.encode(frame.to_bytes())),
            },
        });
        emit(Event { t, data: EventData::Tracks { tracks } });
        self.frames += 1;
        self.last_digest = Some(digest);
        self.last_detections = dets;
    }

    /// Matches obstacle blobs to the previous frame's and estimates their
    /// velocity by smoothed finite differences.
    fn update_obstacles(&mut self, dets: &[ObstacleDetection]) {
        let frame_dt = 1.0 / self.cfg.rates.frame_hz;
        let prev = std::mem::take(&mut self.obstacles);
        self.obstacles = dets
            .iter()
            .map(|d| {
                let matched = prev
                    .iter()
                    .map(|p| (p, p.center.dist(d.center)))
                    .filter(|(_, dist)| *dist <= OBSTACLE_GATE_M)
                    .min_by(|a, b| a.1.total_cmp(&b.1));
                let velocity = match matched {
                    Some((p, _)) => (p.velocity + (d.center - p.center) * (1.0 / frame_dt)) * 0.5,
                    None => Default::default(),
                };
                Neighbor { center: d.center, velocity, radius: d.radius }
            })
            .collect();
    }

    fn control_tick(&mut self, t: f64, emit: &mut dyn FnMut(Event)) {
        for (robot_id, mode) in std::mem::take(&mut self.edits) {
            if self.mission.set_mode(robot_id, mode.clone()).is_ok() {
                self.coord.wander.remove(&robot_id);
                emit(Event { t, data: EventData::MissionEdit { robot_id, mode } });
            }
        }
        let out = mission_step(&self.mission, self.tracker.tracks(), &self.obstacles, &self.cfg.control, &self.coord);
        self.coord = out.state;
        for tr in out.transitions {
            emit(Event { t, data: EventData::ModeTransition { robot_id: tr.robot_id, from: tr.from, to: tr.to } });
        }
        for (&robot_id, cmd) in &out.commands {
            let seq = self.next_seq.entry(robot_id).or_insert(0);
            let frame = CommandFrame::from_command(robot_id, *seq, cmd);
            *seq = seq.wrapping_add(1);
            let bytes = encode_command(&frame).expect("robot ids are validated");
            let deliver_at = match self.channel.send(robot_id, &bytes, t) {
                SendOutcome::Dropped => None,
                SendOutcome::Scheduled { deliver_at } => Some(deliver_at),
            };
            let sent = frame.command();
            emit(Event {
                t,
                data: EventData::Command {
                    robot_id,
                    seq: frame.seq,
                    v: sent.v,
                    omega: sent.omega,
                    estop: sent.estop,
                    deliver_at,
                },
            });
        }
        self.controls += 1;
    }

    fn deliver(&mut self, t: f64, emit: &mut dyn FnMut(Event)) {
        for d in self.channel.poll(t + POLL_EPS) {
            let Ok(frame) = decode_command(&d.bytes) else {
                tracing::warn!(link = d.link, "undecodable command frame");
                continue;
            };
            let stale = self.applied_seq.get(&frame.robot_id).is_some_and(|&last| !seq_newer(frame.seq, last));
            let apply_at = d.deliver_at.max(t);
            if !stale {
                self.applied_seq.insert(frame.robot_id, frame.seq);
                let cmd = frame.command();
                let twist = if cmd.estop { Twist::ZERO } else { Twist::new(cmd.v, cmd.omega) };
                self.world.schedule(frame.robot_id, twist, apply_at).expect("known robot, future time");
            }
            emit(Event {
                t,
                data: EventData::Delivery { robot_id: frame.robot_id, seq: frame.seq, apply_at, stale },
            });
        }
    }
}
