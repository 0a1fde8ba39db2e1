use super::config::ScenarioConfig;
use super::trace::{Event, EventData};
use crate::coordination::{CoverageGrid, Mission, MissionMode};
use crate::geometry::Point2;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotMetrics {
    pub id: u8,
    pub distance_m: f64,
    /// Cross-track statistics after the convergence window opens; absent
    /// when the robot never had a path or never came near it.
    pub cross_track_mean_m: Option<f64>,
    pub cross_track_max_m: Option<f64>,
    pub cross_track_samples: u64,
    pub boundary_violations: u64,
    pub max_excursion_m: f64,
    pub coverage_fraction: Option<f64>,
    pub detections: u64,
    pub turn_transitions: u64,
}

/// Summary of a run. Everything here is derived from trace events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: String,
    pub seed: u64,
    pub duration_s: f64,
    pub steps: u64,
    pub frames_rendered: u64,
    pub control_ticks: u64,
    /// Detections per (frame, robot); absent without robots or frames.
    pub detection_rate: Option<f64>,
    pub commands_sent: u64,
    pub commands_dropped: u64,
    pub commands_delivered: u64,
    pub commands_superseded: u64,
    pub boundary_violations: u64,
    pub max_excursion_m: f64,
    /// Smallest body-to-body gap between robots; absent with fewer than two.
    pub min_clearance_m: Option<f64>,
    /// Robot-robot contact episodes (clearance < 0).
    pub collisions: u64,
    /// Robot-obstacle contact episodes.
    pub obstacle_collisions: u64,
    /// Mean over robots in coverage mode at the end of the run.
    pub coverage_fraction: Option<f64>,
    pub turn_transitions: u64,
    pub robots: Vec<RobotMetrics>,
}

impl MetricsReport {
    pub fn robot(&self, id: u8) -> Option<&RobotMetrics> {
        self.robots.iter().find(|r| r.id == id)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Clone)]
struct RobotAcc {
    radius: f64,
    last: Point2,
    distance: f64,
    converged: bool,
    ct_sum: f64,
    ct_max: f64,
    ct_n: u64,
    outside: bool,
    violations: u64,
    max_excursion: f64,
    coverage: Option<(CoverageGrid, f64)>,
    detections: u64,
    turns: u64,
}

/// Folds trace events into a [`MetricsReport`].
#[derive(Debug, Clone)]
pub struct MetricsAccumulator {
    scenario: String,
    seed: u64,
    duration_s: f64,
    window_m: f64,
    cell_m: f64,
    mission: Mission,
    obstacle_radii: Vec<f64>,
    robots: BTreeMap<u8, RobotAcc>,
    in_contact: BTreeMap<(u8, u8), bool>,
    obstacle_contact: BTreeMap<(u8, usize), bool>,
    min_clearance: Option<f64>,
    collisions: u64,
    obstacle_collisions: u64,
    steps: u64,
    frames: u64,
    control_ticks: u64,
    sent: u64,
    dropped: u64,
    delivered: u64,
    superseded: u64,
}

impl MetricsAccumulator {
    /// `cfg` must already be validated.
    pub fn new(cfg: &ScenarioConfig) -> Self {
        let mut mission = Mission::new(cfg.arena.clone(), cfg.mission.deconfliction.clone());
        for r in &cfg.robots {
            mission.add_robot(r.id, r.body_radius);
        }
        for m in &cfg.mission.robots {
            mission.set_mode(m.id, m.mode.clone()).expect("validated mission");
        }
        let mut acc = Self {
            scenario: cfg.name.clone(),
            seed: cfg.seed,
            duration_s: cfg.duration_s,
            window_m: 2.0 * cfg.control.lookahead_m,
            cell_m: cfg.coverage_cell_m,
            obstacle_radii: cfg.obstacles.iter().map(|o| o.radius).collect(),
            robots: cfg
                .robots
                .iter()
                .map(|r| {
                    let acc = RobotAcc {
                        radius: r.body_radius,
                        last: r.pose.position(),
                        distance: 0.0,
                        converged: false,
                        ct_sum: 0.0,
                        ct_max: 0.0,
                        ct_n: 0,
                        outside: false,
                        violations: 0,
                        max_excursion: 0.0,
                        coverage: None,
                        detections: 0,
                        turns: 0,
                    };
                    (r.id, acc)
                })
                .collect(),
            mission,
            in_contact: BTreeMap::new(),
            obstacle_contact: BTreeMap::new(),
            min_clearance: None,
            collisions: 0,
            obstacle_collisions: 0,
            steps: 0,
            frames: 0,
            control_ticks: 0,
            sent: 0,
            dropped: 0,
            delivered: 0,
            superseded: 0,
        };
        let ids: Vec<u8> = acc.robots.keys().copied().collect();
        for id in ids {
            acc.reset_robot(id);
        }
        acc
    }

    /// Restarts the per-mission statistics after a mode change.
    fn reset_robot(&mut self, id: u8) {
        let coverage = match self.mission.mode(id) {
            Some(MissionMode::Coverage { area, tool_radius, .. }) => {
                CoverageGrid::new(area, self.cell_m).ok().map(|g| (g, *tool_radius))
            }
            _ => None,
        };
        if let Some(r) = self.robots.get_mut(&id) {
            r.converged = false;
            r.outside = false;
            r.coverage = coverage;
        }
    }

    pub fn observe(&mut self, ev: &Event) {
        match &ev.data {
            EventData::Header { .. } => {}
            EventData::Frame { detections, .. } => {
                self.frames += 1;
                for d in detections {
                    if let Some(r) = self.robots.get_mut(&d.robot_id) {
                        r.detections += 1;
                    }
                }
            }
            EventData::Tracks { .. } => {}
            EventData::Command { deliver_at, .. } => {
                self.sent += 1;
                if deliver_at.is_none() {
                    self.dropped += 1;
                }
            }
            EventData::Delivery { stale, .. } => {
                if *stale {
                    self.superseded += 1;
                } else {
                    self.delivered += 1;
                }
            }
            EventData::ModeTransition { robot_id, to, .. } => {
                if let (Some(r), true) = (self.robots.get_mut(robot_id), to.is_turn()) {
                    r.turns += 1;
                }
            }
            EventData::MissionEdit { robot_id, mode } => {
                if self.mission.set_mode(*robot_id, mode.clone()).is_ok() {
                    self.reset_robot(*robot_id);
                }
            }
            EventData::World { robots, obstacles, superseded } => {
                self.steps += 1;
                self.superseded += superseded;
                self.observe_world(robots, obstacles);
            }
            EventData::End { control_ticks, .. } => {
                self.control_ticks = *control_ticks;
            }
        }
    }

    fn observe_world(&mut self, poses: &[super::trace::RobotPose], obstacles: &[Point2]) {
        for rp in poses {
            let Some(r) = self.robots.get_mut(&rp.id) else { continue };
            let p = rp.pose.position();
            r.distance += r.last.dist(p);
            r.last = p;

            if let Some(path) = self.mission.active_path(rp.id) {
                let d = path.project(p).d.abs();
                if !r.converged && d <= self.window_m {
                    r.converged = true;
                }
                if r.converged {
                    r.ct_sum += d;
                    r.ct_max = r.ct_max.max(d);
                    r.ct_n += 1;
                }
            }
            if let Some(MissionMode::BoundedWander { boundary }) = self.mission.mode(rp.id) {
                let exc = boundary.excursion(p);
                r.max_excursion = r.max_excursion.max(exc);
                let out = exc > 0.0;
                if out && !r.outside {
                    r.violations += 1;
                }
                r.outside = out;
            }
            if let Some((grid, tool)) = &mut r.coverage {
                grid.mark(p, *tool);
            }
        }

        for (i, a) in poses.iter().enumerate() {
            let ra = self.robots.get(&a.id).map_or(0.0, |r| r.radius);
            for b in &poses[i + 1..] {
                let rb = self.robots.get(&b.id).map_or(0.0, |r| r.radius);
                let gap = a.pose.position().dist(b.pose.position()) - ra - rb;
                self.min_clearance = Some(self.min_clearance.map_or(gap, |m| m.min(gap)));
                let touching = gap < 0.0;
                let was = self.in_contact.insert((a.id, b.id), touching).unwrap_or(false);
                if touching && !was {
                    self.collisions += 1;
                }
            }
            for (k, c) in obstacles.iter().enumerate() {
                let ro = self.obstacle_radii.get(k).copied().unwrap_or(0.0);
                let touching = a.pose.position().dist(*c) - ra - ro < 0.0;
                let was = self.obstacle_contact.insert((a.id, k), touching).unwrap_or(false);
                if touching && !was {
                    self.obstacle_collisions += 1;
                }
            }
        }
    }

    /// Coverage of one robot's current area so far, if it is in coverage mode.
    pub fn robot_coverage(&self, id: u8) -> Option<f64> {
        self.robots.get(&id)?.coverage.as_ref().map(|(g, _)| g.fraction())
    }

    /// Mean coverage over robots currently in coverage mode.
    pub fn coverage_fraction(&self) -> Option<f64> {
        mean_coverage(self.robots.values().filter_map(|r| r.coverage.as_ref().map(|(g, _)| g.fraction())))
    }

    pub fn finish(self) -> MetricsReport {
        let n_robots = self.robots.len() as u64;
        let robots: Vec<RobotMetrics> = self
            .robots
            .iter()
            .map(|(&id, r)| RobotMetrics {
                id,
                distance_m: r.distance,
                cross_track_mean_m: (r.ct_n > 0).then(|| r.ct_sum / r.ct_n as f64),
                cross_track_max_m: (r.ct_n > 0).then_some(r.ct_max),
                cross_track_samples: r.ct_n,
                boundary_violations: r.violations,
                max_excursion_m: r.max_excursion,
                coverage_fraction: r.coverage.as_ref().map(|(g, _)| g.fraction()),
                detections: r.detections,
                turn_transitions: r.turns,
            })
            .collect();
        let total_detections: u64 = robots.iter().map(|r| r.detections).sum();
        MetricsReport {
            scenario: self.scenario,
            seed: self.seed,
            duration_s: self.duration_s,
            steps: self.steps,
            frames_rendered: self.frames,
            control_ticks: self.control_ticks,
            detection_rate: (self.frames > 0 && n_robots > 0)
                .then(|| total_detections as f64 / (self.frames * n_robots) as f64),
            commands_sent: self.sent,
            commands_dropped: self.dropped,
            commands_delivered: self.delivered,
            commands_superseded: self.superseded,
            boundary_violations: robots.iter().map(|r| r.boundary_violations).sum(),
            max_excursion_m: robots.iter().map(|r| r.max_excursion_m).fold(0.0, f64::max),
            min_clearance_m: self.min_clearance,
            collisions: self.collisions,
            obstacle_collisions: self.obstacle_collisions,
            coverage_fraction: mean_coverage(robots.iter().filter_map(|r| r.coverage_fraction)),
            turn_transitions: robots.iter().map(|r| r.turn_transitions).sum(),
            robots,
        }
    }
}

fn mean_coverage(fractions: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = fractions.fold((0.0, 0usize), |(s, n), f| (s + f, n + 1));
    (n > 0).then(|| sum / n as f64)
}
