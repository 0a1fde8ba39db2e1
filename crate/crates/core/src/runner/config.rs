use crate::control::ControlParams;
use crate::coordination::{plan_coverage, DeconflictParams, MissionMode};
use crate::geometry::{Homography, Polygon};
use crate::link::LinkParams;
use crate::perception::PerceptionParams;
use crate::sim::{palette, Marking, ObstacleSpec, RobotSpec};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

/// Tolerance for `sim_dt` dividing the frame and control periods.
const RATE_EPS: f64 = 1e-9;
const MAX_IMAGE_SIDE: u32 = 8192;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid config at `{path}`: {reason}")]
pub struct InvalidConfig {
    pub path: String,
    pub reason: String,
}

impl InvalidConfig {
    pub fn new(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Self { path: path.into(), reason: reason.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraConfig {
    /// Ground → image, 9 numbers row-major.
    pub homography: Homography,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Rates {
    pub sim_dt: f64,
    pub frame_hz: f64,
    pub control_hz: f64,
}

impl Default for Rates {
    fn default() -> Self {
        Self { sim_dt: 0.01, frame_hz: 20.0, control_hz: 10.0 }
    }
}

impl Rates {
    /// Steps per period, when `sim_dt` divides `1 / hz`.
    pub fn steps_per(&self, hz: f64) -> Option<u64> {
        let period = 1.0 / hz;
        let n = (period / self.sim_dt).round();
        (n >= 1.0 && (n * self.sim_dt - period).abs() <= RATE_EPS).then_some(n as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Gaussian sigma added to detected positions (m).
    pub position_sigma_m: f64,
    /// Gaussian sigma added to detected headings (rad).
    pub heading_sigma_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotModeConfig {
    pub id: u8,
    pub mode: MissionMode,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MissionConfig {
    pub robots: Vec<RobotModeConfig>,
    pub deconfliction: DeconflictParams,
}

fn default_cell() -> f64 {
    0.1
}

/// Everything a headless run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub duration_s: f64,
    pub arena: Polygon,
    pub robots: Vec<RobotSpec>,
    #[serde(default)]
    pub obstacles: Vec<ObstacleSpec>,
    #[serde(default)]
    pub markings: Vec<Marking>,
    pub camera: CameraConfig,
    #[serde(default)]
    pub rates: Rates,
    #[serde(default)]
    pub perception: PerceptionParams,
    #[serde(default)]
    pub control: ControlParams,
    #[serde(default)]
    pub link: LinkParams,
    #[serde(default)]
    pub mission: MissionConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    /// Coverage accounting grid cell (m).
    #[serde(default = "default_cell")]
    pub coverage_cell_m: f64,
}

fn positive(path: &str, v: f64) -> Result<(), InvalidConfig> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(InvalidConfig::new(path, format!("must be a positive finite number, got {v}")))
    }
}

fn non_negative(path: &str, v: f64) -> Result<(), InvalidConfig> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(InvalidConfig::new(path, format!("must be a non-negative finite number, got {v}")))
    }
}

impl ScenarioConfig {
    /// Parses JSON; type errors carry the path of the offending field.
    pub fn from_json(text: &str) -> Result<Self, InvalidConfig> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            InvalidConfig::new(if path == "." { "$".into() } else { path }, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), InvalidConfig> {
        positive("duration_s", self.duration_s)?;
        positive("coverage_cell_m", self.coverage_cell_m)?;

        let r = &self.rates;
        positive("rates.sim_dt", r.sim_dt)?;
        positive("rates.frame_hz", r.frame_hz)?;
        positive("rates.control_hz", r.control_hz)?;
        if r.steps_per(r.frame_hz).is_none() {
            return Err(InvalidConfig::new("rates.frame_hz", "frame period is not a multiple of sim_dt"));
        }
        if r.steps_per(r.control_hz).is_none() {
            return Err(InvalidConfig::new("rates.control_hz", "control period is not a multiple of sim_dt"));
        }

        let cam = &self.camera;
        for (name, side) in [("width", cam.width), ("height", cam.height)] {
            if side == 0 || side > MAX_IMAGE_SIDE {
                return Err(InvalidConfig::new(
                    format!("camera.{name}"),
                    format!("must be in 1..={MAX_IMAGE_SIDE}"),
                ));
            }
        }

        let mut ids = BTreeSet::new();
        for (i, rb) in self.robots.iter().enumerate() {
            let at = |f: &str| format!("robots[{i}].{f}");
            if rb.id > palette::MAX_ROBOT_ID {
                return Err(InvalidConfig::new(at("id"), format!("must be ≤ {}", palette::MAX_ROBOT_ID)));
            }
            if !ids.insert(rb.id) {
                return Err(InvalidConfig::new(at("id"), format!("duplicate robot id {}", rb.id)));
            }
            for (f, v) in [("pose.x", rb.pose.x), ("pose.y", rb.pose.y), ("pose.theta", rb.pose.theta)] {
                if !v.is_finite() {
                    return Err(InvalidConfig::new(at(f), "must be finite"));
                }
            }
            positive(&at("v_max"), rb.v_max)?;
            positive(&at("omega_max"), rb.omega_max)?;
            positive(&at("body_radius"), rb.body_radius)?;
            positive(&at("marker_radius"), rb.marker_radius)?;
            if !(rb.front_marker_offset.is_finite()
                && rb.rear_marker_offset.is_finite()
                && rb.front_marker_offset > rb.rear_marker_offset)
            {
                return Err(InvalidConfig::new(at("front_marker_offset"), "must lie ahead of the rear marker"));
            }
        }

        for (i, o) in self.obstacles.iter().enumerate() {
            positive(&format!("obstacles[{i}].radius"), o.radius)?;
            o.validate().map_err(|e| InvalidConfig::new(format!("obstacles[{i}].script"), e.to_string()))?;
        }

        let pp = &self.perception;
        if !(pp.alpha > 0.0 && pp.alpha <= 1.0) {
            return Err(InvalidConfig::new("perception.alpha", "must be in (0, 1]"));
        }
        non_negative("perception.beta", pp.beta)?;
        positive("perception.gate_m", pp.gate_m)?;
        if pp.min_blob_px == 0 {
            return Err(InvalidConfig::new("perception.min_blob_px", "must be at least 1"));
        }
        if pp.confirm_hits == 0 {
            return Err(InvalidConfig::new("perception.confirm_hits", "must be at least 1"));
        }

        self.control
            .validate()
            .map_err(|e| InvalidConfig::new("control", e.to_string()))?;

        let lk = &self.link;
        non_negative("link.base_latency_s", lk.base_latency_s)?;
        non_negative("link.jitter_s", lk.jitter_s)?;
        if !(0.0..=1.0).contains(&lk.drop_prob) {
            return Err(InvalidConfig::new("link.drop_prob", "must be in [0, 1]"));
        }

        non_negative("noise.position_sigma_m", self.noise.position_sigma_m)?;
        non_negative("noise.heading_sigma_rad", self.noise.heading_sigma_rad)?;

        let dc = &self.mission.deconfliction;
        non_negative("mission.deconfliction.d_min", dc.d_min)?;
        non_negative("mission.deconfliction.horizon_s", dc.horizon_s)?;

        let mut assigned = BTreeSet::new();
        for (i, m) in self.mission.robots.iter().enumerate() {
            let at = |f: &str| format!("mission.robots[{i}].{f}");
            if !ids.contains(&m.id) {
                return Err(InvalidConfig::new(at("id"), format!("robot {} is not defined", m.id)));
            }
            if !assigned.insert(m.id) {
                return Err(InvalidConfig::new(at("id"), format!("robot {} has two missions", m.id)));
            }
            validate_mode(&m.mode).map_err(|(f, reason)| InvalidConfig::new(at(f), reason))?;
        }
        Ok(())
    }
}

/// Mode checks shared with the gateway's edit validation.
pub fn validate_mode(mode: &MissionMode) -> Result<(), (&'static str, String)> {
    if let MissionMode::Coverage { area, lane_width, tool_radius, heading } = mode {
        if !(tool_radius.is_finite() && *tool_radius > 0.0) {
            return Err(("mode.tool_radius", "must be positive".into()));
        }
        if !heading.is_finite() {
            return Err(("mode.heading", "must be finite".into()));
        }
        plan_coverage(area, *lane_width, *heading).map_err(|e| ("mode", e.to_string()))?;
    }
    Ok(())
}
