//! Frame → per-robot detections → filtered tracks.
//!
//! Each robot carries a front and a rear marker painted with id-coded palette
//! values, so identity comes straight from the pixels and association is by
//! id. Positions are the midpoint of the two unprojected blob centroids and
//! the heading points from the rear blob to the front one.

use crate::geometry::{wrap_angle, Homography, Point2};
use crate::sim::{palette, Frame, Pose2};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerceptionParams {
    pub alpha: f64,
    /// Rate gain; the velocity correction is `beta · residual / Δt`.
    pub beta: f64,
    pub gate_m: f64,
    pub coast_max: u32,
    pub min_blob_px: usize,
    pub confirm_hits: u32,
}

impl Default for PerceptionParams {
    fn default() -> Self {
        Self { alpha: 0.5, beta: 0.2, gate_m: 0.5, coast_max: 10, min_blob_px: 4, confirm_hits: 3 }
    }
}

/// Pixel rectangle `(min_x, min_y, max_x, max_y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelRect {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl PixelRect {
    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.min_x && p.x <= self.max_x && p.y >= self.min_y && p.y <= self.max_y
    }

    fn union(self, o: PixelRect) -> PixelRect {
        PixelRect {
            min_x: self.min_x.min(o.min_x),
            min_y: self.min_y.min(o.min_y),
            max_x: self.max_x.max(o.max_x),
            max_y: self.max_y.max(o.max_y),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub robot_id: u8,
    pub ground_pose: Pose2,
    pub pixel_centroid_front: Point2,
    pub pixel_centroid_rear: Point2,
    pub pixel_bbox: PixelRect,
    pub t: f64,
}

/// A blob of palette-5 pixels, reported in ground coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstacleDetection {
    pub center: Point2,
    pub radius: f64,
}

/// One 4-connected component of equal palette value.
#[derive(Debug, Clone, PartialEq)]
pub struct Blob {
    pub value: u8,
    pub pixels: usize,
    /// Mean of pixel centers.
    pub centroid: Point2,
    /// Tight bounds over pixel squares.
    pub bbox: PixelRect,
}

/// Labels 4-connected components of every pixel value accepted by `want`.
pub fn label_components(frame: &Frame, want: impl Fn(u8) -> bool) -> Vec<Blob> {
    let (w, h) = (frame.width as usize, frame.height as usize);
    let mut seen = vec![false; w * h];
    let mut blobs = Vec::new();
    let mut queue = VecDeque::new();
    for (start, &value) in frame.pixels.iter().enumerate() {
        if !want(value) || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let (mut n, mut sx, mut sy) = (0usize, 0.0, 0.0);
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i % w, i / w);
            n += 1;
            sx += x as f64 + 0.5;
            sy += y as f64 + 0.5;
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
            let mut visit = |j: usize| {
                if !seen[j] && frame.pixels[j] == value {
                    seen[j] = true;
                    queue.push_back(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        blobs.push(Blob {
            value,
            pixels: n,
            centroid: Point2::new(sx / n as f64, sy / n as f64),
            bbox: PixelRect {
                min_x: x0 as f64,
                min_y: y0 as f64,
                max_x: (x1 + 1) as f64,
                max_y: (y1 + 1) as f64,
            },
        });
    }
    blobs
}

/// Largest blob per palette value, ignoring blobs below `min_px`.
fn largest_by_value(blobs: Vec<Blob>, min_px: usize) -> [Option<Blob>; 256] {
    let mut best: [Option<Blob>; 256] = std::array::from_fn(|_| None);
    for b in blobs.into_iter().filter(|b| b.pixels >= min_px) {
        let slot = &mut best[b.value as usize];
        if slot.as_ref().is_none_or(|cur| b.pixels > cur.pixels) {
            *slot = Some(b);
        }
    }
    best
}

/// Finds every robot whose front and rear markers are both visible.
pub fn detect_markers(frame: &Frame, h: &Homography, min_blob_px: usize) -> Vec<Detection> {
    markers_from_blobs(label_components(frame, |v| v >= palette::FRONT_BASE), frame, h, min_blob_px)
}

fn markers_from_blobs(blobs: Vec<Blob>, frame: &Frame, h: &Homography, min_blob_px: usize) -> Vec<Detection> {
    let best = largest_by_value(blobs, min_blob_px);
    let mut out = Vec::new();
    for id in 0..=palette::MAX_ROBOT_ID {
        let (Some(front), Some(rear)) =
            (&best[palette::front(id) as usize], &best[palette::rear(id) as usize])
        else {
            continue;
        };
        let (Ok(gf), Ok(gr)) = (h.unproject(front.centroid), h.unproject(rear.centroid)) else {
            continue;
        };
        let mid = (gf + gr) * 0.5;
        let dir = gf - gr;
        out.push(Detection {
            robot_id: id,
            ground_pose: Pose2::new(mid.x, mid.y, dir.y.atan2(dir.x)),
            pixel_centroid_front: front.centroid,
            pixel_centroid_rear: rear.centroid,
            pixel_bbox: front.bbox.union(rear.bbox),
            t: frame.t,
        });
    }
    out
}

/// Obstacle blobs as ground disks. The radius comes from the blob area and
/// the local ground size of a pixel, so partially occluded obstacles read
/// smaller than they are.
pub fn detect_obstacles(frame: &Frame, h: &Homography, min_blob_px: usize) -> Vec<ObstacleDetection> {
    obstacles_from_blobs(label_components(frame, |v| v == palette::OBSTACLE), h, min_blob_px)
}

/// Markers and obstacles from a single labeling pass.
pub fn detect_scene(
    frame: &Frame,
    h: &Homography,
    min_blob_px: usize,
) -> (Vec<Detection>, Vec<ObstacleDetection>) {
    let (markers, obstacles): (Vec<Blob>, Vec<Blob>) =
        label_components(frame, |v| v == palette::OBSTACLE || v >= palette::FRONT_BASE)
            .into_iter()
            .partition(|b| b.value >= palette::FRONT_BASE);
    (
        markers_from_blobs(markers, frame, h, min_blob_px),
        obstacles_from_blobs(obstacles, h, min_blob_px),
    )
}

fn obstacles_from_blobs(blobs: Vec<Blob>, h: &Homography, min_blob_px: usize) -> Vec<ObstacleDetection> {
    blobs
        .into_iter()
        .filter(|b| b.pixels >= min_blob_px)
        .filter_map(|b| {
            let c = h.unproject(b.centroid).ok()?;
            let px = h.unproject(b.centroid + Point2::new(1.0, 0.0)).ok()?;
            let py = h.unproject(b.centroid + Point2::new(0.0, 1.0)).ok()?;
            let m_per_px = ((px - c).norm() * (py - c).norm()).sqrt();
            let radius = (b.pixels as f64 / std::f64::consts::PI).sqrt() * m_per_px;
            Some(ObstacleDetection { center: c, radius })
        })
        .collect()
}

// ── Tracking ─────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Coasting,
}

/// Filtered per-robot estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub robot_id: u8,
    pub pose_est: Pose2,
    /// World-frame rates (ẋ, ẏ, θ̇).
    pub rates: [f64; 3],
    pub status: TrackStatus,
    pub hits: u32,
    pub misses: u32,
    pub last_update: f64,
}

/// Body-frame speed and turn rate.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VelocityEstimate {
    pub v: f64,
    pub omega: f64,
}

impl Track {
    fn spawn(d: &Detection, t: f64) -> Self {
        Self {
            robot_id: d.robot_id,
            pose_est: d.ground_pose,
            rates: [0.0; 3],
            status: TrackStatus::Tentative,
            hits: 1,
            misses: 0,
            last_update: t,
        }
    }

    /// Speed along the heading and turn rate.
    pub fn vel_est(&self) -> VelocityEstimate {
        let (s, c) = self.pose_est.theta.sin_cos();
        VelocityEstimate { v: self.rates[0] * c + self.rates[1] * s, omega: self.rates[2] }
    }

    /// World-frame planar velocity.
    pub fn planar_velocity(&self) -> Point2 {
        Point2::new(self.rates[0], self.rates[1])
    }

    pub fn is_live(&self) -> bool {
        matches!(self.status, TrackStatus::Confirmed | TrackStatus::Coasting)
    }

    /// Constant-velocity extrapolation of the estimate by `dt`.
    pub fn predicted(&self, dt: f64) -> Pose2 {
        Pose2::new(
            self.pose_est.x + self.rates[0] * dt,
            self.pose_est.y + self.rates[1] * dt,
            self.pose_est.theta + self.rates[2] * dt,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrackerError {
    #[error("update time {t} is not after the previous update at {last}")]
    NonMonotonicTime { t: f64, last: f64 },
}

/// Tracker state: the live track list and the time of the last update.
#[derive(Debug, Clone, PartialEq)]
pub struct Tracker {
    pub params: PerceptionParams,
    tracks: Vec<Track>,
    last_t: Option<f64>,
}

impl Tracker {
    pub fn new(params: PerceptionParams) -> Self {
        Self { params, tracks: Vec::new(), last_t: None }
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    /// Best track for a robot: live before tentative, then most recently
    /// confirmed by a detection.
    pub fn best_for(&self, robot_id: u8) -> Option<&Track> {
        best_track(&self.tracks, robot_id)
    }

    pub fn update(&mut self, detections: &[Detection], t: f64) -> Result<&[Track], TrackerError> {
        if let Some(last) = self.last_t {
            if !(t > last) {
                return Err(TrackerError::NonMonotonicTime { t, last });
            }
        }
        self.last_t = Some(t);
        let p = &self.params;
        let mut matched = vec![false; self.tracks.len()];
        let mut spawned = Vec::new();

        for det in detections {
            // Nearest same-id track by predicted position.
            let mut nearest: Option<(usize, f64)> = None;
            for (i, tr) in self.tracks.iter().enumerate() {
                if tr.robot_id != det.robot_id || matched[i] {
                    continue;
                }
                let pred = tr.predicted(t - tr.last_update);
                let dist = pred.position().dist(det.ground_pose.position());
                if nearest.is_none_or(|(_, d)| dist < d) {
                    nearest = Some((i, dist));
                }
            }
            match nearest {
                Some((i, dist)) if dist <= p.gate_m => {
                    matched[i] = true;
                    alpha_beta_update(&mut self.tracks[i], det, t, p);
                }
                _ => spawned.push(Track::spawn(det, t)),
            }
        }

        for (i, tr) in self.tracks.iter_mut().enumerate() {
            if matched[i] {
                continue;
            }
            let dt = t - tr.last_update;
            tr.pose_est = tr.predicted(dt);
            tr.last_update = t;
            tr.misses += 1;
            tr.status = match tr.status {
                // A tentative hypothesis that misses is discarded below.
                TrackStatus::Tentative => TrackStatus::Tentative,
                _ => TrackStatus::Coasting,
            };
        }
        let coast_max = p.coast_max;
        self.tracks.retain(|tr| {
            !(tr.status == TrackStatus::Tentative && tr.misses > 0) && tr.misses <= coast_max
        });
        self.tracks.extend(spawned);
        self.tracks.sort_by_key(|tr| tr.robot_id);
        Ok(&self.tracks)
    }
}

fn alpha_beta_update(tr: &mut Track, det: &Detection, t: f64, p: &PerceptionParams) {
    let dt = t - tr.last_update;
    let pred = tr.predicted(dt);
    let z = det.ground_pose;
    let residual = [z.x - pred.x, z.y - pred.y, wrap_angle(z.theta - pred.theta)];
    let est = [
        pred.x + p.alpha * residual[0],
        pred.y + p.alpha * residual[1],
        pred.theta + p.alpha * residual[2],
    ];
    if dt > 0.0 {
        for (rate, r) in tr.rates.iter_mut().zip(residual) {
            *rate += p.beta * r / dt;
        }
    }
    tr.pose_est = Pose2::new(est[0], est[1], est[2]);
    tr.last_update = t;
    tr.misses = 0;
    tr.hits += 1;
    tr.status = if tr.status == TrackStatus::Tentative && tr.hits < p.confirm_hits {
        TrackStatus::Tentative
    } else {
        TrackStatus::Confirmed
    };
}

pub fn best_track(tracks: &[Track], robot_id: u8) -> Option<&Track> {
    let rank = |tr: &Track| match tr.status {
        TrackStatus::Confirmed => 0,
        TrackStatus::Coasting => 1,
        TrackStatus::Tentative => 2,
    };
    tracks
        .iter()
        .filter(|tr| tr.robot_id == robot_id)
        .min_by(|a, b| rank(a).cmp(&rank(b)).then(a.misses.cmp(&b.misses)))
}

/// Stateless form of [`Tracker::update`] over an owned track list.
pub fn update_tracks(
    tracks: Vec<Track>,
    detections: &[Detection],
    t: f64,
    params: &PerceptionParams,
) -> Result<Vec<Track>, TrackerError> {
    let last = tracks.iter().map(|tr| tr.last_update).fold(None, |m: Option<f64>, v| {
        Some(m.map_or(v, |m| m.max(v)))
    });
    let mut tracker = Tracker { params: params.clone(), tracks, last_t: last };
    tracker.update(detections, t)?;
    Ok(tracker.tracks)
}

/// Pixel padding added around the projected body disk.
pub const OVERLAY_PAD_PX: f64 = 4.0;

/// Projected bounding rectangle of a body disk, padded by 4 px.
pub fn body_rect(h: &Homography, center: Point2, body_radius: f64) -> Option<PixelRect> {
    let mut rect: Option<PixelRect> = None;
    for k in 0..64 {
        let a = k as f64 * std::f64::consts::TAU / 64.0;
        let q = h.project(center + Point2::from_polar(body_radius, a)).ok()?;
        let r = PixelRect { min_x: q.x, min_y: q.y, max_x: q.x, max_y: q.y };
        rect = Some(rect.map_or(r, |acc| acc.union(r)));
    }
    rect.map(|r| PixelRect {
        min_x: r.min_x - OVERLAY_PAD_PX,
        min_y: r.min_y - OVERLAY_PAD_PX,
        max_x: r.max_x + OVERLAY_PAD_PX,
        max_y: r.max_y + OVERLAY_PAD_PX,
    })
}

/// Operator overlay rectangles for confirmed and coasting tracks.
pub fn bbox_overlay(
    tracks: &[Track],
    h: &Homography,
    body_radius: impl Fn(u8) -> f64,
) -> Vec<(u8, PixelRect)> {
    tracks
        .iter()
        .filter(|tr| tr.is_live())
        .filter_map(|tr| Some((tr.robot_id, body_rect(h, tr.pose_est.position(), body_radius(tr.robot_id))?)))
        .collect()
}
