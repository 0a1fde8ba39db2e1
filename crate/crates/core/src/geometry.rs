//! Planar projective geometry: the ground↔image homography, boundary
//! polygons, desired-path polylines and the heading reflection law.
//!
//! Angles are radians in (−π, π], counter-clockwise positive, zero along +x.

use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// |w| below this is treated as a point on the line at infinity.
const W_EPS: f64 = 1e-12;
const DET_EPS: f64 = 1e-12;
const RANK_RATIO_EPS: f64 = 1e-10;
const AREA_EPS: f64 = 1e-9;
const SEGMENT_EPS: f64 = 1e-9;
/// Tolerance used for "point lies on an edge" tests, in meters.
const ON_EDGE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("too few correspondences: need at least 4, got {0}")]
    TooFewPoints(usize),
    #[error("degenerate point configuration (singular value ratio {0:e})")]
    DegenerateConfiguration(f64),
    #[error("homography matrix is singular")]
    Singular,
    #[error("point maps to the line at infinity")]
    AtInfinity,
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("polygon has (near) zero area")]
    ZeroArea,
    #[error("polygon edges {0} and {1} intersect")]
    SelfIntersecting(usize, usize),
    #[error("polyline needs at least 2 points, got {0}")]
    TooFewPathPoints(usize),
    #[error("polyline points {0} and {1} coincide")]
    RepeatedPoint(usize, usize),
    #[error("non-finite coordinate")]
    NonFinite,
}

/// A point or vector on the ground plane (meters) or in the image (pixels).
/// Serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, o: Point2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 2D cross product.
    pub fn cross(self, o: Point2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, o: Point2) -> f64 {
        (self - o).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn from_polar(r: f64, theta: f64) -> Self {
        Self::new(r * theta.cos(), r * theta.sin())
    }
}

impl std::ops::Add for Point2 {
    type Output = Point2;
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Sub for Point2 {
    type Output = Point2;
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl std::ops::Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, k: f64) -> Point2 {
        Point2::new(self.x * k, self.y * k)
    }
}

impl From<[f64; 2]> for Point2 {
    fn from(p: [f64; 2]) -> Self {
        Point2::new(p[0], p[1])
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

/// Wraps an angle into (−π, π].
pub fn wrap_angle(theta: f64) -> f64 {
    let mut a = theta.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    // rem_euclid can round up to exactly 2π for tiny negative inputs
    if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

/// Specular reflection of a heading about an edge direction.
pub fn reflect_heading(theta: f64, edge_direction: f64) -> f64 {
    wrap_angle(2.0 * edge_direction - theta)
}

// ── Homography ───────────────────────────────────────────────────────────

/// Ground-plane → image-plane projective map. Stored normalized so that
/// `m[(2, 2)] == 1`, together with its inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct Homography {
    m: Matrix3<f64>,
    inv: Matrix3<f64>,
}

impl Homography {
    pub fn new(m: Matrix3<f64>) -> Result<Self, GeometryError> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        if m[(2, 2)].abs() < W_EPS {
            return Err(GeometryError::Singular);
        }
        let m = m / m[(2, 2)];
        if m.determinant().abs() <= DET_EPS {
            return Err(GeometryError::Singular);
        }
        let inv = m.try_inverse().ok_or(GeometryError::Singular)?;
        let mut m = m;
        m[(2, 2)] = 1.0;
        Ok(Self { m, inv })
    }

    pub fn identity() -> Self {
        Self::new(Matrix3::identity()).expect("identity is invertible")
    }

    /// Pure scale: `scale` pixels per meter on both axes.
    pub fn scale(scale: f64) -> Result<Self, GeometryError> {
        Self::new(Matrix3::new(scale, 0.0, 0.0, 0.0, scale, 0.0, 0.0, 0.0, 1.0))
    }

    /// Row-major 3×3 entries.
    pub fn from_row_slice(v: &[f64; 9]) -> Result<Self, GeometryError> {
        Self::new(Matrix3::from_row_slice(v))
    }

    pub fn to_row_array(&self) -> [f64; 9] {
        let mut out = [0.0; 9];
        for r in 0..3 {
            for c in 0..3 {
                out[r * 3 + c] = self.m[(r, c)];
            }
        }
        out
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    pub fn inverse_matrix(&self) -> &Matrix3<f64> {
        &self.inv
    }

    pub fn project(&self, ground: Point2) -> Result<Point2, GeometryError> {
        apply(&self.m, ground)
    }

    pub fn unproject(&self, image: Point2) -> Result<Point2, GeometryError> {
        apply(&self.inv, image)
    }
}

fn apply(m: &Matrix3<f64>, p: Point2) -> Result<Point2, GeometryError> {
    let q = m * Vector3::new(p.x, p.y, 1.0);
    if q[2].abs() < W_EPS {
        return Err(GeometryError::AtInfinity);
    }
    Ok(Point2::new(q[0] / q[2], q[1] / q[2]))
}

pub fn project(h: &Homography, ground: Point2) -> Result<Point2, GeometryError> {
    h.project(ground)
}

pub fn unproject(h: &Homography, image: Point2) -> Result<Point2, GeometryError> {
    h.unproject(image)
}

impl Serialize for Homography {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_row_array().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Homography {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = <[f64; 9]>::deserialize(d)?;
        Homography::from_row_slice(&v).map_err(serde::de::Error::custom)
    }
}

/// Result of a DLT fit.
#[derive(Debug, Clone)]
pub struct HomographyFit {
    pub homography: Homography,
    /// Root-mean-square reprojection error in image units.
    pub rms: f64,
}

/// Similarity transform moving the centroid to the origin and scaling the
/// mean distance to √2.
fn normalizing_transform(pts: &[Point2]) -> Result<Matrix3<f64>, GeometryError> {
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p.y).sum::<f64>() / n;
    let mean_dist = pts.iter().map(|p| (p.x - cx).hypot(p.y - cy)).sum::<f64>() / n;
    if !(mean_dist > 0.0) || !mean_dist.is_finite() {
        return Err(GeometryError::DegenerateConfiguration(0.0));
    }
    let s = std::f64::consts::SQRT_2 / mean_dist;
    Ok(Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0))
}

/// Estimates the ground→image homography from ≥ 4 correspondences with the
/// normalized direct linear transform.
pub fn homography_from_points(pairs: &[(Point2, Point2)]) -> Result<HomographyFit, GeometryError> {
    if pairs.len() < 4 {
        return Err(GeometryError::TooFewPoints(pairs.len()));
    }
    if pairs.iter().any(|(g, i)| !g.is_finite() || !i.is_finite()) {
        return Err(GeometryError::NonFinite);
    }
    let ground: Vec<Point2> = pairs.iter().map(|p| p.0).collect();
    let image: Vec<Point2> = pairs.iter().map(|p| p.1).collect();
    let tg = normalizing_transform(&ground)?;
    let ti = normalizing_transform(&image)?;

    // At least 9 rows so the SVD yields a full 9×9 right-singular basis.
    let rows = (2 * pairs.len()).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (k, (g, i)) in ground.iter().zip(&image).enumerate() {
        let gn = tg * Vector3::new(g.x, g.y, 1.0);
        let im = ti * Vector3::new(i.x, i.y, 1.0);
        let (x, y) = (gn[0], gn[1]);
        let (u, v) = (im[0], im[1]);
        let r0 = 2 * k;
        let r1 = r0 + 1;
        a[(r0, 0)] = -x;
        a[(r0, 1)] = -y;
        a[(r0, 2)] = -1.0;
        a[(r0, 6)] = u * x;
        a[(r0, 7)] = u * y;
        a[(r0, 8)] = u;
        a[(r1, 3)] = -x;
        a[(r1, 4)] = -y;
        a[(r1, 5)] = -1.0;
        a[(r1, 6)] = v * x;
        a[(r1, 7)] = v * y;
        a[(r1, 8)] = v;
    }

    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or(GeometryError::DegenerateConfiguration(0.0))?;
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&p, &q| sv[q].total_cmp(&sv[p]));
    let largest = sv[order[0]];
    // The smallest singular value is the (ideally zero) solution direction;
    // the eight constraints themselves must be independent.
    let constraint_floor = sv[order[7]];
    let ratio = if largest > 0.0 { constraint_floor / largest } else { 0.0 };
    if ratio < RANK_RATIO_EPS {
        return Err(GeometryError::DegenerateConfiguration(ratio));
    }
    let null = v_t.row(order[8]);
    let hn = Matrix3::new(
        null[0], null[1], null[2], null[3], null[4], null[5], null[6], null[7], null[8],
    );
    let ti_inv = ti.try_inverse().ok_or(GeometryError::Singular)?;
    let h = ti_inv * hn * tg;
    let homography = Homography::new(h)?;
    let rms = reprojection_rms(&homography, pairs);
    Ok(HomographyFit { homography, rms })
}

/// RMS distance between projected ground points and their image points.
/// Points that project to infinity contribute `f64::INFINITY`.
pub fn reprojection_rms(h: &Homography, pairs: &[(Point2, Point2)]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let sum: f64 = pairs
        .iter()
        .map(|(g, i)| match h.project(*g) {
            Ok(p) => (p - *i).dot(p - *i),
            Err(_) => f64::INFINITY,
        })
        .sum();
    (sum / pairs.len() as f64).sqrt()
}

// ── Segments ─────────────────────────────────────────────────────────────

/// Closest point on segment `a→b` to `p`, as parameter in [0, 1].
fn segment_param(a: Point2, b: Point2, p: Point2) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return 0.0;
    }
    ((p - a).dot(ab) / len2).clamp(0.0, 1.0)
}

pub fn distance_to_segment(a: Point2, b: Point2, p: Point2) -> f64 {
    distance_to_segment_sq(a, b, p).sqrt()
}

pub fn distance_to_segment_sq(a: Point2, b: Point2, p: Point2) -> f64 {
    let t = segment_param(a, b, p);
    let d = p - (a + (b - a) * t);
    d.dot(d)
}

fn orient(a: Point2, b: Point2, c: Point2) -> f64 {
    (b - a).cross(c - a)
}

fn on_segment(a: Point2, b: Point2, p: Point2) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// Closed-segment intersection test (touching counts).
pub fn segments_intersect(p1: Point2, p2: Point2, q1: Point2, q2: Point2) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

/// Parameter `t ∈ [0, 1]` along `p1→p2` where it crosses `q1→q2`, if the
/// segments properly intersect or touch.
pub fn segment_crossing(p1: Point2, p2: Point2, q1: Point2, q2: Point2) -> Option<f64> {
    let r = p2 - p1;
    let s = q2 - q1;
    let denom = r.cross(s);
    if denom.abs() < 1e-15 {
        return None;
    }
    let qp = q1 - p1;
    let t = qp.cross(s) / denom;
    let u = qp.cross(r) / denom;
    ((0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u)).then_some(t)
}

// ── Polygon ──────────────────────────────────────────────────────────────

/// A simple polygon with non-zero area. Vertex order may be either
/// orientation; the closing edge is implicit.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Polygon {
    vertices: Vec<Point2>,
}

impl Polygon {
    pub fn new(vertices: Vec<Point2>) -> Result<Self, GeometryError> {
        if vertices.len() < 3 {
            return Err(GeometryError::TooFewVertices(vertices.len()));
        }
        if vertices.iter().any(|p| !p.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let poly = Self { vertices };
        if let Some((i, j)) = poly.first_self_intersection() {
            return Err(GeometryError::SelfIntersecting(i, j));
        }
        if poly.signed_area().abs() <= AREA_EPS {
            return Err(GeometryError::ZeroArea);
        }
        Ok(poly)
    }

    /// Axis-aligned rectangle `[x0, x1] × [y0, y1]`, counter-clockwise.
    pub fn rectangle(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self, GeometryError> {
        Self::new(vec![
            Point2::new(x0, y0),
            Point2::new(x1, y0),
            Point2::new(x1, y1),
            Point2::new(x0, y1),
        ])
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point2, Point2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Shoelace area, positive for counter-clockwise order.
    pub fn signed_area(&self) -> f64 {
        0.5 * self.edges().map(|(a, b)| a.cross(b)).sum::<f64>()
    }

    pub fn centroid(&self) -> Point2 {
        let a = self.signed_area();
        let (mut cx, mut cy) = (0.0, 0.0);
        for (p, q) in self.edges() {
            let c = p.cross(q);
            cx += (p.x + q.x) * c;
            cy += (p.y + q.y) * c;
        }
        Point2::new(cx / (6.0 * a), cy / (6.0 * a))
    }

    pub fn bounds(&self) -> (Point2, Point2) {
        let mut lo = Point2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &self.vertices {
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        }
        (lo, hi)
    }

    fn first_self_intersection(&self) -> Option<(usize, usize)> {
        let n = self.vertices.len();
        let edge = |i: usize| (self.vertices[i], self.vertices[(i + 1) % n]);
        for i in 0..n {
            for j in (i + 1)..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                let (a1, a2) = edge(i);
                let (b1, b2) = edge(j);
                if adjacent {
                    // Adjacent edges share one vertex; they may only overlap
                    // if they fold back onto each other.
                    let shared = if j == i + 1 { a2 } else { a1 };
                    let (other_a, other_b) = if j == i + 1 { (a1, b2) } else { (a2, b1) };
                    let collinear = orient(shared, other_a, other_b).abs() <= 1e-12;
                    if collinear && (other_a - shared).dot(other_b - shared) > 0.0 {
                        return Some((i, j));
                    }
                    continue;
                }
                if segments_intersect(a1, a2, b1, b2) {
                    return Some((i, j));
                }
            }
        }
        None
    }

    pub fn is_convex(&self) -> bool {
        let n = self.vertices.len();
        let mut sign = 0.0f64;
        for i in 0..n {
            let c = orient(self.vertices[i], self.vertices[(i + 1) % n], self.vertices[(i + 2) % n]);
            if c.abs() <= 1e-12 {
                continue;
            }
            if sign == 0.0 {
                sign = c.signum();
            } else if c.signum() != sign {
                return false;
            }
        }
        true
    }

    /// Distance from `p` to the nearest edge.
    pub fn distance_to_boundary(&self, p: Point2) -> f64 {
        self.edges()
            .map(|(a, b)| distance_to_segment(a, b, p))
            .fold(f64::INFINITY, f64::min)
    }

    /// Index of the edge nearest to `p`.
    pub fn nearest_edge(&self, p: Point2) -> usize {
        let mut best = (0, f64::INFINITY);
        for (i, (a, b)) in self.edges().enumerate() {
            let d = distance_to_segment(a, b, p);
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }

    pub fn edge(&self, i: usize) -> (Point2, Point2) {
        let n = self.vertices.len();
        (self.vertices[i % n], self.vertices[(i + 1) % n])
    }

    /// Non-zero winding test; points on an edge count as inside.
    pub fn contains(&self, p: Point2) -> bool {
        let mut winding = 0i32;
        for (a, b) in self.edges() {
            if distance_to_segment(a, b, p) <= ON_EDGE_EPS {
                return true;
            }
            if a.y <= p.y {
                if b.y > p.y && orient(a, b, p) > 0.0 {
                    winding += 1;
                }
            } else if b.y <= p.y && orient(a, b, p) < 0.0 {
                winding -= 1;
            }
        }
        winding != 0
    }

    /// True when the disk of radius `margin` around `p` lies inside the
    /// polygon, i.e. `p` is inside the polygon eroded by `margin`.
    pub fn contains_with_margin(&self, p: Point2, margin: f64) -> bool {
        self.contains(p) && self.distance_to_boundary(p) >= margin
    }

    /// How far `p` lies outside the polygon (0 when inside).
    pub fn excursion(&self, p: Point2) -> f64 {
        if self.contains(p) {
            0.0
        } else {
            self.distance_to_boundary(p)
        }
    }
}

pub fn point_in_polygon(poly: &Polygon, p: Point2) -> bool {
    poly.contains(p)
}

impl<'de> Deserialize<'de> for Polygon {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Vec::<Point2>::deserialize(d)?;
        Polygon::new(v).map_err(serde::de::Error::custom)
    }
}

// ── Polyline ─────────────────────────────────────────────────────────────

/// A desired path: ≥ 2 points with cached cumulative arc length.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    points: Vec<Point2>,
    cumulative: Vec<f64>,
}

/// Closest-point projection of a query onto a polyline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathProjection {
    /// Arc length of the closest point.
    pub s: f64,
    /// Signed lateral offset, positive left of the local path direction.
    pub d: f64,
    pub segment: usize,
}

impl Polyline {
    pub fn new(points: Vec<Point2>) -> Result<Self, GeometryError> {
        if points.len() < 2 {
            return Err(GeometryError::TooFewPathPoints(points.len()));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let mut cumulative = Vec::with_capacity(points.len());
        cumulative.push(0.0);
        for (i, w) in points.windows(2).enumerate() {
            let len = w[0].dist(w[1]);
            if len <= SEGMENT_EPS {
                return Err(GeometryError::RepeatedPoint(i, i + 1));
            }
            cumulative.push(cumulative[i] + len);
        }
        Ok(Self { points, cumulative })
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().expect("at least two points")
    }

    pub fn start(&self) -> Point2 {
        self.points[0]
    }

    pub fn end(&self) -> Point2 {
        *self.points.last().expect("at least two points")
    }

    /// Point at arc length `s`, clamped to the path ends.
    pub fn point_at(&self, s: f64) -> Point2 {
        let s = s.clamp(0.0, self.length());
        let seg = match self.cumulative.binary_search_by(|c| c.total_cmp(&s)) {
            Ok(i) => i.min(self.points.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.points.len() - 2),
        };
        let a = self.points[seg];
        let b = self.points[seg + 1];
        let t = (s - self.cumulative[seg]) / (self.cumulative[seg + 1] - self.cumulative[seg]);
        a + (b - a) * t
    }

    /// Direction of the path at arc length `s`.
    pub fn heading_at(&self, s: f64) -> f64 {
        let s = s.clamp(0.0, self.length());
        let seg = self
            .cumulative
            .iter()
            .rposition(|&c| c <= s)
            .unwrap_or(0)
            .min(self.points.len() - 2);
        let d = self.points[seg + 1] - self.points[seg];
        d.y.atan2(d.x)
    }

    pub fn project(&self, p: Point2) -> PathProjection {
        let mut best: Option<(f64, PathProjection)> = None;
        for (i, w) in self.points.windows(2).enumerate() {
            let (a, b) = (w[0], w[1]);
            let t = segment_param(a, b, p);
            let foot = a + (b - a) * t;
            let dist = p.dist(foot);
            // strict `<` keeps the earlier (smaller-s) segment on ties
            if best.as_ref().is_none_or(|(bd, _)| dist < *bd) {
                let side = (b - a).cross(p - a);
                let d = if side < 0.0 { -dist } else { dist };
                let s = self.cumulative[i] + t * (self.cumulative[i + 1] - self.cumulative[i]);
                best = Some((dist, PathProjection { s, d, segment: i }));
            }
        }
        best.expect("at least one segment").1
    }
}

pub fn project_onto_polyline(path: &Polyline, p: Point2) -> (f64, f64) {
    let pr = path.project(p);
    (pr.s, pr.d)
}

impl Serialize for Polyline {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.points.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Polyline {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Vec::<Point2>::deserialize(d)?;
        Polyline::new(v).map_err(serde::de::Error::custom)
    }
}
