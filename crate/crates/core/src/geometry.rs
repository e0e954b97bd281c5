//! World-frame primitives: points, compass headings, oriented square view
//! areas, axis-aligned rectangles and convex polygon clipping.
//!
//! The world frame is metric with `x` pointing east and `y` pointing north.
//! Headings are compass angles, clockwise from north.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Distance below which two points are considered coincident.
pub const EPS: f64 = 1e-9;
/// Polygons with an area below this are treated as empty.
pub const MIN_AREA: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("bearing is undefined for zero displacement")]
    ZeroDisplacement,
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("invalid view width {0}")]
    InvalidWidth(f64),
    #[error("degenerate rectangle")]
    DegenerateRect,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldPoint {
    pub x: f64,
    pub y: f64,
}

impl WorldPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &WorldPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn offset(&self, dx: f64, dy: f64) -> WorldPoint {
        WorldPoint::new(self.x + dx, self.y + dy)
    }
}

/// Compass heading in degrees, normalized to `[0, 360)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(into = "f64", try_from = "f64")]
pub struct Heading(f64);

impl Heading {
    pub const NORTH: Heading = Heading(0.0);

    pub fn new(degrees: f64) -> Self {
        let mut d = degrees.rem_euclid(360.0);
        // rem_euclid can round up to exactly 360 for tiny negative inputs
        if d >= 360.0 {
            d = 0.0;
        }
        Heading(d)
    }

    pub fn degrees(self) -> f64 {
        self.0
    }

    pub fn radians(self) -> f64 {
        self.0.to_radians()
    }

    /// Unit vector pointing along the heading.
    pub fn forward(self) -> (f64, f64) {
        let (s, c) = self.radians().sin_cos();
        (s, c)
    }

    /// Unit vector 90 degrees clockwise of the heading.
    pub fn right(self) -> (f64, f64) {
        let (s, c) = self.radians().sin_cos();
        (c, -s)
    }

    pub fn rotated(self, delta_degrees: f64) -> Heading {
        Heading::new(self.0 + delta_degrees)
    }

    /// Minimal signed difference `other - self` in `(-180, 180]`.
    pub fn signed_delta_to(self, other: Heading) -> f64 {
        let mut d = (other.0 - self.0).rem_euclid(360.0);
        if d > 180.0 {
            d -= 360.0;
        }
        d
    }

    /// Unsigned angle between two headings in `[0, 180]`.
    pub fn angle_to(self, other: Heading) -> f64 {
        self.signed_delta_to(other).abs()
    }
}

impl From<Heading> for f64 {
    fn from(h: Heading) -> f64 {
        h.0
    }
}

impl TryFrom<f64> for Heading {
    type Error = String;

    fn try_from(degrees: f64) -> Result<Self, Self::Error> {
        if degrees.is_finite() && (0.0..360.0).contains(&degrees) {
            Ok(Heading(degrees))
        } else {
            Err(format!("heading {degrees} outside [0, 360)"))
        }
    }
}

impl Default for Heading {
    fn default() -> Self {
        Heading::NORTH
    }
}

/// Oriented square ground footprint of the downward-looking camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewArea {
    pub center: WorldPoint,
    pub width: f64,
    pub rotation: Heading,
}

impl ViewArea {
    pub fn new(center: WorldPoint, width: f64, rotation: Heading) -> Result<Self, GeometryError> {
        if !center.is_finite() {
            return Err(GeometryError::NonFinite);
        }
        if !(width.is_finite() && width > 0.0) {
            return Err(GeometryError::InvalidWidth(width));
        }
        Ok(Self {
            center,
            width,
            rotation,
        })
    }

    /// Maps view-frame offsets (meters to the right, meters forward) to world.
    pub fn frame_to_world(&self, right: f64, forward: f64) -> WorldPoint {
        let (rx, ry) = self.rotation.right();
        let (fx, fy) = self.rotation.forward();
        WorldPoint::new(
            self.center.x + right * rx + forward * fx,
            self.center.y + right * ry + forward * fy,
        )
    }

    /// Inverse of [`ViewArea::frame_to_world`].
    pub fn world_to_frame(&self, p: &WorldPoint) -> (f64, f64) {
        let dx = p.x - self.center.x;
        let dy = p.y - self.center.y;
        let (rx, ry) = self.rotation.right();
        let (fx, fy) = self.rotation.forward();
        (dx * rx + dy * ry, dx * fx + dy * fy)
    }

    pub fn corners(&self) -> ConvexPolygon {
        corners(self)
    }

    pub fn area(&self) -> f64 {
        self.width * self.width
    }

    /// Axis-aligned bounding box of the footprint.
    pub fn bounding_rect(&self) -> AxisRect {
        let poly = self.corners();
        let mut min = WorldPoint::new(f64::INFINITY, f64::INFINITY);
        let mut max = WorldPoint::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in poly.vertices() {
            min.x = min.x.min(v.x);
            min.y = min.y.min(v.y);
            max.x = max.x.max(v.x);
            max.y = max.y.max(v.y);
        }
        AxisRect { min, max }
    }
}

/// Axis-aligned rectangle; serialized as `{min_x, min_y, max_x, max_y}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "RectRecord", try_from = "RectRecord")]
pub struct AxisRect {
    pub min: WorldPoint,
    pub max: WorldPoint,
}

impl AxisRect {
    pub fn new(min: WorldPoint, max: WorldPoint) -> Result<Self, GeometryError> {
        if !(min.is_finite() && max.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        if !(min.x < max.x && min.y < max.y) {
            return Err(GeometryError::DegenerateRect);
        }
        Ok(Self { min, max })
    }

    pub fn from_center(center: WorldPoint, width: f64, height: f64) -> Result<Self, GeometryError> {
        Self::new(
            center.offset(-width / 2.0, -height / 2.0),
            center.offset(width / 2.0, height / 2.0),
        )
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> WorldPoint {
        WorldPoint::new(
            (self.min.x + self.max.x) / 2.0,
            (self.min.y + self.max.y) / 2.0,
        )
    }

    /// Mean of the two side lengths.
    pub fn mean_side(&self) -> f64 {
        (self.width() + self.height()) / 2.0
    }

    pub fn contains(&self, p: &WorldPoint) -> bool {
        contains(self, p)
    }

    pub fn intersects(&self, other: &AxisRect) -> bool {
        self.min.x < other.max.x
            && other.min.x < self.max.x
            && self.min.y < other.max.y
            && other.min.y < self.max.y
    }

    pub fn to_polygon(&self) -> ConvexPolygon {
        ConvexPolygon {
            vertices: vec![
                self.min,
                WorldPoint::new(self.max.x, self.min.y),
                self.max,
                WorldPoint::new(self.min.x, self.max.y),
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct RectRecord {
    min_x: f64,
    min_y: f64,
    max_x: f64,
    max_y: f64,
}

impl From<AxisRect> for RectRecord {
    fn from(r: AxisRect) -> Self {
        Self {
            min_x: r.min.x,
            min_y: r.min.y,
            max_x: r.max.x,
            max_y: r.max.y,
        }
    }
}

impl TryFrom<RectRecord> for AxisRect {
    type Error = GeometryError;

    fn try_from(r: RectRecord) -> Result<Self, Self::Error> {
        AxisRect::new(WorldPoint::new(r.min_x, r.min_y), WorldPoint::new(r.max_x, r.max_y))
    }
}

/// Counter-clockwise convex polygon.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexPolygon {
    vertices: Vec<WorldPoint>,
}

impl ConvexPolygon {
    /// Builds a polygon from CCW vertices. Returns `None` for fewer than three
    /// vertices or a (near) zero area.
    pub fn new(vertices: Vec<WorldPoint>) -> Option<Self> {
        let poly = ConvexPolygon { vertices };
        if poly.vertices.len() < 3 || poly.area() < MIN_AREA {
            return None;
        }
        Some(poly)
    }

    pub fn vertices(&self) -> &[WorldPoint] {
        &self.vertices
    }

    fn signed_area(&self) -> f64 {
        let n = self.vertices.len();
        let mut acc = 0.0;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            acc += a.x * b.y - b.x * a.y;
        }
        acc / 2.0
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    pub fn centroid(&self) -> WorldPoint {
        let n = self.vertices.len();
        let a = self.signed_area();
        let (mut cx, mut cy) = (0.0, 0.0);
        for i in 0..n {
            let p = self.vertices[i];
            let q = self.vertices[(i + 1) % n];
            let cross = p.x * q.y - q.x * p.y;
            cx += (p.x + q.x) * cross;
            cy += (p.y + q.y) * cross;
        }
        WorldPoint::new(cx / (6.0 * a), cy / (6.0 * a))
    }

    /// Point-in-polygon test with a closed boundary.
    pub fn contains(&self, p: &WorldPoint) -> bool {
        let n = self.vertices.len();
        (0..n).all(|i| cross(&self.vertices[i], &self.vertices[(i + 1) % n], p) >= -EPS)
    }
}

/// z-component of (b - a) x (p - a); positive when `p` is left of a->b.
fn cross(a: &WorldPoint, b: &WorldPoint, p: &WorldPoint) -> f64 {
    (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)
}

fn line_intersection(s: &WorldPoint, e: &WorldPoint, a: &WorldPoint, b: &WorldPoint) -> WorldPoint {
    let ds = cross(a, b, s);
    let de = cross(a, b, e);
    let t = ds / (ds - de);
    WorldPoint::new(s.x + t * (e.x - s.x), s.y + t * (e.y - s.y))
}

pub fn corners(v: &ViewArea) -> ConvexPolygon {
    let h = v.width / 2.0;
    ConvexPolygon {
        vertices: vec![
            v.frame_to_world(-h, -h),
            v.frame_to_world(h, -h),
            v.frame_to_world(h, h),
            v.frame_to_world(-h, h),
        ],
    }
}

/// Convex clipping of `a` against every edge of `b`.
pub fn intersect(a: &ConvexPolygon, b: &ConvexPolygon) -> Option<ConvexPolygon> {
    let mut output: Vec<WorldPoint> = a.vertices.clone();
    let m = b.vertices.len();
    for i in 0..m {
        if output.is_empty() {
            return None;
        }
        let ca = b.vertices[i];
        let cb = b.vertices[(i + 1) % m];
        let input = std::mem::take(&mut output);
        let n = input.len();
        for j in 0..n {
            let cur = input[j];
            let prev = input[(j + n - 1) % n];
            let cur_in = cross(&ca, &cb, &cur) >= -EPS;
            let prev_in = cross(&ca, &cb, &prev) >= -EPS;
            if cur_in {
                if !prev_in {
                    output.push(line_intersection(&prev, &cur, &ca, &cb));
                }
                output.push(cur);
            } else if prev_in {
                output.push(line_intersection(&prev, &cur, &ca, &cb));
            }
        }
    }
    dedup_ring(&mut output);
    ConvexPolygon::new(output)
}

fn dedup_ring(points: &mut Vec<WorldPoint>) {
    points.dedup_by(|a, b| a.distance(b) < EPS);
    while points.len() > 1 && points[0].distance(points.last().unwrap()) < EPS {
        points.pop();
    }
}

pub fn intersection_area(a: &ConvexPolygon, b: &ConvexPolygon) -> f64 {
    intersect(a, b).map_or(0.0, |p| p.area())
}

/// Intersection over union of two convex footprints.
pub fn polygon_iou(a: &ConvexPolygon, b: &ConvexPolygon) -> f64 {
    let inter = intersection_area(a, b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

pub fn iou(view: &ViewArea, dest: &AxisRect) -> f64 {
    polygon_iou(&view.corners(), &dest.to_polygon())
}

/// Closed-boundary containment.
pub fn contains(rect: &AxisRect, p: &WorldPoint) -> bool {
    rect.min.x <= p.x && p.x <= rect.max.x && rect.min.y <= p.y && p.y <= rect.max.y
}

pub fn bearing(from: &WorldPoint, to: &WorldPoint) -> Result<Heading, GeometryError> {
    let dx = to.x - from.x;
    let dy = to.y - from.y;
    if dx == 0.0 && dy == 0.0 {
        return Err(GeometryError::ZeroDisplacement);
    }
    Ok(Heading::new(dx.atan2(dy).to_degrees()))
}
