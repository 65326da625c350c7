//! Planar geometry: polygons, the inferential grid, regions and the per-cell
//! partition induced by overlapping regions.

mod arrangement;
mod buffer;
mod clip;
mod grid;
mod partition;
mod region;

pub use arrangement::{signature_areas, SignatureArea};
pub use buffer::buffer_multipolygon;
pub use clip::{clip_ring_to_rect, DEFAULT_SNAP_TOLERANCE};
pub use grid::{build_grid, Grid};
pub use partition::{
    build_partition, build_partition_with, intersect_region_cell, CellEntry, CellPartition,
    PartitionElement, PartitionOptions,
};
pub use region::{
    realise_regions, BoundaryDraw, BoundaryModel, BoundaryPrior, IndependentBoundaries, Region,
    RegionSet, ScaleDistribution,
};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }
}

/// Axis-aligned rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Rect {
    pub const fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Rect {
            min_x,
            min_y,
            max_x,
            max_y,
        }
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn intersects(&self, other: &Rect) -> bool {
        self.min_x < other.max_x
            && other.min_x < self.max_x
            && self.min_y < other.max_y
            && other.min_y < self.max_y
    }

    /// Area of overlap between two rectangles.
    pub fn overlap_area(&self, other: &Rect) -> f64 {
        let w = self.max_x.min(other.max_x) - self.min_x.max(other.min_x);
        let h = self.max_y.min(other.max_y) - self.min_y.max(other.min_y);
        if w > 0.0 && h > 0.0 {
            w * h
        } else {
            0.0
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.min_x && p.x <= self.max_x && p.y >= self.min_y && p.y <= self.max_y
    }

    pub fn to_polygon(&self) -> Polygon {
        Polygon {
            exterior: vec![
                Point::new(self.min_x, self.min_y),
                Point::new(self.max_x, self.min_y),
                Point::new(self.max_x, self.max_y),
                Point::new(self.min_x, self.max_y),
            ],
            holes: Vec::new(),
        }
    }

    fn expand(&mut self, p: Point) {
        self.min_x = self.min_x.min(p.x);
        self.min_y = self.min_y.min(p.y);
        self.max_x = self.max_x.max(p.x);
        self.max_y = self.max_y.max(p.y);
    }

    fn empty() -> Rect {
        Rect::new(
            f64::INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::NEG_INFINITY,
        )
    }
}

/// Shoelace signed area; positive for counter-clockwise rings.
pub fn ring_signed_area(ring: &[Point]) -> f64 {
    let n = ring.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        let a = ring[i];
        let b = ring[(i + 1) % n];
        acc += a.x * b.y - b.x * a.y;
    }
    0.5 * acc
}

/// Simple polygon with optional holes. Rings are stored open (the closing
/// vertex is not repeated).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub exterior: Vec<Point>,
    pub holes: Vec<Vec<Point>>,
}

impl Polygon {
    /// Builds and validates a polygon. A repeated closing vertex is accepted and dropped.
    pub fn new(exterior: Vec<Point>, holes: Vec<Vec<Point>>) -> Result<Self> {
        let polygon = Polygon {
            exterior: open_ring(exterior),
            holes: holes.into_iter().map(open_ring).collect(),
        };
        polygon.validate()?;
        Ok(polygon)
    }

    pub fn rings(&self) -> impl Iterator<Item = &[Point]> {
        std::iter::once(self.exterior.as_slice()).chain(self.holes.iter().map(|h| h.as_slice()))
    }

    pub fn area(&self) -> f64 {
        ring_signed_area(&self.exterior).abs()
            - self
                .holes
                .iter()
                .map(|h| ring_signed_area(h).abs())
                .sum::<f64>()
    }

    pub fn bbox(&self) -> Rect {
        let mut r = Rect::empty();
        for p in &self.exterior {
            r.expand(*p);
        }
        r
    }

    /// Even-odd point-in-polygon test across all rings.
    pub fn contains(&self, p: Point) -> bool {
        self.rings().filter(|ring| ring_crosses(ring, p)).count() % 2 == 1
    }

    pub fn is_convex(&self) -> bool {
        if !self.holes.is_empty() {
            return false;
        }
        let ring = &self.exterior;
        let n = ring.len();
        let mut sign = 0.0f64;
        for i in 0..n {
            let a = ring[i];
            let b = ring[(i + 1) % n];
            let c = ring[(i + 2) % n];
            let cross = (b.x - a.x) * (c.y - b.y) - (b.y - a.y) * (c.x - b.x);
            if cross.abs() <= 1e-15 * (1.0 + a.x.abs() + a.y.abs()) {
                continue;
            }
            if sign == 0.0 {
                sign = cross.signum();
            } else if cross.signum() != sign {
                return false;
            }
        }
        true
    }

    /// Checks closure, simplicity and positive area.
    pub fn validate(&self) -> Result<()> {
        for (k, ring) in self.rings().enumerate() {
            let what = if k == 0 { "exterior" } else { "hole" };
            if ring.len() < 3 {
                return Err(Error::geometry(format!(
                    "{what} ring has {} distinct vertices, need at least 3",
                    ring.len()
                )));
            }
            if ring.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
                return Err(Error::geometry(format!(
                    "{what} ring has non-finite coordinates"
                )));
            }
            if ring_signed_area(ring) == 0.0 {
                return Err(Error::geometry(format!("{what} ring has zero area")));
            }
        }
        let rings: Vec<&[Point]> = self.rings().collect();
        for (ra, a) in rings.iter().enumerate() {
            for (rb, b) in rings.iter().enumerate().skip(ra) {
                if let Some(at) = first_crossing(a, b, ra == rb) {
                    return Err(Error::geometry(format!(
                        "self-intersection near ({:.6}, {:.6})",
                        at.x, at.y
                    )));
                }
            }
        }
        if self.area() <= 0.0 {
            return Err(Error::geometry("polygon has non-positive area"));
        }
        Ok(())
    }

    pub fn map_points(&self, f: impl Fn(Point) -> Point) -> Polygon {
        Polygon {
            exterior: self.exterior.iter().map(|p| f(*p)).collect(),
            holes: self
                .holes
                .iter()
                .map(|h| h.iter().map(|p| f(*p)).collect())
                .collect(),
        }
    }
}

/// A set of polygons interpreted as their union. Parts may overlap.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiPolygon(pub Vec<Polygon>);

impl MultiPolygon {
    pub fn new(parts: Vec<Polygon>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::geometry("multipolygon has no parts"));
        }
        for p in &parts {
            p.validate()?;
        }
        Ok(MultiPolygon(parts))
    }

    pub fn from_rect(rect: Rect) -> Self {
        MultiPolygon(vec![rect.to_polygon()])
    }

    pub fn parts(&self) -> &[Polygon] {
        &self.0
    }

    pub fn bbox(&self) -> Rect {
        let mut r = Rect::empty();
        for part in &self.0 {
            let b = part.bbox();
            r.expand(Point::new(b.min_x, b.min_y));
            r.expand(Point::new(b.max_x, b.max_y));
        }
        r
    }

    pub fn contains(&self, p: Point) -> bool {
        self.0.iter().any(|part| part.contains(p))
    }

    /// Area of the union of all parts.
    pub fn area(&self) -> f64 {
        match self.0.as_slice() {
            [single] => single.area(),
            _ => {
                let bbox = self.bbox();
                signature_areas(&bbox, &[self], DEFAULT_SNAP_TOLERANCE)
                    .iter()
                    .map(|s| s.area)
                    .sum()
            }
        }
    }

    /// Area-weighted centroid of the parts (exact when parts are disjoint).
    pub fn centroid(&self) -> Point {
        let mut ax = 0.0;
        let mut ay = 0.0;
        let mut total = 0.0;
        for part in &self.0 {
            for (k, ring) in part.rings().enumerate() {
                let (cx, cy, a) = ring_centroid(ring);
                let a = if k == 0 { a.abs() } else { -a.abs() };
                ax += cx * a;
                ay += cy * a;
                total += a;
            }
        }
        Point::new(ax / total, ay / total)
    }

    pub fn map_points(&self, f: impl Fn(Point) -> Point + Copy) -> MultiPolygon {
        MultiPolygon(self.0.iter().map(|p| p.map_points(f)).collect())
    }

    pub fn validate(&self) -> Result<()> {
        if self.0.is_empty() {
            return Err(Error::geometry("multipolygon has no parts"));
        }
        self.0.iter().try_for_each(Polygon::validate)
    }
}

fn ring_centroid(ring: &[Point]) -> (f64, f64, f64) {
    let n = ring.len();
    let (mut cx, mut cy, mut a) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let p = ring[i];
        let q = ring[(i + 1) % n];
        let cross = p.x * q.y - q.x * p.y;
        a += cross;
        cx += (p.x + q.x) * cross;
        cy += (p.y + q.y) * cross;
    }
    a *= 0.5;
    (cx / (6.0 * a), cy / (6.0 * a), a)
}

fn open_ring(mut ring: Vec<Point>) -> Vec<Point> {
    while ring.len() > 1 && ring.first() == ring.last() {
        ring.pop();
    }
    ring.dedup();
    ring
}

fn ring_crosses(ring: &[Point], p: Point) -> bool {
    let n = ring.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let a = ring[i];
        let b = ring[j];
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn on_segment(a: Point, b: Point, p: Point) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// Whether closed segments `ab` and `cd` share any point.
fn segments_touch(a: Point, b: Point, c: Point, d: Point) -> bool {
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    if ((o1 > 0.0 && o2 < 0.0) || (o1 < 0.0 && o2 > 0.0))
        && ((o3 > 0.0 && o4 < 0.0) || (o3 < 0.0 && o4 > 0.0))
    {
        return true;
    }
    (o1 == 0.0 && on_segment(a, b, c))
        || (o2 == 0.0 && on_segment(a, b, d))
        || (o3 == 0.0 && on_segment(c, d, a))
        || (o4 == 0.0 && on_segment(c, d, b))
}

fn first_crossing(a: &[Point], b: &[Point], same_ring: bool) -> Option<Point> {
    let na = a.len();
    let nb = b.len();
    for i in 0..na {
        let (p0, p1) = (a[i], a[(i + 1) % na]);
        let start = if same_ring { i + 1 } else { 0 };
        for j in start..nb {
            let (q0, q1) = (b[j], b[(j + 1) % nb]);
            if same_ring && (j == i + 1 || (i == 0 && j == na - 1)) {
                // adjacent edges share one vertex; only a fold-back is invalid
                let (shared, u, v) = if j == i + 1 {
                    (p1, p0, q1)
                } else {
                    (p0, p1, q0)
                };
                let folds = orient(shared, u, v) == 0.0
                    && (u.x - shared.x) * (v.x - shared.x) + (u.y - shared.y) * (v.y - shared.y)
                        > 0.0;
                if folds {
                    return Some(shared);
                }
                continue;
            }
            if segments_touch(p0, p1, q0, q1) {
                return Some(p0);
            }
        }
    }
    None
}
