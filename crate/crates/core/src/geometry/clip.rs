use super::{Point, Rect};

/// Vertices closer than this (in map units) to a cell edge are moved onto it.
pub const DEFAULT_SNAP_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy)]
enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    fn inside(self, p: Point, r: &Rect) -> bool {
        match self {
            Side::Left => p.x >= r.min_x,
            Side::Right => p.x <= r.max_x,
            Side::Bottom => p.y >= r.min_y,
            Side::Top => p.y <= r.max_y,
        }
    }

    fn cut(self, a: Point, b: Point, r: &Rect) -> Point {
        match self {
            Side::Left | Side::Right => {
                let x = if matches!(self, Side::Left) {
                    r.min_x
                } else {
                    r.max_x
                };
                let t = (x - a.x) / (b.x - a.x);
                Point::new(x, a.y + t * (b.y - a.y))
            }
            Side::Bottom | Side::Top => {
                let y = if matches!(self, Side::Bottom) {
                    r.min_y
                } else {
                    r.max_y
                };
                let t = (y - a.y) / (b.y - a.y);
                Point::new(a.x + t * (b.x - a.x), y)
            }
        }
    }
}

fn snap(p: Point, r: &Rect, tol: f64) -> Point {
    let sx = |v: f64| {
        if (v - r.min_x).abs() <= tol {
            r.min_x
        } else if (v - r.max_x).abs() <= tol {
            r.max_x
        } else {
            v
        }
    };
    let sy = |v: f64| {
        if (v - r.min_y).abs() <= tol {
            r.min_y
        } else if (v - r.max_y).abs() <= tol {
            r.max_y
        } else {
            v
        }
    };
    Point::new(sx(p.x), sy(p.y))
}

/// Sutherland–Hodgman clip of a closed ring against an axis-aligned rectangle.
///
/// For non-convex rings the output may contain zero-width spurs along the
/// rectangle boundary. The winding number of every point strictly inside the
/// rectangle is preserved, so shoelace areas and crossing-parity tests on the
/// result are exact.
pub fn clip_ring_to_rect(ring: &[Point], rect: &Rect, snap_tol: f64) -> Vec<Point> {
    let mut points: Vec<Point> = ring.iter().map(|p| snap(*p, rect, snap_tol)).collect();
    for side in [Side::Left, Side::Right, Side::Bottom, Side::Top] {
        if points.is_empty() {
            break;
        }
        let mut out = Vec::with_capacity(points.len() + 4);
        let mut prev = *points.last().unwrap();
        let mut prev_in = side.inside(prev, rect);
        for &p in &points {
            let p_in = side.inside(p, rect);
            if p_in != prev_in {
                out.push(side.cut(prev, p, rect));
            }
            if p_in {
                out.push(p);
            }
            prev = p;
            prev_in = p_in;
        }
        points = out;
    }
    points.dedup();
    while points.len() > 1 && points.first() == points.last() {
        points.pop();
    }
    if points.len() < 3 {
        points.clear();
    }
    points
}
