use super::{MultiPolygon, Point, Polygon};
use crate::error::{Error, Result};
use std::f64::consts::TAU;

/// Outward Euclidean offset (Minkowski sum with a disc of radius `distance`).
///
/// Discs are approximated by inscribed regular polygons with `segments`
/// vertices, one of them at angle zero, so the result is contained in the
/// exact buffer and grows monotonically with `distance`. Convex parts yield a
/// single convex part; other parts yield the union of the original part, one
/// rectangle per edge and one disc per vertex.
pub fn buffer_multipolygon(
    geom: &MultiPolygon,
    distance: f64,
    segments: usize,
) -> Result<MultiPolygon> {
    if !(distance >= 0.0 && distance.is_finite()) {
        return Err(Error::geometry(format!(
            "buffer distance {distance} must be non-negative"
        )));
    }
    if segments < 4 {
        return Err(Error::geometry("buffer needs at least 4 segments per disc"));
    }
    if distance == 0.0 {
        return Ok(geom.clone());
    }
    let mut parts = Vec::new();
    for part in geom.parts() {
        if part.is_convex() {
            let mut cloud = Vec::with_capacity(part.exterior.len() * segments);
            for v in &part.exterior {
                cloud.extend(disc(*v, distance, segments));
            }
            parts.push(Polygon {
                exterior: convex_hull(cloud),
                holes: Vec::new(),
            });
            continue;
        }
        parts.push(part.clone());
        for ring in part.rings() {
            let n = ring.len();
            for k in 0..n {
                let a = ring[k];
                let b = ring[(k + 1) % n];
                let (ex, ey) = (b.x - a.x, b.y - a.y);
                let len = (ex * ex + ey * ey).sqrt();
                if len == 0.0 {
                    continue;
                }
                let (nx, ny) = (-ey / len * distance, ex / len * distance);
                parts.push(Polygon {
                    exterior: vec![
                        Point::new(a.x + nx, a.y + ny),
                        Point::new(a.x - nx, a.y - ny),
                        Point::new(b.x - nx, b.y - ny),
                        Point::new(b.x + nx, b.y + ny),
                    ],
                    holes: Vec::new(),
                });
                parts.push(Polygon {
                    exterior: disc(a, distance, segments),
                    holes: Vec::new(),
                });
            }
        }
    }
    for p in &parts {
        p.validate()
            .map_err(|e| Error::geometry(format!("offset failed: {e}")))?;
    }
    Ok(MultiPolygon(parts))
}

fn disc(c: Point, r: f64, segments: usize) -> Vec<Point> {
    (0..segments)
        .map(|k| {
            let t = TAU * k as f64 / segments as f64;
            Point::new(c.x + r * t.cos(), c.y + r * t.sin())
        })
        .collect()
}

/// Andrew's monotone chain; counter-clockwise output without collinear points.
pub(crate) fn convex_hull(mut pts: Vec<Point>) -> Vec<Point> {
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross =
        |o: Point, a: Point, b: Point| (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
    let mut lower: Vec<Point> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Point> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}
