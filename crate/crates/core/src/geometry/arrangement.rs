//! Exact areas of every membership signature inside a rectangle.
//!
//! All region rings are clipped to the rectangle and the result is swept with
//! vertical slabs whose boundaries are every vertex abscissa and every pairwise
//! edge crossing. Inside a slab no two edges cross, so the slab is cut into
//! trapezoids whose membership is constant and whose areas are exact.

use super::clip::clip_ring_to_rect;
use super::{MultiPolygon, Point, Rect};
use std::collections::BTreeMap;

/// Area of the part of a rectangle covered by exactly the regions in `signature`.
#[derive(Clone, Debug, PartialEq)]
pub struct SignatureArea {
    /// Sorted indices into the region slice passed to [`signature_areas`].
    pub signature: Vec<usize>,
    pub area: f64,
}

struct Edge {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
    part: usize,
}

impl Edge {
    fn y_at(&self, x: f64) -> f64 {
        if x <= self.x0 {
            self.y0
        } else if x >= self.x1 {
            self.y1
        } else {
            self.y0 + (self.y1 - self.y0) * (x - self.x0) / (self.x1 - self.x0)
        }
    }
}

/// Returns the nonempty signatures (region subsets) and their areas within
/// `rect`. The empty signature (uncovered area) is not reported.
///
/// Each region is the union of its parts; within a part, rings follow the
/// even-odd rule.
pub fn signature_areas(
    rect: &Rect,
    regions: &[&MultiPolygon],
    snap_tol: f64,
) -> Vec<SignatureArea> {
    let mut edges = Vec::new();
    let mut part_offsets = Vec::with_capacity(regions.len() + 1);
    let mut n_parts = 0usize;
    let mut xs = vec![rect.min_x, rect.max_x];
    for region in regions {
        part_offsets.push(n_parts);
        for part in region.parts() {
            if !part.bbox().intersects(rect) {
                n_parts += 1;
                continue;
            }
            for ring in part.rings() {
                let clipped = clip_ring_to_rect(ring, rect, snap_tol);
                let n = clipped.len();
                for k in 0..n {
                    let a = clipped[k];
                    let b = clipped[(k + 1) % n];
                    xs.push(a.x);
                    if a.x == b.x {
                        continue;
                    }
                    let (p, q) = if a.x < b.x { (a, b) } else { (b, a) };
                    edges.push(Edge {
                        x0: p.x,
                        y0: p.y,
                        x1: q.x,
                        y1: q.y,
                        part: n_parts,
                    });
                }
            }
            n_parts += 1;
        }
    }
    part_offsets.push(n_parts);
    if edges.is_empty() {
        return Vec::new();
    }

    for i in 0..edges.len() {
        for j in (i + 1)..edges.len() {
            if let Some(x) = crossing_x(&edges[i], &edges[j]) {
                xs.push(x);
            }
        }
    }
    xs.retain(|x| *x >= rect.min_x && *x <= rect.max_x);
    xs.sort_by(f64::total_cmp);
    let merge = 1e-14 * rect.width().max(f64::MIN_POSITIVE);
    xs.dedup_by(|a, b| (*a - *b).abs() <= merge);

    let mut acc: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
    let mut parity = vec![false; n_parts];
    let mut active: Vec<(f64, f64, usize)> = Vec::new();
    for w in xs.windows(2) {
        let (xa, xb) = (w[0], w[1]);
        let width = xb - xa;
        if width <= 0.0 {
            continue;
        }
        let xm = 0.5 * (xa + xb);
        active.clear();
        for (k, e) in edges.iter().enumerate() {
            if e.x0 < xm && xm < e.x1 {
                active.push((e.y_at(xa), e.y_at(xb), k));
            }
        }
        if active.len() < 2 {
            continue;
        }
        active.sort_by(|a, b| (a.0 + a.1).total_cmp(&(b.0 + b.1)));
        parity.iter_mut().for_each(|p| *p = false);
        for win in 0..active.len() {
            let (ya, yb, k) = active[win];
            let e = &edges[k];
            parity[e.part] = !parity[e.part];
            if let Some(&(na, nb, _)) = active.get(win + 1) {
                let area = 0.5 * width * ((na - ya) + (nb - yb));
                if area <= 0.0 {
                    continue;
                }
                let sig: Vec<usize> = (0..regions.len())
                    .filter(|&r| (part_offsets[r]..part_offsets[r + 1]).any(|p| parity[p]))
                    .collect();
                if !sig.is_empty() {
                    *acc.entry(sig).or_insert(0.0) += area;
                }
            }
        }
    }
    acc.into_iter()
        .map(|(signature, area)| SignatureArea { signature, area })
        .collect()
}

fn crossing_x(e: &Edge, f: &Edge) -> Option<f64> {
    let lo = e.x0.max(f.x0);
    let hi = e.x1.min(f.x1);
    if lo >= hi {
        return None;
    }
    let p = Point::new(e.x0, e.y0);
    let r = Point::new(e.x1 - e.x0, e.y1 - e.y0);
    let q = Point::new(f.x0, f.y0);
    let s = Point::new(f.x1 - f.x0, f.y1 - f.y0);
    let denom = r.x * s.y - r.y * s.x;
    if denom == 0.0 {
        return None;
    }
    let qp = Point::new(q.x - p.x, q.y - p.y);
    let t = (qp.x * s.y - qp.y * s.x) / denom;
    let u = (qp.x * r.y - qp.y * r.x) / denom;
    if t > 0.0 && t < 1.0 && u > 0.0 && u < 1.0 {
        let x = p.x + t * r.x;
        if x > lo && x < hi {
            return Some(x);
        }
    }
    None
}
