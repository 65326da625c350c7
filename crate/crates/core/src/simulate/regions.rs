use crate::error::{Error, Result};
use crate::geometry::{
    buffer_multipolygon, clip_ring_to_rect, ring_signed_area, Grid, MultiPolygon, Point, Polygon,
    Rect, Region, RegionSet, DEFAULT_SNAP_TOLERANCE,
};

/// Vertices per buffer disc unless a caller asks otherwise.
pub const DEFAULT_BUFFER_SEGMENTS: usize = 32;

fn clip_polygon(poly: &Polygon, window: &Rect) -> Option<Polygon> {
    let exterior = clip_ring_to_rect(&poly.exterior, window, DEFAULT_SNAP_TOLERANCE);
    if exterior.len() < 3 || ring_signed_area(&exterior).abs() <= 1e-12 * window.area() {
        return None;
    }
    let holes = poly
        .holes
        .iter()
        .map(|h| clip_ring_to_rect(h, window, DEFAULT_SNAP_TOLERANCE))
        .filter(|h| h.len() >= 3 && ring_signed_area(h) != 0.0)
        .collect();
    Some(Polygon { exterior, holes })
}

/// Crops a multipolygon to `window`, dropping parts that fall outside it.
pub fn crop_to_window(geom: &MultiPolygon, window: &Rect) -> Result<MultiPolygon> {
    let parts: Vec<Polygon> = geom
        .parts()
        .iter()
        .filter_map(|p| clip_polygon(p, window))
        .collect();
    if parts.is_empty() {
        return Err(Error::geometry("region lies outside the window"));
    }
    MultiPolygon::new(parts)
}

/// Offsets every region outward by `buffer` and crops to `window`.
/// Ids, efforts, boundary models and active times are kept.
pub fn buffer_regions(
    base: &RegionSet,
    buffer: f64,
    window: &Rect,
    segments: usize,
) -> Result<RegionSet> {
    if !(buffer >= 0.0 && buffer.is_finite()) {
        return Err(Error::geometry(format!(
            "buffer {buffer} must be non-negative"
        )));
    }
    if buffer == 0.0 {
        return Ok(base.clone());
    }
    let mut out = Vec::with_capacity(base.len());
    for region in base.iter() {
        let grown = buffer_multipolygon(&region.geometry, buffer, segments)
            .and_then(|g| crop_to_window(&g, window))
            .map_err(|e| e.with_region(&region.id))?;
        let mut r = region.clone();
        r.geometry = grown;
        out.push(r);
    }
    RegionSet::new(out)
}

/// Keeps the part of a convex ring on the side of the line where
/// `a·x + b·y <= c`.
fn clip_half_plane(ring: &[Point], a: f64, b: f64, c: f64) -> Vec<Point> {
    let f = |p: Point| a * p.x + b * p.y - c;
    let mut out = Vec::with_capacity(ring.len() + 1);
    let n = ring.len();
    for k in 0..n {
        let p = ring[k];
        let q = ring[(k + 1) % n];
        let (fp, fq) = (f(p), f(q));
        if fp <= 0.0 {
            out.push(p);
        }
        if (fp < 0.0 && fq > 0.0) || (fp > 0.0 && fq < 0.0) {
            let s = fp / (fp - fq);
            out.push(Point::new(p.x + s * (q.x - p.x), p.y + s * (q.y - p.y)));
        }
    }
    out.dedup();
    while out.len() > 1 && out.first() == out.last() {
        out.pop();
    }
    out
}

/// Voronoi tiles of `sites` within `window`, one convex region per site,
/// named `prefix0`, `prefix1`, ...
pub fn voronoi_regions(sites: &[Point], window: &Rect, prefix: &str) -> Result<RegionSet> {
    if sites.is_empty() {
        return Err(Error::geometry("no Voronoi sites"));
    }
    let mut regions = Vec::with_capacity(sites.len());
    for (k, s) in sites.iter().enumerate() {
        let mut ring = window.to_polygon().exterior;
        for (l, o) in sites.iter().enumerate() {
            if l == k || ring.len() < 3 {
                continue;
            }
            if o == s {
                return Err(Error::geometry(format!(
                    "duplicate Voronoi site {k} and {l}"
                )));
            }
            // |x-s|^2 <= |x-o|^2  <=>  2(o-s)·x <= |o|^2 - |s|^2
            let a = 2.0 * (o.x - s.x);
            let b = 2.0 * (o.y - s.y);
            let c = o.x * o.x + o.y * o.y - s.x * s.x - s.y * s.y;
            ring = clip_half_plane(&ring, a, b, c);
        }
        if ring.len() < 3 || ring_signed_area(&ring).abs() <= 1e-12 * window.area() {
            return Err(Error::geometry(format!("Voronoi tile {k} is empty")));
        }
        let geom = MultiPolygon::new(vec![Polygon::new(ring, Vec::new())?])?;
        regions.push(Region::new(format!("{prefix}{k}"), geom));
    }
    RegionSet::new(regions)
}

/// Attendance probabilities `p[j][i] = d_ij^δ / Σ_l d_lj^δ` of each facility
/// `i` from each cell centroid `j`, with distances floored at half a cell
/// diagonal.
pub fn huff_probabilities(facilities: &[Point], grid: &Grid, delta: f64) -> Result<Vec<Vec<f64>>> {
    if facilities.is_empty() {
        return Err(Error::geometry("no facilities"));
    }
    if !delta.is_finite() {
        return Err(Error::Validation(format!(
            "Huff exponent {delta} is not finite"
        )));
    }
    let r0 = grid.cell_rect(0);
    let floor = 0.5 * r0.width().hypot(r0.height());
    Ok((0..grid.n_cells())
        .map(|j| {
            let c = grid.cell_centroid(j);
            let d: Vec<f64> = facilities
                .iter()
                .map(|f| (f.x - c.x).hypot(f.y - c.y).max(floor))
                .collect();
            // scale by the smallest distance so large |δ| cannot overflow
            let d_min = d.iter().cloned().fold(f64::INFINITY, f64::min);
            let d_max = d.iter().cloned().fold(0.0, f64::max);
            let base = if delta < 0.0 { d_min } else { d_max };
            let u: Vec<f64> = d.iter().map(|x| (x / base).powf(delta)).collect();
            let s: f64 = u.iter().sum();
            u.iter().map(|v| v / s).collect()
        })
        .collect())
}

/// Cells as merged rectangles, one per horizontal run in each row.
pub fn cells_to_multipolygon(grid: &Grid, member: &[bool]) -> Option<MultiPolygon> {
    let (nx, ny) = (grid.nx, grid.ny);
    let mut parts = Vec::new();
    for row in 0..ny {
        let mut col = 0;
        while col < nx {
            if !member[grid.cell_index(col, row)] {
                col += 1;
                continue;
            }
            let start = col;
            while col < nx && member[grid.cell_index(col, row)] {
                col += 1;
            }
            let a = grid.cell_rect(grid.cell_index(start, row));
            let b = grid.cell_rect(grid.cell_index(col - 1, row));
            parts.push(Rect::new(a.min_x, a.min_y, b.max_x, b.max_y).to_polygon());
        }
    }
    (!parts.is_empty()).then_some(MultiPolygon(parts))
}

/// Huff-model catchments: facility `i` serves every cell where its
/// attendance probability is at least `cutoff`. Facilities serving no cell
/// are left out (logged). Distances are Euclidean.
pub fn huff_catchments(
    facilities: &[Point],
    grid: &Grid,
    delta: f64,
    cutoff: f64,
) -> Result<RegionSet> {
    if !(cutoff > 0.0 && cutoff < 1.0) {
        return Err(Error::Validation(format!(
            "Huff cutoff {cutoff} must lie in (0, 1)"
        )));
    }
    let p = huff_probabilities(facilities, grid, delta)?;
    let mut regions = Vec::new();
    for i in 0..facilities.len() {
        let member: Vec<bool> = p.iter().map(|row| row[i] >= cutoff).collect();
        match cells_to_multipolygon(grid, &member) {
            Some(geom) => regions.push(Region::new(format!("facility{i}"), geom)),
            None => log::warn!("facility {i} has an empty catchment at cutoff {cutoff}"),
        }
    }
    if regions.is_empty() {
        return Err(Error::Validation("every Huff catchment is empty".into()));
    }
    RegionSet::new(regions)
}
