use super::{parse_error, read_text, write_atomic};
use crate::error::{Error, Result};
use crate::geometry::Grid;
use std::fmt::Write as _;
use std::path::Path;

const DEFAULT_NODATA: f64 = -9999.0;

/// Plain-text grid raster. `values` are row-major with the top row first;
/// missing cells hold `nodata`.
#[derive(Clone, Debug, PartialEq)]
pub struct AsciiRaster {
    pub ncols: usize,
    pub nrows: usize,
    /// Lower-left corner.
    pub x0: f64,
    pub y0: f64,
    pub dx: f64,
    pub dy: f64,
    pub nodata: f64,
    pub values: Vec<f64>,
}

impl AsciiRaster {
    /// Raster aligned with `grid`, from values in grid cell order. Non-finite
    /// values are written as nodata.
    pub fn from_grid(grid: &Grid, values: &[f64]) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a grid of {} cells",
                values.len(),
                grid.n_cells()
            )));
        }
        let mut out = Vec::with_capacity(values.len());
        for r in (0..grid.ny).rev() {
            for c in 0..grid.nx {
                let v = values[grid.cell_index(c, r)];
                out.push(if v.is_finite() { v } else { DEFAULT_NODATA });
            }
        }
        Ok(AsciiRaster {
            ncols: grid.nx,
            nrows: grid.ny,
            x0: grid.x0,
            y0: grid.y0,
            dx: grid.dx,
            dy: grid.dy,
            nodata: DEFAULT_NODATA,
            values: out,
        })
    }

    pub fn is_nodata(&self, v: f64) -> bool {
        v == self.nodata || v.is_nan()
    }

    /// Value at column `c` and row `r` counted from the bottom.
    pub fn at(&self, c: usize, r: usize) -> f64 {
        self.values[(self.nrows - 1 - r) * self.ncols + c]
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let bad = |m: String| parse_error(path, m);
        let mut lines = text.lines().enumerate().peekable();
        let mut header = std::collections::HashMap::new();
        while let Some((_, line)) = lines.peek() {
            let mut parts = line.split_whitespace();
            let Some(key) = parts.next() else {
                lines.next();
                continue;
            };
            if !key.starts_with(|c: char| c.is_ascii_alphabetic()) {
                break;
            }
            let value = parts
                .next()
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| bad(format!("header `{key}` needs a numeric value")))?;
            header.insert(key.to_ascii_lowercase(), value);
            lines.next();
        }
        let get = |k: &str| header.get(k).copied();
        let need = |k: &str| get(k).ok_or_else(|| bad(format!("missing header `{k}`")));
        let as_count = |v: f64, k: &str| {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(bad(format!("`{k}` must be a positive integer")))
            }
        };
        let ncols = as_count(need("ncols")?, "ncols")?;
        let nrows = as_count(need("nrows")?, "nrows")?;
        let (dx, dy) = match (get("cellsize"), get("dx"), get("dy")) {
            (Some(c), _, _) => (c, c),
            (None, Some(dx), Some(dy)) => (dx, dy),
            _ => return Err(bad("missing header `cellsize`".into())),
        };
        if !(dx > 0.0 && dy > 0.0) {
            return Err(bad("cell size must be positive".into()));
        }
        let x0 = match (get("xllcorner"), get("xllcenter")) {
            (Some(x), _) => x,
            (None, Some(x)) => x - dx / 2.0,
            _ => return Err(bad("missing header `xllcorner`".into())),
        };
        let y0 = match (get("yllcorner"), get("yllcenter")) {
            (Some(y), _) => y,
            (None, Some(y)) => y - dy / 2.0,
            _ => return Err(bad("missing header `yllcorner`".into())),
        };
        let nodata = get("nodata_value").unwrap_or(DEFAULT_NODATA);
        let mut values = Vec::with_capacity(ncols * nrows);
        for (k, line) in lines {
            for tok in line.split_whitespace() {
                let v = tok
                    .parse::<f64>()
                    .map_err(|_| bad(format!("line {}: `{tok}` is not a number", k + 1)))?;
                values.push(v);
            }
        }
        if values.len() != ncols * nrows {
            return Err(bad(format!(
                "expected {} values ({ncols} x {nrows}), found {}",
                ncols * nrows,
                values.len()
            )));
        }
        Ok(AsciiRaster {
            ncols,
            nrows,
            x0,
            y0,
            dx,
            dy,
            nodata,
            values,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?, path)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "ncols {}", self.ncols);
        let _ = writeln!(s, "nrows {}", self.nrows);
        let _ = writeln!(s, "xllcorner {}", self.x0);
        let _ = writeln!(s, "yllcorner {}", self.y0);
        if self.dx == self.dy {
            let _ = writeln!(s, "cellsize {}", self.dx);
        } else {
            let _ = writeln!(s, "dx {}", self.dx);
            let _ = writeln!(s, "dy {}", self.dy);
        }
        let _ = writeln!(s, "NODATA_value {}", self.nodata);
        for row in self.values.chunks(self.ncols) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_text().as_bytes())
    }
}

fn overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

/// Area-weighted average of the raster over each grid cell, ignoring nodata.
/// The raster must cover the grid window and leave no cell without data.
pub fn resample_to_grid(raster: &AsciiRaster, grid: &Grid) -> Result<Vec<f64>> {
    let (gx1, gy1) = (
        grid.x0 + grid.nx as f64 * grid.dx,
        grid.y0 + grid.ny as f64 * grid.dy,
    );
    let (rx1, ry1) = (
        raster.x0 + raster.ncols as f64 * raster.dx,
        raster.y0 + raster.nrows as f64 * raster.dy,
    );
    let tol = 1e-9 * (gx1 - grid.x0).max(gy1 - grid.y0);
    if raster.x0 > grid.x0 + tol || raster.y0 > grid.y0 + tol || rx1 < gx1 - tol || ry1 < gy1 - tol
    {
        return Err(Error::Validation(format!(
            "raster extent [{}, {}] x [{}, {}] does not cover the grid [{}, {gx1}] x [{}, {gy1}]",
            raster.x0, rx1, raster.y0, ry1, grid.x0, grid.y0
        )));
    }
    let min_w = 1e-12 * raster.dx * raster.dy;
    (0..grid.n_cells())
        .map(|j| {
            let cell = grid.cell_rect(j);
            let c_lo = ((cell.min_x - raster.x0) / raster.dx).floor().max(0.0) as usize;
            let c_hi = (((cell.max_x - raster.x0) / raster.dx).ceil() as usize).min(raster.ncols);
            let r_lo = ((cell.min_y - raster.y0) / raster.dy).floor().max(0.0) as usize;
            let r_hi = (((cell.max_y - raster.y0) / raster.dy).ceil() as usize).min(raster.nrows);
            let mut base = None;
            let (mut num, mut den) = (0.0, 0.0);
            for r in r_lo..r_hi {
                let y0 = raster.y0 + r as f64 * raster.dy;
                let h = overlap(cell.min_y, cell.max_y, y0, y0 + raster.dy);
                for c in c_lo..c_hi {
                    let x0 = raster.x0 + c as f64 * raster.dx;
                    let w = h * overlap(cell.min_x, cell.max_x, x0, x0 + raster.dx);
                    let v = raster.at(c, r);
                    if w <= min_w || raster.is_nodata(v) {
                        continue;
                    }
                    // deviations from the first value keep constant fields exact
                    let b = *base.get_or_insert(v);
                    num += w * (v - b);
                    den += w;
                }
            }
            match base {
                Some(b) => Ok(b + num / den),
                None => Err(Error::Validation(format!(
                    "raster has no data under grid cell {j}"
                ))),
            }
        })
        .collect()
}
