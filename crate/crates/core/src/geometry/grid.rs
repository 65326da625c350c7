use super::{Point, Rect};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Regular inferential grid in space plus the observation times.
///
/// Cells are numbered in row-major (lexicographic) order: `j = row * nx + col`,
/// with row 0 along the lower edge of the bounding box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub x0: f64,
    pub y0: f64,
    pub dx: f64,
    pub dy: f64,
    pub nx: usize,
    pub ny: usize,
    /// Padding factor per dimension for the circulant embedding.
    pub extension: usize,
    pub times: Vec<f64>,
}

/// Builds a grid over `bbox` with `nx * ny` cells and the given (strictly increasing) times.
pub fn build_grid(bbox: Rect, nx: usize, ny: usize, times: &[f64]) -> Result<Grid> {
    Grid::new(bbox, nx, ny, times.to_vec(), 2)
}

impl Grid {
    pub fn new(
        bbox: Rect,
        nx: usize,
        ny: usize,
        times: Vec<f64>,
        extension: usize,
    ) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidGrid(format!(
                "need at least one cell, got {nx}x{ny}"
            )));
        }
        if !(bbox.width() > 0.0 && bbox.height() > 0.0) || !bbox.area().is_finite() {
            return Err(Error::InvalidGrid(format!(
                "degenerate bounding box {bbox:?}"
            )));
        }
        if extension == 0 {
            return Err(Error::InvalidGrid(
                "extension factor must be at least 1".into(),
            ));
        }
        if times.is_empty() {
            return Err(Error::InvalidGrid("need at least one time point".into()));
        }
        if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid(
                "time stamps must be finite and strictly increasing".into(),
            ));
        }
        Ok(Grid {
            x0: bbox.min_x,
            y0: bbox.min_y,
            dx: bbox.width() / nx as f64,
            dy: bbox.height() / ny as f64,
            nx,
            ny,
            extension,
            times,
        })
    }

    pub fn with_extension(mut self, extension: usize) -> Result<Self> {
        if extension == 0 {
            return Err(Error::InvalidGrid(
                "extension factor must be at least 1".into(),
            ));
        }
        self.extension = extension;
        Ok(self)
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn cell_area(&self) -> f64 {
        self.dx * self.dy
    }

    /// Gaps between consecutive time stamps (length `n_times - 1`).
    pub fn time_gaps(&self) -> Vec<f64> {
        self.times.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn bbox(&self) -> Rect {
        Rect::new(
            self.x0,
            self.y0,
            self.x0 + self.dx * self.nx as f64,
            self.y0 + self.dy * self.ny as f64,
        )
    }

    pub fn cell_index(&self, col: usize, row: usize) -> usize {
        row * self.nx + col
    }

    pub fn cell_col_row(&self, j: usize) -> (usize, usize) {
        (j % self.nx, j / self.nx)
    }

    pub fn cell_rect(&self, j: usize) -> Rect {
        let (c, r) = self.cell_col_row(j);
        let min_x = self.x0 + c as f64 * self.dx;
        let min_y = self.y0 + r as f64 * self.dy;
        Rect::new(min_x, min_y, min_x + self.dx, min_y + self.dy)
    }

    pub fn cell_centroid(&self, j: usize) -> Point {
        let (c, r) = self.cell_col_row(j);
        Point::new(
            self.x0 + (c as f64 + 0.5) * self.dx,
            self.y0 + (r as f64 + 0.5) * self.dy,
        )
    }

    /// Cell containing `p`, if any. Points on the upper/right boundary map to the last cell.
    pub fn locate(&self, p: Point) -> Option<usize> {
        let fx = (p.x - self.x0) / self.dx;
        let fy = (p.y - self.y0) / self.dy;
        if !(fx >= 0.0 && fy >= 0.0 && fx <= self.nx as f64 && fy <= self.ny as f64) {
            return None;
        }
        let c = (fx as usize).min(self.nx - 1);
        let r = (fy as usize).min(self.ny - 1);
        Some(self.cell_index(c, r))
    }

    /// Cells whose rectangles intersect `rect` (interior overlap).
    pub fn cells_overlapping(&self, rect: &Rect) -> impl Iterator<Item = usize> + '_ {
        let c0 = (((rect.min_x - self.x0) / self.dx).floor().max(0.0) as usize).min(self.nx);
        let c1 = (((rect.max_x - self.x0) / self.dx).ceil().max(0.0) as usize).min(self.nx);
        let r0 = (((rect.min_y - self.y0) / self.dy).floor().max(0.0) as usize).min(self.ny);
        let r1 = (((rect.max_y - self.y0) / self.dy).ceil().max(0.0) as usize).min(self.ny);
        let rect = *rect;
        (r0..r1)
            .flat_map(move |r| (c0..c1).map(move |c| (c, r)))
            .map(move |(c, r)| self.cell_index(c, r))
            .filter(move |&j| self.cell_rect(j).intersects(&rect))
    }

    /// Dimensions (columns, rows) of the extended torus used by the circulant embedding.
    pub fn extended_dims(&self) -> (usize, usize) {
        (self.nx * self.extension, self.ny * self.extension)
    }

    pub fn n_extended(&self) -> usize {
        let (ex, ey) = self.extended_dims();
        ex * ey
    }

    /// Index of observation cell `j` inside the extended grid.
    pub fn extended_index(&self, j: usize) -> usize {
        let (c, r) = self.cell_col_row(j);
        r * self.nx * self.extension + c
    }
}
