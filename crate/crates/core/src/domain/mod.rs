//! Observation window, population raster, areal partition and the shared
//! evaluation grid.
//!
//! All rasters are stored row-major with row 0 at `ymin` and column 0 at
//! `xmin`; a cell index is `row * ncols + col`.

mod adjacency;
mod grid;
mod partition;
mod population;

pub use adjacency::{adjacency_from_partition, AdjacencyGraph};
pub use grid::{BWeight, EvalGrid};
pub use partition::{build_areal_partition, write_partition_csv, ArealPartition};
pub use population::{
    build_synthetic_population, load_population_csv, write_population_csv, PopulationCentre,
    PopulationGrid, SyntheticPopulationSpec,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist2(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn dist(&self, other: &Point) -> f64 {
        self.dist2(other).sqrt()
    }
}

/// Rectangular observation window in planar metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
}

impl Window {
    pub fn new(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Result<Self> {
        let w = Window {
            xmin,
            ymin,
            xmax,
            ymax,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.xmin, self.ymin, self.xmax, self.ymax]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.xmax <= self.xmin || self.ymax <= self.ymin {
            return Err(Error::config(format!("degenerate window {self:?}")));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> f64 {
        self.ymax - self.ymin
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn diameter(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.x >= self.xmin && p.x <= self.xmax && p.y >= self.ymin && p.y <= self.ymax
    }

    /// Number of `(rows, cols)` of side `cell_size` tiling the window exactly.
    pub fn tiling(&self, cell_size: f64) -> Result<(usize, usize)> {
        if !(cell_size > 0.0) || !cell_size.is_finite() {
            return Err(Error::config(format!("cell size must be positive, got {cell_size}")));
        }
        let cols = self.width() / cell_size;
        let rows = self.height() / cell_size;
        let exact = |v: f64| (v - v.round()).abs() <= 1e-9 * v.max(1.0) && v.round() >= 1.0;
        if !exact(cols) || !exact(rows) {
            return Err(Error::config(format!(
                "cell size {cell_size} does not tile the {} x {} window",
                self.width(),
                self.height()
            )));
        }
        Ok((rows.round() as usize, cols.round() as usize))
    }
}

/// Row/column geometry shared by every raster over a window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Raster {
    pub window: Window,
    pub cell_size: f64,
    pub nrows: usize,
    pub ncols: usize,
}

impl Raster {
    pub fn new(window: Window, cell_size: f64) -> Result<Self> {
        window.validate()?;
        let (nrows, ncols) = window.tiling(cell_size)?;
        Ok(Raster {
            window,
            cell_size,
            nrows,
            ncols,
        })
    }

    pub fn len(&self) -> usize {
        self.nrows * self.ncols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.ncols + col
    }

    pub fn row_col(&self, idx: usize) -> (usize, usize) {
        (idx / self.ncols, idx % self.ncols)
    }

    pub fn centroid(&self, idx: usize) -> Point {
        let (r, c) = self.row_col(idx);
        Point::new(
            self.window.xmin + (c as f64 + 0.5) * self.cell_size,
            self.window.ymin + (r as f64 + 0.5) * self.cell_size,
        )
    }

    pub fn cell_area(&self) -> f64 {
        self.cell_size * self.cell_size
    }

    /// Cell containing `p`; points on the upper/right edge belong to the last cell.
    pub fn locate(&self, p: &Point) -> Option<usize> {
        if !self.window.contains(p) {
            return None;
        }
        let c = ((p.x - self.window.xmin) / self.cell_size).floor() as usize;
        let r = ((p.y - self.window.ymin) / self.cell_size).floor() as usize;
        Some(self.index(r.min(self.nrows - 1), c.min(self.ncols - 1)))
    }

    /// Rook neighbours of a cell.
    pub fn neighbours(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        let (r, c) = self.row_col(idx);
        let mut out = [usize::MAX; 4];
        if r > 0 {
            out[0] = idx - self.ncols;
        }
        if r + 1 < self.nrows {
            out[1] = idx + self.ncols;
        }
        if c > 0 {
            out[2] = idx - 1;
        }
        if c + 1 < self.ncols {
            out[3] = idx + 1;
        }
        out.into_iter().filter(|&i| i != usize::MAX)
    }

    /// Mapping from each cell of `self` to the cell of a coarser raster
    /// `coarse` that contains its centroid. Both must tile the same window.
    pub fn coarsen_map(&self, coarse: &Raster) -> Result<Vec<usize>> {
        if self.window != coarse.window {
            return Err(Error::domain("rasters cover different windows"));
        }
        (0..self.len())
            .map(|i| {
                coarse
                    .locate(&self.centroid(i))
                    .ok_or_else(|| Error::domain("cell centroid outside coarse raster"))
            })
            .collect()
    }
}
