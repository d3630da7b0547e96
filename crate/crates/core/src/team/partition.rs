use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Cell, GridSpec, Point};
use crate::planner::Region;

/// Nearest-seed assignment of every grid cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    /// Seeds after moving duplicates to a free neighbor.
    pub seeds: Vec<Cell>,
    /// Owner id per cell, indexed like [`GridSpec::cell_index`].
    pub owners: Vec<usize>,
}

impl Partition {
    pub fn owner(&self, grid: &GridSpec, cell: Cell) -> usize {
        self.owners[grid.cell_index(cell)]
    }

    pub fn region(&self, id: usize) -> Region<'_> {
        Region {
            owners: &self.owners,
            id,
        }
    }

    /// Cell edges separating different owners, as segments in meters.
    pub fn boundary_segments(&self, grid: &GridSpec) -> Vec<(Point, Point)> {
        let (w, h) = (grid.cell_width_m(), grid.cell_height_m());
        let mut segs = Vec::new();
        for cell in grid.cells() {
            let here = self.owner(grid, cell);
            let (x0, y0) = (cell.ix as f64 * w, cell.iy as f64 * h);
            if cell.ix + 1 < grid.cells_x() && self.owner(grid, Cell::new(cell.ix + 1, cell.iy)) != here {
                segs.push((Point::new(x0 + w, y0), Point::new(x0 + w, y0 + h)));
            }
            if cell.iy + 1 < grid.cells_y() && self.owner(grid, Cell::new(cell.ix, cell.iy + 1)) != here {
                segs.push((Point::new(x0, y0 + h), Point::new(x0 + w, y0 + h)));
            }
        }
        segs
    }
}

/// Closest unused cell to `cell`, searching rings of growing Manhattan
/// radius in a fixed order.
fn nearest_free(cell: Cell, grid: &GridSpec, used: &[Cell]) -> Option<Cell> {
    let max_r = grid.cells_x() + grid.cells_y();
    for r in 1..=max_r {
        let mut ring: Vec<Cell> = grid.cells().filter(|c| c.manhattan(cell) == r).collect();
        ring.sort_by_key(|c| (c.iy, c.ix));
        if let Some(c) = ring.into_iter().find(|c| !used.contains(c)) {
            return Some(c);
        }
    }
    None
}

/// Assign each cell to its nearest seed (Euclidean between cell centers,
/// ties to the lower id). Repeated seeds are first moved to the nearest
/// free cell.
pub fn voronoi_partition(grid: &GridSpec, seeds: &[Cell]) -> Result<Partition> {
    if seeds.is_empty() {
        return Err(Error::Validation("partition needs at least one seed".into()));
    }
    if seeds.len() > grid.n_cells() {
        return Err(Error::Validation(format!(
            "{} seeds do not fit on {} cells",
            seeds.len(),
            grid.n_cells()
        )));
    }
    let mut placed: Vec<Cell> = Vec::with_capacity(seeds.len());
    for &s in seeds {
        if !grid.contains_cell(s) {
            return Err(Error::Index(format!("seed {s} outside grid")));
        }
        let s = if placed.contains(&s) {
            nearest_free(s, grid, &placed).expect("grid has a free cell")
        } else {
            s
        };
        placed.push(s);
    }

    let (w, h) = (grid.cell_width_m(), grid.cell_height_m());
    let owners = grid
        .cells()
        .map(|c| {
            let d2 = |s: &Cell| {
                let dx = c.ix.abs_diff(s.ix) as f64 * w;
                let dy = c.iy.abs_diff(s.iy) as f64 * h;
                dx * dx + dy * dy
            };
            let mut best = 0;
            for (i, s) in placed.iter().enumerate().skip(1) {
                // equal in exact arithmetic (3 x 3.2 vs 4 x 2.4) may differ by
                // rounding; those still count as ties
                let b = d2(&placed[best]);
                if d2(s) < b - 1e-9 * b.max(1.0) {
                    best = i;
                }
            }
            best
        })
        .collect();
    Ok(Partition { seeds: placed, owners })
}
