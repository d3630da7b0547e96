use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Cell, GridSpec, Point};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlacementSpec {
    pub n_robots: usize,
    /// Fraction of each workspace side covered by the start rectangle.
    pub alpha: f64,
    pub lloyd_iters: usize,
    pub samples_per_robot: usize,
}

impl PlacementSpec {
    pub fn new(n_robots: usize, alpha: f64) -> Self {
        PlacementSpec {
            n_robots,
            alpha,
            lloyd_iters: 100,
            samples_per_robot: 100,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_robots == 0 {
            return Err(Error::Validation("n_robots must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Validation(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if self.samples_per_robot == 0 {
            return Err(Error::Validation("samples_per_robot must be >= 1".into()));
        }
        Ok(())
    }

    /// Centered start rectangle `(min, max)` in meters.
    pub fn rectangle(&self, grid: &GridSpec) -> (Point, Point) {
        let c = grid.center();
        let (hw, hh) = (0.5 * self.alpha * grid.width_m(), 0.5 * self.alpha * grid.height_m());
        (Point::new(c.x - hw, c.y - hh), Point::new(c.x + hw, c.y + hh))
    }
}

fn inside(p: Point, (lo, hi): (Point, Point)) -> bool {
    (lo.x..=hi.x).contains(&p.x) && (lo.y..=hi.y).contains(&p.y)
}

/// Start cells from Lloyd iterations over uniform samples of the
/// α-rectangle.
///
/// Samples come in point-symmetric pairs about the workspace center and are
/// drawn once, so the iteration converges instead of jittering. Robots
/// start at the first `n` samples; a robot with no assigned samples stays
/// put. Each final location snaps to its containing cell, or to the nearest
/// cell whose center lies inside the rectangle if the containing one does
/// not.
pub fn place_initial(spec: &PlacementSpec, grid: &GridSpec, rng: &mut impl Rng) -> Result<Vec<Cell>> {
    spec.validate()?;
    let rect = spec.rectangle(grid);
    let (lo, hi) = rect;
    let c = grid.center();
    let m = (spec.samples_per_robot * spec.n_robots).max(spec.n_robots);

    let mut samples = Vec::with_capacity(m + 1);
    while samples.len() + 1 < m {
        let p = Point::new(
            lo.x + rng.random::<f64>() * (hi.x - lo.x),
            lo.y + rng.random::<f64>() * (hi.y - lo.y),
        );
        samples.push(p);
        samples.push(Point::new(2.0 * c.x - p.x, 2.0 * c.y - p.y));
    }
    if samples.len() < m {
        samples.push(c);
    }

    let mut sites: Vec<Point> = samples[..spec.n_robots].to_vec();
    let mut sums = vec![(0.0, 0.0, 0usize); spec.n_robots];
    for _ in 0..spec.lloyd_iters {
        sums.fill((0.0, 0.0, 0));
        for &s in &samples {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (i, &site) in sites.iter().enumerate() {
                let d = s.distance_sq(site);
                if d < best_d {
                    best = i;
                    best_d = d;
                }
            }
            let acc = &mut sums[best];
            acc.0 += s.x;
            acc.1 += s.y;
            acc.2 += 1;
        }
        for (site, &(sx, sy, k)) in sites.iter_mut().zip(&sums) {
            if k > 0 {
                *site = Point::new(sx / k as f64, sy / k as f64);
            }
        }
    }

    Ok(sites
        .into_iter()
        .map(|p| {
            let cell = grid.cell_at(p);
            if inside(grid.cell_center(cell), rect) {
                return cell;
            }
            grid.cells()
                .filter(|&k| inside(grid.cell_center(k), rect))
                .min_by(|a, b| {
                    let da = grid.cell_center(*a).distance_sq(p);
                    let db = grid.cell_center(*b).distance_sq(p);
                    da.total_cmp(&db)
                })
                .unwrap_or(cell)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn zero_spread_stacks_at_center() {
        let g = GridSpec::default();
        let mut rng = seed::stream(1, &[]);
        let cells = place_initial(&PlacementSpec::new(4, 0.0), &g, &mut rng).unwrap();
        assert_eq!(cells, vec![Cell::new(12, 12); 4]);
    }

    #[test]
    fn single_robot_lands_at_center() {
        let g = GridSpec::default();
        for (s, alpha) in [(1, 0.33), (2, 0.66), (3, 1.0)] {
            let mut rng = seed::stream(s, &[]);
            let cells = place_initial(&PlacementSpec::new(1, alpha), &g, &mut rng).unwrap();
            assert_eq!(cells, vec![Cell::new(12, 12)]);
        }
    }

    #[test]
    fn half_spread_stays_in_rectangle() {
        let g = GridSpec::default();
        let spec = PlacementSpec::new(8, 0.5);
        let rect = spec.rectangle(&g);
        for s in 0..5 {
            let mut rng = seed::stream(s, &[]);
            for cell in place_initial(&spec, &g, &mut rng).unwrap() {
                assert!(inside(g.cell_center(cell), rect), "{cell}");
            }
        }
    }
}
