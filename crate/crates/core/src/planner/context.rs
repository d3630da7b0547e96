//! Cheap posterior queries for hypothetical futures of one belief.
//!
//! During a search every simulated history extends the same root belief by
//! a handful of hallucinated images. Rather than cloning and refactoring the
//! root GP for each history, the context caches, per footprint cell,
//! `W_c = L⁻¹ K(X, F_c)` against the root factor. Root posterior covariances
//! between footprints then cost `p² · m`, and conditioning on a history of
//! `ℓ` images only needs a dense `pℓ x pℓ` factorization.

use std::collections::HashMap;
use std::rc::Rc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::field::{Cell, GridSpec, Point};
use crate::gp::{cholesky_dense, dense_forward_solve, BeliefModel, KernelParams};
use crate::objective::{objective_score, se_sample_sizes, ObjectiveSpec, SeBasis};

/// A simulated sequence of images on top of the root belief, with the
/// Cholesky factor of their joint root-posterior covariance (noise
/// included) and the whitened residuals `z = L⁻¹ (y - μ_root)`.
#[derive(Clone, Debug, Default)]
pub struct History {
    steps: Vec<Hallucinated>,
    n: usize,
    l: Vec<f64>,
    z: Vec<f64>,
}

impl History {
    pub fn steps(&self) -> &[Hallucinated] {
        &self.steps
    }

    pub fn last_cell(&self) -> Option<Cell> {
        self.steps.last().map(|h| h.cell)
    }
}

/// Posterior at one footprint after a history.
#[derive(Clone, Debug)]
pub struct Query {
    target: Cell,
    /// `L⁻¹ C(history, target)`, `n x p` row-major.
    v: Vec<f64>,
    mean: Vec<f64>,
    /// Latent covariance, `p x p` row-major.
    cov: Vec<f64>,
}

impl Query {
    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn variances(&self) -> Vec<f64> {
        let p = self.mean.len();
        (0..p).map(|c| self.cov[c * p + c].max(0.0)).collect()
    }
}

/// Readings hallucinated at one cell along a simulated history.
#[derive(Clone, Debug, PartialEq)]
pub struct Hallucinated {
    pub cell: Cell,
    pub values: Vec<f64>,
}

struct CellCache {
    /// Belief length the entries below reflect.
    len: usize,
    points: Vec<Point>,
    /// `m x p`, row-major.
    whitened: Vec<f64>,
    /// Root posterior mean at the footprint.
    mean: Vec<f64>,
}

struct PairCache {
    len: usize,
    /// Root posterior covariance between two footprints, `p x p` row-major.
    block: Rc<Vec<f64>>,
}

/// Per-cell quantities of a context, kept between searches over a belief
/// that only grows by appending readings. Entries are brought up to date
/// lazily when next used.
#[derive(Default)]
pub struct PlanCache {
    len: usize,
    anchor: Option<Point>,
    key: Option<(GridSpec, KernelParams)>,
    cells: HashMap<Cell, CellCache>,
    pairs: HashMap<(Cell, Cell), PairCache>,
}

impl PlanCache {
    pub fn new() -> Self {
        PlanCache::default()
    }

    pub fn cells(&self) -> usize {
        self.cells.len()
    }

    fn compatible(&self, belief: &BeliefModel, grid: &GridSpec) -> bool {
        self.key == Some((*grid, *belief.kernel()))
            && self.len <= belief.len()
            && (self.len == 0 || Some(belief.train_x()[self.len - 1]) == self.anchor)
    }
}

pub struct PlanContext<'a> {
    belief: &'a BeliefModel,
    grid: &'a GridSpec,
    objective: ObjectiveSpec<'a>,
    cells: HashMap<Cell, CellCache>,
    pairs: HashMap<(Cell, Cell), PairCache>,
}

impl<'a> PlanContext<'a> {
    pub fn new(belief: &'a BeliefModel, grid: &'a GridSpec, objective: ObjectiveSpec<'a>) -> Self {
        Self::from_cache(belief, grid, objective, PlanCache::default(), None)
    }

    /// Start from a cache built for an earlier state of `belief`; an
    /// incompatible cache is discarded. With `around = Some((cell, r))`
    /// cached cells more than `r` moves from `cell` are dropped first.
    pub fn from_cache(
        belief: &'a BeliefModel,
        grid: &'a GridSpec,
        objective: ObjectiveSpec<'a>,
        mut cache: PlanCache,
        around: Option<(Cell, usize)>,
    ) -> Self {
        if !cache.compatible(belief, grid) {
            cache = PlanCache::default();
        }
        if let Some((center, radius)) = around {
            cache.cells.retain(|c, _| c.manhattan(center) <= radius);
            let cells = &cache.cells;
            cache
                .pairs
                .retain(|(a, b), _| cells.contains_key(a) && cells.contains_key(b));
        }
        PlanContext {
            belief,
            grid,
            objective,
            cells: cache.cells,
            pairs: cache.pairs,
        }
    }

    pub fn into_cache(self) -> PlanCache {
        PlanCache {
            len: self.belief.len(),
            anchor: self.belief.train_x().last().copied(),
            key: Some((*self.grid, *self.belief.kernel())),
            cells: self.cells,
            pairs: self.pairs,
        }
    }

    pub fn belief(&self) -> &BeliefModel {
        self.belief
    }

    fn ensure_cell(&mut self, cell: Cell) -> Result<()> {
        let belief = self.belief;
        let n = belief.len();
        match self.cells.get_mut(&cell) {
            None => {
                let points = self.grid.footprint(cell)?;
                let whitened = belief.whitened_cross(&points);
                let mean = belief.predict_mean(&points);
                self.cells.insert(
                    cell,
                    CellCache {
                        len: n,
                        points,
                        whitened,
                        mean,
                    },
                );
            }
            Some(cache) if cache.len < n => {
                // continue the forward substitution over the new rows
                let (factor, kernel) = (belief.factor(), belief.kernel());
                let p = cache.points.len();
                for (i, &x) in belief.train_x().iter().enumerate().skip(cache.len) {
                    let row = factor.row(i);
                    let mut w: Vec<f64> = cache.points.iter().map(|&q| kernel.cov(x, q)).collect();
                    for (j, &l) in row[..i].iter().enumerate() {
                        if l == 0.0 {
                            continue;
                        }
                        for (t, s) in w.iter_mut().zip(&cache.whitened[j * p..(j + 1) * p]) {
                            *t -= l * s;
                        }
                    }
                    let d = row[i];
                    cache.whitened.extend(w.into_iter().map(|t| t / d));
                }
                cache.mean = belief.predict_mean(&cache.points);
                cache.len = n;
            }
            Some(_) => {}
        }
        Ok(())
    }

    fn pair(&mut self, a: Cell, b: Cell) -> Result<Rc<Vec<f64>>> {
        let n = self.belief.len();
        if let Some(c) = self.pairs.get(&(a, b)) {
            if c.len == n {
                return Ok(Rc::clone(&c.block));
            }
        }
        self.ensure_cell(a)?;
        self.ensure_cell(b)?;
        let ca = &self.cells[&a];
        let cb = &self.cells[&b];
        let p = ca.points.len();
        let (from, mut block) = match self.pairs.remove(&(a, b)) {
            Some(c) => (c.len, Rc::try_unwrap(c.block).unwrap_or_else(|rc| rc.as_ref().clone())),
            None => {
                let kernel = self.belief.kernel();
                let mut block = vec![0.0; p * p];
                for (r, &x) in ca.points.iter().enumerate() {
                    for (c, &y) in cb.points.iter().enumerate() {
                        block[r * p + c] = kernel.cov(x, y);
                    }
                }
                (0, block)
            }
        };
        let rows = ca.whitened[from * p..]
            .chunks_exact(p)
            .zip(cb.whitened[from * p..].chunks_exact(p));
        for (wa, wb) in rows {
            for (r, &ar) in wa.iter().enumerate() {
                if ar == 0.0 {
                    continue;
                }
                for (dst, &bc) in block[r * p..(r + 1) * p].iter_mut().zip(wb) {
                    *dst -= ar * bc;
                }
            }
        }
        let block = Rc::new(block);
        self.pairs.insert(
            (a, b),
            PairCache {
                len: n,
                block: Rc::clone(&block),
            },
        );
        Ok(block)
    }

    /// Root posterior mean and covariance at `target`, conditioned on
    /// `history`.
    pub fn query(&mut self, history: &History, target: Cell) -> Result<Query> {
        let tt = self.pair(target, target)?;
        let p = self.grid.pixels_per_cell();
        let mut mean = self.cells[&target].mean.clone();
        let mut cov = tt.as_ref().clone();
        let n = history.n;
        let mut v = vec![0.0; n * p];
        for (i, h) in history.steps.iter().enumerate() {
            let cross = self.pair(h.cell, target)?;
            v[i * p * p..(i + 1) * p * p].copy_from_slice(&cross);
        }
        // V = L⁻¹ B over the row-major n x p block
        let l = &history.l;
        for i in 0..n {
            let (done, rest) = v.split_at_mut(i * p);
            let row = &mut rest[..p];
            for (k, &lik) in l[i * n..i * n + i].iter().enumerate() {
                if lik == 0.0 {
                    continue;
                }
                for (t, s) in row.iter_mut().zip(&done[k * p..(k + 1) * p]) {
                    *t -= lik * s;
                }
            }
            let d = l[i * n + i];
            for t in row.iter_mut() {
                *t /= d;
            }
        }
        for (vi, &zi) in v.chunks_exact(p).zip(&history.z) {
            for (c, &vc) in vi.iter().enumerate() {
                mean[c] += vc * zi;
                let row = &mut cov[c * p..(c + 1) * p];
                for (dst, &vd) in row.iter_mut().zip(vi) {
                    *dst -= vc * vd;
                }
            }
        }
        Ok(Query { target, v, mean, cov })
    }

    /// Posterior mean and latent variance at the footprint of `target`, given
    /// the root belief plus `history`.
    pub fn posterior(&mut self, history: &[Hallucinated], target: Cell) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut h = History::default();
        for step in history {
            let q = self.query(&h, step.cell)?;
            h = self.observe(&h, q, step.values.clone())?;
        }
        let q = self.query(&h, target)?;
        let var = q.variances();
        Ok((q.mean, var))
    }

    /// Objective score of imaging the query target after `history`.
    pub fn score(&mut self, history: &History, query: &Query) -> Result<f64> {
        let p = self.grid.pixels_per_cell();
        let n_train = self.belief.len() + history.n;
        let (n0, n1) = se_sample_sizes(self.objective.se_basis, n_train, p, self.objective.lattice.len());
        if n0 == n1 {
            return Ok(self.objective.exploration_c * query.variances().iter().sum::<f64>());
        }
        debug_assert_eq!(self.objective.se_basis, SeBasis::Measurements);
        let belief = self.materialize(&history.steps)?;
        let fp = self.grid.footprint(query.target)?;
        Ok(objective_score(&belief, &fp, &self.objective)?.total())
    }

    fn extension(&self, query: &Query) -> Result<Vec<f64>> {
        let p = query.mean.len();
        let mut s = query.cov.clone();
        let noise = self.belief.diagonal_noise();
        for d in 0..p {
            s[d * p + d] += noise;
        }
        cholesky_dense(&mut s, p)?;
        Ok(s)
    }

    fn extend(history: &History, query: Query, l22: &[f64], z: Vec<f64>, values: Vec<f64>) -> History {
        let p = query.mean.len();
        let (n, m) = (history.n, history.n + p);
        let mut l = vec![0.0; m * m];
        for i in 0..n {
            l[i * m..i * m + i + 1].copy_from_slice(&history.l[i * n..i * n + i + 1]);
        }
        for r in 0..p {
            let row = &mut l[(n + r) * m..(n + r + 1) * m];
            for (k, dst) in row[..n].iter_mut().enumerate() {
                *dst = query.v[k * p + r];
            }
            row[n..n + r + 1].copy_from_slice(&l22[r * p..r * p + r + 1]);
        }
        let mut steps = history.steps.clone();
        steps.push(Hallucinated {
            cell: query.target,
            values,
        });
        let mut zs = history.z.clone();
        zs.extend(z);
        History { steps, n: m, l, z: zs }
    }

    /// Extend `history` with a joint draw from the predictive distribution
    /// of the query's image, readings noise included.
    pub fn sample(&self, history: &History, query: Query, rng: &mut impl Rng) -> Result<History> {
        let l22 = self.extension(&query)?;
        let p = query.mean.len();
        let xi: Vec<f64> = (0..p).map(|_| StandardNormal.sample(rng)).collect();
        let values = (0..p)
            .map(|r| query.mean[r] + (0..=r).map(|k| l22[r * p + k] * xi[k]).sum::<f64>())
            .collect();
        Ok(Self::extend(history, query, &l22, xi, values))
    }

    /// Extend `history` with given readings at the query target.
    pub fn observe(&self, history: &History, query: Query, values: Vec<f64>) -> Result<History> {
        let l22 = self.extension(&query)?;
        let mut z: Vec<f64> = values.iter().zip(&query.mean).map(|(y, m)| y - m).collect();
        dense_forward_solve(&l22, query.mean.len(), &mut z);
        Ok(Self::extend(history, query, &l22, z, values))
    }

    /// The root belief explicitly conditioned on `history`.
    pub fn materialize(&mut self, history: &[Hallucinated]) -> Result<BeliefModel> {
        let mut belief = self.belief.clone();
        for h in history {
            self.ensure_cell(h.cell)?;
            belief.update(&self.cells[&h.cell].points, &h.values)?;
        }
        Ok(belief)
    }
}
