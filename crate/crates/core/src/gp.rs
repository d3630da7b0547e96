//! Exact Gaussian-process belief with a squared-exponential kernel.
//!
//! Training data only ever grows during a mission, so the factor of the
//! regularized kernel matrix is kept as a row-packed lower triangle and new
//! observations append rows to it (a block Cholesky update) instead of
//! refactoring from scratch.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Point;

pub const DEFAULT_PRIOR_MEAN: f64 = 0.5;
pub const DEFAULT_JITTER: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelParams {
    /// Meters.
    pub lengthscale: f64,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        KernelParams {
            lengthscale: 12.0,
            signal_variance: 1.0,
            noise_variance: 0.05 * 0.05,
        }
    }
}

impl KernelParams {
    pub fn new(lengthscale: f64, signal_variance: f64, noise_variance: f64) -> Result<Self> {
        let k = KernelParams {
            lengthscale,
            signal_variance,
            noise_variance,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lengthscale", self.lengthscale),
            ("signal_variance", self.signal_variance),
            ("noise_variance", self.noise_variance),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Validation(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn cov(&self, a: Point, b: Point) -> f64 {
        self.signal_variance * (-a.distance_sq(b) / (2.0 * self.lengthscale * self.lengthscale)).exp()
    }
}

/// Lower-triangular factor stored row by row; row `i` holds `i + 1` entries.
#[derive(Clone, Debug, Default)]
pub struct LowerFactor {
    n: usize,
    data: Vec<f64>,
}

impl LowerFactor {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let start = i * (i + 1) / 2;
        &self.data[start..start + i + 1]
    }

    /// Solve `L x = b` in place.
    pub fn forward_solve(&self, b: &mut [f64]) {
        debug_assert_eq!(b.len(), self.n);
        for i in 0..self.n {
            let row = self.row(i);
            let s: f64 = row[..i].iter().zip(&b[..i]).map(|(l, x)| l * x).sum();
            b[i] = (b[i] - s) / row[i];
        }
    }

    /// Solve `L X = B` in place for a row-major `n x width` block.
    pub fn forward_solve_block(&self, b: &mut [f64], width: usize) {
        debug_assert_eq!(b.len(), self.n * width);
        for i in 0..self.n {
            let row = self.row(i);
            let (done, rest) = b.split_at_mut(i * width);
            let target = &mut rest[..width];
            for (j, &l) in row[..i].iter().enumerate() {
                if l == 0.0 {
                    continue;
                }
                let src = &done[j * width..(j + 1) * width];
                for (t, s) in target.iter_mut().zip(src) {
                    *t -= l * s;
                }
            }
            let d = row[i];
            for t in target.iter_mut() {
                *t /= d;
            }
        }
    }

    /// Solve `Lᵀ x = b` in place.
    pub fn back_solve(&self, b: &mut [f64]) {
        debug_assert_eq!(b.len(), self.n);
        for i in (0..self.n).rev() {
            let row = self.row(i);
            b[i] /= row[i];
            let xi = b[i];
            for (bj, l) in b[..i].iter_mut().zip(&row[..i]) {
                *bj -= l * xi;
            }
        }
    }

    /// Append rows `[cross_k, block_k]` where `cross` is `n x b` row-major
    /// (already solved against this factor) and `block` is a dense `b x b`
    /// lower factor.
    fn append(&mut self, cross: &[f64], block: &[f64], b: usize) {
        let m = self.n;
        self.data.reserve(b * m + b * (b + 1) / 2);
        for k in 0..b {
            self.data.extend((0..m).map(|i| cross[i * b + k]));
            self.data.extend_from_slice(&block[k * b..k * b + k + 1]);
        }
        self.n += b;
    }
}

/// In-place Cholesky of a dense row-major `n x n` symmetric matrix. On
/// success the lower triangle holds the factor and the upper triangle is
/// zeroed.
pub fn cholesky_dense(a: &mut [f64], n: usize) -> Result<()> {
    debug_assert_eq!(a.len(), n * n);
    let max_diag = (0..n).map(|i| a[i * n + i]).fold(0.0, f64::max);
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::numeric(format!(
                "kernel matrix not positive definite: pivot {j} = {d:.3e} (largest diagonal {max_diag:.3e}, \
                 condition estimate > {:.3e})",
                max_diag / d.abs().max(f64::MIN_POSITIVE)
            )));
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
        for k in j + 1..n {
            a[j * n + k] = 0.0;
        }
    }
    Ok(())
}

/// Solve `L x = b` for a dense row-major lower factor.
pub fn dense_forward_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i * n + k] * b[k]).sum();
        b[i] = (b[i] - s) / l[i * n + i];
    }
}

/// GP posterior over the field.
#[derive(Clone, Debug)]
pub struct BeliefModel {
    kernel: KernelParams,
    prior_mean: f64,
    jitter: f64,
    train_x: Vec<Point>,
    train_y: Vec<f64>,
    factor: LowerFactor,
    /// `L⁻¹ (y - prior)`.
    whitened: Vec<f64>,
    /// `K⁻¹ (y - prior)`.
    alpha: Vec<f64>,
}

impl BeliefModel {
    pub fn new(kernel: KernelParams) -> Self {
        Self::with_prior(kernel, DEFAULT_PRIOR_MEAN)
    }

    pub fn with_prior(kernel: KernelParams, prior_mean: f64) -> Self {
        BeliefModel {
            kernel,
            prior_mean,
            jitter: DEFAULT_JITTER,
            train_x: Vec::new(),
            train_y: Vec::new(),
            factor: LowerFactor::default(),
            whitened: Vec::new(),
            alpha: Vec::new(),
        }
    }

    pub fn kernel(&self) -> &KernelParams {
        &self.kernel
    }

    pub fn prior_mean(&self) -> f64 {
        self.prior_mean
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Diagonal regularization added to the kernel matrix of observations.
    pub fn diagonal_noise(&self) -> f64 {
        self.kernel.noise_variance + self.jitter
    }

    pub fn len(&self) -> usize {
        self.train_x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train_x.is_empty()
    }

    pub fn train_x(&self) -> &[Point] {
        &self.train_x
    }

    pub fn train_y(&self) -> &[f64] {
        &self.train_y
    }

    pub fn factor(&self) -> &LowerFactor {
        &self.factor
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// Condition on additional observations. On error the model is left
    /// untouched.
    pub fn update(&mut self, xs: &[Point], ys: &[f64]) -> Result<()> {
        if xs.len() != ys.len() {
            return Err(Error::Domain(format!(
                "{} locations but {} values",
                xs.len(),
                ys.len()
            )));
        }
        if xs.is_empty() {
            return Ok(());
        }
        if let Some(k) = xs
            .iter()
            .zip(ys)
            .position(|(p, y)| !(p.x.is_finite() && p.y.is_finite() && y.is_finite()))
        {
            return Err(Error::numeric(format!("non-finite observation at index {k}")));
        }

        let m = self.len();
        let b = xs.len();
        let mut cross = vec![0.0; m * b];
        for (i, &x) in self.train_x.iter().enumerate() {
            for (k, &p) in xs.iter().enumerate() {
                cross[i * b + k] = self.kernel.cov(x, p);
            }
        }
        self.factor.forward_solve_block(&mut cross, b);

        let mut schur = vec![0.0; b * b];
        for r in 0..b {
            for c in 0..=r {
                let mut v = self.kernel.cov(xs[r], xs[c]);
                for i in 0..m {
                    v -= cross[i * b + r] * cross[i * b + c];
                }
                schur[r * b + c] = v;
                schur[c * b + r] = v;
            }
            schur[r * b + r] += self.diagonal_noise();
        }
        cholesky_dense(&mut schur, b)?;

        let mut z_new: Vec<f64> = (0..b)
            .map(|k| {
                let proj: f64 = (0..m).map(|i| cross[i * b + k] * self.whitened[i]).sum();
                ys[k] - self.prior_mean - proj
            })
            .collect();
        dense_forward_solve(&schur, b, &mut z_new);

        self.factor.append(&cross, &schur, b);
        self.train_x.extend_from_slice(xs);
        self.train_y.extend_from_slice(ys);
        self.whitened.extend(z_new);
        self.alpha = self.whitened.clone();
        self.factor.back_solve(&mut self.alpha);
        Ok(())
    }

    /// Value-style update: returns a new model conditioned on the union.
    pub fn updated(&self, xs: &[Point], ys: &[f64]) -> Result<Self> {
        let mut next = self.clone();
        next.update(xs, ys)?;
        Ok(next)
    }

    pub fn mean_at(&self, q: Point) -> f64 {
        self.prior_mean
            + self
                .train_x
                .iter()
                .zip(&self.alpha)
                .map(|(&x, a)| self.kernel.cov(x, q) * a)
                .sum::<f64>()
    }

    pub fn predict_mean(&self, query: &[Point]) -> Vec<f64> {
        query.iter().map(|&q| self.mean_at(q)).collect()
    }

    /// Posterior mean and latent variance at each query point.
    pub fn predict(&self, query: &[Point]) -> (Vec<f64>, Vec<f64>) {
        const CHUNK: usize = 32;
        let m = self.len();
        let mut means = Vec::with_capacity(query.len());
        let mut vars = Vec::with_capacity(query.len());
        let mut block = Vec::new();
        for chunk in query.chunks(CHUNK) {
            let w = chunk.len();
            block.clear();
            block.resize(m * w, 0.0);
            for (i, &x) in self.train_x.iter().enumerate() {
                for (k, &q) in chunk.iter().enumerate() {
                    block[i * w + k] = self.kernel.cov(x, q);
                }
            }
            for k in 0..w {
                let mu: f64 = (0..m).map(|i| block[i * w + k] * self.alpha[i]).sum();
                means.push(self.prior_mean + mu);
            }
            self.factor.forward_solve_block(&mut block, w);
            for k in 0..w {
                let explained: f64 = (0..m).map(|i| block[i * w + k].powi(2)).sum();
                vars.push((self.kernel.signal_variance - explained).max(0.0));
            }
        }
        (means, vars)
    }

    /// `L⁻¹ K(X, points)` as an `n_train x points.len()` row-major block.
    pub fn whitened_cross(&self, points: &[Point]) -> Vec<f64> {
        let w = points.len();
        let mut block = vec![0.0; self.len() * w];
        for (i, &x) in self.train_x.iter().enumerate() {
            for (k, &q) in points.iter().enumerate() {
                block[i * w + k] = self.kernel.cov(x, q);
            }
        }
        self.factor.forward_solve_block(&mut block, w);
        block
    }

    /// Debug dump of the training set as `x,y,value` rows.
    pub fn dump_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::from("x,y,value\n");
        for (p, v) in self.train_x.iter().zip(&self.train_y) {
            let _ = writeln!(out, "{},{},{}", p.x, p.y, v);
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}
