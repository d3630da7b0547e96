//! Quantile estimation, quantile standard errors and the planning score.
//!
//! The score of a candidate footprint `X_i` is
//!
//! ```text
//! f(X_i) = d / |Q| + c * Σ_{x in X_i} σ²(x)
//! d      = ‖ se(μ_before(X#), Q) - se(μ_after(X#), Q) ‖₁
//! ```
//!
//! where `μ_after` is the belief conditioned on hallucinated readings at
//! `X_i` and `σ²` is the variance before that update.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Point;
use crate::gp::BeliefModel;

/// Density floor in the standard-error denominator.
pub const DENSITY_FLOOR: f64 = 1e-6;
/// Smallest KDE bandwidth; only reached for (near) constant samples.
pub const MIN_BANDWIDTH: f64 = 1e-9;

/// Strictly increasing probabilities in (0, 1).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct QuantileSet(Vec<f64>);

impl QuantileSet {
    pub fn new(qs: Vec<f64>) -> Result<Self> {
        if qs.is_empty() {
            return Err(Error::Validation("quantile set is empty".into()));
        }
        if let Some(q) = qs.iter().find(|q| !(**q > 0.0 && **q < 1.0)) {
            return Err(Error::Validation(format!("quantile {q} outside (0, 1)")));
        }
        if qs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Validation(format!(
                "quantiles must be strictly increasing: {qs:?}"
            )));
        }
        Ok(QuantileSet(qs))
    }

    pub fn quartiles() -> Self {
        QuantileSet(vec![0.25, 0.5, 0.75])
    }

    pub fn extrema() -> Self {
        QuantileSet(vec![0.9, 0.95, 0.99])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `0.25;0.5;0.75`
    pub fn label(&self) -> String {
        self.0
            .iter()
            .map(|q| q.to_string())
            .collect::<Vec<_>>()
            .join(";")
    }
}

impl TryFrom<Vec<f64>> for QuantileSet {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        QuantileSet::new(v)
    }
}

impl From<QuantileSet> for Vec<f64> {
    fn from(q: QuantileSet) -> Self {
        q.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateSource {
    /// Quantiles of a GP mean over the lattice.
    Model,
    /// Quantiles of pooled raw measurements.
    Aggregate,
    /// Quantiles of the noise-free field.
    Truth,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantileEstimate {
    pub values: Vec<f64>,
    pub source: EstimateSource,
}

impl QuantileEstimate {
    pub fn from_values(values: &[f64], qs: &QuantileSet, source: EstimateSource) -> Result<Self> {
        Ok(QuantileEstimate {
            values: quantiles(values, qs)?,
            source,
        })
    }
}

/// Linear interpolation between order statistics of an already sorted
/// slice, at 0-based position `q (n - 1)`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let h = q * (n - 1) as f64;
    let lo = (h.floor() as usize).min(n - 1);
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    let (a, b) = (sorted[lo], sorted[hi]);
    (a + frac * (b - a)).clamp(a, b)
}

fn sorted_copy(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::Domain("quantiles of an empty sample".into()));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Domain("quantiles of a sample containing NaN".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted)
}

pub fn quantiles(values: &[f64], qs: &QuantileSet) -> Result<Vec<f64>> {
    let sorted = sorted_copy(values)?;
    Ok(qs.as_slice().iter().map(|&q| quantile_sorted(&sorted, q)).collect())
}

/// Gaussian kernel density estimate with Silverman's rule-of-thumb bandwidth.
pub struct GaussianKde {
    data: Vec<f64>,
    bandwidth: f64,
}

impl GaussianKde {
    pub fn new(values: &[f64]) -> Result<Self> {
        let sorted = sorted_copy(values)?;
        let bandwidth = silverman_bandwidth(&sorted);
        Ok(GaussianKde {
            data: sorted,
            bandwidth,
        })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn density(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let norm = 1.0 / (self.data.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
        // contributions beyond 40 bandwidths underflow to zero anyway
        let lo = self.data.partition_point(|&v| v < x - 40.0 * h);
        let hi = self.data.partition_point(|&v| v <= x + 40.0 * h);
        norm * self.data[lo..hi]
            .iter()
            .map(|&v| {
                let u = (x - v) / h;
                (-0.5 * u * u).exp()
            })
            .sum::<f64>()
    }
}

/// `0.9 · min(sd, IQR / 1.34) · n^(-1/5)`, falling back to whichever spread
/// is nonzero.
fn silverman_bandwidth(sorted: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    if sorted.len() < 2 {
        return MIN_BANDWIDTH;
    }
    let mean = sorted.iter().sum::<f64>() / n;
    let sd = (sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
    let spread = match (sd > 0.0, iqr > 0.0) {
        (true, true) => sd.min(iqr / 1.34),
        (true, false) => sd,
        (false, true) => iqr / 1.34,
        (false, false) => 0.0,
    };
    (0.9 * spread * n.powf(-0.2)).max(MIN_BANDWIDTH)
}

/// Asymptotic standard error of each sample quantile,
/// `sqrt(q (1 - q) / n_eff) / max(f̂(v_q), ε)`.
pub fn quantile_se(values: &[f64], qs: &QuantileSet, n_eff: usize) -> Result<Vec<f64>> {
    if n_eff == 0 {
        return Err(Error::Domain("n_eff must be at least 1".into()));
    }
    let kde = GaussianKde::new(values)?;
    let vq = quantiles(values, qs)?;
    Ok(qs
        .as_slice()
        .iter()
        .zip(vq)
        .map(|(&q, v)| (q * (1.0 - q) / n_eff as f64).sqrt() / kde.density(v).max(DENSITY_FLOOR))
        .collect())
}

/// Which sample size the standard error is computed against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeBasis {
    /// `n_eff = |X#|`: the estimate is a function of the GP mean over the
    /// full lattice.
    #[default]
    Lattice,
    /// `n_eff` = number of readings the belief is conditioned on.
    Measurements,
}

/// Everything the score needs besides the belief and the candidate.
#[derive(Clone, Copy, Debug)]
pub struct ObjectiveSpec<'a> {
    pub quantiles: &'a QuantileSet,
    pub exploration_c: f64,
    pub se_basis: SeBasis,
    /// Measurement lattice `X#`.
    pub lattice: &'a [Point],
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Score {
    /// `d / |Q|`.
    pub se_change: f64,
    /// `c Σ σ²` over the candidate footprint.
    pub exploration: f64,
}

impl Score {
    pub fn total(&self) -> f64 {
        self.se_change + self.exploration
    }
}

/// `‖se(before) - se(after)‖₁ / |Q|` for given lattice means and sample sizes.
pub fn se_change(
    before: &[f64],
    n_before: usize,
    after: &[f64],
    n_after: usize,
    qs: &QuantileSet,
) -> Result<f64> {
    let a = quantile_se(before, qs, n_before)?;
    let b = quantile_se(after, qs, n_after)?;
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / qs.len() as f64)
}

/// Sample sizes `(before, after)` for the standard-error comparison when
/// `added` hallucinated readings join a belief holding `n_train`.
pub fn se_sample_sizes(basis: SeBasis, n_train: usize, added: usize, lattice_len: usize) -> (usize, usize) {
    match basis {
        SeBasis::Lattice => (lattice_len.max(1), lattice_len.max(1)),
        SeBasis::Measurements => (n_train.max(1), (n_train + added).max(1)),
    }
}

/// Score a candidate footprint against `belief`.
///
/// Hallucinated readings are the current posterior means at the candidate.
/// Conditioning a GP on readings equal to its own mean leaves the posterior
/// mean unchanged everywhere, so `μ_after(X#) = μ_before(X#)` and the
/// standard errors differ only through their sample sizes. The lattice mean
/// is therefore only evaluated when those sizes differ.
pub fn objective_score(belief: &BeliefModel, candidate: &[Point], spec: &ObjectiveSpec<'_>) -> Result<Score> {
    let (_, variances) = belief.predict(candidate);
    let exploration = spec.exploration_c * variances.iter().sum::<f64>();
    let (n0, n1) = se_sample_sizes(spec.se_basis, belief.len(), candidate.len(), spec.lattice.len());
    let se_change = if n0 == n1 {
        0.0
    } else {
        let mu = belief.predict_mean(spec.lattice);
        self::se_change(&mu, n0, &mu, n1, spec.quantiles)?
    };
    Ok(Score {
        se_change,
        exploration,
    })
}
