//! RMSE and the Wilcoxon signed-rank test.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::objective::{quantile_sorted, QuantileEstimate};

/// Largest number of nonzero differences handled by exact enumeration
/// under [`Method::Auto`].
pub const EXACT_MAX: usize = 12;

pub fn rmse(truth: &QuantileEstimate, estimate: &QuantileEstimate) -> Result<f64> {
    rmse_values(&truth.values, &estimate.values)
}

pub fn rmse_values(truth: &[f64], estimate: &[f64]) -> Result<f64> {
    if truth.len() != estimate.len() {
        return Err(Error::Domain(format!(
            "rmse of vectors with lengths {} and {}",
            truth.len(),
            estimate.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::Domain("rmse of empty vectors".into()));
    }
    let ss: f64 = truth.iter().zip(estimate).map(|(t, e)| (t - e) * (t - e)).sum();
    Ok((ss / truth.len() as f64).sqrt())
}

/// Two equally long samples paired by index.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedSample {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl PairedSample {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() || xs.is_empty() {
            return Err(Error::Domain(format!(
                "paired sample needs equal nonzero lengths, got {} and {}",
                xs.len(),
                ys.len()
            )));
        }
        if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(Error::Domain("paired sample contains non-finite values".into()));
        }
        Ok(PairedSample { xs, ys })
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn differences(&self) -> Vec<f64> {
        self.xs.iter().zip(&self.ys).map(|(x, y)| x - y).collect()
    }
}

/// Alternative hypothesis about `x - y`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    Less,
    #[default]
    Greater,
    TwoSided,
}

impl std::str::FromStr for Alternative {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "less" => Ok(Alternative::Less),
            "greater" => Ok(Alternative::Greater),
            "two_sided" | "two-sided" => Ok(Alternative::TwoSided),
            other => Err(Error::Validation(format!("unknown alternative '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Exact up to [`EXACT_MAX`] nonzero differences, normal beyond.
    #[default]
    Auto,
    Exact,
    Normal,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Wilcoxon {
    /// Sum of ranks of positive differences.
    pub statistic: f64,
    pub p_value: f64,
    /// Nonzero differences used.
    pub n: usize,
    pub exact: bool,
}

/// Midranks of `|d|`, doubled so ties stay integral, plus tie group sizes.
fn doubled_ranks(d: &[f64]) -> (Vec<u64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..d.len()).collect();
    order.sort_by(|&a, &b| d[a].abs().total_cmp(&d[b].abs()));
    let mut ranks = vec![0; d.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && d[order[j]].abs() == d[order[i]].abs() {
            j += 1;
        }
        // positions i..j hold ranks i+1..=j, midrank (i+1+j)/2
        let r2 = (i + 1 + j) as u64;
        for &k in &order[i..j] {
            ranks[k] = r2;
        }
        ties.push(j - i);
        i = j;
    }
    (ranks, ties)
}

/// Number of sign assignments giving each doubled rank sum.
fn null_counts(ranks: &[u64]) -> Vec<f64> {
    let total: u64 = ranks.iter().sum();
    let mut counts = vec![0.0; total as usize + 1];
    counts[0] = 1.0;
    let mut reach = 0;
    for &r in ranks {
        let r = r as usize;
        for s in (0..=reach).rev() {
            if counts[s] != 0.0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    counts
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

pub fn wilcoxon_signed_rank(sample: &PairedSample, alternative: Alternative) -> Result<Wilcoxon> {
    wilcoxon_signed_rank_with(sample, alternative, Method::Auto)
}

/// Signed-rank test on `x - y`. Zero differences are dropped and tied
/// magnitudes share midranks. `Greater` tests whether `x` tends to exceed `y`.
pub fn wilcoxon_signed_rank_with(sample: &PairedSample, alternative: Alternative, method: Method) -> Result<Wilcoxon> {
    let d: Vec<f64> = sample.differences().into_iter().filter(|&v| v != 0.0).collect();
    let m = d.len();
    if m == 0 {
        return Err(Error::DegenerateSample(format!(
            "all {} paired differences are zero",
            sample.len()
        )));
    }
    let (ranks, ties) = doubled_ranks(&d);
    let w2: u64 = d.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    let statistic = w2 as f64 / 2.0;
    let exact = match method {
        Method::Auto => m <= EXACT_MAX,
        Method::Exact => true,
        Method::Normal => false,
    };

    let p = if exact {
        let counts = null_counts(&ranks);
        let total: f64 = counts.iter().sum();
        let w = w2 as usize;
        let upper = counts[w..].iter().sum::<f64>() / total;
        let lower = counts[..=w].iter().sum::<f64>() / total;
        match alternative {
            Alternative::Greater => upper,
            Alternative::Less => lower,
            Alternative::TwoSided => (2.0 * upper.min(lower)).min(1.0),
        }
    } else {
        let mf = m as f64;
        let mean = mf * (mf + 1.0) / 4.0;
        let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / 48.0;
        let sd = (mf * (mf + 1.0) * (2.0 * mf + 1.0) / 24.0 - tie_term).sqrt();
        let diff = statistic - mean;
        let p = match alternative {
            Alternative::Greater => 1.0 - normal_cdf((diff - 0.5) / sd),
            Alternative::Less => normal_cdf((diff + 0.5) / sd),
            Alternative::TwoSided => {
                let z = (diff.abs() - 0.5).max(0.0) / sd;
                (2.0 * (1.0 - normal_cdf(z))).min(1.0)
            }
        };
        p.clamp(f64::MIN_POSITIVE, 1.0)
    };
    Ok(Wilcoxon {
        statistic,
        p_value: p,
        n: m,
        exact,
    })
}

/// Figure-style label for a p-value.
pub fn significance_band(p: f64) -> &'static str {
    if p <= 1e-3 {
        "***"
    } else if p <= 0.05 {
        "*"
    } else {
        "ns"
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiveNumber {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Min, quartiles (linear interpolation) and max.
pub fn five_number(values: &[f64]) -> Result<FiveNumber> {
    if values.is_empty() {
        return Err(Error::Domain("summary of an empty sample".into()));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Domain("summary of a sample containing NaN".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(FiveNumber {
        min: v[0],
        q1: quantile_sorted(&v, 0.25),
        median: quantile_sorted(&v, 0.5),
        q3: quantile_sorted(&v, 0.75),
        max: v[v.len() - 1],
    })
}
