use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Point;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommRegime {
    #[default]
    None,
    Stochastic,
    Full,
    /// No communication, each robot confined to its Voronoi region.
    Partitioned,
}

impl CommRegime {
    pub fn as_str(self) -> &'static str {
        match self {
            CommRegime::None => "none",
            CommRegime::Stochastic => "stochastic",
            CommRegime::Full => "full",
            CommRegime::Partitioned => "partitioned",
        }
    }
}

impl std::str::FromStr for CommRegime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(CommRegime::None),
            "stochastic" => Ok(CommRegime::Stochastic),
            "full" => Ok(CommRegime::Full),
            "partitioned" => Ok(CommRegime::Partitioned),
            other => Err(Error::Validation(format!("unknown comm regime '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CommSpec {
    pub regime: CommRegime,
    /// Sigmoid steepness, 1/m.
    pub eta: f64,
    /// Distance of 50% delivery, m.
    pub r: f64,
}

impl Default for CommSpec {
    fn default() -> Self {
        CommSpec {
            regime: CommRegime::None,
            eta: 0.5,
            r: 10.0,
        }
    }
}

impl CommSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::Validation(format!("eta {} must be > 0", self.eta)));
        }
        if !(self.r.is_finite() && self.r > 0.0) {
            return Err(Error::Validation(format!("r {} must be > 0", self.r)));
        }
        Ok(())
    }
}

/// `1 / (1 + exp(eta (d - r)))`.
pub fn comm_success_prob(distance: f64, spec: &CommSpec) -> f64 {
    1.0 / (1.0 + (spec.eta * (distance - spec.r)).exp())
}

/// Whether each receiver gets a broadcast from `sender`. Stochastic
/// delivery draws one uniform per receiver, in the given order.
pub fn delivery_outcomes(sender: Point, receivers: &[Point], spec: &CommSpec, rng: &mut impl Rng) -> Vec<bool> {
    match spec.regime {
        CommRegime::Full => vec![true; receivers.len()],
        CommRegime::None | CommRegime::Partitioned => vec![false; receivers.len()],
        CommRegime::Stochastic => receivers
            .iter()
            .map(|&p| rng.random::<f64>() < comm_success_prob(sender.distance(p), spec))
            .collect(),
    }
}

/// Ids of the robots that receive `sender`'s payload. `positions` holds
/// every robot's location in id order; the sender never sends to itself.
pub fn broadcast(sender: usize, positions: &[Point], spec: &CommSpec, rng: &mut impl Rng) -> Vec<usize> {
    let others: Vec<usize> = (0..positions.len()).filter(|&i| i != sender).collect();
    let receivers: Vec<Point> = others.iter().map(|&i| positions[i]).collect();
    delivery_outcomes(positions[sender], &receivers, spec, rng)
        .into_iter()
        .zip(others)
        .filter_map(|(ok, id)| ok.then_some(id))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_values() {
        let spec = CommSpec::default();
        assert_eq!(comm_success_prob(10.0, &spec), 0.5);
        assert!((comm_success_prob(0.0, &spec) - 0.993_307_149_075_715).abs() < 1e-12);
        assert!((comm_success_prob(20.0, &spec) - 0.006_692_850_924_284_856).abs() < 1e-12);
    }

    #[test]
    fn deterministic_regimes() {
        let mut rng = crate::seed::stream(1, &[]);
        let pts = [Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(70.0, 50.0)];
        let full = CommSpec {
            regime: CommRegime::Full,
            ..CommSpec::default()
        };
        assert_eq!(broadcast(0, &pts, &full, &mut rng), vec![1, 2]);
        for regime in [CommRegime::None, CommRegime::Partitioned] {
            let spec = CommSpec {
                regime,
                ..CommSpec::default()
            };
            assert!(broadcast(1, &pts, &spec, &mut rng).is_empty());
        }
    }
}
