//! Named sweeps reproducing the three published experiments.

use qipp_core::objective::QuantileSet;
use qipp_core::team::{BudgetPolicy, CommRegime};

use crate::error::{HarnessError, Result};
use crate::sweep::SweepSpec;

pub const PRESETS: [&str; 3] = ["alpha_study", "budget_study", "comms_study"];

/// Overwrite the sweep axes of `spec` with those of preset `name`. Field,
/// grid, seeds, master seed and solver constants are kept.
pub fn apply_preset(spec: &mut SweepSpec, name: &str) -> Result<()> {
    spec.quantile_sets = vec![QuantileSet::quartiles(), QuantileSet::extrema()];
    spec.budget_policies = vec![BudgetPolicy::Complete];
    spec.partitioned_alpha = Some(1.0);
    match name {
        "alpha_study" => {
            spec.alphas = vec![0.0, 0.33, 0.66, 1.0];
            spec.team_sizes = vec![2, 4, 8];
            spec.budgets = vec![15];
            spec.comm_regimes = vec![CommRegime::None, CommRegime::Stochastic];
        }
        "budget_study" => {
            spec.alphas = vec![0.66];
            spec.team_sizes = vec![1, 2, 4, 8];
            spec.budgets = vec![10, 15, 30];
            spec.comm_regimes = vec![CommRegime::Stochastic];
        }
        "comms_study" => {
            spec.alphas = vec![0.66];
            spec.team_sizes = vec![1, 2, 4, 8];
            spec.budgets = vec![15];
            spec.comm_regimes = vec![
                CommRegime::Full,
                CommRegime::Stochastic,
                CommRegime::None,
                CommRegime::Partitioned,
            ];
        }
        other => {
            return Err(HarnessError::Validation(format!(
                "unknown preset '{other}', expected one of {}",
                PRESETS.join(", ")
            )))
        }
    }
    Ok(())
}

/// Preset `name` on the default field with `n_seeds` seeds.
pub fn preset(name: &str, n_seeds: usize) -> Result<SweepSpec> {
    let mut spec = SweepSpec {
        field: Default::default(),
        grid: Default::default(),
        quantile_sets: Vec::new(),
        team_sizes: Vec::new(),
        alphas: Vec::new(),
        budgets: Vec::new(),
        budget_policies: Vec::new(),
        comm_regimes: Vec::new(),
        seeds: (0..n_seeds as u64).collect(),
        master_seed: 0,
        base: Default::default(),
        partitioned_alpha: None,
    };
    apply_preset(&mut spec, name)?;
    Ok(spec)
}
