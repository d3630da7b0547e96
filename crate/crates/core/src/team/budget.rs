use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetPolicy {
    /// Every robot gets the full total.
    #[default]
    Complete,
    /// The total is split as evenly as possible.
    Shared,
}

impl BudgetPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            BudgetPolicy::Complete => "complete",
            BudgetPolicy::Shared => "shared",
        }
    }
}

impl std::str::FromStr for BudgetPolicy {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "complete" => Ok(BudgetPolicy::Complete),
            "shared" => Ok(BudgetPolicy::Shared),
            other => Err(crate::Error::Validation(format!("unknown budget policy '{other}'"))),
        }
    }
}

/// Planning-step budget. The initial image at the start cell is free.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetSpec {
    pub total: usize,
    #[serde(default)]
    pub policy: BudgetPolicy,
}

impl Default for BudgetSpec {
    fn default() -> Self {
        BudgetSpec {
            total: 15,
            policy: BudgetPolicy::Complete,
        }
    }
}

/// Per-robot budgets in id order. Under a shared budget the first
/// `total mod n` robots receive one extra step.
pub fn allocate_budgets(spec: BudgetSpec, n_robots: usize) -> Vec<usize> {
    match spec.policy {
        BudgetPolicy::Complete => vec![spec.total; n_robots],
        BudgetPolicy::Shared => {
            let n = n_robots.max(1);
            let (base, extra) = (spec.total / n, spec.total % n);
            (0..n_robots).map(|i| base + usize::from(i < extra)).collect()
        }
    }
}
