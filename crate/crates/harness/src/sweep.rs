//! Parameter sweeps over missions and the flat results table they produce.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use qipp_core::field::{load_field, synth_field, Field, GridSpec, RasterFormat, SynthKind};
use qipp_core::objective::QuantileSet;
use qipp_core::seed::{self, purpose};
use qipp_core::team::{run_mission, BudgetPolicy, CommRegime, MissionConfig, TrialResult};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSource {
    Synthetic {
        kind: SynthKind,
        #[serde(default)]
        seed: u64,
        /// Draw a fresh field for every seed instead of one for the sweep.
        #[serde(default = "yes")]
        per_seed: bool,
    },
    File {
        path: PathBuf,
        /// Inferred from the extension when absent.
        #[serde(default)]
        format: Option<RasterFormat>,
    },
}

impl Default for FieldSource {
    fn default() -> Self {
        FieldSource::Synthetic {
            kind: SynthKind::Blobs,
            seed: 0,
            per_seed: true,
        }
    }
}

fn yes() -> bool {
    true
}

fn default_quantile_sets() -> Vec<QuantileSet> {
    vec![QuantileSet::quartiles()]
}

fn default_policies() -> Vec<BudgetPolicy> {
    vec![BudgetPolicy::Complete]
}

fn default_regimes() -> Vec<CommRegime> {
    vec![CommRegime::None]
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1]
}

fn default_partitioned_alpha() -> Option<f64> {
    Some(1.0)
}

/// A cross product of mission parameters, run for every seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default)]
    pub field: FieldSource,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default = "default_quantile_sets")]
    pub quantile_sets: Vec<QuantileSet>,
    pub team_sizes: Vec<usize>,
    pub alphas: Vec<f64>,
    pub budgets: Vec<usize>,
    #[serde(default = "default_policies")]
    pub budget_policies: Vec<BudgetPolicy>,
    #[serde(default = "default_regimes")]
    pub comm_regimes: Vec<CommRegime>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub master_seed: u64,
    /// Solver constants, noise, kernel and exploration weight shared by
    /// every config; its sweep-axis fields are overwritten.
    #[serde(default)]
    pub base: MissionConfig,
    /// Spread used for partitioned configs in place of the alpha axis.
    #[serde(default = "default_partitioned_alpha")]
    pub partitioned_alpha: Option<f64>,
}

impl SweepSpec {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut spec: SweepSpec = serde_json::from_str(&text).map_err(|source| HarnessError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        // raster paths are relative to the config file
        if let FieldSource::File { path: raster, .. } = &mut spec.field {
            if raster.is_relative() {
                if let Some(dir) = path.parent() {
                    *raster = dir.join(&*raster);
                }
            }
        }
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let axes = [
            ("quantile_sets", self.quantile_sets.len()),
            ("team_sizes", self.team_sizes.len()),
            ("alphas", self.alphas.len()),
            ("budgets", self.budgets.len()),
            ("budget_policies", self.budget_policies.len()),
            ("comm_regimes", self.comm_regimes.len()),
            ("seeds", self.seeds.len()),
        ];
        if let Some((name, _)) = axes.iter().find(|(_, n)| *n == 0) {
            return Err(HarnessError::Validation(format!("axis '{name}' is empty")));
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(HarnessError::Validation("seeds must be distinct".into()));
        }
        Ok(())
    }

    /// Every config of the sweep, in row order: quantile set, comm regime,
    /// budget policy, budget, alpha, team size (innermost).
    pub fn configs(&self) -> Vec<MissionConfig> {
        let mut out = Vec::new();
        for qs in &self.quantile_sets {
            for &regime in &self.comm_regimes {
                for &policy in &self.budget_policies {
                    for &total in &self.budgets {
                        for &alpha in &self.alphas {
                            for &n in &self.team_sizes {
                                let mut c = self.base.clone();
                                c.quantiles = qs.clone();
                                c.comm.regime = regime;
                                c.budget.policy = policy;
                                c.budget.total = total;
                                c.alpha = match (regime, self.partitioned_alpha) {
                                    (CommRegime::Partitioned, Some(a)) => a,
                                    _ => alpha,
                                };
                                c.n_robots = n;
                                out.push(c);
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Seed of trial `seed`; independent of the config so that configs are
    /// compared on common random numbers.
    pub fn trial_seed(&self, seed: u64) -> u64 {
        seed::derive(self.master_seed, &[purpose::TRIAL, seed])
    }

    fn load_fields(&self) -> Result<BTreeMap<u64, Field>> {
        let mut fields = BTreeMap::new();
        match &self.field {
            FieldSource::Synthetic {
                kind,
                seed: field_seed,
                per_seed,
            } => {
                for &s in &self.seeds {
                    let fs = if *per_seed {
                        seed::derive(self.trial_seed(s), &[purpose::FIELD, *field_seed])
                    } else {
                        *field_seed
                    };
                    fields.insert(s, synth_field(*kind, self.grid, fs));
                }
            }
            FieldSource::File { path, format } => {
                let format = match format {
                    Some(f) => *f,
                    None => RasterFormat::from_path(path).ok_or_else(|| {
                        HarnessError::Validation(format!("cannot infer raster format of {}", path.display()))
                    })?,
                };
                let field = load_field(path, format, self.grid)?;
                for &s in &self.seeds {
                    fields.insert(s, field.clone());
                }
            }
        }
        Ok(fields)
    }

    /// True when every seed sees the same field.
    pub fn shared_field(&self) -> bool {
        !matches!(self.field, FieldSource::Synthetic { per_seed: true, .. })
    }
}

/// One row of `results.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub config_id: usize,
    pub n_robots: usize,
    pub alpha: f64,
    pub budget_total: usize,
    pub budget_policy: BudgetPolicy,
    pub comm: CommRegime,
    /// Quantile levels joined with `;`.
    pub quantiles: String,
    pub c: f64,
    pub seed: u64,
    pub rmse: f64,
    /// Per-quantile `estimate - truth`, joined with `;`.
    pub quantile_errors: String,
    /// Planning steps executed across the team.
    pub steps: usize,
}

pub const RESULTS_HEADER: &str =
    "config_id,n_robots,alpha,budget_total,budget_policy,comm,quantiles,c,seed,rmse,quantile_errors,steps";

impl ResultRow {
    pub fn new(config_id: usize, seed: u64, trial: &TrialResult) -> Self {
        let c = &trial.config;
        ResultRow {
            config_id,
            n_robots: c.n_robots,
            alpha: c.alpha,
            budget_total: c.budget.total,
            budget_policy: c.budget.policy,
            comm: c.comm.regime,
            quantiles: c.quantiles.label(),
            c: c.exploration_c,
            seed,
            rmse: trial.rmse,
            quantile_errors: trial
                .quantile_errors
                .iter()
                .map(|e| e.to_string())
                .collect::<Vec<_>>()
                .join(";"),
            steps: trial.steps.iter().sum(),
        }
    }

    /// Value of a groupable column, as written in the CSV.
    pub fn param(&self, name: &str) -> Option<String> {
        Some(match name {
            "n_robots" => self.n_robots.to_string(),
            "alpha" => self.alpha.to_string(),
            "budget_total" => self.budget_total.to_string(),
            "budget_policy" => self.budget_policy.as_str().to_string(),
            "comm" => self.comm.as_str().to_string(),
            "quantiles" => self.quantiles.clone(),
            "c" => self.c.to_string(),
            _ => return None,
        })
    }
}

pub const GROUP_PARAMS: [&str; 7] = [
    "n_robots",
    "alpha",
    "budget_total",
    "budget_policy",
    "comm",
    "quantiles",
    "c",
];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ResultsTable {
    pub rows: Vec<ResultRow>,
}

impl ResultsTable {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let csv_err = |source| HarnessError::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_path(path)
            .map_err(csv_err)?;
        w.write_record(RESULTS_HEADER.split(',')).map_err(csv_err)?;
        for row in &self.rows {
            w.serialize(row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| HarnessError::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let csv_err = |source| HarnessError::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
        let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
        if header.join(",") != RESULTS_HEADER {
            return Err(HarnessError::Validation(format!(
                "{} does not have the results header",
                path.display()
            )));
        }
        let rows = r.deserialize().collect::<Result<Vec<ResultRow>, _>>().map_err(csv_err)?;
        Ok(ResultsTable { rows })
    }
}

#[derive(Clone, Debug)]
pub struct Timing {
    pub config_id: usize,
    pub seed: u64,
    pub wall_time_s: f64,
}

/// A config dropped from the sweep and why.
#[derive(Clone, Debug, PartialEq)]
pub struct Aborted {
    pub config_id: usize,
    pub reason: String,
}

pub struct SweepOutput {
    pub table: ResultsTable,
    pub timings: Vec<Timing>,
    pub aborted: Vec<Aborted>,
    /// Every trial in row order, when requested.
    pub trials: Option<Vec<(usize, u64, TrialResult)>>,
    /// Field used per seed.
    pub fields: BTreeMap<u64, Field>,
}

/// Run every config for every seed on `workers` threads. Rows come out in
/// config-then-seed order whatever the scheduling. A config whose mission
/// fails is dropped as a whole and reported in [`SweepOutput::aborted`].
pub fn run_sweep(spec: &SweepSpec, workers: usize, keep_trials: bool) -> Result<SweepOutput> {
    spec.validate()?;
    let fields = spec.load_fields()?;
    let configs = spec.configs();
    let mut aborted = Vec::new();
    let mut jobs = Vec::new();
    for (id, c) in configs.iter().enumerate() {
        match c.validate() {
            Ok(()) => jobs.extend(spec.seeds.iter().map(|&s| (id, s))),
            Err(e) => aborted.push(Aborted {
                config_id: id,
                reason: e.to_string(),
            }),
        }
    }
    info!(
        "sweep: {} configs x {} seeds, {} trials",
        configs.len(),
        spec.seeds.len(),
        jobs.len()
    );

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| HarnessError::Validation(format!("cannot start worker pool: {e}")))?;
    let started = Instant::now();
    let outcomes: Vec<_> = pool.install(|| {
        jobs.par_iter()
            .map(|&(id, s)| run_mission(&configs[id], &fields[&s], spec.trial_seed(s)))
            .collect()
    });
    info!("sweep finished in {:.1}s", started.elapsed().as_secs_f64());

    for (&(id, s), outcome) in jobs.iter().zip(&outcomes) {
        if let Err(e) = outcome {
            if !aborted.iter().any(|a| a.config_id == id) {
                warn!("config {id} aborted at seed {s}: {e}");
                aborted.push(Aborted {
                    config_id: id,
                    reason: format!("seed {s}: {e}"),
                });
            }
        }
    }
    aborted.sort_by_key(|a| a.config_id);

    let mut table = ResultsTable::default();
    let mut timings = Vec::new();
    let mut trials = keep_trials.then(Vec::new);
    for ((id, s), outcome) in jobs.into_iter().zip(outcomes) {
        if aborted.iter().any(|a| a.config_id == id) {
            continue;
        }
        let trial = outcome.expect("failed trials abort their config");
        table.rows.push(ResultRow::new(id, s, &trial));
        timings.push(Timing {
            config_id: id,
            seed: s,
            wall_time_s: trial.wall_time_s,
        });
        if let Some(t) = trials.as_mut() {
            t.push((id, s, trial));
        }
    }
    Ok(SweepOutput {
        table,
        timings,
        aborted,
        trials,
        fields,
    })
}

/// Write `results.csv`, `timings.csv`, `errors.log` (when configs were
/// aborted), the field(s), and optionally one JSON document per trial.
pub fn write_outputs(spec: &SweepSpec, out: &SweepOutput, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    out.table.write_csv(dir.join("results.csv"))?;

    let timings_path = dir.join("timings.csv");
    let mut t = String::from("config_id,seed,wall_time_s\n");
    for row in &out.timings {
        t.push_str(&format!("{},{},{}\n", row.config_id, row.seed, row.wall_time_s));
    }
    fs::write(&timings_path, t).map_err(|e| HarnessError::io(&timings_path, e))?;

    let errors_path = dir.join("errors.log");
    if out.aborted.is_empty() {
        if errors_path.exists() {
            fs::remove_file(&errors_path).map_err(|e| HarnessError::io(&errors_path, e))?;
        }
    } else {
        let text: String = out
            .aborted
            .iter()
            .map(|a| format!("config {}: {}\n", a.config_id, a.reason))
            .collect();
        fs::write(&errors_path, text).map_err(|e| HarnessError::io(&errors_path, e))?;
    }

    if spec.shared_field() {
        if let Some(field) = out.fields.values().next() {
            field.save_csv(dir.join("field.csv"))?;
        }
    } else {
        let fdir = dir.join("fields");
        fs::create_dir_all(&fdir).map_err(|e| HarnessError::io(&fdir, e))?;
        for (s, field) in &out.fields {
            field.save_csv(fdir.join(format!("seed_{s}.csv")))?;
        }
    }

    if let Some(trials) = &out.trials {
        let tdir = dir.join("trials");
        fs::create_dir_all(&tdir).map_err(|e| HarnessError::io(&tdir, e))?;
        for (id, s, trial) in trials {
            let path = tdir.join(format!("config_{id}_seed_{s}.json"));
            let json = serde_json::to_string_pretty(trial).map_err(|source| HarnessError::Json {
                path: path.clone(),
                source,
            })?;
            fs::write(&path, json).map_err(|e| HarnessError::io(&path, e))?;
        }
    }
    Ok(())
}
