use std::time::Instant;

use rand::seq::IndexedRandom;
use serde::{Deserialize, Serialize};

use super::budget::{allocate_budgets, BudgetSpec};
use super::comm::{broadcast, CommRegime, CommSpec};
use super::partition::{voronoi_partition, Partition};
use super::placement::{place_initial, PlacementSpec};
use crate::error::{Error, Result};
use crate::field::{Cell, Field, GridSpec, Measurement, Point};
use crate::gp::{BeliefModel, KernelParams};
use crate::objective::{objective_score, EstimateSource, ObjectiveSpec, QuantileEstimate, QuantileSet, SeBasis};
use crate::planner::{legal_actions, plan_step_cached, PlanCache, PlannerConfig, PlanningState};
use crate::seed::{self, purpose};
use crate::stats::rmse;

/// How robots choose their next move.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    #[default]
    Pomcpow,
    /// Uniformly random legal move; a baseline.
    RandomWalk,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MissionConfig {
    pub n_robots: usize,
    pub alpha: f64,
    pub budget: BudgetSpec,
    pub comm: CommSpec,
    pub quantiles: QuantileSet,
    pub exploration_c: f64,
    pub se_basis: SeBasis,
    pub kernel: KernelParams,
    pub prior_mean: f64,
    /// Standard deviation of additive reading noise.
    pub noise_sd: f64,
    pub planner: PlannerConfig,
    pub policy: Policy,
    pub lloyd_iters: usize,
    pub samples_per_robot: usize,
}

impl Default for MissionConfig {
    fn default() -> Self {
        MissionConfig {
            n_robots: 4,
            alpha: 0.66,
            budget: BudgetSpec::default(),
            comm: CommSpec::default(),
            quantiles: QuantileSet::quartiles(),
            exploration_c: 1.0,
            se_basis: SeBasis::Lattice,
            kernel: KernelParams::default(),
            prior_mean: 0.5,
            noise_sd: 0.05,
            planner: PlannerConfig::default(),
            policy: Policy::Pomcpow,
            lloyd_iters: 100,
            samples_per_robot: 100,
        }
    }
}

impl MissionConfig {
    pub fn placement(&self) -> PlacementSpec {
        PlacementSpec {
            n_robots: self.n_robots,
            alpha: self.alpha,
            lloyd_iters: self.lloyd_iters,
            samples_per_robot: self.samples_per_robot,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.placement().validate()?;
        self.comm.validate()?;
        self.kernel.validate()?;
        self.planner.validate()?;
        if self.comm.regime == CommRegime::Partitioned && self.alpha != 1.0 {
            return Err(Error::Validation(format!(
                "partitioned communication requires alpha = 1.0, got {}",
                self.alpha
            )));
        }
        if !(self.noise_sd.is_finite() && self.noise_sd >= 0.0) {
            return Err(Error::Validation(format!("noise_sd {} must be >= 0", self.noise_sd)));
        }
        if !(self.exploration_c.is_finite() && self.exploration_c >= 0.0) {
            return Err(Error::Validation(format!(
                "exploration_c {} must be >= 0",
                self.exploration_c
            )));
        }
        if !self.prior_mean.is_finite() {
            return Err(Error::Validation("prior_mean must be finite".into()));
        }
        Ok(())
    }
}

/// Overrides for the randomized parts of mission setup.
#[derive(Clone, Debug, Default)]
pub struct MissionSetup {
    pub starts: Option<Vec<Cell>>,
    pub robot_seeds: Option<Vec<u64>>,
}

#[derive(Clone, Debug)]
pub struct RobotState {
    pub id: usize,
    pub seed: u64,
    pub position: Cell,
    pub budget_left: usize,
    pub belief: BeliefModel,
    /// Readings this robot took itself.
    pub log: Vec<Measurement>,
    pub path: Vec<Cell>,
    pub steps: usize,
    /// Sum of objective scores of executed moves.
    pub reward: f64,
    /// Payloads received from teammates.
    pub received: usize,
    /// Set once the robot has no legal move left.
    pub boxed_in: bool,
}

impl RobotState {
    pub fn active(&self) -> bool {
        self.budget_left > 0 && !self.boxed_in
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub config: MissionConfig,
    pub seed: u64,
    pub grid: GridSpec,
    pub starts: Vec<Cell>,
    pub budgets: Vec<usize>,
    pub paths: Vec<Vec<Cell>>,
    pub measurements: Vec<Measurement>,
    pub truth: QuantileEstimate,
    /// Quantiles of every robot's own raw readings, pooled.
    pub final_estimate: QuantileEstimate,
    /// Quantiles of each robot's GP mean over the lattice.
    pub robot_estimates: Vec<QuantileEstimate>,
    pub rmse: f64,
    /// `final - truth`, per quantile.
    pub quantile_errors: Vec<f64>,
    pub rewards: Vec<f64>,
    pub steps: Vec<usize>,
    pub deliveries: Vec<usize>,
    pub partition: Option<Vec<usize>>,
    pub wall_time_s: f64,
}

impl TrialResult {
    /// Copy with the wall time zeroed, for reproducibility comparisons.
    pub fn without_timing(&self) -> TrialResult {
        TrialResult {
            wall_time_s: 0.0,
            ..self.clone()
        }
    }
}

type Delivery = (Vec<usize>, Vec<Point>, Vec<f64>);

/// A mission advanced one synchronized round at a time.
pub struct Mission<'f> {
    config: MissionConfig,
    field: &'f Field,
    seed: u64,
    lattice: Vec<Point>,
    partition: Option<Partition>,
    starts: Vec<Cell>,
    budgets: Vec<usize>,
    robots: Vec<RobotState>,
    caches: Vec<PlanCache>,
    round: usize,
    clock: Instant,
}

impl<'f> Mission<'f> {
    pub fn new(config: &MissionConfig, field: &'f Field, seed: u64) -> Result<Self> {
        Self::with_setup(config, field, seed, MissionSetup::default())
    }

    pub fn with_setup(config: &MissionConfig, field: &'f Field, seed: u64, setup: MissionSetup) -> Result<Self> {
        let clock = Instant::now();
        config.validate()?;
        let grid = field.grid();
        let n = config.n_robots;

        let mut starts = match setup.starts {
            Some(s) => {
                if s.len() != n {
                    return Err(Error::Validation(format!("{} starts for {n} robots", s.len())));
                }
                if let Some(c) = s.iter().find(|c| !grid.contains_cell(**c)) {
                    return Err(Error::Validation(format!("start {c} outside grid")));
                }
                s
            }
            None => {
                let mut rng = seed::stream(seed, &[purpose::PLACEMENT]);
                place_initial(&config.placement(), grid, &mut rng)?
            }
        };
        let partition = if config.comm.regime == CommRegime::Partitioned {
            let p = voronoi_partition(grid, &starts)?;
            starts.clone_from(&p.seeds);
            Some(p)
        } else {
            None
        };
        let seeds = match setup.robot_seeds {
            Some(s) if s.len() != n => {
                return Err(Error::Validation(format!("{} robot seeds for {n} robots", s.len())))
            }
            Some(s) => s,
            None => (0..n as u64).map(|i| seed::derive(seed, &[purpose::ROBOT, i])).collect(),
        };
        let budgets = allocate_budgets(config.budget, n);
        let belief = BeliefModel::with_prior(config.kernel, config.prior_mean);
        let robots = (0..n)
            .map(|id| RobotState {
                id,
                seed: seeds[id],
                position: starts[id],
                budget_left: budgets[id],
                belief: belief.clone(),
                log: Vec::new(),
                path: vec![starts[id]],
                steps: 0,
                reward: 0.0,
                received: 0,
                boxed_in: false,
            })
            .collect();

        Ok(Mission {
            config: config.clone(),
            field,
            seed,
            lattice: grid.lattice_points(),
            partition,
            starts,
            budgets,
            robots,
            caches: (0..n).map(|_| PlanCache::new()).collect(),
            round: 0,
            clock,
        })
    }

    pub fn robots(&self) -> &[RobotState] {
        &self.robots
    }

    pub fn partition(&self) -> Option<&Partition> {
        self.partition.as_ref()
    }

    pub fn round(&self) -> usize {
        self.round
    }

    /// True once the initial images are taken and nobody can move.
    pub fn is_done(&self) -> bool {
        self.round > 0 && self.robots.iter().all(|r| !r.active())
    }

    fn measure(&mut self, id: usize, cell: Cell) -> Result<Delivery> {
        let mut rng = seed::stream(self.robots[id].seed, &[self.round as u64, purpose::NOISE]);
        let readings = self
            .field
            .measure(cell, self.config.noise_sd, id, self.round, &mut rng)?;
        let xs: Vec<Point> = readings.iter().map(|m| m.location).collect();
        let ys: Vec<f64> = readings.iter().map(|m| m.value).collect();
        let robot = &mut self.robots[id];
        robot.belief.update(&xs, &ys)?;
        robot.log.extend(readings);

        let positions: Vec<Point> = self
            .robots
            .iter()
            .map(|r| self.field.grid().cell_center(r.position))
            .collect();
        let mut rng = seed::stream(self.robots[id].seed, &[self.round as u64, purpose::COMM]);
        let to = broadcast(id, &positions, &self.config.comm, &mut rng);
        Ok((to, xs, ys))
    }

    fn choose_move(&mut self, id: usize) -> Result<Option<Cell>> {
        let grid = self.field.grid();
        let robot = &self.robots[id];
        let region = self.partition.as_ref().map(|p| p.region(id));
        let moves = legal_actions(robot.position, grid, region);
        if moves.is_empty() {
            return Ok(None);
        }
        let mut rng = seed::stream(robot.seed, &[self.round as u64, purpose::PLAN]);
        let mv = match self.config.policy {
            Policy::RandomWalk => *moves.choose(&mut rng).expect("nonempty"),
            Policy::Pomcpow => {
                let state = PlanningState {
                    position: robot.position,
                    belief: &robot.belief,
                    steps_remaining: robot.budget_left,
                    region,
                };
                let objective = ObjectiveSpec {
                    quantiles: &self.config.quantiles,
                    exploration_c: self.config.exploration_c,
                    se_basis: self.config.se_basis,
                    lattice: &self.lattice,
                };
                let cache = &mut self.caches[id];
                plan_step_cached(&state, grid, &self.config.planner, &objective, cache, &mut rng)?
            }
        };
        Ok(mv.apply(robot.position, grid))
    }

    fn objective(&self) -> ObjectiveSpec<'_> {
        ObjectiveSpec {
            quantiles: &self.config.quantiles,
            exploration_c: self.config.exploration_c,
            se_basis: self.config.se_basis,
            lattice: &self.lattice,
        }
    }

    /// Run one synchronized round. Round 0 takes the free initial images;
    /// later rounds move every active robot once, in id order. Payloads are
    /// delivered after all robots have acted. Returns `false` when the
    /// mission was already done.
    pub fn step(&mut self) -> Result<bool> {
        if self.is_done() {
            return Ok(false);
        }
        let mut outbox = Vec::new();
        for id in 0..self.robots.len() {
            if self.round == 0 {
                let cell = self.robots[id].position;
                outbox.push((id, self.measure(id, cell)?));
                continue;
            }
            if !self.robots[id].active() {
                continue;
            }
            let Some(target) = self.choose_move(id)? else {
                self.robots[id].boxed_in = true;
                continue;
            };
            let fp = self.field.grid().footprint(target)?;
            let gain = objective_score(&self.robots[id].belief, &fp, &self.objective())?.total();
            let robot = &mut self.robots[id];
            robot.reward += gain;
            robot.position = target;
            robot.path.push(target);
            robot.budget_left -= 1;
            robot.steps += 1;
            outbox.push((id, self.measure(id, target)?));
        }
        for (_, (to, xs, ys)) in outbox {
            for r in to {
                self.robots[r].belief.update(&xs, &ys)?;
                self.robots[r].received += 1;
            }
        }
        self.round += 1;
        Ok(true)
    }

    pub fn run(mut self) -> Result<TrialResult> {
        while self.step()? {}
        self.finish()
    }

    fn finish(self) -> Result<TrialResult> {
        let qs = &self.config.quantiles;
        let truth = QuantileEstimate::from_values(self.field.values(), qs, EstimateSource::Truth)?;
        let measurements: Vec<Measurement> = self.robots.iter().flat_map(|r| r.log.iter().copied()).collect();
        let pooled: Vec<f64> = measurements.iter().map(|m| m.value).collect();
        let final_estimate = QuantileEstimate::from_values(&pooled, qs, EstimateSource::Aggregate)?;
        let robot_estimates = self
            .robots
            .iter()
            .map(|r| QuantileEstimate::from_values(&r.belief.predict_mean(&self.lattice), qs, EstimateSource::Model))
            .collect::<Result<Vec<_>>>()?;
        let quantile_errors = final_estimate
            .values
            .iter()
            .zip(&truth.values)
            .map(|(e, t)| e - t)
            .collect();
        Ok(TrialResult {
            rmse: rmse(&truth, &final_estimate)?,
            quantile_errors,
            seed: self.seed,
            grid: *self.field.grid(),
            starts: self.starts,
            budgets: self.budgets,
            paths: self.robots.iter().map(|r| r.path.clone()).collect(),
            measurements,
            truth,
            final_estimate,
            robot_estimates,
            rewards: self.robots.iter().map(|r| r.reward).collect(),
            steps: self.robots.iter().map(|r| r.steps).collect(),
            deliveries: self.robots.iter().map(|r| r.received).collect(),
            partition: self.partition.map(|p| p.owners),
            config: self.config,
            wall_time_s: self.clock.elapsed().as_secs_f64(),
        })
    }
}

pub fn run_mission(config: &MissionConfig, field: &Field, seed: u64) -> Result<TrialResult> {
    Mission::new(config, field, seed)?.run()
}

pub fn run_mission_with(config: &MissionConfig, field: &Field, seed: u64, setup: MissionSetup) -> Result<TrialResult> {
    Mission::with_setup(config, field, seed, setup)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{synth_field, SynthKind};

    fn small() -> (Field, MissionConfig) {
        let grid = GridSpec::new(8, 8, 32.0, 24.0, 3).unwrap();
        let field = synth_field(SynthKind::Blobs, grid, 5);
        let config = MissionConfig {
            n_robots: 2,
            budget: BudgetSpec {
                total: 4,
                ..BudgetSpec::default()
            },
            planner: PlannerConfig {
                rollouts_per_step: 20,
                ..PlannerConfig::default()
            },
            ..MissionConfig::default()
        };
        (field, config)
    }

    #[test]
    fn zero_budget_keeps_start() {
        let (field, mut config) = small();
        config.n_robots = 1;
        config.budget.total = 0;
        let r = run_mission(&config, &field, 3).unwrap();
        assert_eq!(r.paths, vec![vec![r.starts[0]]]);
        assert_eq!(r.measurements.len(), 9);
        let vals: Vec<f64> = r.measurements.iter().map(|m| m.value).collect();
        let want = crate::objective::quantiles(&vals, &config.quantiles).unwrap();
        assert_eq!(r.final_estimate.values, want);
    }

    #[test]
    fn full_comm_keeps_beliefs_in_sync() {
        let (field, mut config) = small();
        config.comm.regime = CommRegime::Full;
        let mut m = Mission::new(&config, &field, 11).unwrap();
        while m.step().unwrap() {
            let a = m.robots()[0].belief.train_x();
            let b = m.robots()[1].belief.train_x();
            assert_eq!(a.len(), b.len());
            let key = |p: &Point| (p.x.to_bits(), p.y.to_bits());
            let mut ka: Vec<_> = a.iter().map(key).collect();
            let mut kb: Vec<_> = b.iter().map(key).collect();
            ka.sort_unstable();
            kb.sort_unstable();
            assert_eq!(ka, kb);
        }
    }

    #[test]
    fn partitioned_requires_full_spread() {
        let (field, mut config) = small();
        config.comm.regime = CommRegime::Partitioned;
        assert!(matches!(run_mission(&config, &field, 0), Err(Error::Validation(_))));
        config.alpha = 1.0;
        let r = run_mission(&config, &field, 0).unwrap();
        let owners = r.partition.as_ref().unwrap();
        for (id, path) in r.paths.iter().enumerate() {
            for c in path {
                assert_eq!(owners[field.grid().cell_index(*c)], id);
            }
        }
    }
}
