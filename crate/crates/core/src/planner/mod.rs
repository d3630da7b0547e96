//! Online POMCPOW search over one robot's next grid move.
//!
//! States are (position, field) pairs where the field is only known through
//! the robot's GP belief. Observations are continuous images, so each action
//! node keeps at most `⌈k_obs · n^alpha_obs⌉` observation children and
//! revisits existing ones beyond that. The reward of a simulated step is the
//! objective score of the image taken on arrival.

mod context;

pub use context::{Hallucinated, History, PlanCache, PlanContext, Query};

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Cell, GridSpec};
use crate::gp::BeliefModel;
use crate::objective::ObjectiveSpec;

/// Grid moves in tie-breaking order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Move {
    PlusX,
    MinusX,
    PlusY,
    MinusY,
}

impl Move {
    pub const ALL: [Move; 4] = [Move::PlusX, Move::MinusX, Move::PlusY, Move::MinusY];

    /// Destination of this move, if it stays on the grid.
    pub fn apply(self, cell: Cell, grid: &GridSpec) -> Option<Cell> {
        let (ix, iy) = (cell.ix, cell.iy);
        let next = match self {
            Move::PlusX => Cell::new(ix + 1, iy),
            Move::MinusX => Cell::new(ix.checked_sub(1)?, iy),
            Move::PlusY => Cell::new(ix, iy + 1),
            Move::MinusY => Cell::new(ix, iy.checked_sub(1)?),
        };
        grid.contains_cell(next).then_some(next)
    }
}

/// One robot's allowed cells: those whose owner (indexed by
/// [`GridSpec::cell_index`]) equals `id`.
#[derive(Clone, Copy, Debug)]
pub struct Region<'a> {
    pub owners: &'a [usize],
    pub id: usize,
}

impl Region<'_> {
    pub fn contains(&self, grid: &GridSpec, cell: Cell) -> bool {
        self.owners[grid.cell_index(cell)] == self.id
    }
}

pub fn legal_actions(position: Cell, grid: &GridSpec, region: Option<Region<'_>>) -> Vec<Move> {
    Move::ALL
        .into_iter()
        .filter(|m| match m.apply(position, grid) {
            Some(next) => region.is_none_or(|r| r.contains(grid, next)),
            None => false,
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RolloutPolicy {
    #[default]
    Random,
    /// Best immediate score, ties to the lowest move index.
    Greedy,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerConfig {
    pub rollouts_per_step: usize,
    pub max_depth: usize,
    pub discount: f64,
    pub ucb_c: f64,
    pub k_obs: f64,
    pub alpha_obs: f64,
    pub rollout_policy: RolloutPolicy,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            rollouts_per_step: 100,
            max_depth: 4,
            discount: 0.8,
            ucb_c: 2.0,
            k_obs: 4.0,
            alpha_obs: 0.25,
            rollout_policy: RolloutPolicy::Random,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rollouts_per_step == 0 {
            return Err(Error::Validation("rollouts_per_step must be >= 1".into()));
        }
        if self.max_depth == 0 {
            return Err(Error::Validation("max_depth must be >= 1".into()));
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return Err(Error::Validation(format!(
                "discount {} outside (0, 1]",
                self.discount
            )));
        }
        if !(self.ucb_c.is_finite() && self.ucb_c >= 0.0) {
            return Err(Error::Validation(format!("ucb_c {} must be >= 0", self.ucb_c)));
        }
        if !(self.k_obs.is_finite() && self.k_obs > 0.0) {
            return Err(Error::Validation(format!("k_obs {} must be > 0", self.k_obs)));
        }
        if !(self.alpha_obs.is_finite() && (0.0..=1.0).contains(&self.alpha_obs)) {
            return Err(Error::Validation(format!(
                "alpha_obs {} outside [0, 1]",
                self.alpha_obs
            )));
        }
        Ok(())
    }
}

/// What the planner knows when choosing a move.
#[derive(Clone, Copy, Debug)]
pub struct PlanningState<'a> {
    pub position: Cell,
    pub belief: &'a BeliefModel,
    pub steps_remaining: usize,
    pub region: Option<Region<'a>>,
}

/// Root statistics of one search.
#[derive(Clone, Debug, PartialEq)]
pub struct SearchOutcome {
    pub action: Move,
    /// `(move, visits, mean discounted return)` for every legal root move.
    pub root: Vec<(Move, u32, f64)>,
}

struct ActionNode {
    mv: Move,
    target: Cell,
    visits: u32,
    value: f64,
    /// Immediate reward, a deterministic function of the node's history.
    reward: Option<f64>,
    /// `(belief node index, times selected)`.
    children: Vec<(usize, u32)>,
}

struct BeliefNode {
    steps_left: usize,
    history: History,
    visits: u32,
    actions: Vec<ActionNode>,
}

struct Search<'s, 'a> {
    grid: &'s GridSpec,
    region: Option<Region<'s>>,
    config: &'s PlannerConfig,
    ctx: PlanContext<'a>,
    nodes: Vec<BeliefNode>,
}

impl Search<'_, '_> {
    fn node(&self, position: Cell, steps_left: usize, history: History) -> BeliefNode {
        let actions = legal_actions(position, self.grid, self.region)
            .into_iter()
            .map(|mv| ActionNode {
                mv,
                target: mv.apply(position, self.grid).expect("legal move stays on grid"),
                visits: 0,
                value: 0.0,
                reward: None,
                children: Vec::new(),
            })
            .collect();
        BeliefNode {
            steps_left,
            history,
            visits: 0,
            actions,
        }
    }

    fn select(&self, node: usize) -> usize {
        let n = &self.nodes[node];
        if let Some(i) = n.actions.iter().position(|a| a.visits == 0) {
            return i;
        }
        let ln_n = f64::from(n.visits.max(1)).ln();
        let mut best = 0;
        let mut best_ucb = f64::NEG_INFINITY;
        for (i, a) in n.actions.iter().enumerate() {
            let ucb = a.value + self.config.ucb_c * (ln_n / f64::from(a.visits)).sqrt();
            if ucb > best_ucb {
                best = i;
                best_ucb = ucb;
            }
        }
        best
    }

    fn simulate(&mut self, node: usize, depth: usize, rng: &mut impl Rng) -> Result<f64> {
        if depth == 0 || self.nodes[node].steps_left == 0 || self.nodes[node].actions.is_empty() {
            return Ok(0.0);
        }
        let a = self.select(node);
        let target = self.nodes[node].actions[a].target;
        let visits = self.nodes[node].actions[a].visits + 1;
        let limit = (self.config.k_obs * f64::from(visits).powf(self.config.alpha_obs)).ceil() as usize;
        let widen = self.nodes[node].actions[a].children.len() < limit;

        let mut query = None;
        let reward = match self.nodes[node].actions[a].reward {
            Some(r) => r,
            None => {
                let q = self.ctx.query(&self.nodes[node].history, target)?;
                let r = self.ctx.score(&self.nodes[node].history, &q)?;
                self.nodes[node].actions[a].reward = Some(r);
                query = Some(q);
                r
            }
        };

        let future = if widen {
            let q = match query {
                Some(q) => q,
                None => self.ctx.query(&self.nodes[node].history, target)?,
            };
            let history = self.ctx.sample(&self.nodes[node].history, q, rng)?;
            let steps_left = self.nodes[node].steps_left - 1;
            let child = self.node(target, steps_left, history);
            let idx = self.nodes.len();
            self.nodes.push(child);
            self.nodes[node].actions[a].children.push((idx, 1));
            self.rollout(idx, depth - 1, rng)?
        } else {
            let children = &self.nodes[node].actions[a].children;
            let total: u32 = children.iter().map(|c| c.1).sum();
            let mut pick = rng.random_range(0..total);
            let mut k = 0;
            while pick >= children[k].1 {
                pick -= children[k].1;
                k += 1;
            }
            self.nodes[node].actions[a].children[k].1 += 1;
            let child = self.nodes[node].actions[a].children[k].0;
            self.simulate(child, depth - 1, rng)?
        };
        let ret = reward + self.config.discount * future;

        self.nodes[node].visits += 1;
        let action = &mut self.nodes[node].actions[a];
        action.visits = visits;
        action.value += (ret - action.value) / f64::from(visits);
        Ok(ret)
    }

    /// Default-policy return from a freshly expanded node.
    fn rollout(&mut self, node: usize, depth: usize, rng: &mut impl Rng) -> Result<f64> {
        let mut steps_left = self.nodes[node].steps_left;
        let mut history = self.nodes[node].history.clone();
        let mut position = history.last_cell().expect("expanded node has history");
        let mut total = 0.0;
        let mut weight = 1.0;
        for _ in 0..depth {
            if steps_left == 0 {
                break;
            }
            let moves = legal_actions(position, self.grid, self.region);
            let Some((target, q, r)) = self.rollout_move(&moves, &history, position, rng)? else {
                break;
            };
            total += weight * r;
            history = self.ctx.sample(&history, q, rng)?;
            position = target;
            weight *= self.config.discount;
            steps_left -= 1;
        }
        Ok(total)
    }

    /// Next rollout move with its query and immediate reward.
    fn rollout_move(
        &mut self,
        moves: &[Move],
        history: &History,
        position: Cell,
        rng: &mut impl Rng,
    ) -> Result<Option<(Cell, Query, f64)>> {
        let candidates: Vec<Move> = match self.config.rollout_policy {
            RolloutPolicy::Random => moves.choose(rng).copied().into_iter().collect(),
            RolloutPolicy::Greedy => moves.to_vec(),
        };
        let mut best: Option<(Cell, Query, f64)> = None;
        for mv in candidates {
            let target = mv.apply(position, self.grid).expect("legal move");
            let q = self.ctx.query(history, target)?;
            let r = self.ctx.score(history, &q)?;
            if best.as_ref().is_none_or(|b| r > b.2) {
                best = Some((target, q, r));
            }
        }
        Ok(best)
    }
}

/// Run a full search and report root statistics.
pub fn search(
    state: &PlanningState<'_>,
    grid: &GridSpec,
    config: &PlannerConfig,
    objective: &ObjectiveSpec<'_>,
    rng: &mut impl Rng,
) -> Result<SearchOutcome> {
    search_cached(state, grid, config, objective, &mut PlanCache::new(), rng)
}

/// [`search`] reusing per-cell work from earlier searches over the same,
/// possibly grown, belief.
pub fn search_cached(
    state: &PlanningState<'_>,
    grid: &GridSpec,
    config: &PlannerConfig,
    objective: &ObjectiveSpec<'_>,
    cache: &mut PlanCache,
    rng: &mut impl Rng,
) -> Result<SearchOutcome> {
    config.validate()?;
    if !grid.contains_cell(state.position) {
        return Err(Error::Index(format!("position {} outside grid", state.position)));
    }
    let moves = legal_actions(state.position, grid, state.region);
    match moves.as_slice() {
        [] => {
            return Err(Error::Planning(format!(
                "no legal move from {}",
                state.position
            )))
        }
        [only] => {
            return Ok(SearchOutcome {
                action: *only,
                root: vec![(*only, 0, 0.0)],
            })
        }
        _ => {}
    }

    let mut s = Search {
        grid,
        region: state.region,
        config,
        ctx: PlanContext::from_cache(
            state.belief,
            grid,
            *objective,
            std::mem::take(cache),
            Some((state.position, config.max_depth + 2)),
        ),
        nodes: Vec::new(),
    };
    let root = s.node(state.position, state.steps_remaining, History::default());
    s.nodes.push(root);
    let horizon = config.max_depth.min(state.steps_remaining.max(1));
    let mut run = || -> Result<()> {
        for _ in 0..config.rollouts_per_step {
            s.simulate(0, horizon, rng)?;
        }
        Ok(())
    };
    let outcome = run();
    *cache = s.ctx.into_cache();
    outcome?;

    let stats: Vec<(Move, u32, f64)> = s.nodes[0]
        .actions
        .iter()
        .map(|a| (a.mv, a.visits, a.value))
        .collect();
    let mut action = stats[0].0;
    let mut best = f64::NEG_INFINITY;
    for &(mv, visits, value) in &stats {
        if visits > 0 && value > best {
            action = mv;
            best = value;
        }
    }
    Ok(SearchOutcome { action, root: stats })
}

/// Choose the next move for one robot.
pub fn plan_step(
    state: &PlanningState<'_>,
    grid: &GridSpec,
    config: &PlannerConfig,
    objective: &ObjectiveSpec<'_>,
    rng: &mut impl Rng,
) -> Result<Move> {
    search(state, grid, config, objective, rng).map(|o| o.action)
}

/// [`plan_step`] with a cache carried between calls.
pub fn plan_step_cached(
    state: &PlanningState<'_>,
    grid: &GridSpec,
    config: &PlannerConfig,
    objective: &ObjectiveSpec<'_>,
    cache: &mut PlanCache,
    rng: &mut impl Rng,
) -> Result<Move> {
    search_cached(state, grid, config, objective, cache, rng).map(|o| o.action)
}
