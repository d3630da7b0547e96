//! End-to-end acceptance checks. Each criterion prints one PASS or FAIL
//! line; the process exits nonzero if any gating criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use qipp_core::field::{synth_field, Cell, GridSpec, Point, SynthKind};
use qipp_core::gp::{BeliefModel, KernelParams};
use qipp_core::objective::{objective_score, quantiles, ObjectiveSpec, QuantileSet, SeBasis};
use qipp_core::planner::{legal_actions, plan_step, PlannerConfig, PlanningState};
use qipp_core::seed;
use qipp_core::stats::{five_number, wilcoxon_signed_rank, Alternative, PairedSample};
use qipp_core::team::{
    allocate_budgets, comm_success_prob, delivery_outcomes, run_mission, run_mission_with, BudgetPolicy,
    BudgetSpec, CommRegime, CommSpec, MissionConfig, MissionSetup, Policy,
};
use qipp_harness::sweep::FieldSource;
use qipp_harness::{parse_pairs, preset, report, run_sweep, ResultsTable, SweepSpec};
use rand::seq::IndexedRandom;
use rand::Rng;

/// Fixed before any acceptance run.
const MASTER_SEED: u64 = 0;
const SEEDS: u64 = 20;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn sweep(
    team_sizes: &[usize],
    alphas: &[f64],
    policy: BudgetPolicy,
    comms: &[CommRegime],
    base: MissionConfig,
) -> SweepSpec {
    SweepSpec {
        field: FieldSource::default(),
        grid: GridSpec::default(),
        quantile_sets: vec![QuantileSet::quartiles()],
        team_sizes: team_sizes.to_vec(),
        alphas: alphas.to_vec(),
        budgets: vec![15],
        budget_policies: vec![policy],
        comm_regimes: comms.to_vec(),
        seeds: (0..SEEDS).collect(),
        master_seed: MASTER_SEED,
        base,
        partitioned_alpha: Some(1.0),
    }
}

fn workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn rmse_by(table: &ResultsTable, key: impl Fn(&qipp_harness::ResultRow) -> bool) -> Vec<f64> {
    table.rows.iter().filter(|r| key(r)).map(|r| r.rmse).collect()
}

fn spread_trend() -> Outcome {
    let spec = sweep(&[4], &[0.0, 0.33, 0.66], BudgetPolicy::Complete, &[CommRegime::None], MissionConfig::default());
    let out = run_sweep(&spec, workers(), false).expect("sweep runs");
    let r = report(&out.table, "alpha", &parse_pairs("0.33:0.66").unwrap(), Alternative::Greater).unwrap();
    let med = |label: &str| r.groups.iter().find(|g| g.label == label).unwrap().summary.median;
    let (m0, m33, m66) = (med("0"), med("0.33"), med("0.66"));
    let p = r.pairs[0].p_value;
    outcome(
        m66 < m0 && p < 0.05,
        format!(
            "median RMSE a=0 {m0:.4}, a=0.33 {m33:.4}, a=0.66 {m66:.4}; 0.33 vs 0.66 W={} p={p:.4}",
            r.pairs[0].statistic
        ),
    )
}

fn team_over_budget() -> Outcome {
    let spec = sweep(&[1, 4], &[0.66], BudgetPolicy::Shared, &[CommRegime::Stochastic], MissionConfig::default());
    let out = run_sweep(&spec, workers(), false).expect("sweep runs");
    let one = five_number(&rmse_by(&out.table, |r| r.n_robots == 1)).unwrap();
    let four = five_number(&rmse_by(&out.table, |r| r.n_robots == 4)).unwrap();
    outcome(
        four.median <= one.median && four.max < one.max,
        format!(
            "N=1 median {:.4} max {:.4}; N=4 median {:.4} max {:.4}",
            one.median, one.max, four.median, four.max
        ),
    )
}

fn comm_benefit() -> Outcome {
    let spec = sweep(
        &[8],
        &[0.66],
        BudgetPolicy::Complete,
        &[CommRegime::None, CommRegime::Stochastic],
        MissionConfig::default(),
    );
    let out = run_sweep(&spec, workers(), false).expect("sweep runs");
    let none = five_number(&rmse_by(&out.table, |r| r.comm == CommRegime::None)).unwrap();
    let stoch = five_number(&rmse_by(&out.table, |r| r.comm == CommRegime::Stochastic)).unwrap();
    outcome(
        stoch.q3 <= none.q3,
        format!("N=8 upper quartile RMSE: stochastic {:.4}, none {:.4}", stoch.q3, none.q3),
    )
}

fn budget_exactness() -> Outcome {
    let mut bad = Vec::new();
    for total in 1..=64 {
        for n in 1..=16 {
            let b = allocate_budgets(BudgetSpec { total, policy: BudgetPolicy::Shared }, n);
            let spread = b.iter().max().unwrap() - b.iter().min().unwrap();
            if b.iter().sum::<usize>() != total || spread > 1 {
                bad.push((total, n));
            }
        }
    }
    let fifteen: Vec<Vec<usize>> = [2, 4, 8]
        .iter()
        .map(|&n| allocate_budgets(BudgetSpec { total: 15, policy: BudgetPolicy::Shared }, n))
        .collect();
    outcome(
        bad.is_empty(),
        format!("{} failing (B, N) pairs of 1024; B=15 splits {fifteen:?}", bad.len()),
    )
}

fn comm_exactness() -> Outcome {
    let spec = CommSpec { regime: CommRegime::Stochastic, eta: 0.5, r: 10.0 };
    let mid = comm_success_prob(10.0, &spec);
    let sym = comm_success_prob(0.0, &spec) + comm_success_prob(20.0, &spec);
    let receivers = vec![Point::new(10.0, 0.0); 10_000];
    let hits = delivery_outcomes(Point::new(0.0, 0.0), &receivers, &spec, &mut seed::stream(MASTER_SEED, &[1]))
        .into_iter()
        .filter(|&d| d)
        .count();
    let rate = hits as f64 / 1e4;
    outcome(
        mid == 0.5 && (sym - 1.0).abs() < 1e-12 && (rate - 0.5).abs() < 0.02,
        format!("p(r)={mid}, p(0)+p(2r)-1={:.1e}, delivery rate at r {rate:.4}", sym - 1.0),
    )
}

fn dense_posterior(b: &BeliefModel, xs: &[Point], ys: &[f64], q: &[Point]) -> (Vec<f64>, Vec<f64>) {
    let k = b.kernel();
    let n = xs.len();
    let mut m = DMatrix::from_fn(n, n, |i, j| k.cov(xs[i], xs[j]));
    for i in 0..n {
        m[(i, i)] += b.diagonal_noise();
    }
    let chol = m.cholesky().expect("positive definite");
    let alpha = chol.solve(&DVector::from_iterator(n, ys.iter().map(|y| y - b.prior_mean())));
    q.iter()
        .map(|&p| {
            let kq = DVector::from_iterator(n, xs.iter().map(|&x| k.cov(x, p)));
            (b.prior_mean() + kq.dot(&alpha), k.cov(p, p) - kq.dot(&chol.solve(&kq)))
        })
        .unzip()
}

fn gp_oracle() -> Outcome {
    let mut rng = seed::stream(MASTER_SEED, &[2]);
    let (mut worst, mut over_prior) = (0.0f64, 0usize);
    for _ in 0..100 {
        let n = rng.random_range(1..=300);
        let kernel = KernelParams::new(rng.random_range(2.0..20.0), rng.random_range(0.2..2.0), rng.random_range(1e-3..0.1)).unwrap();
        let xs: Vec<Point> = (0..n).map(|_| Point::new(rng.random_range(0.0..80.0), rng.random_range(0.0..60.0))).collect();
        let ys: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let mut b = BeliefModel::new(kernel);
        for (cx, cy) in xs.chunks(25).zip(ys.chunks(25)) {
            b.update(cx, cy).unwrap();
        }
        let q: Vec<Point> = (0..20).map(|_| Point::new(rng.random_range(0.0..80.0), rng.random_range(0.0..60.0))).collect();
        let (m, v) = b.predict(&q);
        let (om, ov) = dense_posterior(&b, &xs, &ys, &q);
        for i in 0..q.len() {
            worst = worst.max((m[i] - om[i]).abs()).max((v[i] - ov[i]).abs());
            over_prior += usize::from(v[i] > kernel.signal_variance + 1e-9);
        }
    }
    outcome(
        worst < 1e-8 && over_prior == 0,
        format!("max |incremental - dense| {worst:.2e} over 100 instances; {over_prior} variances above prior"),
    )
}

fn brute_quantile(v: &[f64], q: f64) -> f64 {
    let mut s = v.to_vec();
    // bubble sort keeps the oracle independent of the library's sort
    for i in 0..s.len() {
        for j in 0..s.len() - 1 - i {
            if s[j] > s[j + 1] {
                s.swap(j, j + 1);
            }
        }
    }
    let pos = q * (s.len() - 1) as f64;
    let k = pos.floor() as usize;
    if k + 1 >= s.len() {
        return s[k];
    }
    s[k] + (pos - k as f64) * (s[k + 1] - s[k])
}

fn quantile_oracle() -> Outcome {
    let mut rng = seed::stream(MASTER_SEED, &[3]);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..150);
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..2.0)).collect();
        let qs = QuantileSet::new(vec![0.1, 0.25, 0.5, 0.75, 0.9, 0.99]).unwrap();
        let got = quantiles(&v, &qs).unwrap();
        mismatches += got.iter().zip(qs.as_slice()).filter(|(g, q)| **g != brute_quantile(&v, **q)).count();
    }
    let grid = GridSpec::new(3, 3, 9.6, 7.2, 5).unwrap();
    let field = synth_field(SynthKind::Blobs, grid, 1);
    let cfg = MissionConfig {
        n_robots: 9,
        budget: BudgetSpec { total: 0, policy: BudgetPolicy::Complete },
        noise_sd: 0.0,
        ..MissionConfig::default()
    };
    let setup = MissionSetup { starts: Some(grid.cells().collect()), robot_seeds: None };
    let t = run_mission_with(&cfg, &field, MASTER_SEED, setup).unwrap();
    let gap = t
        .final_estimate
        .values
        .iter()
        .zip(&t.truth.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    outcome(
        mismatches == 0 && gap <= 1e-9,
        format!("{mismatches} mismatches in 6000 quantiles; full-coverage noiseless error {gap:.1e}"),
    )
}

fn wilcoxon_exactness() -> Outcome {
    let five = PairedSample::new(vec![0.3, 1.2, 0.7, 2.0, 0.1], vec![0.0; 5]).unwrap();
    let w5 = wilcoxon_signed_rank(&five, Alternative::Greater).unwrap();
    let mut worst = 0.0f64;
    for m in 13..=20usize {
        let n = m * (m + 1) / 2;
        let mut counts = vec![0u64; n + 1];
        counts[0] = 1;
        // null distribution by enumerating all 2^m sign patterns
        for mask in 1u64..(1 << m) {
            let s: usize = (0..m).filter(|i| mask >> i & 1 == 1).map(|i| i + 1).sum();
            counts[s] += 1;
        }
        let total = (1u64 << m) as f64;
        for w in 0..=n {
            let mut left = w;
            let d: Vec<f64> = (1..=m)
                .rev()
                .map(|r| if r <= left { left -= r; r as f64 } else { -(r as f64) })
                .collect();
            let s = PairedSample::new(d, vec![0.0; m]).unwrap();
            let upper = counts[w..].iter().sum::<u64>() as f64 / total;
            let lower = counts[..=w].iter().sum::<u64>() as f64 / total;
            let g = wilcoxon_signed_rank(&s, Alternative::Greater).unwrap().p_value;
            let l = wilcoxon_signed_rank(&s, Alternative::Less).unwrap().p_value;
            worst = worst.max((g - upper).abs()).max((l - lower).abs());
        }
    }
    outcome(
        w5.statistic == 15.0 && w5.p_value == 1.0 / 32.0 && worst < 0.01,
        format!(
            "five positive: W={} p={}; worst one-sided normal-vs-enumeration gap for m=13..20: {worst:.4}",
            w5.statistic, w5.p_value
        ),
    )
}

fn planner_sanity() -> Outcome {
    let base = MissionConfig { n_robots: 1, ..MissionConfig::default() };
    let walk = MissionConfig { policy: Policy::RandomWalk, ..base.clone() };
    let mean_reward = |cfg: MissionConfig| {
        let out = run_sweep(&sweep(&[1], &[0.66], BudgetPolicy::Complete, &[CommRegime::None], cfg), workers(), true)
            .expect("sweep runs");
        let trials = out.trials.unwrap();
        trials.iter().map(|(_, _, t)| t.rewards[0]).sum::<f64>() / trials.len() as f64
    };
    let (planned, random) = (mean_reward(base), mean_reward(walk));

    let grid = GridSpec::new(3, 3, 9.6, 7.2, 5).unwrap();
    let lattice = grid.lattice_points();
    let qs = QuantileSet::quartiles();
    let cells: Vec<Cell> = grid.cells().collect();
    let mut agree = 0;
    for trial in 0..50u64 {
        let mut rng = seed::stream(MASTER_SEED, &[4, trial]);
        let mut belief = BeliefModel::new(KernelParams::new(rng.random_range(2.0..8.0), 1.0, 0.0025).unwrap());
        for _ in 0..rng.random_range(0..4) {
            let c = *cells.choose(&mut rng).unwrap();
            let v: f64 = rng.random_range(0.0..1.0);
            belief.update(&grid.footprint(c).unwrap(), &[v; 25]).unwrap();
        }
        let position = *cells.choose(&mut rng).unwrap();
        let objective = ObjectiveSpec {
            quantiles: &qs,
            exploration_c: 1.0,
            se_basis: if trial % 2 == 0 { SeBasis::Lattice } else { SeBasis::Measurements },
            lattice: &lattice,
        };
        let state = PlanningState { position, belief: &belief, steps_remaining: 10, region: None };
        let config = PlannerConfig { max_depth: 1, ..PlannerConfig::default() };
        let chosen = plan_step(&state, &grid, &config, &objective, &mut rng).unwrap();
        let scored: Vec<_> = legal_actions(position, &grid, None)
            .into_iter()
            .map(|m| {
                let fp = grid.footprint(m.apply(position, &grid).unwrap()).unwrap();
                (objective_score(&belief, &fp, &objective).unwrap().total(), m)
            })
            .collect();
        let best = scored.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
        agree += usize::from(scored.iter().any(|&(s, m)| m == chosen && s >= best - 1e-9 * best.abs().max(1.0)));
    }
    outcome(
        planned > random && agree >= 45,
        format!("mean reward planner {planned:.3} vs random walk {random:.3}; depth-1 agreement {agree}/50"),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = Vec::new();
    let mut rows = 0;
    for (run, w) in [(0, 1), (1, workers().max(2))] {
        let mut spec = preset("alpha_study", 2).unwrap();
        spec.master_seed = MASTER_SEED;
        let out = run_sweep(&spec, w, false).unwrap();
        rows = out.table.rows.len();
        let path = dir.path().join(format!("run{run}.csv"));
        out.table.write_csv(&path).unwrap();
        bytes.push(std::fs::read(&path).unwrap());
    }
    outcome(
        bytes[0] == bytes[1] && rows > 0,
        format!("alpha_study, 2 seeds: {rows} rows, identical={}", bytes[0] == bytes[1]),
    )
}

fn performance() -> Outcome {
    let field = synth_field(SynthKind::Blobs, GridSpec::default(), MASTER_SEED);
    let cfg = MissionConfig {
        n_robots: 4,
        comm: CommSpec { regime: CommRegime::Stochastic, ..CommSpec::default() },
        ..MissionConfig::default()
    };
    assert_eq!((cfg.planner.rollouts_per_step, cfg.planner.max_depth, cfg.budget.total), (100, 4, 15));
    let started = Instant::now();
    let t = run_mission(&cfg, &field, MASTER_SEED).unwrap();
    let secs = started.elapsed().as_secs_f64();
    outcome(
        secs < 60.0 && t.steps.iter().sum::<usize>() == 60,
        format!("25x25 grid, N=4, B=15, 100 rollouts, depth 4: {secs:.2} s"),
    )
}

/// Whether a failure fails the process. Trend criteria are empirical claims
/// about team behaviour on synthetic fields; they are reported at full
/// strictness but do not gate the build.
#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Gating,
    Trend,
}

fn main() -> ExitCode {
    use Kind::*;
    let criteria: [(&str, Kind, fn() -> Outcome); 11] = [
        ("budget allocation exactness", Gating, budget_exactness),
        ("communication model exactness", Gating, comm_exactness),
        ("GP oracle equivalence", Gating, gp_oracle),
        ("quantile oracle equivalence", Gating, quantile_oracle),
        ("Wilcoxon exactness", Gating, wilcoxon_exactness),
        ("planner sanity", Gating, planner_sanity),
        ("performance envelope", Gating, performance),
        ("spread trend", Trend, spread_trend),
        ("team size over budget trend", Trend, team_over_budget),
        ("communication benefit for large teams", Trend, comm_benefit),
        ("determinism", Gating, determinism),
    ];
    let only: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let (mut ran, mut failed, mut gating_failed) = (0, 0, 0);
    for (name, kind, check) in criteria {
        if only.as_deref().is_some_and(|f| !name.contains(f)) {
            continue;
        }
        let started = Instant::now();
        let o = check();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        ran += 1;
        if !o.pass {
            failed += 1;
            gating_failed += usize::from(kind == Gating);
        }
        println!("{tag} {name}: {} ({:.1} s)", o.detail, started.elapsed().as_secs_f64());
    }
    println!(
        "acceptance: {} passed, {failed} failed ({} trend, {gating_failed} gating)",
        ran - failed,
        failed - gating_failed
    );
    if gating_failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
