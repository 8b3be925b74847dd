//! Rollout evaluation: success rates, path lengths, difficulty strata,
//! final distances, and goal-space heatmaps.
//!
//! Each goal is evaluated on its own seeded random stream, so reports are
//! bit-reproducible and per-goal work can fan out across threads without
//! changing a single number.

use crate::env::{ActionId, Environment, Goal, StartMode, State, Stratum};
use crate::par;
use crate::policy::AccessValues;
use crate::rng::{stream_rng, Stream};
use crate::{Error, Result};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::io::Write;

#[derive(Debug, Clone, Serialize)]
pub struct GoalRecord {
    pub goal: Goal,
    pub stratum: Stratum,
    pub trials: usize,
    pub successes: usize,
    /// Percentage in [0, 100].
    pub success_rate: f64,
    /// Mean steps among successful rollouts; absent when none succeeded.
    pub mean_success_length: Option<f64>,
    /// Mean metric distance from the last state to the goal, all rollouts.
    pub mean_final_distance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StratumSummary {
    pub stratum: Stratum,
    pub goals: usize,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_success_length: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub trials_per_goal: usize,
    pub goals: Vec<GoalRecord>,
    pub strata: Vec<StratumSummary>,
    pub overall_trials: usize,
    pub overall_successes: usize,
    pub overall_success_rate: f64,
    pub overall_mean_success_length: Option<f64>,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per goal.
    pub fn write_csv(&self, out: &mut dyn Write) -> Result<()> {
        writeln!(
            out,
            "goal,stratum,trials,successes,success_rate,mean_success_length,mean_final_distance"
        )?;
        for r in &self.goals {
            writeln!(
                out,
                "{},{},{},{},{:.4},{},{:.4}",
                r.goal.render(),
                r.stratum,
                r.trials,
                r.successes,
                r.success_rate,
                r.mean_success_length
                    .map(|v| format!("{v:.4}"))
                    .unwrap_or_default(),
                r.mean_final_distance,
            )?;
        }
        Ok(())
    }
}

struct GoalOutcome {
    successes: usize,
    success_steps: usize,
    final_distance_sum: f64,
}

fn eval_one_goal(
    env: &dyn Environment,
    policy: &(dyn Fn(&State, &Goal, &mut ChaCha8Rng) -> ActionId + Sync),
    goal: &Goal,
    trials: usize,
    rng: &mut ChaCha8Rng,
) -> GoalOutcome {
    let mut successes = 0;
    let mut success_steps = 0;
    let mut final_distance_sum = 0.0;
    for _ in 0..trials {
        let mut s = env.initial_state(StartMode::Test, rng);
        let mut success = env.goal_check(&s, goal);
        let mut steps = 0usize;
        if !success {
            for step in 1..=env.max_episode_length() {
                let a = policy(&s, goal, rng);
                let out = env.step(&s, a, rng);
                s = out.next;
                if env.goal_check(&s, goal) {
                    success = true;
                    steps = step;
                    break;
                }
                if out.terminal_sink {
                    break;
                }
            }
        }
        if success {
            successes += 1;
            success_steps += steps;
        }
        final_distance_sum += env.distance(&s, goal);
    }
    GoalOutcome {
        successes,
        success_steps,
        final_distance_sum,
    }
}

/// Roll `trials` episodes per goal from the environment's test start and
/// tally the metrics. Goal `i` draws from the seeded stream with index `i`,
/// making the report independent of evaluation order and thread count.
pub fn evaluate(
    env: &dyn Environment,
    policy: &(dyn Fn(&State, &Goal, &mut ChaCha8Rng) -> ActionId + Sync),
    goals: &[(Goal, Stratum)],
    trials: usize,
    seed: u64,
) -> Result<EvalReport> {
    if trials == 0 {
        return Err(Error::config("need at least one trial per goal"));
    }
    if goals.is_empty() {
        return Err(Error::config("goal list is empty"));
    }
    let outcomes = par::map_collect(goals.len(), |i| {
        let (goal, _) = &goals[i];
        let mut rng = stream_rng(seed, Stream::Eval, i as u64);
        eval_one_goal(env, policy, goal, trials, &mut rng)
    });
    let mut records = Vec::with_capacity(goals.len());
    for ((goal, stratum), o) in goals.iter().zip(&outcomes) {
        records.push(GoalRecord {
            goal: *goal,
            stratum: *stratum,
            trials,
            successes: o.successes,
            success_rate: 100.0 * o.successes as f64 / trials as f64,
            mean_success_length: (o.successes > 0)
                .then(|| o.success_steps as f64 / o.successes as f64),
            mean_final_distance: o.final_distance_sum / trials as f64,
        });
    }
    let strata = [Stratum::Easy, Stratum::Medium, Stratum::Hard]
        .into_iter()
        .filter_map(|st| {
            let rows: Vec<&GoalRecord> = records.iter().filter(|r| r.stratum == st).collect();
            if rows.is_empty() {
                return None;
            }
            let trials_sum: usize = rows.iter().map(|r| r.trials).sum();
            let succ: usize = rows.iter().map(|r| r.successes).sum();
            let steps: usize = outcomes
                .iter()
                .zip(goals)
                .filter(|(_, (_, s))| *s == st)
                .map(|(o, _)| o.success_steps)
                .sum();
            Some(StratumSummary {
                stratum: st,
                goals: rows.len(),
                trials: trials_sum,
                successes: succ,
                success_rate: 100.0 * succ as f64 / trials_sum as f64,
                mean_success_length: (succ > 0).then(|| steps as f64 / succ as f64),
            })
        })
        .collect();
    let overall_trials = trials * goals.len();
    let overall_successes: usize = outcomes.iter().map(|o| o.successes).sum();
    let total_steps: usize = outcomes.iter().map(|o| o.success_steps).sum();
    Ok(EvalReport {
        trials_per_goal: trials,
        goals: records,
        strata,
        overall_trials,
        overall_successes,
        overall_success_rate: 100.0 * overall_successes as f64 / overall_trials as f64,
        overall_mean_success_length: (overall_successes > 0)
            .then(|| total_steps as f64 / overall_successes as f64),
    })
}

/// Success-rate summary across seeds: mean and sample standard deviation of
/// the overall rates.
#[derive(Debug, Clone, Serialize)]
pub struct SeedAggregate {
    pub per_seed: Vec<f64>,
    pub mean: f64,
    pub stddev: f64,
}

pub fn aggregate_seeds(reports: &[EvalReport]) -> Result<SeedAggregate> {
    if reports.is_empty() {
        return Err(Error::config("no reports to aggregate"));
    }
    let per_seed: Vec<f64> = reports.iter().map(|r| r.overall_success_rate).collect();
    let n = per_seed.len() as f64;
    let mean = per_seed.iter().sum::<f64>() / n;
    let stddev = if per_seed.len() < 2 {
        0.0
    } else {
        (per_seed.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Ok(SeedAggregate {
        per_seed,
        mean,
        stddev,
    })
}

/// Dense sweep of `max_a f(s, a, g, h)` over a goal lattice. Row-major,
/// `values[y * width + x]`.
#[derive(Debug, Clone)]
pub struct Heatmap {
    pub width: usize,
    pub height: usize,
    pub goals: Vec<Goal>,
    pub values: Vec<f64>,
}

impl Heatmap {
    pub fn value(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    /// Matrix CSV: one row per lattice row, y increasing downward.
    pub fn write_csv(&self, out: &mut dyn Write) -> Result<()> {
        for y in 0..self.height {
            let row: Vec<String> = (0..self.width)
                .map(|x| format!("{:.6}", self.value(x, y)))
                .collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// The goal lattice a heatmap sweeps: integer cells for grid worlds, an
/// `resolution x resolution` lattice over the arena for planar ones. Returns
/// `(goals, width, height)` in row-major order.
pub fn goal_lattice(env: &dyn Environment, resolution: usize) -> (Vec<Goal>, usize, usize) {
    let spec = env.spec();
    let planar = matches!(env.achieved_goal(&env.test_start()), Goal::Region { .. });
    if planar {
        let (x_lo, x_hi) = spec.bounds[0];
        let (y_lo, y_hi) = spec.bounds[1];
        let n = resolution.max(2);
        let mut goals = Vec::with_capacity(n * n);
        for iy in 0..n {
            let y = y_lo + (y_hi - y_lo) * iy as f64 / (n - 1) as f64;
            for ix in 0..n {
                let x = x_lo + (x_hi - x_lo) * ix as f64 / (n - 1) as f64;
                goals.push(Goal::Region { x, y });
            }
        }
        (goals, n, n)
    } else {
        let (x_lo, x_hi) = spec.bounds[0];
        // One-dimensional grids have a single bound and a one-row lattice.
        let (y_lo, y_hi) = spec.bounds.get(1).copied().unwrap_or((0.0, 0.0));
        let (w, h) = (
            (x_hi - x_lo) as usize + 1,
            (y_hi - y_lo) as usize + 1,
        );
        let mut goals = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                goals.push(Goal::cell(x_lo as i32 + x as i32, y_lo as i32 + y as i32));
            }
        }
        (goals, w, h)
    }
}

/// Evaluate the best-action value for every goal on the lattice at budget
/// `h`, from the fixed source state `s`.
pub fn heatmap<F: AccessValues + ?Sized>(
    f: &F,
    s: &State,
    h: usize,
    goals: Vec<Goal>,
    width: usize,
    height: usize,
) -> Heatmap {
    let values = goals
        .iter()
        .map(|g| {
            f.action_values(s, g, h)
                .into_iter()
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    Heatmap {
        width,
        height,
        goals,
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Checkerboard, FrozenLake, LineWorld};
    use crate::oracle::compute_c_star;
    use crate::policy::{horizon_free_action, HorizonSelector, TableValues};
    use rand::Rng;

    #[test]
    fn oracle_greedy_line_walk_scores_perfectly() {
        let env = LineWorld::new(3).unwrap();
        let mdp = env.enumerate().unwrap();
        let table = compute_c_star(&mdp, 4);
        let tv = TableValues {
            table: &table,
            mdp: &mdp,
        };
        let sel = HorizonSelector::new(1.0, vec![1, 2, 3, 4]).unwrap();
        let policy = move |s: &State, g: &Goal, _rng: &mut ChaCha8Rng| {
            horizon_free_action(&tv, s, g, &sel)
        };
        let goals = vec![(Goal::cell(2, 0), Stratum::Easy)];
        let report = evaluate(&env, &policy, &goals, 25, 0).unwrap();
        assert_eq!(report.overall_success_rate, 100.0);
        assert_eq!(report.goals[0].mean_success_length, Some(2.0));
        assert_eq!(report.goals[0].mean_final_distance, 0.0);
    }

    #[test]
    fn unreachable_goal_reports_zero_rate_and_no_length() {
        // A goal off the board is satisfied by no reachable state (walking
        // off lands in the sink, which matches nothing), so the rate is an
        // exact zero and the length average has no members.
        let env = Checkerboard::new(5).unwrap();
        let goal = Goal::cell(7, 7);
        let policy =
            |_: &State, _: &Goal, rng: &mut ChaCha8Rng| rng.random_range(0..4usize);
        let report = evaluate(&env, &policy, &[(goal, Stratum::Hard)], 50, 1).unwrap();
        assert_eq!(report.overall_success_rate, 0.0);
        assert_eq!(report.goals[0].mean_success_length, None);
        assert!(report.goals[0].mean_final_distance > 0.0);
    }

    #[test]
    fn overall_rate_is_the_trial_weighted_mean_of_goal_rates() {
        let env = FrozenLake::standard();
        let policy =
            |_: &State, _: &Goal, rng: &mut ChaCha8Rng| rng.random_range(0..4usize);
        let goals: Vec<(Goal, Stratum)> = env.eval_goals();
        let trials = 40;
        let report = evaluate(&env, &policy, &goals, trials, 3).unwrap();
        // Integer identity: overall successes are the per-goal sums, and
        // every goal ran the same number of trials.
        let sum: usize = report.goals.iter().map(|r| r.successes).sum();
        assert_eq!(sum, report.overall_successes);
        assert_eq!(report.overall_trials, trials * goals.len());
        let weighted: f64 = report
            .goals
            .iter()
            .map(|r| r.success_rate * r.trials as f64)
            .sum::<f64>()
            / report.overall_trials as f64;
        assert!((weighted - report.overall_success_rate).abs() < 1e-9);
        // Strata partition the goals.
        assert_eq!(
            report.strata.iter().map(|s| s.goals).sum::<usize>(),
            goals.len()
        );
        assert_eq!(
            report.strata.iter().map(|s| s.successes).sum::<usize>(),
            report.overall_successes
        );
    }

    #[test]
    fn fixed_seed_reports_are_bit_identical() {
        let env = FrozenLake::standard();
        let policy =
            |_: &State, _: &Goal, rng: &mut ChaCha8Rng| rng.random_range(0..4usize);
        let goals = env.eval_goals();
        let a = evaluate(&env, &policy, &goals, 20, 9).unwrap();
        let b = evaluate(&env, &policy, &goals, 20, 9).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }

    #[test]
    fn seed_aggregate_mean_and_spread() {
        let mk = |rate: f64| EvalReport {
            trials_per_goal: 1,
            goals: Vec::new(),
            strata: Vec::new(),
            overall_trials: 100,
            overall_successes: rate as usize,
            overall_success_rate: rate,
            overall_mean_success_length: None,
        };
        let agg = aggregate_seeds(&[mk(80.0), mk(90.0), mk(100.0)]).unwrap();
        assert!((agg.mean - 90.0).abs() < 1e-12);
        assert!((agg.stddev - 10.0).abs() < 1e-12);
        let single = aggregate_seeds(&[mk(75.0)]).unwrap();
        assert_eq!(single.stddev, 0.0);
    }

    #[test]
    fn zero_budget_heatmap_marks_only_the_source_cell() {
        let env = LineWorld::new(4).unwrap();
        let mdp = env.enumerate().unwrap();
        let table = compute_c_star(&mdp, 3);
        let tv = TableValues {
            table: &table,
            mdp: &mdp,
        };
        let (goals, w, h) = goal_lattice(&env, 0);
        assert_eq!((w, h), (4, 1));
        let s = State::cell(2, 0);
        let map = heatmap(&tv, &s, 0, goals, w, h);
        for x in 0..4 {
            assert_eq!(map.value(x, 0), if x == 2 { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn heatmaps_grow_entrywise_with_the_budget() {
        let env = FrozenLake::standard();
        let mdp = env.enumerate().unwrap();
        let table = compute_c_star(&mdp, 8);
        let tv = TableValues {
            table: &table,
            mdp: &mdp,
        };
        let (goals, w, h) = goal_lattice(&env, 0);
        let s = env.test_start();
        let small = heatmap(&tv, &s, 2, goals.clone(), w, h);
        let big = heatmap(&tv, &s, 8, goals, w, h);
        for (lo, hi) in small.values.iter().zip(&big.values) {
            assert!(hi >= lo);
        }
        assert!(small.values.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn csv_outputs_have_expected_shapes() {
        let env = LineWorld::new(3).unwrap();
        let mdp = env.enumerate().unwrap();
        let table = compute_c_star(&mdp, 2);
        let tv = TableValues {
            table: &table,
            mdp: &mdp,
        };
        let (goals, w, h) = goal_lattice(&env, 0);
        let map = heatmap(&tv, &State::cell(0, 0), 1, goals, w, h);
        let mut buf = Vec::new();
        map.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert_eq!(text.trim().split(',').count(), 3);

        let policy = |_: &State, _: &Goal, _: &mut ChaCha8Rng| 1usize;
        let report = evaluate(
            &env,
            &policy,
            &[(Goal::cell(2, 0), Stratum::Easy)],
            5,
            0,
        )
        .unwrap();
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.lines().nth(1).unwrap().starts_with("2|0,easy,5,5,"));
    }
}
