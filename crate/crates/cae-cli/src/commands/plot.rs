//! `cae plot`: rendered views of a value function — goal heatmaps, most
//! likely trajectories at chosen budgets, greedy policy arrows, planar
//! arena paths, and training curves when a run's metrics sit next to the
//! checkpoint.
//!
//! Values come from `--checkpoint` when given, otherwise from the exact
//! dynamic-programming table of the requested variant (enumerable
//! environments only).

use super::{nearest, GreedyPolicy};
use crate::manifest::RunDir;
use crate::RunArgs;
use cae_core::approx::{AxisInfo, Checkpoint, ValueNet};
use cae_core::config::{parse_cell, parse_tuples};
use cae_core::env::{make_env, Goal, State, Stratum};
use cae_core::eval::{goal_lattice, heatmap};
use cae_core::learner::TrainConfig;
use cae_core::oracle::{
    compute_a_star, compute_c_star, compute_d_star, compute_q_star, ExactTable,
};
use cae_core::plot::{
    curves_svg, heatmap_svg, planar_trajectory_svg, trajectory_csv, GridMap,
};
use cae_core::policy::{greedy_action, most_likely_trajectory, AccessValues, NetValues, TableValues};
use cae_core::rng::{stream_rng, Stream};
use cae_core::{par, Error, Result, Variant};

/// How the third table axis is driven while plotting.
#[derive(Clone, Copy)]
enum Cond {
    /// Trajectories count the remaining budget down; heatmaps use the top.
    Budget,
    /// Discount-conditioned or unconditioned values: one fixed level.
    Fixed(usize),
}

pub fn run(args: &RunArgs, argv: &[String]) -> Result<()> {
    par::configure_threads(args.threads);
    let (mut cfg, snapshot) = super::load_config(args, args.variant.as_deref())?;
    let env = make_env(&args.env, &mut cfg)?;

    let variant = match cfg.take("train.variant") {
        Some(raw) => Variant::parse(&raw)
            .ok_or_else(|| Error::config(format!("train.variant: `{raw}` is not c, a, d, q")))?,
        None => Variant::C,
    };
    let h_key = cfg.take_parsed::<usize>("train.h_max")?;
    let seed = cfg.take_parsed::<u64>("seed")?.unwrap_or(0);
    let alpha = cfg.take_parsed::<f64>("train.alpha")?.unwrap_or(0.9);
    let distance_floor = cfg
        .take_parsed::<bool>("train.distance_floor")?
        .unwrap_or(false);
    let gamma = cfg.take_parsed::<f64>("train.gamma")?.unwrap_or(0.99);
    let gamma_grid = match cfg.take("train.gamma_grid") {
        Some(raw) => raw
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::config(format!("train.gamma_grid: bad number `{p}`")))
            })
            .collect::<Result<Vec<f64>>>()?,
        None => TrainConfig::defaults(variant, 1, 0).gamma_grid,
    };
    let goal_key = cfg.take("plot.goal");
    let budgets_key = cfg.take("plot.h");
    let resolution = cfg.take_parsed::<usize>("plot.resolution")?.unwrap_or(25);
    let eval_gamma = cfg.take_parsed::<f64>("eval.gamma")?;
    cfg.assert_consumed()?;

    let mdp = env.enumerate();
    let mut net: Option<(ValueNet, AxisInfo)> = None;
    let mut table: Option<ExactTable> = None;
    let mut metrics_path = None;

    if let Some(ckpt_path) = &args.checkpoint {
        let ckpt = Checkpoint::load(ckpt_path)?;
        if ckpt.env_name != env.spec().name {
            return Err(Error::config(format!(
                "checkpoint was trained on `{}` but --env says `{}`",
                ckpt.env_name,
                env.spec().name
            )));
        }
        if ckpt.backend == "tabular" && mdp.is_none() {
            return Err(Error::NotEnumerable(env.spec().name.clone()));
        }
        let sibling = ckpt_path
            .parent()
            .map(|p| p.join("metrics.jsonl"))
            .filter(|p| p.exists());
        metrics_path = sibling;
        net = Some((ckpt.restore()?, ckpt.axis));
    } else {
        let m = mdp
            .as_ref()
            .ok_or_else(|| Error::NotEnumerable(env.spec().name.clone()))?;
        let h_max = h_key.unwrap_or(10);
        table = Some(match variant {
            Variant::C => compute_c_star(m, h_max),
            Variant::A => compute_a_star(m, h_max),
            Variant::D => compute_d_star(m, &gamma_grid)?.0,
            Variant::Q => compute_q_star(m, gamma)?.0,
        });
    }

    // Conditioning: the budget ceiling for countdown plots, the fixed level
    // otherwise, and the feature normalizer the net was trained with.
    let (cond, h_top, h_norm) = match (&net, &table) {
        (Some((_, AxisInfo::Horizon { h_max })), _) => {
            let top = h_key.unwrap_or(*h_max).min(*h_max).max(1);
            (Cond::Budget, top, *h_max)
        }
        (Some((_, AxisInfo::Gamma { grid })), _) => {
            let pick = eval_gamma.unwrap_or_else(|| *grid.last().expect("non-empty grid"));
            (Cond::Fixed(nearest(grid, pick)), 1, 1)
        }
        (Some((_, AxisInfo::Fixed { .. })), _) => (Cond::Fixed(0), 1, 1),
        (None, Some(t)) => match variant {
            Variant::C | Variant::A => {
                let top = t.axis.len().saturating_sub(1).max(1);
                (Cond::Budget, top, top)
            }
            Variant::D => {
                let pick = eval_gamma.unwrap_or_else(|| *gamma_grid.last().expect("non-empty"));
                (Cond::Fixed(nearest(&gamma_grid, pick)), 1, 1)
            }
            Variant::Q => (Cond::Fixed(0), 1, 1),
        },
        (None, None) => unreachable!("one value source is always built"),
    };
    let fixed = match (&net, cond) {
        (Some((_, AxisInfo::Gamma { grid })), Cond::Fixed(k)) => Some((k, grid[k])),
        (Some((_, AxisInfo::Fixed { .. })), Cond::Fixed(_)) => Some((0, 0.0)),
        _ => None,
    };
    let vals: Box<dyn AccessValues + '_> = match (&net, &table) {
        (Some((n, _)), _) => Box::new(NetValues {
            net: n,
            env: env.as_ref(),
            mdp: mdp.as_ref(),
            h_max: h_norm,
            fixed,
        }),
        (None, Some(t)) => Box::new(TableValues {
            table: t,
            mdp: mdp.as_ref().expect("oracle source implies a model"),
        }),
        (None, None) => unreachable!(),
    };
    let heat_k = match cond {
        Cond::Budget => h_top,
        Cond::Fixed(k) => k,
    };

    let mut dir = RunDir::create(&args.out, seed)?;
    let mut produced: Vec<String> = Vec::new();

    // 1. Goal heatmap from the test start.
    let start = env.test_start();
    let (lattice, width, height) = goal_lattice(env.as_ref(), resolution);
    let map = heatmap(vals.as_ref(), &start, heat_k, lattice, width, height);
    let mut heat_csv = Vec::new();
    map.write_csv(&mut heat_csv)?;
    std::fs::write(dir.file("heatmap.csv"), heat_csv)?;
    std::fs::write(dir.file("heatmap.svg"), heatmap_svg(&map, 24.0))?;
    produced.push("heatmap".into());

    // 2. Goal to aim trajectories and arrows at.
    let goals = env.eval_goals();
    let planar = matches!(env.achieved_goal(&start), Goal::Region { .. });
    let goal = match &goal_key {
        Some(raw) => {
            if planar {
                let t = parse_tuples(raw, 2)?;
                if t.len() != 1 {
                    return Err(Error::config("plot.goal expects one (x, y) pair"));
                }
                Goal::Region {
                    x: t[0][0],
                    y: t[0][1],
                }
            } else {
                let (x, y) = parse_cell(raw)?;
                Goal::cell(x, y)
            }
        }
        None => {
            goals
                .iter()
                .find(|(_, s)| *s == Stratum::Hard)
                .or(goals.last())
                .map(|(g, _)| *g)
                .ok_or_else(|| Error::config("environment has no evaluation goals"))?
        }
    };

    let budgets: Vec<usize> = match &budgets_key {
        Some(raw) => raw
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::config(format!("plot.h: bad budget `{p}`")))
            })
            .collect::<Result<_>>()?,
        None => vec![h_top],
    };
    if matches!(cond, Cond::Budget) {
        if let Some(&bad) = budgets.iter().find(|&&h| h > h_norm) {
            return Err(Error::config(format!(
                "plot.h = {bad} exceeds the table's largest budget {h_norm}"
            )));
        }
    }

    if let Some(m) = &mdp {
        // Grid world: map, trajectories, policy arrows.
        let spec = env.spec();
        let gwidth = spec.bounds[0].1 as i32 + 1;
        let gheight = spec.bounds.get(1).map(|b| b.1 as i32 + 1).unwrap_or(1);
        let gmap = GridMap {
            mdp: m,
            width: gwidth,
            height: gheight,
            cell_px: 28.0,
        };
        let gi = m.goal_index(&goal).ok_or_else(|| {
            Error::config(format!("plot.goal {} is not in the goal set", goal.render()))
        })?;
        let start_idx = m
            .state_index(&start)
            .expect("test start is part of the enumerated model");
        let act = |s: usize, rem: usize| {
            let level = match cond {
                Cond::Budget => rem,
                Cond::Fixed(k) => k,
            };
            greedy_action(vals.as_ref(), &m.states[s], &goal, level)
        };
        for &h in &budgets {
            let path = most_likely_trajectory(m, gi, start_idx, h, act);
            std::fs::write(
                dir.file(&format!("trajectory_h{h}.svg")),
                gmap.render_trajectory(&path, gi),
            )?;
            let states: Vec<State> = path.iter().map(|&i| m.states[i]).collect();
            let actions: Vec<_> = path[..path.len() - 1]
                .iter()
                .enumerate()
                .map(|(t, &s)| act(s, h - t))
                .collect();
            let mut csv = Vec::new();
            trajectory_csv(&mut csv, &states, &actions)?;
            std::fs::write(dir.file(&format!("trajectory_h{h}.csv")), csv)?;
            produced.push(format!("trajectory at budget {h}"));
        }
        std::fs::write(
            dir.file("policy.svg"),
            gmap.render_policy(gi, |s| act(s, h_top)),
        )?;
        produced.push("policy arrows".into());
    } else if planar {
        // Continuous arena: greedy rollout traced over the wall map.
        let (net, axis) = net.as_ref().expect("non-enumerable plotting needs a net");
        let policy = GreedyPolicy::new(
            env.as_ref(),
            None,
            net,
            axis,
            alpha,
            distance_floor,
            eval_gamma,
            h_key,
        )?;
        let mut rng = stream_rng(seed, Stream::Eval, 0);
        let mut states = vec![start];
        let mut actions = Vec::new();
        let mut s = start;
        for _ in 0..env.max_episode_length() {
            if env.goal_check(&s, &goal) {
                break;
            }
            let a = policy.act(&s, &goal);
            let out = env.step(&s, a, &mut rng);
            actions.push(a);
            states.push(out.next);
            if out.terminal_sink {
                break;
            }
            s = out.next;
        }
        let positions: Vec<(f64, f64)> = states
            .iter()
            .map(|st| match *st {
                State::Pose { x, y, .. } => (x, y),
                State::Cell { x, y } => (x as f64, y as f64),
            })
            .collect();
        let Goal::Region { x: gx, y: gy } = goal else {
            return Err(Error::config("planar plotting needs an (x, y) region goal"));
        };
        let size = env.spec().bounds[0].1;
        let svg = planar_trajectory_svg(
            size,
            env.planar_walls(),
            &positions,
            (gx, gy),
            env.goal_radius(),
            (600.0 / size).max(1.0),
        );
        std::fs::write(dir.file("trajectory.svg"), svg)?;
        let mut csv = Vec::new();
        trajectory_csv(&mut csv, &states, &actions)?;
        std::fs::write(dir.file("trajectory.csv"), csv)?;
        produced.push(format!("arena rollout ({} steps)", actions.len()));
    }

    // 3. Training curves, when metrics sit next to the checkpoint.
    if let Some(path) = metrics_path {
        let text = std::fs::read_to_string(&path)?;
        let mut wins: Vec<bool> = Vec::new();
        let mut losses: Vec<f64> = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let v: serde_json::Value = serde_json::from_str(line)?;
            wins.push(v["success"].as_bool().unwrap_or(false));
            losses.push(v["mean_loss"].as_f64().unwrap_or(f64::NAN));
        }
        let window = 25usize;
        let rates: Vec<f64> = (0..wins.len())
            .map(|i| {
                let lo = i.saturating_sub(window - 1);
                let n = i - lo + 1;
                wins[lo..=i].iter().filter(|&&w| w).count() as f64 * 100.0 / n as f64
            })
            .collect();
        std::fs::write(
            dir.file("learning_curve.svg"),
            curves_svg(
                &[(format!("success % (rolling {window})"), rates)],
                "goal-directed episodes",
            ),
        )?;
        std::fs::write(
            dir.file("loss_curve.svg"),
            curves_svg(&[("mean batch loss".to_string(), losses)], "training loss"),
        )?;
        produced.push("learning curves".into());
    }

    println!("rendered: {}", produced.join(", "));
    println!("artifacts: {}", dir.path.display());
    dir.finish("plot", argv, seed, env.spec(), &snapshot)
}
