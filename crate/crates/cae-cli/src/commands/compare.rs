//! `cae compare`: train the requested recursion variants under the same
//! budget and environment, evaluate each greedily on the fixed goal set,
//! and tabulate the results side by side.

use super::GreedyPolicy;
use crate::manifest::RunDir;
use crate::RunArgs;
use cae_core::env::{make_env, ActionId, Goal, State};
use cae_core::eval::evaluate;
use cae_core::learner::{train, Backend, TrainConfig};
use cae_core::{par, Result, Variant};
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;

struct Row {
    variant: Variant,
    success_rate: f64,
    successes: usize,
    trials: usize,
    mean_success_length: Option<f64>,
    training_steps: u64,
    wall_ms: u128,
}

pub fn run(args: &RunArgs, argv: &[String]) -> Result<()> {
    par::configure_threads(args.threads);
    let variants = super::parse_variants(args.variant.as_deref())?;
    let (mut cfg, snapshot) = super::load_config(args, None)?;
    let env = make_env(&args.env, &mut cfg)?;
    let trials = cfg.take_parsed::<usize>("eval.trials")?.unwrap_or(100);
    let eval_gamma = cfg.take_parsed::<f64>("eval.gamma")?;
    let base = cfg;
    let seed = base
        .clone()
        .take_parsed::<u64>("seed")?
        .or(args.seed)
        .unwrap_or(0);

    let goals = env.eval_goals();
    let mut rows = Vec::with_capacity(variants.len());
    for &variant in &variants {
        let mut cfg = base.clone();
        cfg.set("train.variant", variant.as_str());
        let tc = TrainConfig::from_config(&mut cfg)?;
        cfg.assert_consumed()?;
        let tabular = tc.backend == Backend::Tabular;
        let (alpha, floor, axis) = (tc.alpha, tc.distance_floor, tc.axis());
        let (net, report) = train(env.as_ref(), tc)?;
        let mdp = if tabular {
            Some(super::enumerate_or_err(env.as_ref())?)
        } else {
            None
        };
        let policy = GreedyPolicy::new(
            env.as_ref(),
            mdp.as_ref(),
            &net,
            &axis,
            alpha,
            floor,
            eval_gamma,
            None,
        )?;
        let act = |s: &State, g: &Goal, _rng: &mut ChaCha8Rng| -> ActionId { policy.act(s, g) };
        let eval = evaluate(env.as_ref(), &act, &goals, trials, seed)?;
        println!(
            "trained {}: success {:.1}%  ({} training steps, {} ms)",
            variant.as_str(),
            eval.overall_success_rate,
            report.training_steps,
            report.wall_ms
        );
        rows.push(Row {
            variant,
            success_rate: eval.overall_success_rate,
            successes: eval.overall_successes,
            trials: eval.overall_trials,
            mean_success_length: eval.overall_mean_success_length,
            training_steps: report.training_steps,
            wall_ms: report.wall_ms,
        });
    }

    let mut dir = RunDir::create(&args.out, seed)?;
    let mut csv = String::from(
        "variant,success_rate,successes,trials,mean_success_length,training_steps,wall_ms\n",
    );
    for r in &rows {
        let len = r
            .mean_success_length
            .map(|l| format!("{l:.4}"))
            .unwrap_or_default();
        let _ = writeln!(
            csv,
            "{},{:.4},{},{},{},{},{}",
            r.variant.as_str(),
            r.success_rate,
            r.successes,
            r.trials,
            len,
            r.training_steps,
            r.wall_ms
        );
    }
    std::fs::write(dir.file("compare.csv"), csv)?;

    println!();
    println!("variant  success%  mean-length  steps      wall-ms");
    for r in &rows {
        let len = r
            .mean_success_length
            .map(|l| format!("{l:>11.2}"))
            .unwrap_or_else(|| format!("{:>11}", "-"));
        println!(
            "{:<7}  {:>7.1}%  {len}  {:>9}  {:>7}",
            r.variant.as_str(),
            r.success_rate,
            r.training_steps,
            r.wall_ms
        );
    }
    let mut order: Vec<&Row> = rows.iter().collect();
    order.sort_by(|a, b| b.success_rate.total_cmp(&a.success_rate));
    let ranking: Vec<&str> = order.iter().map(|r| r.variant.as_str()).collect();
    println!("ordering: {}", ranking.join(" > "));
    println!("artifacts: {}", dir.path.display());
    dir.finish("compare", argv, seed, env.spec(), &snapshot)
}
