//! `cae eval`: greedy rollouts of a trained checkpoint over the
//! environment's fixed evaluation goals, reported per goal, per difficulty
//! stratum, and overall.

use super::GreedyPolicy;
use crate::manifest::RunDir;
use crate::RunArgs;
use cae_core::approx::Checkpoint;
use cae_core::env::{make_env, ActionId, Goal, State};
use cae_core::eval::evaluate;
use cae_core::{par, Error, Result};
use rand_chacha::ChaCha8Rng;

pub fn run(args: &RunArgs, argv: &[String]) -> Result<()> {
    par::configure_threads(args.threads);
    let (mut cfg, snapshot) = super::load_config(args, args.variant.as_deref())?;
    let env = make_env(&args.env, &mut cfg)?;

    let ckpt_path = args
        .checkpoint
        .as_ref()
        .ok_or_else(|| Error::config("eval requires --checkpoint <file> from a train run"))?;
    let ckpt = Checkpoint::load(ckpt_path)?;
    if ckpt.env_name != env.spec().name {
        return Err(Error::config(format!(
            "checkpoint was trained on `{}` but --env says `{}`",
            ckpt.env_name,
            env.spec().name
        )));
    }
    let net = ckpt.restore()?;

    let trials = cfg.take_parsed::<usize>("eval.trials")?.unwrap_or(100);
    let seed = cfg.take_parsed::<u64>("seed")?.unwrap_or(0);
    let alpha = cfg.take_parsed::<f64>("train.alpha")?.unwrap_or(0.9);
    let h_cap = cfg.take_parsed::<usize>("train.h_max")?;
    let distance_floor = cfg
        .take_parsed::<bool>("train.distance_floor")?
        .unwrap_or(false);
    let eval_gamma = cfg.take_parsed::<f64>("eval.gamma")?;
    // Ignore training-only keys so one config file can drive both commands.
    let _ = cfg.take("train.variant");
    cfg.assert_consumed()?;

    let mdp = if ckpt.backend == "tabular" {
        Some(super::enumerate_or_err(env.as_ref())?)
    } else {
        None
    };
    let policy = GreedyPolicy::new(
        env.as_ref(),
        mdp.as_ref(),
        &net,
        &ckpt.axis,
        alpha,
        distance_floor,
        eval_gamma,
        h_cap,
    )?;
    let goals = env.eval_goals();
    let act = |s: &State, g: &Goal, _rng: &mut ChaCha8Rng| -> ActionId { policy.act(s, g) };
    let report = evaluate(env.as_ref(), &act, &goals, trials, seed)?;

    let mut dir = RunDir::create(&args.out, seed)?;
    std::fs::write(dir.file("eval_report.json"), report.to_json()?)?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    std::fs::write(dir.file("eval_report.csv"), csv)?;

    println!(
        "goals: {}   trials per goal: {}",
        report.goals.len(),
        report.trials_per_goal
    );
    for s in &report.strata {
        println!(
            "  {:<6} {:>6.1}%  ({} goals)",
            s.stratum.to_string(),
            s.success_rate,
            s.goals
        );
    }
    println!(
        "overall: {:.1}% ({}/{})",
        report.overall_success_rate, report.overall_successes, report.overall_trials
    );
    if let Some(len) = report.overall_mean_success_length {
        println!("mean successful path length: {len:.2}");
    }
    println!("artifacts: {}", dir.path.display());
    dir.finish("eval", argv, seed, env.spec(), &snapshot)
}
