//! `cae train`: run the configured training budget, streaming per-episode
//! metrics to JSONL and ending with a restorable checkpoint.

use crate::manifest::RunDir;
use crate::RunArgs;
use cae_core::approx::Checkpoint;
use cae_core::env::make_env;
use cae_core::learner::{EpisodeRecord, TrainConfig, TrainSink, Trainer};
use cae_core::replay::ReplayBuffer;
use cae_core::{par, Result};
use serde::Serialize;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;

struct JsonlSink {
    out: BufWriter<File>,
    dir: PathBuf,
    snapshots: Vec<String>,
}

impl TrainSink for JsonlSink {
    fn on_episode(&mut self, rec: &EpisodeRecord) -> Result<()> {
        serde_json::to_writer(&mut self.out, rec)?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    fn on_snapshot(&mut self, episode: usize, ckpt: &Checkpoint) -> Result<()> {
        let name = format!("checkpoint-{episode:05}.json");
        ckpt.save(&self.dir.join(&name))?;
        self.snapshots.push(name);
        Ok(())
    }
}

#[derive(Serialize)]
struct TrainSummary {
    explore_episodes: usize,
    goal_episodes: usize,
    training_steps: u64,
    wall_ms: u128,
    /// Success rate (percent) over the trailing window of episodes.
    tail_success_rate: f64,
    tail_window: usize,
}

pub fn run(args: &RunArgs, argv: &[String]) -> Result<()> {
    par::configure_threads(args.threads);
    let (mut cfg, snapshot) = super::load_config(args, args.variant.as_deref())?;
    let env = make_env(&args.env, &mut cfg)?;
    let tc = TrainConfig::from_config(&mut cfg)?;
    cfg.assert_consumed()?;

    let seed = tc.seed;
    let mut dir = RunDir::create(&args.out, seed)?;
    let mut trainer = Trainer::new(env.as_ref(), tc)?;
    if let Some(path) = &args.replay_in {
        let mut reader = BufReader::new(File::open(path)?);
        trainer.buffer = ReplayBuffer::load_jsonl(&mut reader, env.max_episode_length())?;
        println!(
            "preloaded {} episodes from {}",
            trainer.buffer.len(),
            path.display()
        );
    }

    let metrics_path = dir.path.join("metrics.jsonl");
    let mut sink = JsonlSink {
        out: BufWriter::new(File::create(&metrics_path)?),
        dir: dir.path.clone(),
        snapshots: Vec::new(),
    };
    let report = trainer.run(&mut sink)?;
    sink.out.flush()?;
    if std::fs::metadata(&metrics_path)?.len() == 0 {
        std::fs::remove_file(&metrics_path)?;
    } else {
        dir.file("metrics.jsonl");
    }
    for name in &sink.snapshots {
        dir.file(name);
    }
    trainer.checkpoint().save(&dir.file("checkpoint.json"))?;

    let n = report.records.len();
    let window = n.min(100);
    let tail_success = if window == 0 {
        0.0
    } else {
        report.records[n - window..]
            .iter()
            .filter(|r| r.success)
            .count() as f64
            * 100.0
            / window as f64
    };
    let summary = TrainSummary {
        explore_episodes: report.explore_episodes,
        goal_episodes: n,
        training_steps: report.training_steps,
        wall_ms: report.wall_ms,
        tail_success_rate: tail_success,
        tail_window: window,
    };
    std::fs::write(
        dir.file("train_report.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;

    println!(
        "episodes: {} explore + {} goal-directed",
        report.explore_episodes, n
    );
    println!("training steps: {}", report.training_steps);
    println!("success rate over last {window} episodes: {tail_success:.1}%");
    println!("artifacts: {}", dir.path.display());
    dir.finish("train", argv, seed, env.spec(), &snapshot)
}
