//! End-to-end checks of the `cae` binary: artifact layout, manifest
//! integrity, determinism, and the exit-code contract.

use cae_core::config::ConfigMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn cae(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cae"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// The run directory a command reported on its `artifacts:` line.
fn artifacts_dir(out: &Output) -> PathBuf {
    let text = stdout(out);
    let line = text
        .lines()
        .rev()
        .find(|l| l.starts_with("artifacts: "))
        .unwrap_or_else(|| panic!("no artifacts line in:\n{text}"));
    PathBuf::from(line.trim_start_matches("artifacts: "))
}

fn read_manifest(dir: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join("manifest.json")).expect("manifest exists");
    serde_json::from_str(&text).expect("manifest is valid JSON")
}

/// Shared manifest invariants: every declared artifact exists, is
/// non-empty, and the stored config text is its own canonical form.
fn check_manifest(dir: &Path, command: &str) -> serde_json::Value {
    let m = read_manifest(dir);
    assert_eq!(m["command"], command);
    let outputs = m["outputs"].as_array().expect("outputs array");
    assert!(!outputs.is_empty(), "command declared no artifacts");
    for rec in outputs {
        let name = rec["file"].as_str().unwrap();
        let meta = std::fs::metadata(dir.join(name))
            .unwrap_or_else(|_| panic!("declared artifact `{name}` missing"));
        assert_eq!(meta.len(), rec["bytes"].as_u64().unwrap(), "{name} size");
        assert!(meta.len() > 0, "{name} is empty");
    }
    let config = m["config"].as_str().unwrap();
    let reparsed = ConfigMap::parse(config).expect("config snapshot parses");
    assert_eq!(reparsed.to_text(), config, "config snapshot round-trips");
    m
}

#[test]
fn oracle_emits_the_documented_table_and_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let out = cae(&[
        "oracle",
        "--env",
        "line-world",
        "--h-max",
        "5",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("rows: 108"), "{text}");
    assert!(text.contains("violations: 0"), "{text}");

    let dir = artifacts_dir(&out);
    let csv = std::fs::read_to_string(dir.join("c_star.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "state,action,goal,horizon,value");
    assert_eq!(lines.len(), 1 + 108, "header plus one row per entry");

    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("oracle_summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["monotonicity_violations"], 0);
    assert_eq!(summary["rows"], 108);
    // From the left end of a three-cell line, goals sit 0, 1, 2 steps out.
    let mins: Vec<u64> = summary["min_horizons"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v["min_horizon"].as_u64().unwrap())
        .collect();
    assert_eq!(mins, vec![0, 1, 2]);
    check_manifest(&dir, "oracle");
}

#[test]
fn repeat_train_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("train.cfg");
    std::fs::write(
        &cfg,
        "train.n_explore = 20\ntrain.n_gd = 30\ntrain.n_train = 6\ntrain.h_max = 6\n",
    )
    .unwrap();
    let args = [
        "train",
        "--env",
        "frozen-lake",
        "--variant",
        "c",
        "--seed",
        "7",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ];
    let first = cae(&args);
    assert!(first.status.success(), "{}", stderr(&first));
    let second = cae(&args);
    assert!(second.status.success(), "{}", stderr(&second));
    let (a, b) = (artifacts_dir(&first), artifacts_dir(&second));
    assert_ne!(a, b, "each run gets its own directory");
    for file in ["checkpoint.json", "metrics.jsonl"] {
        assert_eq!(
            std::fs::read(a.join(file)).unwrap(),
            std::fs::read(b.join(file)).unwrap(),
            "{file} differs between identical runs"
        );
    }

    let manifest = check_manifest(&a, "train");
    // The flag override gets snapshotted into the stored config.
    assert!(manifest["config"].as_str().unwrap().contains("seed = 7"));
    assert_eq!(manifest["seed"], 7);
}

#[test]
fn eval_reports_per_goal_and_overall() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("train.cfg");
    std::fs::write(
        &cfg,
        "train.n_explore = 20\ntrain.n_gd = 40\ntrain.n_train = 8\ntrain.h_max = 4\n",
    )
    .unwrap();
    let trained = cae(&[
        "train",
        "--env",
        "line-world",
        "--variant",
        "c",
        "--seed",
        "3",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(trained.status.success(), "{}", stderr(&trained));
    let ckpt = artifacts_dir(&trained).join("checkpoint.json");

    let eval_cfg = tmp.path().join("eval.cfg");
    std::fs::write(&eval_cfg, "eval.trials = 20\n").unwrap();
    let out = cae(&[
        "eval",
        "--env",
        "line-world",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--config",
        eval_cfg.to_str().unwrap(),
        "--seed",
        "5",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let dir = artifacts_dir(&out);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("eval_report.json")).unwrap())
            .unwrap();
    assert_eq!(report["trials_per_goal"], 20);
    assert_eq!(report["goals"].as_array().unwrap().len(), 3);
    assert_eq!(report["overall_trials"], 60);
    let csv = std::fs::read_to_string(dir.join("eval_report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3, "header plus one row per goal");
    check_manifest(&dir, "eval");
}

#[test]
fn compare_prints_one_row_per_variant() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cmp.cfg");
    std::fs::write(
        &cfg,
        "train.n_explore = 15\ntrain.n_gd = 20\ntrain.n_train = 4\ntrain.h_max = 4\n\
         eval.trials = 10\n",
    )
    .unwrap();
    let out = cae(&[
        "compare",
        "--env",
        "line-world",
        "--variant",
        "c,a,d,q",
        "--seed",
        "2",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("ordering: "), "{text}");
    let dir = artifacts_dir(&out);
    let csv = std::fs::read_to_string(dir.join("compare.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 1 + 4, "header plus one row per variant");
    for (line, v) in lines[1..].iter().zip(["c", "a", "d", "q"]) {
        assert!(line.starts_with(&format!("{v},")), "{line}");
    }
    check_manifest(&dir, "compare");
}

#[test]
fn plot_renders_svg_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("train.cfg");
    std::fs::write(
        &cfg,
        "train.n_explore = 20\ntrain.n_gd = 30\ntrain.n_train = 6\ntrain.h_max = 6\n\
         train.snapshot_every = 10\n",
    )
    .unwrap();
    let trained = cae(&[
        "train",
        "--env",
        "frozen-lake",
        "--variant",
        "c",
        "--seed",
        "4",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(trained.status.success(), "{}", stderr(&trained));
    let train_dir = artifacts_dir(&trained);
    // Interval snapshots appear alongside the final checkpoint.
    assert!(train_dir.join("checkpoint-00009.json").exists());

    let plot_cfg = tmp.path().join("plot.cfg");
    std::fs::write(&plot_cfg, "plot.h = 4, 6\nplot.goal = (1, 6)\n").unwrap();
    let out = cae(&[
        "plot",
        "--env",
        "frozen-lake",
        "--checkpoint",
        train_dir.join("checkpoint.json").to_str().unwrap(),
        "--config",
        plot_cfg.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let dir = artifacts_dir(&out);
    for file in [
        "heatmap.svg",
        "heatmap.csv",
        "trajectory_h4.svg",
        "trajectory_h6.svg",
        "trajectory_h6.csv",
        "policy.svg",
        "learning_curve.svg",
        "loss_curve.svg",
    ] {
        let path = dir.join(file);
        assert!(path.exists(), "{file} missing");
        if file.ends_with(".svg") {
            let text = std::fs::read_to_string(&path).unwrap();
            assert!(text.starts_with("<svg"), "{file} is not SVG");
            assert!(text.trim_end().ends_with("</svg>"), "{file} unterminated");
        }
    }
    check_manifest(&dir, "plot");

    // Oracle-backed plotting needs no checkpoint on enumerable layouts.
    let out = cae(&[
        "plot",
        "--env",
        "line-world",
        "--h-max",
        "4",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let dir = artifacts_dir(&out);
    assert!(dir.join("heatmap.svg").exists());
    assert!(dir.join("policy.svg").exists());
}

#[test]
fn usage_errors_exit_one_and_runtime_failures_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out_flag = tmp.path().to_str().unwrap().to_string();

    // Missing required input.
    let out = cae(&["eval", "--env", "line-world", "--out", &out_flag]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
    assert!(stderr(&out).contains("--checkpoint"));

    // Unknown environment.
    let out = cae(&["train", "--env", "warp-zone", "--out", &out_flag]);
    assert_eq!(out.status.code(), Some(1));

    // Unknown config key fails closed.
    let cfg = tmp.path().join("bad.cfg");
    std::fs::write(&cfg, "train.typo = 1\n").unwrap();
    let out = cae(&[
        "train",
        "--env",
        "line-world",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        &out_flag,
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("train.typo"));

    // Exact tables of a continuous environment cannot exist.
    let out = cae(&["oracle", "--env", "dubins-small", "--out", &out_flag]);
    assert_eq!(out.status.code(), Some(1));

    // Unknown subcommand is a usage error.
    let out = cae(&["transmogrify"]);
    assert_eq!(out.status.code(), Some(1));

    // A diverging run is a runtime failure.
    let cfg = tmp.path().join("diverge.cfg");
    std::fs::write(
        &cfg,
        "train.backend = mlp\ntrain.optimizer = adam\ntrain.lr = 1e308\n\
         train.n_explore = 10\ntrain.n_gd = 5\ntrain.n_train = 4\ntrain.h_max = 3\n",
    )
    .unwrap();
    let out = cae(&[
        "train",
        "--env",
        "line-world",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        &out_flag,
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("diverged"));

    // Help is not an error.
    let out = cae(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn train_preloads_recorded_episodes() {
    let tmp = tempfile::tempdir().unwrap();
    // Record a buffer by hand through the library, then feed it back in.
    use cae_core::env::{Environment, LineWorld};
    use cae_core::replay::{Episode, ReplayBuffer, TransitionRec};
    let env = LineWorld::new(3).unwrap();
    let mut buffer = ReplayBuffer::new();
    let mut rng = cae_core::rng::stream_rng(0, cae_core::rng::Stream::EnvDynamics, 0);
    for index in 0..5u64 {
        let mut s = cae_core::env::State::cell(0, 0);
        let mut steps = Vec::new();
        for a in [1, 1] {
            let out = env.step(&s, a, &mut rng);
            steps.push(TransitionRec {
                s,
                a,
                s_next: out.next,
                terminal_sink: out.terminal_sink,
            });
            s = out.next;
        }
        buffer
            .append(
                Episode {
                    index,
                    behavior_goal: None,
                    steps,
                },
                env.max_episode_length(),
            )
            .unwrap();
    }
    let replay_path = tmp.path().join("episodes.jsonl");
    let mut bytes = Vec::new();
    buffer.save_jsonl(&mut bytes).unwrap();
    std::fs::write(&replay_path, bytes).unwrap();

    let cfg = tmp.path().join("train.cfg");
    std::fs::write(
        &cfg,
        "train.n_explore = 0\ntrain.n_gd = 10\ntrain.n_train = 2\ntrain.h_max = 4\n",
    )
    .unwrap();
    let out = cae(&[
        "train",
        "--env",
        "line-world",
        "--config",
        cfg.to_str().unwrap(),
        "--replay-in",
        replay_path.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("preloaded 5 episodes"));
}
