//! `cae oracle`: exact value tables by dynamic programming on the
//! environment's enumerated transition model, exported as CSV plus a
//! property summary (monotonicity along the conditioning axis, minimal
//! budgets per goal).

use crate::manifest::RunDir;
use crate::RunArgs;
use cae_core::env::make_env;
use cae_core::learner::TrainConfig;
use cae_core::oracle::{
    compute_a_star, compute_c_star, compute_d_star, compute_q_star, CondAxis, Convergence,
    ExactTable,
};
use cae_core::{par, Result, Variant};
use std::fs::File;
use std::io::{BufWriter, Write};

pub fn run(args: &RunArgs, argv: &[String]) -> Result<()> {
    par::configure_threads(args.threads);
    let (mut cfg, snapshot) = super::load_config(args, args.variant.as_deref())?;
    let env = make_env(&args.env, &mut cfg)?;
    let tc = TrainConfig::from_config(&mut cfg)?;
    cfg.assert_consumed()?;
    let mdp = super::enumerate_or_err(env.as_ref())?;

    let (table, convergence): (ExactTable, Vec<Convergence>) = match tc.variant {
        Variant::C => (compute_c_star(&mdp, tc.h_max), Vec::new()),
        Variant::A => (compute_a_star(&mdp, tc.h_max), Vec::new()),
        Variant::D => {
            let (t, conv) = compute_d_star(&mdp, &tc.gamma_grid)?;
            (t, conv)
        }
        Variant::Q => {
            let (t, conv) = compute_q_star(&mdp, tc.gamma)?;
            (t, vec![conv])
        }
    };

    let mut dir = RunDir::create(&args.out, tc.seed)?;
    let csv_name = format!("{}_star.csv", tc.variant.as_str());
    let mut out = BufWriter::new(File::create(dir.file(&csv_name))?);
    table.write_csv(&mdp, &mut out)?;
    out.flush()?;
    let rows = table.n_states * table.n_actions * table.n_goals * table.axis.len();

    // Monotonicity along the conditioning axis. Guaranteed to hold for the
    // within-budget and discounted-arrival tables; reported as-is for the
    // others (the exact-arrival table is expected to fluctuate).
    let mut violations = 0usize;
    let mut max_violation = 0.0f64;
    for s in 0..table.n_states {
        for a in 0..table.n_actions {
            for g in 0..table.n_goals {
                for k in 1..table.axis.len() {
                    let drop = table.value(s, a, g, k - 1) - table.value(s, a, g, k);
                    if drop > 1e-12 {
                        violations += 1;
                        max_violation = max_violation.max(drop);
                    }
                }
            }
        }
    }

    // Smallest budget at which each goal becomes reachable from the test
    // start (budget-conditioned tables only).
    let min_horizons: Option<Vec<serde_json::Value>> =
        if matches!(table.axis, CondAxis::Horizon { .. }) {
            let start = mdp
                .state_index(&env.test_start())
                .expect("test start is part of the enumerated model");
            Some(
                (0..table.n_goals)
                    .map(|g| {
                        let h = (0..table.axis.len())
                            .find(|&k| table.max_over_actions(start, g, k) > 0.0);
                        serde_json::json!({
                            "goal": mdp.goals[g].render(),
                            "min_horizon": h,
                        })
                    })
                    .collect(),
            )
        } else {
            None
        };

    let axis_json = match &table.axis {
        CondAxis::Horizon { h_max } => serde_json::json!({"kind": "horizon", "h_max": h_max}),
        CondAxis::Gamma { grid } => serde_json::json!({"kind": "gamma", "grid": grid}),
        CondAxis::Fixed { gamma } => serde_json::json!({"kind": "fixed", "gamma": gamma}),
    };
    let summary = serde_json::json!({
        "variant": tc.variant.as_str(),
        "env": env.spec().name,
        "axis": axis_json,
        "rows": rows,
        "monotonicity_violations": violations,
        "max_violation": max_violation,
        "min_horizons": min_horizons,
        "convergence": convergence
            .iter()
            .map(|c| serde_json::json!({
                "converged": c.converged,
                "iterations": c.iterations,
                "residual": c.residual,
            }))
            .collect::<Vec<_>>(),
    });
    std::fs::write(
        dir.file("oracle_summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;

    println!("rows: {rows}");
    println!("violations: {violations}");
    println!("artifacts: {}", dir.path.display());
    dir.finish("oracle", argv, tc.seed, env.spec(), &snapshot)
}
