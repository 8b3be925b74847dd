//! Dense transition model for enumerable environments.

use super::{Goal, State};
use crate::{Error, Result};
use std::collections::HashMap;

/// Quantization key: coordinates scaled by 1e4 and rounded. Exact for integer
/// cells and for car poses snapped to 0.5-unit / whole-degree grids.
fn key_of(x: f64, y: f64, z: f64) -> (i64, i64, i64) {
    let q = |v: f64| (v * 1e4).round() as i64;
    (q(x), q(y), q(z))
}

fn state_key(s: &State) -> (i64, i64, i64) {
    match *s {
        State::Cell { x, y } => key_of(x as f64, y as f64, 0.0),
        State::Pose { x, y, heading } => key_of(x, y, heading),
    }
}

fn goal_key(g: &Goal) -> (i64, i64, i64) {
    match *g {
        Goal::Cell { x, y } => key_of(x as f64, y as f64, 0.0),
        Goal::Region { x, y } => key_of(x, y, 0.0),
    }
}

/// Enumerated environment: states, goals, sparse transition kernel, goal
/// predicate table and terminal flags. Terminal states carry an absorbing
/// self-loop so every recursion can treat the kernel uniformly.
pub struct MdpSpec {
    pub env_name: String,
    pub action_count: usize,
    pub states: Vec<State>,
    pub goals: Vec<Goal>,
    /// `kernel[s][a]` = `(next state index, probability)` rows, probabilities
    /// summing to 1 within 1e-12.
    pub kernel: Vec<Vec<Vec<(usize, f64)>>>,
    /// `goal_hit[s]` is a `goals.len()`-long predicate row.
    pub goal_hit: Vec<Vec<bool>>,
    /// Entering a terminal state ends the episode; its kernel rows are
    /// self-loops.
    pub terminal: Vec<bool>,
    pub deterministic: bool,
    pub max_episode_length: usize,
    state_index: HashMap<(i64, i64, i64), usize>,
    goal_index: HashMap<(i64, i64, i64), usize>,
}

impl MdpSpec {
    /// Assemble and validate a model. `goal_check` is the environment's goal
    /// predicate, evaluated once per (state, goal) pair.
    pub fn build(
        env_name: &str,
        action_count: usize,
        states: Vec<State>,
        goals: Vec<Goal>,
        kernel: Vec<Vec<Vec<(usize, f64)>>>,
        terminal: Vec<bool>,
        max_episode_length: usize,
        goal_check: impl Fn(&State, &Goal) -> bool,
    ) -> Result<MdpSpec> {
        let n = states.len();
        if kernel.len() != n || terminal.len() != n {
            return Err(Error::contract("kernel/terminal length mismatch"));
        }
        let mut deterministic = true;
        for (s, rows) in kernel.iter().enumerate() {
            if rows.len() != action_count {
                return Err(Error::contract(format!(
                    "state {s} has {} action rows, expected {action_count}",
                    rows.len()
                )));
            }
            for (a, row) in rows.iter().enumerate() {
                let mass: f64 = row.iter().map(|&(_, p)| p).sum();
                if (mass - 1.0).abs() > 1e-12 {
                    return Err(Error::contract(format!(
                        "kernel row (s={s}, a={a}) has mass {mass}"
                    )));
                }
                if row.iter().any(|&(j, p)| j >= n || p < 0.0) {
                    return Err(Error::contract(format!(
                        "kernel row (s={s}, a={a}) has a bad entry"
                    )));
                }
                if row.len() > 1 {
                    deterministic = false;
                }
            }
        }

        let goal_hit: Vec<Vec<bool>> = states
            .iter()
            .map(|s| goals.iter().map(|g| goal_check(s, g)).collect())
            .collect();

        let mut state_index = HashMap::with_capacity(n);
        for (i, s) in states.iter().enumerate() {
            if state_index.insert(state_key(s), i).is_some() {
                return Err(Error::contract(format!("duplicate state {s:?}")));
            }
        }
        let mut goal_index = HashMap::with_capacity(goals.len());
        for (i, g) in goals.iter().enumerate() {
            if goal_index.insert(goal_key(g), i).is_some() {
                return Err(Error::contract(format!("duplicate goal {g:?}")));
            }
        }

        Ok(MdpSpec {
            env_name: env_name.to_string(),
            action_count,
            states,
            goals,
            kernel,
            goal_hit,
            terminal,
            deterministic,
            max_episode_length,
            state_index,
            goal_index,
        })
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn n_goals(&self) -> usize {
        self.goals.len()
    }

    pub fn state_index(&self, s: &State) -> Option<usize> {
        self.state_index.get(&state_key(s)).copied()
    }

    pub fn goal_index(&self, g: &Goal) -> Option<usize> {
        self.goal_index.get(&goal_key(g)).copied()
    }

    /// Most probable successor of `(s, a)`; ties resolve to the lowest state
    /// index.
    pub fn most_likely_next(&self, s: usize, a: usize) -> usize {
        let row = &self.kernel[s][a];
        let mut best = row[0];
        for &(j, p) in &row[1..] {
            if p > best.1 || (p == best.1 && j < best.0) {
                best = (j, p);
            }
        }
        best.0
    }
}
