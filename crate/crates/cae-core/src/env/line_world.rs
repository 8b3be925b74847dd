//! One-dimensional chain of cells with move-left / move-right actions.
//!
//! Deterministic, boundary-clamped: `x' = clamp(x + delta, 0, n-1)`. The
//! 3-cell default is the smallest world exhibiting the budget-dependent
//! policy pathologies the oracle tests pin down; longer chains double as
//! detour benchmarks.

use super::{
    ActionId, EnvSpec, Environment, Goal, MdpSpec, Metric, StartMode, State, StepOutcome, Stratum,
};
use crate::{Error, Result};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub struct LineWorld {
    n: i32,
    spec: EnvSpec,
}

/// Action 0 moves left (-1), action 1 moves right (+1).
pub const LEFT: ActionId = 0;
pub const RIGHT: ActionId = 1;

impl LineWorld {
    pub fn new(n: usize) -> Result<LineWorld> {
        if n < 2 {
            return Err(Error::config("line-world needs at least 2 cells"));
        }
        let spec = EnvSpec {
            name: format!("line-world-{n}"),
            action_count: 2,
            state_dim: 1,
            goal_dim: 1,
            bounds: vec![(0.0, (n - 1) as f64)],
            metric: Metric::L1,
            max_episode_length: (4 * n).max(20),
            deterministic: true,
        };
        Ok(LineWorld { n: n as i32, spec })
    }

    fn delta(a: ActionId) -> i32 {
        match a {
            LEFT => -1,
            _ => 1,
        }
    }
}

impl Environment for LineWorld {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn goal_check(&self, s: &State, g: &Goal) -> bool {
        matches!((s, g), (State::Cell { x, .. }, Goal::Cell { x: gx, .. }) if x == gx)
    }

    fn step(&self, s: &State, a: ActionId, _rng: &mut ChaCha8Rng) -> StepOutcome {
        let State::Cell { x, .. } = *s else {
            unreachable!("line-world state is a cell")
        };
        let nx = (x + Self::delta(a)).clamp(0, self.n - 1);
        StepOutcome {
            next: State::cell(nx, 0),
            terminal_sink: false,
        }
    }

    fn initial_state(&self, mode: StartMode, rng: &mut ChaCha8Rng) -> State {
        match mode {
            StartMode::Test => State::cell(0, 0),
            StartMode::Train => State::cell(rng.random_range(0..self.n), 0),
        }
    }

    fn sample_goal(&self, rng: &mut ChaCha8Rng) -> Goal {
        Goal::cell(rng.random_range(0..self.n), 0)
    }

    fn sample_goal_within(&self, s: &State, r: f64, rng: &mut ChaCha8Rng) -> Goal {
        let State::Cell { x, .. } = *s else {
            unreachable!()
        };
        let lo = (x - r.floor() as i32).max(0);
        let hi = (x + r.floor() as i32).min(self.n - 1);
        Goal::cell(rng.random_range(lo..=hi), 0)
    }

    fn achieved_goal(&self, s: &State) -> Goal {
        let State::Cell { x, .. } = *s else {
            unreachable!()
        };
        Goal::cell(x, 0)
    }

    fn distance(&self, s: &State, g: &Goal) -> f64 {
        match (s, g) {
            (State::Cell { x, .. }, Goal::Cell { x: gx, .. }) => (x - gx).abs() as f64,
            _ => f64::INFINITY,
        }
    }

    fn enumerate(&self) -> Option<MdpSpec> {
        let states: Vec<State> = (0..self.n).map(|x| State::cell(x, 0)).collect();
        let goals: Vec<Goal> = (0..self.n).map(|x| Goal::cell(x, 0)).collect();
        let kernel = (0..self.n)
            .map(|x| {
                (0..2)
                    .map(|a| {
                        let nx = (x + Self::delta(a)).clamp(0, self.n - 1);
                        vec![(nx as usize, 1.0)]
                    })
                    .collect()
            })
            .collect();
        let terminal = vec![false; self.n as usize];
        Some(
            MdpSpec::build(
                &self.spec.name,
                2,
                states,
                goals,
                kernel,
                terminal,
                self.spec.max_episode_length,
                |s, g| self.goal_check(s, g),
            )
            .expect("line-world model is well-formed"),
        )
    }

    fn encode(&self, s: &State, g: &Goal, scalar: f64, out: &mut Vec<f64>) {
        out.clear();
        super::push_one_hot(out, self.n, 1, if let State::Cell { x, .. } = *s { x } else { -1 }, 0);
        super::push_one_hot(out, self.n, 1, if let Goal::Cell { x, .. } = *g { x } else { -1 }, 0);
        out.push(scalar);
    }

    fn encoded_len(&self) -> usize {
        2 * self.n as usize + 1
    }

    fn eval_goals(&self) -> Vec<(Goal, Stratum)> {
        (0..self.n)
            .map(|x| {
                let stratum = if x <= 1 {
                    Stratum::Easy
                } else if x <= self.n / 2 {
                    Stratum::Medium
                } else {
                    Stratum::Hard
                };
                (Goal::cell(x, 0), stratum)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    #[test]
    fn clamps_at_both_ends() {
        let env = LineWorld::new(3).unwrap();
        let mut rng = stream_rng(0, Stream::EnvDynamics, 0);
        let at = |x| State::cell(x, 0);
        assert_eq!(env.step(&at(0), LEFT, &mut rng).next, at(0));
        assert_eq!(env.step(&at(0), RIGHT, &mut rng).next, at(1));
        assert_eq!(env.step(&at(2), RIGHT, &mut rng).next, at(2));
    }

    #[test]
    fn kernel_rows_sum_to_one() {
        let mdp = LineWorld::new(5).unwrap().enumerate().unwrap();
        for rows in &mdp.kernel {
            for row in rows {
                let mass: f64 = row.iter().map(|&(_, p)| p).sum();
                assert!((mass - 1.0).abs() <= 1e-12);
            }
        }
        assert!(mdp.deterministic);
    }
}
