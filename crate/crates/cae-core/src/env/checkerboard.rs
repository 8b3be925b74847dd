//! Checkerboard walk: N x N cells, deterministic cardinal moves, and a
//! terminal off-board sink.
//!
//! Stepping off the board ends the episode in a sink that satisfies no goal.
//! Every surviving move therefore flips the cell color `(x + y) mod 2`, which
//! is exactly the parity obstruction that makes exact-arrival values
//! oscillate in the step budget while within-budget values stay monotone.

use super::{
    ActionId, EnvSpec, Environment, Goal, MdpSpec, Metric, StartMode, State, StepOutcome, Stratum,
};
use crate::{Error, Result};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const UP: ActionId = 0;
pub const DOWN: ActionId = 1;
pub const LEFT: ActionId = 2;
pub const RIGHT: ActionId = 3;

const DIRS: [(i32, i32); 4] = [(0, 1), (0, -1), (-1, 0), (1, 0)];

/// Off-board sink state.
pub const SINK: State = State::Cell { x: -1, y: -1 };

pub struct Checkerboard {
    n: i32,
    spec: EnvSpec,
}

impl Checkerboard {
    pub fn new(n: i32) -> Result<Checkerboard> {
        if n < 2 {
            return Err(Error::config("checkerboard needs size >= 2"));
        }
        let spec = EnvSpec {
            name: format!("checkerboard-{n}"),
            action_count: 4,
            state_dim: 2,
            goal_dim: 2,
            bounds: vec![(0.0, (n - 1) as f64), (0.0, (n - 1) as f64)],
            metric: Metric::L1,
            max_episode_length: (4 * n * n) as usize,
            deterministic: true,
        };
        Ok(Checkerboard { n, spec })
    }

    fn on_board(&self, x: i32, y: i32) -> bool {
        x >= 0 && x < self.n && y >= 0 && y < self.n
    }
}

impl Environment for Checkerboard {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn goal_check(&self, s: &State, g: &Goal) -> bool {
        matches!(
            (s, g),
            (State::Cell { x, y }, Goal::Cell { x: gx, y: gy }) if x == gx && y == gy
        )
    }

    fn step(&self, s: &State, a: ActionId, _rng: &mut ChaCha8Rng) -> StepOutcome {
        let State::Cell { x, y } = *s else {
            unreachable!("checkerboard state is a cell")
        };
        if !self.on_board(x, y) {
            return StepOutcome {
                next: SINK,
                terminal_sink: true,
            };
        }
        let (dx, dy) = DIRS[a];
        let (nx, ny) = (x + dx, y + dy);
        if self.on_board(nx, ny) {
            StepOutcome {
                next: State::cell(nx, ny),
                terminal_sink: false,
            }
        } else {
            StepOutcome {
                next: SINK,
                terminal_sink: true,
            }
        }
    }

    fn initial_state(&self, mode: StartMode, rng: &mut ChaCha8Rng) -> State {
        match mode {
            StartMode::Test => State::cell(0, 0),
            StartMode::Train => State::cell(
                rng.random_range(0..self.n),
                rng.random_range(0..self.n),
            ),
        }
    }

    fn sample_goal(&self, rng: &mut ChaCha8Rng) -> Goal {
        Goal::cell(rng.random_range(0..self.n), rng.random_range(0..self.n))
    }

    fn sample_goal_within(&self, s: &State, r: f64, rng: &mut ChaCha8Rng) -> Goal {
        let State::Cell { x, y } = *s else {
            unreachable!()
        };
        if !self.on_board(x, y) {
            return Goal::cell(0, 0);
        }
        let r = r.floor() as i32;
        loop {
            let gx = rng.random_range((x - r).max(0)..=(x + r).min(self.n - 1));
            let gy = rng.random_range((y - r).max(0)..=(y + r).min(self.n - 1));
            if (gx - x).abs() + (gy - y).abs() <= r {
                return Goal::cell(gx, gy);
            }
        }
    }

    fn achieved_goal(&self, s: &State) -> Goal {
        let State::Cell { x, y } = *s else {
            unreachable!()
        };
        Goal::cell(x, y)
    }

    fn distance(&self, s: &State, g: &Goal) -> f64 {
        match (s, g) {
            (State::Cell { x, y }, Goal::Cell { x: gx, y: gy }) => {
                ((x - gx).abs() + (y - gy).abs()) as f64
            }
            _ => f64::INFINITY,
        }
    }

    fn enumerate(&self) -> Option<MdpSpec> {
        let mut states: Vec<State> = (0..self.n)
            .flat_map(|y| (0..self.n).map(move |x| State::cell(x, y)))
            .collect();
        states.push(SINK);
        let sink_idx = states.len() - 1;
        let goals: Vec<Goal> = (0..self.n)
            .flat_map(|y| (0..self.n).map(move |x| Goal::cell(x, y)))
            .collect();
        let index = |x: i32, y: i32| (y * self.n + x) as usize;
        let mut kernel: Vec<Vec<Vec<(usize, f64)>>> = Vec::with_capacity(states.len());
        for y in 0..self.n {
            for x in 0..self.n {
                kernel.push(
                    (0..4)
                        .map(|a| {
                            let (dx, dy) = DIRS[a];
                            let (nx, ny) = (x + dx, y + dy);
                            if self.on_board(nx, ny) {
                                vec![(index(nx, ny), 1.0)]
                            } else {
                                vec![(sink_idx, 1.0)]
                            }
                        })
                        .collect(),
                );
            }
        }
        kernel.push((0..4).map(|_| vec![(sink_idx, 1.0)]).collect());
        let mut terminal = vec![false; states.len()];
        terminal[sink_idx] = true;
        Some(
            MdpSpec::build(
                &self.spec.name,
                4,
                states,
                goals,
                kernel,
                terminal,
                self.spec.max_episode_length,
                |s, g| self.goal_check(s, g),
            )
            .expect("checkerboard model is well-formed"),
        )
    }

    fn encode(&self, s: &State, g: &Goal, scalar: f64, out: &mut Vec<f64>) {
        out.clear();
        let (sx, sy) = match *s {
            State::Cell { x, y } => (x, y),
            _ => (-1, -1),
        };
        let (gx, gy) = match *g {
            Goal::Cell { x, y } => (x, y),
            _ => (-1, -1),
        };
        super::push_one_hot(out, self.n, self.n, sx, sy);
        super::push_one_hot(out, self.n, self.n, gx, gy);
        out.push(scalar);
    }

    fn encoded_len(&self) -> usize {
        2 * (self.n * self.n) as usize + 1
    }

    fn eval_goals(&self) -> Vec<(Goal, Stratum)> {
        let start = State::cell(0, 0);
        (0..self.n)
            .flat_map(|y| (0..self.n).map(move |x| (x, y)))
            .map(|(x, y)| {
                let d = self.distance(&start, &Goal::cell(x, y));
                let stratum = if d <= 2.0 {
                    Stratum::Easy
                } else if d <= (self.n - 1) as f64 {
                    Stratum::Medium
                } else {
                    Stratum::Hard
                };
                (Goal::cell(x, y), stratum)
            })
            .collect()
    }
}
