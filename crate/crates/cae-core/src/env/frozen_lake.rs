//! Slippery grid with terminal holes.
//!
//! 5 columns x 7 rows by default, with two vertical 3x1 holes flanking a
//! one-cell-wide corridor at x = 1. The corridor is the shortest route from
//! the test start (1,0) to the test goal (1,6) — 6 steps, each slip beside a
//! hole fatal — while the detour along the right edge is twice as long and
//! never borders a hole. Moves go in the intended direction with probability
//! 0.8 and slip to each perpendicular with probability 0.1; a move blocked by
//! the boundary leaves the agent in place with that probability mass. Holes
//! end the episode.

use super::{
    ActionId, EnvSpec, Environment, Goal, MdpSpec, Metric, StartMode, State, StepOutcome, Stratum,
};
use crate::config::{parse_cell, parse_cell_list, ConfigMap};
use crate::{Error, Result};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const UP: ActionId = 0;
pub const DOWN: ActionId = 1;
pub const LEFT: ActionId = 2;
pub const RIGHT: ActionId = 3;

const DIRS: [(i32, i32); 4] = [(0, 1), (0, -1), (-1, 0), (1, 0)];

/// Perpendicular slip directions for each intended direction.
const PERP: [[usize; 2]; 4] = [[LEFT, RIGHT], [LEFT, RIGHT], [UP, DOWN], [UP, DOWN]];

pub struct FrozenLake {
    width: i32,
    height: i32,
    holes: Vec<(i32, i32)>,
    test_start: (i32, i32),
    test_goal: (i32, i32),
    /// Probability of moving in the intended direction; the remainder splits
    /// evenly between the two perpendiculars.
    slip_intended: f64,
    spec: EnvSpec,
}

impl FrozenLake {
    pub fn standard() -> FrozenLake {
        FrozenLake::new(
            5,
            7,
            vec![(0, 2), (0, 3), (0, 4), (2, 2), (2, 3), (2, 4)],
            (1, 0),
            (1, 6),
            0.8,
            50,
        )
        .expect("standard layout is valid")
    }

    pub fn new(
        width: i32,
        height: i32,
        holes: Vec<(i32, i32)>,
        test_start: (i32, i32),
        test_goal: (i32, i32),
        slip_intended: f64,
        max_episode_length: usize,
    ) -> Result<FrozenLake> {
        if width < 1 || height < 1 {
            return Err(Error::config("frozen-lake needs positive dimensions"));
        }
        if !(0.0..=1.0).contains(&slip_intended) {
            return Err(Error::config("env.slip must be in [0, 1]"));
        }
        let inside = |&(x, y): &(i32, i32)| x >= 0 && x < width && y >= 0 && y < height;
        if !holes.iter().all(inside) {
            return Err(Error::config("hole outside the grid"));
        }
        if !inside(&test_start) || !inside(&test_goal) {
            return Err(Error::config("start/goal outside the grid"));
        }
        if holes.contains(&test_start) || holes.contains(&test_goal) {
            return Err(Error::config("start/goal must not be holes"));
        }
        let spec = EnvSpec {
            name: "frozen-lake".to_string(),
            action_count: 4,
            state_dim: 2,
            goal_dim: 2,
            bounds: vec![(0.0, (width - 1) as f64), (0.0, (height - 1) as f64)],
            metric: Metric::L1,
            max_episode_length,
            deterministic: false,
        };
        Ok(FrozenLake {
            width,
            height,
            holes,
            test_start,
            test_goal,
            slip_intended,
            spec,
        })
    }

    pub fn from_config(cfg: &mut ConfigMap) -> Result<FrozenLake> {
        let d = FrozenLake::standard();
        let width = cfg.take_parsed::<i32>("env.width")?.unwrap_or(d.width);
        let height = cfg.take_parsed::<i32>("env.height")?.unwrap_or(d.height);
        let holes = match cfg.take("env.holes") {
            Some(v) => parse_cell_list(&v)?,
            None => d.holes.clone(),
        };
        let start = match cfg.take("env.test_start") {
            Some(v) => parse_cell(&v)?,
            None => d.test_start,
        };
        let goal = match cfg.take("env.test_goal") {
            Some(v) => parse_cell(&v)?,
            None => d.test_goal,
        };
        let slip = cfg.take_parsed::<f64>("env.slip")?.unwrap_or(d.slip_intended);
        let max_len = cfg
            .take_parsed::<usize>("env.max_episode_length")?
            .unwrap_or(d.spec.max_episode_length);
        FrozenLake::new(width, height, holes, start, goal, slip, max_len)
    }

    pub fn is_hole(&self, x: i32, y: i32) -> bool {
        self.holes.contains(&(x, y))
    }

    pub fn holes(&self) -> &[(i32, i32)] {
        &self.holes
    }

    pub fn dims(&self) -> (i32, i32) {
        (self.width, self.height)
    }

    pub fn test_goal(&self) -> Goal {
        Goal::cell(self.test_goal.0, self.test_goal.1)
    }

    fn in_bounds(&self, x: i32, y: i32) -> bool {
        x >= 0 && x < self.width && y >= 0 && y < self.height
    }

    /// Apply a movement direction; blocked moves stay in place.
    fn shift(&self, x: i32, y: i32, dir: usize) -> (i32, i32) {
        let (dx, dy) = DIRS[dir];
        let (nx, ny) = (x + dx, y + dy);
        if self.in_bounds(nx, ny) {
            (nx, ny)
        } else {
            (x, y)
        }
    }

    /// Transition distribution of `(s, a)` as (cell, probability) rows.
    fn outcome_rows(&self, x: i32, y: i32, a: ActionId) -> Vec<((i32, i32), f64)> {
        if self.is_hole(x, y) {
            return vec![((x, y), 1.0)];
        }
        let side = (1.0 - self.slip_intended) / 2.0;
        let mut rows: Vec<((i32, i32), f64)> = Vec::with_capacity(3);
        let mut add = |cell: (i32, i32), p: f64| {
            if p == 0.0 {
                return;
            }
            match rows.iter_mut().find(|(c, _)| *c == cell) {
                Some((_, q)) => *q += p,
                None => rows.push((cell, p)),
            }
        };
        add(self.shift(x, y, a), self.slip_intended);
        add(self.shift(x, y, PERP[a][0]), side);
        add(self.shift(x, y, PERP[a][1]), side);
        rows
    }
}

impl Environment for FrozenLake {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn goal_check(&self, s: &State, g: &Goal) -> bool {
        matches!(
            (s, g),
            (State::Cell { x, y }, Goal::Cell { x: gx, y: gy }) if x == gx && y == gy
        )
    }

    fn step(&self, s: &State, a: ActionId, rng: &mut ChaCha8Rng) -> StepOutcome {
        let State::Cell { x, y } = *s else {
            unreachable!("frozen-lake state is a cell")
        };
        let u: f64 = rng.random();
        let side = (1.0 - self.slip_intended) / 2.0;
        let dir = if u < self.slip_intended {
            a
        } else if u < self.slip_intended + side {
            PERP[a][0]
        } else {
            PERP[a][1]
        };
        let (nx, ny) = self.shift(x, y, dir);
        StepOutcome {
            next: State::cell(nx, ny),
            terminal_sink: self.is_hole(nx, ny),
        }
    }

    fn initial_state(&self, mode: StartMode, rng: &mut ChaCha8Rng) -> State {
        match mode {
            StartMode::Test => State::cell(self.test_start.0, self.test_start.1),
            StartMode::Train => loop {
                let x = rng.random_range(0..self.width);
                let y = rng.random_range(0..self.height);
                if !self.is_hole(x, y) {
                    return State::cell(x, y);
                }
            },
        }
    }

    fn sample_goal(&self, rng: &mut ChaCha8Rng) -> Goal {
        Goal::cell(
            rng.random_range(0..self.width),
            rng.random_range(0..self.height),
        )
    }

    fn sample_goal_within(&self, s: &State, r: f64, rng: &mut ChaCha8Rng) -> Goal {
        let State::Cell { x, y } = *s else {
            unreachable!()
        };
        let r = r.floor() as i32;
        // Uniform over cells with L1 distance <= r, by rejection inside the
        // bounding box; never empty because (x, y) itself qualifies.
        loop {
            let gx = rng.random_range((x - r).max(0)..=(x + r).min(self.width - 1));
            let gy = rng.random_range((y - r).max(0)..=(y + r).min(self.height - 1));
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
        let cells: Vec<(i32, i32)> = (0..self.height)
            .flat_map(|y| (0..self.width).map(move |x| (x, y)))
            .collect();
        let states: Vec<State> = cells.iter().map(|&(x, y)| State::cell(x, y)).collect();
        let goals: Vec<Goal> = cells.iter().map(|&(x, y)| Goal::cell(x, y)).collect();
        let index = |x: i32, y: i32| (y * self.width + x) as usize;
        let kernel = cells
            .iter()
            .map(|&(x, y)| {
                (0..4)
                    .map(|a| {
                        self.outcome_rows(x, y, a)
                            .into_iter()
                            .map(|((nx, ny), p)| (index(nx, ny), p))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let terminal = cells.iter().map(|&(x, y)| self.is_hole(x, y)).collect();
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
            .expect("frozen-lake model is well-formed"),
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
        super::push_one_hot(out, self.width, self.height, sx, sy);
        super::push_one_hot(out, self.width, self.height, gx, gy);
        out.push(scalar);
    }

    fn encoded_len(&self) -> usize {
        2 * (self.width * self.height) as usize + 1
    }

    fn eval_goals(&self) -> Vec<(Goal, Stratum)> {
        let start = State::cell(self.test_start.0, self.test_start.1);
        (0..self.height)
            .flat_map(|y| (0..self.width).map(move |x| (x, y)))
            .filter(|&(x, y)| !self.is_hole(x, y))
            .map(|(x, y)| {
                let d = self.distance(&start, &Goal::cell(x, y));
                let stratum = if d <= 4.0 {
                    Stratum::Easy
                } else if d <= 8.0 {
                    Stratum::Medium
                } else {
                    Stratum::Hard
                };
                (Goal::cell(x, y), stratum)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    #[test]
    fn corner_move_masses() {
        // From (0,0) moving up: intended (0,1) 0.8, right-slip (1,0) 0.1,
        // left-slip blocked by the boundary so 0.1 stays at (0,0).
        let env = FrozenLake::standard();
        let rows = env.outcome_rows(0, 0, UP);
        let p_of = |cell: (i32, i32)| {
            rows.iter()
                .find(|(c, _)| *c == cell)
                .map_or(0.0, |&(_, p)| p)
        };
        assert!((p_of((0, 1)) - 0.8).abs() < 1e-15);
        assert!((p_of((1, 0)) - 0.1).abs() < 1e-15);
        assert!((p_of((0, 0)) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn corridor_slips_are_fatal() {
        let env = FrozenLake::standard();
        let rows = env.outcome_rows(1, 2, UP);
        let fatal: f64 = rows
            .iter()
            .filter(|&&((x, y), _)| env.is_hole(x, y))
            .map(|&(_, p)| p)
            .sum();
        assert!((fatal - 0.2).abs() < 1e-15);
    }

    #[test]
    fn kernel_rows_sum_to_one() {
        let mdp = FrozenLake::standard().enumerate().unwrap();
        for rows in &mdp.kernel {
            for row in rows {
                let mass: f64 = row.iter().map(|&(_, p)| p).sum();
                assert!((mass - 1.0).abs() <= 1e-12);
            }
        }
        assert!(!mdp.deterministic);
    }

    #[test]
    fn holes_are_absorbing_in_the_model() {
        let env = FrozenLake::standard();
        let mdp = env.enumerate().unwrap();
        let hole = mdp.state_index(&State::cell(0, 2)).unwrap();
        assert!(mdp.terminal[hole]);
        for a in 0..4 {
            assert_eq!(mdp.kernel[hole][a], vec![(hole, 1.0)]);
        }
    }

    #[test]
    fn train_starts_avoid_holes() {
        let env = FrozenLake::standard();
        let mut rng = stream_rng(1, Stream::EnvDynamics, 0);
        for _ in 0..200 {
            let State::Cell { x, y } = env.initial_state(StartMode::Train, &mut rng) else {
                unreachable!()
            };
            assert!(!env.is_hole(x, y));
        }
    }

    #[test]
    fn direct_and_detour_path_lengths() {
        // The layout promises: risky corridor of length exactly 6 from the
        // test start to the test goal, and a hole-free detour of length <= 24.
        let env = FrozenLake::standard();
        let start = State::cell(1, 0);
        assert_eq!(env.distance(&start, &env.test_goal()), 6.0);
        let detour = [
            (1, 0),
            (2, 0),
            (3, 0),
            (3, 1),
            (3, 2),
            (3, 3),
            (3, 4),
            (3, 5),
            (3, 6),
            (2, 6),
            (1, 6),
        ];
        assert!(detour.len() - 1 <= 24);
        for w in detour.windows(2) {
            let ((ax, ay), (bx, by)): ((i32, i32), (i32, i32)) = (w[0], w[1]);
            assert_eq!((ax - bx).abs() + (ay - by).abs(), 1);
            assert!(!env.is_hole(bx, by));
        }
    }
}
