//! Deterministic maze: grid cells with blocking walls.
//!
//! Moving into a wall or the boundary leaves the agent in place. The default
//! 10x10 layout has two offset wall lines forming an S-shaped corridor, so
//! straight-line distance badly underestimates travel time for goals behind
//! the walls — the regime where budget-aware policies matter.

use super::{
    ActionId, EnvSpec, Environment, Goal, MdpSpec, Metric, StartMode, State, StepOutcome, Stratum,
};
use crate::config::{parse_cell, parse_cell_list, ConfigMap};
use crate::{Error, Result};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::{HashSet, VecDeque};

pub const UP: ActionId = 0;
pub const DOWN: ActionId = 1;
pub const LEFT: ActionId = 2;
pub const RIGHT: ActionId = 3;

const DIRS: [(i32, i32); 4] = [(0, 1), (0, -1), (-1, 0), (1, 0)];

pub struct MiniMaze {
    width: i32,
    height: i32,
    walls: HashSet<(i32, i32)>,
    start: (i32, i32),
    /// BFS travel time from `start` to every free cell (geodesic, not L1).
    geodesic: Vec<Option<u32>>,
    spec: EnvSpec,
}

impl MiniMaze {
    pub fn standard() -> MiniMaze {
        let mut walls = Vec::new();
        for y in 0..=6 {
            walls.push((3, y));
        }
        for y in 3..=9 {
            walls.push((6, y));
        }
        MiniMaze::new(10, 10, walls, (0, 0), 200).expect("standard layout is valid")
    }

    pub fn new(
        width: i32,
        height: i32,
        walls: Vec<(i32, i32)>,
        start: (i32, i32),
        max_episode_length: usize,
    ) -> Result<MiniMaze> {
        if width < 1 || height < 1 {
            return Err(Error::config("mini-maze needs positive dimensions"));
        }
        let walls: HashSet<(i32, i32)> = walls.into_iter().collect();
        let inside = |&(x, y): &(i32, i32)| x >= 0 && x < width && y >= 0 && y < height;
        if !walls.iter().all(inside) {
            return Err(Error::config("wall outside the grid"));
        }
        if !inside(&start) || walls.contains(&start) {
            return Err(Error::config("start must be a free cell"));
        }
        let spec = EnvSpec {
            name: "mini-maze".to_string(),
            action_count: 4,
            state_dim: 2,
            goal_dim: 2,
            bounds: vec![(0.0, (width - 1) as f64), (0.0, (height - 1) as f64)],
            metric: Metric::L1,
            max_episode_length,
            deterministic: true,
        };
        let mut maze = MiniMaze {
            width,
            height,
            walls,
            start,
            geodesic: Vec::new(),
            spec,
        };
        maze.geodesic = maze.bfs_from(start);
        Ok(maze)
    }

    pub fn from_config(cfg: &mut ConfigMap) -> Result<MiniMaze> {
        let d = MiniMaze::standard();
        let width = cfg.take_parsed::<i32>("env.width")?.unwrap_or(d.width);
        let height = cfg.take_parsed::<i32>("env.height")?.unwrap_or(d.height);
        let walls = match cfg.take("env.walls") {
            Some(v) => parse_cell_list(&v)?,
            None => d.walls.iter().copied().collect(),
        };
        let start = match cfg.take("env.start") {
            Some(v) => parse_cell(&v)?,
            None => d.start,
        };
        let max_len = cfg
            .take_parsed::<usize>("env.max_episode_length")?
            .unwrap_or(d.spec.max_episode_length);
        MiniMaze::new(width, height, walls, start, max_len)
    }

    pub fn is_wall(&self, x: i32, y: i32) -> bool {
        self.walls.contains(&(x, y))
    }

    pub fn walls(&self) -> Vec<(i32, i32)> {
        let mut v: Vec<(i32, i32)> = self.walls.iter().copied().collect();
        v.sort_unstable();
        v
    }

    pub fn dims(&self) -> (i32, i32) {
        (self.width, self.height)
    }

    fn free(&self, x: i32, y: i32) -> bool {
        x >= 0 && x < self.width && y >= 0 && y < self.height && !self.is_wall(x, y)
    }

    fn cell_index(&self, x: i32, y: i32) -> usize {
        (y * self.width + x) as usize
    }

    fn bfs_from(&self, from: (i32, i32)) -> Vec<Option<u32>> {
        let mut dist = vec![None; (self.width * self.height) as usize];
        let mut queue = VecDeque::new();
        dist[self.cell_index(from.0, from.1)] = Some(0);
        queue.push_back(from);
        while let Some((x, y)) = queue.pop_front() {
            let d = dist[self.cell_index(x, y)].unwrap();
            for (dx, dy) in DIRS {
                let (nx, ny) = (x + dx, y + dy);
                if self.free(nx, ny) && dist[self.cell_index(nx, ny)].is_none() {
                    dist[self.cell_index(nx, ny)] = Some(d + 1);
                    queue.push_back((nx, ny));
                }
            }
        }
        dist
    }

    fn free_cells(&self) -> Vec<(i32, i32)> {
        (0..self.height)
            .flat_map(|y| (0..self.width).map(move |x| (x, y)))
            .filter(|&(x, y)| !self.is_wall(x, y))
            .collect()
    }
}

impl Environment for MiniMaze {
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
            unreachable!("mini-maze state is a cell")
        };
        let (dx, dy) = DIRS[a];
        let (nx, ny) = (x + dx, y + dy);
        let next = if self.free(nx, ny) {
            State::cell(nx, ny)
        } else {
            State::cell(x, y)
        };
        StepOutcome {
            next,
            terminal_sink: false,
        }
    }

    fn initial_state(&self, mode: StartMode, rng: &mut ChaCha8Rng) -> State {
        match mode {
            StartMode::Test => State::cell(self.start.0, self.start.1),
            StartMode::Train => loop {
                let x = rng.random_range(0..self.width);
                let y = rng.random_range(0..self.height);
                if self.free(x, y) {
                    return State::cell(x, y);
                }
            },
        }
    }

    fn sample_goal(&self, rng: &mut ChaCha8Rng) -> Goal {
        loop {
            let x = rng.random_range(0..self.width);
            let y = rng.random_range(0..self.height);
            if self.free(x, y) {
                return Goal::cell(x, y);
            }
        }
    }

    fn sample_goal_within(&self, s: &State, r: f64, rng: &mut ChaCha8Rng) -> Goal {
        let State::Cell { x, y } = *s else {
            unreachable!()
        };
        let r = r.floor() as i32;
        loop {
            let gx = rng.random_range((x - r).max(0)..=(x + r).min(self.width - 1));
            let gy = rng.random_range((y - r).max(0)..=(y + r).min(self.height - 1));
            if (gx - x).abs() + (gy - y).abs() <= r && self.free(gx, gy) {
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
        let cells = self.free_cells();
        let states: Vec<State> = cells.iter().map(|&(x, y)| State::cell(x, y)).collect();
        let goals: Vec<Goal> = cells.iter().map(|&(x, y)| Goal::cell(x, y)).collect();
        let lookup: std::collections::HashMap<(i32, i32), usize> = cells
            .iter()
            .enumerate()
            .map(|(i, &c)| (c, i))
            .collect();
        let kernel = cells
            .iter()
            .map(|&(x, y)| {
                (0..4)
                    .map(|a| {
                        let (dx, dy) = DIRS[a];
                        let (nx, ny) = (x + dx, y + dy);
                        let target = if self.free(nx, ny) { (nx, ny) } else { (x, y) };
                        vec![(lookup[&target], 1.0)]
                    })
                    .collect()
            })
            .collect();
        let terminal = vec![false; cells.len()];
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
            .expect("mini-maze model is well-formed"),
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
        self.free_cells()
            .into_iter()
            .map(|(x, y)| {
                let stratum = match self.geodesic[self.cell_index(x, y)] {
                    Some(d) if d <= 8 => Stratum::Easy,
                    Some(d) if d <= 20 => Stratum::Medium,
                    _ => Stratum::Hard,
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
    fn walls_block_and_stay() {
        let env = MiniMaze::standard();
        let mut rng = stream_rng(0, Stream::EnvDynamics, 0);
        // (2,0) -> right hits the wall column at x=3.
        let out = env.step(&State::cell(2, 0), RIGHT, &mut rng);
        assert_eq!(out.next, State::cell(2, 0));
        // The corridor above the first wall is open.
        let out = env.step(&State::cell(2, 7), RIGHT, &mut rng);
        assert_eq!(out.next, State::cell(3, 7));
    }

    #[test]
    fn every_free_cell_is_reachable() {
        let env = MiniMaze::standard();
        for (x, y) in env.free_cells() {
            assert!(
                env.geodesic[env.cell_index(x, y)].is_some(),
                "cell ({x},{y}) unreachable"
            );
        }
    }

    #[test]
    fn geodesic_exceeds_l1_behind_walls() {
        let env = MiniMaze::standard();
        let d_l1 = env.distance(&State::cell(0, 0), &Goal::cell(9, 0));
        let d_geo = env.geodesic[env.cell_index(9, 0)].unwrap() as f64;
        assert!(d_geo > d_l1);
    }
}
