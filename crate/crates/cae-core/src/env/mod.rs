//! Discrete-action environments.
//!
//! Every environment exposes sampling dynamics (`step`), a goal predicate, a
//! hindsight goal projection, a metric, and an input encoding for function
//! approximation. Environments with enumerable state spaces additionally
//! produce a dense transition model ([`MdpSpec`]) for exact dynamic
//! programming.

pub mod checkerboard;
pub mod dubins;
pub mod frozen_lake;
pub mod line_world;
pub mod mdp;
pub mod mini_maze;

pub use checkerboard::Checkerboard;
pub use dubins::{DubinsCar, Wall};
pub use frozen_lake::FrozenLake;
pub use line_world::LineWorld;
pub use mdp::MdpSpec;
pub use mini_maze::MiniMaze;

use crate::config::ConfigMap;
use crate::{Error, Result};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type ActionId = usize;

/// Step budget. `h = 0` means "no steps left".
pub type Horizon = usize;

/// Environment state. Grid worlds use integer cells; the car uses a planar
/// pose with heading in degrees, normalized to `[0, 360)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum State {
    Cell { x: i32, y: i32 },
    Pose { x: f64, y: f64, heading: f64 },
}

impl State {
    pub fn cell(x: i32, y: i32) -> State {
        State::Cell { x, y }
    }

    /// Compact one-token rendering used in CSV columns: `x|y` or `x|y|heading`.
    pub fn render(&self) -> String {
        match self {
            State::Cell { x, y } => format!("{x}|{y}"),
            State::Pose { x, y, heading } => format!("{x}|{y}|{heading}"),
        }
    }
}

/// Goal description. Grid worlds target an exact cell; the car targets a
/// position ball (position only, heading free).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Goal {
    Cell { x: i32, y: i32 },
    Region { x: f64, y: f64 },
}

impl Goal {
    pub fn cell(x: i32, y: i32) -> Goal {
        Goal::Cell { x, y }
    }

    pub fn render(&self) -> String {
        match self {
            Goal::Cell { x, y } => format!("{x}|{y}"),
            Goal::Region { x, y } => format!("{x}|{y}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    L1,
    Linf,
}

/// Static description of an environment, serialized into run manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: String,
    pub action_count: usize,
    pub state_dim: usize,
    pub goal_dim: usize,
    /// Inclusive per-dimension state bounds.
    pub bounds: Vec<(f64, f64)>,
    pub metric: Metric,
    pub max_episode_length: usize,
    pub deterministic: bool,
}

/// Result of one transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub next: State,
    /// The next state is absorbing and satisfies no goal it does not already
    /// satisfy: the episode is over (frozen-lake hole, checkerboard off-board
    /// sink). Goal checks still apply to the state itself.
    pub terminal_sink: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartMode {
    /// Start-state distribution used while collecting training episodes.
    Train,
    /// Deterministic start used by evaluation protocols.
    Test,
}

/// Difficulty bucket for evaluation goals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stratum {
    Easy,
    Medium,
    Hard,
}

impl std::fmt::Display for Stratum {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stratum::Easy => "easy",
            Stratum::Medium => "medium",
            Stratum::Hard => "hard",
        })
    }
}

pub trait Environment: Send + Sync {
    fn spec(&self) -> &EnvSpec;

    fn action_count(&self) -> usize {
        self.spec().action_count
    }

    fn max_episode_length(&self) -> usize {
        self.spec().max_episode_length
    }

    /// Goal predicate `G(s, g)`.
    fn goal_check(&self, s: &State, g: &Goal) -> bool;

    /// Sample one transition.
    fn step(&self, s: &State, a: ActionId, rng: &mut ChaCha8Rng) -> StepOutcome;

    fn initial_state(&self, mode: StartMode, rng: &mut ChaCha8Rng) -> State;

    /// Training-time goal distribution.
    fn sample_goal(&self, rng: &mut ChaCha8Rng) -> Goal;

    /// Goal distribution restricted to `{g : d(s, g) <= r}`, used by
    /// reachability-guided relabeling. Never empty: the goal achieved at `s`
    /// itself has distance 0.
    fn sample_goal_within(&self, s: &State, r: f64, rng: &mut ChaCha8Rng) -> Goal;

    /// The goal that standing at `s` achieves (hindsight projection).
    fn achieved_goal(&self, s: &State) -> Goal;

    /// Environment metric `d(s, g)` (straight-line grid or box distance; it
    /// deliberately ignores obstacles).
    fn distance(&self, s: &State, g: &Goal) -> f64;

    /// Dense transition model for exact dynamic programming. `None` when the
    /// state space is not enumerable (or enumeration is not enabled).
    fn enumerate(&self) -> Option<MdpSpec> {
        None
    }

    /// Write the `(s, g, scalar)` feature encoding into `out` (cleared
    /// first). `scalar` carries the normalized step budget or the discount,
    /// depending on the variant being learned.
    fn encode(&self, s: &State, g: &Goal, scalar: f64, out: &mut Vec<f64>);

    fn encoded_len(&self) -> usize;

    /// Fixed evaluation goals with difficulty strata.
    fn eval_goals(&self) -> Vec<(Goal, Stratum)>;

    /// Interior wall segments of planar arenas, for map rendering. Grid
    /// worlds express obstacles through their transition model instead.
    fn planar_walls(&self) -> &[Wall] {
        &[]
    }

    /// Capture radius of the goal predicate; 0 for exact-match goals.
    fn goal_radius(&self) -> f64 {
        0.0
    }

    fn test_start(&self) -> State {
        let mut rng = crate::rng::stream_rng(0, crate::rng::Stream::Eval, 0);
        self.initial_state(StartMode::Test, &mut rng)
    }
}

/// Instantiate an environment by name, applying `env.*` keys from `cfg`.
///
/// Known names: `line-world`, `frozen-lake`, `checkerboard`, `mini-maze`,
/// `dubins`, `dubins-small`, `dubins-open5`.
pub fn make_env(name: &str, cfg: &mut ConfigMap) -> Result<Box<dyn Environment>> {
    let env: Box<dyn Environment> = match name {
        "line-world" => {
            let n = cfg.take_parsed::<usize>("env.cells")?.unwrap_or(3);
            Box::new(LineWorld::new(n)?)
        }
        "frozen-lake" => Box::new(FrozenLake::from_config(cfg)?),
        "checkerboard" => {
            let n = cfg.take_parsed::<i32>("env.size")?.unwrap_or(5);
            Box::new(Checkerboard::new(n)?)
        }
        "mini-maze" => Box::new(MiniMaze::from_config(cfg)?),
        "dubins" => Box::new(DubinsCar::from_config(DubinsCar::standard(), cfg)?),
        "dubins-small" => Box::new(DubinsCar::from_config(DubinsCar::small(), cfg)?),
        "dubins-open5" => Box::new(DubinsCar::from_config(DubinsCar::open5(), cfg)?),
        other => {
            return Err(Error::config(format!(
                "unknown environment `{other}` (known: line-world, frozen-lake, checkerboard, \
                 mini-maze, dubins, dubins-small, dubins-open5)"
            )))
        }
    };
    Ok(env)
}

/// Push a one-hot grid encoding of `(x, y)` onto `out`.
pub(crate) fn push_one_hot(out: &mut Vec<f64>, width: i32, height: i32, x: i32, y: i32) {
    let n = (width * height) as usize;
    let base = out.len();
    out.resize(base + n, 0.0);
    if x >= 0 && x < width && y >= 0 && y < height {
        out[base + (y * width + x) as usize] = 1.0;
    }
}
