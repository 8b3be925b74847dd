//! Action selection on top of accessibility values.
//!
//! Three layers: a pure argmax over action values at a fixed step budget, a
//! budget selector that picks the smallest budget whose best value clears a
//! safety fraction of the best achievable anywhere, and an epsilon wrapper
//! for exploration. Adapters expose exact tables and learned nets through
//! one trait so every consumer (rollouts, evaluation, plots) shares the same
//! tie-breaking.

use crate::approx::{Query, TabIdx, ValueNet};
use crate::env::{ActionId, Environment, Goal, MdpSpec, State};
use crate::oracle::ExactTable;
use crate::{Error, Result};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Anything that yields per-action values for `(s, g)` at a step budget
/// (or axis level, for discount-conditioned tables).
pub trait AccessValues {
    fn action_count(&self) -> usize;
    fn action_values(&self, s: &State, g: &Goal, h: usize) -> Vec<f64>;
}

/// Lowest index among the maxima.
pub fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Best action at budget `h`; ties resolve to the lowest action index, the
/// same rule the exact tables use.
pub fn greedy_action<F: AccessValues + ?Sized>(
    f: &F,
    s: &State,
    g: &Goal,
    h: usize,
) -> ActionId {
    argmax_lowest(&f.action_values(s, g, h))
}

/// Budget selection rule: among the viable budgets, take the smallest one
/// whose best action value reaches `alpha` times the best value achievable
/// at any viable budget.
#[derive(Debug, Clone)]
pub struct HorizonSelector {
    pub alpha: f64,
    /// Viable budgets, ascending, all >= 1.
    pub horizons: Vec<usize>,
}

impl HorizonSelector {
    pub fn new(alpha: f64, horizons: Vec<usize>) -> Result<HorizonSelector> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::config(format!("alpha {alpha} must be in (0, 1]")));
        }
        if horizons.is_empty() {
            return Err(Error::config("viable budget set is empty"));
        }
        if horizons[0] < 1 || horizons.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config(
                "viable budgets must be >= 1 and strictly ascending",
            ));
        }
        Ok(HorizonSelector { alpha, horizons })
    }

    /// Default rule: every budget from 1 to `h_max`, alpha = 0.9.
    pub fn standard(h_max: usize) -> HorizonSelector {
        HorizonSelector::new(0.9, (1..=h_max).collect()).expect("static bounds")
    }
}

/// Budgets from the metric distance (rounded up, floored at 1) to `h_max`:
/// values below the straight-line distance cannot succeed, so skipping them
/// saves lookups in large budget sets. Falls back to `{h_max}` when the
/// distance already exceeds the cap.
pub fn distance_floored_horizons(
    env: &dyn Environment,
    s: &State,
    g: &Goal,
    h_max: usize,
) -> Vec<usize> {
    let lo = (env.distance(s, g).ceil() as usize).max(1);
    if lo > h_max {
        vec![h_max]
    } else {
        (lo..=h_max).collect()
    }
}

/// Smallest viable budget whose best value meets `alpha` times the best
/// value over all viable budgets. All-zero values qualify every budget, so
/// the first viable budget comes back.
pub fn select_horizon<F: AccessValues + ?Sized>(
    f: &F,
    s: &State,
    g: &Goal,
    cfg: &HorizonSelector,
) -> usize {
    let maxes: Vec<f64> = cfg
        .horizons
        .iter()
        .map(|&h| {
            f.action_values(s, g, h)
                .into_iter()
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let best = maxes.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    for (&h, &v) in cfg.horizons.iter().zip(&maxes) {
        if v >= cfg.alpha * best {
            return h;
        }
    }
    *cfg.horizons.last().expect("validated non-empty")
}

/// Budget-free action: greedy at the selected budget.
pub fn horizon_free_action<F: AccessValues + ?Sized>(
    f: &F,
    s: &State,
    g: &Goal,
    cfg: &HorizonSelector,
) -> ActionId {
    greedy_action(f, s, g, select_horizon(f, s, g, cfg))
}

/// With probability `epsilon`, a uniform action (the greedy one included);
/// otherwise the given action. Always consumes at least one draw.
pub fn epsilon_greedy(
    greedy: ActionId,
    epsilon: f64,
    n_actions: usize,
    rng: &mut ChaCha8Rng,
) -> ActionId {
    if rng.random::<f64>() < epsilon {
        rng.random_range(0..n_actions)
    } else {
        greedy
    }
}

/// Exact table viewed through raw states and goals. The third argument of
/// `action_values` is the table's axis level: the step budget for
/// budget-indexed tables, the grid slot for discount-indexed ones.
pub struct TableValues<'a> {
    pub table: &'a ExactTable,
    pub mdp: &'a MdpSpec,
}

impl AccessValues for TableValues<'_> {
    fn action_count(&self) -> usize {
        self.mdp.action_count
    }

    fn action_values(&self, s: &State, g: &Goal, h: usize) -> Vec<f64> {
        let si = self
            .mdp
            .state_index(s)
            .unwrap_or_else(|| panic!("state {} not in the enumerated model", s.render()));
        let gi = self
            .mdp
            .goal_index(g)
            .unwrap_or_else(|| panic!("goal {} not in the enumerated model", g.render()));
        (0..self.mdp.action_count)
            .map(|a| self.table.value(si, a, gi, h))
            .collect()
    }
}

/// Learned net viewed through raw states and goals.
pub struct NetValues<'a> {
    pub net: &'a ValueNet,
    pub env: &'a dyn Environment,
    /// Index maps for the tabular backend; `None` for feature nets.
    pub mdp: Option<&'a MdpSpec>,
    /// Normalizer for the scalar input channel of feature nets.
    pub h_max: usize,
    /// Discount-conditioned and unconditioned nets ignore the requested
    /// budget and always use this `(level, scalar)` pair.
    pub fixed: Option<(usize, f64)>,
}

/// Assemble a lookup for one `(s, g)` pair at a conditioning level: features
/// always (the scalar channel carries the normalized budget or the
/// discount), table indices when an enumerated model is on hand.
pub fn build_query(
    env: &dyn Environment,
    mdp: Option<&MdpSpec>,
    s: &State,
    g: &Goal,
    level: usize,
    scalar: f64,
) -> Query {
    let mut features = Vec::new();
    env.encode(s, g, scalar, &mut features);
    let indices = mdp.map(|m| TabIdx {
        s: m
            .state_index(s)
            .unwrap_or_else(|| panic!("state {} not in the enumerated model", s.render())),
        g: m
            .goal_index(g)
            .unwrap_or_else(|| panic!("goal {} not in the enumerated model", g.render())),
        k: level,
    });
    Query { features, indices }
}

impl NetValues<'_> {
    pub fn query(&self, s: &State, g: &Goal, h: usize) -> Query {
        let (k, scalar) = match self.fixed {
            Some(fixed) => fixed,
            None => (h, h as f64 / self.h_max as f64),
        };
        build_query(self.env, self.mdp, s, g, k, scalar)
    }
}

impl AccessValues for NetValues<'_> {
    fn action_count(&self) -> usize {
        self.env.action_count()
    }

    fn action_values(&self, s: &State, g: &Goal, h: usize) -> Vec<f64> {
        self.net.probs(&self.query(s, g, h))
    }
}

/// Noise-suppressed rollout: each step takes `act(state, remaining)` and
/// jumps to the most probable successor. Stops on goal, dead end, or an
/// exhausted budget. Returns the visited state indices, start included.
pub fn most_likely_trajectory(
    mdp: &MdpSpec,
    goal: usize,
    start: usize,
    h: usize,
    mut act: impl FnMut(usize, usize) -> ActionId,
) -> Vec<usize> {
    let mut path = vec![start];
    let mut s = start;
    let mut k = h;
    while k >= 1 && !mdp.goal_hit[s][goal] && !mdp.terminal[s] {
        s = mdp.most_likely_next(s, act(s, k));
        path.push(s);
        k -= 1;
    }
    path
}
