//! Exact dynamic programming on enumerable transition models.
//!
//! Everything here is ground truth for the approximate learners: optimal and
//! fixed-policy reach probabilities over a horizon axis, the exact-arrival
//! variant, discounted first-arrival values over a gamma grid, and a
//! discounted action-value baseline. Tables are laid out goal-major so each
//! goal's slice is independent and computed in parallel.

use crate::env::{ActionId, MdpSpec};
use crate::par;
use crate::{Error, Result, Variant};
use std::io;

/// Third conditioning axis of a table: step budget, discount grid, or a
/// single fixed discount.
#[derive(Debug, Clone, PartialEq)]
pub enum CondAxis {
    Horizon { h_max: usize },
    Gamma { grid: Vec<f64> },
    Fixed { gamma: f64 },
}

impl CondAxis {
    pub fn len(&self) -> usize {
        match self {
            CondAxis::Horizon { h_max } => h_max + 1,
            CondAxis::Gamma { grid } => grid.len(),
            CondAxis::Fixed { .. } => 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Numeric label of level `k`, used in table dumps.
    pub fn label(&self, k: usize) -> f64 {
        match self {
            CondAxis::Horizon { .. } => k as f64,
            CondAxis::Gamma { grid } => grid[k],
            CondAxis::Fixed { gamma } => *gamma,
        }
    }
}

/// Dense value table indexed `[goal][level][state][action]`.
pub struct ExactTable {
    pub variant: Variant,
    pub axis: CondAxis,
    pub n_states: usize,
    pub n_actions: usize,
    pub n_goals: usize,
    values: Vec<f64>,
}

impl ExactTable {
    fn from_goal_slices(
        variant: Variant,
        axis: CondAxis,
        n_states: usize,
        n_actions: usize,
        slices: Vec<Vec<f64>>,
    ) -> ExactTable {
        let per_goal = axis.len() * n_states * n_actions;
        let n_goals = slices.len();
        let mut values = Vec::with_capacity(per_goal * n_goals);
        for slice in slices {
            debug_assert_eq!(slice.len(), per_goal);
            values.extend_from_slice(&slice);
        }
        ExactTable {
            variant,
            axis,
            n_states,
            n_actions,
            n_goals,
            values,
        }
    }

    #[inline]
    fn index(&self, s: usize, a: usize, g: usize, k: usize) -> usize {
        debug_assert!(s < self.n_states && a < self.n_actions && g < self.n_goals);
        ((g * self.axis.len() + k) * self.n_states + s) * self.n_actions + a
    }

    pub fn value(&self, s: usize, a: usize, g: usize, k: usize) -> f64 {
        self.values[self.index(s, a, g, k)]
    }

    pub fn max_over_actions(&self, s: usize, g: usize, k: usize) -> f64 {
        let base = self.index(s, 0, g, k);
        self.values[base..base + self.n_actions]
            .iter()
            .fold(f64::NEG_INFINITY, |m, &v| m.max(v))
    }

    /// Argmax action; ties resolve to the lowest action index.
    pub fn greedy(&self, s: usize, g: usize, k: usize) -> ActionId {
        let base = self.index(s, 0, g, k);
        let row = &self.values[base..base + self.n_actions];
        let mut best = 0;
        for (a, &v) in row.iter().enumerate().skip(1) {
            if v > row[best] {
                best = a;
            }
        }
        best
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Dumps `state,action,goal,horizon,value` rows. The fourth column holds
    /// the axis label: a step budget for horizon tables, a discount
    /// otherwise.
    pub fn write_csv(&self, mdp: &MdpSpec, out: &mut dyn io::Write) -> io::Result<()> {
        writeln!(out, "state,action,goal,horizon,value")?;
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                for g in 0..self.n_goals {
                    for k in 0..self.axis.len() {
                        writeln!(
                            out,
                            "{},{},{},{},{:.6}",
                            mdp.states[s].render(),
                            a,
                            mdp.goals[g].render(),
                            self.axis.label(k),
                            self.value(s, a, g, k)
                        )?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Reach-within-budget action values for one goal, laid out `[h][s][a]` with
/// `h` in `0..=h_max`.
///
/// Level 0 is the goal predicate itself. For `h >= 1` a state already on the
/// goal keeps value 1; otherwise the value backs up the best successor value
/// one budget step earlier. Absorbing terminal states never improve, so they
/// need no special handling.
pub fn c_star_slice(mdp: &MdpSpec, goal: usize, h_max: usize) -> Vec<f64> {
    let (ns, na) = (mdp.n_states(), mdp.action_count);
    let stride = ns * na;
    let mut vals = vec![0.0; (h_max + 1) * stride];
    for s in 0..ns {
        if mdp.goal_hit[s][goal] {
            vals[s * na..(s + 1) * na].fill(1.0);
        }
    }
    let mut prev_max = vec![0.0; ns];
    for h in 1..=h_max {
        let (done, cur) = vals.split_at_mut(h * stride);
        let prev = &done[(h - 1) * stride..];
        for (s, m) in prev_max.iter_mut().enumerate() {
            *m = prev[s * na..(s + 1) * na]
                .iter()
                .fold(f64::NEG_INFINITY, |acc, &v| acc.max(v));
        }
        for s in 0..ns {
            if mdp.goal_hit[s][goal] {
                cur[s * na..(s + 1) * na].fill(1.0);
                continue;
            }
            for a in 0..na {
                cur[s * na + a] = mdp.kernel[s][a]
                    .iter()
                    .map(|&(j, p)| p * prev_max[j])
                    .sum();
            }
        }
    }
    vals
}

pub fn compute_c_star(mdp: &MdpSpec, h_max: usize) -> ExactTable {
    let slices = par::map_collect(mdp.n_goals(), |g| c_star_slice(mdp, g, h_max));
    ExactTable::from_goal_slices(
        Variant::C,
        CondAxis::Horizon { h_max },
        mdp.n_states(),
        mdp.action_count,
        slices,
    )
}

/// Like [`c_star_slice`] but keeps only the requested budget levels,
/// returning one `[s][a]` block per entry of `keep`. Memory stays at two
/// levels regardless of the largest budget, which is what makes value maps
/// over big discretized models affordable.
pub fn c_star_levels(mdp: &MdpSpec, goal: usize, keep: &[usize]) -> Vec<Vec<f64>> {
    let (ns, na) = (mdp.n_states(), mdp.action_count);
    let h_top = keep.iter().copied().max().unwrap_or(0);
    let mut prev = vec![0.0; ns * na];
    for s in 0..ns {
        if mdp.goal_hit[s][goal] {
            prev[s * na..(s + 1) * na].fill(1.0);
        }
    }
    let mut out: Vec<Vec<f64>> = vec![Vec::new(); keep.len()];
    let capture = |h: usize, level: &[f64], out: &mut Vec<Vec<f64>>| {
        for (i, &want) in keep.iter().enumerate() {
            if want == h {
                out[i] = level.to_vec();
            }
        }
    };
    capture(0, &prev, &mut out);
    let mut cur = vec![0.0; ns * na];
    let mut prev_max = vec![0.0; ns];
    for h in 1..=h_top {
        for (s, m) in prev_max.iter_mut().enumerate() {
            *m = prev[s * na..(s + 1) * na]
                .iter()
                .fold(f64::NEG_INFINITY, |acc, &v| acc.max(v));
        }
        for s in 0..ns {
            if mdp.goal_hit[s][goal] {
                cur[s * na..(s + 1) * na].fill(1.0);
                continue;
            }
            for a in 0..na {
                cur[s * na + a] = mdp.kernel[s][a]
                    .iter()
                    .map(|&(j, p)| p * prev_max[j])
                    .sum();
            }
        }
        capture(h, &cur, &mut out);
        std::mem::swap(&mut prev, &mut cur);
    }
    out
}

/// Arrive-in-exactly-`h`-steps action values for one goal.
///
/// Unlike the cumulative table there is no stay-at-one rule: standing on the
/// goal only counts at budget 0, and the agent may leave and re-enter.
pub fn a_star_slice(mdp: &MdpSpec, goal: usize, h_max: usize) -> Vec<f64> {
    let (ns, na) = (mdp.n_states(), mdp.action_count);
    let stride = ns * na;
    let mut vals = vec![0.0; (h_max + 1) * stride];
    for s in 0..ns {
        if mdp.goal_hit[s][goal] {
            vals[s * na..(s + 1) * na].fill(1.0);
        }
    }
    let mut prev_max = vec![0.0; ns];
    for h in 1..=h_max {
        let (done, cur) = vals.split_at_mut(h * stride);
        let prev = &done[(h - 1) * stride..];
        for (s, m) in prev_max.iter_mut().enumerate() {
            *m = prev[s * na..(s + 1) * na]
                .iter()
                .fold(f64::NEG_INFINITY, |acc, &v| acc.max(v));
        }
        for s in 0..ns {
            for a in 0..na {
                cur[s * na + a] = mdp.kernel[s][a]
                    .iter()
                    .map(|&(j, p)| p * prev_max[j])
                    .sum();
            }
        }
    }
    vals
}

pub fn compute_a_star(mdp: &MdpSpec, h_max: usize) -> ExactTable {
    let slices = par::map_collect(mdp.n_goals(), |g| a_star_slice(mdp, g, h_max));
    ExactTable::from_goal_slices(
        Variant::A,
        CondAxis::Horizon { h_max },
        mdp.n_states(),
        mdp.action_count,
        slices,
    )
}

/// A stochastic policy conditioned on goal and remaining budget, stored
/// dense as `[goal][h][state] -> distribution over actions` with `h` in
/// `0..=h_max` (the `h = 0` rows are never acted on and stay uniform).
#[derive(Clone)]
pub struct PolicySpec {
    pub n_states: usize,
    pub n_actions: usize,
    pub n_goals: usize,
    pub h_max: usize,
    probs: Vec<f64>,
}

impl PolicySpec {
    pub fn uniform(n_states: usize, n_actions: usize, n_goals: usize, h_max: usize) -> PolicySpec {
        let len = n_goals * (h_max + 1) * n_states * n_actions;
        PolicySpec {
            n_states,
            n_actions,
            n_goals,
            h_max,
            probs: vec![1.0 / n_actions as f64; len],
        }
    }

    /// Builds a deterministic policy from an action choice per
    /// `(goal, budget, state)`.
    pub fn deterministic(
        n_states: usize,
        n_actions: usize,
        n_goals: usize,
        h_max: usize,
        choose: impl Fn(usize, usize, usize) -> ActionId,
    ) -> PolicySpec {
        let mut p = PolicySpec {
            n_states,
            n_actions,
            n_goals,
            h_max,
            probs: vec![0.0; n_goals * (h_max + 1) * n_states * n_actions],
        };
        for g in 0..n_goals {
            for h in 0..=h_max {
                for s in 0..n_states {
                    let a = choose(g, h, s);
                    assert!(a < n_actions, "action out of range");
                    let i = p.base(g, h, s) + a;
                    p.probs[i] = 1.0;
                }
            }
        }
        p
    }

    /// Greedy (lowest-index argmax) policy read off a horizon table.
    pub fn greedy_from(table: &ExactTable) -> PolicySpec {
        let CondAxis::Horizon { h_max } = table.axis else {
            panic!("greedy policies are read off horizon tables");
        };
        PolicySpec::deterministic(
            table.n_states,
            table.n_actions,
            table.n_goals,
            h_max,
            |g, h, s| table.greedy(s, g, h),
        )
    }

    #[inline]
    fn base(&self, g: usize, h: usize, s: usize) -> usize {
        ((g * (self.h_max + 1) + h) * self.n_states + s) * self.n_actions
    }

    pub fn prob(&self, g: usize, h: usize, s: usize, a: ActionId) -> f64 {
        self.probs[self.base(g, h, s) + a]
    }

    /// Overwrites one action distribution; must be a probability vector.
    pub fn set(&mut self, g: usize, h: usize, s: usize, dist: &[f64]) -> Result<()> {
        if dist.len() != self.n_actions {
            return Err(Error::contract("distribution length != action count"));
        }
        let sum: f64 = dist.iter().sum();
        if dist.iter().any(|&p| p < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::contract("action distribution must sum to 1"));
        }
        let b = self.base(g, h, s);
        self.probs[b..b + self.n_actions].copy_from_slice(dist);
        Ok(())
    }
}

/// Reach-within-budget action values of a fixed policy, one goal.
///
/// Identical shape to the optimal recursion except the backup averages the
/// successor's values under the policy at the decremented budget instead of
/// maximizing.
pub fn c_pi_slice(mdp: &MdpSpec, policy: &PolicySpec, goal: usize) -> Vec<f64> {
    let (ns, na) = (mdp.n_states(), mdp.action_count);
    let h_max = policy.h_max;
    let stride = ns * na;
    let mut vals = vec![0.0; (h_max + 1) * stride];
    for s in 0..ns {
        if mdp.goal_hit[s][goal] {
            vals[s * na..(s + 1) * na].fill(1.0);
        }
    }
    let mut prev_pi = vec![0.0; ns];
    for h in 1..=h_max {
        let (done, cur) = vals.split_at_mut(h * stride);
        let prev = &done[(h - 1) * stride..];
        for (s, m) in prev_pi.iter_mut().enumerate() {
            *m = (0..na)
                .map(|a| policy.prob(goal, h - 1, s, a) * prev[s * na + a])
                .sum();
        }
        for s in 0..ns {
            if mdp.goal_hit[s][goal] {
                cur[s * na..(s + 1) * na].fill(1.0);
                continue;
            }
            for a in 0..na {
                cur[s * na + a] = mdp.kernel[s][a]
                    .iter()
                    .map(|&(j, p)| p * prev_pi[j])
                    .sum();
            }
        }
    }
    vals
}

pub fn compute_c_pi(mdp: &MdpSpec, policy: &PolicySpec) -> ExactTable {
    assert_eq!(policy.n_states, mdp.n_states());
    assert_eq!(policy.n_actions, mdp.action_count);
    assert_eq!(policy.n_goals, mdp.n_goals());
    let slices = par::map_collect(mdp.n_goals(), |g| c_pi_slice(mdp, policy, g));
    ExactTable::from_goal_slices(
        Variant::C,
        CondAxis::Horizon {
            h_max: policy.h_max,
        },
        mdp.n_states(),
        mdp.action_count,
        slices,
    )
}

/// Forward-simulated success probability: roll the state distribution under
/// the policy, harvesting mass as it enters the goal set. Shares nothing
/// with the backward recursions, so it cross-checks them.
pub fn policy_success_prob(
    mdp: &MdpSpec,
    policy: &PolicySpec,
    start: usize,
    goal: usize,
    h: usize,
) -> f64 {
    assert!(h <= policy.h_max);
    if mdp.goal_hit[start][goal] {
        return 1.0;
    }
    let ns = mdp.n_states();
    let mut mass = vec![0.0; ns];
    mass[start] = 1.0;
    let mut success = 0.0;
    for budget in (1..=h).rev() {
        let mut next = vec![0.0; ns];
        for s in 0..ns {
            if mass[s] == 0.0 {
                continue;
            }
            for a in 0..mdp.action_count {
                let pa = policy.prob(goal, budget, s, a);
                if pa == 0.0 {
                    continue;
                }
                for &(j, p) in &mdp.kernel[s][a] {
                    let m = mass[s] * pa * p;
                    if mdp.goal_hit[j][goal] {
                        success += m;
                    } else {
                        next[j] += m;
                    }
                }
            }
        }
        mass = next;
    }
    success
}

/// Value-iteration outcome for one discount level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Convergence {
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
}

const VI_TOLERANCE: f64 = 1e-10;

fn vi_iteration_cap(mdp: &MdpSpec) -> usize {
    10 * mdp.max_episode_length.max(1)
}

/// One goal, one discount: discounted-first-arrival action values
/// `E[gamma^(T-1)]` with `T` the first entry time (at least 1).
///
/// Value iteration from zero; after `k` sweeps the iterate equals the
/// truncated expectation over arrivals within `k` steps, so the sequence
/// climbs monotonically to the fixed point. `gamma = 0` degenerates to the
/// probability of arriving in exactly one step (`0^0 = 1`); `gamma = 1` is
/// allowed and yields the probability of ever arriving (values stay bounded
/// by 1, so iteration from zero still converges to the minimal fixed point).
fn d_star_goal_gamma(
    mdp: &MdpSpec,
    goal: usize,
    gamma: f64,
    out: &mut [f64],
) -> Convergence {
    let (ns, na) = (mdp.n_states(), mdp.action_count);
    out.fill(0.0);
    let mut cur = vec![0.0; ns * na];
    let mut best = vec![0.0; ns];
    let cap = vi_iteration_cap(mdp);
    let mut residual = f64::INFINITY;
    for iter in 1..=cap {
        for (s, b) in best.iter_mut().enumerate() {
            *b = out[s * na..(s + 1) * na]
                .iter()
                .fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        }
        residual = 0.0;
        for s in 0..ns {
            for a in 0..na {
                let v: f64 = mdp.kernel[s][a]
                    .iter()
                    .map(|&(j, p)| {
                        let hit = mdp.goal_hit[j][goal];
                        p * if hit { 1.0 } else { gamma * best[j] }
                    })
                    .sum();
                residual = residual.max((v - out[s * na + a]).abs());
                cur[s * na + a] = v;
            }
        }
        out.copy_from_slice(&cur);
        if residual <= VI_TOLERANCE {
            return Convergence {
                converged: true,
                iterations: iter,
                residual,
            };
        }
    }
    Convergence {
        converged: false,
        iterations: cap,
        residual,
    }
}

/// Discounted-first-arrival table over a discount grid, plus one convergence
/// record per grid entry (aggregated across goals: worst residual, most
/// iterations, converged only if every goal converged).
pub fn compute_d_star(mdp: &MdpSpec, grid: &[f64]) -> Result<(ExactTable, Vec<Convergence>)> {
    if grid.is_empty() {
        return Err(Error::config("discount grid is empty"));
    }
    if grid.iter().any(|&g| !(0.0..=1.0).contains(&g)) {
        return Err(Error::config("discount grid entries must lie in [0, 1]"));
    }
    let (ns, na) = (mdp.n_states(), mdp.action_count);
    let per_gamma = ns * na;
    let results = par::map_collect(mdp.n_goals(), |g| {
        let mut slice = vec![0.0; grid.len() * per_gamma];
        let conv: Vec<Convergence> = grid
            .iter()
            .enumerate()
            .map(|(k, &gamma)| {
                d_star_goal_gamma(mdp, g, gamma, &mut slice[k * per_gamma..(k + 1) * per_gamma])
            })
            .collect();
        (slice, conv)
    });
    let mut slices = Vec::with_capacity(results.len());
    let mut merged = vec![
        Convergence {
            converged: true,
            iterations: 0,
            residual: 0.0,
        };
        grid.len()
    ];
    for (slice, conv) in results {
        for (m, c) in merged.iter_mut().zip(&conv) {
            m.converged &= c.converged;
            m.iterations = m.iterations.max(c.iterations);
            m.residual = m.residual.max(c.residual);
        }
        slices.push(slice);
    }
    let table = ExactTable::from_goal_slices(
        Variant::D,
        CondAxis::Gamma {
            grid: grid.to_vec(),
        },
        ns,
        na,
        slices,
    );
    Ok((table, merged))
}

/// Discounted action-value baseline `E[gamma^T]` with goal-entry reward and
/// termination on the goal: states already on the goal are pinned at 1, and
/// for the rest one discount factor applies per step taken.
pub fn compute_q_star(mdp: &MdpSpec, gamma: f64) -> Result<(ExactTable, Convergence)> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::config(format!(
            "discount {gamma} must lie in [0, 1) for the fixed point to exist"
        )));
    }
    let (ns, na) = (mdp.n_states(), mdp.action_count);
    let per_goal = ns * na;
    let cap = vi_iteration_cap(mdp);
    let results = par::map_collect(mdp.n_goals(), |goal| {
        let mut out = vec![0.0; per_goal];
        for s in 0..ns {
            if mdp.goal_hit[s][goal] {
                out[s * na..(s + 1) * na].fill(1.0);
            }
        }
        let mut cur = out.clone();
        let mut best = vec![0.0; ns];
        let mut residual = f64::INFINITY;
        let mut conv = Convergence {
            converged: false,
            iterations: cap,
            residual,
        };
        for iter in 1..=cap {
            for (s, b) in best.iter_mut().enumerate() {
                *b = out[s * na..(s + 1) * na]
                    .iter()
                    .fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            }
            residual = 0.0;
            for s in 0..ns {
                if mdp.goal_hit[s][goal] {
                    continue;
                }
                for a in 0..na {
                    let v: f64 = gamma
                        * mdp.kernel[s][a]
                            .iter()
                            .map(|&(j, p)| {
                                let hit = mdp.goal_hit[j][goal];
                                p * if hit { 1.0 } else { best[j] }
                            })
                            .sum::<f64>();
                    residual = residual.max((v - out[s * na + a]).abs());
                    cur[s * na + a] = v;
                }
            }
            out.copy_from_slice(&cur);
            if residual <= VI_TOLERANCE {
                conv = Convergence {
                    converged: true,
                    iterations: iter,
                    residual,
                };
                break;
            }
        }
        if !conv.converged {
            conv.residual = residual;
        }
        (out, conv)
    });
    let mut slices = Vec::with_capacity(results.len());
    let mut merged = Convergence {
        converged: true,
        iterations: 0,
        residual: 0.0,
    };
    for (slice, c) in results {
        merged.converged &= c.converged;
        merged.iterations = merged.iterations.max(c.iterations);
        merged.residual = merged.residual.max(c.residual);
        slices.push(slice);
    }
    let table = ExactTable::from_goal_slices(Variant::Q, CondAxis::Fixed { gamma }, ns, na, slices);
    Ok((table, merged))
}

/// Fewest steps to reach `goal` from every state, by backward breadth-first
/// search over the deterministic transition graph. `None` marks unreachable
/// states. Stochastic models are rejected: under noise there is no single
/// step count.
pub fn min_horizon(mdp: &MdpSpec, goal: usize) -> Result<Vec<Option<usize>>> {
    if !mdp.deterministic {
        return Err(Error::contract(
            "minimal step counts need a deterministic model",
        ));
    }
    let ns = mdp.n_states();
    let mut reverse: Vec<Vec<usize>> = vec![Vec::new(); ns];
    for s in 0..ns {
        for a in 0..mdp.action_count {
            let j = mdp.kernel[s][a][0].0;
            reverse[j].push(s);
        }
    }
    let mut dist = vec![None; ns];
    let mut queue = std::collections::VecDeque::new();
    for s in 0..ns {
        if mdp.goal_hit[s][goal] {
            dist[s] = Some(0);
            queue.push_back(s);
        }
    }
    while let Some(j) = queue.pop_front() {
        let next_d = dist[j].unwrap() + 1;
        // Terminal states cannot act, so they never acquire a distance
        // through their self-loop; only a direct goal hit seeds them above.
        for &s in &reverse[j] {
            if dist[s].is_none() && !mdp.terminal[s] {
                dist[s] = Some(next_d);
                queue.push_back(s);
            }
        }
    }
    Ok(dist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Environment, LineWorld};

    fn line3() -> MdpSpec {
        LineWorld::new(3).unwrap().enumerate().unwrap()
    }

    /// Exhaustive ground truth: enumerate every deterministic budget-aware
    /// policy on the 3-cell line and compare the best forward-simulated
    /// success rate against the backed-up optimum.
    #[test]
    fn optimum_matches_exhaustive_policy_enumeration() {
        let mdp = line3();
        let h_max = 3;
        let table = compute_c_star(&mdp, h_max);
        // 2 actions, 3 states, 3 budgets: 512 deterministic policies.
        let choices = 3 * 3;
        for g in 0..mdp.n_goals() {
            for s in 0..mdp.n_states() {
                for h in 0..=h_max {
                    let mut best = 0.0f64;
                    for code in 0..(1usize << choices) {
                        let policy =
                            PolicySpec::deterministic(3, 2, mdp.n_goals(), h_max, |_, hh, ss| {
                                if hh == 0 {
                                    0
                                } else {
                                    (code >> ((hh - 1) * 3 + ss)) & 1
                                }
                            });
                        best = best.max(policy_success_prob(&mdp, &policy, s, g, h));
                    }
                    let v_star = table.max_over_actions(s, g, h);
                    assert!(
                        (best - v_star).abs() < 1e-12,
                        "s={s} g={g} h={h}: enumerated {best} vs backed-up {v_star}"
                    );
                }
            }
        }
    }

    #[test]
    fn uniform_policy_tree_expansion() {
        let mdp = line3();
        let policy = PolicySpec::uniform(3, 2, 3, 3);
        let table = compute_c_pi(&mdp, &policy);
        let g = mdp.goal_index(&mdp.goals[2].clone()).unwrap();
        // From cell 0, step right, then one uniform choice: half the mass
        // reaches cell 2.
        assert_eq!(table.value(0, 1, g, 2), 0.5);
        // Forward simulation agrees with the policy average of the backup.
        let forward = policy_success_prob(&mdp, &policy, 0, g, 2);
        assert!((forward - 0.25).abs() < 1e-15);
    }

    /// A budget-aware adversarial policy can make reach probability drop
    /// when the budget grows: with 2 steps it walks right, with 3 it burns
    /// the extra step walking left first and then the budget-1 rule walks
    /// right from cell 1, landing short. Optimal values stay monotone.
    #[test]
    fn fixed_policy_reach_is_not_monotone_in_budget() {
        let mdp = line3();
        let mut policy = PolicySpec::uniform(3, 2, 3, 3);
        let g = 2;
        policy.set(g, 1, 1, &[0.0, 1.0]).unwrap();
        policy.set(g, 2, 1, &[1.0, 0.0]).unwrap();
        let table = compute_c_pi(&mdp, &policy);
        assert_eq!(table.value(0, 1, g, 2), 1.0);
        assert_eq!(table.value(0, 1, g, 3), 0.0);

        let star = compute_c_star(&mdp, 6);
        for s in 0..3 {
            for a in 0..2 {
                for h in 1..=6 {
                    assert!(star.value(s, a, g, h) >= star.value(s, a, g, h - 1) - 1e-15);
                }
            }
        }
    }

    #[test]
    fn greedy_policy_recovers_the_optimum() {
        let mdp = line3();
        let star = compute_c_star(&mdp, 4);
        let pi = PolicySpec::greedy_from(&star);
        let back = compute_c_pi(&mdp, &pi);
        for g in 0..mdp.n_goals() {
            for s in 0..mdp.n_states() {
                for a in 0..2 {
                    for h in 0..=4 {
                        assert!(
                            (star.value(s, a, g, h) - back.value(s, a, g, h)).abs() < 1e-12
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn exact_arrival_counts_parity_on_the_line() {
        let mdp = line3();
        let table = compute_a_star(&mdp, 4);
        // Interior goal (cell 1): arrival from cell 0 stepping right lands
        // at budget 1, again at budget 3 (step off and back), never at even
        // budgets, because no interior cell has a self-loop.
        assert_eq!(table.value(0, 1, 1, 1), 1.0);
        assert_eq!(table.value(0, 1, 1, 3), 1.0);
        assert_eq!(table.value(0, 1, 1, 2), 0.0);
        // Boundary goal (cell 2): pushing right at the edge clamps in place,
        // so the agent can wait at the wall and hit any budget >= 1.
        assert_eq!(table.value(1, 1, 2, 2), 1.0);
        // The cumulative table dominates the exact-arrival table everywhere.
        let c = compute_c_star(&mdp, 4);
        for g in 0..3 {
            for s in 0..3 {
                for a in 0..2 {
                    for h in 0..=4 {
                        assert!(c.value(s, a, g, h) >= table.value(s, a, g, h) - 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn discounted_first_arrival_closed_forms() {
        let mdp = line3();
        let grid = [0.0, 0.5, 0.9, 1.0];
        let (table, conv) = compute_d_star(&mdp, &grid).unwrap();
        assert!(conv.iter().all(|c| c.converged));
        let g = 2;
        for (k, &gamma) in grid.iter().enumerate() {
            // Right from cell 0: two steps to the goal, value gamma^(2-1).
            assert!((table.value(0, 1, g, k) - gamma).abs() < 1e-9);
            // Right from cell 1: arrival in one step is worth gamma^0 = 1
            // even at gamma = 0.
            assert!((table.value(1, 1, g, k) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn discounted_baseline_closed_forms_and_identity() {
        let mdp = line3();
        let gamma = 0.99;
        let (q, conv) = compute_q_star(&mdp, gamma).unwrap();
        assert!(conv.converged);
        let g = 2;
        // Adjacent to the goal: one discounted step.
        assert!((q.value(1, 1, g, 0) - gamma).abs() < 1e-9);
        // Wrong way from cell 1: clamp at 0 costs two extra steps.
        assert!((q.value(1, 0, g, 0) - gamma.powi(3)).abs() < 1e-9);
        // Off the goal set, the baseline is the discounted-first-arrival
        // value at the same discount, scaled by one discount factor.
        let (d, _) = compute_d_star(&mdp, &[gamma]).unwrap();
        for s in 0..2 {
            for a in 0..2 {
                assert!((q.value(s, a, g, 0) - gamma * d.value(s, a, g, 0)).abs() < 1e-9);
            }
        }
        assert!(compute_q_star(&mdp, 1.0).is_err());
    }

    #[test]
    fn minimal_steps_by_backward_search() {
        let mdp = line3();
        let d = min_horizon(&mdp, 2).unwrap();
        assert_eq!(d, vec![Some(2), Some(1), Some(0)]);

        let lake = crate::env::FrozenLake::standard().enumerate().unwrap();
        assert!(min_horizon(&lake, 0).is_err());
    }

    #[test]
    fn csv_dump_has_one_row_per_entry() {
        let mdp = line3();
        let table = compute_c_star(&mdp, 5);
        let mut buf = Vec::new();
        table.write_csv(&mdp, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "state,action,goal,horizon,value");
        assert_eq!(lines.len(), 1 + 3 * 2 * 3 * 6);
        assert!(lines[1].starts_with("0|0,0,"));
    }
}
