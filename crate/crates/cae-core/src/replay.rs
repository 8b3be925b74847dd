//! Episode storage and batch construction.
//!
//! Rollouts land here as chained transitions. Batches are built by drawing a
//! uniform episode, a uniform transition inside it, a step budget from an
//! annealed power-law schedule, and a goal from one of two relabelers:
//! hindsight (a goal actually achieved later in the same episode) or
//! restricted-uniform (a goal within metric distance `h` of the source,
//! which stays sound in stochastic environments).

use crate::env::{ActionId, Environment, Goal, State};
use crate::{Error, Result};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionRec {
    pub s: State,
    pub a: ActionId,
    pub s_next: State,
    /// `s_next` ended the episode as a dead end (hole, off-board sink).
    pub terminal_sink: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub index: u64,
    /// Goal the behavior policy chased; `None` for goalless exploration.
    pub behavior_goal: Option<Goal>,
    pub steps: Vec<TransitionRec>,
}

impl Episode {
    /// Transitions must chain and a sink may only appear at the end.
    pub fn validate(&self, max_len: usize) -> Result<()> {
        if self.steps.is_empty() {
            return Err(Error::contract("empty episode"));
        }
        if self.steps.len() > max_len {
            return Err(Error::contract(format!(
                "episode {} has {} steps, limit {max_len}",
                self.index,
                self.steps.len()
            )));
        }
        for (t, w) in self.steps.windows(2).enumerate() {
            if w[0].s_next != w[1].s {
                return Err(Error::contract(format!(
                    "episode {} breaks its chain at step {t}",
                    self.index
                )));
            }
            if w[0].terminal_sink {
                return Err(Error::contract(format!(
                    "episode {} continues past a sink at step {t}",
                    self.index
                )));
            }
        }
        Ok(())
    }
}

/// Unbounded episode store (runs here are tens of thousands of short
/// episodes; eviction would only complicate reproducibility).
#[derive(Default)]
pub struct ReplayBuffer {
    episodes: Vec<Episode>,
}

impl ReplayBuffer {
    pub fn new() -> ReplayBuffer {
        ReplayBuffer::default()
    }

    pub fn append(&mut self, episode: Episode, max_len: usize) -> Result<()> {
        episode.validate(max_len)?;
        self.episodes.push(episode);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn episodes(&self) -> &[Episode] {
        &self.episodes
    }

    /// One episode per line as JSON; floats survive the trip bit-exactly.
    pub fn save_jsonl(&self, out: &mut dyn Write) -> Result<()> {
        for e in &self.episodes {
            serde_json::to_writer(&mut *out, e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn load_jsonl(input: &mut dyn BufRead, max_len: usize) -> Result<ReplayBuffer> {
        let mut buffer = ReplayBuffer::new();
        for line in input.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            buffer.append(serde_json::from_str(&line)?, max_len)?;
        }
        Ok(buffer)
    }
}

/// Annealed step-budget distribution `P(h) ~ h^(-kappa * progress)` over
/// `1..=h_max`: uniform when training starts (`progress` 0), concentrated on
/// short budgets by the end so values near their base case get refreshed.
#[derive(Debug, Clone, Copy)]
pub struct HSchedule {
    pub kappa: f64,
    pub h_max: usize,
}

impl HSchedule {
    pub fn new(kappa: f64, h_max: usize) -> Result<HSchedule> {
        if kappa < 0.0 || h_max == 0 {
            return Err(Error::config("need kappa >= 0 and h_max >= 1"));
        }
        Ok(HSchedule { kappa, h_max })
    }

    /// Normalized probabilities for `h = 1..=h_max` at training fraction
    /// `progress` in `[0, 1]`.
    pub fn weights(&self, progress: f64) -> Vec<f64> {
        let exponent = self.kappa * progress.clamp(0.0, 1.0);
        let raw: Vec<f64> = (1..=self.h_max)
            .map(|h| (h as f64).powf(-exponent))
            .collect();
        let z: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / z).collect()
    }

    pub fn sample(&self, progress: f64, rng: &mut ChaCha8Rng) -> usize {
        let w = self.weights(progress);
        let mut u: f64 = rng.random();
        for (i, p) in w.iter().enumerate() {
            u -= p;
            if u <= 0.0 {
                return i + 1;
            }
        }
        self.h_max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RelabelMode {
    /// Uniform over goals achieved strictly after the sampled source state
    /// in the same episode.
    FutureHer,
    /// Uniform over the goal set restricted to metric distance <= h of the
    /// source. Unlike hindsight goals this carries no bias under stochastic
    /// dynamics, at the price of slower coverage.
    Reachability,
}

#[derive(Debug, Clone, Copy)]
pub struct RelabelConfig {
    pub mode: RelabelMode,
    /// When set, targets for goals provably out of range (metric distance
    /// greater than the remaining budget) are forced to zero instead of
    /// bootstrapped. Off by default.
    pub clip_targets: bool,
}

impl Default for RelabelConfig {
    fn default() -> RelabelConfig {
        RelabelConfig {
            mode: RelabelMode::FutureHer,
            clip_targets: false,
        }
    }
}

/// One training example before encoding: raw states, the relabeled goal, the
/// sampled budget, and precomputed goal checks.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub s: State,
    pub a: ActionId,
    pub s_next: State,
    pub terminal_sink: bool,
    pub goal: Goal,
    pub h: usize,
    pub hit_s: bool,
    pub hit_next: bool,
}

fn relabel_future(
    env: &dyn Environment,
    episode: &Episode,
    step: usize,
    rng: &mut ChaCha8Rng,
) -> Goal {
    // Anchor states are the landing states from the sampled step onward.
    // Sinks are excluded: they have no valid goal projection (the off-board
    // sink) or none worth chasing, and only the final step can be one.
    let last = episode.steps.len() - 1;
    let hi = if episode.steps[last].terminal_sink && last >= step {
        last
    } else {
        last + 1
    };
    if step < hi {
        let j = rng.random_range(step..hi);
        return env.achieved_goal(&episode.steps[j].s_next);
    }
    match episode.behavior_goal {
        Some(g) => g,
        // Goalless exploration that died immediately: label with the source
        // itself, a trivially satisfied sample.
        None => env.achieved_goal(&episode.steps[step].s),
    }
}

/// Draws `n` training samples: uniform episode, uniform transition, budget
/// from the schedule, goal from the relabeler.
pub fn sample_batch(
    buffer: &ReplayBuffer,
    n: usize,
    env: &dyn Environment,
    schedule: &HSchedule,
    progress: f64,
    relabel: &RelabelConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<TrainSample>> {
    if buffer.is_empty() {
        return Err(Error::contract("cannot sample from an empty buffer"));
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let episode = &buffer.episodes[rng.random_range(0..buffer.episodes.len())];
        let step = rng.random_range(0..episode.steps.len());
        let h = schedule.sample(progress, rng);
        let goal = match relabel.mode {
            RelabelMode::FutureHer => relabel_future(env, episode, step, rng),
            RelabelMode::Reachability => {
                env.sample_goal_within(&episode.steps[step].s, h as f64, rng)
            }
        };
        let t = &episode.steps[step];
        out.push(TrainSample {
            s: t.s,
            a: t.a,
            s_next: t.s_next,
            terminal_sink: t.terminal_sink,
            goal,
            h,
            hit_s: env.goal_check(&t.s, &goal),
            hit_next: env.goal_check(&t.s_next, &goal),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Checkerboard, LineWorld, MiniMaze};
    use crate::rng::{stream_rng, Stream};

    fn cell(x: i32, y: i32) -> State {
        State::cell(x, y)
    }

    fn walk(index: u64, cells: &[(i32, i32)], sink_at_end: bool) -> Episode {
        let steps = cells
            .windows(2)
            .enumerate()
            .map(|(i, w)| TransitionRec {
                s: cell(w[0].0, w[0].1),
                a: 0,
                s_next: cell(w[1].0, w[1].1),
                terminal_sink: sink_at_end && i + 2 == cells.len(),
            })
            .collect();
        Episode {
            index,
            behavior_goal: None,
            steps,
        }
    }

    #[test]
    fn validation_catches_broken_chains_and_mid_sinks() {
        let good = walk(0, &[(0, 0), (1, 0), (2, 0)], false);
        good.validate(10).unwrap();
        assert!(good.validate(1).is_err());

        let mut broken = good.clone();
        broken.steps[1].s = cell(5, 5);
        assert!(broken.validate(10).is_err());

        let mut sunk = good.clone();
        sunk.steps[0].terminal_sink = true;
        assert!(sunk.validate(10).is_err());
    }

    #[test]
    fn jsonl_round_trip_is_bit_exact() {
        let env = crate::env::DubinsCar::small();
        let mut rng = stream_rng(5, Stream::EnvDynamics, 0);
        let mut buffer = ReplayBuffer::new();
        let mut s = crate::env::Environment::initial_state(
            &env,
            crate::env::StartMode::Train,
            &mut rng,
        );
        let mut steps = Vec::new();
        for a in [0, 1, 4, 2, 6] {
            let out = crate::env::Environment::step(&env, &s, a, &mut rng);
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
                    index: 3,
                    behavior_goal: Some(Goal::Region { x: 0.1 + 0.2, y: 7.3 }),
                    steps,
                },
                60,
            )
            .unwrap();
        let mut bytes = Vec::new();
        buffer.save_jsonl(&mut bytes).unwrap();
        let back = ReplayBuffer::load_jsonl(&mut bytes.as_slice(), 60).unwrap();
        assert_eq!(back.episodes(), buffer.episodes());
    }

    #[test]
    fn schedule_starts_uniform_and_anneals() {
        let sched = HSchedule::new(3.0, 3).unwrap();
        let w0 = sched.weights(0.0);
        assert_eq!(w0, vec![1.0 / 3.0; 3]);
        // Fully annealed: weights proportional to {1, 1/8, 1/27}.
        let w1 = sched.weights(1.0);
        let z = 1.0 + 1.0 / 8.0 + 1.0 / 27.0;
        for (got, want) in w1.iter().zip([1.0 / z, 0.125 / z, (1.0 / 27.0) / z]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!((w1[0] - 0.860558).abs() < 1e-6);
        assert!((w1[1] - 0.107570).abs() < 1e-6);
        assert!((w1[2] - 0.031873).abs() < 1e-6);
        assert!((w1.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn schedule_samples_match_weights() {
        let sched = HSchedule::new(3.0, 5).unwrap();
        let progress = 0.6;
        let w = sched.weights(progress);
        let mut rng = stream_rng(11, Stream::ReplaySampling, 0);
        let n = 100_000;
        let mut counts = vec![0usize; 5];
        for _ in 0..n {
            counts[sched.sample(progress, &mut rng) - 1] += 1;
        }
        for (h, (&c, &p)) in counts.iter().zip(&w).enumerate() {
            let freq = c as f64 / n as f64;
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!(
                (freq - p).abs() <= 3.0 * se,
                "h={} freq {freq} vs p {p} (3se {})",
                h + 1,
                3.0 * se
            );
        }
    }

    #[test]
    fn future_relabels_stay_in_the_episodes_future() {
        let env = LineWorld::new(6).unwrap();
        let mut buffer = ReplayBuffer::new();
        // Walk 0 -> 5: sampling at step 2 must yield goals from {3, 4, 5}.
        buffer
            .append(walk(0, &[(0, 0), (1, 0), (2, 0), (3, 0), (4, 0), (5, 0)], false), 24)
            .unwrap();
        let sched = HSchedule::new(3.0, 4).unwrap();
        let cfg = RelabelConfig::default();
        let mut rng = stream_rng(1, Stream::ReplaySampling, 1);
        let mut seen = std::collections::HashSet::new();
        let mut counts = std::collections::HashMap::new();
        let n = 30_000;
        let mut drawn = 0usize;
        for _ in 0..n {
            let batch = sample_batch(&buffer, 1, &env, &sched, 0.0, &cfg, &mut rng).unwrap();
            let s = &batch[0];
            if let (State::Cell { x: sx, .. }, Goal::Cell { x: gx, .. }) = (s.s, s.goal) {
                assert!(gx > sx, "goal {gx} not after source {sx}");
                if sx == 2 {
                    seen.insert(gx);
                    *counts.entry(gx).or_insert(0usize) += 1;
                    drawn += 1;
                }
            }
            assert!(s.h >= 1 && s.h <= 4);
        }
        assert_eq!(seen, [3, 4, 5].into_iter().collect());
        // Uniform over the three future anchors, three standard errors.
        for (_, &c) in &counts {
            let freq = c as f64 / drawn as f64;
            let se = (freq * (1.0 - freq) / drawn as f64).sqrt().max(1e-4);
            assert!((freq - 1.0 / 3.0).abs() <= 3.0 * se.max((2.0 / 9.0 / drawn as f64).sqrt()));
        }
    }

    #[test]
    fn one_step_death_falls_back_to_the_behavior_goal() {
        let env = Checkerboard::new(4).unwrap();
        let mut buffer = ReplayBuffer::new();
        let goal = Goal::Cell { x: 2, y: 2 };
        buffer
            .append(
                Episode {
                    index: 0,
                    behavior_goal: Some(goal),
                    steps: vec![TransitionRec {
                        s: cell(0, 0),
                        a: 2,
                        s_next: cell(-1, -1),
                        terminal_sink: true,
                    }],
                },
                64,
            )
            .unwrap();
        let sched = HSchedule::new(3.0, 3).unwrap();
        let cfg = RelabelConfig::default();
        let mut rng = stream_rng(2, Stream::ReplaySampling, 0);
        for _ in 0..50 {
            let batch = sample_batch(&buffer, 4, &env, &sched, 0.5, &cfg, &mut rng).unwrap();
            for s in batch {
                assert_eq!(s.goal, goal);
                assert!(s.terminal_sink);
            }
        }
    }

    #[test]
    fn reachability_goals_respect_the_metric_ball() {
        let env = MiniMaze::standard();
        let mut buffer = ReplayBuffer::new();
        buffer
            .append(walk(0, &[(0, 0), (1, 0), (2, 0), (2, 1)], false), 200)
            .unwrap();
        let sched = HSchedule::new(3.0, 6).unwrap();
        let cfg = RelabelConfig {
            mode: RelabelMode::Reachability,
            clip_targets: false,
        };
        let mut rng = stream_rng(9, Stream::ReplaySampling, 0);
        let batch = sample_batch(&buffer, 500, &env, &sched, 0.0, &cfg, &mut rng).unwrap();
        for s in batch {
            assert!(
                env.distance(&s.s, &s.goal) <= s.h as f64,
                "goal {:?} outside budget {} of {:?}",
                s.goal,
                s.h,
                s.s
            );
        }
    }

    #[test]
    fn goal_check_bits_match_the_environment() {
        let env = LineWorld::new(4).unwrap();
        let mut buffer = ReplayBuffer::new();
        buffer
            .append(walk(0, &[(0, 0), (1, 0), (2, 0), (3, 0)], false), 20)
            .unwrap();
        let sched = HSchedule::new(0.0, 3).unwrap();
        let cfg = RelabelConfig::default();
        let mut rng = stream_rng(4, Stream::ReplaySampling, 2);
        let batch = sample_batch(&buffer, 200, &env, &sched, 1.0, &cfg, &mut rng).unwrap();
        for s in batch {
            assert_eq!(s.hit_s, env.goal_check(&s.s, &s.goal));
            assert_eq!(s.hit_next, env.goal_check(&s.s_next, &s.goal));
        }
    }
}
