//! The training loop: explore, relabel, bootstrap, fit.
//!
//! One engine drives all four value recursions. An episode phase fills the
//! buffer (first with uniform-random goalless rollouts, then with epsilon-
//! greedy goal-chasing ones), and after every goal-directed episode a fixed
//! number of gradient batches runs against bootstrap targets computed from a
//! periodically refreshed frozen copy of the net.
//!
//! Target construction is the variant-specific part. Every rule bottoms out
//! in the goal predicate rather than a bootstrap whenever the recursion's
//! base case pins the answer exactly: a source already on the goal is a sure
//! thing for the cumulative variant, a landing on the goal is worth 1, a
//! dead-end landing is worth 0 forever, and a spent budget leaves only the
//! landing check. Everything else bootstraps from the frozen net at the
//! decremented budget (or discounted level), which keeps the single-sample
//! target an unbiased draw of the backup under the logit loss.

use crate::approx::{AxisInfo, Checkpoint, FitSample, Loss, MlpFn, Optimizer, TabularFn, ValueNet};
use crate::config::ConfigMap;
use crate::env::{Environment, Goal, MdpSpec, StartMode};
use crate::policy::{
    build_query, distance_floored_horizons, epsilon_greedy, horizon_free_action, AccessValues,
    HorizonSelector, NetValues,
};
use crate::replay::{
    sample_batch, Episode, HSchedule, RelabelConfig, RelabelMode, ReplayBuffer, TrainSample,
    TransitionRec,
};
use crate::rng::{stream_rng, Stream};
use crate::{Error, Result, Variant};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Backend {
    Tabular,
    Mlp { hidden: Vec<usize> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimKind {
    Sgd,
    Adam,
    /// Per-parameter decaying steps; see [`Optimizer::Harmonic`].
    Harmonic,
}

/// Exploration rate as a function of the number of completed goal-directed
/// episodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsSchedule {
    Constant(f64),
    /// `eps0 / (1 + n / scale)`.
    Harmonic { eps0: f64, scale: f64 },
}

impl EpsSchedule {
    pub fn at(&self, n: usize) -> f64 {
        match *self {
            EpsSchedule::Constant(e) => e,
            EpsSchedule::Harmonic { eps0, scale } => eps0 / (1.0 + n as f64 / scale),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub variant: Variant,
    pub backend: Backend,
    /// Goalless uniform-random episodes that seed the buffer.
    pub n_explore: usize,
    /// Goal-directed episodes.
    pub n_gd: usize,
    /// Gradient batches after each goal-directed episode.
    pub n_train: usize,
    /// Frozen-copy refresh period, in batches.
    pub n_copy: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub optimizer: OptimKind,
    /// Visit-count scale of the decaying optimizer: the step at a parameter
    /// touched `n` times is `lr / (1 + n / lr_tau)`.
    pub lr_tau: f64,
    /// Starting logit of every tabular cell. Strongly negative values start
    /// all probabilities near zero, which keeps unvisited cells out of
    /// bootstrapped maxima.
    pub init_logit: f64,
    pub epsilon: EpsSchedule,
    /// Budget-schedule sharpness.
    pub kappa: f64,
    pub h_max: usize,
    /// Safety fraction for the behavior policy's budget selection.
    pub alpha: f64,
    /// Restrict viable budgets to those at least the metric distance.
    pub distance_floor: bool,
    pub relabel: RelabelConfig,
    /// Discount used by the baseline variant and by discounted behavior
    /// policies.
    pub gamma: f64,
    /// Discount levels of a tabular discounted-first-arrival net.
    pub gamma_grid: Vec<f64>,
    pub seed: u64,
    /// Emit a checkpoint to the sink every this many goal-directed episodes.
    pub snapshot_every: Option<usize>,
}

impl TrainConfig {
    pub fn defaults(variant: Variant, h_max: usize, seed: u64) -> TrainConfig {
        TrainConfig {
            variant,
            backend: Backend::Tabular,
            n_explore: 100,
            n_gd: 300,
            n_train: 64,
            n_copy: 10,
            batch_size: 256,
            lr: 1e-3,
            optimizer: OptimKind::Adam,
            lr_tau: 100.0,
            init_logit: 0.0,
            epsilon: EpsSchedule::Constant(0.1),
            kappa: 3.0,
            h_max,
            alpha: 0.9,
            distance_floor: false,
            relabel: RelabelConfig::default(),
            gamma: 0.99,
            gamma_grid: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.99],
            seed,
            snapshot_every: None,
        }
    }

    /// Reads the `train.*` section (plus top-level `seed`) of a run config,
    /// starting from [`TrainConfig::defaults`]. Recognized keys:
    ///
    /// | key | value |
    /// |-----|-------|
    /// | `train.variant` | `c` \| `a` \| `d` \| `q` |
    /// | `train.backend` | `tabular` \| `mlp` |
    /// | `train.hidden` | comma list of layer widths (mlp only) |
    /// | `train.n_explore` / `train.n_gd` / `train.n_train` / `train.n_copy` | counts |
    /// | `train.batch_size` | count |
    /// | `train.lr` | learning rate |
    /// | `train.optimizer` | `sgd` \| `adam` \| `harmonic` |
    /// | `train.lr_tau` | visit-count scale of the `harmonic` decay |
    /// | `train.init_logit` | starting logit of tabular cells |
    /// | `train.epsilon` | exploration rate |
    /// | `train.epsilon_scale` | switches to the decaying schedule `epsilon / (1 + n/scale)` |
    /// | `train.kappa` | budget-schedule sharpness |
    /// | `train.h_max` | largest budget |
    /// | `train.alpha` | budget-selection safety fraction |
    /// | `train.distance_floor` | `true` \| `false` |
    /// | `train.relabel` | `future-her` \| `reachability` |
    /// | `train.clip_targets` | `true` \| `false` |
    /// | `train.gamma` | discount (baseline variant) |
    /// | `train.gamma_grid` | comma list of discounts (discounted-arrival variant) |
    /// | `train.snapshot_every` | checkpoint interval in episodes |
    /// | `seed` | run seed |
    pub fn from_config(cfg: &mut ConfigMap) -> Result<TrainConfig> {
        let variant = match cfg.take("train.variant") {
            Some(raw) => Variant::parse(&raw).ok_or_else(|| {
                Error::config(format!("train.variant: `{raw}` is not one of c, a, d, q"))
            })?,
            None => Variant::C,
        };
        let h_max = cfg.take_parsed::<usize>("train.h_max")?.unwrap_or(10);
        let seed = cfg.take_parsed::<u64>("seed")?.unwrap_or(0);
        let mut tc = TrainConfig::defaults(variant, h_max, seed);
        if let Some(raw) = cfg.take("train.backend") {
            tc.backend = match raw.as_str() {
                "tabular" => Backend::Tabular,
                "mlp" => Backend::Mlp {
                    hidden: vec![64, 64],
                },
                other => {
                    return Err(Error::config(format!(
                        "train.backend: `{other}` is not tabular or mlp"
                    )))
                }
            };
        }
        if let Some(raw) = cfg.take("train.hidden") {
            let hidden = parse_list::<usize>(&raw, "train.hidden")?;
            match &mut tc.backend {
                Backend::Mlp { hidden: h } => *h = hidden,
                Backend::Tabular => {
                    return Err(Error::config("train.hidden requires train.backend = mlp"))
                }
            }
        }
        tc.n_explore = cfg.take_parsed("train.n_explore")?.unwrap_or(tc.n_explore);
        tc.n_gd = cfg.take_parsed("train.n_gd")?.unwrap_or(tc.n_gd);
        tc.n_train = cfg.take_parsed("train.n_train")?.unwrap_or(tc.n_train);
        tc.n_copy = cfg.take_parsed("train.n_copy")?.unwrap_or(tc.n_copy);
        tc.batch_size = cfg.take_parsed("train.batch_size")?.unwrap_or(tc.batch_size);
        tc.lr = cfg.take_parsed("train.lr")?.unwrap_or(tc.lr);
        if let Some(raw) = cfg.take("train.optimizer") {
            tc.optimizer = match raw.as_str() {
                "sgd" => OptimKind::Sgd,
                "adam" => OptimKind::Adam,
                "harmonic" => OptimKind::Harmonic,
                other => {
                    return Err(Error::config(format!(
                        "train.optimizer: `{other}` is not sgd, adam, or harmonic"
                    )))
                }
            };
        }
        tc.lr_tau = cfg.take_parsed("train.lr_tau")?.unwrap_or(tc.lr_tau);
        tc.init_logit = cfg.take_parsed("train.init_logit")?.unwrap_or(tc.init_logit);
        let eps0 = cfg.take_parsed::<f64>("train.epsilon")?;
        match (eps0, cfg.take_parsed::<f64>("train.epsilon_scale")?) {
            (None, None) => {}
            (Some(e), None) => tc.epsilon = EpsSchedule::Constant(e),
            (Some(e), Some(scale)) => tc.epsilon = EpsSchedule::Harmonic { eps0: e, scale },
            (None, Some(_)) => {
                return Err(Error::config(
                    "train.epsilon_scale requires train.epsilon (the starting rate)",
                ))
            }
        }
        tc.kappa = cfg.take_parsed("train.kappa")?.unwrap_or(tc.kappa);
        tc.alpha = cfg.take_parsed("train.alpha")?.unwrap_or(tc.alpha);
        tc.distance_floor = cfg
            .take_parsed("train.distance_floor")?
            .unwrap_or(tc.distance_floor);
        if let Some(raw) = cfg.take("train.relabel") {
            tc.relabel.mode = match raw.as_str() {
                "future-her" => RelabelMode::FutureHer,
                "reachability" => RelabelMode::Reachability,
                other => {
                    return Err(Error::config(format!(
                        "train.relabel: `{other}` is not future-her or reachability"
                    )))
                }
            };
        }
        tc.relabel.clip_targets = cfg
            .take_parsed("train.clip_targets")?
            .unwrap_or(tc.relabel.clip_targets);
        tc.gamma = cfg.take_parsed("train.gamma")?.unwrap_or(tc.gamma);
        if let Some(raw) = cfg.take("train.gamma_grid") {
            tc.gamma_grid = parse_list::<f64>(&raw, "train.gamma_grid")?;
        }
        if let Some(every) = cfg.take_parsed::<usize>("train.snapshot_every")? {
            tc.snapshot_every = Some(every);
        }
        tc.validate()?;
        Ok(tc)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_train < 1 || self.n_copy < 1 || self.batch_size < 1 {
            return Err(Error::config(
                "batch counts and the copy period must be at least 1",
            ));
        }
        if self.h_max < 1 {
            return Err(Error::config("h_max must be at least 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config("learning rate must be positive"));
        }
        if !(self.lr_tau > 0.0 && self.lr_tau.is_finite()) {
            return Err(Error::config("lr_tau must be positive"));
        }
        if !self.init_logit.is_finite() {
            return Err(Error::config("init_logit must be finite"));
        }
        if self.kappa < 0.0 {
            return Err(Error::config("kappa must be non-negative"));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::config("alpha must be in (0, 1]"));
        }
        let eps_now = self.epsilon.at(0);
        if !(0.0..=1.0).contains(&eps_now) {
            return Err(Error::config("epsilon must be in [0, 1]"));
        }
        match self.variant {
            Variant::Q => {
                if !(0.0..1.0).contains(&self.gamma) {
                    return Err(Error::config("the baseline needs gamma in [0, 1)"));
                }
            }
            Variant::D => {
                if self.gamma_grid.is_empty()
                    || self.gamma_grid.iter().any(|&g| !(0.0..=1.0).contains(&g))
                {
                    return Err(Error::config(
                        "discount grid must be non-empty with entries in [0, 1]",
                    ));
                }
                if !(0.0..=1.0).contains(&self.gamma) {
                    return Err(Error::config("gamma must be in [0, 1]"));
                }
            }
            Variant::C | Variant::A => {}
        }
        Ok(())
    }

    /// Loss is pinned by variant: the probabilistic recursions train on the
    /// logit loss (whose single-sample gradient is unbiased), the baseline
    /// keeps its conventional squared error.
    pub fn loss(&self) -> Loss {
        match self.variant {
            Variant::Q => Loss::Squared,
            _ => Loss::Bce,
        }
    }

    /// The conditioning axis a net trained under this configuration carries.
    pub fn axis(&self) -> AxisInfo {
        match self.variant {
            Variant::C | Variant::A => AxisInfo::Horizon { h_max: self.h_max },
            Variant::D => AxisInfo::Gamma {
                grid: self.gamma_grid.clone(),
            },
            Variant::Q => AxisInfo::Fixed { gamma: self.gamma },
        }
    }

    /// Conditioning level and scalar the behavior/evaluation policy uses
    /// when the net is not budget-indexed.
    pub fn fixed_level(&self) -> Option<(usize, f64)> {
        match self.variant {
            Variant::C | Variant::A => None,
            Variant::D => Some((nearest_level(&self.gamma_grid, self.gamma), self.gamma)),
            Variant::Q => Some((0, 0.0)),
        }
    }
}

/// Grid index closest to `gamma` (ties to the lower index).
pub fn nearest_level(grid: &[f64], gamma: f64) -> usize {
    let mut best = 0;
    for (i, &g) in grid.iter().enumerate().skip(1) {
        if (g - gamma).abs() < (grid[best] - gamma).abs() {
            best = i;
        }
    }
    best
}

/// Parses `"a, b, c"` into a vector, reporting the config key on failure.
fn parse_list<T: std::str::FromStr>(raw: &str, key: &str) -> Result<Vec<T>> {
    raw.split(',')
        .map(|part| {
            part.trim().parse::<T>().map_err(|_| {
                Error::config(format!(
                    "{key}: cannot parse `{}` as {}",
                    part.trim(),
                    std::any::type_name::<T>()
                ))
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct EpisodeRecord {
    /// Goal-directed episode number, 0-based.
    pub episode: usize,
    pub success: bool,
    pub length: usize,
    /// Mean loss over the batches that followed this episode.
    pub mean_loss: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub explore_episodes: usize,
    pub records: Vec<EpisodeRecord>,
    pub training_steps: u64,
    pub wall_ms: u128,
}

/// Receives per-episode metrics and interval checkpoints during training.
pub trait TrainSink {
    fn on_episode(&mut self, _rec: &EpisodeRecord) -> Result<()> {
        Ok(())
    }
    fn on_snapshot(&mut self, _episode: usize, _ckpt: &Checkpoint) -> Result<()> {
        Ok(())
    }
}

/// Discards everything.
pub struct NoSink;

impl TrainSink for NoSink {}

/// Everything target construction needs besides the samples themselves.
pub struct TargetSpec<'a> {
    pub variant: Variant,
    pub env: &'a dyn Environment,
    pub mdp: Option<&'a MdpSpec>,
    pub h_max: usize,
    /// Zero the target when the goal is provably out of metric range of the
    /// remaining budget.
    pub clip_targets: bool,
    /// Per-sample `(level, discount)` pairs for the discounted-first-arrival
    /// variant; ignored by the others.
    pub gammas: Option<&'a [(usize, f64)]>,
    /// Discount of the baseline variant.
    pub gamma_q: f64,
}

impl TargetSpec<'_> {
    fn fit_query(&self, t: &TrainSample, i: usize) -> crate::approx::Query {
        let (level, scalar) = match self.variant {
            Variant::C | Variant::A => (t.h, t.h as f64 / self.h_max as f64),
            Variant::D => self.gammas.expect("discount draws supplied")[i],
            Variant::Q => (0, 0.0),
        };
        build_query(self.env, self.mdp, &t.s, &t.goal, level, scalar)
    }

    fn boot_query(&self, t: &TrainSample, i: usize) -> crate::approx::Query {
        let (level, scalar) = match self.variant {
            Variant::C | Variant::A => {
                ((t.h - 1), (t.h - 1) as f64 / self.h_max as f64)
            }
            Variant::D => self.gammas.expect("discount draws supplied")[i],
            Variant::Q => (0, 0.0),
        };
        build_query(self.env, self.mdp, &t.s_next, &t.goal, level, scalar)
    }
}

/// One fit example per sample: the recursion's base cases are answered by
/// the goal predicate, everything else bootstraps from the frozen net.
pub fn make_targets(
    spec: &TargetSpec,
    samples: &[TrainSample],
    frozen: &ValueNet,
) -> Vec<FitSample> {
    samples
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let y = match spec.variant {
                Variant::C => {
                    if t.hit_s {
                        // The source already satisfies the goal: a sure
                        // thing at any budget.
                        1.0
                    } else if t.hit_next {
                        // The landing satisfies it, and "within the budget"
                        // keeps it satisfied.
                        1.0
                    } else if t.terminal_sink {
                        0.0
                    } else if t.h == 1 {
                        // Budget spent; only the landing check was left.
                        0.0
                    } else if spec.clip_targets
                        && spec.env.distance(&t.s_next, &t.goal) > (t.h - 1) as f64
                    {
                        0.0
                    } else {
                        frozen.max_prob(&spec.boot_query(t, i))
                    }
                }
                Variant::A => {
                    // Exact-time arrival: no credit for already being there.
                    if t.h == 1 || t.terminal_sink {
                        // Budget spent, or parked forever: the landing state
                        // is where the process sits at the deadline.
                        if t.hit_next {
                            1.0
                        } else {
                            0.0
                        }
                    } else if spec.clip_targets
                        && spec.env.distance(&t.s_next, &t.goal) > (t.h - 1) as f64
                    {
                        0.0
                    } else {
                        frozen.max_prob(&spec.boot_query(t, i))
                    }
                }
                Variant::D => {
                    let (_, gamma) = spec.gammas.expect("discount draws supplied")[i];
                    if t.hit_next {
                        1.0
                    } else if t.terminal_sink {
                        0.0
                    } else {
                        gamma * frozen.max_prob(&spec.boot_query(t, i))
                    }
                }
                Variant::Q => {
                    if t.hit_s {
                        // Episodes terminate on the goal; the sparse reward
                        // is all that remains.
                        1.0
                    } else if t.hit_next {
                        spec.gamma_q
                    } else if t.terminal_sink {
                        0.0
                    } else {
                        spec.gamma_q * frozen.max_prob(&spec.boot_query(t, i))
                    }
                }
            };
            FitSample {
                query: spec.fit_query(t, i),
                action: t.a,
                target: y,
            }
        })
        .collect()
}

/// Goalless uniform-action rollout, cut short only by a dead end.
pub fn explore_rollout(
    env: &dyn Environment,
    index: u64,
    rng_env: &mut ChaCha8Rng,
    rng_explore: &mut ChaCha8Rng,
) -> Episode {
    let n_actions = env.action_count();
    let mut s = env.initial_state(StartMode::Train, rng_env);
    let mut steps = Vec::new();
    for _ in 0..env.max_episode_length() {
        let a = rng_explore.random_range(0..n_actions);
        let out = env.step(&s, a, rng_env);
        steps.push(TransitionRec {
            s,
            a,
            s_next: out.next,
            terminal_sink: out.terminal_sink,
        });
        if out.terminal_sink {
            break;
        }
        s = out.next;
    }
    Episode {
        index,
        behavior_goal: None,
        steps,
    }
}

/// Epsilon-greedy goal chase: budget-free greedy actions with uniform noise,
/// until the goal, a dead end, or the step cap. A start already on the goal
/// yields an empty trace.
#[allow(clippy::too_many_arguments)]
pub fn behavior_rollout(
    env: &dyn Environment,
    values: &dyn AccessValues,
    selector: &HorizonSelector,
    distance_floor: bool,
    goal: &Goal,
    epsilon: f64,
    index: u64,
    rng_env: &mut ChaCha8Rng,
    rng_explore: &mut ChaCha8Rng,
) -> Episode {
    let n_actions = env.action_count();
    let h_cap = *selector.horizons.last().expect("validated non-empty");
    let mut s = env.initial_state(StartMode::Train, rng_env);
    let mut steps = Vec::new();
    if env.goal_check(&s, goal) {
        return Episode {
            index,
            behavior_goal: Some(*goal),
            steps,
        };
    }
    for _ in 0..env.max_episode_length() {
        let greedy = if distance_floor {
            let narrowed = HorizonSelector {
                alpha: selector.alpha,
                horizons: distance_floored_horizons(env, &s, goal, h_cap),
            };
            horizon_free_action(values, &s, goal, &narrowed)
        } else {
            horizon_free_action(values, &s, goal, selector)
        };
        let a = epsilon_greedy(greedy, epsilon, n_actions, rng_explore);
        let out = env.step(&s, a, rng_env);
        steps.push(TransitionRec {
            s,
            a,
            s_next: out.next,
            terminal_sink: out.terminal_sink,
        });
        if out.terminal_sink || env.goal_check(&out.next, goal) {
            break;
        }
        s = out.next;
    }
    Episode {
        index,
        behavior_goal: Some(*goal),
        steps,
    }
}

pub struct Trainer<'a> {
    env: &'a dyn Environment,
    pub cfg: TrainConfig,
    mdp: Option<MdpSpec>,
    pub net: ValueNet,
    frozen: ValueNet,
    opt: Optimizer,
    pub buffer: ReplayBuffer,
    schedule: HSchedule,
    selector: HorizonSelector,
    step: u64,
    episodes_seen: u64,
    rng_env: ChaCha8Rng,
    rng_explore: ChaCha8Rng,
    rng_goal: ChaCha8Rng,
    rng_replay: ChaCha8Rng,
}

impl<'a> Trainer<'a> {
    pub fn new(env: &'a dyn Environment, cfg: TrainConfig) -> Result<Trainer<'a>> {
        cfg.validate()?;
        let mdp = match cfg.backend {
            Backend::Tabular => Some(
                env.enumerate()
                    .ok_or_else(|| Error::NotEnumerable(env.spec().name.clone()))?,
            ),
            Backend::Mlp { .. } => None,
        };
        let net = match &cfg.backend {
            Backend::Tabular => {
                let m = mdp.as_ref().expect("built above");
                let n_levels = match cfg.variant {
                    Variant::C | Variant::A => cfg.h_max + 1,
                    Variant::D => cfg.gamma_grid.len(),
                    Variant::Q => 1,
                };
                ValueNet::Tabular(TabularFn::with_init(
                    m.n_states(),
                    m.action_count,
                    m.n_goals(),
                    n_levels,
                    cfg.init_logit,
                ))
            }
            Backend::Mlp { hidden } => {
                let mut sizes = vec![env.encoded_len()];
                sizes.extend_from_slice(hidden);
                sizes.push(env.action_count());
                ValueNet::Mlp(MlpFn::init(sizes, cfg.seed))
            }
        };
        let opt = match cfg.optimizer {
            OptimKind::Sgd => Optimizer::sgd(cfg.lr),
            OptimKind::Adam => Optimizer::adam(cfg.lr, net.n_params()),
            OptimKind::Harmonic => Optimizer::harmonic(cfg.lr, cfg.lr_tau, net.n_params()),
        };
        let schedule = HSchedule::new(cfg.kappa, cfg.h_max)?;
        let selector = HorizonSelector::new(cfg.alpha, (1..=cfg.h_max).collect())?;
        let frozen = net.clone_target();
        Ok(Trainer {
            env,
            mdp,
            net,
            frozen,
            opt,
            buffer: ReplayBuffer::new(),
            schedule,
            selector,
            step: 0,
            episodes_seen: 0,
            rng_env: stream_rng(cfg.seed, Stream::EnvDynamics, 0),
            rng_explore: stream_rng(cfg.seed, Stream::Exploration, 0),
            rng_goal: stream_rng(cfg.seed, Stream::GoalSampling, 0),
            rng_replay: stream_rng(cfg.seed, Stream::ReplaySampling, 0),
            cfg,
        })
    }

    /// View of the live net for action selection.
    pub fn values(&self) -> NetValues<'_> {
        NetValues {
            net: &self.net,
            env: self.env,
            mdp: self.mdp.as_ref(),
            h_max: self.cfg.h_max,
            fixed: self.cfg.fixed_level(),
        }
    }

    pub fn mdp(&self) -> Option<&MdpSpec> {
        self.mdp.as_ref()
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::new(
            &self.net,
            self.cfg.variant,
            &self.env.spec().name,
            self.env.action_count(),
            self.cfg.axis(),
            self.cfg.seed,
            self.step,
        )
    }

    fn next_episode_index(&mut self) -> u64 {
        let i = self.episodes_seen;
        self.episodes_seen += 1;
        i
    }

    /// One gradient batch at training fraction `progress`; returns the batch
    /// loss.
    fn train_batch(&mut self, progress: f64) -> Result<f64> {
        if self.step % self.cfg.n_copy as u64 == 0 {
            self.frozen = self.net.clone_target();
        }
        let samples = sample_batch(
            &self.buffer,
            self.cfg.batch_size,
            self.env,
            &self.schedule,
            progress,
            &self.cfg.relabel,
            &mut self.rng_replay,
        )?;
        let gammas: Option<Vec<(usize, f64)>> = match self.cfg.variant {
            Variant::D => Some(
                samples
                    .iter()
                    .map(|_| match self.cfg.backend {
                        // The table can only represent its grid levels, so
                        // draw uniformly among them.
                        Backend::Tabular => {
                            let k = self.rng_replay.random_range(0..self.cfg.gamma_grid.len());
                            (k, self.cfg.gamma_grid[k])
                        }
                        Backend::Mlp { .. } => (0, self.rng_replay.random::<f64>()),
                    })
                    .collect(),
            ),
            _ => None,
        };
        let spec = TargetSpec {
            variant: self.cfg.variant,
            env: self.env,
            mdp: self.mdp.as_ref(),
            h_max: self.cfg.h_max,
            clip_targets: self.cfg.relabel.clip_targets,
            gammas: gammas.as_deref(),
            gamma_q: self.cfg.gamma,
        };
        let fits = make_targets(&spec, &samples, &self.frozen);
        let loss = self.net.fit_batch(&fits, self.cfg.loss(), &mut self.opt);
        self.step += 1;
        if !loss.is_finite() {
            return Err(Error::Diverged {
                step: self.step,
                what: format!("batch loss {loss}"),
            });
        }
        Ok(loss)
    }

    /// Full run per the configured budget.
    pub fn run(&mut self, sink: &mut dyn TrainSink) -> Result<TrainReport> {
        let started = std::time::Instant::now();
        for _ in 0..self.cfg.n_explore {
            let idx = self.next_episode_index();
            let ep = explore_rollout(self.env, idx, &mut self.rng_env, &mut self.rng_explore);
            if !ep.steps.is_empty() {
                self.buffer.append(ep, self.env.max_episode_length())?;
            }
        }
        let mut records = Vec::with_capacity(self.cfg.n_gd);
        for e in 0..self.cfg.n_gd {
            let epsilon = self.cfg.epsilon.at(e);
            let goal = self.env.sample_goal(&mut self.rng_goal);
            let idx = self.next_episode_index();
            let ep = {
                let values = NetValues {
                    net: &self.net,
                    env: self.env,
                    mdp: self.mdp.as_ref(),
                    h_max: self.cfg.h_max,
                    fixed: self.cfg.fixed_level(),
                };
                behavior_rollout(
                    self.env,
                    &values,
                    &self.selector,
                    self.cfg.distance_floor,
                    &goal,
                    epsilon,
                    idx,
                    &mut self.rng_env,
                    &mut self.rng_explore,
                )
            };
            let success = match ep.steps.last() {
                Some(last) => self.env.goal_check(&last.s_next, &goal),
                None => true, // started on the goal
            };
            let length = ep.steps.len();
            if !ep.steps.is_empty() {
                self.buffer.append(ep, self.env.max_episode_length())?;
            }
            let mut loss_sum = 0.0;
            let progress = e as f64 / self.cfg.n_gd.max(1) as f64;
            if !self.buffer.is_empty() {
                for _ in 0..self.cfg.n_train {
                    loss_sum += self.train_batch(progress)?;
                }
            }
            let rec = EpisodeRecord {
                episode: e,
                success,
                length,
                mean_loss: loss_sum / self.cfg.n_train as f64,
                epsilon,
            };
            sink.on_episode(&rec)?;
            records.push(rec);
            if let Some(every) = self.cfg.snapshot_every {
                if every > 0 && (e + 1) % every == 0 {
                    sink.on_snapshot(e, &self.checkpoint())?;
                }
            }
        }
        Ok(TrainReport {
            explore_episodes: self.cfg.n_explore,
            records,
            training_steps: self.step,
            wall_ms: started.elapsed().as_millis(),
        })
    }
}

/// Train to completion, returning the learned net and the report.
pub fn train(env: &dyn Environment, cfg: TrainConfig) -> Result<(ValueNet, TrainReport)> {
    train_with_sink(env, cfg, &mut NoSink)
}

pub fn train_with_sink(
    env: &dyn Environment,
    cfg: TrainConfig,
    sink: &mut dyn TrainSink,
) -> Result<(ValueNet, TrainReport)> {
    let mut trainer = Trainer::new(env, cfg)?;
    let report = trainer.run(sink)?;
    Ok((trainer.net, report))
}
