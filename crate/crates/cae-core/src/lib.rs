//! Goal-conditioned reachability learning with horizon-aware value functions.
//!
//! The crate estimates, for a state `s`, action `a`, goal `g` and step budget
//! `h`, the probability that an agent reaches the goal within the budget. The
//! estimate drives policies that trade off path length against success
//! probability by choosing the budget they act under.
//!
//! Modules:
//! - [`env`]: discrete-action environments plus dense transition models for
//!   enumerable state spaces.
//! - [`oracle`]: exact dynamic-programming solutions (optimal and fixed-policy
//!   reach probabilities, exact-arrival and discounted variants, a discounted
//!   action-value baseline) used as ground truth everywhere else.
//! - [`approx`]: tabular and multilayer-perceptron function approximators with
//!   hand-written gradients.
//! - [`replay`]: episode storage, horizon scheduling, hindsight goal
//!   relabeling and bootstrap target construction.
//! - [`learner`]: the training loop tying the above together.
//! - [`policy`]: greedy/argmax machinery, budget selection, budget-free
//!   policies and most-likely-trajectory rendering.
//! - [`eval`]: rollout evaluation, difficulty strata, heatmaps.
//! - [`plot`]: self-contained SVG renderers.
//! - [`config`]: strict `key = value` configuration files.
//! - [`rng`]: one master seed, split into named ChaCha streams.

pub mod approx;
pub mod config;
pub mod env;
pub mod error;
pub mod eval;
pub mod learner;
pub mod oracle;
pub mod par;
pub mod plot;
pub mod policy;
pub mod replay;
pub mod rng;

pub use error::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Which recursion a table, checkpoint or training run estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Reach the goal within `h` steps (cumulative; monotone in `h`).
    C,
    /// Arrive at the goal in exactly `h` steps.
    A,
    /// Discounted first-arrival value `E[gamma^(T-1)]` over a gamma grid.
    D,
    /// Discounted action value with goal-entry reward, single gamma.
    Q,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::C => "c",
            Variant::A => "a",
            Variant::D => "d",
            Variant::Q => "q",
        }
    }

    pub fn parse(s: &str) -> Option<Variant> {
        match s {
            "c" | "C" => Some(Variant::C),
            "a" | "A" => Some(Variant::A),
            "d" | "D" => Some(Variant::D),
            "q" | "Q" => Some(Variant::Q),
            _ => None,
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}
