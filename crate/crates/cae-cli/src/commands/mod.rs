//! Subcommand implementations and the plumbing they share.

pub mod compare;
pub mod eval;
pub mod oracle;
pub mod plot;
pub mod train;

use crate::RunArgs;
use cae_core::approx::{AxisInfo, ValueNet};
use cae_core::config::ConfigMap;
use cae_core::env::{ActionId, Environment, Goal, MdpSpec, State};
use cae_core::policy::{
    distance_floored_horizons, horizon_free_action, HorizonSelector, NetValues,
};
use cae_core::{Error, Result, Variant};

/// Loads the config file (if any) and layers the command-line overrides on
/// top, returning the map plus its canonical text — the snapshot stored in
/// the manifest. Callers consume keys from the map afterwards.
pub(crate) fn load_config(
    args: &RunArgs,
    variant: Option<&str>,
) -> Result<(ConfigMap, String)> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                Error::config(format!("cannot read config `{}`: {e}", path.display()))
            })?;
            ConfigMap::parse(&text)?
        }
        None => ConfigMap::new(),
    };
    if let Some(v) = variant {
        cfg.set("train.variant", v);
    }
    if let Some(seed) = args.seed {
        cfg.set("seed", seed);
    }
    if let Some(h) = args.h_max {
        cfg.set("train.h_max", h);
    }
    if let Some(a) = args.alpha {
        cfg.set("train.alpha", a);
    }
    let snapshot = cfg.to_text();
    Ok((cfg, snapshot))
}

/// `"c,a,d"` → variants, preserving order; `None` → all four.
pub(crate) fn parse_variants(raw: Option<&str>) -> Result<Vec<Variant>> {
    let Some(raw) = raw else {
        return Ok(vec![Variant::C, Variant::A, Variant::D, Variant::Q]);
    };
    raw.split(',')
        .map(|part| {
            Variant::parse(part.trim()).ok_or_else(|| {
                Error::config(format!(
                    "--variant: `{}` is not one of c, a, d, q",
                    part.trim()
                ))
            })
        })
        .collect()
}

pub(crate) fn enumerate_or_err(env: &dyn Environment) -> Result<MdpSpec> {
    env.enumerate()
        .ok_or_else(|| Error::NotEnumerable(env.spec().name.clone()))
}

/// Greedy evaluation policy over a trained net: budget-conditioned nets pick
/// the budget per state (smallest one within `alpha` of the best attainable
/// value), discount-conditioned and unconditioned nets act at their fixed
/// level.
pub(crate) struct GreedyPolicy<'a> {
    values: NetValues<'a>,
    selector: HorizonSelector,
    distance_floor: bool,
    alpha: f64,
    h_range: usize,
}

impl<'a> GreedyPolicy<'a> {
    /// `gamma_pick` selects the discount level of a discount-conditioned
    /// net (nearest grid entry; default the largest). `h_cap` restricts the
    /// budgets considered without touching the feature normalizer, which
    /// must stay whatever the net was trained with.
    pub fn new(
        env: &'a dyn Environment,
        mdp: Option<&'a MdpSpec>,
        net: &'a ValueNet,
        axis: &AxisInfo,
        alpha: f64,
        distance_floor: bool,
        gamma_pick: Option<f64>,
        h_cap: Option<usize>,
    ) -> Result<GreedyPolicy<'a>> {
        let (h_norm, h_range, fixed) = match axis {
            AxisInfo::Horizon { h_max } => {
                let range = h_cap.unwrap_or(*h_max).min(*h_max).max(1);
                (*h_max, range, None)
            }
            AxisInfo::Gamma { grid } => {
                if grid.is_empty() {
                    return Err(Error::config("discount grid is empty"));
                }
                let gamma = gamma_pick.unwrap_or(*grid.last().expect("non-empty"));
                let level = nearest(grid, gamma);
                (1, 1, Some((level, grid[level])))
            }
            AxisInfo::Fixed { .. } => (1, 1, Some((0, 0.0))),
        };
        let selector = HorizonSelector::new(alpha, (1..=h_range).collect())?;
        Ok(GreedyPolicy {
            values: NetValues {
                net,
                env,
                mdp,
                h_max: h_norm.max(1),
                fixed,
            },
            selector,
            distance_floor,
            alpha,
            h_range,
        })
    }

    pub fn act(&self, s: &State, g: &Goal) -> ActionId {
        if self.distance_floor && self.values.fixed.is_none() {
            let horizons =
                distance_floored_horizons(self.values.env, s, g, self.h_range);
            let sel = HorizonSelector::new(self.alpha, horizons)
                .expect("floored budget range is non-empty and ascending");
            return horizon_free_action(&self.values, s, g, &sel);
        }
        horizon_free_action(&self.values, s, g, &self.selector)
    }
}

pub(crate) fn nearest(grid: &[f64], gamma: f64) -> usize {
    let mut best = 0;
    for (i, &g) in grid.iter().enumerate() {
        if (g - gamma).abs() < (grid[best] - gamma).abs() {
            best = i;
        }
    }
    best
}
