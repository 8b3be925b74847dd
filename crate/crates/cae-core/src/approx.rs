//! Tabular and multilayer-perceptron value approximators.
//!
//! Both estimate per-action probabilities through a sigmoid over logits. The
//! tabular backend keeps one logit per `(state, action, goal, level)` cell
//! and is exact on enumerable models; the network backend consumes the
//! environments' feature encodings. Gradients are written out by hand and
//! verified against finite differences in the tests.
//!
//! Batch gradients are accumulated per fixed-size chunk and the chunk
//! partials are folded in chunk order, so results are bit-identical whether
//! chunks run on one thread or many.

use crate::env::ActionId;
use crate::par::{self, REDUCE_CHUNK};
use crate::rng::{stream_rng, Stream};
use crate::{Error, Result, Variant};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Stable `1 / (1 + exp(-z))`.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Stable `ln(1 + exp(z))`.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Per-sample loss on a single sigmoid head, parameterized by the logit so
/// both variants stay finite for extreme logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    /// Cross-entropy against a probability target: `softplus(z) - y z`.
    Bce,
    /// Squared error on the probability: `(sigmoid(z) - y)^2`.
    Squared,
}

impl Loss {
    pub fn value(self, z: f64, y: f64) -> f64 {
        match self {
            Loss::Bce => softplus(z) - y * z,
            Loss::Squared => {
                let d = sigmoid(z) - y;
                d * d
            }
        }
    }

    /// Derivative with respect to the logit.
    pub fn dz(self, z: f64, y: f64) -> f64 {
        let p = sigmoid(z);
        match self {
            Loss::Bce => p - y,
            Loss::Squared => 2.0 * (p - y) * p * (1.0 - p),
        }
    }
}

/// Indices into a tabular backend: state, goal and conditioning level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TabIdx {
    pub s: usize,
    pub g: usize,
    pub k: usize,
}

/// One lookup point, carrying whichever representation the backend needs:
/// the feature vector for networks, table indices for tabular runs.
#[derive(Debug, Clone)]
pub struct Query {
    pub features: Vec<f64>,
    pub indices: Option<TabIdx>,
}

/// One supervised example: all heads are evaluated, only `action`'s head
/// receives gradient toward `target`.
#[derive(Debug, Clone)]
pub struct FitSample {
    pub query: Query,
    pub action: ActionId,
    pub target: f64,
}

/// Gradient descent state sized to one parameter vector.
pub enum Optimizer {
    Sgd {
        lr: f64,
    },
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
        t: u64,
        m: Vec<f64>,
        v: Vec<f64>,
    },
    /// Per-parameter decaying steps `lr / (1 + n_i / tau)`, where `n_i`
    /// counts how often parameter `i` has been touched. The decay averages
    /// away the sampling noise of stochastic targets, which a constant step
    /// cannot do; the natural fit for tabular cells.
    Harmonic {
        lr: f64,
        tau: f64,
        n: Vec<f64>,
    },
}

impl Optimizer {
    pub fn sgd(lr: f64) -> Optimizer {
        Optimizer::Sgd { lr }
    }

    pub fn adam(lr: f64, n_params: usize) -> Optimizer {
        Optimizer::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    pub fn harmonic(lr: f64, tau: f64, n_params: usize) -> Optimizer {
        Optimizer::Harmonic {
            lr,
            tau,
            n: vec![0.0; n_params],
        }
    }

    pub fn set_lr(&mut self, new_lr: f64) {
        match self {
            Optimizer::Sgd { lr }
            | Optimizer::Adam { lr, .. }
            | Optimizer::Harmonic { lr, .. } => *lr = new_lr,
        }
    }

    pub fn lr(&self) -> f64 {
        match self {
            Optimizer::Sgd { lr }
            | Optimizer::Adam { lr, .. }
            | Optimizer::Harmonic { lr, .. } => *lr,
        }
    }

    fn apply_dense(&mut self, params: &mut [f64], grad: &[f64]) {
        match self {
            Optimizer::Sgd { lr } => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= *lr * g;
                }
            }
            Optimizer::Adam {
                lr,
                beta1,
                beta2,
                eps,
                t,
                m,
                v,
            } => {
                *t += 1;
                let bc1 = 1.0 - beta1.powi(*t as i32);
                let bc2 = 1.0 - beta2.powi(*t as i32);
                for i in 0..params.len() {
                    m[i] = *beta1 * m[i] + (1.0 - *beta1) * grad[i];
                    v[i] = *beta2 * v[i] + (1.0 - *beta2) * grad[i] * grad[i];
                    params[i] -= *lr * (m[i] / bc1) / ((v[i] / bc2).sqrt() + *eps);
                }
            }
            Optimizer::Harmonic { lr, tau, n } => {
                for i in 0..params.len() {
                    n[i] += 1.0;
                    params[i] -= *lr / (1.0 + n[i] / *tau) * grad[i];
                }
            }
        }
    }

    /// Sparse update for tabular gradients: `(cell, summed gradient, number
    /// of occurrences)` rows. The batch-mean convention belongs to the dense
    /// adaptive path, so Adam expects pre-scaled sums; the two stochastic-
    /// approximation rules take raw per-occurrence sums, and the decaying
    /// rule advances a cell's visit count by its occurrences. Adam's moments
    /// update only at touched indices; its shared step counter still
    /// advances per batch.
    fn apply_sparse(&mut self, params: &mut [f64], grad: &[(usize, f64, u32)]) {
        match self {
            Optimizer::Sgd { lr } => {
                for &(i, g, _) in grad {
                    params[i] -= *lr * g;
                }
            }
            Optimizer::Adam {
                lr,
                beta1,
                beta2,
                eps,
                t,
                m,
                v,
            } => {
                *t += 1;
                let bc1 = 1.0 - beta1.powi(*t as i32);
                let bc2 = 1.0 - beta2.powi(*t as i32);
                for &(i, g, _) in grad {
                    m[i] = *beta1 * m[i] + (1.0 - *beta1) * g;
                    v[i] = *beta2 * v[i] + (1.0 - *beta2) * g * g;
                    params[i] -= *lr * (m[i] / bc1) / ((v[i] / bc2).sqrt() + *eps);
                }
            }
            Optimizer::Harmonic { lr, tau, n } => {
                for &(i, g, count) in grad {
                    n[i] += count as f64;
                    params[i] -= *lr / (1.0 + n[i] / *tau) * g;
                }
            }
        }
    }
}

/// One logit per `(state, action, goal, level)` cell. Layout matches the
/// exact tables: `[goal][level][state][action]`.
#[derive(Clone, Debug)]
pub struct TabularFn {
    pub n_states: usize,
    pub n_actions: usize,
    pub n_goals: usize,
    pub n_levels: usize,
    logits: Vec<f64>,
}

impl TabularFn {
    /// Zero-initialized: every probability starts at 0.5.
    pub fn new(n_states: usize, n_actions: usize, n_goals: usize, n_levels: usize) -> TabularFn {
        TabularFn::with_init(n_states, n_actions, n_goals, n_levels, 0.0)
    }

    /// Every cell starts at logit `z0`. A strongly negative `z0` starts all
    /// probabilities near zero, so bootstrapped maxima never inherit phantom
    /// optimism from cells that have not been visited yet — values then grow
    /// only from real goal-hitting evidence, mirroring how the exact tables
    /// build up from their all-zero base case.
    pub fn with_init(
        n_states: usize,
        n_actions: usize,
        n_goals: usize,
        n_levels: usize,
        z0: f64,
    ) -> TabularFn {
        TabularFn {
            n_states,
            n_actions,
            n_goals,
            n_levels,
            logits: vec![z0; n_states * n_actions * n_goals * n_levels],
        }
    }

    #[inline]
    fn base(&self, idx: TabIdx) -> usize {
        debug_assert!(idx.s < self.n_states && idx.g < self.n_goals && idx.k < self.n_levels);
        ((idx.g * self.n_levels + idx.k) * self.n_states + idx.s) * self.n_actions
    }

    pub fn logit(&self, idx: TabIdx, a: ActionId) -> f64 {
        self.logits[self.base(idx) + a]
    }

    pub fn probs(&self, idx: TabIdx) -> Vec<f64> {
        let b = self.base(idx);
        self.logits[b..b + self.n_actions]
            .iter()
            .map(|&z| sigmoid(z))
            .collect()
    }

    pub fn n_params(&self) -> usize {
        self.logits.len()
    }

    /// One batch step: sparse per-cell gradients, mean loss returned.
    ///
    /// A cell's update is independent of how many *other* cells the batch
    /// touches, so per-occurrence gradients are summed raw for the
    /// stochastic-approximation rules; only Adam, whose moments emulate the
    /// dense batch-mean convention, sees the sums scaled by the batch size.
    pub fn fit_batch(&mut self, batch: &[FitSample], loss: Loss, opt: &mut Optimizer) -> f64 {
        let scale = match opt {
            Optimizer::Adam { .. } => 1.0 / batch.len() as f64,
            Optimizer::Sgd { .. } | Optimizer::Harmonic { .. } => 1.0,
        };
        let mut grad: Vec<(usize, f64)> = Vec::with_capacity(batch.len());
        let mut total = 0.0;
        for sample in batch {
            let idx = sample
                .query
                .indices
                .expect("tabular backend needs table indices");
            let i = self.base(idx) + sample.action;
            let z = self.logits[i];
            total += loss.value(z, sample.target);
            grad.push((i, loss.dz(z, sample.target) * scale));
        }
        // Repeated cells inside one batch must see the pre-step logit, so
        // merge duplicates before applying (also keeps Adam's moments sane).
        grad.sort_by_key(|&(i, _)| i);
        let mut merged: Vec<(usize, f64, u32)> = Vec::with_capacity(grad.len());
        for (i, g) in grad {
            match merged.last_mut() {
                Some(last) if last.0 == i => {
                    last.1 += g;
                    last.2 += 1;
                }
                _ => merged.push((i, g, 1)),
            }
        }
        opt.apply_sparse(&mut self.logits, &merged);
        total / batch.len() as f64
    }
}

/// Fully-connected network: linear layers with rectifier hidden units and
/// one sigmoid head per action. Parameters live in a single flat vector,
/// each layer as a row-major `out x in` block followed by its biases.
#[derive(Clone, Debug)]
pub struct MlpFn {
    pub layer_sizes: Vec<usize>,
    params: Vec<f64>,
}

impl MlpFn {
    pub fn param_count(layer_sizes: &[usize]) -> usize {
        layer_sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    /// Uniform `[-1/sqrt(fan_in), +1/sqrt(fan_in)]` weights and biases.
    pub fn init(layer_sizes: Vec<usize>, seed: u64) -> MlpFn {
        assert!(layer_sizes.len() >= 2, "need at least input and output");
        let mut rng = stream_rng(seed, Stream::ParamInit, 0);
        let mut params = Vec::with_capacity(MlpFn::param_count(&layer_sizes));
        for w in layer_sizes.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            for _ in 0..w[0] * w[1] + w[1] {
                params.push(rng.random_range(-bound..=bound));
            }
        }
        MlpFn {
            layer_sizes,
            params,
        }
    }

    /// All-zero parameters: every head outputs probability exactly 0.5.
    pub fn zeroed(layer_sizes: Vec<usize>) -> MlpFn {
        let n = MlpFn::param_count(&layer_sizes);
        MlpFn {
            layer_sizes,
            params: vec![0.0; n],
        }
    }

    pub fn from_params(layer_sizes: Vec<usize>, params: Vec<f64>) -> Result<MlpFn> {
        if params.len() != MlpFn::param_count(&layer_sizes) {
            return Err(Error::Checkpoint(format!(
                "parameter count {} does not match layer sizes {layer_sizes:?}",
                params.len()
            )));
        }
        Ok(MlpFn {
            layer_sizes,
            params,
        })
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Logits for every head.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.input_dim());
        let depth = self.layer_sizes.len() - 1;
        let mut act = x.to_vec();
        let mut offset = 0;
        for (l, w) in self.layer_sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let bias_at = offset + n_in * n_out;
            let mut next = vec![0.0; n_out];
            for (o, nx) in next.iter_mut().enumerate() {
                let row = &self.params[offset + o * n_in..offset + (o + 1) * n_in];
                let mut z = self.params[bias_at + o];
                for (wi, ai) in row.iter().zip(&act) {
                    z += wi * ai;
                }
                *nx = if l + 1 < depth { z.max(0.0) } else { z };
            }
            act = next;
            offset = bias_at + n_out;
        }
        act
    }

    pub fn probs(&self, x: &[f64]) -> Vec<f64> {
        self.forward(x).iter().map(|&z| sigmoid(z)).collect()
    }

    /// Forward pass keeping pre-activations for the backward pass.
    fn forward_cached(&self, x: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let depth = self.layer_sizes.len() - 1;
        let mut acts = vec![x.to_vec()];
        let mut pre = Vec::with_capacity(depth);
        let mut offset = 0;
        for (l, w) in self.layer_sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let bias_at = offset + n_in * n_out;
            let mut zs = vec![0.0; n_out];
            for (o, zo) in zs.iter_mut().enumerate() {
                let row = &self.params[offset + o * n_in..offset + (o + 1) * n_in];
                let mut z = self.params[bias_at + o];
                for (wi, ai) in row.iter().zip(acts[l].iter()) {
                    z += wi * ai;
                }
                *zo = z;
            }
            let a = if l + 1 < depth {
                zs.iter().map(|&z| z.max(0.0)).collect()
            } else {
                zs.clone()
            };
            pre.push(zs);
            acts.push(a);
            offset = bias_at + n_out;
        }
        (acts, pre)
    }

    /// Accumulates the (unscaled) gradient of one sample into `grad`,
    /// returning the sample's loss.
    fn accumulate_sample(&self, sample: &FitSample, loss: Loss, grad: &mut [f64]) -> f64 {
        let (acts, pre) = self.forward_cached(&sample.query.features);
        let depth = self.layer_sizes.len() - 1;
        let logits = &pre[depth - 1];
        let z = logits[sample.action];
        let value = loss.value(z, sample.target);
        let mut delta = vec![0.0; self.output_dim()];
        delta[sample.action] = loss.dz(z, sample.target);
        // Walk layers backwards, mirroring the flat layout.
        let mut offsets = Vec::with_capacity(depth);
        let mut off = 0;
        for w in self.layer_sizes.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }
        for l in (0..depth).rev() {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let w_at = offsets[l];
            let b_at = w_at + n_in * n_out;
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &mut grad[w_at + o * n_in..w_at + (o + 1) * n_in];
                for (gi, ai) in row.iter_mut().zip(acts[l].iter()) {
                    *gi += d * ai;
                }
                grad[b_at + o] += d;
            }
            if l > 0 {
                let mut prev = vec![0.0; n_in];
                for o in 0..n_out {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    let row = &self.params[w_at + o * n_in..w_at + (o + 1) * n_in];
                    for (p, wi) in prev.iter_mut().zip(row) {
                        *p += d * wi;
                    }
                }
                for (p, &z) in prev.iter_mut().zip(pre[l - 1].iter()) {
                    if z <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
        value
    }

    /// Mean-loss batch gradient. Samples are split into fixed-size chunks;
    /// chunk partials may be computed in parallel but are always folded in
    /// chunk order, so the result does not depend on the thread count.
    pub fn batch_gradient(&self, batch: &[FitSample], loss: Loss) -> (Vec<f64>, f64) {
        let n = self.n_params();
        let chunks: Vec<&[FitSample]> = batch.chunks(REDUCE_CHUNK).collect();
        let partials = par::map_collect(chunks.len(), |c| {
            let mut grad = vec![0.0; n];
            let mut total = 0.0;
            for sample in chunks[c] {
                total += self.accumulate_sample(sample, loss, &mut grad);
            }
            (grad, total)
        });
        let mut grad = vec![0.0; n];
        let mut total = 0.0;
        for (part, t) in partials {
            for (g, p) in grad.iter_mut().zip(&part) {
                *g += p;
            }
            total += t;
        }
        let scale = 1.0 / batch.len() as f64;
        for g in &mut grad {
            *g *= scale;
        }
        (grad, total * scale)
    }

    pub fn fit_batch(&mut self, batch: &[FitSample], loss: Loss, opt: &mut Optimizer) -> f64 {
        let (grad, mean_loss) = self.batch_gradient(batch, loss);
        opt.apply_dense(&mut self.params, &grad);
        mean_loss
    }
}

/// Either backend behind one interface for the training loop.
#[derive(Clone, Debug)]
pub enum ValueNet {
    Tabular(TabularFn),
    Mlp(MlpFn),
}

impl ValueNet {
    pub fn probs(&self, q: &Query) -> Vec<f64> {
        match self {
            ValueNet::Tabular(t) => t.probs(q.indices.expect("tabular query needs indices")),
            ValueNet::Mlp(m) => m.probs(&q.features),
        }
    }

    pub fn max_prob(&self, q: &Query) -> f64 {
        self.probs(q).into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn fit_batch(&mut self, batch: &[FitSample], loss: Loss, opt: &mut Optimizer) -> f64 {
        match self {
            ValueNet::Tabular(t) => t.fit_batch(batch, loss, opt),
            ValueNet::Mlp(m) => m.fit_batch(batch, loss, opt),
        }
    }

    pub fn n_params(&self) -> usize {
        match self {
            ValueNet::Tabular(t) => t.n_params(),
            ValueNet::Mlp(m) => m.n_params(),
        }
    }

    pub fn params(&self) -> &[f64] {
        match self {
            ValueNet::Tabular(t) => &t.logits,
            ValueNet::Mlp(m) => &m.params,
        }
    }

    /// Snapshot for the frozen bootstrap-target copy.
    pub fn clone_target(&self) -> ValueNet {
        self.clone()
    }
}

/// Conditioning axis metadata carried by checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AxisInfo {
    Horizon { h_max: usize },
    Gamma { grid: Vec<f64> },
    Fixed { gamma: f64 },
}

impl AxisInfo {
    pub fn len(&self) -> usize {
        match self {
            AxisInfo::Horizon { h_max } => h_max + 1,
            AxisInfo::Gamma { grid } => grid.len(),
            AxisInfo::Fixed { .. } => 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Serialized model: metadata plus the flat parameter vector. JSON numbers
/// round-trip f64 exactly (shortest-representation printing), which the
/// tests pin down.
#[derive(Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub variant: Variant,
    pub env_name: String,
    pub action_count: usize,
    pub axis: AxisInfo,
    pub backend: String,
    /// Network: `[input, hidden.., actions]`. Tabular: empty.
    pub layer_sizes: Vec<usize>,
    /// Tabular: `[states, actions, goals, levels]`. Network: absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table_dims: Option<[usize; 4]>,
    pub params: Vec<f64>,
    pub seed: u64,
    pub training_step: u64,
}

pub const CHECKPOINT_VERSION: u32 = 1;

impl Checkpoint {
    pub fn new(
        net: &ValueNet,
        variant: Variant,
        env_name: &str,
        action_count: usize,
        axis: AxisInfo,
        seed: u64,
        training_step: u64,
    ) -> Checkpoint {
        let (backend, layer_sizes, table_dims) = match net {
            ValueNet::Tabular(t) => (
                "tabular".to_string(),
                Vec::new(),
                Some([t.n_states, t.n_actions, t.n_goals, t.n_levels]),
            ),
            ValueNet::Mlp(m) => ("mlp".to_string(), m.layer_sizes.clone(), None),
        };
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            variant,
            env_name: env_name.to_string(),
            action_count,
            axis,
            backend,
            layer_sizes,
            table_dims,
            params: net.params().to_vec(),
            seed,
            training_step,
        }
    }

    pub fn restore(&self) -> Result<ValueNet> {
        if self.format_version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {}",
                self.format_version
            )));
        }
        match self.backend.as_str() {
            "tabular" => {
                let [s, a, g, k] = self
                    .table_dims
                    .ok_or_else(|| Error::Checkpoint("tabular checkpoint lacks dims".into()))?;
                if self.params.len() != s * a * g * k {
                    return Err(Error::Checkpoint("tabular parameter count mismatch".into()));
                }
                let mut t = TabularFn::new(s, a, g, k);
                t.logits.copy_from_slice(&self.params);
                Ok(ValueNet::Tabular(t))
            }
            "mlp" => Ok(ValueNet::Mlp(MlpFn::from_params(
                self.layer_sizes.clone(),
                self.params.clone(),
            )?)),
            other => Err(Error::Checkpoint(format!("unknown backend `{other}`"))),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Checkpoint> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Checkpoint> {
        Checkpoint::from_json(&std::fs::read_to_string(path)?)
    }
}
