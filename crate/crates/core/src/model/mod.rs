//! A two-field (user, item) DeepFM-style CTR model with hand-derived
//! gradients.
//!
//! ```text
//! logit = b + w_user[u] + w_item[i] + <v_u, v_i> + mlp([v_u ; v_i])
//! y_hat = clip(sigmoid(logit), eps, 1 - eps)
//! ```
//!
//! The MLP uses ReLU hidden layers and a linear scalar head. All parameters
//! live in one flat `f64` buffer described by a [`Layout`], which keeps the
//! optimizer, checkpoints and finite-difference checks trivial.

mod adam;
mod checkpoint;
mod gradcheck;
mod train;

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Interaction;
use crate::error::{Error, Result};
use crate::reweight::WeightedSample;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use gradcheck::{gradcheck, GradCheckConfig, GradCheckReport};
pub use train::{train, train_unweighted, write_loss_trace, EpochStats, TrainConfig, TrainOutcome};

/// Dense row index of a (user, item) pair plus its observed label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Example {
    pub user: u32,
    pub item: u32,
    pub label: u8,
}

/// Maps raw user/item ids onto dense embedding rows.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IdIndex {
    users: BTreeMap<u64, u32>,
    items: BTreeMap<u64, u32>,
}

impl IdIndex {
    pub fn new(users: impl IntoIterator<Item = u64>, items: impl IntoIterator<Item = u64>) -> Self {
        let dense = |ids: BTreeSet<u64>| -> BTreeMap<u64, u32> {
            ids.into_iter().enumerate().map(|(k, id)| (id, k as u32)).collect()
        };
        IdIndex {
            users: dense(users.into_iter().collect()),
            items: dense(items.into_iter().collect()),
        }
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn example(&self, x: &Interaction) -> Result<Example> {
        let user = *self.users.get(&x.user_id).ok_or(Error::IdOutOfRange {
            which: "user",
            id: x.user_id as usize,
            size: self.users.len(),
        })?;
        let item = *self.items.get(&x.item_id).ok_or(Error::IdOutOfRange {
            which: "item",
            id: x.item_id as usize,
            size: self.items.len(),
        })?;
        Ok(Example {
            user,
            item,
            label: x.label,
        })
    }

    pub fn examples(&self, xs: &[Interaction]) -> Result<Vec<Example>> {
        xs.iter().map(|x| self.example(x)).collect()
    }

    /// Examples and their weights, in input order.
    pub fn weighted_examples(&self, xs: &[WeightedSample]) -> Result<(Vec<Example>, Vec<f64>)> {
        let mut ex = Vec::with_capacity(xs.len());
        let mut w = Vec::with_capacity(xs.len());
        for s in xs {
            ex.push(self.example(&s.interaction)?);
            w.push(s.weight);
        }
        Ok((ex, w))
    }
}

/// Sizes that determine the parameter layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub n_users: usize,
    pub n_items: usize,
    pub embedding_dim: usize,
    pub hidden: Vec<usize>,
}

/// A named contiguous slice of the parameter buffer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Dense {
    inputs: usize,
    outputs: usize,
    weight: usize,
    bias: usize,
}

/// Offsets of every parameter group inside the flat buffer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    blocks: Vec<Block>,
    total: usize,
    global_bias: usize,
    user_linear: usize,
    item_linear: usize,
    user_emb: usize,
    item_emb: usize,
    layers: Vec<Dense>,
    head: Dense,
}

impl Layout {
    fn new(shape: &ModelShape) -> Self {
        let mut blocks = Vec::new();
        let mut at = 0;
        let mut push = |name: String, len: usize| {
            blocks.push(Block { name, offset: at, len });
            at += len;
            at - len
        };
        let d = shape.embedding_dim;
        let global_bias = push("global_bias".into(), 1);
        let user_linear = push("first_order.user".into(), shape.n_users);
        let item_linear = push("first_order.item".into(), shape.n_items);
        let user_emb = push("embedding.user".into(), shape.n_users * d);
        let item_emb = push("embedding.item".into(), shape.n_items * d);
        let mut layers = Vec::new();
        let mut inputs = 2 * d;
        for (l, &outputs) in shape.hidden.iter().enumerate() {
            let weight = push(format!("mlp.{l}.weight"), outputs * inputs);
            let bias = push(format!("mlp.{l}.bias"), outputs);
            layers.push(Dense {
                inputs,
                outputs,
                weight,
                bias,
            });
            inputs = outputs;
        }
        let weight = push("head.weight".into(), inputs);
        let bias = push("head.bias".into(), 1);
        let head = Dense {
            inputs,
            outputs: 1,
            weight,
            bias,
        };
        Layout {
            total: at,
            blocks,
            global_bias,
            user_linear,
            item_linear,
            user_emb,
            item_emb,
            layers,
            head,
        }
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn total(&self) -> usize {
        self.total
    }

    /// Name of the block containing flat index `i`.
    pub fn block_of(&self, i: usize) -> &str {
        self.blocks
            .iter()
            .find(|b| i >= b.offset && i < b.offset + b.len)
            .map(|b| b.name.as_str())
            .unwrap_or("?")
    }
}

/// Per-sample activations kept for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct Workspace {
    input: Vec<f64>,
    /// Post-ReLU outputs per hidden layer.
    acts: Vec<Vec<f64>>,
    grad_out: Vec<f64>,
    grad_in: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CtrModel {
    shape: ModelShape,
    layout: Layout,
    params: Vec<f64>,
    clip_epsilon: f64,
}

/// Default probability clipping.
pub const DEFAULT_CLIP_EPSILON: f64 = 1e-7;

impl CtrModel {
    /// All parameters zero.
    pub fn zeros(shape: ModelShape) -> Result<Self> {
        if shape.embedding_dim == 0 || shape.hidden.contains(&0) {
            return Err(Error::InvalidArgument(format!("degenerate model shape {shape:?}")));
        }
        let layout = Layout::new(&shape);
        Ok(CtrModel {
            params: vec![0.0; layout.total],
            layout,
            shape,
            clip_epsilon: DEFAULT_CLIP_EPSILON,
        })
    }

    /// Embeddings uniform in (-0.05, 0.05), dense weights uniform in
    /// +-1/sqrt(fan_in), linear terms and biases zero.
    pub fn init(shape: ModelShape, seed: u64) -> Result<Self> {
        let mut m = Self::zeros(shape)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = m.layout.clone();
        let emb = l.user_emb..l.item_emb + m.shape.n_items * m.shape.embedding_dim;
        for p in &mut m.params[emb] {
            *p = rng.gen_range(-0.05..0.05);
        }
        for dense in l.layers.iter().chain(std::iter::once(&l.head)) {
            let bound = 1.0 / (dense.inputs as f64).sqrt();
            for p in &mut m.params[dense.weight..dense.weight + dense.inputs * dense.outputs] {
                *p = rng.gen_range(-bound..bound);
            }
        }
        Ok(m)
    }

    pub fn with_clip_epsilon(mut self, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 0.01) {
            return Err(Error::InvalidArgument(format!("clip epsilon must lie in (0, 0.01), got {eps}")));
        }
        self.clip_epsilon = eps;
        Ok(self)
    }

    pub fn shape(&self) -> &ModelShape {
        &self.shape
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn clip_epsilon(&self) -> f64 {
        self.clip_epsilon
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Parameters of one named block.
    pub fn block(&self, name: &str) -> Option<&[f64]> {
        self.layout
            .blocks
            .iter()
            .find(|b| b.name == name)
            .map(|b| &self.params[b.offset..b.offset + b.len])
    }

    pub fn workspace(&self) -> Workspace {
        Workspace {
            input: vec![0.0; 2 * self.shape.embedding_dim],
            acts: self.shape.hidden.iter().map(|&h| vec![0.0; h]).collect(),
            grad_out: Vec::new(),
            grad_in: Vec::new(),
        }
    }

    pub fn check_example(&self, ex: &Example) -> Result<()> {
        if ex.user as usize >= self.shape.n_users {
            return Err(Error::IdOutOfRange {
                which: "user",
                id: ex.user as usize,
                size: self.shape.n_users,
            });
        }
        if ex.item as usize >= self.shape.n_items {
            return Err(Error::IdOutOfRange {
                which: "item",
                id: ex.item as usize,
                size: self.shape.n_items,
            });
        }
        Ok(())
    }

    fn user_vec(&self, u: usize) -> &[f64] {
        let d = self.shape.embedding_dim;
        &self.params[self.layout.user_emb + u * d..self.layout.user_emb + (u + 1) * d]
    }

    fn item_vec(&self, i: usize) -> &[f64] {
        let d = self.shape.embedding_dim;
        &self.params[self.layout.item_emb + i * d..self.layout.item_emb + (i + 1) * d]
    }

    /// Pre-sigmoid score. Indices must already be validated.
    fn logit_into(&self, user: usize, item: usize, ws: &mut Workspace) -> f64 {
        let p = &self.params;
        let l = &self.layout;
        let d = self.shape.embedding_dim;
        let vu = self.user_vec(user);
        let vi = self.item_vec(item);
        let mut z = p[l.global_bias] + p[l.user_linear + user] + p[l.item_linear + item];
        z += dot(vu, vi);

        ws.input[..d].copy_from_slice(vu);
        ws.input[d..].copy_from_slice(vi);
        for (k, dense) in l.layers.iter().enumerate() {
            let (prev, rest) = ws.acts.split_at_mut(k);
            let x: &[f64] = if k == 0 { &ws.input } else { &prev[k - 1] };
            let out = &mut rest[0];
            for (o, slot) in out.iter_mut().enumerate() {
                let row = &p[dense.weight + o * dense.inputs..dense.weight + (o + 1) * dense.inputs];
                *slot = (dot(row, x) + p[dense.bias + o]).max(0.0);
            }
        }
        let last: &[f64] = ws.acts.last().map(Vec::as_slice).unwrap_or(&ws.input);
        z + dot(&p[l.head.weight..l.head.weight + l.head.inputs], last) + p[l.head.bias]
    }

    /// Unclipped sigmoid of the logit.
    fn raw_probability(&self, user: usize, item: usize, ws: &mut Workspace) -> f64 {
        sigmoid(self.logit_into(user, item, ws))
    }

    fn clip(&self, p: f64) -> f64 {
        p.clamp(self.clip_epsilon, 1.0 - self.clip_epsilon)
    }

    /// Clipped click probability for dense (user, item) rows.
    pub fn forward(&self, user: u32, item: u32) -> Result<f64> {
        self.check_example(&Example { user, item, label: 0 })?;
        let mut ws = self.workspace();
        Ok(self.clip(self.raw_probability(user as usize, item as usize, &mut ws)))
    }

    pub fn logit(&self, user: u32, item: u32) -> Result<f64> {
        self.check_example(&Example { user, item, label: 0 })?;
        let mut ws = self.workspace();
        Ok(self.logit_into(user as usize, item as usize, &mut ws))
    }

    pub fn predict(&self, examples: &[Example]) -> Result<Vec<f64>> {
        let mut ws = self.workspace();
        examples
            .iter()
            .map(|ex| {
                self.check_example(ex)?;
                Ok(self.clip(self.raw_probability(ex.user as usize, ex.item as usize, &mut ws)))
            })
            .collect()
    }

    /// Total weighted BCE over `batch` (unit weights when `weights` is None).
    pub fn loss(&self, batch: &[Example], weights: Option<&[f64]>) -> Result<f64> {
        let preds = self.predict(batch)?;
        let labels: Vec<u8> = batch.iter().map(|e| e.label).collect();
        let weights = weights.map(<[f64]>::to_vec).unwrap_or_else(|| vec![1.0; batch.len()]);
        Ok(weighted_bce(&preds, &labels, &weights)?.total)
    }

    /// Adds the gradient of the total weighted loss over `batch` into `grad`
    /// and returns that loss. Indices must be valid.
    pub fn accumulate_gradient(
        &self,
        batch: &[Example],
        weights: Option<&[f64]>,
        grad: &mut [f64],
        ws: &mut Workspace,
    ) -> f64 {
        debug_assert_eq!(grad.len(), self.params.len());
        let mut total = 0.0;
        for (n, ex) in batch.iter().enumerate() {
            let (u, i) = (ex.user as usize, ex.item as usize);
            let raw = self.raw_probability(u, i, ws);
            let p = self.clip(raw);
            let y = ex.label as f64;
            let sample_loss = -(y * p.ln() + (1.0 - y) * (1.0 - p).ln());
            // clipping is flat outside [eps, 1 - eps]
            let mut g = if raw == p { raw - y } else { 0.0 };
            match weights {
                Some(w) => {
                    total += w[n] * sample_loss;
                    g *= w[n];
                }
                None => total += sample_loss,
            }
            if g != 0.0 {
                self.backward_sample(u, i, g, grad, ws);
            }
        }
        total
    }

    /// Backpropagates dL/dlogit = `g` for one sample whose activations are in
    /// `ws`.
    fn backward_sample(&self, u: usize, i: usize, g: f64, grad: &mut [f64], ws: &mut Workspace) {
        let p = &self.params;
        let l = &self.layout;
        let d = self.shape.embedding_dim;
        grad[l.global_bias] += g;
        grad[l.user_linear + u] += g;
        grad[l.item_linear + i] += g;

        // head
        let last: &[f64] = ws.acts.last().map(Vec::as_slice).unwrap_or(&ws.input);
        ws.grad_out.clear();
        ws.grad_out.extend(
            p[l.head.weight..l.head.weight + l.head.inputs]
                .iter()
                .map(|w| w * g),
        );
        for (gw, a) in grad[l.head.weight..l.head.weight + l.head.inputs].iter_mut().zip(last) {
            *gw += g * a;
        }
        grad[l.head.bias] += g;

        // hidden layers, last to first; grad_out holds dL/d(output of layer k)
        for k in (0..l.layers.len()).rev() {
            let dense = l.layers[k];
            let out = &ws.acts[k];
            let x: &[f64] = if k == 0 { &ws.input } else { &ws.acts[k - 1] };
            ws.grad_in.clear();
            ws.grad_in.resize(dense.inputs, 0.0);
            for o in 0..dense.outputs {
                // ReLU passes gradient only where the unit was active
                if out[o] <= 0.0 {
                    continue;
                }
                let dz = ws.grad_out[o];
                if dz == 0.0 {
                    continue;
                }
                let row = dense.weight + o * dense.inputs;
                let w_row = &p[row..row + dense.inputs];
                for ((gi, gw), (&w, &xv)) in ws
                    .grad_in
                    .iter_mut()
                    .zip(&mut grad[row..row + dense.inputs])
                    .zip(w_row.iter().zip(x))
                {
                    *gi += w * dz;
                    *gw += dz * xv;
                }
                grad[dense.bias + o] += dz;
            }
            std::mem::swap(&mut ws.grad_out, &mut ws.grad_in);
        }

        // embeddings: FM dot product plus MLP input gradient
        let vu = self.user_vec(u);
        let vi = self.item_vec(i);
        let (gu, gi) = (l.user_emb + u * d, l.item_emb + i * d);
        for k in 0..d {
            grad[gu + k] += g * vi[k] + ws.grad_out[k];
            grad[gi + k] += g * vu[k] + ws.grad_out[d + k];
        }
    }

    /// Smallest |pre-activation| over all hidden units and samples; used to
    /// keep finite-difference probes away from ReLU kinks.
    pub fn min_abs_preactivation(&self, batch: &[Example]) -> f64 {
        let mut ws = self.workspace();
        let p = &self.params;
        let mut best = f64::INFINITY;
        for ex in batch {
            self.logit_into(ex.user as usize, ex.item as usize, &mut ws);
            for (k, dense) in self.layout.layers.iter().enumerate() {
                let x: &[f64] = if k == 0 { &ws.input } else { &ws.acts[k - 1] };
                for o in 0..dense.outputs {
                    let row = &p[dense.weight + o * dense.inputs..dense.weight + (o + 1) * dense.inputs];
                    best = best.min((dot(row, x) + p[dense.bias + o]).abs());
                }
            }
        }
        best
    }

    /// First non-finite parameter, by block name.
    pub fn first_non_finite(values: &[f64], layout: &Layout) -> Option<String> {
        values
            .iter()
            .position(|v| !v.is_finite())
            .map(|i| layout.block_of(i).to_owned())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Sum and per-sample mean of a weighted binary cross-entropy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue {
    pub total: f64,
    pub mean: f64,
}

/// `-sum w * [y ln p + (1 - y) ln(1 - p)]`. Predictions must already be
/// clipped into (0, 1).
pub fn weighted_bce(preds: &[f64], labels: &[u8], weights: &[f64]) -> Result<LossValue> {
    if preds.len() != labels.len() {
        return Err(Error::LengthMismatch(preds.len(), labels.len()));
    }
    if preds.len() != weights.len() {
        return Err(Error::LengthMismatch(preds.len(), weights.len()));
    }
    let total: f64 = preds
        .iter()
        .zip(labels)
        .zip(weights)
        .map(|((&p, &y), &w)| {
            let y = y as f64;
            -w * (y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    let mean = if preds.is_empty() { 0.0 } else { total / preds.len() as f64 };
    Ok(LossValue { total, mean })
}
