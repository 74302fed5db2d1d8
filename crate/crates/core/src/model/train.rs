use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use log::debug;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Adam, AdamConfig, CtrModel, Example, ModelShape};
use crate::error::{Error, Result};
use crate::metrics;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop after this many epochs without a validation AUC improvement.
    pub patience: usize,
    pub seed: u64,
    pub embedding_dim: usize,
    pub hidden: Vec<usize>,
    pub clip_epsilon: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 2048,
            max_epochs: 30,
            patience: 3,
            seed: 0,
            embedding_dim: 64,
            hidden: vec![256, 128, 64],
            clip_epsilon: 1e-7,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.embedding_dim == 0 {
            return bad("batch size, epochs and embedding dim must be positive".into());
        }
        if self.hidden.contains(&0) {
            return bad(format!("hidden widths must be positive, got {:?}", self.hidden));
        }
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 0.01) {
            return bad(format!("clip epsilon must lie in (0, 0.01), got {}", self.clip_epsilon));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam betas must lie in [0, 1)".into());
        }
        if !(self.adam_epsilon > 0.0) {
            return bad("adam epsilon must be positive".into());
        }
        Ok(())
    }

    pub fn shape(&self, n_users: usize, n_items: usize) -> ModelShape {
        ModelShape {
            n_users,
            n_items,
            embedding_dim: self.embedding_dim,
            hidden: self.hidden.clone(),
        }
    }

    /// A freshly initialized model for this config.
    pub fn build_model(&self, n_users: usize, n_items: usize) -> Result<CtrModel> {
        self.validate()?;
        CtrModel::init(self.shape(n_users, n_items), self.seed)?.with_clip_epsilon(self.clip_epsilon)
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            epsilon: self.adam_epsilon,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Weighted loss summed over the epoch divided by the sample count.
    pub train_loss: f64,
    pub val_auc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the best validation epoch (or the last epoch when no
    /// validation AUC is available).
    pub model: CtrModel,
    pub trace: Vec<EpochStats>,
    pub best_epoch: usize,
}

/// Minibatch Adam on the weighted cross-entropy. `weights[k]` scales the
/// loss of `examples[k]`.
pub fn train(
    model: CtrModel,
    examples: &[Example],
    weights: &[f64],
    validation: &[Example],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    if weights.len() != examples.len() {
        return Err(Error::LengthMismatch(examples.len(), weights.len()));
    }
    fit(model, examples, Some(weights), validation, cfg)
}

/// The same loop with plain, unweighted cross-entropy.
pub fn train_unweighted(
    model: CtrModel,
    examples: &[Example],
    validation: &[Example],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    fit(model, examples, None, validation, cfg)
}

fn validation_auc(model: &CtrModel, validation: &[Example]) -> Result<Option<f64>> {
    let labels: Vec<u8> = validation.iter().map(|e| e.label).collect();
    if !(labels.contains(&0) && labels.contains(&1)) {
        return Ok(None);
    }
    let preds = model.predict(validation)?;
    metrics::auc(&preds, &labels).map(Some)
}

fn fit(
    mut model: CtrModel,
    examples: &[Example],
    weights: Option<&[f64]>,
    validation: &[Example],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if examples.is_empty() {
        return Err(Error::InvalidArgument("no training samples".into()));
    }
    for ex in examples.iter().chain(validation) {
        model.check_example(ex)?;
    }

    let n_params = model.params().len();
    let mut adam = Adam::new(cfg.adam(), n_params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut grad = vec![0.0; n_params];
    let mut ws = model.workspace();
    let mut batch = Vec::with_capacity(cfg.batch_size);
    let mut batch_w = Vec::with_capacity(cfg.batch_size);

    let mut trace = Vec::new();
    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    let mut stale = 0;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            batch.clear();
            batch.extend(chunk.iter().map(|&k| examples[k]));
            if let Some(w) = weights {
                batch_w.clear();
                batch_w.extend(chunk.iter().map(|&k| w[k]));
            }
            grad.iter_mut().for_each(|g| *g = 0.0);
            let loss = model.accumulate_gradient(
                &batch,
                weights.map(|_| batch_w.as_slice()),
                &mut grad,
                &mut ws,
            );
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, batch: b });
            }
            let scale = 1.0 / chunk.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            if let Some(name) = CtrModel::first_non_finite(&grad, model.layout()) {
                return Err(Error::NonFiniteGradient(name));
            }
            adam.update(model.params_mut(), &grad);
            if CtrModel::first_non_finite(model.params(), model.layout()).is_some() {
                return Err(Error::Diverged { epoch, batch: b });
            }
            epoch_loss += loss;
        }
        let val_auc = validation_auc(&model, validation)?;
        let stats = EpochStats {
            epoch,
            train_loss: epoch_loss / examples.len() as f64,
            val_auc,
        };
        debug!("epoch {epoch}: loss {:.5} val_auc {:?}", stats.train_loss, val_auc);
        trace.push(stats);

        let Some(auc) = val_auc else { continue };
        match &best {
            Some((best_auc, _, _)) if auc <= *best_auc => {
                stale += 1;
                if stale >= cfg.patience {
                    break;
                }
            }
            _ => {
                best = Some((auc, epoch, model.params().to_vec()));
                stale = 0;
            }
        }
    }

    let best_epoch = match best {
        Some((_, epoch, params)) => {
            model.params_mut().copy_from_slice(&params);
            epoch
        }
        None => trace.len(),
    };
    Ok(TrainOutcome {
        model,
        trace,
        best_epoch,
    })
}

/// `epoch,train_loss,val_auc` with an empty AUC field when undefined.
pub fn write_loss_trace(path: &Path, trace: &[EpochStats]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "epoch,train_loss,val_auc").map_err(io)?;
    for s in trace {
        let auc = s.val_auc.map(|a| format!("{a:.6}")).unwrap_or_default();
        writeln!(w, "{},{:.6},{}", s.epoch, s.train_loss, auc).map_err(io)?;
    }
    w.flush().map_err(io)
}
