//! Similarity-to-weight mapping and per-sample weight assignment.
//!
//! A positive with similarity `s` gets
//! `alpha + (1 - alpha) * sigmoid(beta * (s - mu))`, so weights lie strictly
//! between `alpha` and 1 and equal `(1 + alpha) / 2` at `s = mu`. Negatives
//! always weigh 1. Users without any train history have no profile and their
//! positives also weigh 1.
//!
//! Weights are not renormalized to mean one.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Interaction;
use crate::error::{Error, Result};
use crate::semantics::{Similarity, SimilarityTable};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightConfig {
    alpha: f64,
    beta: f64,
    mu: f64,
}

impl WeightConfig {
    pub const DEFAULT_ALPHA: f64 = 0.4;
    pub const DEFAULT_BETA: f64 = 5.0;

    pub fn new(alpha: f64, beta: f64, mu: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidArgument(format!("alpha must lie in [0, 1], got {alpha}")));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidArgument(format!("beta must be positive, got {beta}")));
        }
        if !mu.is_finite() {
            return Err(Error::InvalidArgument(format!("mu must be finite, got {mu}")));
        }
        Ok(WeightConfig { alpha, beta, mu })
    }

    /// Defaults with `mu` taken from the similarity table's global mean.
    pub fn from_table(alpha: f64, beta: f64, sims: &SimilarityTable) -> Result<Self> {
        Self::new(alpha, beta, sims.mu())
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }
}

/// `alpha + (1 - alpha) * sigmoid(beta * (s - mu))`, evaluated through the
/// identity `sigmoid(x) - 1/2 = tanh(x / 2) / 2` so that `s = mu` gives
/// exactly `(1 + alpha) / 2` and `alpha = 1` gives exactly 1.
pub fn weight_of(s: f64, cfg: &WeightConfig) -> f64 {
    let half_gap = (1.0 - cfg.alpha) / 2.0;
    (1.0 + cfg.alpha) / 2.0 + half_gap * (cfg.beta * (s - cfg.mu) / 2.0).tanh()
}

/// An interaction with its training weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedSample {
    pub interaction: Interaction,
    pub weight: f64,
}

/// Attaches weights in input order. Origin tags are never consulted.
pub fn assign_weights(
    samples: &[Interaction],
    sims: &SimilarityTable,
    cfg: &WeightConfig,
) -> Result<Vec<WeightedSample>> {
    samples
        .iter()
        .map(|x| {
            let weight = if !x.is_positive() {
                1.0
            } else {
                match sims.get(x.user_id, x.item_id) {
                    Some(Similarity::Score(s)) => weight_of(s, cfg),
                    Some(Similarity::NoProfile) => 1.0,
                    None => {
                        return Err(Error::MissingSimilarity {
                            user: x.user_id,
                            item: x.item_id,
                        })
                    }
                }
            };
            Ok(WeightedSample {
                interaction: *x,
                weight,
            })
        })
        .collect()
}

/// Every sample at weight 1.
pub fn unit_weights(samples: &[Interaction]) -> Vec<WeightedSample> {
    samples
        .iter()
        .map(|&interaction| WeightedSample {
            interaction,
            weight: 1.0,
        })
        .collect()
}

/// Writes `user_id<TAB>item_id<TAB>similarity<TAB>weight` for every
/// positive. Sentinel rows carry an empty similarity field.
pub fn write_weight_audit(path: &Path, weighted: &[WeightedSample], sims: &SimilarityTable) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "user_id\titem_id\tsimilarity\tweight").map_err(io)?;
    for ws in weighted.iter().filter(|w| w.interaction.is_positive()) {
        let x = ws.interaction;
        let s = match sims.get(x.user_id, x.item_id) {
            Some(Similarity::Score(s)) => format!("{s:.6}"),
            _ => String::new(),
        };
        writeln!(w, "{}\t{}\t{}\t{:.6}", x.user_id, x.item_id, s, ws.weight).map_err(io)?;
    }
    w.flush().map_err(io)
}
