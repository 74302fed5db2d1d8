//! AUC, logloss and multi-seed aggregation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Clipping applied to probabilities before taking logs.
pub const LOGLOSS_EPSILON: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub auc: f64,
    pub logloss: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

/// Rank-based (Mann-Whitney) AUC with midranks for ties: the probability a
/// random positive outscores a random negative, ties counting one half.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch(scores.len(), labels.len()));
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric("AUC needs at least one positive and one negative"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Ranks are 1-based; a tie block spanning ranks lo..=hi gets lo + hi
    // as its doubled midrank, which keeps everything in integers.
    let mut doubled_rank_sum: u128 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && scores[order[end + 1]] == scores[order[start]] {
            end += 1;
        }
        let doubled_mid = (start + 1 + end + 1) as u128;
        let positives = order[start..=end].iter().filter(|&&i| labels[i] == 1).count() as u128;
        doubled_rank_sum += doubled_mid * positives;
        start = end + 1;
    }
    let n_pos_u = n_pos as u128;
    // 2U = 2 * rank_sum - n_pos (n_pos + 1)
    let doubled_u = doubled_rank_sum - n_pos_u * (n_pos_u + 1);
    Ok(doubled_u as f64 / (2.0 * n_pos as f64 * n_neg as f64))
}

/// Mean binary cross-entropy with predictions clipped to
/// `[LOGLOSS_EPSILON, 1 - LOGLOSS_EPSILON]`.
pub fn logloss(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch(scores.len(), labels.len()));
    }
    if scores.is_empty() {
        return Err(Error::UndefinedMetric("logloss of an empty set"));
    }
    let total: f64 = scores
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(LOGLOSS_EPSILON, 1.0 - LOGLOSS_EPSILON);
            if y == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(total / scores.len() as f64)
}

pub fn evaluate(scores: &[f64], labels: &[u8]) -> Result<EvalResult> {
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    Ok(EvalResult {
        auc: auc(scores, labels)?,
        logloss: logloss(scores, labels)?,
        n_pos,
        n_neg: labels.len() - n_pos,
    })
}

/// Mean and sample standard deviation of one metric. A single value has
/// standard deviation zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        assert!(!values.is_empty(), "summary of no values");
        // sorted summation makes the result independent of input order
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let std = if v.len() < 2 {
            0.0
        } else {
            let mut dev: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
            dev.sort_by(f64::total_cmp);
            (dev.iter().sum::<f64>() / (n - 1.0)).sqrt()
        };
        Summary {
            mean,
            std,
            min: v[0],
            max: v[v.len() - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateResult {
    pub auc: Summary,
    pub logloss: Summary,
    pub per_seed: Vec<EvalResult>,
}

pub fn aggregate(results: &[EvalResult]) -> Result<AggregateResult> {
    if results.is_empty() {
        return Err(Error::InvalidArgument("cannot aggregate zero results".into()));
    }
    let aucs: Vec<f64> = results.iter().map(|r| r.auc).collect();
    let losses: Vec<f64> = results.iter().map(|r| r.logloss).collect();
    Ok(AggregateResult {
        auc: Summary::of(&aucs),
        logloss: Summary::of(&losses),
        per_seed: results.to_vec(),
    })
}
