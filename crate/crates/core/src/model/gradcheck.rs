use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CtrModel, Example, ModelShape};
use crate::error::Result;

/// Central finite-difference check of the analytic gradient on small random
/// models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckConfig {
    pub points: usize,
    pub step: f64,
    pub seed: u64,
    pub shape: ModelShape,
    pub batch: usize,
    /// Points with any |pre-activation| below this are redrawn so that no
    /// probe crosses a ReLU kink.
    pub kink_margin: f64,
    /// Denominator floor of the relative error, for near-zero components.
    pub floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            points: 100,
            step: 1e-5,
            seed: 0,
            shape: ModelShape {
                n_users: 5,
                n_items: 5,
                embedding_dim: 4,
                hidden: vec![6, 5, 3],
            },
            batch: 8,
            kink_margin: 1e-3,
            floor: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub points: usize,
    pub params_per_point: usize,
    pub max_rel_error: f64,
    pub worst_block: String,
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

pub fn gradcheck(cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = CtrModel::zeros(cfg.shape.clone())?;
    let n = model.params().len();
    let mut worst = (0.0f64, String::new());

    for _ in 0..cfg.points {
        let (batch, weights) = loop {
            for p in model.params_mut() {
                *p = rng.gen_range(-0.5..0.5);
            }
            let batch: Vec<Example> = (0..cfg.batch)
                .map(|_| Example {
                    user: rng.gen_range(0..cfg.shape.n_users as u32),
                    item: rng.gen_range(0..cfg.shape.n_items as u32),
                    label: rng.gen_range(0..2),
                })
                .collect();
            let weights: Vec<f64> = (0..cfg.batch).map(|_| rng.gen_range(0.0..2.0)).collect();
            if model.min_abs_preactivation(&batch) >= cfg.kink_margin {
                break (batch, weights);
            }
        };

        let mut analytic = vec![0.0; n];
        let mut ws = model.workspace();
        model.accumulate_gradient(&batch, Some(&weights), &mut analytic, &mut ws);

        for j in 0..n {
            let orig = model.params()[j];
            model.params_mut()[j] = orig + cfg.step;
            let plus = model.loss(&batch, Some(&weights))?;
            model.params_mut()[j] = orig - cfg.step;
            let minus = model.loss(&batch, Some(&weights))?;
            model.params_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * cfg.step);
            let err = relative_error(analytic[j], numeric, cfg.floor);
            if err > worst.0 {
                worst = (err, model.layout().block_of(j).to_owned());
            }
        }
    }
    Ok(GradCheckReport {
        points: cfg.points,
        params_per_point: n,
        max_rel_error: worst.0,
        worst_block: worst.1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let report = gradcheck(&GradCheckConfig {
            points: 10,
            ..Default::default()
        })
        .unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(1.0, 1.0, 1e-6), 0.0);
        assert!((relative_error(2.0, 1.0, 1e-6) - 0.5).abs() < 1e-15);
        assert!((relative_error(1e-12, 0.0, 1e-6) - 1e-6).abs() < 1e-15);
    }
}
