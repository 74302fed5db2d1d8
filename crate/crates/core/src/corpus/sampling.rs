use log::warn;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DatasetSplit, Interaction, Origin};
use crate::error::{Error, Result};

/// Fraction of train negatives to flip to positive, with its seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    ratio: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub const MAX_RATIO: f64 = 0.5;

    pub fn new(ratio: f64, seed: u64) -> Result<Self> {
        if !(0.0..=Self::MAX_RATIO).contains(&ratio) {
            return Err(Error::InvalidArgument(format!(
                "noise ratio must lie in [0, {}], got {ratio}",
                Self::MAX_RATIO
            )));
        }
        Ok(NoiseSpec { ratio, seed })
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    /// Number of negatives flipped out of `negatives`.
    pub fn flip_count(&self, negatives: usize) -> usize {
        // the epsilon keeps e.g. 0.3 * 10 from flooring to 2
        ((self.ratio * negatives as f64) + 1e-9).floor() as usize
    }
}

/// Adds `ratio` uniformly sampled negatives after every positive in every
/// split. Candidates are items the user has no positive for in any split.
pub fn sample_negatives(split: &DatasetSplit, ratio: usize, seed: u64) -> Result<DatasetSplit> {
    if ratio == 0 {
        return Err(Error::InvalidArgument("negative ratio must be positive".into()));
    }
    let items: Vec<u64> = split.items.iter().copied().collect();
    let seen = split.positives_by_user();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = split.clone();

    let mut fill = |part: &[Interaction]| -> Vec<Interaction> {
        let mut acc = Vec::with_capacity(part.len() * (ratio + 1));
        for x in part {
            acc.push(*x);
            if !x.is_positive() {
                continue;
            }
            let user_seen = &seen[&x.user_id];
            if user_seen.len() >= items.len() {
                warn!("user {} interacted with every item; no negatives sampled", x.user_id);
                continue;
            }
            for _ in 0..ratio {
                let item = loop {
                    let candidate = items[rng.gen_range(0..items.len())];
                    if !user_seen.contains(&candidate) {
                        break candidate;
                    }
                };
                acc.push(Interaction::negative(x.user_id, item, x.timestamp));
            }
        }
        acc
    };
    out.train = fill(&split.train);
    out.validation = fill(&split.validation);
    out.test = fill(&split.test);
    Ok(out)
}

/// Flips `floor(ratio * n)` uniformly chosen train negatives to positive and
/// tags them as injected noise. Validation and test are untouched.
pub fn inject_noise(split: &DatasetSplit, spec: NoiseSpec) -> Result<DatasetSplit> {
    let negatives: Vec<usize> = split
        .train
        .iter()
        .enumerate()
        .filter(|(_, x)| !x.is_positive())
        .map(|(i, _)| i)
        .collect();
    if spec.ratio > 0.0 && negatives.is_empty() {
        return Err(Error::NoNegatives(spec.ratio));
    }
    let mut out = split.clone();
    let k = spec.flip_count(negatives.len());
    if k == 0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for pick in index::sample(&mut rng, negatives.len(), k) {
        let x = &mut out.train[negatives[pick]];
        x.label = 1;
        x.origin = Origin::InjectedNoise;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{chronological_split, SplitRatios};

    fn toy_split(users: u64, per_user: u64, items: u64) -> DatasetSplit {
        let mut xs = Vec::new();
        for u in 0..users {
            for t in 0..per_user {
                xs.push(Interaction::positive(u, (u * 7 + t * 3) % items, t as i64));
            }
        }
        let mut s = chronological_split(&xs, SplitRatios::default()).unwrap();
        s.extend_items(0..items);
        s
    }

    #[test]
    fn one_negative_per_positive() {
        let s = toy_split(5, 10, 40);
        let n = sample_negatives(&s, 1, 3).unwrap();
        for (before, after) in s.parts().iter().zip(n.parts()) {
            let neg = after.iter().filter(|x| x.label == 0).count();
            assert_eq!(neg, before.len());
            assert!(after
                .iter()
                .filter(|x| x.label == 0)
                .all(|x| x.origin == Origin::SampledNegative));
        }
    }

    #[test]
    fn negatives_are_deterministic_and_never_positives() {
        let s = toy_split(6, 12, 30);
        let a = sample_negatives(&s, 2, 11).unwrap();
        let b = sample_negatives(&s, 2, 11).unwrap();
        assert_eq!(a, b);
        let seen = s.positives_by_user();
        for x in a.parts().into_iter().flatten().filter(|x| x.label == 0) {
            assert!(!seen[&x.user_id].contains(&x.item_id));
        }
        assert_ne!(a, sample_negatives(&s, 2, 12).unwrap());
    }

    #[test]
    fn saturated_user_is_skipped() {
        let s = toy_split(1, 5, 5);
        let mut s = s;
        s.items = (0..5).collect();
        let seen = s.positives_by_user();
        assert_eq!(seen[&0].len(), 5);
        let n = sample_negatives(&s, 1, 0).unwrap();
        assert_eq!(n, s);
    }

    #[test]
    fn noise_zero_is_identity() {
        let s = sample_negatives(&toy_split(5, 10, 40), 1, 1).unwrap();
        let noisy = inject_noise(&s, NoiseSpec::new(0.0, 9).unwrap()).unwrap();
        assert_eq!(noisy, s);
    }

    #[test]
    fn half_of_thousand_negatives_flipped() {
        let train: Vec<Interaction> = (0..1000).map(|i| Interaction::negative(i % 17, i, i as i64)).collect();
        let s = DatasetSplit {
            train,
            ..Default::default()
        };
        let noisy = inject_noise(&s, NoiseSpec::new(0.5, 4).unwrap()).unwrap();
        let flipped: Vec<_> = noisy.train.iter().filter(|x| x.label == 1).collect();
        assert_eq!(flipped.len(), 500);
        assert!(flipped.iter().all(|x| x.origin == Origin::InjectedNoise));
        let again = inject_noise(&s, NoiseSpec::new(0.5, 4).unwrap()).unwrap();
        assert_eq!(noisy, again);
    }

    #[test]
    fn noise_leaves_eval_splits_alone() {
        let s = sample_negatives(&toy_split(8, 10, 60), 1, 1).unwrap();
        let noisy = inject_noise(&s, NoiseSpec::new(0.3, 2).unwrap()).unwrap();
        assert_eq!(noisy.validation, s.validation);
        assert_eq!(noisy.test, s.test);
        let negs = s.train.iter().filter(|x| x.label == 0).count();
        let injected = noisy
            .train
            .iter()
            .filter(|x| x.origin == Origin::InjectedNoise)
            .count();
        assert_eq!(injected, (0.3 * negs as f64 + 1e-9).floor() as usize);
    }

    #[test]
    fn noise_errors() {
        assert!(NoiseSpec::new(0.6, 0).is_err());
        assert!(NoiseSpec::new(-0.1, 0).is_err());
        let s = toy_split(3, 5, 20);
        assert!(matches!(
            inject_noise(&s, NoiseSpec::new(0.2, 0).unwrap()),
            Err(Error::NoNegatives(_))
        ));
    }
}
