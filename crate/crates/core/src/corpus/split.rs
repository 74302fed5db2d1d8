use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{DatasetSplit, Interaction};
use crate::error::{Error, Result};

/// Train/validation/test fractions. Must be positive and sum to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.8,
            validation: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    pub fn new(train: f64, validation: f64, test: f64) -> Result<Self> {
        let r = SplitRatios {
            train,
            validation,
            test,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.train, self.validation, self.test];
        if all.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "split ratios must be positive, got {all:?}"
            )));
        }
        if (all.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "split ratios must sum to 1, got {all:?}"
            )));
        }
        Ok(())
    }

    /// Per-user (train, validation, test) counts for `n` interactions.
    /// Users with fewer than three interactions keep everything in train.
    pub fn counts(&self, n: usize) -> (usize, usize, usize) {
        if n < 3 {
            return (n, 0, 0);
        }
        let nf = n as f64;
        let test = ((self.test * nf).round() as usize).max(1);
        let mut val = ((self.validation * nf).round() as usize).max(1);
        if test + val >= n {
            val = n - test - 1;
            val = val.max(1);
        }
        let test = test.min(n - val - 1);
        (n - val - test, val, test)
    }
}

/// Per-user chronological partition. Each user's interactions are ordered by
/// (timestamp, item id); the earliest go to train, the next to validation and
/// the latest to test. Histories hold the user's train positives in order.
pub fn chronological_split(interactions: &[Interaction], ratios: SplitRatios) -> Result<DatasetSplit> {
    ratios.validate()?;
    let mut per_user: BTreeMap<u64, Vec<Interaction>> = BTreeMap::new();
    for x in interactions {
        per_user.entry(x.user_id).or_default().push(*x);
    }

    let mut split = DatasetSplit::default();
    for (user, mut xs) in per_user {
        xs.sort_by_key(|x| (x.timestamp, x.item_id));
        let (n_train, n_val, _) = ratios.counts(xs.len());
        split.users.insert(user);
        split.items.extend(xs.iter().map(|x| x.item_id));
        let history: Vec<u64> = xs[..n_train]
            .iter()
            .filter(|x| x.is_positive())
            .map(|x| x.item_id)
            .collect();
        if !history.is_empty() {
            split.histories.insert(user, history);
        }
        split.train.extend_from_slice(&xs[..n_train]);
        split.validation.extend_from_slice(&xs[n_train..n_train + n_val]);
        split.test.extend_from_slice(&xs[n_train + n_val..]);
    }
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashMap;

    fn user_events(user: u64, n: usize) -> Vec<Interaction> {
        // deliberately out of order
        (0..n)
            .rev()
            .map(|t| Interaction::positive(user, 100 + t as u64, 1000 + t as i64))
            .collect()
    }

    #[test]
    fn ten_positives_split_8_1_1_by_time() {
        let xs = user_events(1, 10);
        let s = chronological_split(&xs, SplitRatios::default()).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (8, 1, 1));
        assert!(s.train.iter().all(|x| x.timestamp < 1008));
        assert_eq!(s.validation[0].timestamp, 1008);
        assert_eq!(s.test[0].timestamp, 1009);
        assert_eq!(s.histories[&1], (100..108).collect::<Vec<u64>>());
    }

    #[test]
    fn two_positives_stay_in_train() {
        let s = chronological_split(&user_events(4, 2), SplitRatios::default()).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (2, 0, 0));
    }

    #[test]
    fn rejects_bad_ratios() {
        assert!(SplitRatios::new(0.8, 0.1, 0.2).is_err());
        assert!(SplitRatios::new(1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn counts_keep_each_split_nonempty() {
        let r = SplitRatios::default();
        for n in 3..200 {
            let (a, b, c) = r.counts(n);
            assert_eq!(a + b + c, n);
            assert!(a >= 1 && b >= 1 && c >= 1, "n={n}: {a} {b} {c}");
        }
        let skewed = SplitRatios::new(0.2, 0.4, 0.4).unwrap();
        for n in 3..50 {
            let (a, b, c) = skewed.counts(n);
            assert_eq!(a + b + c, n);
            assert!(a >= 1 && b >= 1 && c >= 1);
        }
    }

    proptest! {
        #[test]
        fn partition_and_history_order(
            raw in proptest::collection::vec((0u64..8, 0u64..30, 0i64..50), 0..120)
        ) {
            let uniq: BTreeMap<(u64, u64), i64> = raw.iter().map(|&(u, i, t)| ((u, i), t)).collect();
            let xs: Vec<Interaction> = uniq.iter().map(|(&(u, i), &t)| Interaction::positive(u, i, t)).collect();
            let s = chronological_split(&xs, SplitRatios::default()).unwrap();

            let mut want: HashMap<Interaction, usize> = HashMap::new();
            for x in &xs { *want.entry(*x).or_default() += 1; }
            let mut got: HashMap<Interaction, usize> = HashMap::new();
            for part in s.parts() { for x in part { *got.entry(*x).or_default() += 1; } }
            prop_assert_eq!(want, got);

            let ts: HashMap<(u64, u64), i64> = s.train.iter().map(|x| ((x.user_id, x.item_id), x.timestamp)).collect();
            for (u, hist) in &s.histories {
                let mut prev = i64::MIN;
                for item in hist {
                    let t = ts[&(*u, *item)];
                    prop_assert!(t >= prev);
                    prev = t;
                }
            }
            for x in s.parts().into_iter().flatten() {
                prop_assert!(s.users.contains(&x.user_id));
                prop_assert!(s.items.contains(&x.item_id));
            }
        }
    }
}
