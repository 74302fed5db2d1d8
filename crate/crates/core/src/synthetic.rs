//! A small two-topic world with known preferences, used for directional
//! denoising experiments without external data.
//!
//! Items are split evenly between topics and titled from disjoint topic
//! vocabularies. Each user prefers one topic and draws positives from it
//! with a popularity skew. Exploratory users additionally hold genuine
//! cross-topic positives. With no drift these are spread over the whole
//! timeline, so some land in validation and test; drift pushes them late.

use std::collections::{BTreeMap, BTreeSet};

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Interaction, ItemText, LoadedCorpus};
use crate::error::{Error, Result};

const VOCABULARY: [&[&str]; 2] = [
    &[
        "galaxy", "rocket", "orbit", "nebula", "starship", "asteroid", "comet", "planet", "android", "laser",
        "cosmos", "warp", "alien", "quasar", "meteor", "satellite", "lunar", "solar", "pulsar", "cyborg",
        "gravity", "photon", "vortex", "eclipse",
    ],
    &[
        "garden", "kitchen", "recipe", "harvest", "orchard", "basil", "bakery", "pantry", "tomato", "honey",
        "cottage", "meadow", "picnic", "soup", "bread", "cabbage", "blossom", "herb", "tulip", "lemon",
        "butter", "pumpkin", "willow", "vinegar",
    ],
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub users: usize,
    pub items: usize,
    pub positives_per_user: usize,
    /// Zipf exponent of within-topic item popularity.
    pub popularity_exponent: f64,
    pub words_per_title: usize,
    /// Fraction of users holding genuine cross-topic positives.
    pub exploratory_users: f64,
    /// Share of an exploratory user's positives drawn from the other topic.
    pub exploratory_share: f64,
    /// Where cross-topic positives sit in an exploratory user's timeline:
    /// 0 spreads them uniformly, values near 1 push them to the end.
    pub drift: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            users: 500,
            items: 200,
            positives_per_user: 20,
            popularity_exponent: 0.8,
            words_per_title: 3,
            exploratory_users: 0.0,
            exploratory_share: 0.3,
            drift: 0.0,
            seed: 7,
        }
    }
}

/// Generated corpus plus the ground truth used to build it.
#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    pub corpus: LoadedCorpus,
    pub item_topic: BTreeMap<u64, usize>,
    pub user_topic: BTreeMap<u64, usize>,
    pub exploratory: BTreeSet<u64>,
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("synthetic: {m}")));
        if self.users == 0 || self.items < 4 || self.items % 2 != 0 {
            return bad("need at least one user and an even item count of at least 4");
        }
        if self.positives_per_user == 0 || self.positives_per_user > self.items / 2 {
            return bad("positives per user must lie in 1..=items/2");
        }
        if self.words_per_title == 0 {
            return bad("titles need at least one word");
        }
        if !(0.0..=1.0).contains(&self.exploratory_users)
            || !(0.0..1.0).contains(&self.exploratory_share)
            || !(0.0..1.0).contains(&self.drift)
        {
            return bad("exploratory fractions out of range");
        }
        if !(self.popularity_exponent >= 0.0) {
            return bad("popularity exponent must be non-negative");
        }
        Ok(())
    }

    pub fn generate(&self) -> Result<SyntheticWorld> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let per_topic = self.items / 2;

        let mut item_topic = BTreeMap::new();
        let mut texts = Vec::with_capacity(self.items);
        let mut by_topic: [Vec<u64>; 2] = [Vec::new(), Vec::new()];
        for idx in 0..self.items {
            let topic = idx / per_topic;
            let id = idx as u64 + 1;
            let words: Vec<&str> = VOCABULARY[topic]
                .choose_multiple(&mut rng, self.words_per_title)
                .copied()
                .collect();
            texts.push(ItemText {
                item_id: id,
                title: words.join(" "),
                category: Some(["scifi", "home"][topic].to_owned()),
            });
            item_topic.insert(id, topic);
            by_topic[topic].push(id);
        }
        let popularity: Vec<f64> = (0..per_topic)
            .map(|r| 1.0 / ((r + 1) as f64).powf(self.popularity_exponent))
            .collect();
        let dist = WeightedIndex::new(&popularity).expect("positive weights");

        let draw = |rng: &mut ChaCha8Rng, pool: &[u64], n: usize, taken: &mut BTreeSet<u64>| {
            let mut out = Vec::with_capacity(n);
            while out.len() < n {
                let item = pool[dist.sample(rng)];
                if taken.insert(item) {
                    out.push(item);
                }
            }
            out
        };

        let mut user_topic = BTreeMap::new();
        let mut exploratory = BTreeSet::new();
        let mut interactions = Vec::new();
        let mut users = BTreeSet::new();
        for u in 0..self.users {
            let uid = u as u64 + 1;
            let topic = rng.gen_range(0..2usize);
            let explores = rng.gen_bool(self.exploratory_users);
            let n_cross = if explores {
                ((self.positives_per_user as f64 * self.exploratory_share).round() as usize).max(1)
            } else {
                0
            };
            let mut taken = BTreeSet::new();
            let own = draw(&mut rng, &by_topic[topic], self.positives_per_user - n_cross, &mut taken);
            let cross = draw(&mut rng, &by_topic[1 - topic], n_cross, &mut taken);
            // order by a random position; cross-topic items start at `drift`
            let mut keyed: Vec<(f64, u64)> = own.into_iter().map(|i| (rng.gen::<f64>(), i)).collect();
            keyed.extend(cross.into_iter().map(|i| (rng.gen_range(self.drift..1.0), i)));
            keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
            let items: Vec<u64> = keyed.into_iter().map(|(_, i)| i).collect();

            let start = 1_000_000_000 + rng.gen_range(0..1_000_000i64);
            for (k, item) in items.into_iter().enumerate() {
                interactions.push(Interaction::positive(uid, item, start + 3600 * k as i64));
            }
            user_topic.insert(uid, topic);
            users.insert(uid);
            if explores {
                exploratory.insert(uid);
            }
        }

        Ok(SyntheticWorld {
            corpus: LoadedCorpus {
                interactions,
                texts,
                users,
            },
            item_topic,
            user_topic,
            exploratory,
        })
    }
}
