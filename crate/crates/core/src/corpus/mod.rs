//! Implicit-feedback datasets: ingestion, chronological splitting, negative
//! sampling and controlled label-noise injection.
//!
//! Every operation here is a pure function of its inputs and seed. Outputs
//! are plain owned values that can be shared freely between threads.

mod loaders;
pub mod manifest;
mod sampling;
mod split;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub use loaders::{
    core_filter, load_item_texts_tsv, load_movielens, load_movielens_with, load_ratings_tsv, LoadedCorpus, RawRating,
    DEFAULT_MIN_RATING,
};
pub use sampling::{inject_noise, sample_negatives, NoiseSpec};
pub use split::{chronological_split, SplitRatios};

/// Where an interaction came from. Only synthetic pipelines know this; the
/// weighting stage never reads it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    OrganicPositive,
    SampledNegative,
    InjectedNoise,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::OrganicPositive => "organic_positive",
            Origin::SampledNegative => "sampled_negative",
            Origin::InjectedNoise => "injected_noise",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "organic_positive" => Some(Origin::OrganicPositive),
            "sampled_negative" => Some(Origin::SampledNegative),
            "injected_noise" => Some(Origin::InjectedNoise),
            _ => None,
        }
    }
}

/// One observed (user, item, label, timestamp) record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Interaction {
    pub user_id: u64,
    pub item_id: u64,
    /// Observed click label, 0 or 1.
    pub label: u8,
    pub timestamp: i64,
    pub origin: Origin,
}

impl Interaction {
    pub fn positive(user_id: u64, item_id: u64, timestamp: i64) -> Self {
        Interaction {
            user_id,
            item_id,
            label: 1,
            timestamp,
            origin: Origin::OrganicPositive,
        }
    }

    pub fn negative(user_id: u64, item_id: u64, timestamp: i64) -> Self {
        Interaction {
            user_id,
            item_id,
            label: 0,
            timestamp,
            origin: Origin::SampledNegative,
        }
    }

    pub fn is_positive(&self) -> bool {
        self.label == 1
    }
}

/// Textual description of an item: title plus optional category string.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemText {
    pub item_id: u64,
    pub title: String,
    pub category: Option<String>,
}

impl ItemText {
    /// Placeholder used when a rated item has no text row.
    pub fn synthetic(item_id: u64) -> Self {
        ItemText {
            item_id,
            title: format!("item {item_id}"),
            category: None,
        }
    }
}

/// Train/validation/test partition plus the id universes and per-user
/// train histories.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<Interaction>,
    pub validation: Vec<Interaction>,
    pub test: Vec<Interaction>,
    pub users: BTreeSet<u64>,
    pub items: BTreeSet<u64>,
    /// Train positives per user, ascending by timestamp.
    pub histories: BTreeMap<u64, Vec<u64>>,
}

impl DatasetSplit {
    pub fn parts(&self) -> [&[Interaction]; 3] {
        [&self.train, &self.validation, &self.test]
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn extend_users(&mut self, users: impl IntoIterator<Item = u64>) {
        self.users.extend(users);
    }

    pub fn extend_items(&mut self, items: impl IntoIterator<Item = u64>) {
        self.items.extend(items);
    }

    /// Positive item set per user over all three splits.
    pub fn positives_by_user(&self) -> BTreeMap<u64, BTreeSet<u64>> {
        let mut out: BTreeMap<u64, BTreeSet<u64>> = BTreeMap::new();
        for part in self.parts() {
            for x in part.iter().filter(|x| x.is_positive()) {
                out.entry(x.user_id).or_default().insert(x.item_id);
            }
        }
        out
    }
}

/// Headline counts of an ingested corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub users: usize,
    pub items: usize,
    pub positives: usize,
}
