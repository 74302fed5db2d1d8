//! User-profile texts, text embeddings and profile/item cosine similarity.

mod encoder;
mod table;

use std::borrow::Cow;
use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::{DatasetSplit, ItemText};
use crate::error::{Error, Result};

pub use encoder::{encode_fallback, FallbackEncoder};
pub use table::{decode, encode, load_embedding_table, save_embedding_table, EmbeddingTable, EntryKind, MAGIC};

/// Separator between titles in a profile text.
pub const PROFILE_SEPARATOR: &str = "; ";

/// Item texts indexed by id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ItemCatalog {
    texts: BTreeMap<u64, ItemText>,
}

impl ItemCatalog {
    pub fn new(texts: impl IntoIterator<Item = ItemText>) -> Self {
        ItemCatalog {
            texts: texts.into_iter().map(|t| (t.item_id, t)).collect(),
        }
    }

    pub fn get(&self, id: u64) -> Option<&ItemText> {
        self.texts.get(&id)
    }

    /// Title, or the synthetic `item <id>` placeholder when unknown or blank.
    pub fn title(&self, id: u64) -> Cow<'_, str> {
        match self.texts.get(&id) {
            Some(t) if !t.title.trim().is_empty() => Cow::Borrowed(&t.title),
            _ => Cow::Owned(ItemText::synthetic(id).title),
        }
    }

    pub fn len(&self) -> usize {
        self.texts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.texts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ItemText> {
        self.texts.values()
    }
}

/// Concatenated titles of a user's most recent history items.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileText {
    pub user_id: u64,
    pub text: String,
    /// Oldest first; at most `k` entries.
    pub source_items: Vec<u64>,
}

impl ProfileText {
    pub fn is_empty(&self) -> bool {
        self.source_items.is_empty()
    }
}

/// Joins the titles of the last `min(k, len)` history items, oldest first.
pub fn build_profile_text(user_id: u64, history: &[u64], catalog: &ItemCatalog, k: usize) -> ProfileText {
    let start = history.len().saturating_sub(k);
    let source_items = history[start..].to_vec();
    let text = source_items
        .iter()
        .map(|&id| catalog.title(id))
        .collect::<Vec<_>>()
        .join(PROFILE_SEPARATOR);
    ProfileText {
        user_id,
        text,
        source_items,
    }
}

/// One profile per user with a non-empty train history.
pub fn build_profiles(split: &DatasetSplit, catalog: &ItemCatalog, k: usize) -> Vec<ProfileText> {
    split
        .histories
        .iter()
        .map(|(&u, h)| build_profile_text(u, h, catalog, k))
        .collect()
}

/// Cosine similarity clamped to [-1, 1]; zero when either vector is zero.
pub fn cosine<T: Copy + Into<f64>>(a: &[T], b: &[T]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x.into(), y.into());
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

/// Similarity of one train positive. `NoProfile` marks users without any
/// train history; those samples bypass weighting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Similarity {
    Score(f64),
    NoProfile,
}

impl Similarity {
    pub fn score(self) -> Option<f64> {
        match self {
            Similarity::Score(s) => Some(s),
            Similarity::NoProfile => None,
        }
    }
}

/// Per (user, item) similarity over train positives, plus their global mean.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimilarityTable {
    entries: BTreeMap<(u64, u64), Similarity>,
    mu: f64,
}

impl SimilarityTable {
    /// Builds the table and computes `mu` as the mean of stored scores
    /// (zero when there are none).
    pub fn from_entries(entries: BTreeMap<(u64, u64), Similarity>) -> Self {
        let mu = mean_score(entries.values());
        SimilarityTable { entries, mu }
    }

    pub fn get(&self, user: u64, item: u64) -> Option<Similarity> {
        self.entries.get(&(user, item)).copied()
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((u64, u64), Similarity)> + '_ {
        self.entries.iter().map(|(&k, &v)| (k, v))
    }

    /// Mean recomputed from the stored scores.
    pub fn recomputed_mu(&self) -> f64 {
        mean_score(self.entries.values())
    }
}

fn mean_score<'a>(values: impl Iterator<Item = &'a Similarity>) -> f64 {
    let (sum, n) = values
        .filter_map(|s| s.score())
        .fold((0.0f64, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Encoder and texts used to fill table gaps.
#[derive(Debug, Clone, Copy)]
pub struct Fallback<'a> {
    pub encoder: FallbackEncoder,
    pub catalog: &'a ItemCatalog,
}

/// Encodes every catalog item and every profile with the fallback encoder.
pub fn build_fallback_table(
    encoder: &FallbackEncoder,
    catalog: &ItemCatalog,
    profiles: &[ProfileText],
) -> Result<EmbeddingTable> {
    let mut table = EmbeddingTable::new(encoder.dim())?;
    for t in catalog.iter() {
        table.insert(EntryKind::Item, t.item_id, encoder.encode_f32(&catalog.title(t.item_id)))?;
    }
    for p in profiles.iter().filter(|p| !p.is_empty()) {
        table.insert(EntryKind::Profile, p.user_id, encoder.encode_f32(&p.text))?;
    }
    Ok(table)
}

/// Scores every train positive against its user's profile embedding.
pub fn compute_similarity_table(
    split: &DatasetSplit,
    table: &EmbeddingTable,
    profiles: &[ProfileText],
    fallback: Option<Fallback<'_>>,
) -> Result<SimilarityTable> {
    if let Some(fb) = &fallback {
        if fb.encoder.dim() != table.dim() {
            return Err(Error::InvalidArgument(format!(
                "fallback dim {} differs from table dim {}",
                fb.encoder.dim(),
                table.dim()
            )));
        }
    }
    let profiles: HashMap<u64, &ProfileText> = profiles
        .iter()
        .filter(|p| !p.is_empty())
        .map(|p| (p.user_id, p))
        .collect();

    let mut filled: HashMap<(EntryKind, u64), Vec<f32>> = HashMap::new();
    let mut missing: Vec<String> = Vec::new();
    let mut resolve = |kind: EntryKind, id: u64, text: &dyn Fn() -> String| -> Option<Vec<f32>> {
        if let Some(v) = table.get(kind, id) {
            return Some(v.to_vec());
        }
        if let Some(v) = filled.get(&(kind, id)) {
            return Some(v.clone());
        }
        match &fallback {
            Some(fb) => {
                let v = fb.encoder.encode_f32(&text());
                filled.insert((kind, id), v.clone());
                Some(v)
            }
            None => {
                missing.push(format!("{} {id}", kind.as_str()));
                None
            }
        }
    };

    let mut entries = BTreeMap::new();
    let mut user_vecs: HashMap<u64, Option<Vec<f32>>> = HashMap::new();
    let mut item_vecs: HashMap<u64, Option<Vec<f32>>> = HashMap::new();
    for x in split.train.iter().filter(|x| x.is_positive()) {
        let Some(profile) = profiles.get(&x.user_id) else {
            entries.insert((x.user_id, x.item_id), Similarity::NoProfile);
            continue;
        };
        let u = user_vecs
            .entry(x.user_id)
            .or_insert_with(|| resolve(EntryKind::Profile, x.user_id, &|| profile.text.clone()))
            .clone();
        let i = item_vecs
            .entry(x.item_id)
            .or_insert_with(|| {
                resolve(EntryKind::Item, x.item_id, &|| match &fallback {
                    Some(fb) => fb.catalog.title(x.item_id).into_owned(),
                    None => String::new(),
                })
            })
            .clone();
        if let (Some(u), Some(i)) = (u, i) {
            entries.insert((x.user_id, x.item_id), Similarity::Score(cosine(&u, &i)?));
        }
    }
    if !missing.is_empty() {
        let shown: Vec<&str> = missing.iter().take(20).map(String::as_str).collect();
        let more = missing.len().saturating_sub(shown.len());
        let mut msg = shown.join(", ");
        if more > 0 {
            msg.push_str(&format!(" (+{more} more)"));
        }
        return Err(Error::MissingEmbeddings(msg));
    }
    Ok(SimilarityTable::from_entries(entries))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Interaction;
    use proptest::prelude::*;

    fn catalog() -> ItemCatalog {
        ItemCatalog::new(
            [(1, "Alpha"), (2, "Beta"), (3, "Gamma")]
                .into_iter()
                .map(|(id, t)| ItemText {
                    item_id: id,
                    title: t.into(),
                    category: None,
                }),
        )
    }

    #[test]
    fn profile_takes_most_recent_k() {
        let p = build_profile_text(9, &[1, 2, 3], &catalog(), 2);
        assert_eq!(p.text, "Beta; Gamma");
        assert_eq!(p.source_items, vec![2, 3]);
        let p = build_profile_text(9, &[1], &catalog(), 10);
        assert_eq!(p.text, "Alpha");
        let p = build_profile_text(9, &[], &catalog(), 10);
        assert!(p.text.is_empty() && p.is_empty());
        let p = build_profile_text(9, &[7], &catalog(), 10);
        assert_eq!(p.text, "item 7");
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine(&[0.3, -2.0, 5.0], &[0.3, -2.0, 5.0]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        // 1 / sqrt(2)
        assert!((cosine(&[1.0, 1.0, 0.0], &[1.0, 0.0, 0.0]).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!(matches!(cosine(&[1.0], &[1.0, 2.0]), Err(Error::LengthMismatch(1, 2))));
    }

    proptest! {
        #[test]
        fn cosine_symmetric_scale_invariant_bounded(
            a in proptest::collection::vec(-10.0f64..10.0, 8),
            b in proptest::collection::vec(-10.0f64..10.0, 8),
            lambda in 0.001f64..1000.0,
        ) {
            let ab = cosine(&a, &b).unwrap();
            prop_assert!((ab - cosine(&b, &a).unwrap()).abs() < 1e-12);
            let scaled: Vec<f64> = a.iter().map(|x| x * lambda).collect();
            prop_assert!((ab - cosine(&scaled, &b).unwrap()).abs() < 1e-9);
            prop_assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&ab));
        }
    }

    fn split_with(train: Vec<Interaction>) -> DatasetSplit {
        let mut s = DatasetSplit {
            train,
            ..Default::default()
        };
        for x in &s.train {
            if x.is_positive() {
                s.histories.entry(x.user_id).or_default().push(x.item_id);
            }
        }
        s
    }

    #[test]
    fn identical_embeddings_give_unit_scores() {
        let split = split_with(vec![
            Interaction::positive(1, 1, 0),
            Interaction::positive(1, 2, 1),
            Interaction::positive(2, 3, 0),
            Interaction::negative(2, 1, 0),
        ]);
        let mut t = EmbeddingTable::new(2).unwrap();
        for i in 1..=3 {
            t.insert(EntryKind::Item, i, vec![0.6, 0.8]).unwrap();
        }
        for u in 1..=2 {
            t.insert(EntryKind::Profile, u, vec![0.6, 0.8]).unwrap();
        }
        let profiles = build_profiles(&split, &catalog(), 10);
        let sims = compute_similarity_table(&split, &t, &profiles, None).unwrap();
        assert_eq!(sims.len(), 3);
        assert!(sims.iter().all(|(_, s)| (s.score().unwrap() - 1.0).abs() < 1e-12));
        assert!((sims.mu() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mu_is_mean_of_scores_and_ignores_sentinels() {
        let mut e = BTreeMap::new();
        e.insert((1, 1), Similarity::Score(0.2));
        e.insert((1, 2), Similarity::Score(0.4));
        e.insert((1, 3), Similarity::Score(0.6));
        e.insert((2, 3), Similarity::NoProfile);
        let t = SimilarityTable::from_entries(e);
        assert!((t.mu() - 0.4).abs() < 1e-12);
        assert!((t.recomputed_mu() - t.mu()).abs() < 1e-12);
    }

    #[test]
    fn missing_embeddings_reported_without_fallback() {
        let split = split_with(vec![Interaction::positive(1, 2, 0)]);
        let profiles = build_profiles(&split, &catalog(), 10);
        let t = EmbeddingTable::new(16).unwrap();
        match compute_similarity_table(&split, &t, &profiles, None) {
            Err(Error::MissingEmbeddings(msg)) => {
                assert!(msg.contains("profile 1") && msg.contains("item 2"), "{msg}");
            }
            other => panic!("unexpected {other:?}"),
        }
        let cat = catalog();
        let fb = Fallback {
            encoder: FallbackEncoder::new(16, 0).unwrap(),
            catalog: &cat,
        };
        let sims = compute_similarity_table(&split, &t, &profiles, Some(fb)).unwrap();
        // profile "Beta" vs item "Beta"
        assert!((sims.get(1, 2).unwrap().score().unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn users_without_history_get_sentinel() {
        let mut split = split_with(vec![Interaction::positive(1, 1, 0)]);
        split.train.push(Interaction {
            origin: crate::corpus::Origin::InjectedNoise,
            ..Interaction::positive(5, 2, 0)
        });
        let cat = catalog();
        let enc = FallbackEncoder::new(32, 1).unwrap();
        let profiles = build_profiles(&split, &cat, 10);
        let table = build_fallback_table(&enc, &cat, &profiles).unwrap();
        let sims = compute_similarity_table(&split, &table, &profiles, None).unwrap();
        assert_eq!(sims.get(5, 2), Some(Similarity::NoProfile));
        assert!(sims.get(1, 1).unwrap().score().is_some());
    }
}
