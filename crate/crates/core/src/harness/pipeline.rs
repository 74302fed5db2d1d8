use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{hex, DataKind, EncoderMode, ExperimentConfig, MuMode};
use super::report::{CellResult, CellStatus, ExperimentReport, Provenance};
use crate::corpus::manifest::{escape, render_manifest, ManifestRow};
use crate::corpus::{
    chronological_split, inject_noise, sample_negatives, CorpusStats, DatasetSplit, Interaction,
    LoadedCorpus, NoiseSpec, load_movielens_with,
};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, EvalResult};
use crate::model::{train, Example, IdIndex, TrainOutcome};
use crate::reweight::{assign_weights, WeightConfig, WeightedSample};
use crate::semantics::{
    build_fallback_table, build_profiles, compute_similarity_table, load_embedding_table, EmbeddingTable, EntryKind,
    Fallback, FallbackEncoder, ItemCatalog, ProfileText, SimilarityTable,
};

pub const PREPARED_DIR: &str = "prepared";
pub const PREPARE_SUMMARY: &str = "prepare.json";

pub fn load_corpus(cfg: &ExperimentConfig) -> Result<LoadedCorpus> {
    let d = &cfg.data;
    let path = |p: &Option<std::path::PathBuf>| p.clone().expect("validated config has paths");
    match d.kind {
        DataKind::Movielens => {
            load_movielens_with(&path(&d.ratings), &path(&d.items), d.min_rating)
        }
        DataKind::Tsv => LoadedCorpus::from_tsv(&path(&d.ratings), &path(&d.items), d.min_rating, d.min_core),
        DataKind::Synthetic => Ok(cfg.synthetic.generate()?.corpus),
    }
}

/// Split, negatives, catalog and profiles: everything fixed before noise.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub split: DatasetSplit,
    pub catalog: ItemCatalog,
    pub profiles: Vec<ProfileText>,
    pub stats: CorpusStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepareSummary {
    pub stats: CorpusStats,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    pub profiles: usize,
    pub manifest_rows: usize,
    /// File name to hex SHA-256.
    pub checksums: BTreeMap<String, String>,
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    prepare_corpus(cfg, load_corpus(cfg)?)
}

pub fn prepare_corpus(cfg: &ExperimentConfig, corpus: LoadedCorpus) -> Result<Prepared> {
    let stats = corpus.stats();
    let mut split = chronological_split(&corpus.interactions, cfg.data.split)?;
    split.extend_users(corpus.users.iter().copied());
    split.extend_items(corpus.texts.iter().map(|t| t.item_id));
    let split = sample_negatives(&split, cfg.data.negative_ratio, cfg.data.seed)?;
    let catalog = ItemCatalog::new(corpus.texts);
    let profiles = build_profiles(&split, &catalog, cfg.profile.k);
    Ok(Prepared {
        split,
        catalog,
        profiles,
        stats,
    })
}

fn render_interactions(xs: &[Interaction]) -> String {
    let mut out = String::from("user_id\titem_id\tlabel\ttimestamp\torigin\n");
    for x in xs {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            x.user_id,
            x.item_id,
            x.label,
            x.timestamp,
            x.origin.as_str()
        );
    }
    out
}

fn join_ids(ids: &[u64]) -> String {
    ids.iter().map(u64::to_string).collect::<Vec<_>>().join(",")
}

impl Prepared {
    /// Item rows followed by one profile row per user with history.
    pub fn manifest(&self) -> Vec<ManifestRow> {
        let items = self.catalog.iter().map(|t| ManifestRow {
            kind: EntryKind::Item,
            id: t.item_id,
            text: self.catalog.title(t.item_id).into_owned(),
        });
        let profiles = self.profiles.iter().filter(|p| !p.is_empty()).map(|p| ManifestRow {
            kind: EntryKind::Profile,
            id: p.user_id,
            text: p.text.clone(),
        });
        items.chain(profiles).collect()
    }

    /// Artifact file names and their exact contents.
    pub fn render(&self) -> BTreeMap<&'static str, String> {
        let mut files = BTreeMap::new();
        let mut items = String::from("item_id\ttitle\tcategory\n");
        for t in self.catalog.iter() {
            let cat = t.category.as_deref().map(escape).unwrap_or_default();
            let _ = writeln!(items, "{}\t{}\t{}", t.item_id, escape(&self.catalog.title(t.item_id)), cat);
        }
        files.insert("items.tsv", items);
        files.insert("users.txt", self.split.users.iter().map(|u| format!("{u}\n")).collect());
        files.insert("train.tsv", render_interactions(&self.split.train));
        files.insert("validation.tsv", render_interactions(&self.split.validation));
        files.insert("test.tsv", render_interactions(&self.split.test));
        let mut hist = String::from("user_id\titems\n");
        for (u, h) in &self.split.histories {
            let _ = writeln!(hist, "{u}\t{}", join_ids(h));
        }
        files.insert("histories.tsv", hist);
        let mut prof = String::from("user_id\tsource_items\ttext\n");
        for p in &self.profiles {
            let _ = writeln!(prof, "{}\t{}\t{}", p.user_id, join_ids(&p.source_items), escape(&p.text));
        }
        files.insert("profiles.tsv", prof);
        files.insert("manifest.tsv", render_manifest(&self.manifest()));
        files
    }

    pub fn summary(&self) -> PrepareSummary {
        let checksums = self
            .render()
            .into_iter()
            .map(|(name, body)| (name.to_owned(), hex(&Sha256::digest(body.as_bytes()))))
            .collect();
        PrepareSummary {
            stats: self.stats,
            train: self.split.train.len(),
            validation: self.split.validation.len(),
            test: self.split.test.len(),
            profiles: self.profiles.iter().filter(|p| !p.is_empty()).count(),
            manifest_rows: self.manifest().len(),
            checksums,
        }
    }

    /// Writes the artifacts plus `prepare.json` into `dir`. Contents depend
    /// only on the input data and config, so reruns are byte-identical.
    pub fn write(&self, dir: &Path) -> Result<PrepareSummary> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, body) in self.render() {
            let p = dir.join(name);
            fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        }
        let summary = self.summary();
        let p = dir.join(PREPARE_SUMMARY);
        let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
        fs::write(&p, text + "\n").map_err(|e| Error::io(&p, e))?;
        Ok(summary)
    }

    /// Fails when `dir` holds artifacts from different data or settings.
    pub fn check_against(&self, dir: &Path) -> Result<()> {
        let p = dir.join(PREPARE_SUMMARY);
        let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        let stored: PrepareSummary =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
        if stored.checksums != self.summary().checksums {
            return Err(Error::Config(format!(
                "prepared artifacts in {} do not match the current data and config; rerun prepare",
                dir.display()
            )));
        }
        Ok(())
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

/// Train split after noise injection with its similarity table.
#[derive(Debug, Clone)]
pub struct Condition {
    pub noise: f64,
    pub seed: u64,
    pub train: Vec<Interaction>,
    pub sims: SimilarityTable,
    pub mu: f64,
}

/// A prepared dataset bound to an embedding table and id index, ready to
/// run grid cells.
#[derive(Debug)]
pub struct Experiment {
    pub cfg: ExperimentConfig,
    pub prepared: Prepared,
    pub table: EmbeddingTable,
    pub index: IdIndex,
    validation: Vec<Example>,
    test: Vec<Example>,
}

/// Keeps the noise stream apart from the init stream of the same seed.
fn noise_seed(seed: u64) -> u64 {
    seed ^ 0x6e6f_6973_655f_7365
}

impl Experiment {
    pub fn new(cfg: ExperimentConfig, prepared: Prepared) -> Result<Self> {
        let table = match cfg.encoder.mode {
            EncoderMode::Fallback => {
                let enc = FallbackEncoder::new(cfg.encoder.dim, cfg.encoder.hash_seed)?;
                build_fallback_table(&enc, &prepared.catalog, &prepared.profiles)?
            }
            EncoderMode::Table => {
                let path = cfg.encoder.path.as_deref().expect("validated config has a table path");
                load_embedding_table(path)?
            }
        };
        Self::with_table(cfg, prepared, table)
    }

    pub fn with_table(cfg: ExperimentConfig, prepared: Prepared, table: EmbeddingTable) -> Result<Self> {
        let index = IdIndex::new(prepared.split.users.iter().copied(), prepared.split.items.iter().copied());
        let validation = index.examples(&prepared.split.validation)?;
        let test = index.examples(&prepared.split.test)?;
        Ok(Experiment {
            cfg,
            prepared,
            table,
            index,
            validation,
            test,
        })
    }

    pub fn test_examples(&self) -> &[Example] {
        &self.test
    }

    pub fn validation_examples(&self) -> &[Example] {
        &self.validation
    }

    fn fallback(&self) -> Result<Option<Fallback<'_>>> {
        let e = &self.cfg.encoder;
        if e.mode == EncoderMode::Table && !e.fill_missing {
            return Ok(None);
        }
        Ok(Some(Fallback {
            encoder: FallbackEncoder::new(self.table.dim(), e.hash_seed)?,
            catalog: &self.prepared.catalog,
        }))
    }

    /// Injects noise into train and scores every train positive. Profiles
    /// stay as prepared.
    pub fn condition(&self, noise: f64, seed: u64) -> Result<Condition> {
        let noisy = inject_noise(&self.prepared.split, NoiseSpec::new(noise, noise_seed(seed))?)?;
        let sims = compute_similarity_table(&noisy, &self.table, &self.prepared.profiles, self.fallback()?)?;
        let mu = match self.cfg.weights.mu {
            MuMode::GlobalMean => sims.mu(),
            MuMode::Fixed(v) => v,
        };
        Ok(Condition {
            noise,
            seed,
            train: noisy.train,
            sims,
            mu,
        })
    }

    pub fn weights(&self, cond: &Condition, alpha: f64) -> Result<Vec<WeightedSample>> {
        let wcfg = WeightConfig::new(alpha, self.cfg.weights.beta, cond.mu)?;
        assign_weights(&cond.train, &cond.sims, &wcfg)
    }

    /// Trains from a fresh seeded model on the weighted train split.
    pub fn fit(&self, cond: &Condition, alpha: f64) -> Result<TrainOutcome> {
        let weighted = self.weights(cond, alpha)?;
        let (examples, weights) = self.index.weighted_examples(&weighted)?;
        let mut tc = self.cfg.train.clone();
        tc.seed = cond.seed;
        let model = tc.build_model(self.index.n_users(), self.index.n_items())?;
        train(model, &examples, &weights, &self.validation, &tc)
    }

    pub fn evaluate(&self, outcome: &TrainOutcome) -> Result<EvalResult> {
        let scores = outcome.model.predict(&self.test)?;
        let labels: Vec<u8> = self.test.iter().map(|e| e.label).collect();
        evaluate(&scores, &labels)
    }

    pub fn run_cell(&self, cond: &Condition, alpha: f64) -> CellResult {
        let result = self.fit(cond, alpha).and_then(|o| Ok((self.evaluate(&o)?, o)));
        match result {
            Ok((eval, outcome)) => CellResult {
                noise: cond.noise,
                alpha,
                seed: cond.seed,
                status: CellStatus::Ok,
                eval: Some(eval),
                mu: Some(cond.mu),
                best_epoch: Some(outcome.best_epoch),
                trace: outcome.trace,
                reason: None,
            },
            Err(e) => {
                warn!("cell noise={} alpha={alpha} seed={} failed: {e}", cond.noise, cond.seed);
                CellResult::failed(cond.noise, alpha, cond.seed, e.to_string())
            }
        }
    }

    /// Every (noise, alpha, seed) cell of the configured grid. Failures are
    /// recorded and the run continues.
    pub fn run_grid(&self) -> Vec<CellResult> {
        let g = &self.cfg.grid;
        let mut cells = Vec::with_capacity(g.noise.len() * g.alpha.len() * g.seeds.len());
        for &noise in &g.noise {
            for &seed in &g.seeds {
                match self.condition(noise, seed) {
                    Ok(cond) => {
                        for &alpha in &g.alpha {
                            let cell = self.run_cell(&cond, alpha);
                            if let Some(e) = &cell.eval {
                                info!("noise={noise} alpha={alpha} seed={seed} auc={:.4} logloss={:.4}", e.auc, e.logloss);
                            }
                            cells.push(cell);
                        }
                    }
                    Err(e) => {
                        warn!("noise={noise} seed={seed}: {e}");
                        for &alpha in &g.alpha {
                            cells.push(CellResult::failed(noise, alpha, seed, e.to_string()));
                        }
                    }
                }
            }
        }
        cells
    }

    /// Runs the grid and wraps it with provenance.
    pub fn run(&self, data_checksums: BTreeMap<String, String>) -> ExperimentReport {
        let started = unix_now();
        let cells = self.run_grid();
        let provenance = Provenance {
            config_hash: self.cfg.hash(),
            started_unix: started,
            finished_unix: unix_now(),
            data_checksums,
            engine_version: env!("CARGO_PKG_VERSION").to_owned(),
        };
        ExperimentReport::new(provenance, self.cfg.weights.alpha, cells)
    }
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Checksums of the prepared artifacts and, for table mode, the table file.
pub fn data_checksums(cfg: &ExperimentConfig, prepared: &Prepared) -> Result<BTreeMap<String, String>> {
    let mut sums = prepared.summary().checksums;
    if cfg.encoder.mode == EncoderMode::Table {
        let path = cfg.encoder.path.as_deref().expect("validated config has a table path");
        sums.insert("embeddings".into(), sha256_file(path)?);
    }
    Ok(sums)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::SyntheticConfig;

    fn small() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.synthetic = SyntheticConfig {
            users: 30,
            items: 20,
            positives_per_user: 6,
            ..Default::default()
        };
        cfg.encoder.dim = 64;
        cfg.train.embedding_dim = 4;
        cfg.train.hidden = vec![8];
        cfg.train.batch_size = 64;
        cfg.train.max_epochs = 2;
        cfg.grid.noise = vec![0.0, 0.5];
        cfg.grid.alpha = vec![0.4, 1.0];
        cfg.grid.seeds = vec![0, 1];
        cfg
    }

    #[test]
    fn grid_has_every_cell() {
        let cfg = small();
        let exp = Experiment::new(cfg.clone(), prepare(&cfg).unwrap()).unwrap();
        let report = exp.run(BTreeMap::new());
        assert_eq!(report.cells.len(), 8);
        assert_eq!(report.failures(), 0);
        assert_eq!(report.provenance.config_hash, cfg.hash());
        assert_eq!(report.aggregates.len(), 4);
    }

    #[test]
    fn prepare_is_reproducible() {
        let cfg = small();
        let a = prepare(&cfg).unwrap();
        let b = prepare(&cfg).unwrap();
        assert_eq!(a.render(), b.render());
        let m = a.manifest();
        assert_eq!(m.iter().filter(|r| r.kind == EntryKind::Item).count(), 20);
        assert_eq!(m.iter().filter(|r| r.kind == EntryKind::Profile).count(), a.split.histories.len());
    }

    #[test]
    fn condition_counts_noise() {
        let cfg = small();
        let exp = Experiment::new(cfg.clone(), prepare(&cfg).unwrap()).unwrap();
        let negs = exp.prepared.split.train.iter().filter(|x| !x.is_positive()).count();
        let cond = exp.condition(0.5, 3).unwrap();
        let flipped = cond
            .train
            .iter()
            .filter(|x| x.origin == crate::corpus::Origin::InjectedNoise)
            .count();
        assert_eq!(flipped, negs / 2);
        let pairs: std::collections::BTreeSet<_> = cond
            .train
            .iter()
            .filter(|x| x.is_positive())
            .map(|x| (x.user_id, x.item_id))
            .collect();
        assert_eq!(cond.sims.len(), pairs.len());
        assert!((cond.mu - cond.sims.recomputed_mu()).abs() < 1e-12);
    }

    #[test]
    fn table_mode_without_rows_fails_cleanly() {
        let mut cfg = small();
        cfg.encoder.mode = EncoderMode::Table;
        let prepared = prepare(&cfg).unwrap();
        let exp = Experiment::with_table(cfg, prepared, EmbeddingTable::new(64).unwrap()).unwrap();
        assert!(matches!(exp.condition(0.0, 0), Err(Error::MissingEmbeddings(_))));
    }
}
