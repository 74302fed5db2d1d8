use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::SplitRatios;
use crate::error::{Error, Result};
use crate::model::TrainConfig;
use crate::reweight::WeightConfig;
use crate::synthetic::SyntheticConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataKind {
    /// `ratings.dat` and `movies.dat` with `::` separators.
    Movielens,
    /// Tab-separated ratings and item texts.
    Tsv,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub kind: DataKind,
    pub ratings: Option<PathBuf>,
    pub items: Option<PathBuf>,
    pub min_rating: f64,
    /// Iterative k-core threshold for TSV input; 0 or 1 disables it.
    pub min_core: usize,
    pub split: SplitRatios,
    pub negative_ratio: usize,
    pub seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            kind: DataKind::Synthetic,
            ratings: None,
            items: None,
            min_rating: 4.0,
            min_core: 0,
            split: SplitRatios::default(),
            negative_ratio: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileConfig {
    pub k: usize,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        ProfileConfig { k: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderMode {
    Fallback,
    Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub mode: EncoderMode,
    /// SAIDEMB (or `.tsv`) table for `mode = "table"`.
    pub path: Option<PathBuf>,
    pub dim: usize,
    pub hash_seed: u64,
    /// Encode rows missing from the table with the fallback encoder.
    pub fill_missing: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            mode: EncoderMode::Fallback,
            path: None,
            dim: 256,
            hash_seed: 0,
            fill_missing: false,
        }
    }
}

/// How the weight midpoint is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum MuMode {
    GlobalMean,
    Fixed(f64),
}

impl FromStr for MuMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "global_mean" {
            return Ok(MuMode::GlobalMean);
        }
        s.strip_prefix("fixed:")
            .and_then(|v| v.trim().parse::<f64>().ok())
            .filter(|v| v.is_finite())
            .map(MuMode::Fixed)
            .ok_or_else(|| Error::Config(format!("mu must be \"global_mean\" or \"fixed:<value>\", got {s:?}")))
    }
}

impl TryFrom<String> for MuMode {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<MuMode> for String {
    fn from(m: MuMode) -> String {
        m.to_string()
    }
}

impl fmt::Display for MuMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MuMode::GlobalMean => f.write_str("global_mean"),
            MuMode::Fixed(v) => write!(f, "fixed:{v}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightsConfig {
    /// The floor reported as "SAID" in method comparisons.
    pub alpha: f64,
    pub beta: f64,
    pub mu: MuMode,
}

impl Default for WeightsConfig {
    fn default() -> Self {
        WeightsConfig {
            alpha: WeightConfig::DEFAULT_ALPHA,
            beta: WeightConfig::DEFAULT_BETA,
            mu: MuMode::GlobalMean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub noise: Vec<f64>,
    pub alpha: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            noise: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
            alpha: vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
            seeds: vec![0, 1, 2, 3, 4],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("said-out") }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub synthetic: SyntheticConfig,
    pub profile: ProfileConfig,
    pub encoder: EncoderConfig,
    pub weights: WeightsConfig,
    pub grid: GridConfig,
    pub train: TrainConfig,
    pub output: OutputConfig,
}

impl ExperimentConfig {
    /// Parses TOML text, applies `section.key=value` overrides in order and
    /// validates the result.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e| Error::Config(format!("{e}")))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: ExperimentConfig = table.try_into().map_err(|e| Error::Config(format!("{e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file. Relative data and table paths are resolved
    /// against the file's directory.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text, overrides)?;
        if let Some(base) = path.parent() {
            for p in [&mut cfg.data.ratings, &mut cfg.data.items, &mut cfg.encoder.path]
                .into_iter()
                .flatten()
            {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
            if cfg.output.dir.is_relative() {
                cfg.output.dir = base.join(&cfg.output.dir);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.data.split.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.data.negative_ratio == 0 {
            return bad("data.negative_ratio must be at least 1".into());
        }
        match self.data.kind {
            DataKind::Movielens | DataKind::Tsv if self.data.ratings.is_none() || self.data.items.is_none() => {
                return bad("data.ratings and data.items are required for file input".into());
            }
            DataKind::Synthetic => self.synthetic.validate().map_err(|e| Error::Config(e.to_string()))?,
            _ => {}
        }
        if self.profile.k == 0 {
            return bad("profile.k must be positive".into());
        }
        if self.encoder.mode == EncoderMode::Table && self.encoder.path.is_none() {
            return bad("encoder.path is required when encoder.mode = \"table\"".into());
        }
        if self.encoder.mode == EncoderMode::Fallback || self.encoder.fill_missing {
            crate::semantics::FallbackEncoder::new(self.encoder.dim, self.encoder.hash_seed)
                .map_err(|e| Error::Config(e.to_string()))?;
        }
        WeightConfig::new(self.weights.alpha, self.weights.beta, 0.0).map_err(|e| Error::Config(e.to_string()))?;
        let g = &self.grid;
        if g.noise.is_empty() || g.alpha.is_empty() || g.seeds.is_empty() {
            return bad("grid.noise, grid.alpha and grid.seeds must be non-empty".into());
        }
        if g.seeds.iter().collect::<BTreeSet<_>>().len() != g.seeds.len() {
            return bad(format!("grid.seeds must be distinct, got {:?}", g.seeds));
        }
        for &n in &g.noise {
            if !(0.0..=0.5).contains(&n) {
                return bad(format!("noise ratio {n} outside [0, 0.5]"));
            }
        }
        for &a in &g.alpha {
            if !(0.0..=1.0).contains(&a) {
                return bad(format!("alpha {a} outside [0, 1]"));
            }
        }
        self.train.validate().map_err(|e| Error::Config(e.to_string()))
    }

    /// Canonical TOML rendering: defaults filled in, fixed key order.
    pub fn normalized(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the normalized text.
    pub fn hash(&self) -> String {
        hex(&Sha256::digest(self.normalized().as_bytes()))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// `a.b=value`, where value is parsed as a TOML value and otherwise taken as
/// a bare string.
fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {spec:?} is not key=value")))?;
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_owned()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, sections) = parts.split_last().expect("split yields one part");
    let mut cur = table;
    for s in sections {
        cur = cur
            .entry(s.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {spec:?}: {s} is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gives_defaults() {
        let cfg = ExperimentConfig::from_toml("", &[]).unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.weights.alpha, 0.4);
        assert_eq!(cfg.weights.beta, 5.0);
        assert_eq!(cfg.grid.alpha, vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0]);
        assert_eq!(cfg.train.batch_size, 2048);
    }

    #[test]
    fn overrides_and_mu_modes() {
        let cfg = ExperimentConfig::from_toml(
            "[weights]\nmu = \"fixed:0.25\"\n",
            &["train.max_epochs=4".into(), "grid.seeds=[3, 9]".into(), "output.dir=out/x".into()],
        )
        .unwrap();
        assert_eq!(cfg.weights.mu, MuMode::Fixed(0.25));
        assert_eq!(cfg.train.max_epochs, 4);
        assert_eq!(cfg.grid.seeds, vec![3, 9]);
        assert_eq!(cfg.output.dir, PathBuf::from("out/x"));
        assert!(ExperimentConfig::from_toml("[weights]\nmu = \"median\"\n", &[]).is_err());
    }

    #[test]
    fn rejects_invalid() {
        for text in [
            "[grid]\nseeds = [1, 1]\n",
            "[grid]\nnoise = []\n",
            "[grid]\nnoise = [0.7]\n",
            "[weights]\nalpha = 1.5\n",
            "[data]\nkind = \"movielens\"\n",
            "[encoder]\nmode = \"table\"\n",
            "[train]\nbogus = 1\n",
            "nonsense = 1\n",
        ] {
            assert!(matches!(ExperimentConfig::from_toml(text, &[]), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn hash_ignores_formatting() {
        let a = ExperimentConfig::from_toml("[weights]\nalpha = 0.4\n# note\n", &[]).unwrap();
        let b = ExperimentConfig::from_toml("", &[]).unwrap();
        let c = ExperimentConfig::from_toml("[weights]\nalpha = 0.6\n", &[]).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
        let back = ExperimentConfig::from_toml(&a.normalized(), &[]).unwrap();
        assert_eq!(back, a);
    }
}
