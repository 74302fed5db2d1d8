use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{EvalResult, Summary};
use crate::model::EpochStats;

pub const BASELINE_ALPHA: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellStatus {
    Ok,
    Failed,
}

/// One (noise, alpha, seed) point of the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub noise: f64,
    pub alpha: f64,
    pub seed: u64,
    pub status: CellStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval: Option<EvalResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_epoch: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<EpochStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl CellResult {
    pub fn failed(noise: f64, alpha: f64, seed: u64, reason: impl Into<String>) -> Self {
        CellResult {
            noise,
            alpha,
            seed,
            status: CellStatus::Failed,
            eval: None,
            mu: None,
            best_epoch: None,
            trace: Vec::new(),
            reason: Some(reason.into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    /// File name to hex SHA-256 of every input the run depended on.
    pub data_checksums: BTreeMap<String, String>,
    pub engine_version: String,
}

/// Seed statistics for one (noise, alpha) point. Failed seeds are counted
/// but excluded from the summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub noise: f64,
    pub alpha: f64,
    pub seeds_ok: usize,
    pub seeds_failed: usize,
    pub auc: Option<Summary>,
    pub logloss: Option<Summary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub provenance: Provenance,
    /// The alpha reported as the reweighted method in comparisons.
    pub headline_alpha: f64,
    pub cells: Vec<CellResult>,
    pub aggregates: Vec<AggregateRow>,
}

fn key(noise: f64, alpha: f64) -> (u64, u64) {
    // grid values are non-negative, so bit order is numeric order
    (noise.to_bits(), alpha.to_bits())
}

pub fn aggregate_cells(cells: &[CellResult]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(u64, u64), Vec<&CellResult>> = BTreeMap::new();
    for c in cells {
        groups.entry(key(c.noise, c.alpha)).or_default().push(c);
    }
    groups
        .into_values()
        .map(|cs| {
            let ok: Vec<&EvalResult> = cs.iter().filter_map(|c| c.eval.as_ref()).collect();
            let aucs: Vec<f64> = ok.iter().map(|e| e.auc).collect();
            let losses: Vec<f64> = ok.iter().map(|e| e.logloss).collect();
            AggregateRow {
                noise: cs[0].noise,
                alpha: cs[0].alpha,
                seeds_ok: ok.len(),
                seeds_failed: cs.len() - ok.len(),
                auc: (!ok.is_empty()).then(|| Summary::of(&aucs)),
                logloss: (!ok.is_empty()).then(|| Summary::of(&losses)),
            }
        })
        .collect()
}

impl ExperimentReport {
    pub fn new(provenance: Provenance, headline_alpha: f64, cells: Vec<CellResult>) -> Self {
        let aggregates = aggregate_cells(&cells);
        ExperimentReport {
            provenance,
            headline_alpha,
            cells,
            aggregates,
        }
    }

    pub fn failures(&self) -> usize {
        self.cells.iter().filter(|c| c.status == CellStatus::Failed).count()
    }

    pub fn row(&self, noise: f64, alpha: f64) -> Option<&AggregateRow> {
        self.aggregates.iter().find(|r| key(r.noise, r.alpha) == key(noise, alpha))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("report serializes");
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let report: ExperimentReport =
            serde_json::from_str(&text).map_err(|e| Error::MalformedReport(format!("{}: {e}", path.display())))?;
        for c in &report.cells {
            if (c.status == CellStatus::Ok) != c.eval.is_some() {
                return Err(Error::MalformedReport(format!(
                    "cell (noise {}, alpha {}, seed {}) status disagrees with its result",
                    c.noise, c.alpha, c.seed
                )));
            }
        }
        Ok(report)
    }

    /// AUC against noise for the baseline and the headline alpha.
    pub fn noise_sweep_csv(&self) -> String {
        let mut out = String::from("series,noise,alpha,auc_mean,auc_std,logloss_mean,logloss_std,seeds\n");
        let mut rows: Vec<(&str, &AggregateRow)> = Vec::new();
        for r in &self.aggregates {
            if r.alpha == BASELINE_ALPHA {
                rows.push(("baseline", r));
            }
            if r.alpha == self.headline_alpha && r.alpha != BASELINE_ALPHA {
                rows.push(("said", r));
            }
        }
        rows.sort_by(|a, b| a.0.cmp(b.0).then(a.1.noise.total_cmp(&b.1.noise)));
        for (series, r) in rows {
            let _ = writeln!(out, "{series},{}", metric_fields(r));
        }
        out
    }

    /// AUC against alpha at every noise level, alpha ascending.
    pub fn alpha_sweep_csv(&self) -> String {
        let mut out = String::from("noise,alpha,auc_mean,auc_std,logloss_mean,logloss_std,seeds\n");
        let mut rows: Vec<&AggregateRow> = self.aggregates.iter().collect();
        rows.sort_by(|a, b| a.noise.total_cmp(&b.noise).then(a.alpha.total_cmp(&b.alpha)));
        for r in rows {
            let _ = writeln!(out, "{}", metric_fields(r));
        }
        out
    }

    /// Baseline against the headline alpha at each noise level, with the
    /// relative AUC change of the latter.
    pub fn method_comparison_csv(&self) -> String {
        let mut out = String::from(
            "noise,method,alpha,auc_mean,auc_std,logloss_mean,logloss_std,seeds,auc_rel_change\n",
        );
        let mut noises: Vec<f64> = self.aggregates.iter().map(|r| r.noise).collect();
        noises.sort_by(f64::total_cmp);
        noises.dedup();
        for noise in noises {
            let base = self.row(noise, BASELINE_ALPHA);
            let said = (self.headline_alpha != BASELINE_ALPHA)
                .then(|| self.row(noise, self.headline_alpha))
                .flatten();
            if let Some(b) = base {
                let _ = writeln!(out, "{noise},baseline,{}", tail(b, ""));
            }
            if let Some(s) = said {
                let change = match (base.and_then(|b| b.auc), s.auc) {
                    (Some(b), Some(s)) => format!("{:.6}", (s.mean - b.mean) / b.mean),
                    _ => String::new(),
                };
                let _ = writeln!(out, "{noise},said,{}", tail(s, &change));
            }
        }
        out
    }

    /// Writes the three tables into `dir` and returns their paths.
    pub fn write_tables(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let tables = [
            ("noise_sweep.csv", self.noise_sweep_csv()),
            ("alpha_sweep.csv", self.alpha_sweep_csv()),
            ("method_comparison.csv", self.method_comparison_csv()),
        ];
        let mut paths = Vec::new();
        for (name, body) in tables {
            let p = dir.join(name);
            fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
            paths.push(p);
        }
        Ok(paths)
    }
}

fn summary_fields(s: Option<Summary>) -> String {
    match s {
        Some(s) => format!("{:.6},{:.6}", s.mean, s.std),
        None => ",".into(),
    }
}

fn metric_fields(r: &AggregateRow) -> String {
    format!("{},{}", r.noise, tail(r, "").trim_end_matches(','))
}

fn tail(r: &AggregateRow, extra: &str) -> String {
    format!(
        "{},{},{},{},{extra}",
        r.alpha,
        summary_fields(r.auc),
        summary_fields(r.logloss),
        r.seeds_ok
    )
}
