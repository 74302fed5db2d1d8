//! Python bindings for the reweighting engine.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use said_core::corpus::{load_movielens as core_load_movielens, CorpusStats};
use said_core::harness::{data_checksums, prepare, Experiment, ExperimentConfig};
use said_core::metrics::{self, EvalResult, Summary};
use said_core::model::{self, Example, ModelShape, TrainConfig};
use said_core::reweight::{self, WeightConfig};
use said_core::semantics::{self, EntryKind};
use said_core::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn kind_of(name: &str) -> PyResult<EntryKind> {
    EntryKind::parse(name).ok_or_else(|| PyValueError::new_err(format!("unknown kind {name:?}, expected item or profile")))
}

/// Weight of a positive with similarity `s`.
#[pyfunction]
#[pyo3(signature = (s, alpha=0.4, beta=5.0, mu=0.0))]
fn weight_of(s: f64, alpha: f64, beta: f64, mu: f64) -> PyResult<f64> {
    let cfg = WeightConfig::new(alpha, beta, mu).map_err(py_err)?;
    Ok(reweight::weight_of(s, &cfg))
}

#[pyfunction]
fn cosine(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    semantics::cosine(&a, &b).map_err(py_err)
}

/// Hashed character-trigram embedding, L2-normalized.
#[pyfunction]
#[pyo3(signature = (text, dim=256, hash_seed=0))]
fn encode_fallback(text: &str, dim: usize, hash_seed: u64) -> PyResult<Vec<f64>> {
    if dim == 0 {
        return Err(PyValueError::new_err("dim must be positive"));
    }
    Ok(semantics::encode_fallback(text, dim, hash_seed))
}

#[pyfunction]
fn auc(scores: Vec<f64>, labels: Vec<u8>) -> PyResult<f64> {
    metrics::auc(&scores, &labels).map_err(py_err)
}

#[pyfunction]
fn logloss(scores: Vec<f64>, labels: Vec<u8>) -> PyResult<f64> {
    metrics::logloss(&scores, &labels).map_err(py_err)
}

fn summary_dict<'py>(py: Python<'py>, s: &Summary) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new_bound(py);
    d.set_item("mean", s.mean)?;
    d.set_item("std", s.std)?;
    d.set_item("min", s.min)?;
    d.set_item("max", s.max)?;
    Ok(d)
}

/// Mean and sample std of per-seed `(auc, logloss)` pairs.
#[pyfunction]
fn aggregate<'py>(py: Python<'py>, results: Vec<(f64, f64)>) -> PyResult<Bound<'py, PyDict>> {
    let results: Vec<EvalResult> = results
        .into_iter()
        .map(|(auc, logloss)| EvalResult {
            auc,
            logloss,
            n_pos: 0,
            n_neg: 0,
        })
        .collect();
    let agg = metrics::aggregate(&results).map_err(py_err)?;
    let d = PyDict::new_bound(py);
    d.set_item("auc", summary_dict(py, &agg.auc)?)?;
    d.set_item("logloss", summary_dict(py, &agg.logloss)?)?;
    Ok(d)
}

/// Item and profile vectors keyed by id, as stored in SAIDEMB files.
#[pyclass(name = "EmbeddingTable")]
struct PyEmbeddingTable {
    inner: semantics::EmbeddingTable,
}

#[pymethods]
impl PyEmbeddingTable {
    #[new]
    fn new(dim: usize) -> PyResult<Self> {
        Ok(PyEmbeddingTable {
            inner: semantics::EmbeddingTable::new(dim).map_err(py_err)?,
        })
    }

    /// Reads a SAIDEMB binary or the TSV variant.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyEmbeddingTable {
            inner: semantics::load_embedding_table(&path).map_err(py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        semantics::save_embedding_table(&path, &self.inner).map_err(py_err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn insert(&mut self, kind: &str, id: u64, vector: Vec<f32>) -> PyResult<()> {
        self.inner.insert(kind_of(kind)?, id, vector).map_err(py_err)
    }

    fn get(&self, kind: &str, id: u64) -> PyResult<Option<Vec<f32>>> {
        Ok(self.inner.get(kind_of(kind)?, id).map(<[f32]>::to_vec))
    }

    fn __repr__(&self) -> String {
        format!("EmbeddingTable(dim={}, rows={})", self.inner.dim(), self.inner.len())
    }
}

fn stats_dict<'py>(py: Python<'py>, s: &CorpusStats) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new_bound(py);
    d.set_item("users", s.users)?;
    d.set_item("items", s.items)?;
    d.set_item("positives", s.positives)?;
    Ok(d)
}

/// Loads `ratings.dat` and `movies.dat`, keeping ratings of 4 and up.
/// Returns the corpus counts and the `(user, item, timestamp)` positives.
#[pyfunction]
fn load_movielens<'py>(py: Python<'py>, ratings: PathBuf, movies: PathBuf) -> PyResult<Bound<'py, PyDict>> {
    let corpus = core_load_movielens(&ratings, &movies).map_err(py_err)?;
    let d = stats_dict(py, &corpus.stats())?;
    let rows: Vec<(u64, u64, i64)> = corpus
        .interactions
        .iter()
        .map(|x| (x.user_id, x.item_id, x.timestamp))
        .collect();
    d.set_item("interactions", rows)?;
    Ok(d)
}

fn examples(users: &[u32], items: &[u32], labels: &[u8]) -> PyResult<Vec<Example>> {
    if users.len() != items.len() || users.len() != labels.len() {
        return Err(PyValueError::new_err("users, items and labels differ in length"));
    }
    Ok(users
        .iter()
        .zip(items)
        .zip(labels)
        .map(|((&user, &item), &label)| Example { user, item, label })
        .collect())
}

/// Two-field DeepFM over dense user and item indices.
#[pyclass(name = "CtrModel")]
struct PyCtrModel {
    inner: model::CtrModel,
}

#[pymethods]
impl PyCtrModel {
    #[new]
    #[pyo3(signature = (n_users, n_items, embedding_dim=16, hidden=vec![64, 32, 16], seed=0))]
    fn new(n_users: usize, n_items: usize, embedding_dim: usize, hidden: Vec<usize>, seed: u64) -> PyResult<Self> {
        let shape = ModelShape {
            n_users,
            n_items,
            embedding_dim,
            hidden,
        };
        Ok(PyCtrModel {
            inner: model::CtrModel::init(shape, seed).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyCtrModel {
            inner: model::load_checkpoint(&path).map_err(py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        model::save_checkpoint(&path, &self.inner).map_err(py_err)
    }

    #[getter]
    fn n_params(&self) -> usize {
        self.inner.params().len()
    }

    fn predict(&self, users: Vec<u32>, items: Vec<u32>) -> PyResult<Vec<f64>> {
        let ex = examples(&users, &items, &vec![0; users.len()])?;
        self.inner.predict(&ex).map_err(py_err)
    }

    /// Weighted (or plain, when `weights` is None) cross-entropy of a batch.
    #[pyo3(signature = (users, items, labels, weights=None))]
    fn loss(&self, users: Vec<u32>, items: Vec<u32>, labels: Vec<u8>, weights: Option<Vec<f64>>) -> PyResult<f64> {
        let ex = examples(&users, &items, &labels)?;
        self.inner.loss(&ex, weights.as_deref()).map_err(py_err)
    }

    /// Trains in place with Adam and early stopping on `validation`, a
    /// `(users, items, labels)` triple. Returns the per-epoch trace.
    #[pyo3(signature = (users, items, labels, validation, weights=None, learning_rate=1e-3, batch_size=2048, max_epochs=30, patience=3, seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn fit<'py>(
        &mut self,
        py: Python<'py>,
        users: Vec<u32>,
        items: Vec<u32>,
        labels: Vec<u8>,
        validation: (Vec<u32>, Vec<u32>, Vec<u8>),
        weights: Option<Vec<f64>>,
        learning_rate: f64,
        batch_size: usize,
        max_epochs: usize,
        patience: usize,
        seed: u64,
    ) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let ex = examples(&users, &items, &labels)?;
        let val = examples(&validation.0, &validation.1, &validation.2)?;
        let shape = self.inner.shape();
        let cfg = TrainConfig {
            learning_rate,
            batch_size,
            max_epochs,
            patience,
            seed,
            embedding_dim: shape.embedding_dim,
            hidden: shape.hidden.clone(),
            ..Default::default()
        };
        cfg.validate().map_err(py_err)?;
        let start = self.inner.clone();
        let out = py
            .allow_threads(|| match &weights {
                Some(w) => model::train(start, &ex, w, &val, &cfg),
                None => model::train_unweighted(start, &ex, &val, &cfg),
            })
            .map_err(py_err)?;
        self.inner = out.model;
        out.trace
            .iter()
            .map(|e| {
                let d = PyDict::new_bound(py);
                d.set_item("epoch", e.epoch)?;
                d.set_item("train_loss", e.train_loss)?;
                d.set_item("val_auc", e.val_auc)?;
                Ok(d)
            })
            .collect()
    }
}

/// Analytic versus central-difference gradients on a small model.
#[pyfunction]
#[pyo3(signature = (points=100, seed=0))]
fn gradcheck<'py>(py: Python<'py>, points: usize, seed: u64) -> PyResult<Bound<'py, PyDict>> {
    let r = model::gradcheck(&model::GradCheckConfig {
        points,
        seed,
        ..Default::default()
    })
    .map_err(py_err)?;
    let d = PyDict::new_bound(py);
    d.set_item("points", r.points)?;
    d.set_item("params_per_point", r.params_per_point)?;
    d.set_item("max_rel_error", r.max_rel_error)?;
    d.set_item("worst_block", r.worst_block)?;
    Ok(d)
}

/// Runs the grid described by a TOML config, writes `report.json` and the
/// CSV tables under its output dir, and returns one dict per (noise, alpha).
#[pyfunction]
#[pyo3(signature = (config, overrides=Vec::new()))]
fn run_experiment<'py>(py: Python<'py>, config: PathBuf, overrides: Vec<String>) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let report = py
        .allow_threads(|| -> Result<_, Error> {
            let cfg = ExperimentConfig::load(&config, &overrides)?;
            let out = cfg.output.dir.clone();
            let prepared = prepare(&cfg)?;
            let sums: BTreeMap<String, String> = data_checksums(&cfg, &prepared)?;
            let report = Experiment::new(cfg, prepared)?.run(sums);
            report.save(&out.join("report.json"))?;
            report.write_tables(&out)?;
            Ok(report)
        })
        .map_err(py_err)?;
    report
        .aggregates
        .iter()
        .map(|row| {
            let d = PyDict::new_bound(py);
            d.set_item("noise", row.noise)?;
            d.set_item("alpha", row.alpha)?;
            d.set_item("seeds_ok", row.seeds_ok)?;
            d.set_item("seeds_failed", row.seeds_failed)?;
            d.set_item("auc", row.auc.as_ref().map(|s| summary_dict(py, s)).transpose()?)?;
            d.set_item("logloss", row.logloss.as_ref().map(|s| summary_dict(py, s)).transpose()?)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
fn said(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(weight_of, m)?)?;
    m.add_function(wrap_pyfunction!(cosine, m)?)?;
    m.add_function(wrap_pyfunction!(encode_fallback, m)?)?;
    m.add_function(wrap_pyfunction!(auc, m)?)?;
    m.add_function(wrap_pyfunction!(logloss, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate, m)?)?;
    m.add_function(wrap_pyfunction!(load_movielens, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_class::<PyEmbeddingTable>()?;
    m.add_class::<PyCtrModel>()?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
