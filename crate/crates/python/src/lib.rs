//! Python bindings: corpus ingestion, training and completion.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use qac_core::corpus;
use qac_core::decode::RetraceLimit;
use qac_core::pipeline::{self, ModelBundle, ModelChoice, RunConfig, Suggester};
use qac_core::QacError;

fn to_py(e: QacError) -> PyErr {
    match e {
        QacError::Config(_) | QacError::TooLong { .. } => PyValueError::new_err(e.to_string()),
        QacError::Io { .. } | QacError::Parse { .. } => PyIOError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn json_to_py<'py>(py: Python<'py>, value: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?
        .call_method1("loads", (value.to_string(),))
}

fn config(path: Option<PathBuf>, seed: Option<u64>) -> PyResult<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(&p).map_err(to_py)?,
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn parse_retrace(value: &Bound<'_, PyAny>) -> PyResult<RetraceLimit> {
    if let Ok(n) = value.extract::<usize>() {
        return Ok(RetraceLimit::Bounded(n));
    }
    let s: String = value.extract()?;
    s.parse().map_err(PyValueError::new_err)
}

/// Applies the corpus normalization to a typed prefix.
#[pyfunction]
fn normalize_prefix(prefix: &str) -> String {
    corpus::normalize_prefix(prefix)
}

/// Ingests a raw log into `out_dir`; returns the split counts.
#[pyfunction]
#[pyo3(signature = (input, out_dir, config_path=None, seed=None))]
fn ingest<'py>(
    py: Python<'py>,
    input: PathBuf,
    out_dir: PathBuf,
    config_path: Option<PathBuf>,
    seed: Option<u64>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = config(config_path, seed)?;
    let manifest = py
        .detach(|| pipeline::cmd_ingest(&input, &out_dir, &cfg))
        .map_err(to_py)?;
    json_to_py(
        py,
        &serde_json::to_value(&manifest.counts).map_err(|e| to_py(e.into()))?,
    )
}

/// Trains all models from an ingested corpus; returns the run record.
#[pyfunction]
#[pyo3(signature = (corpus_dir, models_dir, config_path=None, seed=None, kind=None, vocab_size=None, order=None))]
#[allow(clippy::too_many_arguments)]
fn train<'py>(
    py: Python<'py>,
    corpus_dir: PathBuf,
    models_dir: PathBuf,
    config_path: Option<PathBuf>,
    seed: Option<u64>,
    kind: Option<&str>,
    vocab_size: Option<usize>,
    order: Option<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    let mut cfg = config(config_path, seed)?;
    if let Some(k) = kind {
        cfg.segmentation.kind = k.parse().map_err(PyValueError::new_err)?;
    }
    if let Some(v) = vocab_size {
        cfg.segmentation.vocab_size = v;
    }
    if let Some(o) = order {
        cfg.lm.order = o;
    }
    let summary = py
        .detach(|| pipeline::cmd_train(&corpus_dir, &models_dir, &cfg))
        .map_err(to_py)?;
    json_to_py(
        py,
        &serde_json::to_value(&summary.run).map_err(|e| to_py(e.into()))?,
    )
}

/// Loaded models plus a decoding configuration.
#[pyclass(frozen)]
struct Model {
    suggester: Suggester,
}

#[pymethods]
impl Model {
    #[new]
    #[pyo3(signature = (models_dir, beam=30, n=10, retrace=None, marginalize=false))]
    fn new(
        py: Python<'_>,
        models_dir: PathBuf,
        beam: usize,
        n: usize,
        retrace: Option<&Bound<'_, PyAny>>,
        marginalize: bool,
    ) -> PyResult<Self> {
        let mut decode = RunConfig::default().decode;
        decode.beam_width = beam;
        decode.num_candidates = n;
        decode.marginalize = marginalize;
        if let Some(r) = retrace {
            decode.retrace = parse_retrace(r)?;
        }
        let suggester = py
            .detach(|| ModelBundle::load(&models_dir).and_then(|b| Suggester::new(b, decode)))
            .map_err(to_py)?;
        Ok(Model { suggester })
    }

    /// Ranked completions as dicts with `rank`, `query`, `score` and
    /// `n_token_seqs`.
    #[pyo3(signature = (prefix, n=None, model="lm"))]
    fn complete<'py>(
        &self,
        py: Python<'py>,
        prefix: &str,
        n: Option<usize>,
        model: &str,
    ) -> PyResult<Bound<'py, PyList>> {
        let choice: ModelChoice = model.parse().map_err(PyValueError::new_err)?;
        let s = py
            .detach(|| self.suggester.suggest(prefix, n, choice))
            .map_err(to_py)?;
        let out = PyList::empty(py);
        for c in s.candidates {
            let d = PyDict::new(py);
            d.set_item("rank", c.rank)?;
            d.set_item("query", c.query)?;
            d.set_item("score", c.score)?;
            d.set_item("n_token_seqs", c.n_token_seqs)?;
            out.append(d)?;
        }
        Ok(out)
    }

    fn metadata<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        json_to_py(py, &self.suggester.bundle.metadata())
    }
}

/// Registers the module contents.
pub fn register(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(normalize_prefix, m)?)?;
    m.add_function(wrap_pyfunction!(ingest, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_class::<Model>()?;
    Ok(())
}

#[pymodule]
fn subword_qac(m: &Bound<'_, PyModule>) -> PyResult<()> {
    register(m)
}
