//! Python bindings: training, embedding, retrieval and evaluation on
//! row-major float matrices passed as nested lists or 2-D arrays.

use avembed_core::attention::{select_top_k as core_select_top_k, AttentionParams, QueryMode};
use avembed_core::cca::Side;
use avembed_core::data::{synth_dataset, SynthConfig};
use avembed_core::eval::{self, Corpus, CvOptions, Embedder, RelevanceJudgment};
use avembed_core::pipeline::{audio_features, train_method, visual_features, Method, MethodConfig, TrainedModel};
use avembed_core::retrieval::{build_index, EmbeddingIndex, RankedList};
use avembed_core::Error;
use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyArithmeticError, PyMemoryError, PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn err(e: Error) -> PyErr {
    let msg = e.to_string();
    match e {
        Error::Argument(_) | Error::Validation(_) | Error::UndefinedSimilarity => PyValueError::new_err(msg),
        Error::Io { .. } => PyOSError::new_err(msg),
        Error::Resource(_) => PyMemoryError::new_err(msg),
        e if e.is_numerical() => PyArithmeticError::new_err(msg),
        _ => PyRuntimeError::new_err(msg),
    }
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err("rows have different lengths"));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn nested(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn side(name: &str) -> PyResult<Side> {
    match name {
        "audio" => Ok(Side::Audio),
        "visual" => Ok(Side::Visual),
        _ => Err(PyValueError::new_err(format!("side must be \"audio\" or \"visual\", got {name:?}"))),
    }
}

fn method_config(method: &str, config: Option<&str>) -> PyResult<MethodConfig> {
    let mut cfg: MethodConfig = match config {
        Some(text) => serde_json::from_str(text).map_err(|e| PyValueError::new_err(format!("bad config: {e}")))?,
        None => MethodConfig::default(),
    };
    cfg.method = method.parse::<Method>().map_err(err)?;
    Ok(cfg)
}

fn query_mode(c: Option<usize>, k: Option<usize>) -> PyResult<QueryMode> {
    let mode = match (c, k) {
        (None, None) => QueryMode::Mean,
        (Some(c), Some(k)) => QueryMode::TopK { c, k },
        _ => return Err(PyValueError::new_err("give both c and k, or neither")),
    };
    mode.validate().map_err(err)?;
    Ok(mode)
}

/// A fitted embedding model of any method.
#[pyclass(name = "Model", module = "avembed")]
struct PyModel {
    inner: TrainedModel,
}

#[pymethods]
impl PyModel {
    /// Maps feature rows of one view ("audio" or "visual") into the shared space.
    fn embed(&self, features: Vec<Vec<f64>>, side_name: &str) -> PyResult<Vec<Vec<f64>>> {
        let out = self.inner.embed(&matrix(&features)?, side(side_name)?).map_err(err)?;
        Ok(nested(&out))
    }

    #[getter]
    fn correlations(&self) -> Vec<f64> {
        self.inner.correlations().iter().copied().collect()
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind()
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path, &serde_json::Value::Null).map_err(err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let (inner, _) = TrainedModel::load(path).map_err(err)?;
        Ok(Self { inner })
    }

    fn __repr__(&self) -> String {
        format!("Model(kind={:?}, r={})", self.inner.kind(), self.inner.correlations().len())
    }
}

/// Cosine-similarity index over visual embeddings.
#[pyclass(name = "Index", module = "avembed")]
struct PyIndex {
    inner: EmbeddingIndex,
}

#[pymethods]
impl PyIndex {
    #[new]
    fn new(embeddings: Vec<Vec<f64>>, labels: Vec<usize>, ids: Vec<String>) -> PyResult<Self> {
        let rows: Vec<DVector<f64>> = embeddings.into_iter().map(DVector::from_vec).collect();
        Ok(Self {
            inner: build_index(&rows, &labels, &ids).map_err(err)?,
        })
    }

    /// Top `n` `(video_id, similarity)` pairs, most similar first.
    #[pyo3(signature = (query_id, query, n=10))]
    fn rank(&self, query_id: &str, query: Vec<f64>, n: usize) -> PyResult<Vec<(String, f64)>> {
        Ok(self.inner.rank(query_id, &query, n).map_err(err)?.items)
    }

    fn label_of(&self, video_id: &str) -> Option<usize> {
        self.inner.label_of(video_id)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: EmbeddingIndex::load(path).map_err(err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Fits `method` (cca, kcca, ccca, dcca or sdcca) on row-aligned views.
/// `config` is a JSON object of method settings.
#[pyfunction]
#[pyo3(signature = (method, audio, visual, labels=None, config=None, seed=0))]
fn train(
    method: &str,
    audio: Vec<Vec<f64>>,
    visual: Vec<Vec<f64>>,
    labels: Option<Vec<usize>>,
    config: Option<&str>,
    seed: u64,
) -> PyResult<PyModel> {
    let cfg = method_config(method, config)?;
    let n = audio.len();
    let labels = match labels {
        Some(l) => l,
        None if cfg.method.is_supervised() => return Err(PyValueError::new_err(format!("{method} needs labels"))),
        None => vec![0; n],
    };
    let ids = (0..n).map(|i| i.to_string()).collect();
    let corpus = Corpus::new(ids, matrix(&audio)?, matrix(&visual)?, labels).map_err(err)?;
    Ok(PyModel {
        inner: train_method(&cfg, &corpus, seed).map_err(err)?,
    })
}

/// Seeded k-fold evaluation; returns the report as a dict-ready JSON string.
#[pyfunction]
#[pyo3(signature = (method, ids, audio, visual, labels, config=None, folds=5, seed=0, stride=1, ap_depth=None))]
#[allow(clippy::too_many_arguments)]
fn cross_validate(
    method: &str,
    ids: Vec<String>,
    audio: Vec<Vec<f64>>,
    visual: Vec<Vec<f64>>,
    labels: Vec<usize>,
    config: Option<&str>,
    folds: usize,
    seed: u64,
    stride: usize,
    ap_depth: Option<usize>,
) -> PyResult<String> {
    let cfg = method_config(method, config)?;
    let corpus = Corpus::new(ids, matrix(&audio)?, matrix(&visual)?, labels).map_err(err)?;
    let opts = CvOptions {
        folds,
        seed,
        stride,
        ap_depth,
    };
    eval::cross_validate(&corpus, &cfg, &opts).and_then(|r| r.to_json()).map_err(err)
}

/// Generates a synthetic corpus and returns `(ids, audio, visual, labels)`
/// as video-level features. `c`/`k` pick a top-k audio query; both absent
/// averages all frames.
#[pyfunction]
#[pyo3(signature = (config=None, seed=0, c=None, k=None))]
#[allow(clippy::type_complexity)]
fn synth(
    config: Option<&str>,
    seed: u64,
    c: Option<usize>,
    k: Option<usize>,
) -> PyResult<(Vec<String>, Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<usize>)> {
    let mut cfg: SynthConfig = match config {
        Some(text) => serde_json::from_str(text).map_err(|e| PyValueError::new_err(format!("bad config: {e}")))?,
        None => SynthConfig::default(),
    };
    cfg.seed = seed;
    let mode = query_mode(c, k)?;
    let (ds, labels) = synth_dataset(&cfg).map_err(err)?;
    let attention = AttentionParams::random(cfg.audio_dim, 16, 16, seed);
    let audio = audio_features(&ds, mode, &attention).map_err(err)?;
    let visual = visual_features(&ds).map_err(err)?;
    let ids = ds.manifest().ids().into_iter().map(String::from).collect();
    Ok((ids, nested(&audio), nested(&visual), labels))
}

/// Average precision of a ranked id list against a set of relevant ids.
#[pyfunction]
#[pyo3(signature = (ranked, relevant, depth=None))]
fn average_precision(ranked: Vec<String>, relevant: Vec<String>, depth: Option<usize>) -> PyResult<f64> {
    let list = RankedList {
        query_id: String::new(),
        items: ranked.into_iter().map(|id| (id, 0.0)).collect(),
    };
    let judgment = RelevanceJudgment::new(String::new(), relevant);
    eval::average_precision(&list, &judgment, depth).map_err(err)
}

/// Indices of the `k` highest-mass macro-chunks when `theta` is grouped
/// into `c` macro-chunks.
#[pyfunction]
fn select_top_k(theta: Vec<f64>, c: usize, k: usize) -> PyResult<Vec<usize>> {
    let sel = core_select_top_k(&DVector::from_vec(theta), c, k).map_err(err)?;
    Ok(sel.selected_indices)
}

#[pymodule]
fn avembed(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_class::<PyIndex>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(cross_validate, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(average_precision, m)?)?;
    m.add_function(wrap_pyfunction!(select_top_k, m)?)?;
    Ok(())
}
