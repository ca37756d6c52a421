//! Python bindings for `lateral_core`.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use lateral_core::ctc::{self, BeamConfig};
use lateral_core::harness::{self, ExperimentConfig};
use lateral_core::head::{self, Alphabet, HeadKind};
use lateral_core::li::{self, LiParams, SurrogateMode};
use lateral_core::linalg::{Matrix, Vector};
use lateral_core::lm::CharNGramLm;
use lateral_core::rng::DetRng;
use lateral_core::{checkpoint, metrics};

type Rows = Vec<Vec<f64>>;

fn py_err(e: lateral_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<Matrix> {
    Matrix::from_rows(rows).map_err(py_err)
}

fn alphabet(symbols: Option<&str>) -> PyResult<Alphabet> {
    match symbols {
        Some(s) => Alphabet::from_chars(s).map_err(py_err),
        None => Ok(Alphabet::default()),
    }
}

fn mode(relaxed: bool) -> SurrogateMode {
    if relaxed {
        SurrogateMode::Relaxed
    } else {
        SurrogateMode::Hard
    }
}

/// Lateral inhibition layer `y = x ⊙ Θ(x·ZeroDiag(W) + b)`.
#[pyclass(name = "LiLayer", module = "lateral")]
struct PyLiLayer {
    inner: LiParams,
}

#[pymethods]
impl PyLiLayer {
    #[new]
    #[pyo3(signature = (w, b, k = li::DEFAULT_K))]
    fn new(w: Rows, b: Vec<f64>, k: f64) -> PyResult<Self> {
        let inner = LiParams::new(matrix(&w)?, Vector(b), k).map_err(py_err)?;
        Ok(Self { inner })
    }

    /// Randomly initialized layer of width `d`.
    #[staticmethod]
    #[pyo3(signature = (d, seed, k = li::DEFAULT_K))]
    fn init(d: usize, seed: u64, k: f64) -> PyResult<Self> {
        let inner = LiParams::init(d, k, &mut DetRng::new(seed)).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn w(&self) -> Rows {
        self.inner.w.to_rows()
    }

    #[getter]
    fn b(&self) -> Vec<f64> {
        self.inner.b.0.clone()
    }

    #[getter]
    fn k(&self) -> f64 {
        self.inner.k
    }

    /// Returns `(y, gate)`.
    fn forward(&self, x: Vec<f64>) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let (y, cache) = li::li_forward(&x, &self.inner).map_err(py_err)?;
        Ok((y.0, cache.g.0))
    }

    fn relaxed_forward(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(li::li_relaxed_forward(&x, &self.inner).map_err(py_err)?.0)
    }

    /// Returns `(dw, db, dx)` for upstream gradient `dy` at input `x`.
    #[pyo3(signature = (x, dy, relaxed = false))]
    fn backward(&self, x: Vec<f64>, dy: Vec<f64>, relaxed: bool) -> PyResult<(Rows, Vec<f64>, Vec<f64>)> {
        let (_, cache) = li::li_forward(&x, &self.inner).map_err(py_err)?;
        let g = li::li_backward(&cache, &self.inner, &dy, mode(relaxed)).map_err(py_err)?;
        Ok((g.dw.to_rows(), g.db.0, g.dx.0))
    }

    fn __repr__(&self) -> String {
        format!("LiLayer(d={}, k={})", self.inner.dim(), self.inner.k)
    }
}

/// FF or LI recognition head producing per-frame log-probabilities.
#[pyclass(name = "AcousticHead", module = "lateral")]
struct PyHead {
    inner: head::AcousticHead,
}

#[pymethods]
impl PyHead {
    /// `kind` is `"ff"` or `"li"`; `v` counts output classes including blank.
    #[new]
    #[pyo3(signature = (kind, d, v = 28, seed = 0, k = li::DEFAULT_K))]
    fn new(kind: &str, d: usize, v: usize, seed: u64, k: f64) -> PyResult<Self> {
        let kind = HeadKind::parse(kind).map_err(py_err)?;
        let mut dense = DetRng::derive(seed, "dense-init", &[]);
        let mut lat = DetRng::derive(seed, "li-init", &[]);
        let inner = head::AcousticHead::init(kind, d, v, k, &mut dense, &mut lat).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let (inner, _) = checkpoint::load(std::path::Path::new(path)).map_err(py_err)?;
        Ok(Self { inner })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        checkpoint::save(std::path::Path::new(path), &self.inner, None).map_err(py_err)
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind.as_str()
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    #[getter]
    fn output_dim(&self) -> usize {
        self.inner.output_dim()
    }

    /// T×V log-probabilities for T×d frames.
    fn forward(&self, frames: Rows) -> PyResult<Rows> {
        let (lp, _) = head::head_forward(&matrix(&frames)?, &self.inner).map_err(py_err)?;
        Ok(lp.to_rows())
    }

    /// CTC loss of `target` (a string over `symbols`) under this head.
    #[pyo3(signature = (frames, target, symbols = None))]
    fn ctc_loss(&self, frames: Rows, target: &str, symbols: Option<&str>) -> PyResult<f64> {
        let labels = alphabet(symbols)?.encode(target).map_err(py_err)?;
        let (lp, _) = head::head_forward(&matrix(&frames)?, &self.inner).map_err(py_err)?;
        Ok(ctc::ctc_loss(&lp, &labels).map_err(py_err)?.loss)
    }

    fn __repr__(&self) -> String {
        format!(
            "AcousticHead(kind={:?}, d={}, v={})",
            self.inner.kind.as_str(),
            self.inner.input_dim(),
            self.inner.output_dim()
        )
    }
}

/// Add-one smoothed character n-gram model.
#[pyclass(name = "CharLm", module = "lateral")]
struct PyCharLm {
    inner: CharNGramLm,
}

#[pymethods]
impl PyCharLm {
    #[new]
    #[pyo3(signature = (corpus, order = lateral_core::lm::DEFAULT_ORDER, symbols = None))]
    fn new(corpus: Vec<String>, order: usize, symbols: Option<&str>) -> PyResult<Self> {
        let extra: Vec<char> = symbols.map(|s| s.chars().collect()).unwrap_or_default();
        let inner = CharNGramLm::train_with_vocab(&corpus, order, extra).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn loads(text: &str) -> PyResult<Self> {
        Ok(Self { inner: CharNGramLm::load(text).map_err(py_err)? })
    }

    fn dumps(&self) -> String {
        self.inner.dump()
    }

    /// Natural-log probability of `s` including the end-of-string token.
    fn score(&self, s: &str) -> PyResult<f64> {
        self.inner.score(s).map_err(py_err)
    }

    #[getter]
    fn order(&self) -> usize {
        self.inner.order()
    }

    #[getter]
    fn vocab_size(&self) -> usize {
        self.inner.vocab_size()
    }
}

#[pyfunction]
fn heaviside(z: Vec<f64>) -> Vec<f64> {
    li::heaviside(&z).0
}

#[pyfunction]
#[pyo3(signature = (z, k = li::DEFAULT_K))]
fn surrogate_sigmoid(z: f64, k: f64) -> f64 {
    li::surrogate_sigmoid(z, k)
}

#[pyfunction]
fn log_softmax(logits: Vec<f64>) -> Vec<f64> {
    head::log_softmax(&logits).0
}

/// `(loss, grad)` for T×V log-probabilities and label ids (blank is 0).
#[pyfunction]
fn ctc_loss(log_probs: Rows, target: Vec<usize>) -> PyResult<(f64, Rows)> {
    let r = ctc::ctc_loss(&matrix(&log_probs)?, &target).map_err(py_err)?;
    Ok((r.loss, r.grad.to_rows()))
}

#[pyfunction]
fn ctc_brute_force(log_probs: Rows, target: Vec<usize>) -> PyResult<f64> {
    ctc::ctc_brute_force(&matrix(&log_probs)?, &target).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (log_probs, symbols = None))]
fn greedy_decode(log_probs: Rows, symbols: Option<&str>) -> PyResult<String> {
    Ok(ctc::greedy_decode(&matrix(&log_probs)?, &alphabet(symbols)?))
}

#[pyfunction]
#[pyo3(signature = (log_probs, lm, beam_width = 16, alpha = 0.5, beta = 0.0, symbols = None))]
fn beam_decode(
    log_probs: Rows,
    lm: &PyCharLm,
    beam_width: usize,
    alpha: f64,
    beta: f64,
    symbols: Option<&str>,
) -> PyResult<String> {
    let cfg = BeamConfig { beam_width, alpha, beta };
    ctc::beam_decode(&matrix(&log_probs)?, &alphabet(symbols)?, &lm.inner, &cfg).map_err(py_err)
}

/// Character-level Levenshtein distance.
#[pyfunction]
fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    metrics::edit_distance(&a, &b)
}

#[pyfunction]
fn wer(reference: &str, hypothesis: &str) -> PyResult<f64> {
    metrics::wer(reference, hypothesis).map_err(py_err)
}

#[pyfunction]
fn cer(reference: &str, hypothesis: &str) -> PyResult<f64> {
    metrics::cer(reference, hypothesis).map_err(py_err)
}

#[pyfunction]
fn relative_improvement(base: f64, li: f64) -> PyResult<f64> {
    metrics::relative_improvement(base, li).map_err(py_err)
}

/// `[(corpus, metric, average_improvement)]` from the embedded FF/LI table.
#[pyfunction]
fn published_aggregates() -> PyResult<Vec<(String, String, f64)>> {
    let report = harness::published_aggregates(None).map_err(py_err)?;
    Ok(report
        .to_tsv()
        .lines()
        .skip(1)
        .filter_map(|l| {
            let mut f = l.split('\t');
            Some((f.next()?.to_string(), f.next()?.to_string(), f.next()?.parse().ok()?))
        })
        .collect())
}

/// Runs the harness for a `key = value` config and returns the report JSON.
#[pyfunction]
#[pyo3(signature = (config = "", seed = None))]
fn run_experiment(py: Python<'_>, config: &str, seed: Option<u64>) -> PyResult<String> {
    let mut cfg = ExperimentConfig::parse(config).map_err(py_err)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let report = py.detach(|| harness::run_experiment(&cfg).map(|(r, _)| r)).map_err(py_err)?;
    report.to_json().map_err(py_err)
}

#[pymodule]
fn lateral(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLiLayer>()?;
    m.add_class::<PyHead>()?;
    m.add_class::<PyCharLm>()?;
    m.add_function(wrap_pyfunction!(heaviside, m)?)?;
    m.add_function(wrap_pyfunction!(surrogate_sigmoid, m)?)?;
    m.add_function(wrap_pyfunction!(log_softmax, m)?)?;
    m.add_function(wrap_pyfunction!(ctc_loss, m)?)?;
    m.add_function(wrap_pyfunction!(ctc_brute_force, m)?)?;
    m.add_function(wrap_pyfunction!(greedy_decode, m)?)?;
    m.add_function(wrap_pyfunction!(beam_decode, m)?)?;
    m.add_function(wrap_pyfunction!(edit_distance, m)?)?;
    m.add_function(wrap_pyfunction!(wer, m)?)?;
    m.add_function(wrap_pyfunction!(cer, m)?)?;
    m.add_function(wrap_pyfunction!(relative_improvement, m)?)?;
    m.add_function(wrap_pyfunction!(published_aggregates, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
