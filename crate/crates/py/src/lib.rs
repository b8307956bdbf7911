//! Python bindings: the document engine, the batch checker and a few kernel
//! and syntax entry points.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use proofdoc::cancel::CancelToken;
use proofdoc::engine::Engine as CoreEngine;
use proofdoc::env::Environment;
use proofdoc::kernel::tautology_check;
use proofdoc::syntax::{normalize_text, parse_formula as core_parse, split_spans as core_split};
use proofdoc::tactics::{initial_proof_state, render_steps, search as core_search};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// An engine driven synchronously from Python: feed protocol lines, let it
/// run, collect the server lines.
#[pyclass(unsendable, module = "proofdoc_py")]
struct Engine {
    inner: CoreEngine,
}

#[pymethods]
impl Engine {
    #[new]
    #[pyo3(signature = (workers = 1))]
    fn new(workers: usize) -> PyResult<Self> {
        let inner = CoreEngine::new(workers).map_err(value_error)?;
        Ok(Engine { inner })
    }

    /// Handles one NDJSON client line. Errors come back as protocol_error lines.
    fn send(&mut self, line: &str) {
        self.inner.handle_line(line);
    }

    /// Handles several lines as one unit before any task is dispatched.
    fn send_batch(&mut self, lines: Vec<String>) {
        self.inner.handle_batch(lines.iter().map(String::as_str));
    }

    fn run_until_quiescent(&mut self) {
        self.inner.run_until_quiescent();
    }

    /// Server messages produced since the last call, one JSON line each.
    fn drain(&mut self) -> Vec<String> {
        self.inner.take_outbox().iter().map(|m| m.to_line()).collect()
    }

    #[getter]
    fn version(&self) -> u64 {
        self.inner.doc().version
    }

    #[getter]
    fn workers(&self) -> usize {
        self.inner.workers()
    }

    /// Current text of the document.
    fn text(&self) -> String {
        self.inner.doc().text()
    }

    /// `(span id, state, messages)` for every span, in document order.
    fn statuses(&self) -> PyResult<Vec<(u64, String, Vec<String>)>> {
        let ids = self.inner.doc().ids();
        self.inner
            .statuses()
            .iter()
            .zip(ids)
            .map(|(s, id)| {
                let state = serde_json::to_value(s.state)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_owned))
                    .ok_or_else(|| PyRuntimeError::new_err("unserializable state"))?;
                Ok((id.0, state, s.messages.iter().map(|m| m.text.clone()).collect()))
            })
            .collect()
    }

    /// Task counters: env_runs, region_runs, query_runs, cancellations.
    fn stats(&self) -> (u64, u64, u64, u64) {
        let s = self.inner.stats();
        (s.env_runs as u64, s.region_runs as u64, s.query_runs as u64, s.cancellations as u64)
    }

    fn is_quiescent(&self) -> bool {
        self.inner.is_quiescent()
    }
}

/// Checks a document from scratch; returns the report as JSON.
#[pyfunction]
#[pyo3(signature = (text, workers = 1))]
fn check(text: &str, workers: usize) -> PyResult<String> {
    let report = proofdoc::report::check_text(text, workers).map_err(value_error)?;
    serde_json::to_string(&report).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Replays an NDJSON script and returns the transcript.
#[pyfunction]
#[pyo3(signature = (script, workers = 1))]
fn replay(script: &str, workers: usize) -> PyResult<String> {
    let mut out = Vec::new();
    proofdoc::service::replay(script, workers, &mut out).map_err(value_error)?;
    String::from_utf8(out).map_err(value_error)
}

/// Canonical printing of a formula; raises ValueError on bad syntax.
#[pyfunction]
fn parse_formula(text: &str) -> PyResult<String> {
    core_parse(text).map(|f| f.to_string()).map_err(value_error)
}

#[pyfunction]
fn is_tautology(formula: &str) -> PyResult<bool> {
    let f = core_parse(formula).map_err(value_error)?;
    tautology_check(&[], &f, 12).map_err(value_error)
}

/// Proof script found by iterative deepening, or None within `depth` steps.
#[pyfunction]
fn search(goal: &str, depth: usize) -> PyResult<Option<String>> {
    let f = core_parse(goal).map_err(value_error)?;
    let state = initial_proof_state(f);
    Ok(core_search(&state, depth, &Environment::new(), &CancelToken::new())
        .ok()
        .map(|steps| render_steps(&steps)))
}

#[pyfunction]
fn normalize(text: &str) -> String {
    normalize_text(text)
}

/// Raw text of every span, in order.
#[pyfunction]
fn split_spans(text: &str) -> Vec<String> {
    core_split(text).into_iter().map(|s| s.raw).collect()
}

#[pymodule]
fn proofdoc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Engine>()?;
    m.add_function(wrap_pyfunction!(check, m)?)?;
    m.add_function(wrap_pyfunction!(replay, m)?)?;
    m.add_function(wrap_pyfunction!(parse_formula, m)?)?;
    m.add_function(wrap_pyfunction!(is_tautology, m)?)?;
    m.add_function(wrap_pyfunction!(search, m)?)?;
    m.add_function(wrap_pyfunction!(normalize, m)?)?;
    m.add_function(wrap_pyfunction!(split_spans, m)?)?;
    Ok(())
}
