use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use secnet::clocks::{estimate_skew as estimate, TimingExchange};
use secnet::engine::{self, EngineError, Scenario, ScenarioConfig};
use secnet::num::{self, Q};
use secnet::scheduler::oracle::minmax_oracle;
use secnet::scheduler::params::{select_parameters as select, ParamContext};

fn err(e: EngineError) -> PyErr {
    match e {
        EngineError::ConfigInvalid(_) => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn q(name: &str, s: &str) -> PyResult<Q> {
    num::parse(s).ok_or_else(|| PyValueError::new_err(format!("{name}: not a number: {s}")))
}

/// A validated scenario ready to run.
#[pyclass(module = "secnet_py", name = "Scenario")]
struct PyScenario {
    inner: Scenario,
}

#[pymethods]
impl PyScenario {
    #[staticmethod]
    #[pyo3(signature = (text, seed=None))]
    fn from_toml(text: &str, seed: Option<u64>) -> PyResult<Self> {
        let cfg = ScenarioConfig::from_toml(text).map_err(err)?;
        Ok(PyScenario { inner: Scenario::from_config(&cfg, seed).map_err(err)? })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    #[getter]
    fn good(&self) -> Vec<u32> {
        self.inner.good.iter().map(|v| v.0).collect()
    }

    #[getter]
    fn bad(&self) -> Vec<u32> {
        self.inner.bad.iter().map(|v| v.0).collect()
    }

    #[getter]
    fn n_iter(&self) -> u64 {
        self.inner.params.n_iter
    }

    fn run(&self) -> PyResult<RunResult> {
        let out = engine::run(&self.inner).map_err(err)?;
        Ok(RunResult { utility: out.metrics.utility.clone(), metrics: out.metrics.to_json(), trace: out.trace.to_jsonl() })
    }

    /// `(value, [(disabled descriptors, max utility)])` with values as "p/q" strings.
    fn oracle(&self) -> PyResult<(String, Vec<(Vec<String>, String)>)> {
        let sc = &self.inner;
        let res = minmax_oracle(&sc.model, &sc.good, &sc.utility, sc.oracle_budget).map_err(|e| err(e.into()))?;
        let rows = res
            .per_set
            .iter()
            .map(|(set, v)| (set.iter().map(|c| sc.model.entry(*c).ctv.descriptor()).collect(), num::fmt(v)))
            .collect();
        Ok((num::fmt(&res.value), rows))
    }
}

#[pyclass(module = "secnet_py", get_all)]
struct RunResult {
    /// Exact utility as "p/q".
    utility: String,
    /// Metrics JSON document.
    metrics: String,
    /// Trace as JSON lines.
    trace: String,
}

/// Skew and offset `(a_hat, b_hat)` from two timing packets.
#[pyfunction]
fn estimate_skew(s1: &str, s2: &str, r1: &str, r2: &str) -> PyResult<(String, String)> {
    let x = TimingExchange { s1: q("s1", s1)?, s2: q("s2", s2)?, r1: q("r1", r1)?, r2: q("r2", r2)? };
    let e = estimate(&x).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok((num::fmt(&e.a_hat), num::fmt(&e.b_hat)))
}

/// Protocol parameters as a dict of strings (n_iter as int).
#[pyfunction]
fn select_parameters(py: Python<'_>, n: usize, a_max: &str, u0: &str, k_r: u64, eps: &str) -> PyResult<Py<PyAny>> {
    let p = select(n, &q("a_max", a_max)?, &q("u0", u0)?, k_r, &q("eps", eps)?, &ParamContext::default())
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    let d = pyo3::types::PyDict::new(py);
    d.set_item("n_iter", p.n_iter)?;
    for (k, v) in [("t_life", &p.t_life), ("data_time", &p.data_time), ("dead_time", &p.dead_time), ("eps_a", &p.eps_a), ("eps_b", &p.eps_b)] {
        d.set_item(k, num::fmt(v))?;
    }
    Ok(d.into_any().unbind())
}

/// TOML text of a random small instance with the last node bad.
#[pyfunction]
#[pyo3(signature = (seed, n, strategy="always-conform"))]
fn random_instance(seed: u64, n: usize, strategy: &str) -> PyResult<String> {
    if !(3..=4).contains(&n) {
        return Err(PyValueError::new_err("n must be 3 or 4"));
    }
    let spec = serde_json::from_value(serde_json::json!({ "strategy": strategy })).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(engine::generate::random_instance(seed, n, spec).to_toml())
}

#[pymodule]
fn secnet_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenario>()?;
    m.add_class::<RunResult>()?;
    m.add_function(wrap_pyfunction!(estimate_skew, m)?)?;
    m.add_function(wrap_pyfunction!(select_parameters, m)?)?;
    m.add_function(wrap_pyfunction!(random_instance, m)?)?;
    Ok(())
}
