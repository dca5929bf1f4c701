//! Python bindings: generate or load a consortium, evaluate coalitions,
//! estimate Shapley values and allocate payouts.

use std::path::PathBuf;

use pyo3::exceptions::{PyOverflowError, PyValueError};
use pyo3::prelude::*;

use consortium_core::domain::{exclude_insiders, validate_dataset, MemberDataset};
use consortium_core::game::GameHandle;
use consortium_core::io::{self, ConfigFile, CONFIG_FILE};
use consortium_core::payout::{allocate, PayoutPolicy, PolicyKind};
use consortium_core::shapley::{self, Method, ValuationEstimate};
use consortium_core::synthgen::{generate as synth, GenSpec};
use consortium_core::{Coalition, Error, PipelineConfig, PipelineGame};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Capacity { .. } => PyOverflowError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

#[pyclass(name = "PipelineConfig", from_py_object)]
#[derive(Clone)]
struct PyPipelineConfig {
    inner: PipelineConfig,
}

#[pymethods]
impl PyPipelineConfig {
    #[new]
    #[pyo3(signature = (tau = 2.0, sigma_min = 0.05, n_min = 3, clip = 1.0, eps = 1.0, capital = 1.0))]
    fn new(tau: f64, sigma_min: f64, n_min: u32, clip: f64, eps: f64, capital: f64) -> PyResult<Self> {
        let inner = PipelineConfig {
            tau,
            sigma_min,
            n_min,
            clip,
            eps,
            capital,
        };
        inner.validate().map_err(py_err)?;
        Ok(PyPipelineConfig { inner })
    }

    #[getter]
    fn tau(&self) -> f64 {
        self.inner.tau
    }

    #[getter]
    fn n_min(&self) -> u32 {
        self.inner.n_min
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

/// Members, their grant-filtered records and the price series.
#[pyclass(name = "Dataset", from_py_object)]
#[derive(Clone)]
struct PyDataset {
    inner: MemberDataset,
    carriers: Vec<String>,
}

#[pymethods]
impl PyDataset {
    /// Read a data directory written by `generate(...).write` or the CLI.
    #[staticmethod]
    #[pyo3(signature = (data_dir, config = None))]
    fn load(data_dir: PathBuf, config: Option<PathBuf>) -> PyResult<Self> {
        let cfg = ConfigFile::read(&config.unwrap_or_else(|| data_dir.join(CONFIG_FILE))).map_err(py_err)?;
        let inner = io::load_dataset(&data_dir, &cfg).map_err(py_err)?;
        let carriers = io::read_carriers(&data_dir.join(io::CARRIERS_FILE)).unwrap_or_default();
        Ok(PyDataset { inner, carriers })
    }

    #[getter]
    fn member_ids(&self) -> Vec<String> {
        self.inner.member_ids()
    }

    /// Planted carriers, when the dataset is synthetic.
    #[getter]
    fn carriers(&self) -> Vec<String> {
        self.carriers.clone()
    }

    fn exclude_insiders(&self) -> Self {
        PyDataset {
            inner: exclude_insiders(&self.inner),
            carriers: self.carriers.clone(),
        }
    }

    /// `(code, detail)` for every violation; empty when the dataset is valid.
    fn validate(&self) -> Vec<(String, String)> {
        validate_dataset(&self.inner)
            .into_iter()
            .map(|v| (v.code.as_str().to_string(), v.detail))
            .collect()
    }

    #[pyo3(signature = (out_dir, config = None))]
    fn write(&self, out_dir: PathBuf, config: Option<PyPipelineConfig>) -> PyResult<Vec<String>> {
        let generated = consortium_core::synthgen::Generated {
            dataset: self.inner.clone(),
            carriers: self.carriers.clone(),
        };
        let cfg = config.map(|c| c.inner).unwrap_or_default();
        let paths = io::write_generated(&out_dir, &generated, &cfg).map_err(py_err)?;
        Ok(paths.iter().map(|p| p.display().to_string()).collect())
    }

    fn __len__(&self) -> usize {
        self.inner.members.len()
    }
}

#[pyfunction]
#[pyo3(signature = (n_members = 8, n_periods = 4, n_carriers = 2, carrier_strength = 0.5, noise_scale = 0.1, seed = 0, segments = None))]
fn generate(
    n_members: usize,
    n_periods: u32,
    n_carriers: usize,
    carrier_strength: f64,
    noise_scale: f64,
    seed: u64,
    segments: Option<Vec<(String, f64)>>,
) -> PyResult<PyDataset> {
    let spec = GenSpec {
        n_members,
        n_periods,
        n_carriers,
        carrier_strength,
        noise_scale,
        segments: segments.unwrap_or_else(|| GenSpec::default().segments),
        seed,
    };
    let g = synth(&spec).map_err(py_err)?;
    Ok(PyDataset {
        inner: g.dataset,
        carriers: g.carriers,
    })
}

#[pyclass(name = "Estimate", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyEstimate {
    #[pyo3(get)]
    member_id: String,
    #[pyo3(get)]
    method: String,
    #[pyo3(get)]
    value: f64,
    #[pyo3(get)]
    std_error: f64,
    #[pyo3(get)]
    samples: u64,
    #[pyo3(get)]
    evals: u64,
}

#[pymethods]
impl PyEstimate {
    fn __repr__(&self) -> String {
        format!(
            "Estimate(member_id={:?}, method={:?}, value={}, std_error={})",
            self.member_id, self.method, self.value, self.std_error
        )
    }
}

impl From<ValuationEstimate> for PyEstimate {
    fn from(e: ValuationEstimate) -> Self {
        PyEstimate {
            member_id: e.member_id,
            method: e.method.to_string(),
            value: e.value,
            std_error: e.std_error,
            samples: e.samples,
            evals: e.evals,
        }
    }
}

fn estimates(v: Vec<ValuationEstimate>) -> Vec<PyEstimate> {
    v.into_iter().map(PyEstimate::from).collect()
}

/// The coalition game over a dataset, with a shared evaluation cache.
#[pyclass(name = "Game", frozen)]
struct PyGame {
    handle: GameHandle<PipelineGame>,
}

#[pymethods]
impl PyGame {
    #[new]
    #[pyo3(signature = (dataset, config = None))]
    fn new(dataset: &PyDataset, config: Option<PyPipelineConfig>) -> PyResult<Self> {
        let cfg = config.map(|c| c.inner).unwrap_or_default();
        let game = PipelineGame::new(&dataset.inner, cfg).map_err(py_err)?;
        Ok(PyGame {
            handle: GameHandle::new(game),
        })
    }

    #[getter]
    fn member_ids(&self) -> Vec<String> {
        self.handle.game().prepared().ids().to_vec()
    }

    /// `(action, z, score, value)` for the coalition of the named members.
    fn evaluate(&self, members: Vec<String>) -> PyResult<(String, f64, f64, f64)> {
        let p = self.handle.game().prepared();
        let mut idx = Vec::with_capacity(members.len());
        for m in &members {
            idx.push(
                p.index_of(m)
                    .ok_or_else(|| PyValueError::new_err(format!("unknown member `{m}`")))?,
            );
        }
        let v = self
            .handle
            .game()
            .coalition_value(&Coalition::from_indices(p.len(), idx));
        Ok((v.decision.action.as_str().to_string(), v.decision.z, v.decision.score, v.value))
    }

    fn grand_value(&self) -> f64 {
        self.handle.grand_value()
    }

    /// Characteristic-function evaluations performed so far.
    fn eval_count(&self) -> u64 {
        self.handle.eval_count()
    }

    fn exact(&self, py: Python<'_>) -> PyResult<Vec<PyEstimate>> {
        py.detach(|| shapley::exact_shapley(&self.handle))
            .map(estimates)
            .map_err(py_err)
    }

    fn permutation(&self, py: Python<'_>, n_permutations: usize, seed: u64) -> Vec<PyEstimate> {
        estimates(py.detach(|| shapley::permutation_shapley(&self.handle, n_permutations, seed)))
    }

    /// Estimates and the number of chains that fell back to a full scan.
    #[pyo3(signature = (n_chains, seed, use_bsearch = false))]
    fn stratified(&self, py: Python<'_>, n_chains: usize, seed: u64, use_bsearch: bool) -> (Vec<PyEstimate>, u64) {
        let run = py.detach(|| shapley::stratified_shapley(&self.handle, n_chains, seed, use_bsearch));
        (estimates(run.estimates), run.fallbacks)
    }

    /// Estimates, cluster of each member, and the unallocated residual.
    #[pyo3(signature = (k, sample_per_cluster, n_chains, seed, use_bsearch = false))]
    fn clustered(
        &self,
        py: Python<'_>,
        k: usize,
        sample_per_cluster: usize,
        n_chains: usize,
        seed: u64,
        use_bsearch: bool,
    ) -> PyResult<(Vec<PyEstimate>, Vec<usize>, f64)> {
        let run = py
            .detach(|| shapley::clustered_shapley(&self.handle, k, sample_per_cluster, n_chains, seed, use_bsearch))
            .map_err(py_err)?;
        Ok((estimates(run.estimates), run.assignment, run.residual))
    }
}

/// `(member_id, payout)` pairs under the named policy.
#[pyfunction]
#[pyo3(signature = (estimates, dataset, policy = "direct", pot = 0.0, alpha = 0.5))]
fn payouts(
    estimates: Vec<Bound<'_, PyEstimate>>,
    dataset: &PyDataset,
    policy: &str,
    pot: f64,
    alpha: f64,
) -> PyResult<Vec<(String, f64)>> {
    let kind: PolicyKind = policy.parse().map_err(PyValueError::new_err)?;
    let est: Vec<ValuationEstimate> = estimates
        .iter()
        .map(|e| {
            let e = e.get();
            Ok(ValuationEstimate {
                member_id: e.member_id.clone(),
                method: e.method.parse::<Method>().map_err(PyValueError::new_err)?,
                value: e.value,
                std_error: e.std_error,
                samples: e.samples,
                evals: e.evals,
            })
        })
        .collect::<PyResult<_>>()?;
    let out = allocate(&est, &dataset.inner.members, &PayoutPolicy { kind, pot, alpha }).map_err(py_err)?;
    Ok(out.into_iter().map(|p| (p.member_id, p.payout)).collect())
}

#[pymodule]
fn consortium(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPipelineConfig>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyEstimate>()?;
    m.add_class::<PyGame>()?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(payouts, m)?)?;
    Ok(())
}
