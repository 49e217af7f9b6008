//! Python bindings: simulated targets, campaigns and the scheduler's
//! building blocks (fronts, hypervolume, rewards, UCB scores).

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use mobsched::engine::{self, CampaignConfig, CampaignReport, RoundSummary, TargetSource};
use mobsched::mpmab::{self, CombinationId, CombinationStats};
use mobsched::nic;
use mobsched::objectives::{ObjectiveVector, RoundStats};
use mobsched::simtarget::{self, TargetSpec};
use mobsched::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::Spec { .. } | Error::Structural(_) | Error::Precondition(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_python<'py>(py: Python<'py>, value: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Round statistics with one closed round per entry of `history`, each
/// holding that round's per-objective averages.
pub fn stats_from_history(history: &[Vec<f64>]) -> Result<RoundStats, Error> {
    let n = history
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::Config("history needs at least one round".into()))?;
    let mut stats = RoundStats::new(n);
    for values in history {
        stats.record_execution(&ObjectiveVector::new(values.clone())?)?;
        stats.close_round();
    }
    Ok(stats)
}

/// A deterministic simulated target.
#[pyclass(name = "Target", module = "mobsched_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyTarget {
    spec: TargetSpec,
}

#[pymethods]
impl PyTarget {
    /// Built-in target by name, or a target JSON file path.
    #[staticmethod]
    fn resolve(name_or_path: &str) -> PyResult<Self> {
        Ok(Self {
            spec: TargetSpec::resolve(name_or_path).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            spec: TargetSpec::from_json(text).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn builtin_names() -> Vec<&'static str> {
        TargetSpec::builtin_names().collect()
    }

    #[getter]
    fn name(&self) -> String {
        self.spec.name.clone()
    }

    #[getter]
    fn seeds<'py>(&self, py: Python<'py>) -> Vec<Bound<'py, PyBytes>> {
        self.spec.seeds.iter().map(|s| PyBytes::new(py, s)).collect()
    }

    fn total_comparison_bytes(&self) -> u64 {
        self.spec.total_comparison_bytes()
    }

    fn to_json(&self) -> String {
        self.spec.to_json()
    }

    /// Runs one input; returns edges, exec_cost_us, stack_bytes, cmp_matched.
    fn execute<'py>(&self, py: Python<'py>, input: &[u8]) -> PyResult<Bound<'py, PyAny>> {
        to_python(py, &simtarget::execute(&self.spec, input))
    }

    fn __repr__(&self) -> String {
        format!("Target({:?})", self.spec.name)
    }
}

/// A campaign against a simulated target, stepped one round at a time.
#[pyclass(name = "Campaign", module = "mobsched_py")]
struct PyCampaign {
    inner: engine::Campaign<TargetSpec>,
}

#[pymethods]
impl PyCampaign {
    #[new]
    #[pyo3(signature = (target, seed, rounds=1440, round_budget=1000, lambda_=0.1, gamma=0.01, nic=true))]
    fn new(
        target: &PyTarget,
        seed: u64,
        rounds: u64,
        round_budget: u64,
        lambda_: f64,
        gamma: f64,
        nic: bool,
    ) -> PyResult<Self> {
        let spec = target.spec.clone();
        let mut cfg = CampaignConfig::new(TargetSource::Spec(spec.clone()), seed);
        cfg.total_rounds = rounds;
        cfg.round_budget = round_budget;
        cfg.lambda = lambda_;
        cfg.gamma = gamma;
        cfg.nic_enabled = nic;
        let seeds = spec.seeds.clone();
        Ok(Self {
            inner: engine::Campaign::new(cfg, &seeds, spec).map_err(py_err)?,
        })
    }

    /// Runs one round and returns its summary as a dict.
    fn step<'py>(&mut self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        if self.inner.is_finished() {
            return Err(PyValueError::new_err("campaign already reached its round horizon"));
        }
        let out = self.inner.step_round().map_err(py_err)?;
        summary_dict(py, &out.summary)
    }

    /// Runs the remaining rounds and returns the final report.
    fn run<'py>(&mut self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        while !self.inner.is_finished() {
            self.inner.step_round().map_err(py_err)?;
        }
        to_python(py, &CampaignReport::from_campaign(&self.inner).map_err(py_err)?)
    }

    #[getter]
    fn rounds_done(&self) -> u64 {
        self.inner.rounds_done()
    }

    #[getter]
    fn is_finished(&self) -> bool {
        self.inner.is_finished()
    }

    #[getter]
    fn pool_size(&self) -> usize {
        self.inner.state().pool.len()
    }

    #[getter]
    fn cumulative_avg(&self) -> Vec<f64> {
        self.inner.state().stats.cumulative_avg().to_vec()
    }

    fn snapshot(&self) -> PyResult<String> {
        self.inner.snapshot().map_err(py_err)
    }
}

fn summary_dict<'py>(py: Python<'py>, s: &RoundSummary) -> PyResult<Bound<'py, PyAny>> {
    to_python(
        py,
        &serde_json::json!({
            "round": s.round,
            "combo_mask": s.combo.mask(),
            "pioneer": s.pioneer,
            "state": s.state.as_str(),
            "per_round_avg": s.per_round_avg,
            "cumulative_avg": s.cumulative_avg,
            "execs": s.execs,
            "nic_fired": s.nic_fired,
            "pool_size": s.pool_size,
            "good_seed_fraction": s.good_seed_fraction,
            "reward": s.reward,
        }),
    )
}

/// Runs a full campaign into `out` (report directory) and returns the summary.
#[pyfunction]
#[pyo3(signature = (target, seed, out, rounds=1440, round_budget=1000, lambda_=0.1, gamma=0.01, nic=true))]
#[allow(clippy::too_many_arguments)]
fn run_campaign<'py>(
    py: Python<'py>,
    target: &PyTarget,
    seed: u64,
    out: PathBuf,
    rounds: u64,
    round_budget: u64,
    lambda_: f64,
    gamma: f64,
    nic: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let mut cfg = CampaignConfig::new(TargetSource::Spec(target.spec.clone()), seed);
    cfg.total_rounds = rounds;
    cfg.round_budget = round_budget;
    cfg.lambda = lambda_;
    cfg.gamma = gamma;
    cfg.nic_enabled = nic;
    let seeds = target.spec.seeds.clone();
    let report = py
        .detach(|| engine::run_campaign(cfg, &seeds, &out))
        .map_err(py_err)?;
    to_python(py, &report)
}

/// Front index lists (best first) of points under maximization.
#[pyfunction]
fn non_dominated_sort(points: Vec<Vec<f64>>) -> PyResult<Vec<Vec<usize>>> {
    nic::non_dominated_fronts(&points).map_err(py_err)
}

#[pyfunction]
fn hypervolume(points: Vec<Vec<f64>>, reference: Vec<f64>) -> PyResult<f64> {
    if points.iter().any(|p| p.len() != reference.len()) {
        return Err(PyValueError::new_err("every point needs one value per reference coordinate"));
    }
    Ok(nic::hypervolume(&points, &reference))
}

/// Reward of combination `mask` after the rounds in `history` (one list of
/// per-objective averages per round).
#[pyfunction]
#[pyo3(signature = (mask, history, lambda_=0.1))]
fn combination_reward(mask: u32, history: Vec<Vec<f64>>, lambda_: f64) -> PyResult<f64> {
    let stats = stats_from_history(&history).map_err(py_err)?;
    let combo = CombinationId::new(mask, stats.num_objectives()).map_err(py_err)?;
    mpmab::combination_reward(combo, &stats, lambda_).map_err(py_err)
}

/// UCB score of an arm with the given reward history.
#[pyfunction]
#[pyo3(signature = (rewards, total_selections, gamma=0.01))]
fn ucb_score(rewards: Vec<f64>, total_selections: u64, gamma: f64) -> PyResult<f64> {
    let mut cs = CombinationStats::new(CombinationId::new(1, 1).map_err(py_err)?);
    cs.n_l = rewards.len() as u64;
    for r in rewards {
        cs.push_reward(r);
    }
    mpmab::ucb_score(&cs, total_selections, gamma).map_err(py_err)
}

#[pymodule]
fn mobsched_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTarget>()?;
    m.add_class::<PyCampaign>()?;
    m.add_function(wrap_pyfunction!(run_campaign, m)?)?;
    m.add_function(wrap_pyfunction!(non_dominated_sort, m)?)?;
    m.add_function(wrap_pyfunction!(hypervolume, m)?)?;
    m.add_function(wrap_pyfunction!(combination_reward, m)?)?;
    m.add_function(wrap_pyfunction!(ucb_score, m)?)?;
    Ok(())
}
