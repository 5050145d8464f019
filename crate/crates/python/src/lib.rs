//! Python bindings: network FLOPs, the proxy evaluator, the budgeted
//! learned and random searches on it, the DP oracle, the handcrafted
//! baselines and the CLI.

use std::path::PathBuf;

use clap::Parser as _;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use autoprune::agent::truncated_normal;
use autoprune::environ::{search, Constraint, Environment, EpisodeResult, RewardKind, SearchConfig};
use autoprune::evaluators::{benchmark_network, Evaluator, ProxyModel as CoreProxy};
use autoprune::harness::{self, cli};
use autoprune::netmodel::{self, Accounting, CostModel, NetworkSpec};
use autoprune::seed;

fn py_err(e: ::autoprune::Error) -> PyErr {
    match e {
        ::autoprune::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn accounting(name: &str) -> PyResult<Accounting> {
    match name {
        "linear" => Ok(Accounting::Linear),
        "chained" => Ok(Accounting::Chained),
        other => Err(PyValueError::new_err(format!(
            "accounting must be linear or chained, got `{other}`"
        ))),
    }
}

/// A network description.
#[pyclass(module = "autoprune", frozen, skip_from_py_object)]
#[derive(Clone)]
struct Network {
    inner: NetworkSpec,
}

#[pymethods]
impl Network {
    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: netmodel::read_network(&path).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: netmodel::parse_network(text, std::path::Path::new("<string>")).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn proxy_benchmark() -> Self {
        Self {
            inner: benchmark_network(),
        }
    }

    fn layer_flops(&self) -> PyResult<Vec<u64>> {
        self.inner.layer_flops().map_err(py_err)
    }

    fn total_flops(&self) -> PyResult<u64> {
        self.inner.total_flops().map_err(py_err)
    }

    fn prunable_count(&self) -> usize {
        self.inner.prunable_count()
    }

    /// Network with every prunable layer's output channels scaled.
    fn apply_ratios(&self, ratios: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: netmodel::apply_ratios(&self.inner, &ratios).map_err(py_err)?,
        })
    }

    fn to_text(&self) -> String {
        netmodel::write_network(&self.inner)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Separable analytic error model with linear FLOPs.
#[pyclass(module = "autoprune", frozen)]
struct ProxyModel {
    inner: CoreProxy,
}

#[pymethods]
impl ProxyModel {
    #[new]
    #[pyo3(signature = (network, base_error = 0.06, exponent = 2.0, seed = 0))]
    fn new(network: &Network, base_error: f64, exponent: f64, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: CoreProxy::seeded(network.inner.clone(), base_error, exponent, seed).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn benchmark() -> Self {
        Self {
            inner: CoreProxy::benchmark(),
        }
    }

    fn sensitivities(&self) -> Vec<f64> {
        self.inner.sensitivities().to_vec()
    }

    fn layer_count(&self) -> usize {
        self.inner.layer_count()
    }

    fn total_flops(&self) -> f64 {
        self.inner.cost_model().total()
    }

    fn error(&self, ratios: Vec<f64>) -> PyResult<f64> {
        self.inner.evaluate(&ratios).map_err(py_err)
    }

    fn flops(&self, ratios: Vec<f64>) -> PyResult<f64> {
        self.inner.flops(&ratios).map_err(py_err)
    }
}

fn episode_dict<'py>(py: Python<'py>, r: &EpisodeResult) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("episode", r.episode)?;
    d.set_item("ratios", r.clamped.clone())?;
    d.set_item("error", r.error)?;
    d.set_item("reward", r.reward)?;
    d.set_item("flops_fraction", r.flops_fraction)?;
    Ok(d)
}

fn environment(proxy: &ProxyModel, alpha: f64, a_floor: f64) -> PyResult<Environment<'_>> {
    Environment::new(
        &proxy.inner,
        RewardKind::Err,
        Constraint::FlopsBudget { alpha },
        a_floor,
    )
    .map_err(py_err)
}

/// Learned search on a proxy under a FLOPs budget; returns the best episode
/// and the per-episode rewards.
#[pyfunction]
#[pyo3(signature = (proxy, alpha, episodes = 400, warmup_episodes = 100, seed = 0))]
fn search_proxy<'py>(
    py: Python<'py>,
    proxy: &ProxyModel,
    alpha: f64,
    episodes: usize,
    warmup_episodes: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let config = SearchConfig {
        episodes,
        warmup_episodes,
        constraint: Constraint::FlopsBudget { alpha },
        seed,
        ..SearchConfig::default()
    };
    let outcome = search(&config, &proxy.inner, None, false).map_err(py_err)?;
    let best = outcome
        .best
        .as_ref()
        .ok_or_else(|| PyValueError::new_err("no episode was evaluated"))?;
    let d = episode_dict(py, best)?;
    let rewards: Vec<Option<f64>> = outcome.episodes.iter().map(|e| e.reward).collect();
    d.set_item("rewards", rewards)?;
    d.set_item("protocol", outcome.fingerprint)?;
    Ok(d)
}

#[pyfunction]
#[pyo3(signature = (proxy, alpha, episodes = 400, seed = 0, a_floor = 0.05))]
fn random_search_proxy<'py>(
    py: Python<'py>,
    proxy: &ProxyModel,
    alpha: f64,
    episodes: usize,
    seed: u64,
    a_floor: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let env = environment(proxy, alpha, a_floor)?;
    let out = harness::random_search(&env, episodes, seed).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("episode", out.best_episode)?;
    d.set_item("ratios", out.best.ratios)?;
    d.set_item("error", out.best.error)?;
    d.set_item("reward", out.best.reward)?;
    d.set_item("flops_fraction", out.best.flops_fraction)?;
    Ok(d)
}

/// Exact optimum of a proxy on the ratio grid `{step, 2 step, ..., 1}`.
#[pyfunction]
#[pyo3(signature = (proxy, alpha, step = 0.05))]
fn dp_oracle<'py>(py: Python<'py>, proxy: &ProxyModel, alpha: f64, step: f64) -> PyResult<Bound<'py, PyDict>> {
    let r = harness::dp_oracle(&proxy.inner, alpha, step).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("ratios", r.ratios)?;
    d.set_item("error", r.error)?;
    d.set_item("reward", r.reward)?;
    d.set_item("flops_fraction", r.flops_fraction)?;
    Ok(d)
}

/// Handcrafted plan: `uniform`, `shallow_aggressive` or `deep_aggressive`.
#[pyfunction]
#[pyo3(signature = (network, policy, alpha, accounting = "chained", a_floor = 0.05))]
fn baseline_ratios(network: &Network, policy: &str, alpha: f64, accounting: &str, a_floor: f64) -> PyResult<Vec<f64>> {
    let cost = CostModel::new(network.inner.clone(), self::accounting(accounting)?).map_err(py_err)?;
    match policy {
        "uniform" => harness::uniform_ratios(&cost, alpha, a_floor),
        "shallow_aggressive" => harness::graded_ratios(&cost, alpha, a_floor, true),
        "deep_aggressive" => harness::graded_ratios(&cost, alpha, a_floor, false),
        other => return Err(PyValueError::new_err(format!("unknown policy `{other}`"))),
    }
    .map_err(py_err)
}

#[pyfunction]
fn kept_channels(n: usize, ratio: f64) -> usize {
    netmodel::kept_channels(n, ratio)
}

#[pyfunction]
fn derive_seed(master: u64, component: &str) -> u64 {
    seed::derive_seed(master, component)
}

/// `n` draws from the normal `(mu, sigma)` truncated to `[0, 1]`.
#[pyfunction]
#[pyo3(signature = (mu, sigma, n, seed = 0))]
fn truncated_normal_samples(mu: f64, sigma: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = seed::rng_for(seed, "python.truncated_normal");
    (0..n).map(|_| truncated_normal(mu, sigma, &mut rng)).collect()
}

/// Runs a CLI command, e.g. `run_cli(["flops", "nets/vgg19.net"])`, and
/// returns what it printed.
#[pyfunction]
fn run_cli(args: Vec<String>) -> PyResult<String> {
    let argv = std::iter::once("autoprune".to_string()).chain(args);
    let parsed = cli::Cli::try_parse_from(argv).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let mut out = Vec::new();
    cli::execute(parsed, &mut out).map_err(py_err)?;
    String::from_utf8(out).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
#[pyo3(name = "autoprune")]
fn autoprune_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Network>()?;
    m.add_class::<ProxyModel>()?;
    m.add_function(wrap_pyfunction!(search_proxy, m)?)?;
    m.add_function(wrap_pyfunction!(random_search_proxy, m)?)?;
    m.add_function(wrap_pyfunction!(dp_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(baseline_ratios, m)?)?;
    m.add_function(wrap_pyfunction!(kept_channels, m)?)?;
    m.add_function(wrap_pyfunction!(derive_seed, m)?)?;
    m.add_function(wrap_pyfunction!(truncated_normal_samples, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
