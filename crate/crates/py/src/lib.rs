//! Python bindings: MDPs, policies, world models and the bound verifiers.
//!
//! Arrays cross the boundary as nested lists of floats.

use std::collections::BTreeMap;

use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use spi_lab::envs::{self, Fig1Params, Fig2Params};
use spi_lab::guarantees::{self, PacConfig};
use spi_lab::latent::{self, Metric};
use spi_lab::mdp::{self, StationaryDist};
use spi_lab::{losses, neighborhood, surrogate};

create_exception!(
    spi_lab_py,
    SpiLabError,
    PyValueError,
    "Rejected input or failed precondition."
);

fn err(e: spi_lab::Error) -> PyErr {
    SpiLabError::new_err(e.to_string())
}

trait OrPy<T> {
    fn py_err(self) -> PyResult<T>;
}

impl<T> OrPy<T> for spi_lab::Result<T> {
    fn py_err(self) -> PyResult<T> {
        self.map_err(err)
    }
}

fn rows(flat: &[f64], width: usize) -> Vec<Vec<f64>> {
    flat.chunks(width).map(<[f64]>::to_vec).collect()
}

fn py_bool(b: bool) -> &'static str {
    if b {
        "True"
    } else {
        "False"
    }
}

fn dist(xi: Vec<f64>) -> PyResult<StationaryDist> {
    StationaryDist::new(xi).py_err()
}

#[pyclass(name = "FiniteMdp", module = "spi_lab_py", frozen)]
pub struct PyMdp {
    pub inner: spi_lab::FiniteMdp,
}

#[pymethods]
impl PyMdp {
    /// `transition[s][a][s']`, `reward[s][a]`.
    #[new]
    #[pyo3(signature = (transition, reward, discount, initial_state=0, reset_state=None))]
    fn new(
        transition: Vec<Vec<Vec<f64>>>,
        reward: Vec<Vec<f64>>,
        discount: f64,
        initial_state: usize,
        reset_state: Option<usize>,
    ) -> PyResult<Self> {
        let n = transition.len();
        let na = reward.first().map_or(0, Vec::len);
        if reward.len() != n
            || reward.iter().any(|r| r.len() != na)
            || transition.iter().any(|t| t.len() != na)
        {
            return Err(err(spi_lab::Error::DimensionMismatch(
                "transition/reward shapes disagree".into(),
            )));
        }
        let t: Vec<f64> = transition.into_iter().flatten().flatten().collect();
        let r: Vec<f64> = reward.into_iter().flatten().collect();
        let inner =
            spi_lab::FiniteMdp::new(n, na, t, r, initial_state, discount, reset_state).py_err()?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: spi_lab::FiniteMdp::from_json(text).py_err()?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().py_err()
    }

    #[getter]
    fn n_states(&self) -> usize {
        self.inner.n_states()
    }

    #[getter]
    fn n_actions(&self) -> usize {
        self.inner.n_actions()
    }

    #[getter]
    fn discount(&self) -> f64 {
        self.inner.discount()
    }

    #[getter]
    fn initial_state(&self) -> usize {
        self.inner.initial_state()
    }

    #[getter]
    fn reset_state(&self) -> Option<usize> {
        self.inner.reset_state()
    }

    #[getter]
    fn reward(&self) -> Vec<Vec<f64>> {
        rows(self.inner.reward(), self.inner.n_actions())
    }

    fn row(&self, s: usize, a: usize) -> PyResult<Vec<f64>> {
        if s >= self.inner.n_states() || a >= self.inner.n_actions() {
            return Err(SpiLabError::new_err(format!("({s}, {a}) out of range")));
        }
        Ok(self.inner.row(s, a).to_vec())
    }

    /// `(V, Q)` of a policy; `Q` as `[s][a]`.
    #[pyo3(signature = (policy, episodic_masking=false))]
    fn evaluate(
        &self,
        policy: &PyPolicy,
        episodic_masking: bool,
    ) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
        let t = mdp::evaluate_policy(&self.inner, &policy.inner, episodic_masking).py_err()?;
        let q = rows(&t.q, self.inner.n_actions());
        Ok((t.v, q))
    }

    /// Optimal values and a greedy optimal policy.
    #[pyo3(signature = (tol=1e-10, max_iters=10_000_000))]
    fn solve(&self, tol: f64, max_iters: usize) -> PyResult<(Vec<f64>, PyPolicy)> {
        let t = mdp::value_iteration(&self.inner, false, tol, max_iters).py_err()?;
        let greedy = mdp::greedy_policy(&t);
        Ok((t.v, PyPolicy { inner: greedy }))
    }

    fn stationary(&self, policy: &PyPolicy) -> PyResult<Vec<f64>> {
        Ok(mdp::stationary_distribution(&self.inner, &policy.inner)
            .py_err()?
            .xi)
    }

    fn average_episode_length(&self, policy: &PyPolicy) -> PyResult<f64> {
        mdp::average_episode_length(&self.inner, &policy.inner).py_err()
    }

    /// `count` i.i.d. `(s, a, r, s')` tuples with `s` stationary under the policy.
    #[pyo3(signature = (policy, count, seed=0))]
    fn sample(
        &self,
        policy: &PyPolicy,
        count: usize,
        seed: u64,
    ) -> PyResult<Vec<(usize, usize, f64, usize)>> {
        let batch = mdp::sample_transitions(&self.inner, &policy.inner, count, seed).py_err()?;
        Ok(batch.iter().map(|t| (t.s, t.a, t.r, t.s_next)).collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "FiniteMdp(n_states={}, n_actions={}, discount={})",
            self.inner.n_states(),
            self.inner.n_actions(),
            self.inner.discount()
        )
    }
}

#[pyclass(name = "TabularPolicy", module = "spi_lab_py", frozen)]
pub struct PyPolicy {
    pub inner: spi_lab::TabularPolicy,
}

#[pymethods]
impl PyPolicy {
    #[new]
    fn new(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(Self {
            inner: spi_lab::TabularPolicy::from_rows(rows).py_err()?,
        })
    }

    #[staticmethod]
    fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            inner: spi_lab::TabularPolicy::uniform(n_states, n_actions),
        }
    }

    #[staticmethod]
    fn deterministic(n_actions: usize, actions: Vec<usize>) -> PyResult<Self> {
        Ok(Self {
            inner: spi_lab::TabularPolicy::deterministic(n_actions, &actions).py_err()?,
        })
    }

    #[getter]
    fn rows(&self) -> Vec<Vec<f64>> {
        self.inner.rows().map(<[f64]>::to_vec).collect()
    }

    fn prob(&self, s: usize, a: usize) -> PyResult<f64> {
        if s >= self.inner.n_states() || a >= self.inner.n_actions() {
            return Err(SpiLabError::new_err(format!("({s}, {a}) out of range")));
        }
        Ok(self.inner.prob(s, a))
    }

    fn fingerprint(&self) -> String {
        self.inner.fingerprint()
    }

    fn __repr__(&self) -> String {
        format!("TabularPolicy({:?})", self.rows())
    }
}

#[pyclass(name = "Encoder", module = "spi_lab_py", frozen)]
pub struct PyEncoder {
    pub inner: latent::Encoder,
}

#[pymethods]
impl PyEncoder {
    #[new]
    fn new(mapping: Vec<usize>, n_latent: usize) -> PyResult<Self> {
        Ok(Self {
            inner: latent::Encoder::new(mapping, n_latent).py_err()?,
        })
    }

    #[getter]
    fn mapping(&self) -> Vec<usize> {
        self.inner.mapping().to_vec()
    }

    #[getter]
    fn n_latent(&self) -> usize {
        self.inner.n_latent()
    }

    /// Latent policy applied through the encoder.
    fn compose(&self, latent_policy: &PyPolicy) -> PyResult<PyPolicy> {
        Ok(PyPolicy {
            inner: latent::compose(&latent_policy.inner, &self.inner).py_err()?,
        })
    }

    fn pushforward(&self, ground: Vec<f64>) -> PyResult<Vec<f64>> {
        latent::pushforward(&self.inner, &ground).py_err()
    }
}

#[pyclass(name = "LatentMdp", module = "spi_lab_py", frozen)]
pub struct PyLatent {
    pub inner: latent::LatentMdp,
}

#[pymethods]
impl PyLatent {
    /// World model fitted to `mdp` under the state weighting `xi`.
    #[staticmethod]
    fn fit(mdp: &PyMdp, encoder: &PyEncoder, xi: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: latent::fit_latent_model(&mdp.inner, &encoder.inner, &dist(xi)?).py_err()?,
        })
    }

    #[getter]
    fn model(&self) -> PyMdp {
        PyMdp {
            inner: self.inner.model().clone(),
        }
    }

    #[getter]
    fn metric(&self) -> Vec<Vec<f64>> {
        rows(self.inner.metric().as_slice(), self.inner.n_latent())
    }

    /// `(K_R, K_P, K_V)` of the model under a latent policy.
    fn lipschitz(&self, latent_policy: &PyPolicy) -> PyResult<(f64, f64, f64)> {
        let r = latent::lipschitz_constants(&self.inner, &latent_policy.inner).py_err()?;
        Ok((r.k_r, r.k_p, r.k_v))
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().py_err()
    }
}

#[pyclass(name = "EnvSpec", module = "spi_lab_py", frozen)]
pub struct PyEnv {
    pub inner: envs::EnvSpec,
}

#[pymethods]
impl PyEnv {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: envs::EnvSpec::from_json(text).py_err()?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().py_err()
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn params(&self) -> BTreeMap<String, f64> {
        self.inner.params.clone()
    }

    #[getter]
    fn mdp(&self) -> PyMdp {
        PyMdp {
            inner: self.inner.mdp.clone(),
        }
    }

    #[getter]
    fn encoder(&self) -> PyEncoder {
        PyEncoder {
            inner: self.inner.encoder.clone(),
        }
    }

    #[getter]
    fn latent(&self) -> PyLatent {
        PyLatent {
            inner: self.inner.latent.clone(),
        }
    }

    #[getter]
    fn baseline_latent(&self) -> PyPolicy {
        PyPolicy {
            inner: self.inner.baseline_latent.clone(),
        }
    }

    #[getter]
    fn baseline(&self) -> PyPolicy {
        PyPolicy {
            inner: self.inner.baseline.clone(),
        }
    }

    /// Latent candidate inside the `c`-neighborhood of the latent baseline.
    #[pyo3(signature = (c, seed=0))]
    fn random_candidate(&self, c: f64, seed: u64) -> PyResult<PyPolicy> {
        if !(c > 1.0 && c < 2.0) {
            return Err(err(spi_lab::Error::NeighborhoodConstant(c)));
        }
        Ok(PyPolicy {
            inner: envs::random_candidate(&self.inner, c, &mut ChaCha8Rng::seed_from_u64(seed)),
        })
    }
}

#[pyclass(name = "BoundReport", module = "spi_lab_py", frozen, get_all)]
pub struct PyBoundReport {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    pub slack: f64,
    pub vacuous: bool,
    pub inputs_digest: String,
    pub components: BTreeMap<String, f64>,
}

impl From<guarantees::BoundReport> for PyBoundReport {
    fn from(r: guarantees::BoundReport) -> Self {
        Self {
            name: r.name,
            lhs: r.lhs,
            rhs: r.rhs,
            holds: r.holds,
            slack: r.slack,
            vacuous: r.vacuous,
            inputs_digest: r.inputs_digest,
            components: r.components,
        }
    }
}

#[pymethods]
impl PyBoundReport {
    fn __repr__(&self) -> String {
        format!(
            "BoundReport(name={:?}, lhs={}, rhs={}, holds={}, vacuous={})",
            self.name,
            self.lhs,
            self.rhs,
            py_bool(self.holds),
            py_bool(self.vacuous)
        )
    }
}

#[pyfunction]
#[pyo3(signature = (epsilon=1e-3, discount=0.95, corrupt_reward=20.0))]
fn fig1(epsilon: f64, discount: f64, corrupt_reward: f64) -> PyResult<PyEnv> {
    let p = Fig1Params {
        epsilon,
        discount,
        corrupt_reward,
        ..Default::default()
    };
    Ok(PyEnv {
        inner: envs::build_fig1(&p).py_err()?,
    })
}

#[pyfunction]
#[pyo3(signature = (epsilon=0.1, zeta=1e-4, discount=0.9, split=false))]
fn fig2(epsilon: f64, zeta: f64, discount: f64, split: bool) -> PyResult<PyEnv> {
    let p = Fig2Params {
        epsilon,
        zeta,
        discount,
        split,
    };
    Ok(PyEnv {
        inner: envs::build_fig2(&p).py_err()?,
    })
}

/// Instance `instance` of the randomized suite seeded by `suite_seed`.
#[pyfunction]
#[pyo3(signature = (suite_seed=42, instance=0))]
fn random_env(suite_seed: u64, instance: usize) -> PyResult<PyEnv> {
    Ok(PyEnv {
        inner: envs::random_episodic(&envs::suite_params(suite_seed, instance)).py_err()?,
    })
}

/// Latent policy of the merged-block greedy update on an environment.
#[pyfunction]
fn block_greedy_update(env: &PyEnv) -> PyResult<PyPolicy> {
    Ok(PyPolicy {
        inner: envs::block_greedy_update(&env.inner).py_err()?,
    })
}

/// Optimal transport cost; the discrete metric when `metric` is omitted.
#[pyfunction]
#[pyo3(signature = (mu, nu, metric=None))]
fn wasserstein(mu: Vec<f64>, nu: Vec<f64>, metric: Option<Vec<Vec<f64>>>) -> PyResult<f64> {
    let m = match metric {
        Some(rows) => Metric::new(rows.len(), rows.concat()).py_err()?,
        None => Metric::discrete(mu.len()),
    };
    losses::wasserstein(&mu, &nu, &m).py_err()
}

/// `(L_R, L_P)` of the world model under `s ~ xi`, `a ~ policy`.
#[pyfunction]
fn exact_losses(
    mdp: &PyMdp,
    encoder: &PyEncoder,
    latent: &PyLatent,
    xi: Vec<f64>,
    policy: &PyPolicy,
) -> PyResult<(f64, f64)> {
    let r = losses::exact_losses(
        &mdp.inner,
        &encoder.inner,
        &latent.inner,
        &dist(xi)?,
        &policy.inner,
    )
    .py_err()?;
    Ok((r.l_r, r.l_p))
}

#[pyfunction]
fn in_neighborhood(base: &PyPolicy, candidate: &PyPolicy, c: f64) -> PyResult<bool> {
    neighborhood::in_neighborhood(&base.inner, &candidate.inner, c).py_err()
}

/// `(sup IR, inf IR, supports match)`.
#[pyfunction]
fn extremal_ir(base: &PyPolicy, candidate: &PyPolicy) -> PyResult<(f64, f64, bool)> {
    let ir = neighborhood::extremal_ir(&base.inner, &candidate.inner).py_err()?;
    Ok((ir.sup_ir, ir.inf_ir, ir.support_match))
}

#[pyfunction]
fn mirror_step(mdp: &PyMdp, policy: &PyPolicy, c: f64, xi: Vec<f64>) -> PyResult<PyPolicy> {
    Ok(PyPolicy {
        inner: neighborhood::mirror_step(&mdp.inner, &policy.inner, c, &dist(xi)?).py_err()?,
    })
}

#[pyfunction]
fn verify_avd(
    mdp: &PyMdp,
    encoder: &PyEncoder,
    latent: &PyLatent,
    baseline: &PyPolicy,
    latent_policy: &PyPolicy,
) -> PyResult<PyBoundReport> {
    Ok(guarantees::verify_avd(
        &mdp.inner,
        &encoder.inner,
        &latent.inner,
        &baseline.inner,
        &latent_policy.inner,
    )
    .py_err()?
    .into())
}

#[pyfunction]
fn verify_value_bound(
    mdp: &PyMdp,
    encoder: &PyEncoder,
    latent: &PyLatent,
    baseline: &PyPolicy,
    latent_policy: &PyPolicy,
) -> PyResult<PyBoundReport> {
    Ok(guarantees::verify_value_bound(
        &mdp.inner,
        &encoder.inner,
        &latent.inner,
        &baseline.inner,
        &latent_policy.inner,
    )
    .py_err()?
    .into())
}

#[pyfunction]
fn verify_spi(
    mdp: &PyMdp,
    encoder: &PyEncoder,
    latent: &PyLatent,
    baseline_latent: &PyPolicy,
    candidate_latent: &PyPolicy,
) -> PyResult<PyBoundReport> {
    Ok(guarantees::verify_spi(
        &mdp.inner,
        &encoder.inner,
        &latent.inner,
        &baseline_latent.inner,
        &candidate_latent.inner,
    )
    .py_err()?
    .into())
}

#[pyfunction]
#[pyo3(signature = (mdp, encoder, latent, baseline_latent, candidate_latent, epsilon=0.05, delta=0.1, ael_upper_bound=None, seed=0, trials=200))]
#[allow(clippy::too_many_arguments)]
fn pac_verify(
    py: Python<'_>,
    mdp: &PyMdp,
    encoder: &PyEncoder,
    latent: &PyLatent,
    baseline_latent: &PyPolicy,
    candidate_latent: &PyPolicy,
    epsilon: f64,
    delta: f64,
    ael_upper_bound: Option<f64>,
    seed: u64,
    trials: usize,
) -> PyResult<PyBoundReport> {
    let cfg = PacConfig {
        epsilon,
        delta,
        ael_upper_bound,
        seed,
        trials,
    };
    let (m, e, l, b, c) = (
        &mdp.inner,
        &encoder.inner,
        &latent.inner,
        &baseline_latent.inner,
        &candidate_latent.inner,
    );
    Ok(py
        .detach(|| guarantees::pac_verify(m, e, l, b, c, &cfg))
        .py_err()?
        .into())
}

/// `(mean, standard error)` of imagined discounted returns from `starts`.
#[pyfunction]
#[pyo3(signature = (latent, latent_policy, starts, horizon, count, seed=0))]
fn imagined_returns(
    latent: &PyLatent,
    latent_policy: &PyPolicy,
    starts: Vec<f64>,
    horizon: usize,
    count: usize,
    seed: u64,
) -> PyResult<(f64, f64)> {
    let r = surrogate::imagined_returns(
        &latent.inner,
        &latent_policy.inner,
        &starts,
        horizon,
        count,
        seed,
    )
    .py_err()?;
    Ok((r.mean, r.std_err))
}

/// Adds every class and function to `m`.
pub fn register(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("SpiLabError", m.py().get_type::<SpiLabError>())?;
    m.add_class::<PyMdp>()?;
    m.add_class::<PyPolicy>()?;
    m.add_class::<PyEncoder>()?;
    m.add_class::<PyLatent>()?;
    m.add_class::<PyEnv>()?;
    m.add_class::<PyBoundReport>()?;
    m.add_function(wrap_pyfunction!(fig1, m)?)?;
    m.add_function(wrap_pyfunction!(fig2, m)?)?;
    m.add_function(wrap_pyfunction!(random_env, m)?)?;
    m.add_function(wrap_pyfunction!(block_greedy_update, m)?)?;
    m.add_function(wrap_pyfunction!(wasserstein, m)?)?;
    m.add_function(wrap_pyfunction!(exact_losses, m)?)?;
    m.add_function(wrap_pyfunction!(in_neighborhood, m)?)?;
    m.add_function(wrap_pyfunction!(extremal_ir, m)?)?;
    m.add_function(wrap_pyfunction!(mirror_step, m)?)?;
    m.add_function(wrap_pyfunction!(verify_avd, m)?)?;
    m.add_function(wrap_pyfunction!(verify_value_bound, m)?)?;
    m.add_function(wrap_pyfunction!(verify_spi, m)?)?;
    m.add_function(wrap_pyfunction!(pac_verify, m)?)?;
    m.add_function(wrap_pyfunction!(imagined_returns, m)?)?;
    Ok(())
}

#[pymodule]
fn spi_lab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    register(m)
}
