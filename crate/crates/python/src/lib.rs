//! Python module `jumpfbsde_py`: pricing oracles, FBSDE training, the smart-grid game and Price of Anarchy.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use jumpfbsde::mfg::{self, Seasonality};
use jumpfbsde::models::{self, ModelKind};
use jumpfbsde::oracles::{self, VgFftConfig};
use jumpfbsde::report;
use jumpfbsde::solvers::{self, Algorithm, LrSchedule};

fn py_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_model(name: &str) -> PyResult<ModelKind> {
    ModelKind::parse(name).ok_or_else(|| py_err(format!("unknown model `{name}`")))
}

fn parse_algorithm(name: &str) -> PyResult<Algorithm> {
    Algorithm::parse(name).ok_or_else(|| py_err(format!("unknown algorithm `{name}`")))
}

/// Python class holding plain `f64` fields, built from keyword overrides of the defaults.
macro_rules! mirror {
    ($py:ident, $pyname:literal, $inner:ty, [$($f:ident),* $(,)?], [$($extra:ident: $ety:ty),* $(,)?]) => {
        #[pyclass(name = $pyname, get_all, set_all, skip_from_py_object)]
        #[derive(Clone)]
        pub struct $py {
            $(pub $f: f64,)*
            $(pub $extra: $ety,)*
        }

        impl $py {
            fn apply(&mut self, overrides: Option<&Bound<'_, PyDict>>) -> PyResult<()> {
                let Some(d) = overrides else { return Ok(()) };
                for (k, v) in d.iter() {
                    let key: String = k.extract()?;
                    match key.as_str() {
                        $(stringify!($f) => self.$f = v.extract()?,)*
                        $(stringify!($extra) => self.$extra = v.extract()?,)*
                        other => return Err(py_err(format!("unknown field `{other}`"))),
                    }
                }
                Ok(())
            }
        }

        #[pymethods]
        impl $py {
            #[new]
            #[pyo3(signature = (**overrides))]
            fn new(overrides: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
                let mut out = Self::from(&<$inner>::default());
                out.apply(overrides)?;
                Ok(out)
            }

            fn __repr__(&self) -> String {
                let mut parts: Vec<String> = Vec::new();
                $(parts.push(format!("{}={}", stringify!($f), self.$f));)*
                $(parts.push(format!("{}={:?}", stringify!($extra), self.$extra));)*
                format!("{}({})", $pyname, parts.join(", "))
            }
        }
    };
}

mirror!(PyMarketParams, "MarketParams", models::MarketParams,
    [r, sigma, strike, s0, coupling, lambda, alpha, xi, theta, sigma_bar, kappa, horizon], [steps: usize]);

impl From<&models::MarketParams> for PyMarketParams {
    fn from(p: &models::MarketParams) -> Self {
        Self {
            r: p.r,
            sigma: p.sigma,
            strike: p.strike,
            s0: p.s0,
            coupling: p.coupling,
            lambda: p.lambda,
            alpha: p.alpha,
            xi: p.xi,
            theta: p.theta,
            sigma_bar: p.sigma_bar,
            kappa: p.kappa,
            horizon: p.horizon,
            steps: p.steps,
        }
    }
}

impl PyMarketParams {
    fn inner(&self) -> models::MarketParams {
        models::MarketParams {
            r: self.r,
            sigma: self.sigma,
            strike: self.strike,
            s0: self.s0,
            coupling: self.coupling,
            lambda: self.lambda,
            alpha: self.alpha,
            xi: self.xi,
            theta: self.theta,
            sigma_bar: self.sigma_bar,
            kappa: self.kappa,
            horizon: self.horizon,
            steps: self.steps,
        }
    }
}

mirror!(PyMfgParams, "MfgParams", mfg::MfgParams,
    [a, c, k_charge, mu, sigma, sigma0, mu_st, sigma_st, sigma_st0, p0, p1, f0, f1, h0, h1, h2, theta, pi, gamma,
     beta_tg, horizon, s0, chi_base, chi_amplitude, chi_shift],
    [steps: usize, q0: Option<f64>, planner: bool]);

impl From<&mfg::MfgParams> for PyMfgParams {
    fn from(p: &mfg::MfgParams) -> Self {
        let (chi_base, chi_amplitude, chi_shift) = match p.chi {
            Seasonality::Constant(c) => (c, 0.0, 0.0),
            Seasonality::TwoPeak { base, amplitude, shift } => (base, amplitude, shift),
            Seasonality::Custom(ref f) => (f(0.0), 0.0, 0.0),
        };
        Self {
            a: p.a,
            c: p.c,
            k_charge: p.k_charge,
            mu: p.mu,
            sigma: p.sigma,
            sigma0: p.sigma0,
            mu_st: p.mu_st,
            sigma_st: p.sigma_st,
            sigma_st0: p.sigma_st0,
            p0: p.p0,
            p1: p.p1,
            f0: p.f0,
            f1: p.f1,
            h0: p.h0,
            h1: p.h1,
            h2: p.h2,
            theta: p.theta,
            pi: p.pi,
            gamma: p.gamma,
            beta_tg: p.beta_tg,
            horizon: p.horizon,
            s0: p.s0,
            chi_base,
            chi_amplitude,
            chi_shift,
            steps: p.steps,
            q0: p.q0,
            planner: p.regime == mfg::Regime::Planner,
        }
    }
}

impl PyMfgParams {
    fn inner(&self) -> mfg::MfgParams {
        mfg::MfgParams {
            a: self.a,
            c: self.c,
            k_charge: self.k_charge,
            mu: self.mu,
            sigma: self.sigma,
            sigma0: self.sigma0,
            mu_st: self.mu_st,
            sigma_st: self.sigma_st,
            sigma_st0: self.sigma_st0,
            p0: self.p0,
            p1: self.p1,
            f0: self.f0,
            f1: self.f1,
            h0: self.h0,
            h1: self.h1,
            h2: self.h2,
            theta: self.theta,
            pi: self.pi,
            gamma: self.gamma,
            beta_tg: self.beta_tg,
            chi: Seasonality::TwoPeak { base: self.chi_base, amplitude: self.chi_amplitude, shift: self.chi_shift },
            horizon: self.horizon,
            steps: self.steps,
            s0: self.s0,
            q0: self.q0,
            regime: if self.planner { mfg::Regime::Planner } else { mfg::Regime::Equilibrium },
            ..mfg::MfgParams::default()
        }
    }
}

#[pyclass(name = "TrainingReport", frozen)]
pub struct PyTrainingReport {
    inner: solvers::TrainingReport,
}

#[pymethods]
impl PyTrainingReport {
    #[getter]
    fn algorithm(&self) -> &'static str {
        self.inner.algorithm.name()
    }
    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }
    #[getter]
    fn final_y0(&self) -> f64 {
        self.inner.final_y0
    }
    #[getter]
    fn seconds(&self) -> f64 {
        self.inner.seconds
    }
    #[getter]
    fn config_hash(&self) -> String {
        self.inner.config_hash.clone()
    }
    #[getter]
    fn divergence(&self) -> Option<String> {
        self.inner.divergence.clone()
    }
    /// `(epoch, iteration, y0, loss)` rows, initial state first.
    #[getter]
    fn epochs(&self) -> Vec<(usize, usize, f64, f64)> {
        std::iter::once(&self.inner.initial)
            .chain(&self.inner.epochs)
            .map(|e| (e.epoch, e.iteration, e.y0, e.loss))
            .collect()
    }
    fn epoch_csv(&self) -> String {
        report::epoch_csv(&self.inner)
    }
    fn __repr__(&self) -> String {
        format!(
            "TrainingReport(algorithm={}, seed={}, final_y0={})",
            self.inner.algorithm.name(),
            self.inner.seed,
            self.inner.final_y0
        )
    }
}

#[pyclass(name = "CostEstimate", frozen)]
pub struct PyCostEstimate {
    inner: mfg::CostEstimate,
}

#[pymethods]
impl PyCostEstimate {
    #[getter]
    fn value(&self) -> f64 {
        self.inner.value
    }
    #[getter]
    fn std_error(&self) -> f64 {
        self.inner.std_error
    }
    #[getter]
    fn samples(&self) -> Vec<f64> {
        self.inner.samples.clone()
    }
    fn __repr__(&self) -> String {
        format!("CostEstimate(value={}, std_error={})", self.inner.value, self.inner.std_error)
    }
}

#[pyclass(name = "MfgPolicy", frozen)]
pub struct PyMfgPolicy {
    inner: mfg::PolicyBundle,
    steps: usize,
}

impl PyMfgPolicy {
    /// `params` on the training grid.
    fn on_grid(&self, params: &PyMfgParams) -> mfg::MfgParams {
        mfg::MfgParams { steps: self.steps, ..params.inner() }
    }
}

#[pymethods]
impl PyMfgPolicy {
    #[getter]
    fn algorithm(&self) -> &'static str {
        mfg::mfg_algorithm_name(self.inner.algorithm)
    }
    #[getter]
    fn regime(&self) -> String {
        format!("{:?}", self.inner.regime)
    }
    #[getter]
    fn steps(&self) -> usize {
        self.steps
    }
    /// Expected cost on the training grid under the original coefficients of `params`.
    #[pyo3(signature = (params, n_mc = 10_000, seed = 0))]
    fn evaluate_cost(
        &self,
        py: Python<'_>,
        params: PyRef<'_, PyMfgParams>,
        n_mc: usize,
        seed: u64,
    ) -> PyResult<PyCostEstimate> {
        let p = self.on_grid(&params);
        let inner = py.detach(|| mfg::evaluate_cost(&self.inner, &p, n_mc, seed)).map_err(py_err)?;
        Ok(PyCostEstimate { inner })
    }
    /// Trajectory CSV of `paths` independent consumers on the training grid.
    #[pyo3(signature = (params, paths = 5, seed = 0))]
    fn trajectory_csv(&self, params: PyRef<'_, PyMfgParams>, paths: usize, seed: u64) -> PyResult<String> {
        let p = self.on_grid(&params);
        let r = mfg::rollout(&self.inner, &p, mfg::NoiseLayout::independent(paths), seed, mfg::EVALUATION_INDEX)
            .map_err(py_err)?;
        Ok(report::trajectory_csv(&mfg::trajectory_rows(&p, &r)))
    }
}

#[pyfunction]
fn bs_call(t: f64, s: f64, r: f64, sigma: f64, strike: f64, horizon: f64) -> f64 {
    oracles::bs_call(t, s, r, sigma, strike, horizon)
}

#[pyfunction]
fn merton_call(t: f64, s: f64, params: PyRef<'_, PyMarketParams>) -> PyResult<f64> {
    let p = params.inner();
    oracles::merton_call(t, s, p.r, p.sigma, p.lambda, p.alpha, p.xi, p.strike, p.horizon).map_err(py_err)
}

#[pyfunction]
fn vg_call(t: f64, s: f64, params: PyRef<'_, PyMarketParams>) -> PyResult<f64> {
    oracles::vg_call(t, s, &params.inner(), VgFftConfig::default()).map_err(py_err)
}

/// Reference `Y₀` of the decoupled problem for `model` in `bs | merton | vg`.
#[pyfunction]
#[pyo3(signature = (model, params = None))]
fn reference_price(model: &str, params: Option<PyRef<'_, PyMarketParams>>) -> PyResult<f64> {
    let p = params.map(|p| p.inner()).unwrap_or_default();
    oracles::reference_price(parse_model(model)?, &p).map_err(py_err)
}

#[pyfunction]
fn riccati_phi(t: f64, a: f64, c: f64, k: f64, h2: f64, horizon: f64) -> PyResult<f64> {
    oracles::riccati_phi(t, a, c, k, h2, horizon).map_err(py_err)
}

#[pyfunction]
fn intensity_lambda0(qhat: f64, gamma: f64) -> f64 {
    mfg::intensity_lambda0(qhat, gamma)
}

#[pyfunction]
fn algorithms() -> Vec<&'static str> {
    Algorithm::ALL.iter().map(|a| a.name()).collect()
}

fn stride(n_train: usize) -> usize {
    (n_train / 100).max(1)
}

/// Trains one pricing scheme; `None` keeps the experiment default.
#[pyfunction]
#[pyo3(signature = (model, algorithm = "global", params = None, n_train = 12_000, seed = 0, steps = None, batch = None, compensator_samples = None, coupled = false))]
#[allow(clippy::too_many_arguments)]
fn train_pricing(
    py: Python<'_>,
    model: &str,
    algorithm: &str,
    params: Option<PyRef<'_, PyMarketParams>>,
    n_train: usize,
    seed: u64,
    steps: Option<usize>,
    batch: Option<usize>,
    compensator_samples: Option<usize>,
    coupled: bool,
) -> PyResult<PyTrainingReport> {
    let kind = parse_model(model)?;
    let alg = parse_algorithm(algorithm)?;
    let mut market = params.map(|p| p.inner()).unwrap_or_default();
    let mut cfg = solvers::SolverConfig::pricing(alg, kind).with_iterations(n_train);
    cfg.steps = steps.unwrap_or(cfg.steps);
    market.steps = cfg.steps;
    cfg.batch = batch.unwrap_or(cfg.batch);
    cfg.compensator_samples = compensator_samples.unwrap_or(cfg.compensator_samples);
    cfg.seed = seed;
    cfg.epoch_stride = stride(n_train);
    let reference = if coupled { Some(oracles::coupling_reference(kind, &market).map_err(py_err)?) } else { None };
    let spec = models::make_spec(kind, &market, coupled, reference).map_err(py_err)?;
    let inner = py.detach(|| solvers::train(&spec, &cfg)).map_err(py_err)?;
    Ok(PyTrainingReport { inner })
}

/// Solves the equilibrium (`regime="mfg"`) or the aggregator problem (`regime="mfc"`).
#[pyfunction]
#[pyo3(signature = (params = None, algorithm = "global", n_train = 10_000, seed = 0, steps = None, batch = None, lr = None, regime = "mfg"))]
#[allow(clippy::too_many_arguments)]
fn solve_mfg(
    py: Python<'_>,
    params: Option<PyRef<'_, PyMfgParams>>,
    algorithm: &str,
    n_train: usize,
    seed: u64,
    steps: Option<usize>,
    batch: Option<usize>,
    lr: Option<f64>,
    regime: &str,
) -> PyResult<(PyMfgPolicy, PyTrainingReport)> {
    let alg = parse_algorithm(algorithm)?;
    mfg::check_mfg_algorithm(alg).map_err(py_err)?;
    let base = params.map(|p| p.inner()).unwrap_or_default();
    let p = match regime {
        "mfg" => base,
        "mfc" => mfg::mfc_transform(&base),
        other => return Err(py_err(format!("unknown regime `{other}`"))),
    };
    let mut cfg = mfg::mfg_solver_config(alg, steps.unwrap_or(p.steps));
    cfg.n_train = n_train;
    cfg.seed = seed;
    cfg.epoch_stride = stride(n_train);
    cfg.batch = batch.unwrap_or(cfg.batch);
    if let Some(rate) = lr {
        cfg.lr = LrSchedule::constant(rate);
    }
    let (policy, report) = py.detach(|| mfg::solve_mfg(&p, &cfg)).map_err(py_err)?;
    Ok((PyMfgPolicy { inner: policy, steps: cfg.steps }, PyTrainingReport { inner: report }))
}

/// Aggregator version of `params` (`planner = True`): feedback maps use doubled own-population price and divergence slopes.
#[pyfunction]
fn mfc_transform(params: PyRef<'_, PyMfgParams>) -> PyMfgParams {
    let t = mfg::mfc_transform(&params.inner());
    let mut out = PyMfgParams::from(&t);
    out.chi_base = params.chi_base;
    out.chi_amplitude = params.chi_amplitude;
    out.chi_shift = params.chi_shift;
    out
}

/// Paired ratio `V_MFG / V_MFC` with its delta-method standard error.
#[pyfunction]
fn price_of_anarchy(v_mfg: PyRef<'_, PyCostEstimate>, v_mfc: PyRef<'_, PyCostEstimate>) -> PyResult<(f64, f64)> {
    let poa = mfg::price_of_anarchy_paired(&v_mfg.inner, &v_mfc.inner).map_err(py_err)?;
    Ok((poa.value, poa.std_error))
}

#[pymodule]
pub fn jumpfbsde_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMarketParams>()?;
    m.add_class::<PyMfgParams>()?;
    m.add_class::<PyTrainingReport>()?;
    m.add_class::<PyCostEstimate>()?;
    m.add_class::<PyMfgPolicy>()?;
    m.add_function(wrap_pyfunction!(bs_call, m)?)?;
    m.add_function(wrap_pyfunction!(merton_call, m)?)?;
    m.add_function(wrap_pyfunction!(vg_call, m)?)?;
    m.add_function(wrap_pyfunction!(reference_price, m)?)?;
    m.add_function(wrap_pyfunction!(riccati_phi, m)?)?;
    m.add_function(wrap_pyfunction!(intensity_lambda0, m)?)?;
    m.add_function(wrap_pyfunction!(algorithms, m)?)?;
    m.add_function(wrap_pyfunction!(train_pricing, m)?)?;
    m.add_function(wrap_pyfunction!(solve_mfg, m)?)?;
    m.add_function(wrap_pyfunction!(mfc_transform, m)?)?;
    m.add_function(wrap_pyfunction!(price_of_anarchy, m)?)?;
    Ok(())
}
