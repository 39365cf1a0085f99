//! Python bindings for the `arpredict` crate.

use std::collections::BTreeMap;

use arpredict::asymptotics::{self, AsymptoticReport};
use arpredict::montecarlo;
use arpredict::model::{fit, simulate_series, Family, ModelSpec, TimeSeries};
use arpredict::predict::{Lag2Quadrature, PredictionTask, Predictor, Target, Variant};
use arpredict::weights_kde::{solve_el_weights, ElWeights, Kernel, KernelConfig, ResidualSet};
use arpredict::innovation::InnovationDist;
use arpredict::Error;
use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;

fn to_py(err: Error) -> PyErr {
    match err {
        Error::Degenerate(_) | Error::Unattainable { .. } => PyArithmeticError::new_err(err.to_string()),
        _ => PyValueError::new_err(err.to_string()),
    }
}

fn dist(name: &str) -> PyResult<InnovationDist> {
    name.parse().map_err(to_py)
}

fn family(name: &str, order: usize, gamma: Option<f64>, threshold: Option<f64>) -> PyResult<Family> {
    match name.to_ascii_lowercase().as_str() {
        "ar1" => Ok(Family::ar1()),
        "ar" => Ok(Family::Ar { order }),
        "expar" => Ok(Family::Expar { gamma: gamma.ok_or_else(|| PyValueError::new_err("expar needs gamma"))? }),
        "setar" => Ok(Family::Setar {
            threshold: threshold.ok_or_else(|| PyValueError::new_err("setar needs threshold"))?,
        }),
        other => Err(PyValueError::new_err(format!("unknown family `{other}`"))),
    }
}

fn variants(names: Vec<String>) -> PyResult<Vec<Variant>> {
    names.iter().map(|v| v.parse::<Variant>().map_err(to_py)).collect()
}

#[pyclass(name = "ModelSpec", module = "arpredict_py", from_py_object)]
#[derive(Clone)]
struct PyModelSpec {
    inner: ModelSpec,
}

#[pymethods]
impl PyModelSpec {
    #[staticmethod]
    fn ar1(theta: f64) -> PyResult<Self> {
        Ok(Self { inner: ModelSpec::ar1(theta).map_err(to_py)? })
    }

    #[staticmethod]
    fn ar(coefficients: Vec<f64>) -> PyResult<Self> {
        Ok(Self { inner: ModelSpec::ar(coefficients).map_err(to_py)? })
    }

    #[staticmethod]
    fn expar(theta1: f64, theta2: f64, gamma: f64) -> PyResult<Self> {
        Ok(Self { inner: ModelSpec::expar(theta1, theta2, gamma).map_err(to_py)? })
    }

    #[staticmethod]
    fn setar(theta1: f64, theta2: f64, threshold: f64) -> PyResult<Self> {
        Ok(Self { inner: ModelSpec::setar(theta1, theta2, threshold).map_err(to_py)? })
    }

    #[getter]
    fn theta(&self) -> Vec<f64> {
        self.inner.theta().to_vec()
    }

    #[getter]
    fn family(&self) -> String {
        self.inner.family().name()
    }

    #[getter]
    fn order(&self) -> usize {
        self.inner.order()
    }

    fn regression_value(&self, x: Vec<f64>) -> PyResult<f64> {
        if x.len() != self.inner.order() {
            return Err(PyValueError::new_err("state length must equal the model order"));
        }
        Ok(self.inner.regression_value(&x))
    }

    fn __repr__(&self) -> String {
        format!("ModelSpec({}, theta={:?})", self.inner.family(), self.inner.theta())
    }
}

/// Simulates `n + p` values from a stationary model.
#[pyfunction]
#[pyo3(signature = (spec, n, dist = "normal", burn_in = 500, seed = 0))]
fn simulate(spec: &PyModelSpec, n: usize, dist: &str, burn_in: usize, seed: u64) -> PyResult<Vec<f64>> {
    let series = simulate_series(&spec.inner, self::dist(dist)?, n, burn_in, seed).map_err(to_py)?;
    Ok(series.values().to_vec())
}

#[pyfunction(name = "fit")]
#[pyo3(signature = (values, family = "ar1", order = 1, gamma = None, threshold = None))]
fn fit_py(values: Vec<f64>, family: &str, order: usize, gamma: Option<f64>, threshold: Option<f64>) -> PyResult<PyModelSpec> {
    let fam = self::family(family, order, gamma, threshold)?;
    let series = TimeSeries::new(values, fam.order()).map_err(to_py)?;
    Ok(PyModelSpec { inner: fit(&series, &fam).map_err(to_py)? })
}

/// Returns `(lambda, weights, solved)`.
#[pyfunction(name = "solve_el_weights")]
fn solve_weights(residuals: Vec<f64>) -> (f64, Vec<f64>, bool) {
    let w = arpredict::weights_kde::solve_el_weights_for(&residuals);
    (w.lambda(), w.values().to_vec(), w.solved())
}

/// Residuals, weights and smoothing setup for one observed series.
#[pyclass(name = "Predictor", module = "arpredict_py")]
struct PyPredictor {
    spec: ModelSpec,
    residuals: ResidualSet,
    weights: ElWeights,
    config: KernelConfig,
    full_quadrature: bool,
}

impl PyPredictor {
    fn with<T>(&self, f: impl FnOnce(&Predictor) -> T) -> T {
        let quadrature = if self.full_quadrature { Lag2Quadrature::Full } else { Lag2Quadrature::Collapsed };
        let p = Predictor::new(&self.spec, &self.residuals, &self.weights, self.config).with_lag2_quadrature(quadrature);
        f(&p)
    }
}

#[pymethods]
impl PyPredictor {
    /// `spec` is used as the fitted parameter; pass the result of `fit`.
    #[new]
    #[pyo3(signature = (values, spec, kernel = "triweight", c = 2.0, beta = 0.25, riemann_n = 100, full_quadrature = false))]
    fn new(
        values: Vec<f64>,
        spec: &PyModelSpec,
        kernel: &str,
        c: f64,
        beta: f64,
        riemann_n: usize,
        full_quadrature: bool,
    ) -> PyResult<Self> {
        let kernel: Kernel = kernel.parse().map_err(to_py)?;
        let config = KernelConfig::with_rate(kernel, c, beta, riemann_n).map_err(to_py)?;
        let series = TimeSeries::new(values, spec.inner.order()).map_err(to_py)?;
        let residuals = ResidualSet::new(&series, &spec.inner).map_err(to_py)?;
        let weights = solve_el_weights(&residuals);
        Ok(Self { spec: spec.inner.clone(), residuals, weights, config, full_quadrature })
    }

    #[getter]
    fn residuals(&self) -> Vec<f64> {
        self.residuals.values().to_vec()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.weights.values().to_vec()
    }

    #[getter]
    fn lambda_(&self) -> f64 {
        self.weights.lambda()
    }

    #[getter]
    fn solved(&self) -> bool {
        self.weights.solved()
    }

    #[getter]
    fn bandwidth(&self) -> f64 {
        self.config.bandwidth(self.residuals.len())
    }

    /// Conditional distribution function; `lag = 2` gives `P(X_{n+2} <= t)`
    /// unless `u` is given, in which case it is the joint `P(X_{n+1} <= t, X_{n+2} <= u)`.
    #[pyo3(signature = (x, t, lag = 1, u = None, variant = "SW"))]
    fn cdf(&self, x: Vec<f64>, t: f64, lag: usize, u: Option<f64>, variant: &str) -> PyResult<f64> {
        let v: Variant = variant.parse().map_err(to_py)?;
        let target = match (lag, u) {
            (1, None) => Target::Cdf1(t),
            (2, None) => Target::Cdf2Marginal(t),
            (2, Some(u)) => Target::Cdf2Joint(t, u),
            _ => return Err(PyValueError::new_err("lag must be 1 or 2; u only applies to lag 2")),
        };
        self.with(|p| p.conditional_cdf(&x, &target, v)).map_err(to_py)
    }

    #[pyo3(signature = (x, prob, lag = 1, variant = "SW"))]
    fn quantile(&self, x: Vec<f64>, prob: f64, lag: usize, variant: &str) -> PyResult<f64> {
        let v: Variant = variant.parse().map_err(to_py)?;
        self.with(|p| p.conditional_quantile(&x, prob, lag, v)).map_err(to_py)
    }

    /// Lag-one expectation of a Python callable.
    #[pyo3(signature = (x, q, variant = "SW"))]
    fn expect(&self, x: Vec<f64>, q: Bound<'_, PyAny>, variant: &str) -> PyResult<f64> {
        let v: Variant = variant.parse().map_err(to_py)?;
        if x.len() != self.spec.order() {
            return Err(PyValueError::new_err("state length must equal the model order"));
        }
        let failure = std::cell::RefCell::new(None);
        let value = self.with(|p| {
            p.lag1(
                &x,
                |y| match q.call1((y,)).and_then(|r| r.extract::<f64>()) {
                    Ok(r) => r,
                    Err(e) => {
                        failure.borrow_mut().get_or_insert(e);
                        f64::NAN
                    }
                },
                v,
            )
        });
        match failure.into_inner() {
            Some(e) => Err(e),
            None => Ok(value),
        }
    }

    /// Evaluates a target string (`cdf:T`, `joint:T,U`, `quantile:P`, `moment:G`, `absmoment:G`)
    /// for each variant; returns `{variant: value}`.
    #[pyo3(signature = (x, target, lag = 1, variants = vec!["U".to_string(), "W".to_string(), "S".to_string(), "SW".to_string()]))]
    fn predict(&self, x: Vec<f64>, target: &str, lag: usize, variants: Vec<String>) -> PyResult<BTreeMap<String, f64>> {
        let task = PredictionTask::new(x, Target::parse(target, lag).map_err(to_py)?).map_err(to_py)?;
        let vs = self::variants(variants)?;
        let result = self.with(|p| p.predict(&task, &vs)).map_err(to_py)?;
        Ok(result.values.into_iter().map(|(k, v)| (k.to_string(), v)).collect())
    }
}

fn report(r: AsymptoticReport) -> BTreeMap<&'static str, f64> {
    BTreeMap::from([
        ("tau_sq", r.tau_sq),
        ("tau_w_sq", r.tau_w_sq),
        ("ratio", r.ratio),
        ("var_h", r.var_h),
        ("psi_term", r.psi_term),
        ("c_term", r.c_term),
    ])
}

#[pyfunction]
#[pyo3(signature = (theta, x, t, dist = "normal"))]
fn lag1_cdf_variances(theta: f64, x: f64, t: f64, dist: &str) -> PyResult<BTreeMap<&'static str, f64>> {
    Ok(report(asymptotics::lag1_cdf_variances(theta, x, t, self::dist(dist)?).map_err(to_py)?))
}

#[pyfunction]
#[pyo3(signature = (theta, x, u, dist = "normal"))]
fn lag2_cdf_variances(theta: f64, x: f64, u: f64, dist: &str) -> PyResult<BTreeMap<&'static str, f64>> {
    Ok(report(asymptotics::lag2_cdf_variances(theta, x, u, self::dist(dist)?).map_err(to_py)?))
}

/// Rows `(theta, x, tau_sq, tau_w_sq, ratio)`.
#[pyfunction]
#[pyo3(signature = (u, thetas, xs, dist = "normal"))]
fn efficiency_surface(u: f64, thetas: Vec<f64>, xs: Vec<f64>, dist: &str) -> PyResult<Vec<(f64, f64, f64, f64, f64)>> {
    let pts = asymptotics::efficiency_surface(u, self::dist(dist)?, &thetas, &xs).map_err(to_py)?;
    Ok(pts.iter().map(|p| (p.theta, p.x, p.tau_sq, p.tau_w_sq, p.ratio)).collect())
}

#[pyfunction]
#[pyo3(signature = (spec, x, target, lag = 1, dist = "normal"))]
fn true_value(spec: &PyModelSpec, x: Vec<f64>, target: &str, lag: usize, dist: &str) -> PyResult<f64> {
    let task = PredictionTask::new(x, Target::parse(target, lag).map_err(to_py)?).map_err(to_py)?;
    montecarlo::true_value(&spec.inner, self::dist(dist)?, &task).map_err(to_py)
}

/// Monte Carlo MSE table as CSV text.
#[pyfunction]
#[pyo3(signature = (reps, seed, dists = vec!["normal".to_string()], ns = vec![50, 100, 200], cs = vec![1.5, 1.75, 2.0, 2.25, 2.5, 2.75]))]
fn table1_csv(py: Python<'_>, reps: usize, seed: u64, dists: Vec<String>, ns: Vec<usize>, cs: Vec<f64>) -> PyResult<String> {
    let ds = dists.iter().map(|d| dist(d)).collect::<PyResult<Vec<_>>>()?;
    let table = py.detach(|| montecarlo::table1_with(reps, seed, &ds, &ns, &cs)).map_err(to_py)?;
    Ok(table.to_csv())
}

#[pymodule]
fn arpredict_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModelSpec>()?;
    m.add_class::<PyPredictor>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(fit_py, m)?)?;
    m.add_function(wrap_pyfunction!(solve_weights, m)?)?;
    m.add_function(wrap_pyfunction!(lag1_cdf_variances, m)?)?;
    m.add_function(wrap_pyfunction!(lag2_cdf_variances, m)?)?;
    m.add_function(wrap_pyfunction!(efficiency_surface, m)?)?;
    m.add_function(wrap_pyfunction!(true_value, m)?)?;
    m.add_function(wrap_pyfunction!(table1_csv, m)?)?;
    Ok(())
}
