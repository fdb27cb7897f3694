//! Python bindings: configure and solve a market, then query the recursion
//! table, the frontier, the TCIE verdict and simulated statistics.

use std::collections::HashMap;

use conemv::cli::{exit_code, table_json, RunConfig, Session, EXIT_CONFIG};
use conemv::market::Family;
use conemv::policy::{frontier_point, mu_star, tc_frontier_point, Policy, TimeConsistentAux};
use conemv::sim::{exceedance_prob, simulate, terminal_stats};
use conemv::{presets, tcie, Error};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: Error) -> PyErr {
    if exit_code(&e) == EXIT_CONFIG {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

/// JSON config for one of the three example cones (1 unconstrained,
/// 2 half-space, 3 polyhedral) under `"gaussian"` or `"student_t"` returns.
#[pyfunction]
#[pyo3(signature = (case, family = "gaussian", samples = 1_000_000, seed = 7))]
fn example_config(case: u8, family: &str, samples: usize, seed: u64) -> PyResult<String> {
    let cone = match case {
        1 => presets::case1_cone(),
        2 => presets::case2_cone(),
        3 => presets::case3_cone(),
        _ => return Err(PyValueError::new_err(format!("case must be 1, 2 or 3, got {case}"))),
    };
    let mut market = serde_json::json!({
        "horizon": presets::HORIZON,
        "riskless_rates": [presets::RISKLESS],
        "annual": {
            "expected_returns": presets::EXPECTED_RETURNS,
            "volatilities": presets::VOLATILITIES,
            "correlations": presets::CORRELATIONS.chunks(3).collect::<Vec<_>>(),
        },
    });
    match family {
        "gaussian" => market["family"] = "gaussian".into(),
        "student_t" => {
            market["family"] = "student_t".into();
            market["df"] = 5.into();
        }
        other => return Err(PyValueError::new_err(format!("unknown family {other:?}"))),
    }
    let config = serde_json::json!({
        "market": market,
        "cones": conemv::cli::ConeConfig::from_cone(&cone),
        "policy": {"x0": presets::X0, "d": presets::TARGET},
        "numerics": {"backend": "saa", "samples": samples, "seed": seed},
    });
    Ok(config.to_string())
}

/// A solved market: validated inputs plus the backward-recursion table.
#[pyclass(name = "Model", frozen)]
struct PyModel {
    session: Session,
}

#[pymethods]
impl PyModel {
    /// Parses a JSON config (same schema as the command line) and solves it.
    #[new]
    fn new(py: Python<'_>, config: &str) -> PyResult<Self> {
        let config = RunConfig::from_json(config).map_err(py_err)?;
        let session = py.detach(|| Session::solve(config)).map_err(py_err)?;
        Ok(Self { session })
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.session.table.horizon()
    }

    #[getter]
    fn n_assets(&self) -> usize {
        self.session.table.n_assets()
    }

    fn k_plus(&self, t: usize) -> PyResult<Vec<f64>> {
        self.check_period(t)?;
        Ok(self.session.table.k_plus(t).iter().copied().collect())
    }

    fn k_minus(&self, t: usize) -> PyResult<Vec<f64>> {
        self.check_period(t)?;
        Ok(self.session.table.k_minus(t).iter().copied().collect())
    }

    /// `C_t^+`; equals 1 for `t = T`.
    fn c_plus(&self, t: usize) -> f64 {
        self.session.table.c_plus(t)
    }

    fn c_minus(&self, t: usize) -> f64 {
        self.session.table.c_minus(t)
    }

    fn table_json(&self) -> String {
        table_json(&self.session.table).to_string()
    }

    fn mu_star(&self, x0: f64, d: f64) -> PyResult<f64> {
        mu_star(&self.session.table, x0, d).map_err(py_err)
    }

    /// `(mean, precommitted variance, time-consistent variance)` per mean;
    /// unattainable entries are `None`.
    #[pyo3(signature = (means, x0 = 1.0))]
    fn frontier(&self, means: Vec<f64>, x0: f64) -> Vec<(f64, Option<f64>, Option<f64>)> {
        let aux = TimeConsistentAux::new(&self.session.market).ok();
        means
            .into_iter()
            .map(|m| {
                let pre = frontier_point(&self.session.table, x0, m).ok().map(|p| p.variance);
                let tc = aux.as_ref().and_then(|a| tc_frontier_point(a, x0, m).ok());
                (m, pre, tc)
            })
            .collect()
    }

    /// `(is_tcie, reason, flip_period)`.
    fn tcie(&self) -> PyResult<(bool, String, Option<usize>)> {
        let v = tcie::check_tcie(&self.session.table, &self.session.market).map_err(py_err)?;
        Ok((v.is_tcie, v.reason.label().to_string(), v.flip_period))
    }

    /// Simulates the pre-committed policy and returns terminal statistics and
    /// the threshold exceedance probability.
    #[pyo3(signature = (x0, d, paths = 100_000, seed = 7))]
    fn simulate(&self, py: Python<'_>, x0: f64, d: f64, paths: usize, seed: u64) -> PyResult<HashMap<String, f64>> {
        let s = &self.session;
        py.detach(|| {
            let policy = Policy::precommitted(&s.table, x0, d)?;
            let ens = simulate(&policy, &s.market, paths, seed)?;
            let stats = terminal_stats(&ens);
            let th: Vec<f64> = (0..=s.market.horizon()).map(|t| policy.threshold(t)).collect();
            let ex = exceedance_prob(&ens, &th)?;
            Ok(HashMap::from([
                ("mu_star".to_string(), policy.mu_star()),
                ("mean".to_string(), stats.mean),
                ("variance".to_string(), stats.variance),
                ("mean_se".to_string(), stats.mean_se),
                ("variance_se".to_string(), stats.variance_se),
                ("exceedance".to_string(), ex.probability),
                ("exceedance_se".to_string(), ex.standard_error),
            ]))
        })
        .map_err(py_err)
    }
}

impl PyModel {
    fn check_period(&self, t: usize) -> PyResult<()> {
        if t < self.session.table.horizon() {
            Ok(())
        } else {
            Err(PyValueError::new_err(format!("period {t} out of range 0..{}", self.session.table.horizon())))
        }
    }
}

/// `E⁻¹[PP']E[P]` for the example market, first period.
#[pyfunction]
#[pyo3(signature = (family = "gaussian"))]
fn example_unconstrained_portfolio(family: &str) -> PyResult<Vec<f64>> {
    let family = match family {
        "gaussian" => Family::Gaussian,
        "student_t" => Family::StudentT { df: 5 },
        other => return Err(PyValueError::new_err(format!("unknown family {other:?}"))),
    };
    let market = presets::example_market(family).validate().map_err(py_err)?;
    Ok(market.unconstrained_portfolio(0).iter().copied().collect())
}

#[pymodule]
#[pyo3(name = "conemv")]
fn conemv_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(example_config, m)?)?;
    m.add_function(wrap_pyfunction!(example_unconstrained_portfolio, m)?)?;
    Ok(())
}
