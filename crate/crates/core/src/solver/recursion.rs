//! Backward recursion for `K_t^±` and `C_t^±`.

use nalgebra::DVector;

use super::backend::Backend;
use super::objective::{eval_linear, NextCosts, Sign};
use super::optimize::{minimize_over_cone, MinimizeDiagnostics, SolverOptions};
use crate::cones::ConvexCone;
use crate::error::{Error, Result};
use crate::market::Market;

#[derive(Clone, Debug, PartialEq)]
pub struct PeriodSolution {
    pub k_plus: DVector<f64>,
    pub k_minus: DVector<f64>,
    pub c_plus: f64,
    pub c_minus: f64,
    /// Piecewise-quadratic values `h^±(K^±)` at the optimum.
    pub h_plus: f64,
    pub h_minus: f64,
    pub diag_plus: MinimizeDiagnostics,
    pub diag_minus: MinimizeDiagnostics,
    pub zero_tol: f64,
}

/// Output of the backward recursion; `C_T^± = 1` is implicit.
#[derive(Clone, Debug, PartialEq)]
pub struct RecursionTable {
    pub periods: Vec<PeriodSolution>,
    pub riskless: Vec<f64>,
    pub rho: Vec<f64>,
    pub backend: String,
}

impl RecursionTable {
    pub fn horizon(&self) -> usize {
        self.periods.len()
    }

    pub fn n_assets(&self) -> usize {
        self.periods[0].k_plus.len()
    }

    pub fn c_plus(&self, t: usize) -> f64 {
        self.periods.get(t).map_or(1.0, |p| p.c_plus)
    }

    pub fn c_minus(&self, t: usize) -> f64 {
        self.periods.get(t).map_or(1.0, |p| p.c_minus)
    }

    pub fn c(&self, t: usize, sign: Sign) -> f64 {
        match sign {
            Sign::Plus => self.c_plus(t),
            Sign::Minus => self.c_minus(t),
        }
    }

    pub fn k_plus(&self, t: usize) -> &DVector<f64> {
        &self.periods[t].k_plus
    }

    pub fn k_minus(&self, t: usize) -> &DVector<f64> {
        &self.periods[t].k_minus
    }

    pub fn rho(&self, t: usize) -> f64 {
        self.rho[t]
    }

    pub fn riskless(&self, t: usize) -> f64 {
        self.riskless[t]
    }

    /// `C_t^- = 1`; exact because `K = 0` periods copy `C_{t+1}` verbatim.
    pub fn c_minus_is_one(&self, t: usize) -> bool {
        self.c_minus(t) >= 1.0
    }

    /// Checks `0 < C_t^± ≤ C_{t+1}^±` with equality iff `K_t^± = 0`.
    /// Returns a description of every violation.
    pub fn cost_bound_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for t in 0..self.horizon() {
            let zt = self.periods[t].zero_tol;
            for sign in [Sign::Plus, Sign::Minus] {
                let (c, cn) = (self.c(t, sign), self.c(t + 1, sign));
                let k = match sign {
                    Sign::Plus => self.k_plus(t),
                    Sign::Minus => self.k_minus(t),
                };
                if !(c > 0.0) {
                    out.push(format!("t={t} C{}={c} not positive", sign.symbol()));
                }
                if c > cn {
                    out.push(format!("t={t} C{}={c} exceeds next {cn}", sign.symbol()));
                }
                let zero = k.norm() <= zt;
                if zero != (c == cn) {
                    out.push(format!("t={t} C{} equality ({c} vs {cn}) disagrees with ‖K‖={:.3e}", sign.symbol(), k.norm()));
                }
            }
        }
        out
    }
}

pub fn default_zero_tol(market: &Market, t: usize) -> f64 {
    1e-7 * (1.0 + market.unconstrained_portfolio(t).norm())
}

/// Solves `K_t^±` and `C_t^±` for `t = T−1, …, 0`. `cones` holds one cone per
/// period.
pub fn backward_recursion(
    market: &Market,
    cones: &[ConvexCone],
    backend: &Backend,
    opts: &SolverOptions,
) -> Result<RecursionTable> {
    let horizon = market.horizon();
    if cones.len() != horizon {
        return Err(Error::DimensionMismatch { expected: horizon, got: cones.len() });
    }
    if backend.horizon() != horizon {
        return Err(Error::BackendMismatch(format!("backend covers {} periods, market {horizon}", backend.horizon())));
    }
    let n = market.n_assets();
    for c in cones {
        if c.dim() != n {
            return Err(Error::DimensionMismatch { expected: n, got: c.dim() });
        }
    }
    let mut periods: Vec<PeriodSolution> = Vec::with_capacity(horizon);
    let mut next = NextCosts::TERMINAL;
    for t in (0..horizon).rev() {
        let zero_tol = opts.zero_tol.unwrap_or_else(|| default_zero_tol(market, t));
        let cone = &cones[t];
        let set = backend.set(t);
        let sol = if cone.is_origin_only(&opts.projection)? {
            PeriodSolution {
                k_plus: DVector::zeros(n),
                k_minus: DVector::zeros(n),
                c_plus: next.plus,
                c_minus: next.minus,
                h_plus: next.plus,
                h_minus: next.minus,
                diag_plus: MinimizeDiagnostics::default(),
                diag_minus: MinimizeDiagnostics::default(),
                zero_tol,
            }
        } else {
            let solve = |sign: Sign| -> Result<(DVector<f64>, f64, f64, MinimizeDiagnostics)> {
                let m = minimize_over_cone(set, sign, cone, next, opts, None)?;
                if m.k.norm() <= zero_tol {
                    let c = next.get(sign);
                    return Ok((DVector::zeros(n), c, c, m.diagnostics));
                }
                let (linear, se) = eval_linear(set, sign, &m.k, next);
                let cross = opts.cross_tol.unwrap_or(if backend.is_exact() { 1e-6 } else { (3.0 * se).max(1e-12) });
                if (m.value - linear).abs() > cross {
                    return Err(Error::ConsistencyError { t, quadratic: m.value, linear });
                }
                Ok((m.k, linear, m.value, m.diagnostics))
            };
            let (k_plus, c_plus, h_plus, diag_plus) = solve(Sign::Plus)?;
            let (k_minus, c_minus, h_minus, diag_minus) = solve(Sign::Minus)?;
            PeriodSolution { k_plus, k_minus, c_plus, c_minus, h_plus, h_minus, diag_plus, diag_minus, zero_tol }
        };
        next = NextCosts::new(sol.c_plus, sol.c_minus);
        periods.push(sol);
    }
    periods.reverse();
    Ok(RecursionTable {
        periods,
        riskless: (0..horizon).map(|t| market.riskless(t)).collect(),
        rho: market.rhos().to_vec(),
        backend: backend.mode().label(),
    })
}

/// `J_t(y) = ½ ρ_t² [C_t^+ y² 1{y ≤ 0} + C_t^- y² 1{y > 0}]`.
pub fn value_function(table: &RecursionTable, t: usize, y: f64) -> f64 {
    let c = if y <= 0.0 { table.c_plus(t) } else { table.c_minus(t) };
    0.5 * table.rho(t).powi(2) * c * y * y
}

/// Lagrangian dual `g(μ)`, concave and continuously differentiable.
pub fn dual_value(table: &RecursionTable, x0: f64, d: f64, mu: f64) -> f64 {
    let a = d - table.rho(0) * x0;
    let c = if mu <= a { table.c_plus(0) } else { table.c_minus(0) };
    c * (a - mu).powi(2) - mu * mu
}
