//! Wealth-feedback policies built from a solved recursion, the efficient
//! frontier and the time-consistent benchmark.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::market::Market;
use crate::solver::RecursionTable;

/// Tolerance for declaring `C = 1` on a branch.
const UNIT_COST_TOL: f64 = 1e-12;

/// Lagrange shift `µ` for the problem started at period `k` with wealth `x_k`
/// and target `d`. `k = 0` gives the usual `µ*`.
pub fn mu_star_at(table: &RecursionTable, k: usize, x_k: f64, d: f64) -> Result<f64> {
    let gap = d - table.rho(k) * x_k;
    if gap == 0.0 {
        return Ok(0.0);
    }
    let (c, branch) = if gap > 0.0 { (table.c_plus(k), "upper") } else { (table.c_minus(k), "lower") };
    if c >= 1.0 - UNIT_COST_TOL {
        return Err(Error::TargetUnattainable { target: d, branch });
    }
    Ok(gap / (1.0 - 1.0 / c))
}

pub fn mu_star(table: &RecursionTable, x0: f64, d: f64) -> Result<f64> {
    mu_star_at(table, 0, x0, d)
}

#[derive(Clone, Debug, PartialEq)]
pub enum PolicyKind {
    Precommitted,
    MinimumVariance,
    TimeConsistent,
    /// The optimal policy of the problem started at period `start` with the
    /// given wealth and target.
    Truncated {
        start: usize,
        wealth: f64,
        target: f64,
    },
}

impl PolicyKind {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::Precommitted => "precommitted",
            PolicyKind::MinimumVariance => "minimum_variance",
            PolicyKind::TimeConsistent => "time_consistent",
            PolicyKind::Truncated { .. } => "truncated",
        }
    }
}

/// Unconstrained benchmark data: `B_t`, `D_t = ∏_{j≥t} (1 − B_j)/B_j` and the
/// unconstrained portfolios.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeConsistentAux {
    pub b: Vec<f64>,
    pub d_factor: Vec<f64>,
    pub portfolios: Vec<DVector<f64>>,
    pub rho: Vec<f64>,
}

impl TimeConsistentAux {
    pub fn new(market: &Market) -> Result<Self> {
        let horizon = market.horizon();
        let b: Vec<f64> = (0..horizon).map(|t| market.b(t)).collect();
        if let Some(t) = b.iter().position(|&v| !(v > 0.0 && v < 1.0)) {
            return Err(Error::InvalidMarket(format!("period {t}: B = {} outside (0, 1)", b[t])));
        }
        let mut d_factor = vec![1.0; horizon + 1];
        for t in (0..horizon).rev() {
            d_factor[t] = d_factor[t + 1] * (1.0 - b[t]) / b[t];
        }
        Ok(Self {
            b,
            d_factor,
            portfolios: (0..horizon).map(|t| market.unconstrained_portfolio(t).clone()).collect(),
            rho: market.rhos().to_vec(),
        })
    }

    pub fn horizon(&self) -> usize {
        self.b.len()
    }

    /// `ū_t = −E⁻¹[PP']E[P] (x_t ρ_t − d)/(B_t ρ_{t+1})`.
    pub fn control(&self, t: usize, x: f64, d: f64) -> DVector<f64> {
        let scale = -(x * self.rho[t] - d) / (self.b[t] * self.rho[t + 1]);
        &self.portfolios[t] * scale
    }
}

/// A wealth-feedback rule together with the data it was built from.
#[derive(Clone, Debug)]
pub struct Policy {
    kind: PolicyKind,
    table: RecursionTable,
    x0: f64,
    d: f64,
    /// Lagrange shift of the (possibly truncated) problem.
    mu: f64,
    tc: Option<TimeConsistentAux>,
}

impl Policy {
    pub fn precommitted(table: &RecursionTable, x0: f64, d: f64) -> Result<Self> {
        let mu = mu_star(table, x0, d)?;
        Ok(Self { kind: PolicyKind::Precommitted, table: table.clone(), x0, d, mu, tc: None })
    }

    pub fn minimum_variance(table: &RecursionTable, x0: f64) -> Self {
        let d = table.rho(0) * x0;
        Self { kind: PolicyKind::MinimumVariance, table: table.clone(), x0, d, mu: 0.0, tc: None }
    }

    /// The benchmark is defined for the unconstrained market only; `table` is
    /// kept for `ρ` and reporting.
    pub fn time_consistent(table: &RecursionTable, market: &Market, x0: f64, d: f64) -> Result<Self> {
        if d < table.rho(0) * x0 {
            return Err(Error::InvalidTarget(format!("target {d} below riskless growth {}", table.rho(0) * x0)));
        }
        let tc = TimeConsistentAux::new(market)?;
        Ok(Self { kind: PolicyKind::TimeConsistent, table: table.clone(), x0, d, mu: 0.0, tc: Some(tc) })
    }

    /// Optimal policy of the truncated problem from `(k, x_k)` with target `d_k`.
    pub fn truncated(table: &RecursionTable, k: usize, x_k: f64, d_k: f64) -> Result<Self> {
        if k >= table.horizon() {
            return Err(Error::InvalidTarget(format!("truncation period {k} not before horizon {}", table.horizon())));
        }
        let mu = mu_star_at(table, k, x_k, d_k)?;
        Ok(Self {
            kind: PolicyKind::Truncated { start: k, wealth: x_k, target: d_k },
            table: table.clone(),
            x0: x_k,
            d: d_k,
            mu,
            tc: None,
        })
    }

    pub fn kind(&self) -> &PolicyKind {
        &self.kind
    }

    pub fn table(&self) -> &RecursionTable {
        &self.table
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn target(&self) -> f64 {
        self.d
    }

    pub fn mu_star(&self) -> f64 {
        self.mu
    }

    /// `d − µ*`, the shifted target defining the wealth threshold.
    pub fn shifted_target(&self) -> f64 {
        self.d - self.mu
    }

    /// First period the rule applies to.
    pub fn start(&self) -> usize {
        match self.kind {
            PolicyKind::Truncated { start, .. } => start,
            _ => 0,
        }
    }

    /// Threshold wealth `(d − µ*)/ρ_t`.
    pub fn threshold(&self, t: usize) -> f64 {
        self.shifted_target() / self.table.rho(t)
    }

    pub fn control(&self, t: usize, x: f64) -> DVector<f64> {
        let n = self.table.n_assets();
        match self.kind {
            PolicyKind::MinimumVariance => DVector::zeros(n),
            PolicyKind::TimeConsistent => self.tc.as_ref().expect("built with aux").control(t, x, self.d),
            PolicyKind::Precommitted | PolicyKind::Truncated { .. } => {
                two_piece_control(&self.table, t, x, self.shifted_target())
            }
        }
    }

    pub fn time_consistent_aux(&self) -> Option<&TimeConsistentAux> {
        self.tc.as_ref()
    }
}

/// `s_t K^+ (D/ρ_t − x)` below the threshold, `−s_t K^- (D/ρ_t − x)` above it.
pub fn two_piece_control(table: &RecursionTable, t: usize, x: f64, shifted: f64) -> DVector<f64> {
    let gap = shifted / table.rho(t) - x;
    let s = table.riskless(t);
    if shifted >= table.rho(t) * x {
        table.k_plus(t) * (s * gap)
    } else {
        table.k_minus(t) * (-s * gap)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrontierPoint {
    pub mean: f64,
    pub variance: f64,
    /// False on the lower branch of the minimum-variance set.
    pub efficient: bool,
}

/// Minimum variance for expected terminal wealth `mean`.
pub fn frontier_point(table: &RecursionTable, x0: f64, mean: f64) -> Result<FrontierPoint> {
    let gap = mean - table.rho(0) * x0;
    if gap == 0.0 {
        return Ok(FrontierPoint { mean, variance: 0.0, efficient: true });
    }
    let (c, branch, efficient) = if gap > 0.0 { (table.c_plus(0), "upper", true) } else { (table.c_minus(0), "lower", false) };
    if c >= 1.0 - UNIT_COST_TOL {
        return Err(Error::TargetUnattainable { target: mean, branch });
    }
    Ok(FrontierPoint { mean, variance: c * gap * gap / (1.0 - c), efficient })
}

/// Variance of the time-consistent policy, `(E − x₀ρ₀)² D₀`.
pub fn tc_frontier_point(aux: &TimeConsistentAux, x0: f64, mean: f64) -> Result<f64> {
    let base = x0 * aux.rho[0];
    if mean < base {
        return Err(Error::InvalidTarget(format!("mean {mean} below riskless growth {base}")));
    }
    Ok((mean - base).powi(2) * aux.d_factor[0])
}

/// Target `d_k` for which the truncated problem at `(k, x_k)` shares the
/// shifted target `d − µ*`, and whether that truncation is efficient.
pub fn induced_target(table: &RecursionTable, k: usize, x_k: f64, d: f64, mu_star: f64) -> (f64, bool) {
    let shifted = d - mu_star;
    let level = table.rho(k) * x_k;
    let c = if shifted >= level { table.c_plus(k) } else { table.c_minus(k) };
    let d_k = (1.0 - c) * shifted + c * level;
    let efficient = d_k >= level || table.c_minus(k) >= 1.0 - UNIT_COST_TOL;
    (d_k, efficient)
}
