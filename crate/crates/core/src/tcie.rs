//! Time consistency in efficiency: verdicts, thresholds and transition
//! probabilities of the two-piece policy.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::market::{Family, Market};
use crate::policy::{mu_star, two_piece_control};
use crate::sim::PathEnsemble;
use crate::solver::{Backend, RecursionTable};

/// Conditioning sets smaller than this are not compared.
pub const MIN_CONDITIONING_PATHS: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TcieReason {
    /// `P_t'K_t^+ ≤ 1` almost surely at every period: the density's
    /// conditional expectation never turns negative.
    Condition18,
    /// Wealth can cross the threshold, but `K_s^- = 0` afterwards so the
    /// negative conditional expectation is frozen.
    Condition19,
    Violated {
        first_period: usize,
        evidence: String,
    },
}

impl TcieReason {
    pub fn label(&self) -> &'static str {
        match self {
            TcieReason::Condition18 => "condition_18",
            TcieReason::Condition19 => "condition_19",
            TcieReason::Violated { .. } => "violated",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PeriodDiagnostics {
    pub t: usize,
    /// Essential supremum of `P_t'K_t^+`; `None` when unbounded.
    pub ess_sup_plus: Option<f64>,
    pub c_minus: f64,
    pub k_minus_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TcieVerdict {
    pub is_tcie: bool,
    pub reason: TcieReason,
    /// First period with `Pr(P_t'K_t^+ > 1) > 0`.
    pub flip_period: Option<usize>,
    pub periods: Vec<PeriodDiagnostics>,
}

/// Essential supremum of `P'K` over the support of period `t`.
fn ess_sup(market: &Market, t: usize, k: &nalgebra::DVector<f64>, zero_tol: f64) -> Option<f64> {
    let period = market.period(t);
    match &period.family {
        Family::Discrete { atoms } => Some(
            atoms.iter().map(|a| a.value.iter().zip(k.iter()).map(|(p, q)| p * q).sum::<f64>()).fold(f64::NEG_INFINITY, f64::max),
        ),
        _ => {
            let spread = (k.transpose() * &period.covariance * k)[(0, 0)];
            if k.norm() <= zero_tol || spread <= 0.0 {
                Some(period.mean.dot(k))
            } else {
                None
            }
        }
    }
}

pub fn check_tcie(table: &RecursionTable, market: &Market) -> Result<TcieVerdict> {
    let horizon = table.horizon();
    if market.horizon() != horizon {
        return Err(Error::DimensionMismatch { expected: horizon, got: market.horizon() });
    }
    let periods: Vec<PeriodDiagnostics> = (0..horizon)
        .map(|t| PeriodDiagnostics {
            t,
            ess_sup_plus: ess_sup(market, t, table.k_plus(t), table.periods[t].zero_tol),
            c_minus: table.c_minus(t),
            k_minus_norm: table.k_minus(t).norm(),
        })
        .collect();
    let flip = periods.iter().position(|p| p.ess_sup_plus.is_none_or(|s| s > 1.0));
    let Some(t_star) = flip else {
        return Ok(TcieVerdict { is_tcie: true, reason: TcieReason::Condition18, flip_period: None, periods });
    };
    let offending = ((t_star + 1)..horizon).find(|&s| periods[s].k_minus_norm > table.periods[s].zero_tol);
    let reason = match offending {
        None => TcieReason::Condition19,
        Some(s) => TcieReason::Violated {
            first_period: s,
            evidence: format!(
                "Pr(P'K^+ > 1) > 0 at t={t_star} but ‖K^-‖ = {:.3e} at t={s} (C^- = {:.6})",
                periods[s].k_minus_norm, periods[s].c_minus
            ),
        },
    };
    Ok(TcieVerdict { is_tcie: offending.is_none(), reason, flip_period: Some(t_star), periods })
}

/// Threshold wealth `(d − µ*)/ρ_t`.
pub fn threshold(table: &RecursionTable, x0: f64, d: f64, t: usize) -> Result<f64> {
    Ok((d - mu_star(table, x0, d)?) / table.rho(t))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TransitionProbs {
    /// `Pr(P'K^+ ≤ 1)`.
    pub plus_stay: f64,
    /// `Pr(P'K^+ > 1)`.
    pub plus_cross: f64,
    /// `Pr(P'K^- ≤ −1)`.
    pub minus_cross: f64,
    /// `Pr(P'K^- > −1)`.
    pub minus_stay: f64,
    /// Standard error of each estimate; zero for exact backends.
    pub standard_error_plus: f64,
    pub standard_error_minus: f64,
}

pub fn transition_probs(table: &RecursionTable, t: usize, backend: &Backend) -> Result<TransitionProbs> {
    if t >= table.horizon() || backend.horizon() != table.horizon() {
        return Err(Error::DimensionMismatch { expected: table.horizon(), got: t });
    }
    let set = backend.set(t);
    let (kp, km) = (table.k_plus(t), table.k_minus(t));
    let (mut plus_stay, mut minus_cross) = (0.0, 0.0);
    for (p, w) in set.iter() {
        let zp: f64 = p.iter().zip(kp.iter()).map(|(a, b)| a * b).sum();
        let zm: f64 = p.iter().zip(km.iter()).map(|(a, b)| a * b).sum();
        if zp <= 1.0 {
            plus_stay += w;
        }
        if zm <= -1.0 {
            minus_cross += w;
        }
    }
    let se = |q: f64| if backend.is_exact() { 0.0 } else { (q * (1.0 - q) / set.len() as f64).sqrt() };
    Ok(TransitionProbs {
        plus_stay,
        plus_cross: 1.0 - plus_stay,
        minus_cross,
        minus_stay: 1.0 - minus_cross,
        standard_error_plus: se(plus_stay),
        standard_error_minus: se(minus_cross),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TransitionCheck {
    pub t: usize,
    /// "below" (`d − µ* > ρ_t x_t`), "above" or "boundary".
    pub region: &'static str,
    pub paths: usize,
    /// Empirical frequency of staying in the region at `t + 1`.
    pub frequency: f64,
    pub expected: f64,
    pub standard_error: f64,
    /// `None` when fewer than `MIN_CONDITIONING_PATHS` paths condition.
    pub within_tolerance: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub passed: bool,
    pub checks: Vec<TransitionCheck>,
}

/// Compares empirical threshold-crossing frequencies of a pre-committed
/// ensemble with `transition_probs`, within four combined standard errors.
/// Boundary paths must stay on the boundary. Errors when no conditioning set
/// reaches `MIN_CONDITIONING_PATHS`.
pub fn conditional_consistency_check(
    ensemble: &PathEnsemble,
    table: &RecursionTable,
    backend: &Backend,
    d: f64,
    mu_star: f64,
) -> Result<ConsistencyReport> {
    let shifted = d - mu_star;
    let horizon = table.horizon();
    let mut checks = Vec::new();
    for t in ensemble.start()..horizon {
        let probs = transition_probs(table, t, backend)?;
        let counts = ensemble.map_path_chunks(|range| {
            let mut c = [[0usize; 2]; 3];
            for i in range {
                let (now, next) = (table.rho(t) * ensemble.wealth(i, t), table.rho(t + 1) * ensemble.wealth(i, t + 1));
                let (region, stay) = if shifted > now {
                    (0, shifted >= next)
                } else if shifted < now {
                    (1, shifted < next)
                } else {
                    (2, shifted == next)
                };
                c[region][0] += 1;
                c[region][1] += usize::from(stay);
            }
            c
        });
        let mut c = [[0usize; 2]; 3];
        for part in counts {
            for r in 0..3 {
                c[r][0] += part[r][0];
                c[r][1] += part[r][1];
            }
        }
        let regions = [
            ("below", probs.plus_stay, probs.standard_error_plus),
            ("above", probs.minus_stay, probs.standard_error_minus),
            ("boundary", 1.0, 0.0),
        ];
        for (r, (name, expected, model_se)) in regions.into_iter().enumerate() {
            let [paths, stay] = c[r];
            if paths == 0 {
                continue;
            }
            let freq = stay as f64 / paths as f64;
            let emp_se = (expected * (1.0 - expected) / paths as f64).sqrt();
            let se = (emp_se * emp_se + model_se * model_se).sqrt();
            let within = if r == 2 {
                Some(stay == paths)
            } else if paths >= MIN_CONDITIONING_PATHS {
                Some((freq - expected).abs() <= 4.0 * se + 1e-12)
            } else {
                None
            };
            checks.push(TransitionCheck {
                t,
                region: name,
                paths,
                frequency: freq,
                expected,
                standard_error: se,
                within_tolerance: within,
            });
        }
    }
    if !checks.iter().any(|c| c.within_tolerance.is_some() && c.region != "boundary") {
        return Err(Error::InsufficientConditioningEvents(format!("no conditioning set reached {MIN_CONDITIONING_PATHS} paths")));
    }
    let passed = checks.iter().all(|c| c.within_tolerance != Some(false));
    Ok(ConsistencyReport { passed, checks })
}

/// Exhaustive check on a discrete scenario tree: every reachable node
/// `(t, x_t)`, `1 ≤ t < T`, must satisfy `d − µ* ≥ ρ_t x_t` or `C_t^- = 1`.
/// Returns the first offending period, if any.
pub fn node_by_node_violation(table: &RecursionTable, market: &Market, x0: f64, d: f64) -> Result<Option<usize>> {
    let mu = mu_star(table, x0, d)?;
    let shifted = d - mu;
    let horizon = table.horizon();
    let mut level = vec![x0];
    for t in 0..horizon {
        if t >= 1 {
            let bad = level.iter().any(|&x| shifted < table.rho(t) * x) && table.c_minus(t) < 1.0;
            if bad {
                return Ok(Some(t));
            }
        }
        if t + 1 == horizon {
            break;
        }
        let Family::Discrete { atoms } = &market.period(t).family else {
            return Err(Error::BackendMismatch(format!("period {t} is not discrete")));
        };
        let mut next = Vec::with_capacity(level.len() * atoms.len());
        for &x in &level {
            let u = two_piece_control(table, t, x, shifted);
            for a in atoms {
                let gain: f64 = a.value.iter().zip(u.iter()).map(|(p, q)| p * q).sum();
                next.push(market.riskless(t) * x + gain);
            }
        }
        level = next;
    }
    Ok(None)
}
