//! Minimum-variance signed supermartingale measure: density along paths, its
//! conditional expectations, exact tree moments and the wealth duality.

use nalgebra::DVector;
use serde::Serialize;

use crate::cones::ConvexCone;
use crate::error::{Error, Result};
use crate::market::{Family, Market};
use crate::policy::Policy;
use crate::sim::PathEnsemble;
use crate::solver::{RecursionTable, Sign};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DensityPath {
    pub b_factors: Vec<f64>,
    /// `∏_{j≤i} B_j`.
    pub partial_products: Vec<f64>,
    pub density: f64,
    /// `m_{i+1} = E[dP̃/dP | F_{i+1}] / E[dP̃/dP | F_i]`.
    pub step_ratios: Vec<f64>,
}

fn dot(a: &[f64], b: &DVector<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Branch taken by a running product: ties at zero use the `≥ 0` branch.
pub fn branch_of(product: f64) -> Sign {
    if product >= 0.0 {
        Sign::Plus
    } else {
        Sign::Minus
    }
}

/// `B_t` for a return `p` given the sign of the running product before `t`.
pub fn b_factor(table: &RecursionTable, t: usize, p: &[f64], branch: Sign) -> f64 {
    match branch {
        Sign::Plus => 1.0 - dot(p, table.k_plus(t)),
        Sign::Minus => 1.0 + dot(p, table.k_minus(t)),
    }
}

pub fn density_along_path<R: AsRef<[f64]>>(table: &RecursionTable, returns: &[R]) -> Result<DensityPath> {
    let horizon = table.horizon();
    if returns.len() != horizon {
        return Err(Error::DimensionMismatch { expected: horizon, got: returns.len() });
    }
    let mut b_factors = Vec::with_capacity(horizon);
    let mut partial_products = Vec::with_capacity(horizon);
    let mut step_ratios = Vec::with_capacity(horizon);
    let mut prod = 1.0;
    for (t, p) in returns.iter().enumerate() {
        let p = p.as_ref();
        if p.len() != table.n_assets() {
            return Err(Error::DimensionMismatch { expected: table.n_assets(), got: p.len() });
        }
        let prev = branch_of(prod);
        let b = b_factor(table, t, p, prev);
        prod *= b;
        b_factors.push(b);
        partial_products.push(prod);
        step_ratios.push(b * table.c(t + 1, branch_of(prod)) / table.c(t, prev));
    }
    Ok(DensityPath { b_factors, partial_products, density: prod / table.c_plus(0), step_ratios })
}

/// `E[dP̃/dP | F_t] = (C_0^+)⁻¹ ∏_{i<t} B_i C_t^{branch}` from the first `t`
/// factors of a path.
pub fn conditional_expectation(table: &RecursionTable, b_prefix: &[f64]) -> f64 {
    let prod: f64 = b_prefix.iter().product();
    prod * table.c(b_prefix.len(), branch_of(prod)) / table.c_plus(0)
}

/// Terminal wealth of the pre-committed policy recovered from the density.
pub fn duality_terminal_wealth(policy: &Policy, path: &DensityPath) -> f64 {
    let shifted = policy.shifted_target();
    let base = policy.x0() * policy.table().rho(0);
    shifted - (shifted - base) * policy.table().c_plus(0) * path.density
}

/// Wealth `x_t = D/ρ_t − (D − x₀ρ₀)/ρ_t ∏_{i<t} B_i` for `t = 0..=T`.
pub fn duality_wealth_path(policy: &Policy, path: &DensityPath) -> Vec<f64> {
    let table = policy.table();
    let shifted = policy.shifted_target();
    let base = policy.x0() * table.rho(0);
    let mut out = Vec::with_capacity(path.b_factors.len() + 1);
    out.push((shifted - (shifted - base)) / table.rho(0));
    for (t, &prod) in path.partial_products.iter().enumerate() {
        let r = table.rho(t + 1);
        out.push(shifted / r - (shifted - base) / r * prod);
    }
    out
}

/// Exact tail expectations on a discrete market, computed by dynamic
/// programming over the running-product sign: `first[t][σ] = E[∏_{i≥t} B_i]`
/// and `second[t][σ] = E[∏_{i≥t} B_i²]` when the product entering `t` has
/// sign `σ` (index 0 for `≥ 0`, 1 for `< 0`).
#[derive(Clone, Debug, PartialEq)]
pub struct TreeMoments {
    pub first: Vec<[f64; 2]>,
    pub second: Vec<[f64; 2]>,
    /// Signs reachable with positive probability entering each period.
    pub reachable: Vec<[bool; 2]>,
}

fn sign_index(s: Sign) -> usize {
    match s {
        Sign::Plus => 0,
        Sign::Minus => 1,
    }
}

const SIGNS: [Sign; 2] = [Sign::Plus, Sign::Minus];

fn atoms(market: &Market, t: usize) -> Result<&[crate::market::Atom]> {
    match &market.period(t).family {
        Family::Discrete { atoms } => Ok(atoms),
        other => Err(Error::BackendMismatch(format!("exact tree moments need discrete laws; period {t} is {}", other.name()))),
    }
}

/// Sign after multiplying a running product of sign `s` by `b`.
fn next_sign(s: Sign, b: f64) -> Sign {
    if b == 0.0 || (b > 0.0) == (s == Sign::Plus) {
        Sign::Plus
    } else {
        Sign::Minus
    }
}

pub fn tree_moments(table: &RecursionTable, market: &Market) -> Result<TreeMoments> {
    let horizon = table.horizon();
    let mut first = vec![[1.0, 1.0]; horizon + 1];
    let mut second = vec![[1.0, 1.0]; horizon + 1];
    for t in (0..horizon).rev() {
        let atoms = atoms(market, t)?;
        for s in SIGNS {
            let (mut f, mut q) = (0.0, 0.0);
            for a in atoms {
                let b = b_factor(table, t, &a.value, s);
                let ns = sign_index(next_sign(s, b));
                f += a.prob * b * first[t + 1][ns];
                q += a.prob * b * b * second[t + 1][ns];
            }
            first[t][sign_index(s)] = f;
            second[t][sign_index(s)] = q;
        }
    }
    let mut reachable = vec![[false, false]; horizon + 1];
    reachable[0][0] = true;
    for t in 0..horizon {
        let atoms = atoms(market, t)?;
        for s in SIGNS {
            if !reachable[t][sign_index(s)] {
                continue;
            }
            for a in atoms {
                let b = b_factor(table, t, &a.value, s);
                reachable[t + 1][sign_index(next_sign(s, b))] = true;
            }
        }
    }
    Ok(TreeMoments { first, second, reachable })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExactDensityMoments {
    pub mean: f64,
    pub second_moment: f64,
    pub theoretical_second_moment: f64,
}

pub fn exact_density_moments(table: &RecursionTable, market: &Market) -> Result<ExactDensityMoments> {
    let tm = tree_moments(table, market)?;
    let c0 = table.c_plus(0);
    Ok(ExactDensityMoments {
        mean: tm.first[0][0] / c0,
        second_moment: tm.second[0][0] / (c0 * c0),
        theoretical_second_moment: 1.0 / c0,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SupermartingaleNode {
    pub t: usize,
    /// Sign of the running product at the node: "+" for `≥ 0`, "-" otherwise.
    pub branch: &'static str,
    /// `E[dP̃/dP · P_t | node]` divided by `|∏_{i<t} B_i| / C_0^+`.
    pub vector: Vec<f64>,
    pub polar_distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SupermartingaleReport {
    pub passed: bool,
    pub nodes: Vec<SupermartingaleNode>,
}

/// Checks `E[dP̃/dP · P_t | F_t] ∈ A_t^⊥` at every reachable node class of a
/// discrete market. Nodes sharing the running-product sign have conditional
/// vectors that differ only by a positive factor, so one representative per
/// sign is exact.
pub fn supermartingale_check(
    table: &RecursionTable,
    market: &Market,
    cones: &[ConvexCone],
    t: usize,
    tol: f64,
) -> Result<SupermartingaleReport> {
    if t >= table.horizon() {
        return Err(Error::DimensionMismatch { expected: table.horizon(), got: t });
    }
    if cones.len() != table.horizon() {
        return Err(Error::DimensionMismatch { expected: table.horizon(), got: cones.len() });
    }
    let tm = tree_moments(table, market)?;
    let atoms = atoms(market, t)?;
    let n = table.n_assets();
    let mut nodes = Vec::new();
    let mut passed = true;
    for s in SIGNS {
        if !tm.reachable[t][sign_index(s)] {
            continue;
        }
        let mut v = DVector::zeros(n);
        for a in atoms {
            let b = b_factor(table, t, &a.value, s);
            let w = a.prob * b * tm.first[t + 1][sign_index(next_sign(s, b))];
            for j in 0..n {
                v[j] += w * a.value[j];
            }
        }
        if s == Sign::Minus {
            v = -v;
        }
        let dist = cones[t].polar_distance(&v)?;
        passed &= dist <= tol;
        nodes.push(SupermartingaleNode { t, branch: s.symbol(), vector: v.iter().copied().collect(), polar_distance: dist });
    }
    Ok(SupermartingaleReport { passed, nodes })
}

/// Monte Carlo moments of the density over a simulated ensemble.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DensityReport {
    pub n_paths: usize,
    pub mean_density: f64,
    pub mean_se: f64,
    pub second_moment: f64,
    pub second_moment_se: f64,
    pub theoretical_second_moment: f64,
    pub zero_density_paths: usize,
    /// Fraction of paths with negative `E[dP̃/dP | F_t]`, `t = 0..=T`.
    pub negative_fraction: Vec<f64>,
}

pub fn density_report(table: &RecursionTable, ensemble: &PathEnsemble) -> Result<DensityReport> {
    let horizon = table.horizon();
    if ensemble.start() != 0 || ensemble.horizon() != horizon {
        return Err(Error::DimensionMismatch { expected: horizon, got: ensemble.horizon() - ensemble.start() });
    }
    let n = ensemble.n_paths();
    let parts = ensemble.map_path_chunks(|range| {
        let (mut s1, mut s2, mut s4, mut zeros) = (0.0, 0.0, 0.0, 0usize);
        let mut neg = vec![0usize; horizon + 1];
        let mut returns = Vec::with_capacity(horizon);
        for i in range {
            returns.clear();
            returns.extend((0..horizon).map(|t| ensemble.returns(i, t)));
            let path = density_along_path(table, &returns).expect("ensemble matches table");
            let d = path.density;
            s1 += d;
            s2 += d * d;
            s4 += d * d * d * d;
            zeros += usize::from(d == 0.0);
            for t in 1..=horizon {
                if conditional_expectation(table, &path.b_factors[..t]) < 0.0 {
                    neg[t] += 1;
                }
            }
        }
        (s1, s2, s4, zeros, neg)
    });
    let (mut s1, mut s2, mut s4, mut zeros) = (0.0, 0.0, 0.0, 0usize);
    let mut neg = vec![0usize; horizon + 1];
    for (a, b, c, z, ng) in parts {
        s1 += a;
        s2 += b;
        s4 += c;
        zeros += z;
        for (acc, v) in neg.iter_mut().zip(ng) {
            *acc += v;
        }
    }
    let nf = n as f64;
    let (m1, m2, m4) = (s1 / nf, s2 / nf, s4 / nf);
    Ok(DensityReport {
        n_paths: n,
        mean_density: m1,
        mean_se: ((m2 - m1 * m1).max(0.0) / nf).sqrt(),
        second_moment: m2,
        second_moment_se: ((m4 - m2 * m2).max(0.0) / nf).sqrt(),
        theoretical_second_moment: 1.0 / table.c_plus(0),
        zero_density_paths: zeros,
        negative_fraction: neg.iter().map(|&k| k as f64 / nf).collect(),
    })
}
