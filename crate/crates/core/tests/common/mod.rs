#![allow(dead_code, clippy::neg_cmp_op_on_partial_ord)]

pub mod props;
pub mod tree;

use conemv::market::{Atom, Market, MarketSpec, PeriodDistribution};
use conemv::ConvexCone;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_atoms(g: &mut ChaCha8Rng, n: usize, m: usize, bullish: bool) -> Vec<Atom> {
    let mut probs: Vec<f64> = (0..m).map(|_| g.random_range(0.2..1.0)).collect();
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    let fix = 1.0 - probs.iter().sum::<f64>();
    probs[m - 1] += fix;
    let mut values: Vec<Vec<f64>> = (0..m).map(|_| (0..n).map(|_| g.random_range(-0.3..0.4)).collect()).collect();
    // Keep the first asset's mean positive so upper-branch targets are attainable.
    let m0: f64 = values.iter().zip(&probs).map(|(v, p)| v[0] * p).sum();
    if m0 <= 0.0 {
        values.iter_mut().for_each(|v| v[0] = -v[0]);
    }
    if bullish {
        // One small loss and otherwise gains: large Sharpe ratio, so the
        // efficient portfolio can push wealth past the threshold.
        for (i, v) in values.iter_mut().enumerate() {
            v[0] = if i == 0 { -g.random_range(0.01..0.05) } else { g.random_range(0.1..0.5) };
        }
    }
    values.into_iter().zip(probs).map(|(v, p)| Atom::new(v, p)).collect()
}

/// Random discrete market with `n ≤ 2` assets and 2 or 3 atoms per period.
/// Two assets always get three atoms so the market stays incomplete.
pub fn random_discrete_market(seed: u64, horizon: usize) -> Market {
    let mut g = rng(seed);
    loop {
        let n = g.random_range(1..=2usize);
        let bullish = g.random_bool(0.4);
        let mut rates = Vec::new();
        let mut periods = Vec::new();
        for _ in 0..horizon {
            let m = if n == 2 { 3 } else { g.random_range(2..=3usize) };
            rates.push(g.random_range(1.0..1.08));
            periods.push(PeriodDistribution::discrete(random_atoms(&mut g, n, m, bullish)).unwrap());
        }
        if let Ok(market) = MarketSpec::new(rates, periods).validate() {
            return market;
        }
    }
}

/// Whole space, orthant, or a half-space whose normal has a positive inner
/// product with the first period's mean, cycling on `which`.
pub fn random_cone(market: &Market, which: usize, seed: u64) -> ConvexCone {
    let n = market.n_assets();
    match which % 3 {
        0 => ConvexCone::WholeSpace(n),
        1 => ConvexCone::NonnegOrthant(n),
        _ => {
            let mut g = rng(seed ^ 0xABCD);
            let mean = market.mean(0);
            let noise = DVector::from_fn(n, |_, _| g.random_range(-1.0..1.0)) * (0.5 * mean.norm());
            let mut a = mean + noise;
            if a.dot(mean) <= 0.0 {
                a = mean.clone();
            }
            ConvexCone::half_space(a).unwrap()
        }
    }
}

/// Random Gaussian market with `n` assets.
pub fn random_gaussian_spec(seed: u64, n: usize, horizon: usize) -> MarketSpec {
    let mut g = rng(seed);
    let mut periods = Vec::new();
    let mut rates = Vec::new();
    for _ in 0..horizon {
        let a = DMatrix::from_fn(n, n, |_, _| g.random_range(-0.2..0.2));
        let cov = &a * a.transpose() + DMatrix::identity(n, n) * 0.01;
        let mean = DVector::from_fn(n, |_, _| g.random_range(-0.02..0.12));
        rates.push(g.random_range(1.0..1.06));
        periods.push(PeriodDistribution::gaussian(mean, cov));
    }
    MarketSpec::new(rates, periods)
}

pub fn normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `h^±(K)` for `P ~ N(µ, Σ)`: with `Z = P'K ~ N(m, s²)` the objective is
/// `C^+ E[(1 ∓ Z)² 1{Z ≤ ±1}] + C^- E[(1 ∓ Z)² 1{Z > ±1}]`, a function of
/// truncated normal moments only.
pub fn gaussian_h(mean: &DVector<f64>, cov: &DMatrix<f64>, k: &DVector<f64>, plus: bool, c_plus: f64, c_minus: f64) -> f64 {
    let m = mean.dot(k);
    let s = (k.transpose() * cov * k)[(0, 0)].sqrt();
    // W = 1 ∓ Z ~ N(a, s²). The C^+ branch is Z ≤ 1 (W ≥ 0) for "+" and
    // Z ≤ −1 (W ≤ 0) for "−".
    let a = if plus { 1.0 - m } else { 1.0 + m };
    let total = a * a + s * s;
    let nonneg = if s == 0.0 {
        if a >= 0.0 {
            a * a
        } else {
            0.0
        }
    } else {
        let z = a / s;
        total * normal_cdf(z) + a * s * normal_pdf(z)
    };
    let first = if plus { nonneg } else { total - nonneg };
    c_plus * first + c_minus * (total - first)
}

/// `Pr(∃ t < T−1 : x_{t+1} above the threshold)` under Gaussian returns:
/// crossing at `t+1` happens iff `P_t'K_t^+ > 1`, independently across `t`.
pub fn gaussian_exceedance(means: &[DVector<f64>], covs: &[DMatrix<f64>], k_plus: &[DVector<f64>]) -> f64 {
    let stay: f64 = means
        .iter()
        .zip(covs)
        .zip(k_plus)
        .map(|((m, c), k)| {
            let s = (k.transpose() * c * k)[(0, 0)].sqrt();
            normal_cdf((1.0 - m.dot(k)) / s)
        })
        .product();
    1.0 - stay
}

pub struct OracleOutcome {
    pub seed: u64,
    pub cone: &'static str,
    pub variance_recursion: f64,
    pub variance_tree: f64,
    pub tcie_verdict: bool,
    pub tcie_node_check: bool,
    pub tcie_tree: bool,
}

/// Solves a random `T = 2` discrete market both ways.
pub fn oracle_case(seed: u64) -> OracleOutcome {
    use conemv::policy::frontier_point;
    use conemv::solver::{backward_recursion, Backend, ExpectationBackend, SolverOptions};

    let market = random_discrete_market(seed, 2);
    let cone = random_cone(&market, seed as usize, seed);
    let cones = vec![cone.clone(); 2];
    let backend = Backend::build(&market, ExpectationBackend::ExactDiscrete).unwrap();
    let opts = SolverOptions { tol: 1e-12, max_iter: 100_000, ..SolverOptions::default() };
    let table = backward_recursion(&market, &cones, &backend, &opts).unwrap();
    let x0 = 1.0;
    let base = market.rho(0) * x0;
    let d = base + 0.3;
    let variance_recursion = frontier_point(&table, x0, d).unwrap().variance;
    let tree = tree::Tree::new(&market, &cones, x0);
    let sol = tree.solve(base, d);
    assert!((sol.mean - d).abs() < 1e-9, "tree mean {} vs {d}", sol.mean);
    let verdict = conemv::tcie::check_tcie(&table, &market).unwrap();
    let nodes = conemv::tcie::node_by_node_violation(&table, &market, x0, d).unwrap();
    OracleOutcome {
        seed,
        cone: cone.kind(),
        variance_recursion,
        variance_tree: sol.variance,
        tcie_verdict: verdict.is_tcie,
        tcie_node_check: nodes.is_none(),
        tcie_tree: tree.node_violation(&sol, 1e-8).is_none(),
    }
}
