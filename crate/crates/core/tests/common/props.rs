//! Property checks shared by the proptest suites and the acceptance run.
//! Each returns `Err` with a description of the first violation.

use conemv::cones::ProjectionOptions;
use conemv::policy::mu_star;
use conemv::solver::{
    backward_recursion, dual_value, eval_h, eval_linear, grad_h, Backend, ExpectationBackend, NextCosts, RecursionTable, Sign,
    SolverOptions,
};
use conemv::{ConvexCone, Market};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::{random_cone, random_discrete_market, rng};

pub type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {
        if !$cond {
            return Err(format!($($arg)+));
        }
    };
}

pub struct Solved {
    pub market: Market,
    pub cones: Vec<ConvexCone>,
    pub backend: Backend,
    pub table: RecursionTable,
}

pub fn solved(seed: u64, horizon: usize) -> Solved {
    let market = random_discrete_market(seed, horizon);
    let cones: Vec<ConvexCone> = (0..horizon).map(|t| random_cone(&market, seed as usize + t, seed + t as u64)).collect();
    let backend = Backend::build(&market, ExpectationBackend::ExactDiscrete).unwrap();
    let opts = SolverOptions { tol: 1e-11, max_iter: 50_000, ..SolverOptions::default() };
    let table = backward_recursion(&market, &cones, &backend, &opts).unwrap();
    Solved { market, cones, backend, table }
}

fn next_costs(table: &RecursionTable, t: usize) -> NextCosts {
    NextCosts::new(table.c_plus(t + 1), table.c_minus(t + 1))
}

fn k_of(table: &RecursionTable, t: usize, sign: Sign) -> DVector<f64> {
    match sign {
        Sign::Plus => table.k_plus(t).clone(),
        Sign::Minus => table.k_minus(t).clone(),
    }
}

/// `0 < C_t^± ≤ C_{t+1}^±`, with equality iff `K_t^± = 0`.
pub fn cost_bounds(s: &Solved) -> Check {
    let table = &s.table;
    for t in 0..table.horizon() {
        for sign in [Sign::Plus, Sign::Minus] {
            let (c, cn) = (table.c(t, sign), table.c(t + 1, sign));
            ensure!(c > 0.0, "t {t} {sign:?}: C = {c}");
            ensure!(c <= cn, "t {t} {sign:?}: {c} > {cn}");
            let zero = k_of(table, t, sign).norm() <= table.periods[t].zero_tol;
            ensure!(zero == (c == cn), "t {t} {sign:?}: ‖K‖ = {:e}, C = {c}, next {cn}", k_of(table, t, sign).norm());
        }
    }
    Ok(())
}

/// The quadratic and piecewise-linear forms of `C_t^±` coincide at optima.
pub fn forms_agree(s: &Solved) -> Check {
    for t in 0..s.table.horizon() {
        for sign in [Sign::Plus, Sign::Minus] {
            let k = k_of(&s.table, t, sign);
            let q = eval_h(s.backend.set(t), sign, &k, next_costs(&s.table, t));
            let (l, _) = eval_linear(s.backend.set(t), sign, &k, next_costs(&s.table, t));
            ensure!((q - l).abs() < 1e-8, "t {t} {sign:?}: quadratic {q} vs linear {l}");
        }
    }
    Ok(())
}

/// Analytic gradient against central differences, relative 1e-4.
pub fn gradient_fd(seed: u64, k: &[f64], cp: f64, cm: f64) -> Check {
    let market = random_discrete_market(seed, 1);
    let backend = Backend::build(&market, ExpectationBackend::ExactDiscrete).unwrap();
    let n = market.n_assets();
    let k = DVector::from_column_slice(&k[..n]);
    let costs = NextCosts::new(cp, cm);
    let set = backend.set(0);
    for sign in [Sign::Plus, Sign::Minus] {
        let g = grad_h(set, sign, &k, costs);
        let eps = 1e-6;
        for j in 0..n {
            let mut a = k.clone();
            let mut b = k.clone();
            a[j] += eps;
            b[j] -= eps;
            let fd = (eval_h(set, sign, &a, costs) - eval_h(set, sign, &b, costs)) / (2.0 * eps);
            ensure!((fd - g[j]).abs() <= 1e-4 * g.norm().max(1e-2), "{sign:?} j {j}: fd {fd} vs {}", g[j]);
        }
    }
    Ok(())
}

/// `∇h(K*)'(u − K*) ≥ 0` on sampled cone points and `∇h(K*)'K* = 0`.
pub fn vi_and_complementarity(s: &Solved, seed: u64) -> Check {
    let proj = ProjectionOptions::default();
    let tol = 1e-7;
    for t in 0..s.table.horizon() {
        let probes = s.cones[t].sample_points(seed ^ 0x55, 32, &proj).unwrap();
        for sign in [Sign::Plus, Sign::Minus] {
            let k = k_of(&s.table, t, sign);
            let g = grad_h(s.backend.set(t), sign, &k, next_costs(&s.table, t));
            ensure!(g.dot(&k).abs() <= tol * (1.0 + k.norm()), "t {t} {sign:?}: ∇h'K = {}", g.dot(&k));
            for u in &probes {
                let vi = g.dot(&(u - &k));
                ensure!(vi >= -tol * (1.0 + u.norm()), "t {t} {sign:?}: VI residual {vi}");
            }
        }
    }
    Ok(())
}

/// The dual is concave and maximized at `µ*`.
pub fn dual_concavity(s: &Solved, gap: f64, a: f64, b: f64) -> Check {
    let x0 = 1.0;
    let d = s.market.rho(0) * x0 + gap;
    let Ok(mu) = mu_star(&s.table, x0, d) else {
        return Ok(());
    };
    let g = |m: f64| dual_value(&s.table, x0, d, m);
    let scale = 1.0 + mu.abs();
    for delta in [1e-4, 1e-2, 1.0] {
        ensure!(g(mu) >= g(mu + delta * scale) - 1e-12, "g(µ*) below g(µ*+{delta})");
        ensure!(g(mu) >= g(mu - delta * scale) - 1e-12, "g(µ*) below g(µ*−{delta})");
    }
    let (a, b) = (mu + a * scale, mu + b * scale);
    ensure!(
        g(0.5 * (a + b)) >= 0.5 * (g(a) + g(b)) - 1e-12 * (1.0 + g(a).abs() + g(b).abs()),
        "midpoint concavity fails on [{a}, {b}]"
    );
    Ok(())
}

/// Projection lands in the cone, is idempotent, satisfies the obtuse-angle
/// criterion and leaves a residual in the polar cone.
pub fn projection(cone: &ConvexCone, v: &DVector<f64>, seed: u64) -> Check {
    let opts = ProjectionOptions::default();
    let p = cone.project(v, &opts).map_err(|e| e.to_string())?;
    ensure!(cone.contains(&p, 1e-8).unwrap(), "projection {p:?} outside the cone");
    let pp = cone.project(&p, &opts).map_err(|e| e.to_string())?;
    ensure!((&pp - &p).norm() <= 1e-8 * (1.0 + p.norm()), "not idempotent");
    for u in cone.sample_points(seed, 16, &opts).unwrap() {
        let angle = (v - &p).dot(&(&u - &p));
        ensure!(angle <= 10.0 * opts.tol * (1.0 + v.norm()) * (1.0 + u.norm()), "obtuse-angle criterion {angle}");
    }
    let polar = cone.polar_distance(&(v - &p)).unwrap();
    ensure!(polar <= 1e-7 * (1.0 + v.norm()), "residual {polar} away from the polar cone");
    Ok(())
}

pub fn scaling_closure(cone: &ConvexCone, alpha: f64, seed: u64) -> Check {
    let pts = cone.sample_points(seed, 8, &ProjectionOptions::default()).unwrap();
    for u in &pts {
        ensure!(cone.contains(&(u * alpha), 1e-8 * alpha.max(1.0)).unwrap(), "αu outside for α = {alpha}");
        for w in &pts {
            ensure!(cone.contains(&(u + w), 1e-8).unwrap(), "u + w outside");
        }
    }
    Ok(())
}

/// Whole space, orthant, a half-space or a polyhedral cone with up to four
/// rows in three dimensions.
pub fn seeded_cone(seed: u64) -> ConvexCone {
    let mut g = rng(seed);
    let n = 3;
    let mut nonzero = |len: usize| loop {
        let v: Vec<f64> = (0..len).map(|_| g.random_range(-1.0..1.0)).collect();
        if v.iter().any(|x: &f64| x.abs() > 1e-3) {
            return v;
        }
    };
    match seed % 4 {
        0 => ConvexCone::WholeSpace(n),
        1 => ConvexCone::NonnegOrthant(n),
        2 => ConvexCone::half_space(DVector::from_vec(nonzero(n))).unwrap(),
        _ => {
            let m = 1 + (seed as usize / 4) % 4;
            let rows: Vec<f64> = (0..m).flat_map(|_| nonzero(n)).collect();
            ConvexCone::polyhedral(DMatrix::from_row_slice(m, n, &rows)).unwrap()
        }
    }
}
