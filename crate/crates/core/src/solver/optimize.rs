//! Minimization of `h_t^±` over a convex cone.
//!
//! The default is projected gradient with Armijo backtracking along the
//! projection arc. Each iteration's first trial step is the Barzilai–Borwein
//! step from the previous pair of iterates (1.0 on the first iteration). The
//! quadratic-penalty alternative minimizes `h + (r/2)‖min(0, A K)‖²` by damped
//! Newton steps for an increasing sequence of `r` and projects at the end.

use nalgebra::{DMatrix, DVector};

use super::backend::ScenarioSet;
use super::objective::{eval_h, eval_h_grad, hess_h, NextCosts, Sign};
use crate::cones::{ConvexCone, ProjectionOptions};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimizerKind {
    ProjectedGradient,
    Penalty,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOptions {
    pub optimizer: OptimizerKind,
    /// First-order residual tolerance.
    pub tol: f64,
    pub max_iter: usize,
    pub projection: ProjectionOptions,
    /// Overrides the default `1e-7·(1 + ‖E⁻¹[PP']E[P]‖)` per period.
    pub zero_tol: Option<f64>,
    /// Overrides the quadratic/linear consistency tolerance.
    pub cross_tol: Option<f64>,
    /// Cone points used for the variational-inequality residual.
    pub vi_samples: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            optimizer: OptimizerKind::ProjectedGradient,
            tol: 1e-8,
            max_iter: 5000,
            projection: ProjectionOptions::default(),
            zero_tol: None,
            cross_tol: None,
            vi_samples: 64,
        }
    }
}

const ARMIJO_SLOPE: f64 = 1e-4;
const ARMIJO_SHRINK: f64 = 0.5;
/// Relative slack on function decrease; sample sums carry rounding noise well
/// above the decreases seen near a minimizer.
const NOISE_REL: f64 = 1e-13;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MinimizeDiagnostics {
    pub iterations: usize,
    /// `‖K − P(K − ∇h(K))‖`.
    pub pg_residual: f64,
    /// `max(0, −min_u ∇h(K)'(u − K))` over sampled cone points.
    pub vi_residual: f64,
    /// `|∇h(K)'K|`.
    pub complementarity: f64,
    pub grad_norm: f64,
}

#[derive(Clone, Debug)]
pub struct Minimizer {
    pub k: DVector<f64>,
    pub value: f64,
    pub diagnostics: MinimizeDiagnostics,
}

struct Residuals {
    pg: f64,
    vi: f64,
    comp: f64,
}

fn residuals(
    cone: &ConvexCone,
    k: &DVector<f64>,
    g: &DVector<f64>,
    probes: &[DVector<f64>],
    opts: &SolverOptions,
) -> Result<Residuals> {
    let pg = (k - cone.project(&(k - g), &opts.projection)?).norm();
    let gk = g.dot(k);
    let mut worst = 0.0f64;
    for u in probes {
        worst = worst.min(g.dot(u) - gk);
    }
    // u = 0 and u = 2K are in every cone.
    worst = worst.min(-gk).min(gk);
    Ok(Residuals { pg, vi: (-worst).max(0.0), comp: gk.abs() })
}

fn accept(r: &Residuals, g: &DVector<f64>, k: &DVector<f64>, tol: f64) -> bool {
    r.pg <= tol && r.vi <= tol && r.comp <= tol * (1.0 + g.norm() * k.norm())
}

/// Default starting point: the cone projection of `±E⁻¹[PP']E[P]` under the
/// backend's own moments.
pub fn default_init(set: &ScenarioSet, sign: Sign, cone: &ConvexCone, proj: &ProjectionOptions) -> Result<DVector<f64>> {
    let m = set.second_moment();
    let mean = set.mean();
    let k = m.cholesky().map(|c| c.solve(&mean)).unwrap_or_else(|| DVector::zeros(mean.len()));
    cone.project(&(k * sign.value()), proj)
}

pub fn minimize_over_cone(
    set: &ScenarioSet,
    sign: Sign,
    cone: &ConvexCone,
    c: NextCosts,
    opts: &SolverOptions,
    init: Option<&DVector<f64>>,
) -> Result<Minimizer> {
    if cone.dim() != set.dim() {
        return Err(Error::DimensionMismatch { expected: set.dim(), got: cone.dim() });
    }
    let start = match init {
        Some(k) => cone.project(k, &opts.projection)?,
        None => default_init(set, sign, cone, &opts.projection)?,
    };
    let probes = cone.sample_points(0xC0FFEE, opts.vi_samples, &opts.projection)?;
    match opts.optimizer {
        OptimizerKind::ProjectedGradient => projected_gradient(set, sign, cone, c, opts, start, &probes),
        OptimizerKind::Penalty => penalty(set, sign, cone, c, opts, start, &probes),
    }
}

fn projected_gradient(
    set: &ScenarioSet,
    sign: Sign,
    cone: &ConvexCone,
    c: NextCosts,
    opts: &SolverOptions,
    start: DVector<f64>,
    probes: &[DVector<f64>],
) -> Result<Minimizer> {
    let proj = &opts.projection;
    let mut k = start;
    let (mut f, mut g) = eval_h_grad(set, sign, &k, c);
    let mut step = 1.0;
    let mut res = residuals(cone, &k, &g, probes, opts)?;
    let mut it = 0;
    while it < opts.max_iter {
        if accept(&res, &g, &k, opts.tol) {
            return Ok(finish(k, f, &g, res, it));
        }
        it += 1;
        let slack = NOISE_REL * f.abs().max(1e-300);
        let mut a = step;
        let mut trial = None;
        for _ in 0..60 {
            let kn = cone.project(&(&k - &g * a), proj)?;
            let d = &kn - &k;
            let fnew = eval_h(set, sign, &kn, c);
            if fnew <= f + ARMIJO_SLOPE * g.dot(&d) + slack {
                trial = Some(kn);
                break;
            }
            a *= ARMIJO_SHRINK;
        }
        let Some(kn) = trial else {
            break;
        };
        let (fnew, gnew) = eval_h_grad(set, sign, &kn, c);
        let s = &kn - &k;
        let y = &gnew - &g;
        let sy = s.dot(&y);
        step = if sy > 0.0 { (s.norm_squared() / sy).clamp(1e-12, 1e12) } else { 1.0 };
        if s.norm() == 0.0 {
            res = residuals(cone, &kn, &gnew, probes, opts)?;
            k = kn;
            f = fnew;
            g = gnew;
            break;
        }
        k = kn;
        f = fnew;
        g = gnew;
        res = residuals(cone, &k, &g, probes, opts)?;
    }
    if accept(&res, &g, &k, opts.tol) {
        return Ok(finish(k, f, &g, res, it));
    }
    Err(Error::NoConvergence { iterations: it, residual: res.pg.max(res.vi) })
}

fn finish(k: DVector<f64>, value: f64, g: &DVector<f64>, r: Residuals, iterations: usize) -> Minimizer {
    Minimizer {
        k,
        value,
        diagnostics: MinimizeDiagnostics {
            iterations,
            pg_residual: r.pg,
            vi_residual: r.vi,
            complementarity: r.comp,
            grad_norm: g.norm(),
        },
    }
}

/// Constraint rows `a_i` (normalized) with the cone `{u : a_i'u ≥ 0 ∀i}`.
fn constraint_rows(cone: &ConvexCone) -> Vec<DVector<f64>> {
    match cone {
        ConvexCone::WholeSpace(_) => vec![],
        ConvexCone::NonnegOrthant(n) => (0..*n)
            .map(|i| {
                let mut e = DVector::zeros(*n);
                e[i] = 1.0;
                e
            })
            .collect(),
        ConvexCone::HalfSpace { normal } => vec![normal.normalize()],
        ConvexCone::Polyhedral { rows } => rows.row_iter().map(|r| r.transpose().normalize()).collect(),
    }
}

fn penalty(
    set: &ScenarioSet,
    sign: Sign,
    cone: &ConvexCone,
    c: NextCosts,
    opts: &SolverOptions,
    start: DVector<f64>,
    probes: &[DVector<f64>],
) -> Result<Minimizer> {
    let rows = constraint_rows(cone);
    let n = set.dim();
    let phi = |k: &DVector<f64>, r: f64| -> f64 {
        let pen: f64 = rows.iter().map(|a| a.dot(k).min(0.0).powi(2)).sum();
        eval_h(set, sign, k, c) + 0.5 * r * pen
    };
    let mut k = start;
    let mut total = 0;
    let mut r = 10.0;
    while r <= 1e12 {
        for _ in 0..200 {
            if total >= opts.max_iter {
                break;
            }
            total += 1;
            let (f0, mut g) = eval_h_grad(set, sign, &k, c);
            let mut h: DMatrix<f64> = hess_h(set, sign, &k, c);
            let mut pen = 0.0;
            for a in &rows {
                let v = a.dot(&k);
                if v < 0.0 {
                    pen += v * v;
                    g += a * (r * v);
                    h += a * a.transpose() * r;
                }
            }
            let f = f0 + 0.5 * r * pen;
            if g.norm() <= 0.1 * opts.tol {
                break;
            }
            let dir = match h.clone().cholesky() {
                Some(ch) => -ch.solve(&g),
                None => -&g,
            };
            let slope = g.dot(&dir);
            let slack = NOISE_REL * f.abs().max(1e-300);
            let mut a = 1.0;
            let mut moved = false;
            for _ in 0..60 {
                let kn = &k + &dir * a;
                if phi(&kn, r) <= f + ARMIJO_SLOPE * a * slope + slack {
                    moved = (&kn - &k).norm() > 0.0;
                    k = kn;
                    break;
                }
                a *= ARMIJO_SHRINK;
            }
            if !moved || (&dir * a).norm() <= 1e-15 * (1.0 + k.norm()) {
                break;
            }
        }
        r *= 10.0;
    }
    let k = cone.project(&k, &opts.projection)?;
    let (f, g) = eval_h_grad(set, sign, &k, c);
    let res = residuals(cone, &k, &g, probes, opts)?;
    if accept(&res, &g, &k, opts.tol) {
        return Ok(finish(k, f, &g, res, total));
    }
    let _ = n;
    Err(Error::NoConvergence { iterations: total, residual: res.pg.max(res.vi) })
}
