//! Admissible-control cones.
//!
//! Each variant supports membership, polar-cone membership and Euclidean
//! projection. Polyhedral cones `{u : A u ≥ 0}` are projected exactly through
//! the Moreau decomposition and a nonnegative least-squares fit, with Dykstra's
//! alternating projections as a fallback; polar membership is decided by the
//! same fit `y ≈ −A'μ, μ ≥ 0`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng;

/// Default slack for membership tests.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectionOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 10_000 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ConvexCone {
    /// `R^n`.
    WholeSpace(usize),
    /// `{u : u ≥ 0}`.
    NonnegOrthant(usize),
    /// `{u : a'u ≥ 0}` with `a ≠ 0`.
    HalfSpace { normal: DVector<f64> },
    /// `{u : A u ≥ 0}` with nonzero rows.
    Polyhedral { rows: DMatrix<f64> },
}

impl ConvexCone {
    pub fn half_space(normal: DVector<f64>) -> Result<Self> {
        if normal.is_empty() || normal.norm() == 0.0 || normal.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidCone("half-space normal must be a nonzero finite vector".into()));
        }
        Ok(ConvexCone::HalfSpace { normal })
    }

    pub fn polyhedral(rows: DMatrix<f64>) -> Result<Self> {
        if rows.nrows() == 0 || rows.ncols() == 0 {
            return Err(Error::InvalidCone("polyhedral cone needs at least one row".into()));
        }
        for (i, r) in rows.row_iter().enumerate() {
            if r.norm() == 0.0 || r.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidCone(format!("row {i} is zero or non-finite")));
            }
        }
        Ok(ConvexCone::Polyhedral { rows })
    }

    pub fn dim(&self) -> usize {
        match self {
            ConvexCone::WholeSpace(n) | ConvexCone::NonnegOrthant(n) => *n,
            ConvexCone::HalfSpace { normal } => normal.len(),
            ConvexCone::Polyhedral { rows } => rows.ncols(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ConvexCone::WholeSpace(_) => "whole_space",
            ConvexCone::NonnegOrthant(_) => "orthant",
            ConvexCone::HalfSpace { .. } => "half_space",
            ConvexCone::Polyhedral { .. } => "polyhedral",
        }
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: len });
        }
        Ok(())
    }

    pub fn contains(&self, u: &DVector<f64>, tol: f64) -> Result<bool> {
        self.check_dim(u.len())?;
        Ok(match self {
            ConvexCone::WholeSpace(_) => true,
            ConvexCone::NonnegOrthant(_) => u.iter().all(|&x| x >= -tol),
            ConvexCone::HalfSpace { normal } => normal.dot(u) >= -tol,
            ConvexCone::Polyhedral { rows } => (rows * u).iter().all(|&x| x >= -tol),
        })
    }

    /// Euclidean distance from `y` to the polar cone `{y : y'x ≤ 0 ∀x ∈ A}`.
    pub fn polar_distance(&self, y: &DVector<f64>) -> Result<f64> {
        self.check_dim(y.len())?;
        Ok(match self {
            ConvexCone::WholeSpace(_) => y.norm(),
            ConvexCone::NonnegOrthant(_) => y.iter().map(|v| v.max(0.0).powi(2)).sum::<f64>().sqrt(),
            ConvexCone::HalfSpace { normal } => {
                let c = normal.dot(y) / normal.norm_squared();
                if c <= 0.0 {
                    (y - normal * c).norm()
                } else {
                    y.norm()
                }
            }
            ConvexCone::Polyhedral { rows } => {
                let (_, residual) = nnls(&rows.transpose(), &(-y));
                residual
            }
        })
    }

    pub fn polar_contains(&self, y: &DVector<f64>, tol: f64) -> Result<bool> {
        Ok(self.polar_distance(y)? <= tol)
    }

    /// Dual-cone membership, `A* = −A^⊥`.
    pub fn dual_contains(&self, y: &DVector<f64>, tol: f64) -> Result<bool> {
        self.polar_contains(&(-y), tol)
    }

    pub fn project(&self, v: &DVector<f64>, opts: &ProjectionOptions) -> Result<DVector<f64>> {
        self.check_dim(v.len())?;
        Ok(match self {
            ConvexCone::WholeSpace(_) => v.clone(),
            ConvexCone::NonnegOrthant(_) => v.map(|x| x.max(0.0)),
            ConvexCone::HalfSpace { normal } => {
                let s = normal.dot(v);
                if s >= 0.0 {
                    v.clone()
                } else {
                    v - normal * (s / normal.norm_squared())
                }
            }
            ConvexCone::Polyhedral { rows } => {
                if self.contains(v, opts.tol)? {
                    return Ok(v.clone());
                }
                match moreau_projection(rows, v) {
                    Some(p) => p,
                    None => dykstra(rows, v, opts)?,
                }
            }
        })
    }

    /// True when the cone is `{0}`, i.e. every `±e_i` projects to the origin
    /// (then the polar cone contains a spanning set and is all of `R^n`).
    pub fn is_origin_only(&self, opts: &ProjectionOptions) -> Result<bool> {
        match self {
            ConvexCone::Polyhedral { .. } => {
                let n = self.dim();
                let thresh = (opts.tol.sqrt()).max(1e-7);
                for i in 0..n {
                    for sign in [1.0, -1.0] {
                        let mut e = DVector::zeros(n);
                        e[i] = sign;
                        if self.project(&e, opts)?.norm() > thresh {
                            return Ok(false);
                        }
                    }
                }
                Ok(true)
            }
            _ => Ok(false),
        }
    }

    /// Deterministic pseudo-random points of the cone: projections of standard
    /// normal vectors, plus the origin.
    pub fn sample_points(&self, seed: u64, count: usize, opts: &ProjectionOptions) -> Result<Vec<DVector<f64>>> {
        let n = self.dim();
        let mut out = Vec::with_capacity(count + 1);
        out.push(DVector::zeros(n));
        for k in 0..count {
            let mut r = rng::stream(seed, k as u64, 0);
            let v = DVector::from_fn(n, |_, _| r.sample::<f64, _>(StandardNormal));
            out.push(self.project(&v, opts)?);
        }
        Ok(out)
    }
}

fn dykstra(rows: &DMatrix<f64>, v: &DVector<f64>, opts: &ProjectionOptions) -> Result<DVector<f64>> {
    let m = rows.nrows();
    let norms: Vec<f64> = rows.row_iter().map(|r| r.norm_squared()).collect();
    let mut x = v.clone();
    let mut incr = vec![DVector::zeros(v.len()); m];
    let mut last_move = f64::INFINITY;
    for _ in 0..opts.max_iter {
        let prev = x.clone();
        for i in 0..m {
            let y = &x + &incr[i];
            let a = rows.row(i).transpose();
            let s = a.dot(&y);
            x = if s >= 0.0 { y.clone() } else { &y - &a * (s / norms[i]) };
            incr[i] = y - &x;
        }
        last_move = (&x - &prev).norm();
        if last_move < opts.tol {
            return Ok(x);
        }
    }
    Err(Error::NoConvergence { iterations: opts.max_iter, residual: last_move })
}

/// `P_K(v) = v + A'μ*` with `μ* = argmin_{μ ≥ 0} ‖v + A'μ‖`, accepted only if
/// the result is feasible.
fn moreau_projection(rows: &DMatrix<f64>, v: &DVector<f64>) -> Option<DVector<f64>> {
    let (mu, _) = nnls(&rows.transpose(), &(-v));
    let p = v + rows.transpose() * mu;
    let slack = 1e-12 * (1.0 + v.norm()) * rows.amax().max(1.0);
    (rows * &p).iter().all(|&s| s >= -slack).then_some(p)
}

/// Lawson–Hanson nonnegative least squares: `min ‖E μ − f‖` over `μ ≥ 0`.
/// Returns the minimizer and the residual norm.
pub fn nnls(e: &DMatrix<f64>, f: &DVector<f64>) -> (DVector<f64>, f64) {
    let m = e.ncols();
    let mut x = DVector::zeros(m);
    let mut passive = vec![false; m];
    let scale = e.amax().max(1.0) * f.amax().max(1.0);
    let tol = 1e-13 * scale * m.max(1) as f64;
    for _ in 0..(3 * m + 10) {
        let w = e.transpose() * (f - e * &x);
        let cand = (0..m).filter(|&j| !passive[j]).max_by(|&a, &b| w[a].total_cmp(&w[b]));
        let Some(j) = cand else { break };
        if w[j] <= tol {
            break;
        }
        passive[j] = true;
        loop {
            let idx: Vec<usize> = (0..m).filter(|&j| passive[j]).collect();
            let ep = e.select_columns(&idx);
            let sp = ep.clone().svd(true, true).solve(f, 1e-14).unwrap_or_else(|_| DVector::zeros(idx.len()));
            if sp.iter().all(|&s| s > 0.0) {
                x.fill(0.0);
                for (k, &j) in idx.iter().enumerate() {
                    x[j] = sp[k];
                }
                break;
            }
            let mut alpha = f64::INFINITY;
            for (k, &j) in idx.iter().enumerate() {
                if sp[k] <= 0.0 {
                    let a = x[j] / (x[j] - sp[k]);
                    if a < alpha {
                        alpha = a;
                    }
                }
            }
            for (k, &j) in idx.iter().enumerate() {
                x[j] += alpha * (sp[k] - x[j]);
                if x[j] <= 1e-15 {
                    x[j] = 0.0;
                    passive[j] = false;
                }
            }
            if idx.iter().all(|&j| !passive[j]) {
                break;
            }
        }
    }
    let residual = (e * &x - f).norm();
    (x, residual)
}

/// The largest cone whose dual contains `mean_excess`: the half-space
/// `{u : E[P]'u ≥ 0}`.
pub fn construct_tcie_cone(mean_excess: &DVector<f64>) -> Result<ConvexCone> {
    if mean_excess.iter().all(|&v| v == 0.0) {
        return Err(Error::ZeroMeanExcess);
    }
    let cone = ConvexCone::half_space(mean_excess.clone())?;
    debug_assert!(cone.dual_contains(mean_excess, MEMBERSHIP_TOL).unwrap_or(false));
    Ok(cone)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use proptest::prelude::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn membership_examples() {
        assert!(ConvexCone::NonnegOrthant(3).contains(&v(&[1.0, 0.0, 2.0]), 1e-9).unwrap());
        assert!(presets::case3_cone().contains(&v(&[-1.0, 0.5, 0.6]), 1e-9).unwrap());
        let mean = presets::mean_excess();
        let half = ConvexCone::half_space(mean.clone()).unwrap();
        assert!(!half.contains(&(-&mean), 1e-9).unwrap());
        assert!(matches!(half.contains(&v(&[1.0]), 1e-9), Err(Error::DimensionMismatch { expected: 3, got: 1 })));
    }

    #[test]
    fn polar_examples() {
        assert!(ConvexCone::WholeSpace(3).polar_contains(&DVector::zeros(3), 1e-9).unwrap());
        assert!(!ConvexCone::WholeSpace(3).polar_contains(&v(&[0.0, 1e-3, 0.0]), 1e-9).unwrap());
        assert!(ConvexCone::NonnegOrthant(3).polar_contains(&v(&[-1.0, -2.0, 0.0]), 1e-9).unwrap());
        let mean = presets::mean_excess();
        let half = ConvexCone::half_space(mean.clone()).unwrap();
        assert!(half.polar_contains(&(&mean * -0.5), 1e-9).unwrap());
        assert!(!half.polar_contains(&(&mean * 0.5), 1e-9).unwrap());
        assert!(!half.polar_contains(&v(&[-0.09, -0.11, 0.0]), 1e-9).unwrap());
    }

    #[test]
    fn polyhedral_polar_matches_generators() {
        let c3 = presets::case3_cone();
        let ConvexCone::Polyhedral { rows } = &c3 else { unreachable!() };
        // −A'μ for μ ≥ 0 is polar; its negation generally is not.
        let y = -(rows.transpose() * v(&[0.3, 0.0, 1.2]));
        assert!(c3.polar_contains(&y, 1e-9).unwrap());
        assert!(!c3.polar_contains(&(-&y), 1e-9).unwrap());
        assert!(c3.dual_contains(&presets::mean_excess(), 1e-9).unwrap());
    }

    #[test]
    fn projection_examples() {
        let o = ProjectionOptions::default();
        assert_eq!(ConvexCone::NonnegOrthant(3).project(&v(&[1.0, -2.0, 3.0]), &o).unwrap(), v(&[1.0, 0.0, 3.0]));
        let half = presets::case2_cone();
        let inside = v(&[1.0, -0.1, 0.3]);
        assert_eq!(half.project(&inside, &o).unwrap(), inside);
        let p = presets::case3_cone().project(&v(&[-2.0, -1.0, 0.5]), &o).unwrap();
        assert!(p[1].abs() < 1e-9);
        assert!(presets::case3_cone().contains(&p, 1e-9).unwrap());
    }

    #[test]
    fn dykstra_agrees_with_nnls_projection() {
        // P_K(v) = v + A'μ* with μ* = argmin_{μ ≥ 0} ‖v + A'μ‖ (Moreau).
        let c3 = presets::case3_cone();
        let ConvexCone::Polyhedral { rows } = &c3 else { unreachable!() };
        for x in [[-2.0, -1.0, 0.5], [0.3, -4.0, -1.0], [-5.0, 1.0, 1.0], [1.0, 2.0, 3.0]] {
            let x = v(&x);
            let (mu, _) = nnls(&rows.transpose(), &(-&x));
            let moreau = &x + rows.transpose() * mu;
            let p = c3.project(&x, &ProjectionOptions::default()).unwrap();
            assert!((&p - &moreau).norm() < 1e-8, "{p} vs {moreau}");
        }
    }

    #[test]
    fn origin_only_detection() {
        let o = ProjectionOptions::default();
        let zero = ConvexCone::polyhedral(DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, -1.0, -1.0])).unwrap();
        assert!(zero.is_origin_only(&o).unwrap());
        assert!(!presets::case3_cone().is_origin_only(&o).unwrap());
        assert!(!ConvexCone::NonnegOrthant(2).is_origin_only(&o).unwrap());
    }

    #[test]
    fn tcie_cone_constructor() {
        let mean = presets::mean_excess();
        let c = construct_tcie_cone(&mean).unwrap();
        let ConvexCone::HalfSpace { normal } = &c else { panic!("expected half-space") };
        assert!((normal - v(&[0.09, 0.11, 0.12])).amax() < 1e-14);
        assert!(c.dual_contains(&mean, 1e-9).unwrap());
        let e1 = v(&[1.0, 0.0, 0.0]);
        assert_eq!(construct_tcie_cone(&e1).unwrap(), ConvexCone::HalfSpace { normal: e1.clone() });
        assert!(ConvexCone::NonnegOrthant(3).dual_contains(&e1, 1e-9).unwrap());
        assert_eq!(construct_tcie_cone(&DVector::zeros(3)), Err(Error::ZeroMeanExcess));
    }

    #[test]
    fn invalid_cones_rejected() {
        assert!(ConvexCone::half_space(DVector::zeros(2)).is_err());
        assert!(ConvexCone::polyhedral(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])).is_err());
    }

    fn arb_cone() -> impl Strategy<Value = ConvexCone> {
        const N: usize = 3;
        prop_oneof![
            Just(ConvexCone::WholeSpace(N)),
            Just(ConvexCone::NonnegOrthant(N)),
            prop::collection::vec(-1.0f64..1.0, N)
                .prop_filter("nonzero", |a| a.iter().any(|x| x.abs() > 0.1))
                .prop_map(|a| ConvexCone::half_space(DVector::from_vec(a)).unwrap()),
            (1usize..5)
                .prop_flat_map(move |m| prop::collection::vec(-1.0f64..1.0, m * N).prop_map(move |a| (m, a)))
                .prop_filter("nonzero rows", |(m, a)| (0..*m).all(|i| a[i * N..(i + 1) * N].iter().any(|x| x.abs() > 0.1)))
                .prop_map(move |(m, a)| ConvexCone::polyhedral(DMatrix::from_row_slice(m, N, &a)).unwrap()),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn projection_is_idempotent_feasible_and_optimal(cone in arb_cone(), x in prop::collection::vec(-3.0f64..3.0, 3)) {
            let o = ProjectionOptions::default();
            let x = DVector::from_vec(x);
            let p = cone.project(&x, &o).unwrap();
            prop_assert!(cone.contains(&p, 1e-8).unwrap());
            let pp = cone.project(&p, &o).unwrap();
            prop_assert!((&pp - &p).norm() < 1e-10);
            for u in cone.sample_points(3, 32, &o).unwrap() {
                prop_assert!((&x - &p).dot(&(&u - &p)) <= 1e-8);
            }
        }

        #[test]
        fn cone_closed_under_scaling(cone in arb_cone(), x in prop::collection::vec(-3.0f64..3.0, 3)) {
            let o = ProjectionOptions::default();
            let u = cone.project(&DVector::from_vec(x), &o).unwrap();
            for a in [0.0, 0.5, 2.0, 10.0] {
                prop_assert!(cone.contains(&(&u * a), 1e-7).unwrap());
            }
        }

        #[test]
        fn polar_pairs_have_nonpositive_products(cone in arb_cone(), x in prop::collection::vec(-3.0f64..3.0, 3)) {
            let o = ProjectionOptions::default();
            let x = DVector::from_vec(x);
            // Moreau: x − P_K(x) lies in the polar cone.
            let y = &x - cone.project(&x, &o).unwrap();
            prop_assert!(cone.polar_contains(&y, 1e-7).unwrap());
            for u in cone.sample_points(5, 32, &o).unwrap() {
                prop_assert!(y.dot(&u) <= 1e-7);
            }
        }
    }
}
