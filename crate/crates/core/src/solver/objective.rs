//! The one-period functions `h_t^±` and their derivatives.
//!
//! ```text
//! h^±(K) = E[ C⁺ (1 ∓ P'K)² 1{P'K ≤ ±1} + C⁻ (1 ∓ P'K)² 1{P'K > ±1} ]
//! ```
//!
//! Ties `P'K = ±1` fall in the `≤` branch.

use nalgebra::{DMatrix, DVector};

use super::backend::ScenarioSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Sign::Plus => "+",
            Sign::Minus => "-",
        }
    }
}

/// `(C_{t+1}^+, C_{t+1}^-)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NextCosts {
    pub plus: f64,
    pub minus: f64,
}

impl NextCosts {
    pub const TERMINAL: NextCosts = NextCosts { plus: 1.0, minus: 1.0 };

    pub fn new(plus: f64, minus: f64) -> Self {
        Self { plus, minus }
    }

    pub fn get(&self, sign: Sign) -> f64 {
        match sign {
            Sign::Plus => self.plus,
            Sign::Minus => self.minus,
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Per-point quantities: branch weight `C_b` and residual `r = 1 ∓ P'K`.
#[inline]
fn branch(p: &[f64], k: &[f64], s: f64, c: NextCosts) -> (f64, f64) {
    let z = dot(p, k);
    let cb = if z <= s { c.plus } else { c.minus };
    (cb, 1.0 - s * z)
}

pub fn eval_h(set: &ScenarioSet, sign: Sign, k: &DVector<f64>, c: NextCosts) -> f64 {
    let s = sign.value();
    let n = set.dim();
    let kk = k.as_slice();
    set.map_chunks(|pts, ws| {
        let mut acc = 0.0;
        for (p, &w) in pts.chunks_exact(n).zip(ws) {
            let (cb, r) = branch(p, kk, s, c);
            acc += w * cb * r * r;
        }
        acc
    })
    .into_iter()
    .sum()
}

/// `2 E[C_b (P P'K ∓ P)]`.
pub fn grad_h(set: &ScenarioSet, sign: Sign, k: &DVector<f64>, c: NextCosts) -> DVector<f64> {
    eval_h_grad(set, sign, k, c).1
}

pub fn eval_h_grad(set: &ScenarioSet, sign: Sign, k: &DVector<f64>, c: NextCosts) -> (f64, DVector<f64>) {
    let s = sign.value();
    let n = set.dim();
    let kk = k.as_slice();
    let parts = set.map_chunks(|pts, ws| {
        let mut val = 0.0;
        let mut g = vec![0.0; n];
        for (p, &w) in pts.chunks_exact(n).zip(ws) {
            let (cb, r) = branch(p, kk, s, c);
            val += w * cb * r * r;
            let coef = -2.0 * s * w * cb * r;
            for j in 0..n {
                g[j] += coef * p[j];
            }
        }
        (val, g)
    });
    let mut val = 0.0;
    let mut g = DVector::zeros(n);
    for (v, gp) in parts {
        val += v;
        for j in 0..n {
            g[j] += gp[j];
        }
    }
    (val, g)
}

/// `2 E[C_b P P']`, the Hessian on the current piece.
pub fn hess_h(set: &ScenarioSet, sign: Sign, k: &DVector<f64>, c: NextCosts) -> DMatrix<f64> {
    let s = sign.value();
    let n = set.dim();
    let kk = k.as_slice();
    let parts = set.map_chunks(|pts, ws| {
        let mut h = vec![0.0; n * n];
        for (p, &w) in pts.chunks_exact(n).zip(ws) {
            let (cb, _) = branch(p, kk, s, c);
            let a = 2.0 * w * cb;
            for i in 0..n {
                for j in 0..=i {
                    h[i * n + j] += a * p[i] * p[j];
                }
            }
        }
        h
    });
    let mut h = DMatrix::zeros(n, n);
    for part in parts {
        for i in 0..n {
            for j in 0..=i {
                h[(i, j)] += part[i * n + j];
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            h[(j, i)] = h[(i, j)];
        }
    }
    h
}

/// Piecewise-linear form `E[C_b (1 ∓ P'K)]` and the standard error of its
/// sample-average estimator (zero weight-variance for exact backends is still
/// reported, callers decide whether to use it).
pub fn eval_linear(set: &ScenarioSet, sign: Sign, k: &DVector<f64>, c: NextCosts) -> (f64, f64) {
    let s = sign.value();
    let n = set.dim();
    let kk = k.as_slice();
    let parts = set.map_chunks(|pts, ws| {
        let (mut m1, mut m2) = (0.0, 0.0);
        for (p, &w) in pts.chunks_exact(n).zip(ws) {
            let (cb, r) = branch(p, kk, s, c);
            m1 += w * cb * r;
            m2 += w * (cb * r) * (cb * r);
        }
        (m1, m2)
    });
    let (m1, m2) = parts.into_iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let se = ((m2 - m1 * m1).max(0.0) / set.len() as f64).sqrt();
    (m1, se)
}
