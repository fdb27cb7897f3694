//! Exhaustive scenario-tree solver: one control vector per non-terminal
//! node, exact expectations over leaves, FISTA with restarts on the full
//! decision vector, and bisection on the Lagrange multiplier of the mean
//! constraint.

use conemv::market::{Family, Market};
use conemv::ConvexCone;
use nalgebra::{DMatrix, DVector};

struct Node {
    t: usize,
    prob: f64,
    /// Offset of this node's control in the decision vector.
    offset: usize,
    /// Wealth as `base + coef'u`.
    base: f64,
    coef: DVector<f64>,
}

pub struct Tree {
    n: usize,
    dim: usize,
    horizon: usize,
    nodes: Vec<Node>,
    leaves: Vec<(f64, f64, DVector<f64>)>,
    cones: Vec<ConvexCone>,
    rates: Vec<f64>,
}

fn atoms(market: &Market, t: usize) -> Vec<(Vec<f64>, f64)> {
    match &market.period(t).family {
        Family::Discrete { atoms } => atoms.iter().map(|a| (a.value.clone(), a.prob)).collect(),
        _ => panic!("tree oracle needs discrete laws"),
    }
}

fn project(cone: &ConvexCone, v: &DVector<f64>) -> DVector<f64> {
    match cone {
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
        ConvexCone::Polyhedral { .. } => panic!("tree oracle handles whole space, orthant and half-space only"),
    }
}

pub struct TreeSolution {
    pub u: DVector<f64>,
    pub mean: f64,
    pub variance: f64,
    pub gamma: f64,
}

impl Tree {
    pub fn new(market: &Market, cones: &[ConvexCone], x0: f64) -> Self {
        let n = market.n_assets();
        let horizon = market.horizon();
        let mut nodes = Vec::new();
        let mut frontier = vec![(1.0, x0, DVector::<f64>::zeros(0))];
        let mut offset = 0;
        let mut leaves = Vec::new();
        for t in 0..horizon {
            let mut next = Vec::new();
            for (prob, base, coef) in frontier {
                let node_offset = offset;
                offset += n;
                nodes.push(Node { t, prob, offset: node_offset, base, coef: coef.clone() });
                for (p, q) in atoms(market, t) {
                    let mut c = coef.clone().resize_vertically(offset, 0.0) * market.riskless(t);
                    for j in 0..n {
                        c[node_offset + j] += p[j];
                    }
                    next.push((prob * q, base * market.riskless(t), c));
                }
            }
            frontier = next;
        }
        for (prob, base, coef) in frontier {
            leaves.push((prob, base, coef.resize_vertically(offset, 0.0)));
        }
        let rates = (0..horizon).map(|t| market.riskless(t)).collect();
        Self { n, dim: offset, horizon, nodes, leaves, cones: cones.to_vec(), rates }
    }

    fn project(&self, u: &DVector<f64>) -> DVector<f64> {
        let mut out = u.clone();
        for node in &self.nodes {
            let v = u.rows(node.offset, self.n).into_owned();
            out.rows_mut(node.offset, self.n).copy_from(&project(&self.cones[node.t], &v));
        }
        out
    }

    /// `E[(x_T − γ)²]` has Hessian `2 Σ p a a'` and linear term `2 Σ p (b − γ) a`.
    fn quadratic(&self) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.dim, self.dim);
        for (p, _, a) in &self.leaves {
            h += a * a.transpose() * (2.0 * p);
        }
        h
    }

    fn linear(&self, gamma: f64) -> DVector<f64> {
        let mut g = DVector::zeros(self.dim);
        for (p, b, a) in &self.leaves {
            g += a * (2.0 * p * (b - gamma));
        }
        g
    }

    fn moments(&self, u: &DVector<f64>) -> (f64, f64) {
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for (p, b, a) in &self.leaves {
            let x = b + a.dot(u);
            m1 += p * x;
            m2 += p * x * x;
        }
        (m1, m2 - m1 * m1)
    }

    /// Minimizes `E[(x_T − γ)²]` over the product cone.
    pub fn minimize(&self, gamma: f64, start: &DVector<f64>, tol: f64) -> DVector<f64> {
        let h = self.quadratic();
        let q = self.linear(gamma);
        let lip = h.clone().symmetric_eigen().eigenvalues.max().max(1e-300);
        let grad = |u: &DVector<f64>| &h * u + &q;
        let mut x = self.project(start);
        let mut y = x.clone();
        let mut theta: f64 = 1.0;
        for _ in 0..2_000_000 {
            let x_next = self.project(&(&y - grad(&y) / lip));
            let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
            // Gradient-based adaptive restart.
            if (&y - &x_next).dot(&(&x_next - &x)) > 0.0 {
                y = x_next.clone();
                theta = 1.0;
            } else {
                y = &x_next + (&x_next - &x) * ((theta - 1.0) / theta_next);
                theta = theta_next;
            }
            x = x_next;
            let gm = (&x - self.project(&(&x - grad(&x) / lip))) * lip;
            if gm.norm() <= tol {
                break;
            }
        }
        x
    }

    /// Minimum variance subject to `E[x_T] = d`, by bisection on `γ`.
    pub fn solve(&self, x0_growth: f64, d: f64) -> TreeSolution {
        let tol = 1e-12;
        let mut u = DVector::zeros(self.dim);
        let mean_at = |gamma: f64, u: &mut DVector<f64>| {
            *u = self.minimize(gamma, u, tol);
            self.moments(u).0
        };
        let mut lo = d;
        let mut width = (d - x0_growth).abs().max(1e-3);
        let mut hi = d + width;
        while mean_at(hi, &mut u) < d {
            lo = hi;
            width *= 2.0;
            hi = d + width;
            assert!(width < 1e8, "target unattainable in the tree");
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mean_at(mid, &mut u) < d {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-14 * (1.0 + hi.abs()) {
                break;
            }
        }
        let gamma = 0.5 * (lo + hi);
        u = self.minimize(gamma, &u, tol);
        let (mean, variance) = self.moments(&u);
        TreeSolution { u, mean, variance, gamma }
    }

    /// Checks every intermediate node `1 ≤ t < T` of positive probability:
    /// the continuation of the optimal fixed-γ policy minimizes
    /// `E[(x_T − γ)² | node]`, so it lies on the truncated mean-variance
    /// boundary, and it is efficient iff its conditional mean is at least the
    /// riskless growth of the node wealth. Returns the first offending period.
    pub fn node_violation(&self, sol: &TreeSolution, tol: f64) -> Option<usize> {
        let mut first = None;
        for node in &self.nodes {
            if node.t == 0 || node.prob <= 0.0 {
                continue;
            }
            let x = node.base + node.coef.rows(0, node.coef.len()).dot(&sol.u.rows(0, node.coef.len()));
            let growth: f64 = self.rates[node.t..].iter().product();
            let cond_mean = self.conditional_mean(node, &sol.u);
            if cond_mean < growth * x - tol * (1.0 + x.abs()) {
                first = Some(first.map_or(node.t, |f: usize| f.min(node.t)));
            }
        }
        first
    }

    fn conditional_mean(&self, node: &Node, u: &DVector<f64>) -> f64 {
        // Leaves below `node` are a contiguous block in the breadth-first order.
        let per_level: Vec<usize> = self.level_sizes();
        let index_in_level = self.nodes.iter().filter(|m| m.t == node.t && m.offset < node.offset).count();
        let below = self.leaves.len() / per_level[node.t];
        let leaves = &self.leaves[index_in_level * below..(index_in_level + 1) * below];
        let mass: f64 = leaves.iter().map(|l| l.0).sum();
        leaves.iter().map(|(p, b, a)| p * (b + a.dot(u))).sum::<f64>() / mass
    }

    fn level_sizes(&self) -> Vec<usize> {
        (0..self.horizon).map(|t| self.nodes.iter().filter(|m| m.t == t).count()).collect()
    }
}
