//! Seeded Monte Carlo simulation of wealth under a policy.

use std::ops::Range;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::market::Market;
use crate::policy::Policy;
use crate::rng;

/// Paths per parallel block; fixed so results do not depend on thread count.
const BLOCK: usize = 4096;

/// Simulated wealth paths. Wealth is stored for periods `start..=T` and
/// returns for `start..T`.
#[derive(Clone, Debug)]
pub struct PathEnsemble {
    n_paths: usize,
    seed: u64,
    start: usize,
    horizon: usize,
    n_assets: usize,
    policy: String,
    wealth: Vec<f64>,
    returns: Vec<f64>,
}

impl PathEnsemble {
    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn policy_name(&self) -> &str {
        &self.policy
    }

    fn steps(&self) -> usize {
        self.horizon - self.start
    }

    pub fn wealth(&self, path: usize, t: usize) -> f64 {
        self.wealth[path * (self.steps() + 1) + (t - self.start)]
    }

    pub fn wealth_path(&self, path: usize) -> &[f64] {
        let w = self.steps() + 1;
        &self.wealth[path * w..(path + 1) * w]
    }

    pub fn returns(&self, path: usize, t: usize) -> &[f64] {
        let n = self.n_assets;
        let off = (path * self.steps() + (t - self.start)) * n;
        &self.returns[off..off + n]
    }

    pub fn terminal_wealth(&self, path: usize) -> f64 {
        self.wealth(path, self.horizon)
    }

    /// Applies `f` to fixed blocks of path indices in parallel, returning the
    /// per-block results in order.
    pub fn map_path_chunks<A, F>(&self, f: F) -> Vec<A>
    where
        A: Send,
        F: Fn(Range<usize>) -> A + Sync,
    {
        let blocks = self.n_paths.div_ceil(BLOCK);
        (0..blocks).into_par_iter().map(|b| f(b * BLOCK..((b + 1) * BLOCK).min(self.n_paths))).collect()
    }

    /// Recomputes every trajectory from the stored returns and reports the
    /// largest deviation from the stored wealth.
    pub fn replay_error(&self, policy: &Policy, market: &Market) -> f64 {
        self.map_path_chunks(|range| {
            let mut worst: f64 = 0.0;
            for i in range {
                let mut x = self.wealth(i, self.start);
                for t in self.start..self.horizon {
                    let u = policy.control(t, x);
                    let p = self.returns(i, t);
                    x = market.riskless(t) * x + p.iter().zip(u.iter()).map(|(a, b)| a * b).sum::<f64>();
                    worst = worst.max((x - self.wealth(i, t + 1)).abs());
                }
            }
            worst
        })
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Simulates `n_paths` trajectories of `x_{t+1} = s_t x_t + P_t'u_t` from the
/// policy's start period. Path `i` in period `t` draws from the stream keyed by
/// `(seed, i, t)`.
pub fn simulate(policy: &Policy, market: &Market, n_paths: usize, seed: u64) -> Result<PathEnsemble> {
    let table = policy.table();
    if table.horizon() != market.horizon() || table.n_assets() != market.n_assets() {
        return Err(Error::DimensionMismatch { expected: table.horizon(), got: market.horizon() });
    }
    if n_paths == 0 {
        return Err(Error::Config("n_paths must be positive".into()));
    }
    let start = policy.start();
    let horizon = market.horizon();
    let steps = horizon - start;
    let n = market.n_assets();
    let mut wealth = vec![0.0; n_paths * (steps + 1)];
    let mut returns = vec![0.0; n_paths * steps * n];
    wealth.par_chunks_mut(BLOCK * (steps + 1)).zip(returns.par_chunks_mut(BLOCK * steps * n)).enumerate().for_each(
        |(b, (wblock, rblock))| {
            for (k, (w, r)) in wblock.chunks_exact_mut(steps + 1).zip(rblock.chunks_exact_mut(steps * n)).enumerate() {
                let idx = (b * BLOCK + k) as u64;
                let mut x = policy.x0();
                w[0] = x;
                for s in 0..steps {
                    let t = start + s;
                    let p = &mut r[s * n..(s + 1) * n];
                    let mut g = rng::stream(seed, idx, t);
                    market.sample_into(t, &mut g, p);
                    let u = policy.control(t, x);
                    x = market.riskless(t) * x + p.iter().zip(u.iter()).map(|(a, b)| a * b).sum::<f64>();
                    w[s + 1] = x;
                }
            }
        },
    );
    Ok(PathEnsemble { n_paths, seed, start, horizon, n_assets: n, policy: policy.kind().name().to_string(), wealth, returns })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExceedanceReport {
    /// Fraction of paths with `x_t > threshold_t` for some `t` in `1..T`.
    pub probability: f64,
    pub standard_error: f64,
    /// `first_crossing[t]`: fraction first crossing at period `t` (index 0 unused).
    pub first_crossing: Vec<f64>,
    /// `above[t]`: fraction above the threshold at period `t`.
    pub above: Vec<f64>,
}

/// `thresholds[t]` for `t = 0..=T`; only `1..T` enter the probability.
pub fn exceedance_prob(ensemble: &PathEnsemble, thresholds: &[f64]) -> Result<ExceedanceReport> {
    let horizon = ensemble.horizon();
    if thresholds.len() != horizon + 1 {
        return Err(Error::DimensionMismatch { expected: horizon + 1, got: thresholds.len() });
    }
    let lo = ensemble.start().max(1);
    let parts = ensemble.map_path_chunks(|range| {
        let mut first = vec![0usize; horizon + 1];
        let mut above = vec![0usize; horizon + 1];
        for i in range {
            let mut crossed = false;
            for t in lo..horizon {
                if ensemble.wealth(i, t) > thresholds[t] {
                    above[t] += 1;
                    if !crossed {
                        first[t] += 1;
                        crossed = true;
                    }
                }
            }
        }
        (first, above)
    });
    let mut first = vec![0usize; horizon + 1];
    let mut above = vec![0usize; horizon + 1];
    for (f, a) in parts {
        for t in 0..=horizon {
            first[t] += f[t];
            above[t] += a[t];
        }
    }
    let nf = ensemble.n_paths() as f64;
    let p = first.iter().sum::<usize>() as f64 / nf;
    Ok(ExceedanceReport {
        probability: p,
        standard_error: (p * (1.0 - p) / nf).sqrt(),
        first_crossing: first.iter().map(|&k| k as f64 / nf).collect(),
        above: above.iter().map(|&k| k as f64 / nf).collect(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TerminalStats {
    pub mean: f64,
    pub variance: f64,
    pub mean_se: f64,
    pub variance_se: f64,
}

pub fn terminal_stats(ensemble: &PathEnsemble) -> TerminalStats {
    let n = ensemble.n_paths();
    let pivot = ensemble.terminal_wealth(0);
    let sum: f64 = ensemble.map_path_chunks(|r| r.map(|i| ensemble.terminal_wealth(i) - pivot).sum::<f64>()).into_iter().sum();
    let mean = pivot + sum / n as f64;
    let (m2, m4) = ensemble
        .map_path_chunks(|r| {
            r.map(|i| {
                let d = ensemble.terminal_wealth(i) - mean;
                (d * d, d * d * d * d)
            })
            .fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1))
        })
        .into_iter()
        .fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let nf = n as f64;
    let variance = if n > 1 { m2 / (nf - 1.0) } else { 0.0 };
    let pop = m2 / nf;
    TerminalStats { mean, variance, mean_se: (variance / nf).sqrt(), variance_se: ((m4 / nf - pop * pop).max(0.0) / nf).sqrt() }
}
