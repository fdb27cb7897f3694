use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::market::{Family, Market};
use crate::rng;

/// How expectations over `P_t` are computed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExpectationBackend {
    /// Exact weighted sums over the atoms of discrete laws.
    ExactDiscrete,
    /// Sample average over a frozen common-random-number set per period. With
    /// `moment_matching` the set is affinely corrected so that its mean and
    /// covariance equal the declared moments exactly.
    Saa { samples: usize, seed: u64, moment_matching: bool },
}

impl ExpectationBackend {
    pub fn saa(samples: usize, seed: u64) -> Self {
        ExpectationBackend::Saa { samples, seed, moment_matching: true }
    }

    pub fn label(&self) -> String {
        match self {
            ExpectationBackend::ExactDiscrete => "exact_discrete".into(),
            ExpectationBackend::Saa { samples, seed, .. } => format!("saa(samples={samples}, seed={seed})"),
        }
    }
}

/// Weighted support points of one period's excess return.
#[derive(Clone, Debug)]
pub struct ScenarioSet {
    n: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
}

pub(crate) const CHUNK: usize = 8192;

impl ScenarioSet {
    pub fn new(n: usize, points: Vec<f64>, weights: Vec<f64>) -> Self {
        assert_eq!(points.len(), n * weights.len());
        Self { n, points, weights }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.n..(i + 1) * self.n]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.points.chunks_exact(self.n).zip(self.weights.iter().copied())
    }

    /// Folds `f` over fixed-size chunks in parallel and returns the partial
    /// results in chunk order, so reductions are independent of thread count.
    pub(crate) fn map_chunks<A, F>(&self, f: F) -> Vec<A>
    where
        A: Send,
        F: Fn(&[f64], &[f64]) -> A + Sync,
    {
        let n = self.n;
        if self.len() <= CHUNK {
            return vec![f(&self.points, &self.weights)];
        }
        self.points.par_chunks(CHUNK * n).zip(self.weights.par_chunks(CHUNK)).map(|(p, w)| f(p, w)).collect()
    }

    pub fn mean(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.n);
        for (p, w) in self.iter() {
            for j in 0..self.n {
                m[j] += w * p[j];
            }
        }
        m
    }

    pub fn second_moment(&self) -> DMatrix<f64> {
        let n = self.n;
        let mut m = DMatrix::zeros(n, n);
        for (p, w) in self.iter() {
            for i in 0..n {
                for j in 0..=i {
                    m[(i, j)] += w * p[i] * p[j];
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                m[(j, i)] = m[(i, j)];
            }
        }
        m
    }
}

/// Frozen expectation operator for every period of a market.
#[derive(Clone, Debug)]
pub struct Backend {
    mode: ExpectationBackend,
    sets: Vec<ScenarioSet>,
}

impl Backend {
    pub fn build(market: &Market, mode: ExpectationBackend) -> Result<Self> {
        let n = market.n_assets();
        let sets = match mode {
            ExpectationBackend::ExactDiscrete => (0..market.horizon())
                .map(|t| match &market.period(t).family {
                    Family::Discrete { atoms } => Ok(ScenarioSet::new(
                        n,
                        atoms.iter().flat_map(|a| a.value.iter().copied()).collect(),
                        atoms.iter().map(|a| a.prob).collect(),
                    )),
                    other => Err(Error::BackendMismatch(format!(
                        "exact_discrete backend needs discrete laws; period {t} is {}",
                        other.name()
                    ))),
                })
                .collect::<Result<Vec<_>>>()?,
            ExpectationBackend::Saa { samples, seed, moment_matching } => {
                if samples < 2 {
                    return Err(Error::BackendMismatch("saa needs at least two samples".into()));
                }
                (0..market.horizon()).map(|t| saa_set(market, t, samples, seed, moment_matching)).collect::<Result<Vec<_>>>()?
            }
        };
        Ok(Self { mode, sets })
    }

    pub fn mode(&self) -> ExpectationBackend {
        self.mode
    }

    pub fn is_exact(&self) -> bool {
        matches!(self.mode, ExpectationBackend::ExactDiscrete)
    }

    pub fn horizon(&self) -> usize {
        self.sets.len()
    }

    pub fn set(&self, t: usize) -> &ScenarioSet {
        &self.sets[t]
    }
}

fn saa_set(market: &Market, t: usize, samples: usize, seed: u64, moment_matching: bool) -> Result<ScenarioSet> {
    let n = market.n_assets();
    let mut points = vec![0.0; samples * n];
    let key = seed ^ rng::SAA_DOMAIN;
    points.par_chunks_mut(CHUNK * n).enumerate().for_each(|(c, block)| {
        for (k, out) in block.chunks_exact_mut(n).enumerate() {
            let idx = (c * CHUNK + k) as u64;
            let mut r = rng::stream(key, idx, t);
            market.sample_into(t, &mut r, out);
        }
    });
    let weights = vec![1.0 / samples as f64; samples];
    let mut set = ScenarioSet::new(n, points, weights);
    if moment_matching && !matches!(market.period(t).family, Family::Discrete { .. }) {
        match_moments(&mut set, market.mean(t), &market.period(t).covariance)?;
    }
    Ok(set)
}

/// Affine correction `x ← μ + L_target L_sample⁻¹ (x − m̂)`.
fn match_moments(set: &mut ScenarioSet, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<()> {
    let n = set.n;
    let m_hat = set.mean();
    let s_hat = set.second_moment() - &m_hat * m_hat.transpose();
    let l_sample = s_hat.cholesky().ok_or_else(|| Error::BackendMismatch("sample covariance is singular".into()))?.l();
    let l_target = cov.clone().cholesky().ok_or_else(|| Error::BackendMismatch("covariance not PD".into()))?.l();
    let inv = l_sample
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or_else(|| Error::BackendMismatch("sample covariance is singular".into()))?;
    let a = l_target * inv;
    set.points.par_chunks_mut(n).for_each(|p| {
        let d: Vec<f64> = (0..n).map(|j| p[j] - m_hat[j]).collect();
        for i in 0..n {
            let mut acc = mean[i];
            for j in 0..n {
                acc += a[(i, j)] * d[j];
            }
            p[i] = acc;
        }
    });
    Ok(())
}
