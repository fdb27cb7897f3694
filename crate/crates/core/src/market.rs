//! Capital market: riskless growth factors and per-period excess-return laws.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng;

/// One support point of a discrete excess-return law.
#[derive(Clone, Debug, PartialEq)]
pub struct Atom {
    pub value: Vec<f64>,
    pub prob: f64,
}

impl Atom {
    pub fn new(value: Vec<f64>, prob: f64) -> Self {
        Self { value, prob }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Family {
    Gaussian,
    /// Multivariate t; the declared covariance is the true covariance, so the
    /// scale matrix is `Cov·(df−2)/df`.
    StudentT {
        df: u32,
    },
    Discrete {
        atoms: Vec<Atom>,
    },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian",
            Family::StudentT { .. } => "student_t",
            Family::Discrete { .. } => "discrete",
        }
    }

    /// Whether the law puts mass outside every bounded set.
    pub fn is_unbounded(&self) -> bool {
        !matches!(self, Family::Discrete { .. })
    }
}

/// Law of the excess return vector `P_t` for a single period.
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodDistribution {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub family: Family,
}

impl PeriodDistribution {
    pub fn gaussian(mean: DVector<f64>, covariance: DMatrix<f64>) -> Self {
        Self { mean, covariance, family: Family::Gaussian }
    }

    pub fn student_t(mean: DVector<f64>, covariance: DMatrix<f64>, df: u32) -> Self {
        Self { mean, covariance, family: Family::StudentT { df } }
    }

    /// Discrete law; mean and covariance are the atom-weighted moments.
    pub fn discrete(atoms: Vec<Atom>) -> Result<Self> {
        let n = atoms.first().map(|a| a.value.len()).ok_or_else(|| Error::InvalidMarket("discrete law without atoms".into()))?;
        if n == 0 {
            return Err(Error::InvalidMarket("atoms have zero dimension".into()));
        }
        if let Some(bad) = atoms.iter().find(|a| a.value.len() != n) {
            return Err(Error::DimensionMismatch { expected: n, got: bad.value.len() });
        }
        let (mean, covariance) = atom_moments(&atoms, n);
        Ok(Self { mean, covariance, family: Family::Discrete { atoms } })
    }

    /// Builds a law from annual statistics of total returns: expected returns,
    /// volatilities and a correlation matrix, converted to excess returns over
    /// the riskless growth factor `riskless` (e.g. 1.05).
    pub fn from_annual_stats(
        expected_returns: &[f64],
        volatilities: &[f64],
        correlations: &DMatrix<f64>,
        riskless: f64,
        family: Family,
    ) -> Result<Self> {
        let n = expected_returns.len();
        if volatilities.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: volatilities.len() });
        }
        if correlations.nrows() != n || correlations.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: correlations.nrows() });
        }
        let mean = DVector::from_iterator(n, expected_returns.iter().map(|r| 1.0 + r - riskless));
        let covariance = DMatrix::from_fn(n, n, |i, j| volatilities[i] * volatilities[j] * correlations[(i, j)]);
        if let Family::Discrete { .. } = family {
            return Err(Error::InvalidMarket("annual statistics cannot define a discrete law".into()));
        }
        Ok(Self { mean, covariance, family })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `E[P P'] = Cov + mean·mean'`.
    pub fn second_moment(&self) -> DMatrix<f64> {
        &self.covariance + &self.mean * self.mean.transpose()
    }
}

fn atom_moments(atoms: &[Atom], n: usize) -> (DVector<f64>, DMatrix<f64>) {
    let mut mean = DVector::zeros(n);
    for a in atoms {
        mean += DVector::from_column_slice(&a.value) * a.prob;
    }
    let mut cov = DMatrix::zeros(n, n);
    for a in atoms {
        let d = DVector::from_column_slice(&a.value) - &mean;
        cov += &d * d.transpose() * a.prob;
    }
    (mean, cov)
}

/// Unvalidated market description.
#[derive(Clone, Debug, PartialEq)]
pub struct MarketSpec {
    pub riskless_rates: Vec<f64>,
    pub periods: Vec<PeriodDistribution>,
}

impl MarketSpec {
    pub fn new(riskless_rates: Vec<f64>, periods: Vec<PeriodDistribution>) -> Self {
        Self { riskless_rates, periods }
    }

    /// Same law and riskless rate in every period.
    pub fn iid(horizon: usize, riskless: f64, dist: PeriodDistribution) -> Self {
        Self { riskless_rates: vec![riskless; horizon], periods: vec![dist; horizon] }
    }

    pub fn horizon(&self) -> usize {
        self.periods.len()
    }

    pub fn validate(self) -> Result<Market> {
        Market::new(self)
    }
}

#[derive(Clone, Debug)]
struct PeriodModel {
    second_moment: DMatrix<f64>,
    /// Lower Cholesky factor of the sampling scale matrix.
    sampling_factor: DMatrix<f64>,
    cumulative: Vec<f64>,
    unconstrained: DVector<f64>,
    b: f64,
}

/// A validated market. Immutable and shareable across threads.
#[derive(Clone, Debug)]
pub struct Market {
    spec: MarketSpec,
    models: Vec<PeriodModel>,
    rho: Vec<f64>,
}

const PD_REL_TOL: f64 = 1e-12;

fn check_spd(m: &DMatrix<f64>, what: &str, t: usize) -> Result<()> {
    let n = m.nrows();
    let scale = m.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(f64::MIN_POSITIVE);
    for i in 0..n {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::InvalidMarket(format!("period {t}: {what} is not symmetric")));
            }
        }
    }
    let eig = m.clone().symmetric_eigen();
    let min = eig.eigenvalues.min();
    let max = eig.eigenvalues.max();
    if !(min > PD_REL_TOL * max.max(1.0)) || !min.is_finite() {
        return Err(Error::InvalidMarket(format!("period {t}: {what} is not positive definite (smallest eigenvalue {min:.3e})")));
    }
    Ok(())
}

impl Market {
    fn new(spec: MarketSpec) -> Result<Self> {
        let horizon = spec.periods.len();
        if horizon == 0 {
            return Err(Error::InvalidMarket("horizon must be at least 1".into()));
        }
        if spec.riskless_rates.len() != horizon {
            return Err(Error::InvalidMarket(format!("{} riskless rates for horizon {horizon}", spec.riskless_rates.len())));
        }
        for (t, s) in spec.riskless_rates.iter().enumerate() {
            if !(*s > 0.0) || !s.is_finite() {
                return Err(Error::InvalidMarket(format!("period {t}: riskless rate {s} is not positive")));
            }
        }
        let n = spec.periods[0].dim();
        if n == 0 {
            return Err(Error::InvalidMarket("no risky assets".into()));
        }
        let mut models = Vec::with_capacity(horizon);
        for (t, p) in spec.periods.iter().enumerate() {
            models.push(Self::check_period(t, p, n)?);
        }
        let mut rho = vec![1.0; horizon + 1];
        for t in (0..horizon).rev() {
            rho[t] = spec.riskless_rates[t] * rho[t + 1];
        }
        Ok(Self { spec, models, rho })
    }

    fn check_period(t: usize, p: &PeriodDistribution, n: usize) -> Result<PeriodModel> {
        if p.mean.len() != n || p.covariance.nrows() != n || p.covariance.ncols() != n {
            return Err(Error::InvalidMarket(format!("period {t}: dimension differs from {n}")));
        }
        if p.mean.iter().chain(p.covariance.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidMarket(format!("period {t}: non-finite moments")));
        }
        check_spd(&p.covariance, "covariance", t)?;
        let mut cumulative = Vec::new();
        let mut scale = 1.0;
        match &p.family {
            Family::Gaussian => {}
            Family::StudentT { df } => {
                if *df <= 2 {
                    return Err(Error::InvalidMarket(format!("period {t}: student-t needs df > 2, got {df}")));
                }
                scale = (*df as f64 - 2.0) / *df as f64;
            }
            Family::Discrete { atoms } => {
                let mut acc = 0.0;
                for a in atoms {
                    if a.value.len() != n {
                        return Err(Error::InvalidMarket(format!("period {t}: atom dimension differs from {n}")));
                    }
                    if !(a.prob > 0.0) {
                        return Err(Error::InvalidMarket(format!("period {t}: atom probability {} is not positive", a.prob)));
                    }
                    acc += a.prob;
                    cumulative.push(acc);
                }
                if (acc - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidMarket(format!("period {t}: atom probabilities sum to {acc}")));
                }
                let (mean, cov) = atom_moments(atoms, n);
                if (&mean - &p.mean).amax() > 1e-10 || (&cov - &p.covariance).amax() > 1e-10 {
                    return Err(Error::InvalidMarket(format!("period {t}: stored moments differ from atom-weighted moments")));
                }
            }
        }
        let second_moment = p.second_moment();
        check_spd(&second_moment, "second moment E[PP']", t)?;
        let chol = second_moment
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidMarket(format!("period {t}: E[PP'] Cholesky failed")))?;
        let unconstrained = chol.solve(&p.mean);
        let b = p.mean.dot(&unconstrained);
        if !(1.0 - b > 0.0) {
            return Err(Error::InvalidMarket(format!("period {t}: 1 − E[P']E⁻¹[PP']E[P] = {} ≤ 0", 1.0 - b)));
        }
        let sampling_factor = (p.covariance.clone() * scale)
            .cholesky()
            .ok_or_else(|| Error::InvalidMarket(format!("period {t}: covariance Cholesky failed")))?
            .l();
        Ok(PeriodModel { second_moment, sampling_factor, cumulative, unconstrained, b })
    }

    pub fn spec(&self) -> &MarketSpec {
        &self.spec
    }

    pub fn horizon(&self) -> usize {
        self.spec.periods.len()
    }

    pub fn n_assets(&self) -> usize {
        self.spec.periods[0].dim()
    }

    pub fn riskless(&self, t: usize) -> f64 {
        self.spec.riskless_rates[t]
    }

    pub fn period(&self, t: usize) -> &PeriodDistribution {
        &self.spec.periods[t]
    }

    pub fn mean(&self, t: usize) -> &DVector<f64> {
        &self.spec.periods[t].mean
    }

    pub fn second_moment(&self, t: usize) -> &DMatrix<f64> {
        &self.models[t].second_moment
    }

    /// `E⁻¹[P_t P_t'] E[P_t]`, the unconstrained risky portfolio.
    pub fn unconstrained_portfolio(&self, t: usize) -> &DVector<f64> {
        &self.models[t].unconstrained
    }

    /// `B_t = E[P_t'] E⁻¹[P_t P_t'] E[P_t]`, always in (0, 1) for a valid market
    /// with nonzero mean.
    pub fn b(&self, t: usize) -> f64 {
        self.models[t].b
    }

    /// `ρ_t = ∏_{ℓ=t}^{T−1} s_ℓ`, with `ρ_T = 1`.
    pub fn rho(&self, t: usize) -> f64 {
        self.rho[t]
    }

    pub fn rhos(&self) -> &[f64] {
        &self.rho
    }

    pub fn is_discrete(&self) -> bool {
        self.spec.periods.iter().all(|p| matches!(p.family, Family::Discrete { .. }))
    }

    /// Draws one realization of `P_t` into `out`.
    pub fn sample_into<R: Rng + ?Sized>(&self, t: usize, rng: &mut R, out: &mut [f64]) {
        let p = &self.spec.periods[t];
        let m = &self.models[t];
        let n = p.dim();
        match &p.family {
            Family::Discrete { atoms } => {
                let u: f64 = rng.random();
                let k = m.cumulative.iter().position(|&c| u < c).unwrap_or(atoms.len() - 1);
                out.copy_from_slice(&atoms[k].value);
            }
            family => {
                let mut z = [0.0f64; 16];
                let mut zv;
                let z: &mut [f64] = if n <= 16 {
                    &mut z[..n]
                } else {
                    zv = vec![0.0; n];
                    &mut zv
                };
                for zi in z.iter_mut() {
                    *zi = StandardNormal.sample(rng);
                }
                let mix = match family {
                    Family::StudentT { df } => {
                        let w: f64 = ChiSquared::new(*df as f64).expect("df > 2").sample(rng);
                        (*df as f64 / w).sqrt()
                    }
                    _ => 1.0,
                };
                for i in 0..n {
                    let mut acc = 0.0;
                    for j in 0..=i {
                        acc += m.sampling_factor[(i, j)] * z[j];
                    }
                    out[i] = p.mean[i] + mix * acc;
                }
            }
        }
    }

    /// Draw addressed by `(seed, index, t)`; identical keys give identical draws.
    pub fn sample_period(&self, t: usize, seed: u64, index: u64) -> DVector<f64> {
        let mut out = DVector::zeros(self.n_assets());
        let mut r = rng::stream(seed, index, t);
        self.sample_into(t, &mut r, out.as_mut_slice());
        out
    }
}
