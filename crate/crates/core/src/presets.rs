//! The three-index pension fund market (S&P 500, emerging markets, US small
//! stocks) over three years with a 5% riskless rate, and its three cone
//! settings.

use nalgebra::{DMatrix, DVector};

use crate::cones::ConvexCone;
use crate::market::{Family, MarketSpec, PeriodDistribution};

pub const HORIZON: usize = 3;
pub const RISKLESS: f64 = 1.05;
pub const X0: f64 = 1.0;
pub const TARGET: f64 = 1.35;

pub const EXPECTED_RETURNS: [f64; 3] = [0.14, 0.16, 0.17];
/// The published "variance" row, read as volatility.
pub const VOLATILITIES: [f64; 3] = [0.185, 0.30, 0.24];
pub const CORRELATIONS: [f64; 9] = [1.0, 0.64, 0.79, 0.64, 1.0, 0.75, 0.79, 0.75, 1.0];

pub fn example_period(family: Family) -> PeriodDistribution {
    let corr = DMatrix::from_row_slice(3, 3, &CORRELATIONS);
    PeriodDistribution::from_annual_stats(&EXPECTED_RETURNS, &VOLATILITIES, &corr, RISKLESS, family)
        .expect("annual statistics are well formed")
}

pub fn example_market(family: Family) -> MarketSpec {
    MarketSpec::iid(HORIZON, RISKLESS, example_period(family))
}

/// Unconstrained trading.
pub fn case1_cone() -> ConvexCone {
    ConvexCone::WholeSpace(3)
}

/// Half-space bounded by the hyperplane orthogonal to the mean excess return.
pub fn case2_cone() -> ConvexCone {
    let p = example_period(Family::Gaussian);
    ConvexCone::half_space(p.mean).expect("nonzero mean")
}

/// No shorting of the second and third index, net long overall.
pub fn case3_cone() -> ConvexCone {
    ConvexCone::polyhedral(DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0]))
        .expect("rows are nonzero")
}

pub fn mean_excess() -> DVector<f64> {
    example_period(Family::Gaussian).mean
}
