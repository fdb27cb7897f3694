#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cones;
pub mod error;
pub mod market;
pub mod presets;
pub mod rng;

pub mod cli;
pub mod policy;
pub mod sim;
pub mod solver;
pub mod tcie;
pub mod vssm;

pub use cones::ConvexCone;
pub use error::{Error, Result};
pub use market::{Atom, Family, Market, MarketSpec, PeriodDistribution};
