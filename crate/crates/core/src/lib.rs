//! Monte Carlo pricing of collateralised, defaultable deals with funding
//! costs: credit, debit, collateral and funding adjustments solved together
//! by backward least-squares Monte Carlo.
//!
//! Every routine is generic over the scalar (`f32` or `f64`); the aliases
//! below fix it to `f64`.

// `!(x > 0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod closeout;
pub mod collateral;
pub mod deal;
pub mod error;
pub mod funding;
pub mod grid;
pub mod market;
pub mod regression;
pub mod scalar;
pub mod solver;

/// Engine version, recorded in reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use closeout::CloseoutKind;
pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Grid = grid::SimulationGrid<f64>;
pub type Scenarios = market::ScenarioSet<f64>;
pub type Drivers = market::DriverConfig<f64>;
pub type Contract = deal::Deal<f64>;
pub type Csa = collateral::CsaTerms<f64>;
pub type Policy = funding::LiquidityPolicy<f64>;
pub type Pricing = solver::PricingResult<f64>;
