//! Stochastic drivers, scenario generation and discounting.
//!
//! Every driver is simulated on the master [`SimulationGrid`] with one of
//! three process families: a deterministic curve, an exact-step Vasicek
//! process or a geometric Brownian motion. Each (path, driver) pair owns an
//! independent counter-based random substream, so a scenario set is a pure
//! function of `(config, grid, n_paths, seed)` and adding paths or drivers
//! never perturbs existing draws.
//!
//! [`SimulationGrid`]: crate::grid::SimulationGrid

mod bonds;
mod defaults;
pub mod dump;
mod rng;
mod scenario;

pub use bonds::simple_zcb;
pub use defaults::{first_to_default_intensity, sample_default_times, DefaultSample, Party};
pub use scenario::{simulate_scenarios, DriverPaths, ScenarioSet, SimulationDiagnostics};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Stochastic drivers known to the engine.
///
/// The discriminant is the driver's fixed random-substream slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Driver {
    ShortRate = 0,
    CollateralPlus = 1,
    CollateralMinus = 2,
    FundingPlus = 3,
    FundingMinus = 4,
    HedgingPlus = 5,
    HedgingMinus = 6,
    Overnight = 7,
    LiquidityPlus = 8,
    LiquidityMinus = 9,
    IntensityInvestor = 10,
    IntensityCounterparty = 11,
    ForeignRate = 12,
    Fx = 13,
    Underlying = 14,
}

impl Driver {
    pub const ALL: [Driver; 15] = [
        Driver::ShortRate,
        Driver::CollateralPlus,
        Driver::CollateralMinus,
        Driver::FundingPlus,
        Driver::FundingMinus,
        Driver::HedgingPlus,
        Driver::HedgingMinus,
        Driver::Overnight,
        Driver::LiquidityPlus,
        Driver::LiquidityMinus,
        Driver::IntensityInvestor,
        Driver::IntensityCounterparty,
        Driver::ForeignRate,
        Driver::Fx,
        Driver::Underlying,
    ];

    pub fn slot(self) -> u64 {
        self as u64
    }

    pub fn name(self) -> &'static str {
        match self {
            Driver::ShortRate => "short_rate",
            Driver::CollateralPlus => "collateral_plus",
            Driver::CollateralMinus => "collateral_minus",
            Driver::FundingPlus => "funding_plus",
            Driver::FundingMinus => "funding_minus",
            Driver::HedgingPlus => "hedging_plus",
            Driver::HedgingMinus => "hedging_minus",
            Driver::Overnight => "overnight",
            Driver::LiquidityPlus => "liquidity_plus",
            Driver::LiquidityMinus => "liquidity_minus",
            Driver::IntensityInvestor => "intensity_investor",
            Driver::IntensityCounterparty => "intensity_counterparty",
            Driver::ForeignRate => "foreign_rate",
            Driver::Fx => "fx",
            Driver::Underlying => "underlying",
        }
    }

    pub fn is_intensity(self) -> bool {
        matches!(self, Driver::IntensityInvestor | Driver::IntensityCounterparty)
    }

    /// Asset-like drivers are simulated after all rate drivers because their
    /// drift may reference them.
    pub fn is_asset(self) -> bool {
        matches!(self, Driver::Fx | Driver::Underlying)
    }
}

impl fmt::Display for Driver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Driver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Driver::ALL
            .iter()
            .copied()
            .find(|d| d.name() == s)
            .ok_or_else(|| Error::config(format!("unknown driver `{s}`")))
    }
}

/// Deterministic term structure of a rate or level, piecewise linear in time
/// with flat extrapolation.
#[derive(Clone, Debug, PartialEq)]
pub enum Curve<S> {
    Flat(S),
    Linear { times: Vec<S>, values: Vec<S> },
}

impl<S: Scalar> Curve<S> {
    pub fn linear(times: Vec<S>, values: Vec<S>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::config("curve needs matching, non-empty times and values"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::config("curve times must be strictly increasing"));
        }
        Ok(Curve::Linear { times, values })
    }

    pub fn value(&self, t: S) -> S {
        match self {
            Curve::Flat(v) => *v,
            Curve::Linear { times, values } => {
                let n = times.len();
                if t <= times[0] {
                    return values[0];
                }
                if t >= times[n - 1] {
                    return values[n - 1];
                }
                let j = times.partition_point(|x| *x <= t) - 1;
                let w = (t - times[j]) / (times[j + 1] - times[j]);
                values[j] + w * (values[j + 1] - values[j])
            }
        }
    }

    /// Exact integral over `[a, b]`.
    pub fn integral(&self, a: S, b: S) -> S {
        if b <= a {
            return S::zero();
        }
        match self {
            Curve::Flat(v) => *v * (b - a),
            Curve::Linear { times, .. } => {
                // breakpoints inside (a, b) split the integral into linear pieces
                let mut knots = vec![a];
                knots.extend(times.iter().copied().filter(|t| *t > a && *t < b));
                knots.push(b);
                let half = S::lit(0.5);
                knots
                    .windows(2)
                    .map(|w| (w[1] - w[0]) * half * (self.value(w[0]) + self.value(w[1])))
                    .sum()
            }
        }
    }

    pub fn min_value(&self) -> S {
        match self {
            Curve::Flat(v) => *v,
            Curve::Linear { values, .. } => values.iter().copied().fold(S::infinity(), S::min),
        }
    }

    /// Pointwise sum with a constant.
    pub fn shifted(&self, by: S) -> Self {
        match self {
            Curve::Flat(v) => Curve::Flat(*v + by),
            Curve::Linear { times, values } => Curve::Linear {
                times: times.clone(),
                values: values.iter().map(|v| *v + by).collect(),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VasicekParams<S> {
    pub mean_reversion: S,
    pub long_run: S,
    pub volatility: S,
    pub initial: S,
}

/// Growth rate of a geometric Brownian driver.
#[derive(Clone, Debug, PartialEq)]
pub enum Drift<S> {
    /// Risk-neutral growth at `r - q`.
    RiskFree,
    /// Growth at the funding rate minus the dividend yield.
    Funding(RateSource<S>),
    /// Growth at the hedging (repo/lending) rate.
    Hedging(RateSource<S>),
    /// FX growth `r - r^e` under the domestic risk-neutral measure.
    Foreign,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GbmParams<S> {
    pub initial: S,
    pub volatility: S,
    pub drift: Drift<S>,
    pub dividend_yield: S,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ProcessSpec<S> {
    Deterministic(Curve<S>),
    Vasicek(VasicekParams<S>),
    GeometricBrownian(GbmParams<S>),
}

impl<S: Scalar> ProcessSpec<S> {
    pub fn flat(v: S) -> Self {
        ProcessSpec::Deterministic(Curve::Flat(v))
    }

    pub fn is_stochastic(&self) -> bool {
        !matches!(self, ProcessSpec::Deterministic(_))
    }
}

/// Where a simple accrual rate (collateral, funding, hedging) comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum RateSource<S> {
    /// The risk-free rate plus a constant spread. With a zero spread the
    /// period bond coincides with the risk-free bond exactly.
    RiskFree { spread: S },
    /// A simulated driver read at the start of each accrual period.
    Driver(Driver),
}

impl<S: Scalar> RateSource<S> {
    pub fn risk_free() -> Self {
        RateSource::RiskFree { spread: S::zero() }
    }
}

/// Process specifications for all drivers plus their Brownian correlations.
#[derive(Clone, Debug, PartialEq)]
pub struct DriverConfig<S> {
    pub processes: BTreeMap<Driver, ProcessSpec<S>>,
    /// Pairwise Brownian correlations between stochastic drivers; pairs not
    /// listed are uncorrelated.
    pub correlations: Vec<(Driver, Driver, S)>,
    /// Gaussian-copula correlation between the two default-time uniforms.
    pub default_correlation: S,
}

impl<S: Scalar> Default for DriverConfig<S> {
    fn default() -> Self {
        let mut processes = BTreeMap::new();
        processes.insert(Driver::ShortRate, ProcessSpec::flat(S::zero()));
        Self {
            processes,
            correlations: Vec::new(),
            default_correlation: S::zero(),
        }
    }
}

impl<S: Scalar> DriverConfig<S> {
    pub fn with(mut self, driver: Driver, spec: ProcessSpec<S>) -> Self {
        self.processes.insert(driver, spec);
        self
    }

    pub fn with_correlation(mut self, a: Driver, b: Driver, rho: S) -> Self {
        self.correlations.push((a, b, rho));
        self
    }

    pub fn with_default_correlation(mut self, rho: S) -> Self {
        self.default_correlation = rho;
        self
    }

    pub fn spec(&self, d: Driver) -> Option<&ProcessSpec<S>> {
        self.processes.get(&d)
    }

    /// Stochastic drivers in slot order.
    pub fn stochastic_drivers(&self) -> Vec<Driver> {
        self.processes
            .iter()
            .filter(|(_, s)| s.is_stochastic())
            .map(|(d, _)| *d)
            .collect()
    }

    fn check_source(&self, src: &RateSource<S>, ctx: &str) -> Result<()> {
        if let RateSource::Driver(d) = src {
            if !self.processes.contains_key(d) {
                return Err(Error::config(format!("{ctx} references undeclared driver `{d}`")));
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let one = S::one();
        if !(self.default_correlation >= -one && self.default_correlation <= one) {
            return Err(Error::config(format!(
                "default correlation {} outside [-1, 1]",
                self.default_correlation
            )));
        }
        for (d, spec) in &self.processes {
            match spec {
                ProcessSpec::Deterministic(c) => {
                    if d.is_intensity() && c.min_value() < S::zero() {
                        return Err(Error::config(format!(
                            "deterministic intensity `{d}` must be nonnegative"
                        )));
                    }
                }
                ProcessSpec::Vasicek(p) => {
                    if p.mean_reversion < S::zero() || p.volatility < S::zero() {
                        return Err(Error::config(format!(
                            "Vasicek driver `{d}` needs nonnegative mean reversion and volatility"
                        )));
                    }
                }
                ProcessSpec::GeometricBrownian(p) => {
                    if matches!(d, Driver::ShortRate | Driver::ForeignRate) {
                        return Err(Error::config(format!("`{d}` must be deterministic or Vasicek")));
                    }
                    if !(p.initial > S::zero()) || p.volatility < S::zero() {
                        return Err(Error::config(format!(
                            "GBM driver `{d}` needs positive initial value and nonnegative volatility"
                        )));
                    }
                    match &p.drift {
                        Drift::Funding(src) | Drift::Hedging(src) => {
                            self.check_source(src, &format!("drift of `{d}`"))?;
                            if let RateSource::Driver(x) = src {
                                if x.is_asset() {
                                    return Err(Error::config(format!(
                                        "drift of `{d}` cannot reference asset driver `{x}`"
                                    )));
                                }
                            }
                        }
                        Drift::RiskFree | Drift::Foreign => {}
                    }
                }
            }
        }
        let stochastic = self.stochastic_drivers();
        for (a, b, rho) in &self.correlations {
            for x in [a, b] {
                if !stochastic.contains(x) {
                    return Err(Error::config(format!(
                        "correlation references non-stochastic driver `{x}`"
                    )));
                }
            }
            if a == b {
                return Err(Error::config(format!("self-correlation listed for `{a}`")));
            }
            if !(*rho >= -one && *rho <= one) {
                return Err(Error::config(format!("correlation {rho} outside [-1, 1]")));
            }
        }
        self.correlation_factor().map(|_| ())
    }

    /// Full correlation matrix over the stochastic drivers (slot order).
    pub fn correlation_matrix(&self) -> (Vec<Driver>, Vec<Vec<S>>) {
        let ds = self.stochastic_drivers();
        let n = ds.len();
        let mut m = vec![vec![S::zero(); n]; n];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = S::one();
        }
        for (a, b, rho) in &self.correlations {
            if let (Some(i), Some(j)) = (ds.iter().position(|d| d == a), ds.iter().position(|d| d == b)) {
                m[i][j] = *rho;
                m[j][i] = *rho;
            }
        }
        (ds, m)
    }

    /// Lower Cholesky factor of the correlation matrix, accepting positive
    /// semidefinite matrices.
    pub fn correlation_factor(&self) -> Result<Vec<Vec<S>>> {
        let (_, m) = self.correlation_matrix();
        cholesky_psd(&m)
    }
}

pub(crate) fn cholesky_psd<S: Scalar>(m: &[Vec<S>]) -> Result<Vec<Vec<S>>> {
    let n = m.len();
    let tol = S::lit(1e-10);
    let mut l = vec![vec![S::zero(); n]; n];
    for j in 0..n {
        let mut d = m[j][j];
        for x in &l[j][..j] {
            d -= *x * *x;
        }
        if d < -tol {
            return Err(Error::config("correlation matrix is not positive semidefinite"));
        }
        let ljj = if d > tol { d.sqrt() } else { S::zero() };
        l[j][j] = ljj;
        for i in (j + 1)..n {
            let mut s = m[i][j];
            for (a, b) in l[i][..j].iter().zip(&l[j][..j]) {
                s -= *a * *b;
            }
            if ljj > S::zero() {
                l[i][j] = s / ljj;
            } else if s.abs() > tol {
                return Err(Error::config("correlation matrix is not positive semidefinite"));
            }
        }
    }
    Ok(l)
}
