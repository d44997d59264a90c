//! Backward least-squares Monte Carlo solution of the funding-inclusive
//! pricing recursion, the forward pathwise oracle, and result types.

mod backward;
mod inputs;
mod oracle;

pub use backward::backward_cfbva_price;
pub use inputs::{IntervalPayoff, PricingInputs};
pub use oracle::forward_pathwise_oracle;

use crate::closeout::{CloseoutKind, OnDefaultOutcome};
use crate::collateral::CollateralLedger;
use crate::funding::FundingLedger;
use crate::regression::RegressionSpec;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct SolverSpec {
    pub regression: RegressionSpec,
    /// Backward sweeps used to settle the collateral mark-to-market against
    /// its own margining cost.
    pub collateral_sweeps: usize,
    /// Keep the collateral and funding ledgers and the default outcomes in the
    /// result.
    pub keep_ledgers: bool,
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            regression: RegressionSpec::default(),
            collateral_sweeps: 2,
            keep_ledgers: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    /// Default-free collateral mark-to-market on the margining grid.
    Collateral,
    /// Default-free close-out valuation.
    Closeout,
    /// The funding-inclusive recursion on the funding grid.
    Funding,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Collateral => "collateral",
            Stage::Closeout => "closeout",
            Stage::Funding => "funding",
        }
    }
}

/// Regression and resolution diagnostics of one backward step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepDiagnostics {
    pub stage: Stage,
    pub time: f64,
    pub paths: usize,
    pub residual_norm: f64,
    pub condition: f64,
    pub mean_fallback: bool,
    pub ridge: bool,
    /// Paths where neither funding branch had the sign it assumes (possible
    /// only with an explicit hedge); the position was set to zero.
    pub split_violations: usize,
}

/// Price components as path averages. They add up to the price; the
/// regression residual is the gap between the backward price and the
/// average of the realised pathwise cash flows.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Decomposition<S> {
    /// Deal cash flows up to the first default.
    pub deal: S,
    /// Margining cost of the collateral account.
    pub margining: S,
    /// Funding and hedge carry costs.
    pub funding: S,
    /// Close-out amount received at default.
    pub closeout: S,
    /// Loss on a counterparty default.
    pub cva: S,
    /// Gain on an investor default.
    pub dva: S,
    /// Loss on re-hypothecated collateral.
    pub rehypothecation: S,
    pub regression_residual: S,
}

impl<S: Scalar> Decomposition<S> {
    pub fn total(&self) -> S {
        self.deal
            + self.margining
            + self.funding
            + self.closeout
            + self.cva
            + self.dva
            + self.rehypothecation
            + self.regression_residual
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Backward,
    ForwardOracle,
}

#[derive(Clone, Debug)]
pub struct PricingResult<S> {
    pub method: Method,
    pub value: S,
    pub standard_error: S,
    pub decomposition: Decomposition<S>,
    pub steps: Vec<StepDiagnostics>,
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub closeout: CloseoutKind,
    pub default_paths: usize,
    pub split_violations: usize,
    pub collateral: Option<CollateralLedger<S>>,
    pub funding: Option<FundingLedger<S>>,
    pub defaults: Vec<OnDefaultOutcome<S>>,
}

/// Per-path sums of discounted cash flows by component.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct PathSums<S> {
    pub deal: S,
    pub margining: S,
    pub funding: S,
    pub closeout: S,
    pub cva: S,
    pub dva: S,
    pub rehypothecation: S,
}

impl<S: Scalar> PathSums<S> {
    pub fn add_interval(&mut self, disc: S, ip: &IntervalPayoff<S>) {
        self.deal += disc * ip.deal;
        self.margining += disc * ip.margining;
        if let Some(t) = ip.theta {
            let d = disc * ip.default_discount;
            self.closeout += d * t.closeout;
            self.cva += d * t.cva;
            self.dva += d * t.dva;
            self.rehypothecation += d * t.rehypothecation;
        }
    }

    pub fn total(&self) -> S {
        self.deal + self.margining + self.funding + self.closeout + self.cva + self.dva + self.rehypothecation
    }
}

/// Mean components, pathwise-total standard error.
pub(crate) fn summarise<S: Scalar>(sums: &[PathSums<S>], value: S) -> (Decomposition<S>, S) {
    let n = S::from_usize(sums.len()).unwrap();
    let mean = |f: &dyn Fn(&PathSums<S>) -> S| sums.iter().map(f).sum::<S>() / n;
    let totals: Vec<S> = sums.iter().map(|s| s.total()).collect();
    let mu = totals.iter().copied().sum::<S>() / n;
    let var = if sums.len() > 1 {
        totals.iter().map(|t| (*t - mu) * (*t - mu)).sum::<S>() / (n - S::one())
    } else {
        S::zero()
    };
    let d = Decomposition {
        deal: mean(&|s| s.deal),
        margining: mean(&|s| s.margining),
        funding: mean(&|s| s.funding),
        closeout: mean(&|s| s.closeout),
        cva: mean(&|s| s.cva),
        dva: mean(&|s| s.dva),
        rehypothecation: mean(&|s| s.rehypothecation),
        regression_residual: S::zero(),
    };
    let explained = d.total();
    (
        Decomposition {
            regression_residual: value - explained,
            ..d
        },
        (var / n).sqrt(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collateral::CsaTerms;
    use crate::deal::{Deal, Payoff};
    use crate::funding::LiquidityPolicy;
    use crate::grid::SimulationGrid;
    use crate::market::{simulate_scenarios, Driver, DriverConfig, ProcessSpec, RateSource};

    fn flat(r: f64) -> DriverConfig<f64> {
        DriverConfig::default().with(Driver::ShortRate, ProcessSpec::flat(r))
    }

    #[test]
    fn single_step_matches_hand_arithmetic() {
        let grid = SimulationGrid::dense(1.0, 1).unwrap();
        let s = simulate_scenarios(&flat(0.03), &grid, 4, 1).unwrap();
        let deal = Deal::new(vec![(1.0, Payoff::Fixed(100.0))], &grid).unwrap();
        let csa = CsaTerms::uncollateralised();
        let pol = LiquidityPolicy::treasury(RateSource::RiskFree { spread: 0.02 }, RateSource::risk_free());
        let res = backward_cfbva_price(&s, &deal, &csa, &pol, CloseoutKind::RiskFree, &SolverSpec::default()).unwrap();
        let expect = 100.0 / (0.03f64.exp() + 0.02);
        assert!((res.value - expect).abs() < 1e-12, "{} vs {expect}", res.value);
        assert!((res.decomposition.total() - res.value).abs() < 1e-12);
        assert!(res.standard_error < 1e-12);
    }

    #[test]
    fn deterministic_symmetric_funding_matches_the_oracle_exactly() {
        for steps in [1, 4, 12] {
            let grid = SimulationGrid::dense(1.0, steps).unwrap();
            let s = simulate_scenarios(&flat(0.03), &grid, 8, 2).unwrap();
            let deal = Deal::new(vec![(1.0, Payoff::Fixed(1.0))], &grid).unwrap();
            let csa = CsaTerms::uncollateralised();
            let pol = LiquidityPolicy::risk_free();
            let spec = SolverSpec::default();
            let b = backward_cfbva_price(&s, &deal, &csa, &pol, CloseoutKind::RiskFree, &spec).unwrap();
            let o = forward_pathwise_oracle(&s, &deal, &csa, &pol, CloseoutKind::RiskFree, &spec).unwrap();
            assert!((b.value - o.value).abs() < 1e-12);
            assert!((b.value - (-0.03f64).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn oracle_refuses_asymmetric_funding() {
        let grid = SimulationGrid::dense(1.0, 2).unwrap();
        let s = simulate_scenarios(&flat(0.03), &grid, 2, 2).unwrap();
        let deal = Deal::new(vec![(1.0, Payoff::Fixed(1.0))], &grid).unwrap();
        let pol = LiquidityPolicy::treasury(RateSource::RiskFree { spread: 0.02 }, RateSource::risk_free());
        let err = forward_pathwise_oracle(
            &s,
            &deal,
            &CsaTerms::uncollateralised(),
            &pol,
            CloseoutKind::RiskFree,
            &SolverSpec::default(),
        );
        assert!(matches!(err, Err(crate::error::Error::Usage(_))));
    }

    #[test]
    fn value_decreases_with_the_borrowing_spread() {
        let grid = SimulationGrid::dense(2.0, 8).unwrap();
        let s = simulate_scenarios(&flat(0.02), &grid, 4, 3).unwrap();
        let deal = Deal::new(vec![(1.0, Payoff::Fixed(5.0)), (2.0, Payoff::Fixed(100.0))], &grid).unwrap();
        let csa = CsaTerms::uncollateralised();
        let mut last = f64::INFINITY;
        for spread in [0.0, 0.005, 0.01, 0.03] {
            let pol = LiquidityPolicy::treasury(RateSource::RiskFree { spread }, RateSource::risk_free());
            let v = backward_cfbva_price(&s, &deal, &csa, &pol, CloseoutKind::RiskFree, &SolverSpec::default())
                .unwrap()
                .value;
            assert!(v <= last);
            last = v;
        }
    }

    #[test]
    fn runs_in_single_precision() {
        let grid = SimulationGrid::<f32>::dense(1.0, 4).unwrap();
        let cfg = DriverConfig::default().with(Driver::ShortRate, ProcessSpec::flat(0.03f32));
        let s = simulate_scenarios(&cfg, &grid, 4, 1).unwrap();
        let deal = Deal::new(vec![(1.0f32, Payoff::Fixed(1.0f32))], &grid).unwrap();
        let res = backward_cfbva_price(
            &s,
            &deal,
            &CsaTerms::uncollateralised(),
            &LiquidityPolicy::risk_free(),
            CloseoutKind::RiskFree,
            &SolverSpec::default(),
        )
        .unwrap();
        assert!((res.value - (-0.03f32).exp()).abs() < 1e-5);
    }
}
