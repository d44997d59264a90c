//! Liquidity policies, the funding account `F` and the funding cost `phi`.

use crate::error::{Error, Result};
use crate::market::{Party, RateSource, ScenarioSet};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub enum FundingMode<S> {
    /// Funding through the treasury at `f^+ / f^-`.
    Treasury,
    /// Borrowing directly on the market: the borrow leg uses the
    /// risky-adjusted bond with the funder-side recovery (deal `R_I` if unset).
    DirectMarket { recovery: Option<S> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum FundingScope {
    /// Per-deal rates.
    #[default]
    Micro,
    /// Shared pool rates with `f^+ != f^-`.
    MacroAsym,
    /// Shared pool rates with `f^+ = f^-`.
    MacroSym,
}

/// How the hedge position `H` enters the funding account.
#[derive(Clone, Debug, PartialEq, Default)]
pub enum HedgeMode<S> {
    /// The underlying already grows at the funding/hedging rate, so `H` is
    /// dropped from `F`.
    #[default]
    MeasureChange,
    /// Hedge positions on the funding grid (`n_paths x n_funding_dates`,
    /// path-major), funded at the hedging rates.
    Explicit(Vec<S>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct LiquidityPolicy<S> {
    pub mode: FundingMode<S>,
    pub scope: FundingScope,
    pub funding_plus: RateSource<S>,
    pub funding_minus: RateSource<S>,
    pub hedging_plus: RateSource<S>,
    pub hedging_minus: RateSource<S>,
    pub hedge: HedgeMode<S>,
}

impl<S: Scalar> LiquidityPolicy<S> {
    /// Treasury funding at the given sources, hedging at the funding rates.
    pub fn treasury(plus: RateSource<S>, minus: RateSource<S>) -> Self {
        Self {
            mode: FundingMode::Treasury,
            scope: if plus == minus {
                FundingScope::MacroSym
            } else {
                FundingScope::Micro
            },
            hedging_plus: plus.clone(),
            hedging_minus: minus.clone(),
            funding_plus: plus,
            funding_minus: minus,
            hedge: HedgeMode::MeasureChange,
        }
    }

    pub fn risk_free() -> Self {
        Self::treasury(RateSource::risk_free(), RateSource::risk_free())
    }

    pub fn validate(&self) -> Result<()> {
        if self.scope == FundingScope::MacroSym && self.funding_plus != self.funding_minus {
            return Err(Error::config(
                "symmetric macro funding needs identical f+ and f- sources",
            ));
        }
        if let FundingMode::DirectMarket { recovery: Some(r) } = self.mode {
            if !(r >= S::zero() && r <= S::one()) {
                return Err(Error::config(format!("funder recovery {r} outside [0, 1]")));
            }
        }
        Ok(())
    }

    /// Funder-side recovery used by the risky-adjusted bond; `None` in
    /// treasury mode, which ignores it.
    pub fn funder_recovery(&self, deal_recovery: S) -> Option<S> {
        match self.mode {
            FundingMode::Treasury => None,
            FundingMode::DirectMarket { recovery } => Some(recovery.unwrap_or(deal_recovery)),
        }
    }

    /// Funding cost does not depend on the sign of `F`.
    pub fn is_symmetric(&self, deal_recovery: S) -> bool {
        self.funding_plus == self.funding_minus && self.funder_recovery(deal_recovery).is_none_or(|r| r == S::one())
    }

    /// `(P^{f+}, P^{f-})` over `[t_a, t_b]`; the borrow bond is risky-adjusted in
    /// direct-market mode.
    pub fn funding_bonds(
        &self,
        scenario: &ScenarioSet<S>,
        deal_recovery: S,
        path: usize,
        a: usize,
        b: usize,
    ) -> Result<(S, S)> {
        let mut plus = scenario.simple_bond(&self.funding_plus, path, a, b)?;
        let minus = scenario.simple_bond(&self.funding_minus, path, a, b)?;
        if let Some(r) = self.funder_recovery(deal_recovery) {
            let surv = scenario.survival(Party::Investor, path, a, b);
            plus = risky_adjusted_funding_bond(plus, surv, S::one() - r)?;
        }
        Ok((plus, minus))
    }

    pub fn hedging_bonds(&self, scenario: &ScenarioSet<S>, path: usize, a: usize, b: usize) -> Result<(S, S)> {
        Ok((
            scenario.simple_bond(&self.hedging_plus, path, a, b)?,
            scenario.simple_bond(&self.hedging_minus, path, a, b)?,
        ))
    }
}

/// `f~ = f^- 1{F<0} + f^+ 1{F>0}`.
pub fn effective_funding_rate<S: Scalar>(f_plus: S, f_minus: S, position: S) -> S {
    if position > S::zero() {
        f_plus
    } else if position < S::zero() {
        f_minus
    } else {
        S::zero()
    }
}

/// `F = V - C - H` when collateral can be re-used for funding, else `V - H`.
pub fn funding_position<S: Scalar>(value: S, collateral: S, hedge: S, rehypothecation: bool) -> S {
    if rehypothecation {
        value - collateral - hedge
    } else {
        value - hedge
    }
}

/// `P^{f+} / (LGD * survival + R)`.
pub fn risky_adjusted_funding_bond<S: Scalar>(p_plus: S, survival: S, lgd: S) -> Result<S> {
    let denom = lgd * survival + (S::one() - lgd);
    if !(denom > S::zero()) {
        return Err(Error::NumericDomain(format!(
            "risky-adjusted funding bond has non-positive denominator {denom}"
        )));
    }
    Ok(p_plus / denom)
}

/// Bond of the side selected by the sign of a position.
#[inline]
pub fn effective_bond<S: Scalar>(plus: S, minus: S, position: S) -> S {
    if position < S::zero() {
        minus
    } else {
        plus
    }
}

/// Funding account per path and funding interval.
#[derive(Clone, Debug)]
pub struct FundingLedger<S> {
    dates: Vec<usize>,
    n_paths: usize,
    position: Vec<S>,
    hedge: Vec<S>,
    bond: Vec<S>,
    bond_f: Vec<S>,
    bond_h: Vec<S>,
}

/// Row of the exported funding ledger.
#[derive(Clone, Debug, PartialEq)]
pub struct FundingRow<S> {
    pub path: usize,
    pub interval: usize,
    pub time: S,
    pub position: S,
    pub notional: S,
    pub hedge: S,
    pub phi: S,
}

impl<S: Scalar> FundingLedger<S> {
    /// Empty ledger over the funding dates; every interval starts flat.
    pub fn new(dates: Vec<usize>, n_paths: usize) -> Self {
        let m = dates.len().saturating_sub(1) * n_paths;
        Self {
            dates,
            n_paths,
            position: vec![S::zero(); m],
            hedge: vec![S::zero(); m],
            bond: vec![S::one(); m],
            bond_f: vec![S::one(); m],
            bond_h: vec![S::one(); m],
        }
    }

    pub fn dates(&self) -> &[usize] {
        &self.dates
    }

    pub fn n_intervals(&self) -> usize {
        self.dates.len() - 1
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    #[inline]
    fn at(&self, path: usize, j: usize) -> usize {
        path * self.n_intervals() + j
    }

    /// Records interval `j` on a path: position `F`, hedge `H`, and the bonds
    /// `P`, `P^{f~}`, `P^{h~}` over the interval.
    #[allow(clippy::too_many_arguments)]
    pub fn set(&mut self, path: usize, j: usize, position: S, hedge: S, p: S, pf: S, ph: S) {
        let i = self.at(path, j);
        self.position[i] = position;
        self.hedge[i] = hedge;
        self.bond[i] = p;
        self.bond_f[i] = pf;
        self.bond_h[i] = ph;
    }

    pub fn position(&self, path: usize, j: usize) -> S {
        self.position[self.at(path, j)]
    }

    pub fn hedge(&self, path: usize, j: usize) -> S {
        self.hedge[self.at(path, j)]
    }

    /// Reimbursement notional `N = F / P^{f~}`.
    pub fn notional(&self, path: usize, j: usize) -> S {
        let i = self.at(path, j);
        self.position[i] / self.bond_f[i]
    }

    /// `F (1 - P / P^{f~})`.
    #[inline]
    pub fn funding_term(&self, path: usize, j: usize) -> S {
        let i = self.at(path, j);
        self.position[i] * (S::one() - self.bond[i] / self.bond_f[i])
    }

    /// `H (P / P^{f~} - P / P^{h~})`.
    #[inline]
    pub fn hedge_term(&self, path: usize, j: usize) -> S {
        let i = self.at(path, j);
        self.hedge[i] * (self.bond[i] / self.bond_f[i] - self.bond[i] / self.bond_h[i])
    }

    pub fn rows<'a>(&'a self, scenario: &'a ScenarioSet<S>) -> impl Iterator<Item = FundingRow<S>> + 'a {
        let m = self.n_intervals();
        (0..self.n_paths * m).map(move |i| {
            let (p, j) = (i / m, i % m);
            FundingRow {
                path: p,
                interval: j,
                time: scenario.grid().time(self.dates[j]),
                position: self.position[i],
                notional: self.notional(p, j),
                hedge: self.hedge[i],
                phi: self.funding_term(p, j) + self.hedge_term(p, j),
            }
        })
    }
}

fn discounted_sum<S: Scalar>(
    ledger: &FundingLedger<S>,
    scenario: &ScenarioSet<S>,
    horizon: S,
    term: impl Fn(usize, usize) -> S,
) -> Vec<S> {
    let grid = scenario.grid();
    (0..ledger.n_paths())
        .map(|p| {
            let h = horizon.min(scenario.first_default(p)).min(grid.maturity());
            let mut acc = S::zero();
            for j in 0..ledger.n_intervals() {
                let d = ledger.dates()[j];
                if grid.time(d) >= h {
                    break;
                }
                acc += scenario.discount(p, 0, d) * term(p, j);
            }
            acc
        })
        .collect()
}

/// `phi(0, min(horizon, tau, T))` per path, funding term only.
pub fn funding_cost_phi<S: Scalar>(ledger: &FundingLedger<S>, scenario: &ScenarioSet<S>, horizon: S) -> Vec<S> {
    discounted_sum(ledger, scenario, horizon, |p, j| ledger.funding_term(p, j))
}

/// Funding term plus hedge carry per path.
pub fn hedging_cost_phi<S: Scalar>(ledger: &FundingLedger<S>, scenario: &ScenarioSet<S>, horizon: S) -> Vec<S> {
    discounted_sum(ledger, scenario, horizon, |p, j| {
        ledger.funding_term(p, j) + ledger.hedge_term(p, j)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::SimulationGrid;
    use crate::market::{simulate_scenarios, Driver, DriverConfig, ProcessSpec};
    use approx::assert_relative_eq;

    fn one_interval() -> ScenarioSet<f64> {
        let grid = SimulationGrid::dense(0.25, 1).unwrap();
        let cfg = DriverConfig::default().with(Driver::ShortRate, ProcessSpec::flat(0.0));
        simulate_scenarios(&cfg, &grid, 1, 0).unwrap()
    }

    #[test]
    fn effective_rate_and_position() {
        assert_eq!(effective_funding_rate(0.05, 0.03, 1.0), 0.05);
        assert_eq!(effective_funding_rate(0.05, 0.03, -1.0), 0.03);
        assert_eq!(effective_funding_rate(0.05, 0.03, 0.0), 0.0);
        assert_eq!(funding_position(10.0, 10.0, 0.0, true), 0.0);
        assert_eq!(funding_position(10.0, 0.0, 4.0, true), 6.0);
        assert_eq!(funding_position(10.0, 10.0, 0.0, false), 10.0);
    }

    #[test]
    fn risky_adjusted_bond() {
        assert_eq!(risky_adjusted_funding_bond(0.95, 0.7, 0.0).unwrap(), 0.95);
        let surv = (-0.02f64).exp();
        assert_relative_eq!(risky_adjusted_funding_bond(0.95, surv, 1.0).unwrap(), 0.95 / surv);
        assert!((risky_adjusted_funding_bond(0.95, surv, 1.0).unwrap() - 0.96919).abs() < 1e-5);
        assert!(matches!(
            risky_adjusted_funding_bond(0.95, 0.0, 1.0),
            Err(Error::NumericDomain(_))
        ));
    }

    #[test]
    fn one_interval_costs() {
        let s = one_interval();
        let (p, pf, ph) = (1.0 / 1.0075, 1.0 / 1.0125, 1.0 / 1.005);
        let mut l = FundingLedger::new(vec![0, 1], 1);
        l.set(0, 0, 100.0, 0.0, p, pf, ph);
        assert!((funding_cost_phi(&l, &s, f64::INFINITY)[0] + 0.49628).abs() < 1e-5);
        l.set(0, 0, 0.0, 50.0, p, pf, ph);
        assert!((hedging_cost_phi(&l, &s, f64::INFINITY)[0] - 0.37221).abs() < 1e-5);
        l.set(0, 0, 100.0, 0.0, p, p, p);
        assert_eq!(funding_cost_phi(&l, &s, f64::INFINITY)[0], 0.0);
    }

    #[test]
    fn macro_sym_needs_equal_sources() {
        let mut pol = LiquidityPolicy::<f64>::risk_free();
        pol.funding_plus = RateSource::RiskFree { spread: 0.01 };
        pol.scope = FundingScope::MacroSym;
        assert!(pol.validate().is_err());
    }

    #[test]
    fn treasury_equals_direct_market_with_full_recovery() {
        let grid = SimulationGrid::dense(1.0, 4).unwrap();
        let cfg = DriverConfig::default()
            .with(Driver::ShortRate, ProcessSpec::flat(0.01))
            .with(Driver::IntensityInvestor, ProcessSpec::flat(0.05));
        let s = simulate_scenarios(&cfg, &grid, 1, 0).unwrap();
        let mut pol = LiquidityPolicy::treasury(RateSource::RiskFree { spread: 0.02 }, RateSource::risk_free());
        let t = pol.funding_bonds(&s, 0.4, 0, 0, 1).unwrap();
        pol.mode = FundingMode::DirectMarket { recovery: Some(1.0) };
        assert_eq!(pol.funding_bonds(&s, 0.4, 0, 0, 1).unwrap(), t);
        pol.mode = FundingMode::DirectMarket { recovery: None };
        assert!(pol.funding_bonds(&s, 0.4, 0, 0, 1).unwrap().0 > t.0);
    }
}
