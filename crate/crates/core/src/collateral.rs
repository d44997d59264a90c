//! CSA terms, the collateral account, margining cost `gamma` and the
//! pre-default collateral `C_{tau-}`.

use crate::error::{Error, Result};
use crate::market::{Driver, Party, RateSource, ScenarioSet};
use crate::scalar::Scalar;

/// Currency of the collateral account.
#[derive(Clone, Debug, PartialEq)]
pub enum CollateralCurrency<S> {
    Domestic,
    /// Foreign-currency cash; `basis_spread` is added to the foreign
    /// risk-free rate when building the reference bond `P^e`.
    Foreign {
        basis_spread: S,
    },
}

/// Credit support annex terms. Built through the `with_*` methods; the
/// recoveries always satisfy `R <= R' <= 1`, with `R' = 1` when the
/// collateral is segregated.
#[derive(Clone, Debug, PartialEq)]
pub struct CsaTerms<S> {
    alpha: S,
    threshold: S,
    mta: S,
    rehypothecation: bool,
    recovery: [S; 2],
    rehyp_recovery: [S; 2],
    rate_plus: RateSource<S>,
    rate_minus: RateSource<S>,
    currency: CollateralCurrency<S>,
}

fn slot(p: Party) -> usize {
    match p {
        Party::Investor => 0,
        Party::Counterparty => 1,
    }
}

impl<S: Scalar> CsaTerms<S> {
    /// Collateralisation fraction `alpha`, no threshold or MTA, re-hypothecation
    /// allowed, 40% recoveries, collateral accruing at the risk-free rate.
    pub fn new(alpha: S) -> Result<Self> {
        let r = S::lit(0.4);
        let csa = Self {
            alpha,
            threshold: S::zero(),
            mta: S::zero(),
            rehypothecation: true,
            recovery: [r, r],
            rehyp_recovery: [r, r],
            rate_plus: RateSource::risk_free(),
            rate_minus: RateSource::risk_free(),
            currency: CollateralCurrency::Domestic,
        };
        csa.validate()?;
        Ok(csa)
    }

    pub fn uncollateralised() -> Self {
        Self::new(S::zero()).expect("alpha 0 is valid")
    }

    pub fn with_threshold(mut self, threshold: S) -> Result<Self> {
        self.threshold = threshold;
        self.validate()?;
        Ok(self)
    }

    pub fn with_mta(mut self, mta: S) -> Result<Self> {
        self.mta = mta;
        self.validate()?;
        Ok(self)
    }

    /// Default recoveries `R_I`, `R_C`. While collateral is re-hypothecated
    /// the collateral recoveries follow them (`R' = R`).
    pub fn with_recoveries(mut self, investor: S, counterparty: S) -> Result<Self> {
        self.recovery = [investor, counterparty];
        if self.rehypothecation {
            self.rehyp_recovery = [investor, counterparty];
        }
        self.validate()?;
        Ok(self)
    }

    /// Re-hypothecation with explicit collateral recoveries `R'_I`, `R'_C`.
    pub fn with_rehypothecation(mut self, investor: S, counterparty: S) -> Result<Self> {
        self.rehypothecation = true;
        self.rehyp_recovery = [investor, counterparty];
        self.validate()?;
        Ok(self)
    }

    /// Segregated collateral: no re-hypothecation, full collateral recovery.
    pub fn segregated(mut self) -> Self {
        self.rehypothecation = false;
        self.rehyp_recovery = [S::one(), S::one()];
        self
    }

    pub fn with_rates(mut self, plus: RateSource<S>, minus: RateSource<S>) -> Self {
        self.rate_plus = plus;
        self.rate_minus = minus;
        self
    }

    pub fn with_currency(mut self, currency: CollateralCurrency<S>) -> Self {
        self.currency = currency;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |x: S| x >= S::zero() && x <= S::one();
        if !unit(self.alpha) {
            return Err(Error::config(format!(
                "collateral fraction alpha={} outside [0, 1]",
                self.alpha
            )));
        }
        if !(self.threshold >= S::zero()) || !(self.mta >= S::zero()) {
            return Err(Error::config(
                "threshold and minimum transfer amount must be non-negative",
            ));
        }
        for p in [Party::Investor, Party::Counterparty] {
            let (r, rp) = (self.recovery[slot(p)], self.rehyp_recovery[slot(p)]);
            if !unit(r) {
                return Err(Error::config(format!("{} recovery {r} outside [0, 1]", p.name())));
            }
            if !(rp >= r && rp <= S::one()) {
                return Err(Error::config(format!(
                    "{} collateral recovery {rp} must lie in [R={r}, 1]",
                    p.name()
                )));
            }
            if !self.rehypothecation && rp != S::one() {
                return Err(Error::config(
                    "segregated collateral requires a collateral recovery of 1",
                ));
            }
        }
        Ok(())
    }

    pub fn alpha(&self) -> S {
        self.alpha
    }

    pub fn threshold(&self) -> S {
        self.threshold
    }

    pub fn mta(&self) -> S {
        self.mta
    }

    pub fn rehypothecation(&self) -> bool {
        self.rehypothecation
    }

    pub fn recovery(&self, p: Party) -> S {
        self.recovery[slot(p)]
    }

    pub fn rehyp_recovery(&self, p: Party) -> S {
        self.rehyp_recovery[slot(p)]
    }

    pub fn lgd(&self, p: Party) -> S {
        S::one() - self.recovery(p)
    }

    pub fn lgd_prime(&self, p: Party) -> S {
        S::one() - self.rehyp_recovery(p)
    }

    pub fn rate_plus(&self) -> &RateSource<S> {
        &self.rate_plus
    }

    pub fn rate_minus(&self) -> &RateSource<S> {
        &self.rate_minus
    }

    pub fn currency(&self) -> &CollateralCurrency<S> {
        &self.currency
    }

    /// Collateral called for a mark-to-market `m`: `alpha * sign(m) * (|m| - H)^+`.
    pub fn target(&self, m: S) -> S {
        let excess = (m.abs() - self.threshold).pos();
        if m < S::zero() {
            -self.alpha * excess
        } else {
            self.alpha * excess
        }
    }
}

/// `c~ = c^+ 1{C>0} + c^- 1{C<0}`.
pub fn effective_collateral_rate<S: Scalar>(c_plus: S, c_minus: S, collateral: S) -> S {
    if collateral > S::zero() {
        c_plus
    } else if collateral < S::zero() {
        c_minus
    } else {
        S::zero()
    }
}

/// Accrued account `mu = C^- / P^{c-} + C^+ / P^{c+}`.
pub fn accrue_collateral<S: Scalar>(collateral: S, p_plus: S, p_minus: S) -> S {
    collateral.neg_part() / p_minus + collateral.pos() / p_plus
}

/// Collateral account on the margining grid for every path.
#[derive(Clone, Debug)]
pub struct CollateralLedger<S> {
    dates: Vec<usize>,
    ends: Vec<usize>,
    n_paths: usize,
    csa: CsaTerms<S>,
    mtm: Vec<S>,
    posted: Vec<S>,
    accrued: Vec<S>,
    carry: Vec<S>,
    fx_ratio: Option<Vec<S>>,
    pre_default: Vec<S>,
}

/// Row of the exported collateral ledger.
#[derive(Clone, Debug, PartialEq)]
pub struct CollateralRow<S> {
    pub path: usize,
    pub date: usize,
    pub time: S,
    pub mtm: S,
    pub target: S,
    pub posted: S,
    pub accrued: S,
    /// The account no longer moves: the first default came before this date.
    pub frozen: bool,
}

/// Builds the collateral account from the mark-to-market `mtm` on the
/// margining dates (`n_paths x n_dates`, path-major).
///
/// Posted collateral is the target `G(m)` unless the change from the accrued
/// previous balance is below the minimum transfer amount, in which case the
/// balance is kept. Nothing is posted at or after the first default or at
/// maturity.
pub fn build_collateral_ledger<S: Scalar>(
    scenario: &ScenarioSet<S>,
    csa: &CsaTerms<S>,
    mtm: &[S],
) -> Result<CollateralLedger<S>> {
    let grid = scenario.grid();
    let dates = grid.margining().to_vec();
    let last = grid.last_index();
    let nd = dates.len();
    let n = scenario.n_paths();
    if mtm.len() != n * nd {
        return Err(Error::usage(format!(
            "mark-to-market has {} values, expected {} paths x {} margining dates",
            mtm.len(),
            n,
            nd
        )));
    }
    if let Some(i) = mtm.iter().position(|m| !m.is_finite()) {
        return Err(Error::usage(format!(
            "mark-to-market missing on path {} at margining date {}",
            i / nd,
            grid.time(dates[i % nd])
        )));
    }
    let ends: Vec<usize> = (0..nd).map(|k| if k + 1 < nd { dates[k + 1] } else { last }).collect();
    let foreign = matches!(csa.currency(), CollateralCurrency::Foreign { .. });
    let fx = if foreign && scenario.has(Driver::Fx) {
        Some(scenario.paths(Driver::Fx)?)
    } else {
        None
    };

    let size = n * nd;
    let mut l = CollateralLedger {
        dates,
        ends,
        n_paths: n,
        csa: csa.clone(),
        mtm: mtm.to_vec(),
        posted: vec![S::zero(); size],
        accrued: vec![S::zero(); size],
        carry: vec![S::zero(); size],
        fx_ratio: fx.map(|_| vec![S::one(); size]),
        pre_default: vec![S::zero(); n],
    };
    for p in 0..n {
        let tau = scenario.first_default(p);
        let mut prev = S::zero();
        for k in 0..nd {
            let idx = p * nd + k;
            let (a, b) = (l.dates[k], l.ends[k]);
            let g = csa.target(mtm[idx]);
            let alive = grid.time(a) < tau && a < last;
            let c = if !alive {
                S::zero()
            } else if (g - prev).abs() < csa.mta() {
                prev
            } else {
                g
            };
            l.posted[idx] = c;
            if b > a {
                let p_plus = scenario.simple_bond(csa.rate_plus(), p, a, b)?;
                let p_minus = scenario.simple_bond(csa.rate_minus(), p, a, b)?;
                let mu = accrue_collateral(c, p_plus, p_minus);
                l.accrued[idx] = mu;
                let pc = if c < S::zero() { p_minus } else { p_plus };
                let reference = reference_bond(scenario, csa, p, a, b)?;
                l.carry[idx] = S::one() - reference / pc;
                if let (Some(fx), Some(r)) = (fx, l.fx_ratio.as_mut()) {
                    r[idx] = fx.value(p, b) / fx.value(p, a);
                }
                prev = mu;
                if alive && tau <= grid.time(b) {
                    l.pre_default[p] = pre_default_value(scenario, p, c, pc, a, b, tau, fx)?;
                }
            } else {
                prev = S::zero();
            }
        }
    }
    Ok(l)
}

/// Bond the collateral account is compared with: the risk-free bond, or for
/// foreign collateral the foreign bond with the basis spread added.
pub fn reference_bond<S: Scalar>(
    scenario: &ScenarioSet<S>,
    csa: &CsaTerms<S>,
    p: usize,
    a: usize,
    b: usize,
) -> Result<S> {
    match csa.currency() {
        CollateralCurrency::Domestic => Ok(scenario.bond(p, a, b)),
        CollateralCurrency::Foreign { basis_spread } => {
            let pe = scenario.foreign_bond(p, a, b)?;
            let grid = scenario.grid();
            let denom = S::one() / pe + (grid.time(b) - grid.time(a)) * *basis_spread;
            if !(denom > S::zero()) {
                return Err(Error::NumericDomain(format!(
                    "foreign collateral bond with basis {basis_spread} has non-positive denominator"
                )));
            }
            Ok(S::one() / denom)
        }
    }
}

/// `C_{tau-} = C_k P_tau(t_{k+1}) / P^{c~}_{t_k}(t_{k+1})`; in foreign
/// currency the bond is the foreign one, converted at the FX rate at `tau`.
#[allow(clippy::too_many_arguments)]
fn pre_default_value<S: Scalar>(
    scenario: &ScenarioSet<S>,
    p: usize,
    c: S,
    pc: S,
    a: usize,
    b: usize,
    tau: S,
    fx: Option<&crate::market::DriverPaths<S>>,
) -> Result<S> {
    let grid = scenario.grid();
    let i = grid.left_index(tau).clamp(a, b);
    let growth = match fx {
        None => scenario.bond_at(p, tau, b),
        Some(fx) => {
            let stub = tau - grid.time(i);
            let pe = scenario.foreign_bond(p, i, b)?;
            fx.value(p, i) / fx.value(p, a) * (scenario.short_rate(p)[i] * stub).exp() * pe
        }
    };
    Ok(c * growth / pc)
}

impl<S: Scalar> CollateralLedger<S> {
    pub fn dates(&self) -> &[usize] {
        &self.dates
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    /// End of the accrual period starting at margining date `k`.
    pub fn end(&self, k: usize) -> usize {
        self.ends[k]
    }

    #[inline]
    pub fn posted(&self, path: usize, k: usize) -> S {
        self.posted[path * self.dates.len() + k]
    }

    #[inline]
    pub fn accrued(&self, path: usize, k: usize) -> S {
        self.accrued[path * self.dates.len() + k]
    }

    pub fn target(&self, path: usize, k: usize) -> S {
        self.csa.target(self.mtm(path, k))
    }

    pub fn mtm(&self, path: usize, k: usize) -> S {
        self.mtm[path * self.dates.len() + k]
    }

    /// `1 - P/P^{c~}` (or `1 - P^e/P^{c~}` for foreign collateral).
    #[inline]
    pub fn carry(&self, path: usize, k: usize) -> S {
        self.carry[path * self.dates.len() + k]
    }

    /// Undiscounted margining cost `C_k (1 - P/P^{c~})` at date `k`.
    #[inline]
    pub fn gamma_term(&self, path: usize, k: usize) -> S {
        let i = path * self.dates.len() + k;
        self.posted[i] * self.carry[i]
    }

    /// `C_{tau-}`; zero when no default happens before maturity.
    pub fn pre_default(&self, path: usize) -> S {
        self.pre_default[path]
    }

    /// Latest margining date at or before master index `i`.
    pub fn date_at_or_before(&self, i: usize) -> Option<usize> {
        match self.dates.partition_point(|&d| d <= i) {
            0 => None,
            k => Some(k - 1),
        }
    }

    /// Collateral held over master index `i`: the balance posted at the latest
    /// margining date at or before it.
    pub fn held_at(&self, path: usize, i: usize) -> S {
        self.date_at_or_before(i).map_or(S::zero(), |k| self.posted(path, k))
    }

    pub fn rows<'a>(&'a self, scenario: &'a ScenarioSet<S>) -> impl Iterator<Item = CollateralRow<S>> + 'a {
        let nd = self.dates.len();
        (0..self.n_paths * nd).map(move |i| CollateralRow {
            path: i / nd,
            date: i % nd,
            time: scenario.grid().time(self.dates[i % nd]),
            mtm: self.mtm[i],
            target: self.csa.target(self.mtm[i]),
            posted: self.posted[i],
            accrued: self.accrued[i],
            frozen: scenario.first_default(i / nd) <= scenario.grid().time(self.dates[i % nd]),
        })
    }
}

/// `gamma(0, min(horizon, tau, T))` per path: margining costs on the dates
/// `t_k` strictly before the horizon, discounted to the valuation date.
pub fn margining_cost_gamma<S: Scalar>(ledger: &CollateralLedger<S>, scenario: &ScenarioSet<S>, horizon: S) -> Vec<S> {
    let grid = scenario.grid();
    (0..ledger.n_paths())
        .map(|p| {
            let h = horizon.min(scenario.first_default(p)).min(grid.maturity());
            let mut acc = S::zero();
            for (k, &d) in ledger.dates().iter().enumerate() {
                if grid.time(d) >= h {
                    break;
                }
                acc += scenario.discount(p, 0, d) * ledger.gamma_term(p, k);
            }
            acc
        })
        .collect()
}

/// Collateral cash flows `Gamma-bar(0, T)` per path: postings, returns of the
/// accrued balance, and the accrued balance left open by a default.
pub fn gamma_cashflow_oracle<S: Scalar>(ledger: &CollateralLedger<S>, scenario: &ScenarioSet<S>) -> Vec<S> {
    let grid = scenario.grid();
    (0..ledger.n_paths())
        .map(|p| {
            let tau = scenario.first_default(p);
            let mut acc = S::zero();
            for (k, &a) in ledger.dates().iter().enumerate() {
                let b = ledger.end(k);
                if b == a || grid.time(a) >= tau {
                    continue;
                }
                let fx = ledger
                    .fx_ratio
                    .as_ref()
                    .map_or(S::one(), |r| r[p * ledger.n_dates() + k]);
                let returned = scenario.discount(p, 0, b) * fx * ledger.accrued(p, k);
                acc += scenario.discount(p, 0, a) * ledger.posted(p, k) - returned;
                if tau <= grid.time(b) {
                    acc += returned;
                }
            }
            acc
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::SimulationGrid;
    use crate::market::{simulate_scenarios, DriverConfig, ProcessSpec};
    use approx::assert_relative_eq;

    fn flat_scenario(r: f64, steps: usize) -> ScenarioSet<f64> {
        let grid = SimulationGrid::dense(1.0, steps).unwrap();
        let cfg = DriverConfig::default().with(Driver::ShortRate, ProcessSpec::flat(r));
        simulate_scenarios(&cfg, &grid, 1, 0).unwrap()
    }

    #[test]
    fn target_applies_threshold_and_fraction() {
        let csa = CsaTerms::new(0.5).unwrap().with_threshold(10.0).unwrap();
        assert_eq!(csa.target(30.0), 10.0);
        assert_eq!(csa.target(-30.0), -10.0);
        assert_eq!(csa.target(5.0), 0.0);
    }

    #[test]
    fn invalid_terms_are_rejected() {
        assert!(CsaTerms::new(1.5f64).is_err());
        assert!(CsaTerms::new(1.0f64).unwrap().with_threshold(-1.0).is_err());
        assert!(CsaTerms::new(1.0f64).unwrap().with_rehypothecation(0.3, 0.5).is_err());
        let seg = CsaTerms::new(1.0f64).unwrap().segregated();
        assert_eq!(seg.lgd_prime(Party::Counterparty), 0.0);
        assert!(seg.with_recoveries(0.3, 0.3).is_ok());
    }

    #[test]
    fn accrual_and_effective_rate() {
        assert_relative_eq!(accrue_collateral(100.0, 0.99, 0.98), 100.0 / 0.99);
        assert_relative_eq!(accrue_collateral(-100.0, 0.99, 0.98), -100.0 / 0.98);
        assert_eq!(effective_collateral_rate(0.03, 0.01, -1.0), 0.01);
        assert_eq!(effective_collateral_rate(0.03, 0.01, 1.0), 0.03);
    }

    #[test]
    fn mta_keeps_the_previous_balance() {
        let s = flat_scenario(0.0, 4);
        let csa = CsaTerms::new(1.0).unwrap().with_mta(5.0).unwrap();
        let l = build_collateral_ledger(&s, &csa, &[100.0, 102.0, 110.0, 111.0, 0.0]).unwrap();
        assert_eq!(l.posted(0, 0), 100.0);
        assert_eq!(l.posted(0, 1), 100.0);
        assert_eq!(l.posted(0, 2), 110.0);
        assert_eq!(l.posted(0, 3), 110.0);
        assert_eq!(l.posted(0, 4), 0.0);
    }

    #[test]
    fn missing_mtm_is_a_usage_error() {
        let s = flat_scenario(0.0, 2);
        let csa = CsaTerms::new(1.0).unwrap();
        assert!(matches!(
            build_collateral_ledger(&s, &csa, &[1.0, 2.0]),
            Err(Error::Usage(_))
        ));
        assert!(matches!(
            build_collateral_ledger(&s, &csa, &[1.0, f64::NAN, 0.0]),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn gamma_vanishes_when_collateral_earns_the_risk_free_rate() {
        let s = flat_scenario(0.03, 4);
        let csa = CsaTerms::new(1.0).unwrap();
        let l = build_collateral_ledger(&s, &csa, &[10.0, -20.0, 30.0, 40.0, 0.0]).unwrap();
        let g = margining_cost_gamma(&l, &s, f64::INFINITY);
        assert!(g[0].abs() < 1e-14);
        let cash = gamma_cashflow_oracle(&l, &s);
        assert!(cash[0].abs() < 1e-12);
    }
}
