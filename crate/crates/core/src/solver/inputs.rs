use rayon::prelude::*;

use super::{SolverSpec, Stage, StepDiagnostics};
use crate::closeout::{
    closeout_amount, on_default_theta, CloseoutKind, CloseoutSurface, OnDefaultOutcome, ThetaBreakdown,
};
use crate::collateral::{build_collateral_ledger, reference_bond, CollateralLedger, CsaTerms};
use crate::deal::{Deal, DealFlows};
use crate::error::{Error, Result};
use crate::funding::{HedgeMode, LiquidityPolicy};
use crate::market::{Driver, Party, ScenarioSet};
use crate::regression::{regress_conditional_expectation, RegressionFit};
use crate::scalar::Scalar;

/// Default-time close-out value and its breakdown, if the path defaults.
type DefaultLeg<S> = Option<(S, ThetaBreakdown<S>)>;

/// `Pi-bar` over one funding interval `[t_j, t_{j+1}]`, valued at `t_j`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntervalPayoff<S> {
    /// Deal flows in `(t_j, min(t_{j+1}, tau)]`.
    pub deal: S,
    /// Margining costs on the margining dates in `[t_j, t_{j+1})` before `tau`.
    pub margining: S,
    /// `D(t_j, tau)` when the first default falls in the interval, else 0.
    pub default_discount: S,
    pub theta: Option<ThetaBreakdown<S>>,
}

impl<S: Scalar> IntervalPayoff<S> {
    pub fn total(&self) -> S {
        self.deal + self.margining + self.theta.map_or(S::zero(), |t| self.default_discount * t.theta)
    }
}

/// Everything the funding recursion needs besides the recursion itself: deal
/// amounts, the collateral account, close-out amounts and on-default flows.
pub struct PricingInputs<'a, S: Scalar> {
    pub(crate) scenario: &'a ScenarioSet<S>,
    pub(crate) flows: DealFlows<S>,
    pub(crate) csa: &'a CsaTerms<S>,
    pub(crate) policy: &'a LiquidityPolicy<S>,
    pub(crate) closeout: CloseoutKind,
    pub(crate) ledger: CollateralLedger<S>,
    pub(crate) theta: Vec<Option<ThetaBreakdown<S>>>,
    pub(crate) epsilon: Vec<S>,
    state: Vec<Driver>,
    degree: usize,
    pub(crate) steps: Vec<StepDiagnostics>,
}

impl<'a, S: Scalar> PricingInputs<'a, S> {
    pub fn prepare(
        scenario: &'a ScenarioSet<S>,
        deal: &Deal<S>,
        csa: &'a CsaTerms<S>,
        policy: &'a LiquidityPolicy<S>,
        closeout: CloseoutKind,
        spec: &SolverSpec,
    ) -> Result<Self> {
        csa.validate()?;
        policy.validate()?;
        let grid = scenario.grid();
        let n = scenario.n_paths();
        if n == 0 {
            return Err(Error::config("at least one path is required"));
        }
        let flows = DealFlows::evaluate(deal, scenario)?;
        let state = match &spec.regression.state {
            Some(s) => s.clone(),
            None => scenario.config().stochastic_drivers(),
        };
        for d in &state {
            scenario.paths(*d)?;
        }
        if let HedgeMode::Explicit(h) = &policy.hedge {
            if h.len() != n * grid.funding().len() {
                return Err(Error::config(format!(
                    "explicit hedge has {} values, expected {} paths x {} funding dates",
                    h.len(),
                    n,
                    grid.funding().len()
                )));
            }
        }
        if closeout == CloseoutKind::CollateralValue && grid.margining()[0] != 0 {
            return Err(Error::config(
                "collateral-value close-out needs a margining date at t=0",
            ));
        }

        let mut inputs = Self {
            scenario,
            flows,
            csa,
            policy,
            closeout,
            ledger: build_collateral_ledger(scenario, csa, &vec![S::zero(); n * grid.margining().len()])?,
            theta: vec![None; n],
            epsilon: vec![S::zero(); n],
            state,
            degree: spec.regression.degree,
            steps: Vec::new(),
        };

        let need_mtm = csa.alpha() > S::zero() || closeout == CloseoutKind::CollateralValue;
        let mut continuation = None;
        if need_mtm {
            let sweeps = if csa.alpha() > S::zero() {
                spec.collateral_sweeps.max(1)
            } else {
                1
            };
            let (ledger, a) = inputs.collateral_sweep(sweeps)?;
            inputs.ledger = ledger;
            continuation = Some(a);
        }
        let surface = match closeout {
            CloseoutKind::CollateralValue => CloseoutSurface::new(
                closeout,
                grid.margining().to_vec(),
                n,
                continuation.expect("collateral sweep ran"),
            )?,
            CloseoutKind::RiskFree | CloseoutKind::RiskFreeWithFunding => {
                let v = inputs.default_free_sweep(closeout == CloseoutKind::RiskFreeWithFunding)?;
                CloseoutSurface::new(closeout, grid.funding().to_vec(), n, v)?
            }
        };

        let maturity = grid.maturity();
        let results: Vec<Result<DefaultLeg<S>>> = (0..n)
            .into_par_iter()
            .map(|p| {
                let tau = scenario.first_default(p);
                if !(tau < maturity) {
                    return Ok(None);
                }
                let (eps, _) = closeout_amount(&surface, scenario, &inputs.flows, csa, p, tau)?;
                let party = scenario.defaulter(p).expect("finite default time");
                Ok(Some((
                    eps,
                    on_default_theta(eps, inputs.ledger.pre_default(p), csa, party),
                )))
            })
            .collect();
        for (p, r) in results.into_iter().enumerate() {
            if let Some((eps, t)) = r? {
                inputs.epsilon[p] = eps;
                inputs.theta[p] = Some(t);
            }
        }
        Ok(inputs)
    }

    pub fn scenario(&self) -> &ScenarioSet<S> {
        self.scenario
    }

    pub fn collateral_ledger(&self) -> &CollateralLedger<S> {
        &self.ledger
    }

    pub fn n_intervals(&self) -> usize {
        self.scenario.grid().funding().len() - 1
    }

    pub fn default_paths(&self) -> usize {
        self.theta.iter().filter(|t| t.is_some()).count()
    }

    pub fn outcomes(&self) -> Vec<OnDefaultOutcome<S>> {
        self.theta
            .iter()
            .enumerate()
            .filter_map(|(p, t)| {
                t.map(|b| OnDefaultOutcome {
                    path: p,
                    tau: self.scenario.first_default(p),
                    defaulter: self.scenario.defaulter(p).expect("defaulted path"),
                    epsilon: self.epsilon[p],
                    pre_default_collateral: self.ledger.pre_default(p),
                    breakdown: b,
                })
            })
            .collect()
    }

    /// Collateral used for funding at master index `i`.
    pub(crate) fn funding_collateral(&self, path: usize, i: usize) -> S {
        if self.csa.rehypothecation() {
            self.ledger.held_at(path, i)
        } else {
            S::zero()
        }
    }

    pub(crate) fn hedge(&self, path: usize, j: usize) -> S {
        match &self.policy.hedge {
            HedgeMode::MeasureChange => S::zero(),
            HedgeMode::Explicit(h) => h[path * self.scenario.grid().funding().len() + j],
        }
    }

    pub(crate) fn deal_recovery(&self) -> S {
        self.csa.recovery(Party::Investor)
    }

    pub fn interval_payoff(&self, p: usize, j: usize) -> IntervalPayoff<S> {
        let s = self.scenario;
        let grid = s.grid();
        let f = grid.funding();
        let (a, b) = (f[j], f[j + 1]);
        let tau = s.first_default(p);
        let deal = self.flows.pi(s, p, a, b, tau);
        let dates = self.ledger.dates();
        let mut margining = S::zero();
        let mut k = dates.partition_point(|&d| d < a);
        while k < dates.len() && dates[k] < b && grid.time(dates[k]) < tau {
            margining += s.discount(p, a, dates[k]) * self.ledger.gamma_term(p, k);
            k += 1;
        }
        let (ta, tb) = (grid.time(a), grid.time(b));
        let (default_discount, theta) = match self.theta[p] {
            Some(t) if ta < tau && tau <= tb => (s.discount_to(p, a, tau), Some(t)),
            _ => (S::zero(), None),
        };
        IntervalPayoff {
            deal,
            margining,
            default_discount,
            theta,
        }
    }

    /// `Pi-bar(0, T)` computed in one piece, without the funding intervals.
    pub fn full_payoff(&self, p: usize) -> S {
        let s = self.scenario;
        let grid = s.grid();
        let tau = s.first_default(p);
        let horizon = tau.min(grid.maturity());
        let mut total = self.flows.pi(s, p, 0, grid.last_index(), tau);
        for (k, &d) in self.ledger.dates().iter().enumerate() {
            if grid.time(d) >= horizon {
                break;
            }
            total += s.discount(p, 0, d) * self.ledger.gamma_term(p, k);
        }
        if let Some(t) = self.theta[p] {
            total += s.discount_to(p, 0, tau) * t.theta;
        }
        total
    }

    pub(crate) fn regress(&self, i: usize, paths: &[usize], y: &[S]) -> Result<RegressionFit<S>> {
        let cols: Vec<Vec<S>> = self
            .state
            .iter()
            .map(|d| {
                let dp = self.scenario.paths(*d).expect("validated state driver");
                paths.iter().map(|&p| dp.value(p, i)).collect()
            })
            .collect();
        regress_conditional_expectation(&cols, y, self.degree)
    }

    pub(crate) fn check_finite(&self, y: &[S], paths: &[usize], i: usize, what: &str) -> Result<()> {
        if let Some(k) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::Solver(format!(
                "non-finite {what} on path {} at t={}",
                paths[k],
                self.scenario.grid().time(i)
            )));
        }
        Ok(())
    }

    fn diag(stage: Stage, time: S, paths: usize, fit: &RegressionFit<S>) -> StepDiagnostics {
        StepDiagnostics {
            stage,
            time: time.to_f64_lossy(),
            paths,
            residual_norm: fit.residual_norm,
            condition: fit.condition,
            mean_fallback: fit.mean_fallback,
            ridge: fit.ridge,
            split_violations: 0,
        }
    }

    /// Collateral mark-to-market on the margining grid, solved on all paths
    /// ignoring defaults. The first sweep solves `m = A + kappa G(m)` in closed
    /// form; later sweeps add the margining cost of the previous ledger.
    /// Returns the ledger and the continuation values `A` of the last sweep.
    fn collateral_sweep(&mut self, sweeps: usize) -> Result<(CollateralLedger<S>, Vec<S>)> {
        let s = self.scenario;
        let grid = s.grid();
        let n = s.n_paths();
        let dates = grid.margining();
        let nd = dates.len();
        let last = grid.last_index();
        let all: Vec<usize> = (0..n).collect();
        let csa = self.csa;
        let inf = S::infinity();
        let mut ledger: Option<CollateralLedger<S>> = None;
        let mut cont = vec![S::zero(); n * nd];
        let mut mtm = vec![S::zero(); n * nd];
        for _ in 0..sweeps {
            let mut next = vec![S::zero(); n];
            for k in (0..nd).rev() {
                let a = dates[k];
                let b = if k + 1 < nd { dates[k + 1] } else { last };
                if a == b {
                    next.iter_mut().for_each(|v| *v = S::zero());
                    for p in 0..n {
                        mtm[p * nd + k] = S::zero();
                        cont[p * nd + k] = S::zero();
                    }
                    continue;
                }
                let y: Vec<S> = all
                    .par_iter()
                    .map(|&p| s.discount(p, a, b) * next[p] + self.flows.pi(s, p, a, b, inf))
                    .collect();
                self.check_finite(&y, &all, a, "collateral continuation value")?;
                let fit = self.regress(a, &all, &y)?;
                self.steps.push(Self::diag(Stage::Collateral, grid.time(a), n, &fit));
                let m: Vec<Result<S>> = all
                    .par_iter()
                    .map(|&p| {
                        let av = fit.fitted[p];
                        match &ledger {
                            Some(l) => Ok(av + l.gamma_term(p, k)),
                            None => implicit_mark(s, csa, p, a, b, av),
                        }
                    })
                    .collect();
                for (p, v) in m.into_iter().enumerate() {
                    let v = v?;
                    mtm[p * nd + k] = v;
                    cont[p * nd + k] = fit.fitted[p];
                    next[p] = v;
                }
            }
            ledger = Some(build_collateral_ledger(s, csa, &mtm)?);
        }
        Ok((ledger.expect("at least one sweep"), cont))
    }

    /// Default-free valuation on the funding grid over all paths, optionally
    /// with funding costs (no collateral, no hedge). Returns values per path
    /// and funding date.
    fn default_free_sweep(&mut self, with_funding: bool) -> Result<Vec<S>> {
        let s = self.scenario;
        let grid = s.grid();
        let n = s.n_paths();
        let f = grid.funding();
        let nf = f.len();
        let all: Vec<usize> = (0..n).collect();
        let inf = S::infinity();
        let mut out = vec![S::zero(); n * nf];
        let mut next = vec![S::zero(); n];
        for j in (0..nf - 1).rev() {
            let (a, b) = (f[j], f[j + 1]);
            let y: Vec<S> = all
                .par_iter()
                .map(|&p| s.discount(p, a, b) * next[p] + self.flows.pi(s, p, a, b, inf))
                .collect();
            self.check_finite(&y, &all, a, "close-out continuation value")?;
            let fit = self.regress(a, &all, &y)?;
            self.steps.push(Self::diag(Stage::Closeout, grid.time(a), n, &fit));
            let v: Vec<Result<S>> = all
                .par_iter()
                .map(|&p| {
                    let e = fit.fitted[p];
                    if !with_funding {
                        return Ok(e);
                    }
                    let pr = s.bond(p, a, b);
                    let plus = s.simple_bond(&self.policy.funding_plus, p, a, b)?;
                    let minus = s.simple_bond(&self.policy.funding_minus, p, a, b)?;
                    Ok(plus / pr * e.pos() + minus / pr * e.neg_part())
                })
                .collect();
            for (p, x) in v.into_iter().enumerate() {
                let x = x?;
                out[p * nf + j] = x;
                next[p] = x;
            }
        }
        Ok(out)
    }
}

/// Solves `m = A + kappa_s G(m)` with `kappa_s = 1 - P/P^{c_s}` and `s` the
/// sign of `A`.
fn implicit_mark<S: Scalar>(s: &ScenarioSet<S>, csa: &CsaTerms<S>, p: usize, a: usize, b: usize, av: S) -> Result<S> {
    let mag = av.abs();
    if csa.alpha() == S::zero() || mag <= csa.threshold() {
        return Ok(av);
    }
    let reference = reference_bond(s, csa, p, a, b)?;
    let pc = if av < S::zero() {
        s.simple_bond(csa.rate_minus(), p, a, b)?
    } else {
        s.simple_bond(csa.rate_plus(), p, a, b)?
    };
    let kappa = S::one() - reference / pc;
    let ka = kappa * csa.alpha();
    let denom = S::one() - ka;
    if !(denom > S::zero()) {
        return Err(Error::NumericDomain(format!(
            "collateral mark-to-market fixed point degenerate on path {p} (kappa alpha = {ka})"
        )));
    }
    let m = (mag - ka * csa.threshold()) / denom;
    Ok(if av < S::zero() { -m } else { m })
}
