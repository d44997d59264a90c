//! Analytic-oracle comparisons run by `verify` (and used as convergence
//! targets). Each check decides for itself whether the job lies inside the
//! special case its closed form covers.

use cfbva_core::analytic::{
    analytic_ccp_gap_risk, analytic_foreign_collateral, analytic_perfect_collateral, analytic_uncollateralized_fva,
    morini_prampolini, AnalyticValue, CcpGapSpec, UncollateralisedSpec,
};
use cfbva_core::closeout::CloseoutKind;
use cfbva_core::collateral::CollateralCurrency;
use cfbva_core::funding::{FundingMode, HedgeMode};
use cfbva_core::market::{Curve, Driver, Party, ProcessSpec, RateSource, ScenarioSet};
use cfbva_core::solver::PricingResult;
use cfbva_core::Result;

use crate::config::{CcpSection, Job};

/// Absolute slack added to every comparison, for round-off.
const ROUND_OFF: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    /// Quantity being tested (engine value, or an analytic value for the
    /// evaluator-only checks).
    pub value: f64,
    pub target: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, value: f64, target: f64, tolerance: f64, detail: String) -> Self {
        Self {
            name,
            value,
            target,
            tolerance,
            passed: (value - target).abs() <= tolerance,
            detail,
        }
    }

    pub fn gap(&self) -> f64 {
        self.value - self.target
    }
}

/// A reference price the engine should reproduce, with the slack it is
/// allowed: Monte Carlo error of the reference plus a bound on the time
/// discretisation bias.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Target {
    pub name: &'static str,
    pub value: f64,
    pub standard_error: f64,
    pub discretisation: f64,
}

impl Target {
    pub fn check(&self, result: &PricingResult<f64>, sigmas: f64) -> Check {
        let se = result.standard_error.hypot(self.standard_error);
        let tol = sigmas * se + self.discretisation + ROUND_OFF * (1.0 + self.value.abs());
        Check::new(
            self.name,
            result.value,
            self.value,
            tol,
            format!(
                "{sigmas} x combined standard error {se:.3e} + discretisation {:.3e}",
                self.discretisation
            ),
        )
    }
}

fn curve_of(job: &Job, d: Driver) -> Option<Curve<f64>> {
    match job.drivers.spec(d) {
        Some(ProcessSpec::Deterministic(c)) => Some(c.clone()),
        None if d.is_intensity() => Some(Curve::Flat(0.0)),
        None if d == Driver::ShortRate => Some(Curve::Flat(0.0)),
        _ => None,
    }
}

/// Deterministic curve of a rate source, if it has one.
fn rate_curve(job: &Job, src: &RateSource<f64>) -> Option<Curve<f64>> {
    match src {
        RateSource::RiskFree { spread } => curve_of(job, Driver::ShortRate).map(|c| c.shifted(*spread)),
        RateSource::Driver(d) => curve_of(job, *d),
    }
}

fn max_abs(c: &Curve<f64>) -> f64 {
    match c {
        Curve::Flat(v) => v.abs(),
        Curve::Linear { values, .. } => values.iter().fold(0.0, |m, v| m.max(v.abs())),
    }
}

fn is_zero(c: &Curve<f64>) -> bool {
    max_abs(c) == 0.0
}

fn max_dt(job: &Job) -> f64 {
    let g = &job.grid;
    (0..g.last_index()).map(|i| g.dt(i)).fold(0.0, f64::max)
}

/// Bound on the gap between per-step simple compounding and continuous
/// discounting at rates up to `rate`: `|V| rate^2 T dt / 2`.
fn compounding_bias(job: &Job, value: f64, rate: f64) -> f64 {
    value.abs() * rate * rate * job.grid.maturity() * max_dt(job) / 2.0
}

fn no_defaults(job: &Job) -> bool {
    [Driver::IntensityInvestor, Driver::IntensityCounterparty]
        .into_iter()
        .all(|d| curve_of(job, d).is_some_and(|c| is_zero(&c)))
}

fn analytic_scenario<'a>(job: &Job, scenario: &'a ScenarioSet<f64>) -> Option<&'a ScenarioSet<f64>> {
    (!job.deal.is_deterministic()).then_some(scenario)
}

/// Full collateralisation in the domestic currency, margined on every date.
fn perfectly_collateralised(job: &Job) -> bool {
    let csa = &job.csa;
    csa.alpha() == 1.0
        && csa.threshold() == 0.0
        && csa.mta() == 0.0
        && job.grid.margining().len() == job.grid.len()
        && (job.closeout == CloseoutKind::CollateralValue || no_defaults(job))
}

/// The collateral rate when it is deterministic and the same for both
/// directions.
fn collateral_curve(job: &Job) -> Option<Curve<f64>> {
    let plus = rate_curve(job, job.csa.rate_plus())?;
    (rate_curve(job, job.csa.rate_minus())? == plus).then_some(plus)
}

pub fn perfect_collateral_target(job: &Job, scenario: &ScenarioSet<f64>) -> Result<Option<Target>> {
    if !perfectly_collateralised(job) || job.csa.currency() != &CollateralCurrency::Domestic {
        return Ok(None);
    }
    let Some(c) = collateral_curve(job) else {
        return Ok(None);
    };
    let AnalyticValue { value, standard_error } =
        analytic_perfect_collateral(&job.deal, &c, analytic_scenario(job, scenario))?;
    Ok(Some(Target {
        name: if is_zero(&c) { "futures" } else { "perfect_collateral" },
        value,
        standard_error,
        discretisation: compounding_bias(job, value, max_abs(&c)),
    }))
}

pub fn foreign_collateral_target(job: &Job, scenario: &ScenarioSet<f64>) -> Result<Option<Target>> {
    let CollateralCurrency::Foreign { basis_spread } = *job.csa.currency() else {
        return Ok(None);
    };
    if !perfectly_collateralised(job) {
        return Ok(None);
    }
    let (Some(c), Some(r), Some(re)) = (
        collateral_curve(job),
        curve_of(job, Driver::ShortRate),
        curve_of(job, Driver::ForeignRate),
    ) else {
        return Ok(None);
    };
    // the basis is quoted on the foreign bond, so it shifts the foreign rate
    let re = re.shifted(basis_spread);
    let AnalyticValue { value, standard_error } =
        analytic_foreign_collateral(&job.deal, &c, &r, &re, analytic_scenario(job, scenario))?;
    let rate = max_abs(&c) + max_abs(&r) + max_abs(&re);
    Ok(Some(Target {
        name: "foreign_collateral",
        value,
        standard_error,
        discretisation: compounding_bias(job, value, rate),
    }))
}

/// Uncollateralised deal with deterministic inputs and independent defaults.
fn uncollateralised_spec(job: &Job) -> Option<UncollateralisedSpec<f64>> {
    let p = &job.policy;
    let deterministic = job.deal.is_deterministic() && job.drivers.stochastic_drivers().is_empty();
    if !deterministic
        || job.csa.alpha() != 0.0
        || job.closeout != CloseoutKind::RiskFreeWithFunding
        || p.mode != FundingMode::Treasury
        || p.hedge != HedgeMode::MeasureChange
        || p.hedging_plus != p.funding_plus
        || p.hedging_minus != p.funding_minus
        || job.drivers.default_correlation != 0.0
    {
        return None;
    }
    Some(UncollateralisedSpec {
        funding_plus: rate_curve(job, &p.funding_plus)?,
        funding_minus: rate_curve(job, &p.funding_minus)?,
        counterparty_intensity: curve_of(job, Driver::IntensityCounterparty)?,
        investor_intensity: curve_of(job, Driver::IntensityInvestor)?,
        lgd_counterparty: job.csa.lgd(Party::Counterparty),
        lgd_investor: job.csa.lgd(Party::Investor),
    })
}

pub fn uncollateralised_target(job: &Job) -> Result<Option<Target>> {
    let Some(spec) = uncollateralised_spec(job) else {
        return Ok(None);
    };
    let value = analytic_uncollateralized_fva(&job.deal, &spec)?;
    let rate = max_abs(&spec.funding_plus).max(max_abs(&spec.funding_minus))
        + max_abs(&spec.counterparty_intensity)
        + max_abs(&spec.investor_intensity);
    Ok(Some(Target {
        name: "uncollateralised",
        value,
        standard_error: 0.0,
        discretisation: compounding_bias(job, value, rate),
    }))
}

/// No defaults, no collateral, funding at the risk-free rate, everything
/// deterministic: the price is the discounted cash-flow sum, with no
/// discretisation slack.
pub fn risk_free_target(job: &Job) -> Result<Option<Target>> {
    let p = &job.policy;
    let rf = RateSource::risk_free();
    if !job.deal.is_deterministic()
        || !job.drivers.stochastic_drivers().is_empty()
        || !no_defaults(job)
        || job.csa.alpha() != 0.0
        || [&p.funding_plus, &p.funding_minus, &p.hedging_plus, &p.hedging_minus]
            .iter()
            .any(|s| **s != rf)
    {
        return Ok(None);
    }
    let Some(r) = curve_of(job, Driver::ShortRate) else {
        return Ok(None);
    };
    let value = analytic_perfect_collateral(&job.deal, &r, None)?.value;
    Ok(Some(Target {
        name: "risk_free",
        value,
        standard_error: 0.0,
        discretisation: 0.0,
    }))
}

/// Every engine target that applies, in a fixed order.
pub fn targets(job: &Job, scenario: &ScenarioSet<f64>) -> Result<Vec<Target>> {
    Ok([
        risk_free_target(job)?,
        perfect_collateral_target(job, scenario)?,
        foreign_collateral_target(job, scenario)?,
        uncollateralised_target(job)?,
    ]
    .into_iter()
    .flatten()
    .collect())
}

/// Evaluator-only checks that need no engine run.
pub fn evaluator_checks(job: &Job, ccp: Option<&CcpSection>) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    if let Some(spec) = uncollateralised_spec(job) {
        let flows_positive = job.deal.flows().iter().all(|f| f.payoff.evaluate(0.0) >= 0.0);
        if flows_positive && spec.lgd_counterparty == 1.0 && is_zero(&spec.investor_intensity) {
            let v = analytic_uncollateralized_fva(&job.deal, &spec)?;
            let t = morini_prampolini(&job.deal, &spec.counterparty_intensity, &spec.funding_plus)?;
            out.push(Check::new(
                "morini_prampolini",
                v,
                t,
                1e-12 * (1.0 + t.abs()),
                "uncollateralised evaluator against the lambda + f discounting".into(),
            ));
        }
    }
    if let Some(c) = ccp {
        out.extend(ccp_checks(job, c)?);
    }
    Ok(out)
}

fn ccp_spec(c: &CcpSection, jump: f64) -> CcpGapSpec<f64> {
    CcpGapSpec {
        collateral_rate: Curve::Flat(c.collateral_rate),
        counterparty_intensity: Curve::Flat(c.intensity_counterparty),
        investor_intensity: Curve::Flat(c.intensity_investor),
        overnight: Curve::Flat(c.overnight),
        liquidity_plus: Curve::Flat(c.liquidity_plus),
        liquidity_minus: Curve::Flat(c.liquidity_minus),
        counterparty_jump: Curve::Flat(jump),
        investor_jump: Curve::Flat(jump),
        lgd_counterparty: c.lgd_counterparty,
        lgd_investor: c.lgd_investor,
    }
}

/// Closed form for flat inputs: each gap integral is
/// `LGD lambda J (1 - exp(-k T)) / k` with `k = lambda + l + e`.
pub fn ccp_closed_form(base: f64, c: &CcpSection, horizon: f64) -> f64 {
    let leg = |lambda: f64, liq: f64, lgd: f64, j: f64| {
        let k = lambda + liq + c.overnight;
        let integral = if k == 0.0 {
            horizon
        } else {
            (1.0 - (-k * horizon).exp()) / k
        };
        lgd * lambda * j * integral
    };
    base - leg(
        c.intensity_counterparty,
        c.liquidity_plus,
        c.lgd_counterparty,
        c.jump.max(0.0),
    ) - leg(c.intensity_investor, c.liquidity_minus, c.lgd_investor, c.jump.min(0.0))
}

fn ccp_checks(job: &Job, c: &CcpSection) -> Result<Vec<Check>> {
    if !job.deal.is_deterministic() {
        return Ok(Vec::new());
    }
    let base = analytic_perfect_collateral(&job.deal, &Curve::Flat(c.collateral_rate), None)?.value;
    let horizon = job.deal.flows().last().map_or(0.0, |f| f.time);
    let gap = analytic_ccp_gap_risk(&job.deal, &ccp_spec(c, c.jump), None)?.value;
    let closed = ccp_closed_form(base, c, horizon);
    let zero = analytic_ccp_gap_risk(&job.deal, &ccp_spec(c, 0.0), None)?.value;
    Ok(vec![
        Check::new(
            "ccp_gap_risk",
            gap,
            closed,
            1e-10 * (1.0 + closed.abs()),
            "quadrature against the flat-input closed form".into(),
        ),
        Check::new(
            "ccp_zero_jump",
            zero,
            base,
            1e-12 * (1.0 + base.abs()),
            "no collateral jump leaves the perfect-collateral value".into(),
        ),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ccp_closed_form_reduces_to_base_without_jump() {
        let c = CcpSection {
            jump: 0.0,
            lgd_counterparty: 0.6,
            lgd_investor: 0.6,
            intensity_counterparty: 0.03,
            intensity_investor: 0.01,
            overnight: 0.01,
            liquidity_plus: 0.005,
            liquidity_minus: 0.0,
            collateral_rate: 0.01,
        };
        assert_eq!(ccp_closed_form(0.99, &c, 1.0), 0.99);
        let c = CcpSection { jump: 1.0, ..c };
        let k: f64 = 0.045;
        let want = 0.99 - 0.6 * 0.03 * (1.0 - (-k).exp()) / k;
        assert!((ccp_closed_form(0.99, &c, 1.0) - want).abs() < 1e-15);
    }

    #[test]
    fn check_tolerance_is_inclusive() {
        let c = Check::new("x", 1.5, 1.0, 0.5, String::new());
        assert!(c.passed);
        assert_eq!(c.gap(), 0.5);
    }
}
