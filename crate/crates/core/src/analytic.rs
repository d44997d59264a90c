//! Closed-form and quadrature evaluators for the special cases the engine is
//! checked against.

use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;

use crate::deal::{Deal, DealFlows};
use crate::error::{Error, Result};
use crate::market::{Curve, ScenarioSet};
use crate::scalar::Scalar;

/// Gauss–Legendre nodes per quadrature segment.
const GL_NODES: usize = 24;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnalyticValue<S> {
    pub value: S,
    /// Zero when evaluated by quadrature; the Monte Carlo error otherwise.
    pub standard_error: S,
}

impl<S: Scalar> AnalyticValue<S> {
    fn exact(value: S) -> Self {
        Self {
            value,
            standard_error: S::zero(),
        }
    }
}

fn deterministic_flows<S: Scalar>(deal: &Deal<S>) -> Result<Vec<(S, S)>> {
    if !deal.is_deterministic() {
        return Err(Error::usage("deal has stochastic cash flows; supply a scenario set"));
    }
    Ok(deal
        .flows()
        .iter()
        .map(|f| (f.time, f.payoff.evaluate(S::zero())))
        .collect())
}

/// `E sum_f X_f exp(-int_0^{t_f} rate)` with a deterministic rate: exact for
/// fixed flows, averaged over the scenario paths otherwise.
fn discounted_at<S: Scalar>(
    deal: &Deal<S>,
    scenario: Option<&ScenarioSet<S>>,
    rate: impl Fn(S) -> S,
) -> Result<AnalyticValue<S>> {
    match scenario {
        None => {
            let flows = deterministic_flows(deal)?;
            Ok(AnalyticValue::exact(
                flows.iter().map(|&(t, x)| x * (-rate(t)).exp()).sum(),
            ))
        }
        Some(s) => {
            let flows = DealFlows::evaluate(deal, s)?;
            let disc: Vec<S> = deal.flows().iter().map(|f| (-rate(f.time)).exp()).collect();
            let n = s.n_paths();
            let values: Vec<S> = (0..n)
                .map(|p| (0..flows.len()).map(|f| disc[f] * flows.amount(f, p)).sum())
                .collect();
            let nn = S::from_usize(n).unwrap();
            let mean = values.iter().copied().sum::<S>() / nn;
            let var = if n > 1 {
                values.iter().map(|v| (*v - mean) * (*v - mean)).sum::<S>() / (nn - S::one())
            } else {
                S::zero()
            };
            Ok(AnalyticValue {
                value: mean,
                standard_error: (var / nn).sqrt(),
            })
        }
    }
}

/// Continuous perfect collateralisation: cash flows discounted at the
/// collateral rate, `E sum X_f exp(-int_0^{t_f} c~)`.
pub fn analytic_perfect_collateral<S: Scalar>(
    deal: &Deal<S>,
    collateral_rate: &Curve<S>,
    scenario: Option<&ScenarioSet<S>>,
) -> Result<AnalyticValue<S>> {
    discounted_at(deal, scenario, |t| collateral_rate.integral(S::zero(), t))
}

/// Perfect collateral posted in a foreign currency: discounting at
/// `c~ - r^e + r`.
pub fn analytic_foreign_collateral<S: Scalar>(
    deal: &Deal<S>,
    collateral_rate: &Curve<S>,
    domestic_rate: &Curve<S>,
    foreign_rate: &Curve<S>,
    scenario: Option<&ScenarioSet<S>>,
) -> Result<AnalyticValue<S>> {
    let z = S::zero();
    discounted_at(deal, scenario, |t| {
        collateral_rate.integral(z, t) - foreign_rate.integral(z, t) + domestic_rate.integral(z, t)
    })
}

fn knots<S: Scalar>(curves: &[&Curve<S>], extra: &[S], end: S) -> Vec<f64> {
    let mut k: Vec<f64> = vec![0.0, end.to_f64_lossy()];
    for c in curves {
        if let Curve::Linear { times, .. } = c {
            k.extend(times.iter().map(|t| t.to_f64_lossy()));
        }
    }
    k.extend(extra.iter().map(|t| t.to_f64_lossy()));
    let end = end.to_f64_lossy();
    k.retain(|t| *t >= 0.0 && *t <= end);
    k.sort_by(|a, b| a.partial_cmp(b).unwrap());
    k.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    k
}

/// `int_0^end g` by composite Gauss–Legendre over the given segments.
fn integrate(knots: &[f64], mut g: impl FnMut(f64) -> f64) -> f64 {
    let rule = GaussLegendre::new(NonZeroUsize::new(GL_NODES).unwrap());
    knots.windows(2).map(|w| rule.integrate(w[0], w[1], &mut g)).sum()
}

/// Inputs of the CCP gap-risk evaluator. All curves are deterministic.
#[derive(Clone, Debug, PartialEq)]
pub struct CcpGapSpec<S> {
    pub collateral_rate: Curve<S>,
    /// First-to-default intensity of the counterparty, `lambda^{C<I}`.
    pub counterparty_intensity: Curve<S>,
    /// First-to-default intensity of the investor, `lambda^{I<C}`.
    pub investor_intensity: Curve<S>,
    pub overnight: Curve<S>,
    pub liquidity_plus: Curve<S>,
    pub liquidity_minus: Curve<S>,
    /// Collateral jump `C_u - C_{u-}` on a counterparty default at `u`.
    pub counterparty_jump: Curve<S>,
    /// Collateral jump on an investor default at `u`.
    pub investor_jump: Curve<S>,
    pub lgd_counterparty: S,
    pub lgd_investor: S,
}

/// Deal intermediated by a CCP: the perfect-collateral value less the gap
/// losses when a default makes the collateral jump,
/// `- int lambda^{C<I} D(.; lambda^{C<I}+l^+ + e) LGD_C (dC)^+`
/// `- int lambda^{I<C} D(.; lambda^{I<C}+l^- + e) LGD_I (dC)^-`.
pub fn analytic_ccp_gap_risk<S: Scalar>(
    deal: &Deal<S>,
    spec: &CcpGapSpec<S>,
    scenario: Option<&ScenarioSet<S>>,
) -> Result<AnalyticValue<S>> {
    let base = analytic_perfect_collateral(deal, &spec.collateral_rate, scenario)?;
    let end = deal.flows().last().map(|f| f.time).unwrap_or(S::zero());
    let z = S::zero();
    let pts = knots(
        &[
            &spec.counterparty_intensity,
            &spec.investor_intensity,
            &spec.overnight,
            &spec.liquidity_plus,
            &spec.liquidity_minus,
            &spec.counterparty_jump,
            &spec.investor_jump,
        ],
        &[],
        end,
    );
    let gap = |lambda: &Curve<S>, liq: &Curve<S>, jump: &Curve<S>, lgd: S, positive: bool| {
        if lgd == z {
            return 0.0;
        }
        integrate(&pts, |u| {
            let us = S::lit(u);
            let j = jump.value(us);
            let part = if positive { j.pos() } else { j.neg_part() };
            if part == z {
                return 0.0;
            }
            let rate = lambda.integral(z, us) + liq.integral(z, us) + spec.overnight.integral(z, us);
            (lambda.value(us) * (-rate).exp() * lgd * part).to_f64_lossy()
        })
    };
    let cva = gap(
        &spec.counterparty_intensity,
        &spec.liquidity_plus,
        &spec.counterparty_jump,
        spec.lgd_counterparty,
        true,
    );
    let dva = gap(
        &spec.investor_intensity,
        &spec.liquidity_minus,
        &spec.investor_jump,
        spec.lgd_investor,
        false,
    );
    Ok(AnalyticValue {
        value: base.value - S::lit(cva) - S::lit(dva),
        standard_error: base.standard_error,
    })
}

/// Deterministic inputs of the uncollateralised funding evaluator.
#[derive(Clone, Debug, PartialEq)]
pub struct UncollateralisedSpec<S> {
    pub funding_plus: Curve<S>,
    pub funding_minus: Curve<S>,
    pub counterparty_intensity: Curve<S>,
    pub investor_intensity: Curve<S>,
    pub lgd_counterparty: S,
    pub lgd_investor: S,
}

/// Funding-discounted value `eps(u)` of the flows after `u`, discounting each
/// stretch between flows at `f^+` or `f^-` by the sign of the value.
fn funded_value<S: Scalar>(flows: &[(S, S)], spec: &UncollateralisedSpec<S>, u: S) -> S {
    let mut v = S::zero();
    for i in (0..flows.len()).rev() {
        let (t, x) = flows[i];
        if t <= u {
            break;
        }
        v += x;
        let from = if i > 0 { flows[i - 1].0.max(u) } else { u };
        let curve = if v < S::zero() {
            &spec.funding_minus
        } else {
            &spec.funding_plus
        };
        v *= (-curve.integral(from, t)).exp();
    }
    v
}

/// Uncollateralised price with funding costs and bilateral default,
/// `eps(0) - int lambda^{C<I} D(.; lambda^{C<I}+f^+) LGD_C eps^+ - int lambda^{I<C} D(.; lambda^{I<C}+f^-) LGD_I eps^-`,
/// with `eps` the funding-discounted default-free value.
pub fn analytic_uncollateralized_fva<S: Scalar>(deal: &Deal<S>, spec: &UncollateralisedSpec<S>) -> Result<S> {
    let flows = deterministic_flows(deal)?;
    let end = flows.last().map(|f| f.0).unwrap_or(S::zero());
    let times: Vec<S> = flows.iter().map(|f| f.0).collect();
    let pts = knots(
        &[
            &spec.funding_plus,
            &spec.funding_minus,
            &spec.counterparty_intensity,
            &spec.investor_intensity,
        ],
        &times,
        end,
    );
    let z = S::zero();
    let term = |lambda: &Curve<S>, f: &Curve<S>, lgd: S, positive: bool| {
        if lgd == z {
            return 0.0;
        }
        integrate(&pts, |u| {
            let us = S::lit(u);
            let e = funded_value(&flows, spec, us);
            let part = if positive { e.pos() } else { e.neg_part() };
            let rate = lambda.integral(z, us) + f.integral(z, us);
            (lambda.value(us) * (-rate).exp() * lgd * part).to_f64_lossy()
        })
    };
    let cva = term(
        &spec.counterparty_intensity,
        &spec.funding_plus,
        spec.lgd_counterparty,
        true,
    );
    let dva = term(&spec.investor_intensity, &spec.funding_minus, spec.lgd_investor, false);
    Ok(funded_value(&flows, spec, z) - S::lit(cva) - S::lit(dva))
}

/// Positive payoff, zero recovery, no investor default: discounting at
/// `lambda^C + f^+`.
pub fn morini_prampolini<S: Scalar>(
    deal: &Deal<S>,
    counterparty_intensity: &Curve<S>,
    funding_plus: &Curve<S>,
) -> Result<S> {
    let flows = deterministic_flows(deal)?;
    if flows.iter().any(|f| f.1 < S::zero()) {
        return Err(Error::usage("reduction holds only for non-negative cash flows"));
    }
    let z = S::zero();
    Ok(flows
        .iter()
        .map(|&(t, x)| x * (-(counterparty_intensity.integral(z, t) + funding_plus.integral(z, t))).exp())
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deal::Payoff;
    use crate::grid::SimulationGrid;

    fn unit_deal() -> Deal<f64> {
        let grid = SimulationGrid::dense(1.0, 4).unwrap();
        Deal::new(vec![(1.0, Payoff::Fixed(1.0))], &grid).unwrap()
    }

    #[test]
    fn perfect_collateral_quadrature() {
        let d = unit_deal();
        let v = analytic_perfect_collateral(&d, &Curve::Flat(0.02), None).unwrap();
        assert!((v.value - 0.980199).abs() < 1e-6);
        let v = analytic_perfect_collateral(&d, &Curve::Flat(0.0), None).unwrap();
        assert_eq!(v.value, 1.0);
    }

    #[test]
    fn foreign_collateral_discount() {
        let d = unit_deal();
        let v =
            analytic_foreign_collateral(&d, &Curve::Flat(0.02), &Curve::Flat(0.01), &Curve::Flat(0.03), None).unwrap();
        assert!((v.value - 1.0).abs() < 1e-15);
        let v =
            analytic_foreign_collateral(&d, &Curve::Flat(0.03), &Curve::Flat(0.01), &Curve::Flat(0.01), None).unwrap();
        assert!((v.value - 0.970446).abs() < 1e-6);
    }

    fn ccp(jump: f64) -> CcpGapSpec<f64> {
        CcpGapSpec {
            collateral_rate: Curve::Flat(0.01),
            counterparty_intensity: Curve::Flat(0.03),
            investor_intensity: Curve::Flat(0.01),
            overnight: Curve::Flat(0.01),
            liquidity_plus: Curve::Flat(0.005),
            liquidity_minus: Curve::Flat(0.002),
            counterparty_jump: Curve::Flat(jump),
            investor_jump: Curve::Flat(0.0),
            lgd_counterparty: 0.6,
            lgd_investor: 0.6,
        }
    }

    #[test]
    fn ccp_gap_closed_form() {
        let d = unit_deal();
        let base = analytic_perfect_collateral(&d, &Curve::Flat(0.01), None).unwrap().value;
        let v = analytic_ccp_gap_risk(&d, &ccp(1.0), None).unwrap().value;
        let k = 0.03 + 0.005 + 0.01;
        let closed = 0.6 * 0.03 * (1.0 - (-k * 1.0f64).exp()) / k;
        assert!((base - v - closed).abs() < 1e-10);
        assert_eq!(analytic_ccp_gap_risk(&d, &ccp(0.0), None).unwrap().value, base);
        let mut s = ccp(1.0);
        s.lgd_counterparty = 0.0;
        assert_eq!(analytic_ccp_gap_risk(&d, &s, None).unwrap().value, base);
    }

    fn unc(lc: f64, li: f64) -> UncollateralisedSpec<f64> {
        UncollateralisedSpec {
            funding_plus: Curve::Flat(0.03),
            funding_minus: Curve::Flat(0.01),
            counterparty_intensity: Curve::Flat(lc),
            investor_intensity: Curve::Flat(li),
            lgd_counterparty: 1.0,
            lgd_investor: 0.6,
        }
    }

    #[test]
    fn uncollateralised_reduces_to_morini_prampolini() {
        let d = unit_deal();
        let v = analytic_uncollateralized_fva(&d, &unc(0.02, 0.0)).unwrap();
        assert!((v - (-0.05f64).exp()).abs() < 1e-12);
        let mp = morini_prampolini(&d, &Curve::Flat(0.02), &Curve::Flat(0.03)).unwrap();
        assert!((v - mp).abs() < 1e-12);
        let v = analytic_uncollateralized_fva(&d, &unc(0.0, 0.0)).unwrap();
        assert!((v - (-0.03f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn funded_value_switches_rate_with_sign() {
        let grid = SimulationGrid::dense(2.0, 2).unwrap();
        let d = Deal::new(vec![(1.0, Payoff::Fixed(3.0)), (2.0, Payoff::Fixed(-1.0))], &grid).unwrap();
        let v = analytic_uncollateralized_fva(&d, &unc(0.0, 0.0)).unwrap();
        let after = -(-0.01f64).exp();
        assert!((v - (3.0 + after) * (-0.03f64).exp()).abs() < 1e-14);
    }
}
