//! Close-out amounts and the on-default cash flow `theta`.

use crate::collateral::CsaTerms;
use crate::deal::DealFlows;
use crate::error::{Error, Result};
use crate::market::{Party, ScenarioSet};
use crate::scalar::Scalar;

/// Which mark-to-market is used as the close-out amount `epsilon`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum CloseoutKind {
    /// Default-free value discounted at the risk-free rate.
    #[default]
    RiskFree,
    /// The collateral mark-to-market, mapped through the CSA target rule.
    CollateralValue,
    /// Default-free value including funding and margining costs.
    RiskFreeWithFunding,
}

impl CloseoutKind {
    pub fn name(self) -> &'static str {
        match self {
            CloseoutKind::RiskFree => "risk_free",
            CloseoutKind::CollateralValue => "collateral_value",
            CloseoutKind::RiskFreeWithFunding => "risk_free_with_funding",
        }
    }
}

/// `theta` split into the close-out amount and its credit and collateral
/// adjustments. `theta` is the sum of the four parts, in that order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThetaBreakdown<S> {
    pub closeout: S,
    pub cva: S,
    pub dva: S,
    pub rehypothecation: S,
    pub theta: S,
}

/// On-default cash flow for a default by `defaulter` with close-out
/// `epsilon` (the same amount from both sides) and pre-default collateral
/// `collateral`.
pub fn on_default_theta<S: Scalar>(
    epsilon: S,
    collateral: S,
    csa: &CsaTerms<S>,
    defaulter: Party,
) -> ThetaBreakdown<S> {
    let (cp, cn) = (collateral.pos(), collateral.neg_part());
    let (ep, en) = (epsilon.pos(), epsilon.neg_part());
    let zero = S::zero();
    let (cva, dva, rehyp) = match defaulter {
        Party::Counterparty => (
            -csa.lgd(Party::Counterparty) * (ep - cp).pos(),
            zero,
            -csa.lgd_prime(Party::Counterparty) * (en - cn).pos(),
        ),
        Party::Investor => (
            zero,
            -csa.lgd(Party::Investor) * (en - cn).neg_part(),
            -csa.lgd_prime(Party::Investor) * (ep - cp).neg_part(),
        ),
    };
    ThetaBreakdown {
        closeout: epsilon,
        cva,
        dva,
        rehypothecation: rehyp,
        theta: epsilon + cva + dva + rehyp,
    }
}

/// Settlement by the eight exposure/collateral cases, before the collateral
/// account is added back. `theta = C + eight_case_settlement(...)`.
///
/// Boundaries: for a counterparty default `epsilon >= 0` and `C >= 0` count as
/// positive; for an investor default `epsilon <= 0` and `C <= 0` count as
/// negative.
pub fn eight_case_settlement<S: Scalar>(epsilon: S, c: S, csa: &CsaTerms<S>, defaulter: Party) -> S {
    let zero = S::zero();
    let d = epsilon - c;
    match defaulter {
        Party::Counterparty => {
            let (r, rp) = (
                csa.recovery(Party::Counterparty),
                csa.rehyp_recovery(Party::Counterparty),
            );
            match (epsilon >= zero, c >= zero) {
                (false, true) => d,
                (false, false) => d.neg_part() + rp * d.pos(),
                (true, true) => d.neg_part() + r * d.pos(),
                (true, false) => r * epsilon - rp * c,
            }
        }
        Party::Investor => {
            let (r, rp) = (csa.recovery(Party::Investor), csa.rehyp_recovery(Party::Investor));
            match (epsilon > zero, c > zero) {
                (true, false) => d,
                (true, true) => d.pos() + rp * d.neg_part(),
                (false, false) => d.pos() + r * d.neg_part(),
                (false, true) => r * epsilon - rp * c,
            }
        }
    }
}

/// Close-out values on a set of master-grid dates for every path. The value at
/// date `j` is the default-free valuation of the flows after `t_j`; a default
/// at `tau` is settled on the surface of the last date `t_j <= tau`, carried to
/// `tau` by removing the flows in `(t_j, tau]` and accruing over the stub.
#[derive(Clone, Debug)]
pub struct CloseoutSurface<S> {
    kind: CloseoutKind,
    dates: Vec<usize>,
    n_paths: usize,
    values: Vec<S>,
}

impl<S: Scalar> CloseoutSurface<S> {
    pub fn new(kind: CloseoutKind, dates: Vec<usize>, n_paths: usize, values: Vec<S>) -> Result<Self> {
        if dates.is_empty() || values.len() != dates.len() * n_paths {
            return Err(Error::usage(
                "close-out surface shape does not match its dates and paths",
            ));
        }
        Ok(Self {
            kind,
            dates,
            n_paths,
            values,
        })
    }

    pub fn kind(&self) -> CloseoutKind {
        self.kind
    }

    pub fn dates(&self) -> &[usize] {
        &self.dates
    }

    pub fn value(&self, path: usize, k: usize) -> S {
        self.values[path * self.dates.len() + k]
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }
}

/// Close-out amounts `(epsilon_I, epsilon_C)` for a default at `tau`, which
/// must lie strictly inside the deal.
pub fn closeout_amount<S: Scalar>(
    surface: &CloseoutSurface<S>,
    scenario: &ScenarioSet<S>,
    flows: &DealFlows<S>,
    csa: &CsaTerms<S>,
    path: usize,
    tau: S,
) -> Result<(S, S)> {
    let grid = scenario.grid();
    if !(tau > S::zero() && tau < grid.maturity()) {
        return Err(Error::usage(format!("close-out requested at tau={tau} outside (0, T)")));
    }
    let i = grid.left_index(tau);
    let k = surface.dates.partition_point(|&d| d <= i) - 1;
    let j = surface.dates[k];
    let carried =
        (surface.value(path, k) - flows.pi_until(scenario, path, j, tau)) / scenario.discount_to(path, j, tau);
    let eps = match surface.kind {
        CloseoutKind::CollateralValue => csa.target(carried),
        CloseoutKind::RiskFree | CloseoutKind::RiskFreeWithFunding => carried,
    };
    Ok((eps, eps))
}

/// Everything recorded about a default event on one path.
#[derive(Clone, Debug, PartialEq)]
pub struct OnDefaultOutcome<S> {
    pub path: usize,
    pub tau: S,
    pub defaulter: Party,
    pub epsilon: S,
    pub pre_default_collateral: S,
    pub breakdown: ThetaBreakdown<S>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn csa() -> CsaTerms<f64> {
        CsaTerms::new(1.0)
            .unwrap()
            .with_recoveries(0.3, 0.4)
            .unwrap()
            .with_rehypothecation(0.6, 0.7)
            .unwrap()
    }

    #[test]
    fn fully_collateralised_default_settles_at_closeout() {
        for party in [Party::Investor, Party::Counterparty] {
            let b = on_default_theta(50.0, 50.0, &csa(), party);
            assert_eq!(b.theta, 50.0);
            let b = on_default_theta(-50.0, -50.0, &csa(), party);
            assert_eq!(b.theta, -50.0);
        }
    }

    #[test]
    fn uncollateralised_counterparty_default_recovers_r() {
        let b = on_default_theta(100.0, 0.0, &csa(), Party::Counterparty);
        assert!((b.theta - 40.0).abs() < 1e-12);
        assert!((b.cva + 60.0).abs() < 1e-12);
        assert_eq!(b.dva, 0.0);
    }

    #[test]
    fn boundary_cases_agree_with_the_eight_cases() {
        let c = csa();
        for party in [Party::Investor, Party::Counterparty] {
            for (e, x) in [(0.0, 0.0), (0.0, 5.0), (0.0, -5.0), (5.0, 0.0), (-5.0, 0.0)] {
                let lhs = on_default_theta(e, x, &c, party).theta;
                let rhs = x + eight_case_settlement(e, x, &c, party);
                assert!((lhs - rhs).abs() < 1e-12, "{party:?} {e} {x}");
            }
        }
    }

    proptest! {
        #[test]
        fn theta_matches_eight_cases(
            e in -100.0f64..100.0,
            x in -100.0f64..100.0,
            ri in 0.0f64..1.0, rc in 0.0f64..1.0,
            ui in 0.0f64..1.0, uc in 0.0f64..1.0,
            investor in any::<bool>(),
        ) {
            let c = CsaTerms::new(1.0).unwrap().with_recoveries(ri, rc).unwrap()
                .with_rehypothecation(ri + (1.0 - ri) * ui, rc + (1.0 - rc) * uc).unwrap();
            let party = if investor { Party::Investor } else { Party::Counterparty };
            let b = on_default_theta(e, x, &c, party);
            let rhs = x + eight_case_settlement(e, x, &c, party);
            prop_assert!((b.theta - rhs).abs() <= 1e-12 * (1.0 + e.abs() + x.abs()));
            prop_assert_eq!(b.closeout + b.cva + b.dva + b.rehypothecation, b.theta);
        }
    }
}
