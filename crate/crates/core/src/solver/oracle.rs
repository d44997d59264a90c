use super::inputs::PricingInputs;
use super::{summarise, Method, PathSums, PricingResult, SolverSpec};
use crate::closeout::CloseoutKind;
use crate::collateral::CsaTerms;
use crate::deal::Deal;
use crate::error::{Error, Result};
use crate::funding::{effective_bond, LiquidityPolicy};
use crate::market::ScenarioSet;
use crate::scalar::Scalar;

/// Prices the deal without regression by compounding the funding-bond ratios
/// `rho_j = P^f/P` along each path:
/// `V_0 = E sum_j 1{tau > t_j} (prod_{i<j} rho_i) D(0,t_j) (rho_j Pi-bar_j + k_j)`
/// with `k_j = (1 - rho_j)(C_j + H_j) + H_j (1 - P^f/P^h)`.
///
/// Only valid when the funding rate does not depend on the sign of the
/// funding position.
pub fn forward_pathwise_oracle<S: Scalar>(
    scenario: &ScenarioSet<S>,
    deal: &Deal<S>,
    csa: &CsaTerms<S>,
    policy: &LiquidityPolicy<S>,
    closeout: CloseoutKind,
    spec: &SolverSpec,
) -> Result<PricingResult<S>> {
    if !policy.is_symmetric(csa.recovery(crate::market::Party::Investor)) {
        return Err(Error::usage("oracle valid only for symmetric funding"));
    }
    let inputs = PricingInputs::prepare(scenario, deal, csa, policy, closeout, spec)?;
    inputs.forward()
}

impl<S: Scalar> PricingInputs<'_, S> {
    pub fn forward(&self) -> Result<PricingResult<S>> {
        if !self.policy.is_symmetric(self.deal_recovery()) {
            return Err(Error::usage("oracle valid only for symmetric funding"));
        }
        let s = self.scenario;
        let grid = s.grid();
        let f = grid.funding();
        let n = s.n_paths();
        let mut sums = Vec::with_capacity(n);
        for p in 0..n {
            let tau = s.first_default(p);
            let mut acc = PathSums::<S>::default();
            let mut weight = S::one();
            let mut total = S::zero();
            for j in 0..f.len() - 1 {
                let (a, b) = (f[j], f[j + 1]);
                if grid.time(a) >= tau {
                    break;
                }
                let ip = self.interval_payoff(p, j);
                let disc = s.discount(p, 0, a);
                let pr = s.bond(p, a, b);
                let (pf, _) = self.policy.funding_bonds(s, self.deal_recovery(), p, a, b)?;
                let rho = pf / pr;
                let h = self.hedge(p, j);
                let c = self.funding_collateral(p, a);
                let hedge_carry = if h == S::zero() {
                    S::zero()
                } else {
                    let (hp, hm) = self.policy.hedging_bonds(s, p, a, b)?;
                    h * (S::one() - pf / effective_bond(hp, hm, h))
                };
                let k = (S::one() - rho) * (c + h) + hedge_carry;
                total += weight * disc * (rho * ip.total() + k);
                acc.add_interval(disc, &ip);
                weight *= rho;
            }
            acc.funding = total - acc.total();
            if !acc.funding.is_finite() {
                return Err(Error::Solver(format!("non-finite oracle value on path {p}")));
            }
            sums.push(acc);
        }
        let mean = sums.iter().map(|a| a.total()).sum::<S>() / S::from_usize(n).unwrap();
        let (decomposition, standard_error) = summarise(&sums, mean);
        Ok(PricingResult {
            method: Method::ForwardOracle,
            value: mean,
            standard_error,
            decomposition,
            steps: self.steps.clone(),
            n_paths: n,
            n_steps: grid.len() - 1,
            seed: s.seed(),
            closeout: self.closeout,
            default_paths: self.default_paths(),
            split_violations: 0,
            collateral: None,
            funding: None,
            defaults: Vec::new(),
        })
    }
}
