use rayon::prelude::*;

use super::inputs::PricingInputs;
use super::{summarise, Method, PathSums, PricingResult, SolverSpec, Stage, StepDiagnostics};
use crate::closeout::CloseoutKind;
use crate::collateral::CsaTerms;
use crate::deal::Deal;
use crate::error::Result;
use crate::funding::{effective_bond, FundingLedger, LiquidityPolicy};
use crate::market::ScenarioSet;
use crate::scalar::Scalar;

/// Prices the deal by backward induction over the funding grid.
///
/// On each interval the continuation `e = E[D V_{j+1} + Pi-bar_j] - C - H` is
/// regressed on the paths alive at `t_j`, and the funding position resolved
/// branch by branch:
/// `F = (P^{f+-}/P) e + H (1 - P^{f+-}/P^{h~})`, keeping the branch whose sign
/// agrees with `F`, and `V = C + H + F`.
pub fn backward_cfbva_price<S: Scalar>(
    scenario: &ScenarioSet<S>,
    deal: &Deal<S>,
    csa: &CsaTerms<S>,
    policy: &LiquidityPolicy<S>,
    closeout: CloseoutKind,
    spec: &SolverSpec,
) -> Result<PricingResult<S>> {
    let inputs = PricingInputs::prepare(scenario, deal, csa, policy, closeout, spec)?;
    inputs.backward(spec.keep_ledgers)
}

struct Resolved<S> {
    value: S,
    position: S,
    hedge: S,
    bond: S,
    bond_f: S,
    bond_h: S,
    violation: bool,
}

impl<S: Scalar> PricingInputs<'_, S> {
    fn resolve(&self, p: usize, j: usize, expected: S) -> Result<Resolved<S>> {
        let s = self.scenario;
        let f = s.grid().funding();
        let (a, b) = (f[j], f[j + 1]);
        let c = self.funding_collateral(p, a);
        let h = self.hedge(p, j);
        let pr = s.bond(p, a, b);
        let (pf_plus, pf_minus) = self.policy.funding_bonds(s, self.deal_recovery(), p, a, b)?;
        let ph = if h == S::zero() {
            S::one()
        } else {
            let (hp, hm) = self.policy.hedging_bonds(s, p, a, b)?;
            effective_bond(hp, hm, h)
        };
        let branch = |pf: S| {
            let carry = if h == S::zero() {
                S::zero()
            } else {
                h * (S::one() - pf / ph)
            };
            pf / pr * (expected - c - h) + carry
        };
        let up = branch(pf_plus);
        let (position, violation) = if up > S::zero() {
            (up, false)
        } else {
            let down = branch(pf_minus);
            if down < S::zero() {
                (down, false)
            } else {
                (S::zero(), up < S::zero() || down > S::zero())
            }
        };
        Ok(Resolved {
            value: c + h + position,
            position,
            hedge: h,
            bond: pr,
            bond_f: effective_bond(pf_plus, pf_minus, position),
            bond_h: ph,
            violation,
        })
    }

    pub fn backward(&self, keep_ledgers: bool) -> Result<PricingResult<S>> {
        let s = self.scenario;
        let grid = s.grid();
        let f = grid.funding();
        let n = s.n_paths();
        let m = f.len() - 1;
        let mut steps: Vec<StepDiagnostics> = self.steps.clone();
        let mut sums = vec![PathSums::<S>::default(); n];
        let mut ledger = keep_ledgers.then(|| FundingLedger::new(f.to_vec(), n));
        let mut next = vec![S::zero(); n];
        let mut violations = 0usize;

        for j in (0..m).rev() {
            let (a, b) = (f[j], f[j + 1]);
            let (ta, tb) = (grid.time(a), grid.time(b));
            let alive: Vec<usize> = (0..n).filter(|&p| ta < s.first_default(p)).collect();
            let mut value = vec![S::zero(); n];
            if alive.is_empty() {
                next = value;
                continue;
            }
            let payoffs: Vec<_> = alive.par_iter().map(|&p| self.interval_payoff(p, j)).collect();
            let y: Vec<S> = alive
                .iter()
                .zip(&payoffs)
                .map(|(&p, ip)| {
                    let carried = if tb < s.first_default(p) {
                        s.discount(p, a, b) * next[p]
                    } else {
                        S::zero()
                    };
                    carried + ip.total()
                })
                .collect();
            self.check_finite(&y, &alive, a, "interval value")?;
            let fit = self.regress(a, &alive, &y)?;
            let resolved: Vec<Result<Resolved<S>>> = alive
                .par_iter()
                .enumerate()
                .map(|(i, &p)| self.resolve(p, j, fit.fitted[i]))
                .collect();
            let mut step_violations = 0;
            for ((&p, ip), r) in alive.iter().zip(&payoffs).zip(resolved) {
                let r = r?;
                value[p] = r.value;
                step_violations += r.violation as usize;
                let phi =
                    r.position * (S::one() - r.bond / r.bond_f) + r.hedge * (r.bond / r.bond_f - r.bond / r.bond_h);
                let disc = s.discount(p, 0, a);
                sums[p].add_interval(disc, ip);
                sums[p].funding += disc * phi;
                if let Some(l) = ledger.as_mut() {
                    l.set(p, j, r.position, r.hedge, r.bond, r.bond_f, r.bond_h);
                }
            }
            violations += step_violations;
            steps.push(StepDiagnostics {
                stage: Stage::Funding,
                time: ta.to_f64_lossy(),
                paths: alive.len(),
                residual_norm: fit.residual_norm,
                condition: fit.condition,
                mean_fallback: fit.mean_fallback,
                ridge: fit.ridge,
                split_violations: step_violations,
            });
            next = value;
        }

        let v0 = next.iter().copied().sum::<S>() / S::from_usize(n).unwrap();
        let (decomposition, standard_error) = summarise(&sums, v0);
        Ok(PricingResult {
            method: Method::Backward,
            value: v0,
            standard_error,
            decomposition,
            steps,
            n_paths: n,
            n_steps: grid.len() - 1,
            seed: s.seed(),
            closeout: self.closeout,
            default_paths: self.default_paths(),
            split_violations: violations,
            collateral: keep_ledgers.then(|| self.ledger.clone()),
            funding: ledger,
            defaults: if keep_ledgers { self.outcomes() } else { Vec::new() },
        })
    }
}
