//! Cash-flow schedules and the discounted deal flows `Pi(t, u)`.

use crate::error::{Error, Result};
use crate::grid::SimulationGrid;
use crate::market::{Driver, ScenarioSet};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub enum Payoff<S> {
    Fixed(S),
    /// `S_t - K` on the named driver.
    Linear {
        underlying: Driver,
        strike: S,
    },
    /// `max(S_t - K, 0)` on the named driver.
    Call {
        underlying: Driver,
        strike: S,
    },
}

impl<S: Scalar> Payoff<S> {
    pub fn underlying(&self) -> Option<Driver> {
        match self {
            Payoff::Fixed(_) => None,
            Payoff::Linear { underlying, .. } | Payoff::Call { underlying, .. } => Some(*underlying),
        }
    }

    pub fn evaluate(&self, level: S) -> S {
        match self {
            Payoff::Fixed(a) => *a,
            Payoff::Linear { strike, .. } => level - *strike,
            Payoff::Call { strike, .. } => (level - *strike).pos(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CashFlow<S> {
    pub time: S,
    pub index: usize,
    pub payoff: Payoff<S>,
}

/// A deal: cash flows paid to the investor (negative amounts are paid by it),
/// each fixed on a master-grid date after the valuation date.
#[derive(Clone, Debug, PartialEq)]
pub struct Deal<S> {
    flows: Vec<CashFlow<S>>,
}

impl<S: Scalar> Deal<S> {
    pub fn new(flows: Vec<(S, Payoff<S>)>, grid: &SimulationGrid<S>) -> Result<Self> {
        if flows.is_empty() {
            return Err(Error::config("deal has no cash flows"));
        }
        let mut out = Vec::with_capacity(flows.len());
        for (time, payoff) in flows {
            if !(time > S::zero()) {
                return Err(Error::config(format!(
                    "cash flow at {time} is not after the valuation date"
                )));
            }
            let index = grid
                .index_of(time)
                .map_err(|_| Error::config(format!("cash flow time {time} is not on the simulation grid")))?;
            out.push(CashFlow {
                time: grid.time(index),
                index,
                payoff,
            });
        }
        out.sort_by_key(|f| f.index);
        Ok(Self { flows: out })
    }

    pub fn flows(&self) -> &[CashFlow<S>] {
        &self.flows
    }

    pub fn is_deterministic(&self) -> bool {
        self.flows.iter().all(|f| f.payoff.underlying().is_none())
    }

    pub fn last_index(&self) -> usize {
        self.flows.last().map(|f| f.index).unwrap_or(0)
    }
}

/// Deal cash-flow amounts evaluated on every path of a scenario set.
#[derive(Clone, Debug)]
pub struct DealFlows<S> {
    index: Vec<usize>,
    /// One value when the amount is path-independent, else one per path.
    amounts: Vec<Vec<S>>,
}

impl<S: Scalar> DealFlows<S> {
    pub fn evaluate(deal: &Deal<S>, scenario: &ScenarioSet<S>) -> Result<Self> {
        if deal.last_index() > scenario.grid().last_index() {
            return Err(Error::config("deal extends beyond the simulation grid"));
        }
        let mut index = Vec::new();
        let mut amounts = Vec::new();
        for f in deal.flows() {
            index.push(f.index);
            let v = match f.payoff.underlying() {
                None => vec![f.payoff.evaluate(S::zero())],
                Some(d) => {
                    let paths = scenario.paths(d)?;
                    if paths.is_shared() {
                        vec![f.payoff.evaluate(paths.value(0, f.index))]
                    } else {
                        (0..scenario.n_paths())
                            .map(|p| f.payoff.evaluate(paths.value(p, f.index)))
                            .collect()
                    }
                }
            };
            amounts.push(v);
        }
        Ok(Self { index, amounts })
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn index(&self, f: usize) -> usize {
        self.index[f]
    }

    #[inline]
    pub fn amount(&self, f: usize, path: usize) -> S {
        let a = &self.amounts[f];
        if a.len() == 1 {
            a[0]
        } else {
            a[path]
        }
    }

    /// `Pi(t_from, min(t_to, tau))`: flows with `t_from < t_f <= t_to` and
    /// `t_f <= tau`, discounted to `t_from`.
    pub fn pi(&self, scenario: &ScenarioSet<S>, path: usize, from: usize, to: usize, tau: S) -> S {
        let grid = scenario.grid();
        let mut acc = S::zero();
        for (f, &i) in self.index.iter().enumerate() {
            if i <= from {
                continue;
            }
            if i > to || grid.time(i) > tau {
                break;
            }
            acc += scenario.discount(path, from, i) * self.amount(f, path);
        }
        acc
    }

    /// Flows in `(t_from, tau]` discounted to `t_from`.
    pub fn pi_until(&self, scenario: &ScenarioSet<S>, path: usize, from: usize, tau: S) -> S {
        self.pi(scenario, path, from, scenario.grid().last_index(), tau)
    }

    /// Undiscounted sum of all flows on a path.
    pub fn undiscounted(&self, path: usize) -> S {
        (0..self.len()).map(|f| self.amount(f, path)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{simulate_scenarios, DriverConfig, ProcessSpec};
    use approx::assert_relative_eq;

    #[test]
    fn discounted_flows_respect_interval_and_default() {
        let grid = SimulationGrid::dense(2.0, 4).unwrap();
        let cfg = DriverConfig::default().with(Driver::ShortRate, ProcessSpec::flat(0.02));
        let s = simulate_scenarios(&cfg, &grid, 1, 0).unwrap();
        let deal = Deal::new(vec![(1.0, Payoff::Fixed(1.0)), (2.0, Payoff::Fixed(2.0))], &grid).unwrap();
        let f = DealFlows::evaluate(&deal, &s).unwrap();
        let inf = f64::INFINITY;
        assert_relative_eq!(
            f.pi(&s, 0, 0, 4, inf),
            (-0.02f64).exp() + 2.0 * (-0.04f64).exp(),
            epsilon = 1e-14
        );
        assert_relative_eq!(f.pi(&s, 0, 0, 4, 1.5), (-0.02f64).exp(), epsilon = 1e-14);
        assert_eq!(f.pi(&s, 0, 2, 3, inf), 0.0);
        assert_eq!(f.undiscounted(0), 3.0);
    }

    #[test]
    fn off_grid_or_initial_flows_are_rejected() {
        let grid = SimulationGrid::<f64>::dense(1.0, 4).unwrap();
        assert!(Deal::new(vec![(0.3, Payoff::Fixed(1.0))], &grid).is_err());
        assert!(Deal::new(vec![(0.0, Payoff::Fixed(1.0))], &grid).is_err());
    }

    #[test]
    fn payoff_shapes() {
        let call = Payoff::Call {
            underlying: Driver::Underlying,
            strike: 100.0,
        };
        assert_eq!(call.evaluate(90.0), 0.0);
        assert_eq!(call.evaluate(110.0), 10.0);
        let lin = Payoff::Linear {
            underlying: Driver::Underlying,
            strike: 100.0,
        };
        assert_eq!(lin.evaluate(90.0), -10.0);
    }
}
