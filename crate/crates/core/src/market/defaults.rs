//! Default-time sampling by inverse integrated intensity with a Gaussian
//! copula between the two exponential thresholds.

use rand::Rng;
use statrs::function::erf::erfc;

use super::rng::normal;
use super::ScenarioSet;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Redraw cap for exact default-time ties.
const MAX_TIE_REDRAWS: u32 = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Party {
    Investor,
    Counterparty,
}

impl Party {
    pub fn name(self) -> &'static str {
        match self {
            Party::Investor => "investor",
            Party::Counterparty => "counterparty",
        }
    }
}

/// Default times of one path; `S::infinity()` when no default by maturity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DefaultSample<S> {
    pub investor: S,
    pub counterparty: S,
    /// Number of redraws forced by exact ties.
    pub redraws: u32,
}

/// Samples `(tau_I, tau_C)` on one path.
///
/// Intensities are given on the grid `times` and floored at zero; the
/// integrated intensity is accumulated by the trapezoid rule and the crossing
/// time is interpolated linearly inside the bracketing interval.
pub fn sample_default_times<S: Scalar, R: Rng>(
    times: &[S],
    lambda_investor: &[S],
    lambda_counterparty: &[S],
    rho: S,
    rng: &mut R,
) -> Result<DefaultSample<S>> {
    if !(rho >= -S::one() && rho <= S::one()) {
        return Err(Error::config(format!("default correlation {rho} outside [-1, 1]")));
    }
    let cum_i = cumulative_intensity(times, lambda_investor);
    let cum_c = cumulative_intensity(times, lambda_counterparty);
    let rho_c = (S::one() - rho * rho).max(S::zero()).sqrt();
    let mut redraws = 0;
    loop {
        let z1: S = normal(rng);
        let z2: S = normal(rng);
        let zi = z1;
        let zc = rho * z1 + rho_c * z2;
        let ti = crossing(times, &cum_i, exponential_threshold(zi));
        let tc = crossing(times, &cum_c, exponential_threshold(zc));
        if ti.is_finite() && ti == tc {
            redraws += 1;
            if redraws > MAX_TIE_REDRAWS {
                return Err(Error::NumericDomain(format!(
                    "simultaneous defaults persisted after {MAX_TIE_REDRAWS} redraws \
                     (identical intensities with unit copula correlation?)"
                )));
            }
            continue;
        }
        return Ok(DefaultSample {
            investor: ti,
            counterparty: tc,
            redraws,
        });
    }
}

/// `-ln(1 - Phi(z))`, computed through `erfc` to stay accurate in the upper tail.
fn exponential_threshold<S: Scalar>(z: S) -> S {
    let tail = 0.5 * erfc(z.to_f64_lossy() / std::f64::consts::SQRT_2);
    S::lit(-tail.ln())
}

pub(crate) fn cumulative_intensity<S: Scalar>(times: &[S], lambda: &[S]) -> Vec<S> {
    let half = S::lit(0.5);
    let mut out = Vec::with_capacity(times.len());
    let mut acc = S::zero();
    out.push(acc);
    for i in 1..times.len() {
        let l0 = lambda[i - 1].pos();
        let l1 = lambda[i].pos();
        acc += half * (l0 + l1) * (times[i] - times[i - 1]);
        out.push(acc);
    }
    out
}

fn crossing<S: Scalar>(times: &[S], cum: &[S], threshold: S) -> S {
    let last = cum.len() - 1;
    if !(cum[last] >= threshold) {
        return S::infinity();
    }
    let i = cum.partition_point(|c| *c < threshold);
    if i == 0 {
        return times[0];
    }
    let (c0, c1) = (cum[i - 1], cum[i]);
    let w = (threshold - c0) / (c1 - c0);
    times[i - 1] + w * (times[i] - times[i - 1])
}

/// Empirical first-to-default hazard rates per master-grid interval:
/// `(lambda^{C<I}, lambda^{I<C})`, each `-ln(1 - q) / dt` where `q` is the
/// fraction of paths alive at the interval start whose first default inside
/// the interval is the named party's.
pub fn first_to_default_intensity<S: Scalar>(scenario: &ScenarioSet<S>) -> (Vec<S>, Vec<S>) {
    let grid = scenario.grid();
    let n = grid.len() - 1;
    let mut lc = vec![S::zero(); n];
    let mut li = vec![S::zero(); n];
    for i in 0..n {
        let (t0, t1) = (grid.time(i), grid.time(i + 1));
        let mut alive = 0usize;
        let mut by_c = 0usize;
        let mut by_i = 0usize;
        for p in 0..scenario.n_paths() {
            let tau = scenario.first_default(p);
            if tau > t0 {
                alive += 1;
                if tau <= t1 {
                    match scenario.defaulter(p) {
                        Some(Party::Counterparty) => by_c += 1,
                        Some(Party::Investor) => by_i += 1,
                        None => {}
                    }
                }
            }
        }
        if alive > 0 {
            let dt = t1 - t0;
            let total = S::from_usize(alive).unwrap();
            let h = |k: usize| -(S::one() - S::from_usize(k).unwrap() / total).ln() / dt;
            lc[i] = h(by_c);
            li[i] = h(by_i);
        }
    }
    (lc, li)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::rng::substream;

    #[test]
    fn zero_intensity_never_defaults() {
        let times = [0.0f64, 0.5, 1.0];
        let zero = [0.0; 3];
        let lam = [0.1; 3];
        let mut rng = substream(1, 0, 31);
        for _ in 0..100 {
            let s = sample_default_times(&times, &lam, &zero, 0.3, &mut rng).unwrap();
            assert!(s.counterparty.is_infinite());
        }
    }

    #[test]
    fn crossing_is_exact_for_flat_intensity() {
        let times = [0.0f64, 1.0, 2.0];
        let cum = cumulative_intensity(&times, &[0.5, 0.5, 0.5]);
        assert!((crossing(&times, &cum, 0.3) - 0.6).abs() < 1e-15);
        assert!(crossing(&times, &cum, 1.5).is_infinite());
    }

    #[test]
    fn negative_intensity_is_floored() {
        let times = [0.0, 1.0];
        let cum = cumulative_intensity(&times, &[-1.0, -1.0]);
        assert_eq!(cum[1], 0.0);
    }

    #[test]
    fn correlation_outside_range_is_rejected() {
        let mut rng = substream(1, 0, 31);
        let r = sample_default_times(&[0.0, 1.0], &[0.1, 0.1], &[0.1, 0.1], 1.1, &mut rng);
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn perfectly_correlated_identical_names_report_ties() {
        let mut rng = substream(1, 0, 31);
        let lam = [5.0, 5.0];
        let r = (0..50).find_map(|_| sample_default_times(&[0.0, 1.0], &lam, &lam, 1.0, &mut rng).err());
        assert!(matches!(r, Some(Error::NumericDomain(_))));
    }
}
