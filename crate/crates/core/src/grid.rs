//! Master simulation grid with margining and funding sub-grids.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Strictly increasing year fractions starting at the valuation date.
///
/// The margining and funding grids are stored as indices into the master
/// grid. The funding grid always spans the whole deal, from index 0 to the
/// maturity index, because the backward solver walks it end to end.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulationGrid<S> {
    times: Vec<S>,
    margining: Vec<usize>,
    funding: Vec<usize>,
}

impl<S: Scalar> SimulationGrid<S> {
    pub fn new(times: Vec<S>, margining: Vec<usize>, funding: Vec<usize>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::config("grid needs at least two times"));
        }
        if times[0] != S::zero() {
            return Err(Error::config("grid must start at t=0"));
        }
        for w in times.windows(2) {
            if !(w[1] > w[0]) || !w[1].is_finite() {
                return Err(Error::config(format!(
                    "grid times must be strictly increasing and finite ({} then {})",
                    w[0], w[1]
                )));
            }
        }
        let last = times.len() - 1;
        check_subset("margining", &margining, last)?;
        check_subset("funding", &funding, last)?;
        if funding[0] != 0 || *funding.last().unwrap() != last {
            return Err(Error::config(
                "funding grid must start at the valuation date and end at maturity",
            ));
        }
        Ok(Self {
            times,
            margining,
            funding,
        })
    }

    /// Uniform grid with `steps` intervals; margining and funding every
    /// `margin_every` / `funding_every` master steps (maturity always included).
    pub fn uniform(maturity: S, steps: usize, margin_every: usize, funding_every: usize) -> Result<Self> {
        if steps == 0 || margin_every == 0 || funding_every == 0 {
            return Err(Error::config("grid steps and sub-grid strides must be positive"));
        }
        if !(maturity > S::zero()) {
            return Err(Error::config("maturity must be positive"));
        }
        let n = S::from_usize(steps).unwrap();
        let times = (0..=steps)
            .map(|i| {
                if i == steps {
                    maturity
                } else {
                    maturity * S::from_usize(i).unwrap() / n
                }
            })
            .collect();
        Self::new(times, strided(steps, margin_every), strided(steps, funding_every))
    }

    /// Uniform grid whose margining and funding dates are every master date.
    pub fn dense(maturity: S, steps: usize) -> Result<Self> {
        Self::uniform(maturity, steps, 1, 1)
    }

    pub fn times(&self) -> &[S] {
        &self.times
    }

    pub fn time(&self, i: usize) -> S {
        self.times[i]
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_index(&self) -> usize {
        self.times.len() - 1
    }

    pub fn maturity(&self) -> S {
        *self.times.last().unwrap()
    }

    pub fn margining(&self) -> &[usize] {
        &self.margining
    }

    pub fn funding(&self) -> &[usize] {
        &self.funding
    }

    pub fn dt(&self, i: usize) -> S {
        self.times[i + 1] - self.times[i]
    }

    /// Index of a time that lies on the grid (relative tolerance 1e-12).
    pub fn index_of(&self, t: S) -> Result<usize> {
        let tol = S::lit(1e-12) * (S::one() + self.maturity());
        match self
            .times
            .binary_search_by(|x| x.partial_cmp(&t).unwrap_or(std::cmp::Ordering::Less))
        {
            Ok(i) => Ok(i),
            Err(i) => {
                for j in [i.wrapping_sub(1), i] {
                    if j < self.times.len() && (self.times[j] - t).abs() <= tol {
                        return Ok(j);
                    }
                }
                Err(Error::usage(format!("time {t} is not on the simulation grid")))
            }
        }
    }

    /// Largest master index `i` with `t_i <= t` (clamped to the grid).
    pub fn left_index(&self, t: S) -> usize {
        if t <= self.times[0] {
            return 0;
        }
        let last = self.last_index();
        if t >= self.times[last] {
            return last;
        }
        self.times.partition_point(|x| *x <= t) - 1
    }
}

fn strided(steps: usize, every: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (0..=steps).step_by(every).collect();
    if *v.last().unwrap() != steps {
        v.push(steps);
    }
    v
}

fn check_subset(name: &str, idx: &[usize], last: usize) -> Result<()> {
    if idx.is_empty() {
        return Err(Error::config(format!("{name} grid is empty")));
    }
    for w in idx.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::config(format!("{name} grid indices must be increasing")));
        }
    }
    if *idx.last().unwrap() > last {
        return Err(Error::config(format!("{name} grid index beyond maturity")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_grid_ends_at_maturity() {
        let g = SimulationGrid::<f64>::uniform(2.0, 8, 3, 2).unwrap();
        assert_eq!(g.len(), 9);
        assert_eq!(g.maturity(), 2.0);
        assert_eq!(g.margining(), &[0, 3, 6, 8]);
        assert_eq!(g.funding(), &[0, 2, 4, 6, 8]);
    }

    #[test]
    fn rejects_non_increasing_times() {
        let err = SimulationGrid::<f64>::new(vec![0.0, 0.5, 0.5, 1.0], vec![0], vec![0, 3]);
        assert!(matches!(err, Err(Error::Config(_))));
        let err = SimulationGrid::<f64>::new(vec![0.1, 0.5], vec![0], vec![0, 1]);
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn funding_grid_must_span_the_deal() {
        let err = SimulationGrid::<f64>::new(vec![0.0, 0.5, 1.0], vec![0], vec![0, 1]);
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn index_lookup() {
        let g = SimulationGrid::<f64>::dense(1.0, 4).unwrap();
        assert_eq!(g.index_of(0.75).unwrap(), 3);
        assert!(matches!(g.index_of(0.3), Err(Error::Usage(_))));
        assert_eq!(g.left_index(0.3), 1);
        assert_eq!(g.left_index(0.25), 1);
        assert_eq!(g.left_index(5.0), 4);
    }
}
