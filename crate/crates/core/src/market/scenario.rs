use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;

use super::defaults::{cumulative_intensity, sample_default_times, Party};
use super::rng::{normal, substream, DEFAULT_SLOT};
use super::{simple_zcb, Drift, Driver, DriverConfig, ProcessSpec, RateSource};
use crate::error::{Error, Result};
use crate::grid::SimulationGrid;
use crate::scalar::Scalar;

/// Paths simulated per parallel block; bounds transient memory.
const BLOCK: usize = 2048;

/// Grid values of one driver: stored once when deterministic, otherwise one
/// row of `n_times` values per path (row-major).
#[derive(Clone, Debug, PartialEq)]
pub enum DriverPaths<S> {
    Shared(Vec<S>),
    PerPath { n_times: usize, data: Vec<S> },
}

impl<S: Scalar> DriverPaths<S> {
    #[inline]
    pub fn row(&self, path: usize) -> &[S] {
        match self {
            DriverPaths::Shared(v) => v,
            DriverPaths::PerPath { n_times, data } => &data[path * n_times..(path + 1) * n_times],
        }
    }

    #[inline]
    pub fn value(&self, path: usize, i: usize) -> S {
        self.row(path)[i]
    }

    pub fn is_shared(&self) -> bool {
        matches!(self, DriverPaths::Shared(_))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SimulationDiagnostics {
    /// Grid values of stochastic intensities that were negative and floored.
    pub floored_intensities: u64,
    /// Default-time redraws caused by exact ties.
    pub default_tie_redraws: u64,
}

/// Exact-step transition `x_{s+1} = a_s + b_s x_s + sd_s Z` of a rate driver,
/// with the affine bond coefficients implied by trapezoid discounting.
#[derive(Clone, Debug)]
struct AffineRate<S> {
    a: Vec<S>,
    b: Vec<S>,
    sd: Vec<S>,
    dt: Vec<S>,
    cache: HashMap<(usize, usize), (S, S)>,
}

impl<S: Scalar> AffineRate<S> {
    fn new(spec: &ProcessSpec<S>, grid: &SimulationGrid<S>) -> Self {
        let n = grid.len() - 1;
        let dt: Vec<S> = (0..n).map(|i| grid.dt(i)).collect();
        let (mut a, mut b, mut sd) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        for (s, &h) in dt.iter().enumerate() {
            match spec {
                ProcessSpec::Deterministic(c) => {
                    a.push(c.value(grid.time(s + 1)));
                    b.push(S::zero());
                    sd.push(S::zero());
                }
                ProcessSpec::Vasicek(p) => {
                    let k = p.mean_reversion;
                    if k > S::zero() {
                        let e = (-k * h).exp();
                        a.push(p.long_run * (S::one() - e));
                        b.push(e);
                        sd.push(p.volatility * ((S::one() - e * e) / (k + k)).sqrt());
                    } else {
                        a.push(S::zero());
                        b.push(S::one());
                        sd.push(p.volatility * h.sqrt());
                    }
                }
                ProcessSpec::GeometricBrownian(_) => unreachable!("rate drivers are never GBM"),
            }
        }
        let mut rate = Self {
            a,
            b,
            sd,
            dt,
            cache: HashMap::new(),
        };
        let mut pairs: Vec<(usize, usize)> = (0..n).map(|i| (i, i + 1)).collect();
        for sub in [grid.margining(), grid.funding()] {
            pairs.extend(sub.windows(2).map(|w| (w[0], w[1])));
            if let Some(&l) = sub.last() {
                if l < n {
                    pairs.push((l, n));
                }
            }
        }
        for (x, y) in pairs {
            let c = rate.coefficients(x, y);
            rate.cache.insert((x, y), c);
        }
        rate
    }

    /// `(K, B)` with `P_{t_x}(t_y) = exp(-K - B r_x)`.
    fn coefficients(&self, x: usize, y: usize) -> (S, S) {
        if x >= y {
            return (S::zero(), S::zero());
        }
        let half = S::lit(0.5);
        let mut c = half * self.dt[y - 1];
        let mut konst = S::zero();
        let mut var = S::zero();
        for s in (x..y).rev() {
            konst += c * self.a[s];
            var += c * c * self.sd[s] * self.sd[s];
            let w = if s == x {
                half * self.dt[s]
            } else {
                half * (self.dt[s - 1] + self.dt[s])
            };
            c = w + c * self.b[s];
        }
        (konst - half * var, c)
    }

    #[inline]
    fn bond(&self, x: usize, y: usize, r_x: S) -> S {
        let (k, b) = match self.cache.get(&(x, y)) {
            Some(c) => *c,
            None => self.coefficients(x, y),
        };
        (-k - b * r_x).exp()
    }

    #[inline]
    fn step(&self, s: usize, x: S, z: S) -> S {
        self.a[s] + self.b[s] * x + self.sd[s] * z
    }
}

/// Simulated drivers and default times on a shared grid. Immutable once built.
#[derive(Clone, Debug)]
pub struct ScenarioSet<S: Scalar> {
    grid: SimulationGrid<S>,
    config: DriverConfig<S>,
    n_paths: usize,
    seed: u64,
    drivers: BTreeMap<Driver, DriverPaths<S>>,
    cum_short: DriverPaths<S>,
    short: AffineRate<S>,
    foreign: Option<AffineRate<S>>,
    tau_investor: Vec<S>,
    tau_counterparty: Vec<S>,
    diagnostics: SimulationDiagnostics,
}

struct PathOut<S> {
    rows: Vec<Vec<S>>,
    cum_short: Option<Vec<S>>,
    tau: (S, S),
    floored: u64,
    redraws: u32,
}

/// Simulates every declared driver on `grid` for `n_paths` paths.
pub fn simulate_scenarios<S: Scalar>(
    config: &DriverConfig<S>,
    grid: &SimulationGrid<S>,
    n_paths: usize,
    seed: u64,
) -> Result<ScenarioSet<S>> {
    if n_paths == 0 {
        return Err(Error::config("n_paths must be at least 1"));
    }
    config.validate()?;
    let short_spec = config
        .spec(Driver::ShortRate)
        .ok_or_else(|| Error::config("the short_rate driver must be declared"))?;
    for (d, spec) in &config.processes {
        if let ProcessSpec::GeometricBrownian(p) = spec {
            if p.drift == Drift::Foreign && config.spec(Driver::ForeignRate).is_none() {
                return Err(Error::config(format!(
                    "foreign drift of `{d}` needs a declared foreign_rate driver"
                )));
            }
        }
    }
    let n_t = grid.len();
    let stochastic = config.stochastic_drivers();
    let factor = config.correlation_factor()?;
    let short = AffineRate::new(short_spec, grid);
    let foreign = config.spec(Driver::ForeignRate).map(|s| AffineRate::new(s, grid));
    let transitions: BTreeMap<Driver, AffineRate<S>> = config
        .processes
        .iter()
        .filter(|(_, s)| matches!(s, ProcessSpec::Vasicek(_)))
        .map(|(d, s)| (*d, AffineRate::new(s, grid)))
        .collect();

    let mut shared: BTreeMap<Driver, Vec<S>> = BTreeMap::new();
    for (d, spec) in &config.processes {
        if let ProcessSpec::Deterministic(c) = spec {
            shared.insert(*d, grid.times().iter().map(|t| c.value(*t)).collect());
        }
    }
    let shared_cum = if short_spec.is_stochastic() {
        None
    } else {
        Some(cumulative_trapezoid(grid.times(), &shared[&Driver::ShortRate]))
    };

    let ctx = PathContext {
        config,
        grid,
        seed,
        stochastic: &stochastic,
        factor: &factor,
        shared: &shared,
        transitions: &transitions,
    };

    let mut buffers: Vec<Vec<S>> = stochastic.iter().map(|_| Vec::with_capacity(n_paths * n_t)).collect();
    let mut cum_buf: Vec<S> = if shared_cum.is_none() {
        Vec::with_capacity(n_paths * n_t)
    } else {
        Vec::new()
    };
    let mut tau_investor = Vec::with_capacity(n_paths);
    let mut tau_counterparty = Vec::with_capacity(n_paths);
    let mut diagnostics = SimulationDiagnostics::default();

    let mut start = 0;
    while start < n_paths {
        let end = (start + BLOCK).min(n_paths);
        let outs: Vec<Result<PathOut<S>>> = (start..end).into_par_iter().map(|p| ctx.simulate_path(p)).collect();
        for out in outs {
            let out = out?;
            for (buf, row) in buffers.iter_mut().zip(out.rows) {
                buf.extend_from_slice(&row);
            }
            if let Some(c) = out.cum_short {
                cum_buf.extend_from_slice(&c);
            }
            tau_investor.push(out.tau.0);
            tau_counterparty.push(out.tau.1);
            diagnostics.floored_intensities += out.floored;
            diagnostics.default_tie_redraws += u64::from(out.redraws);
        }
        start = end;
    }

    let mut drivers: BTreeMap<Driver, DriverPaths<S>> =
        shared.into_iter().map(|(d, v)| (d, DriverPaths::Shared(v))).collect();
    for (d, data) in stochastic.iter().zip(buffers) {
        drivers.insert(*d, DriverPaths::PerPath { n_times: n_t, data });
    }
    let cum_short = match shared_cum {
        Some(c) => DriverPaths::Shared(c),
        None => DriverPaths::PerPath {
            n_times: n_t,
            data: cum_buf,
        },
    };

    Ok(ScenarioSet {
        grid: grid.clone(),
        config: config.clone(),
        n_paths,
        seed,
        drivers,
        cum_short,
        short,
        foreign,
        tau_investor,
        tau_counterparty,
        diagnostics,
    })
}

fn cumulative_trapezoid<S: Scalar>(times: &[S], x: &[S]) -> Vec<S> {
    let half = S::lit(0.5);
    let mut out = Vec::with_capacity(times.len());
    let mut acc = S::zero();
    out.push(acc);
    for i in 1..times.len() {
        acc += half * (x[i - 1] + x[i]) * (times[i] - times[i - 1]);
        out.push(acc);
    }
    out
}

struct PathContext<'a, S: Scalar> {
    config: &'a DriverConfig<S>,
    grid: &'a SimulationGrid<S>,
    seed: u64,
    stochastic: &'a [Driver],
    factor: &'a [Vec<S>],
    shared: &'a BTreeMap<Driver, Vec<S>>,
    transitions: &'a BTreeMap<Driver, AffineRate<S>>,
}

impl<S: Scalar> PathContext<'_, S> {
    fn simulate_path(&self, p: usize) -> Result<PathOut<S>> {
        let n_t = self.grid.len();
        let n_s = n_t - 1;
        let k = self.stochastic.len();

        let raw: Vec<Vec<S>> = self
            .stochastic
            .iter()
            .map(|d| {
                let mut rng = substream(self.seed, p, d.slot());
                (0..n_s).map(|_| normal(&mut rng)).collect()
            })
            .collect();
        let z: Vec<Vec<S>> = (0..k)
            .map(|i| {
                (0..n_s)
                    .map(|s| (0..=i).fold(S::zero(), |acc, j| acc + self.factor[i][j] * raw[j][s]))
                    .collect()
            })
            .collect();

        let mut rows: Vec<Option<Vec<S>>> = vec![None; k];
        // rate-like drivers first, assets afterwards (their drift may read rates)
        for pass_assets in [false, true] {
            for (i, d) in self.stochastic.iter().enumerate() {
                if d.is_asset() != pass_assets {
                    continue;
                }
                let row = match &self.config.processes[d] {
                    ProcessSpec::Vasicek(v) => {
                        let rate = &self.transitions[d];
                        let mut x = Vec::with_capacity(n_t);
                        x.push(v.initial);
                        for s in 0..n_s {
                            let next = rate.step(s, x[s], z[i][s]);
                            x.push(next);
                        }
                        x
                    }
                    ProcessSpec::GeometricBrownian(g) => {
                        let drift = self.drift_integrals(&g.drift, g.dividend_yield, &rows)?;
                        let half = S::lit(0.5);
                        let mut x = Vec::with_capacity(n_t);
                        x.push(g.initial);
                        for s in 0..n_s {
                            let h = self.grid.dt(s);
                            let var = g.volatility * g.volatility * h;
                            let next = x[s] * (drift[s] - half * var + g.volatility * h.sqrt() * z[i][s]).exp();
                            x.push(next);
                        }
                        x
                    }
                    ProcessSpec::Deterministic(_) => unreachable!(),
                };
                rows[i] = Some(row);
            }
        }
        let rows: Vec<Vec<S>> = rows.into_iter().map(|r| r.unwrap()).collect();
        let lookup = |d: Driver| -> Option<&[S]> {
            if let Some(i) = self.stochastic.iter().position(|x| *x == d) {
                Some(&rows[i])
            } else {
                self.shared.get(&d).map(|v| v.as_slice())
            }
        };

        let cum_short = if self.config.processes[&Driver::ShortRate].is_stochastic() {
            Some(cumulative_trapezoid(
                self.grid.times(),
                lookup(Driver::ShortRate).unwrap(),
            ))
        } else {
            None
        };

        let mut floored = 0u64;
        for d in [Driver::IntensityInvestor, Driver::IntensityCounterparty] {
            if self.stochastic.contains(&d) {
                floored += lookup(d).unwrap().iter().filter(|x| **x < S::zero()).count() as u64;
            }
        }
        let li = lookup(Driver::IntensityInvestor);
        let lc = lookup(Driver::IntensityCounterparty);
        let (tau, redraws) = if li.is_none() && lc.is_none() {
            ((S::infinity(), S::infinity()), 0)
        } else {
            let zero = vec![S::zero(); n_t];
            let mut rng = substream(self.seed, p, DEFAULT_SLOT);
            let s = sample_default_times(
                self.grid.times(),
                li.unwrap_or(&zero),
                lc.unwrap_or(&zero),
                self.config.default_correlation,
                &mut rng,
            )?;
            ((s.investor, s.counterparty), s.redraws)
        };

        Ok(PathOut {
            rows,
            cum_short,
            tau,
            floored,
            redraws,
        })
    }

    /// Per-step integrated growth rate of an asset (trapezoid), dividend
    /// yield included where the drift mode calls for it.
    fn drift_integrals(&self, drift: &Drift<S>, q: S, rows: &[Option<Vec<S>>]) -> Result<Vec<S>> {
        let row_of = |d: Driver| -> Result<Vec<S>> {
            if let Some(i) = self.stochastic.iter().position(|x| *x == d) {
                return rows[i]
                    .clone()
                    .ok_or_else(|| Error::config(format!("driver `{d}` not yet simulated")));
            }
            self.shared
                .get(&d)
                .cloned()
                .ok_or_else(|| Error::config(format!("driver `{d}` is not declared")))
        };
        let source_row = |src: &RateSource<S>| -> Result<Vec<S>> {
            match src {
                RateSource::RiskFree { spread } => {
                    Ok(row_of(Driver::ShortRate)?.iter().map(|r| *r + *spread).collect())
                }
                RateSource::Driver(d) => row_of(*d),
            }
        };
        let (rate, minus, yield_q) = match drift {
            Drift::RiskFree => (row_of(Driver::ShortRate)?, None, q),
            Drift::Funding(src) => (source_row(src)?, None, q),
            Drift::Hedging(src) => (source_row(src)?, None, S::zero()),
            Drift::Foreign => (
                row_of(Driver::ShortRate)?,
                Some(row_of(Driver::ForeignRate)?),
                S::zero(),
            ),
        };
        let half = S::lit(0.5);
        let n_s = self.grid.len() - 1;
        Ok((0..n_s)
            .map(|s| {
                let h = self.grid.dt(s);
                let mut g = half * (rate[s] + rate[s + 1]) * h - yield_q * h;
                if let Some(m) = &minus {
                    g -= half * (m[s] + m[s + 1]) * h;
                }
                g
            })
            .collect())
    }
}

impl<S: Scalar> ScenarioSet<S> {
    pub fn grid(&self) -> &SimulationGrid<S> {
        &self.grid
    }

    pub fn config(&self) -> &DriverConfig<S> {
        &self.config
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn diagnostics(&self) -> &SimulationDiagnostics {
        &self.diagnostics
    }

    pub fn drivers(&self) -> impl Iterator<Item = (&Driver, &DriverPaths<S>)> {
        self.drivers.iter()
    }

    pub fn has(&self, d: Driver) -> bool {
        self.drivers.contains_key(&d)
    }

    pub fn paths(&self, d: Driver) -> Result<&DriverPaths<S>> {
        self.drivers
            .get(&d)
            .ok_or_else(|| Error::config(format!("driver `{d}` is not declared")))
    }

    pub fn row(&self, d: Driver, path: usize) -> Result<&[S]> {
        Ok(self.paths(d)?.row(path))
    }

    pub fn short_rate(&self, path: usize) -> &[S] {
        self.drivers[&Driver::ShortRate].row(path)
    }

    /// `D(t_a, t_b)` between master-grid indices.
    #[inline]
    pub fn discount(&self, path: usize, a: usize, b: usize) -> S {
        let c = self.cum_short.row(path);
        (c[a] - c[b]).exp()
    }

    /// `D(t, T)` for times on the master grid.
    pub fn discount_factor(&self, path: usize, t: S, maturity: S) -> Result<S> {
        let a = self.grid.index_of(t)?;
        let b = self.grid.index_of(maturity)?;
        if b < a {
            return Err(Error::usage(format!(
                "discount factor needs t <= T (got {t} > {maturity})"
            )));
        }
        Ok(self.discount(path, a, b))
    }

    /// `D(t_a, tau)` for an off-grid `tau >= t_a`: grid discounting to the
    /// last grid date before `tau`, then the prevailing short rate over the stub.
    pub fn discount_to(&self, path: usize, a: usize, tau: S) -> S {
        let i = self.grid.left_index(tau).max(a);
        let stub = tau - self.grid.time(i);
        self.discount(path, a, i) * (-self.short_rate(path)[i] * stub).exp()
    }

    /// Risk-free zero-coupon bond `P_{t_a}(t_b)` under the simulated model.
    #[inline]
    pub fn bond(&self, path: usize, a: usize, b: usize) -> S {
        self.short.bond(a, b, self.short_rate(path)[a])
    }

    /// `P_tau(t_b)` for `t_i <= tau <= t_b`, `t_i` the last grid date before `tau`.
    pub fn bond_at(&self, path: usize, tau: S, b: usize) -> S {
        let i = self.grid.left_index(tau).min(b);
        self.bond(path, i, b) / self.discount_to(path, i, tau)
    }

    /// Foreign risk-free bond `P^e_{t_a}(t_b)`.
    pub fn foreign_bond(&self, path: usize, a: usize, b: usize) -> Result<S> {
        let f = self
            .foreign
            .as_ref()
            .ok_or_else(|| Error::config("foreign collateral needs a declared foreign_rate driver"))?;
        Ok(f.bond(a, b, self.drivers[&Driver::ForeignRate].value(path, a)))
    }

    /// Value of a rate source at master index `i`.
    #[inline]
    pub fn rate_source_value(&self, src: &RateSource<S>, path: usize, i: usize) -> Result<S> {
        match src {
            RateSource::RiskFree { spread } => Ok(self.short_rate(path)[i] + *spread),
            RateSource::Driver(d) => Ok(self.paths(*d)?.value(path, i)),
        }
    }

    /// Simple period bond `P^x_{t_a}(t_b)` of a rate source. A risk-free
    /// source with spread `s` gives `1 / (1 / P + (t_b - t_a) s)`, which is the
    /// risk-free bond itself when `s = 0`.
    pub fn simple_bond(&self, src: &RateSource<S>, path: usize, a: usize, b: usize) -> Result<S> {
        let (ta, tb) = (self.grid.time(a), self.grid.time(b));
        match src {
            RateSource::RiskFree { spread } => {
                let p = self.bond(path, a, b);
                if *spread == S::zero() {
                    return Ok(p);
                }
                let denom = S::one() / p + (tb - ta) * *spread;
                if !(denom > S::zero()) {
                    return Err(Error::NumericDomain(format!(
                        "risk-free plus spread {spread} bond over [{ta}, {tb}] has non-positive denominator"
                    )));
                }
                Ok(S::one() / denom)
            }
            RateSource::Driver(d) => simple_zcb(self.paths(*d)?.value(path, a), ta, tb).map_err(|e| match e {
                Error::NumericDomain(m) => Error::NumericDomain(format!("rate `{d}` on path {path}: {m}")),
                other => other,
            }),
        }
    }

    /// `D(t_a, t_b; x) = exp(-int x)` for a rate source (trapezoid).
    pub fn funding_discount_factor(&self, src: &RateSource<S>, path: usize, a: usize, b: usize) -> Result<S> {
        let half = S::lit(0.5);
        let mut acc = S::zero();
        for i in a..b {
            let x0 = self.rate_source_value(src, path, i)?;
            let x1 = self.rate_source_value(src, path, i + 1)?;
            acc += half * (x0 + x1) * self.grid.dt(i);
        }
        Ok((-acc).exp())
    }

    /// Survival `exp(-int lambda)` of a party over `[t_a, t_b]` with the floored
    /// intensity path; 1 when the party's intensity is not declared.
    pub fn survival(&self, party: Party, path: usize, a: usize, b: usize) -> S {
        let d = match party {
            Party::Investor => Driver::IntensityInvestor,
            Party::Counterparty => Driver::IntensityCounterparty,
        };
        match self.drivers.get(&d) {
            None => S::one(),
            Some(paths) => {
                let row = paths.row(path);
                let cum = cumulative_intensity(&self.grid.times()[a..=b], &row[a..=b]);
                (-*cum.last().unwrap()).exp()
            }
        }
    }

    pub fn tau_investor(&self, path: usize) -> S {
        self.tau_investor[path]
    }

    pub fn tau_counterparty(&self, path: usize) -> S {
        self.tau_counterparty[path]
    }

    /// `tau = min(tau_I, tau_C)`.
    #[inline]
    pub fn first_default(&self, path: usize) -> S {
        self.tau_investor[path].min(self.tau_counterparty[path])
    }

    pub fn defaulter(&self, path: usize) -> Option<Party> {
        let (ti, tc) = (self.tau_investor[path], self.tau_counterparty[path]);
        if !ti.is_finite() && !tc.is_finite() {
            None
        } else if ti < tc {
            Some(Party::Investor)
        } else {
            Some(Party::Counterparty)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{Curve, GbmParams, VasicekParams};
    use approx::assert_relative_eq;

    fn vasicek(k: f64, theta: f64, sigma: f64, x0: f64) -> ProcessSpec<f64> {
        ProcessSpec::Vasicek(VasicekParams {
            mean_reversion: k,
            long_run: theta,
            volatility: sigma,
            initial: x0,
        })
    }

    #[test]
    fn deterministic_drivers_copy_the_curves() {
        let grid = SimulationGrid::<f64>::dense(1.0, 4).unwrap();
        let cfg = DriverConfig::default()
            .with(Driver::ShortRate, ProcessSpec::flat(0.03))
            .with(
                Driver::FundingPlus,
                ProcessSpec::Deterministic(Curve::linear(vec![0.0, 1.0], vec![0.01, 0.05]).unwrap()),
            );
        let s = simulate_scenarios(&cfg, &grid, 3, 11).unwrap();
        for p in 0..3 {
            assert_eq!(s.row(Driver::FundingPlus, p).unwrap(), &[0.01, 0.02, 0.03, 0.04, 0.05]);
            assert!(s.first_default(p).is_infinite());
        }
        assert!(s.paths(Driver::ShortRate).unwrap().is_shared());
    }

    #[test]
    fn zero_vol_vasicek_follows_its_mean() {
        let grid = SimulationGrid::dense(2.0, 8).unwrap();
        let cfg = DriverConfig::default().with(Driver::ShortRate, vasicek(1.0, 0.05, 0.0, 0.01));
        let s = simulate_scenarios(&cfg, &grid, 2, 5).unwrap();
        for (i, t) in grid.times().iter().enumerate() {
            let expect = 0.05 + (0.01 - 0.05) * (-t).exp();
            assert_relative_eq!(s.short_rate(1)[i], expect, epsilon = 1e-14);
        }
    }

    #[test]
    fn flat_rate_discount() {
        let grid = SimulationGrid::dense(2.0, 8).unwrap();
        let cfg = DriverConfig::default().with(Driver::ShortRate, ProcessSpec::flat(0.03));
        let s = simulate_scenarios(&cfg, &grid, 1, 0).unwrap();
        assert_relative_eq!(
            s.discount_factor(0, 0.0, 2.0).unwrap(),
            0.941_764_533_584_248_7,
            epsilon = 1e-12
        );
        assert_eq!(s.discount_factor(0, 0.5, 0.5).unwrap(), 1.0);
        assert!(matches!(s.discount_factor(0, 0.3, 1.0), Err(Error::Usage(_))));
        assert_relative_eq!(s.bond(0, 0, 8), s.discount(0, 0, 8), epsilon = 1e-15);
        let zero = DriverConfig::<f64>::default();
        let z = simulate_scenarios(&zero, &grid, 1, 0).unwrap();
        assert_eq!(z.discount_factor(0, 0.0, 2.0).unwrap(), 1.0);
    }

    #[test]
    fn vasicek_bond_matches_monte_carlo_discount() {
        let grid = SimulationGrid::dense(1.0, 10).unwrap();
        let cfg = DriverConfig::default().with(Driver::ShortRate, vasicek(0.5, 0.04, 0.02, 0.02));
        let n = 20_000;
        let s = simulate_scenarios(&cfg, &grid, n, 3).unwrap();
        let d: Vec<f64> = (0..n).map(|p| s.discount(p, 0, 10)).collect();
        let mean = d.iter().sum::<f64>() / n as f64;
        let sd = (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!((mean - s.bond(0, 0, 10)).abs() < 3.0 * sd / (n as f64).sqrt());
    }

    #[test]
    fn same_seed_same_paths() {
        let grid = SimulationGrid::dense(1.0, 6).unwrap();
        let cfg = DriverConfig::default()
            .with(Driver::ShortRate, vasicek(0.5, 0.04, 0.02, 0.02))
            .with(Driver::IntensityCounterparty, ProcessSpec::flat(0.3))
            .with(
                Driver::Underlying,
                ProcessSpec::GeometricBrownian(GbmParams {
                    initial: 100.0,
                    volatility: 0.2,
                    drift: Drift::RiskFree,
                    dividend_yield: 0.0,
                }),
            )
            .with_correlation(Driver::ShortRate, Driver::Underlying, 0.4);
        let a = simulate_scenarios(&cfg, &grid, 50, 9).unwrap();
        let b = simulate_scenarios(&cfg, &grid, 50, 9).unwrap();
        for p in 0..50 {
            assert_eq!(
                a.row(Driver::Underlying, p).unwrap(),
                b.row(Driver::Underlying, p).unwrap()
            );
            assert_eq!(a.short_rate(p), b.short_rate(p));
            assert_eq!(a.tau_counterparty(p).to_bits(), b.tau_counterparty(p).to_bits());
        }
        // adding paths leaves existing ones untouched
        let c = simulate_scenarios(&cfg, &grid, 80, 9).unwrap();
        assert_eq!(
            a.row(Driver::Underlying, 49).unwrap(),
            c.row(Driver::Underlying, 49).unwrap()
        );
    }

    #[test]
    fn simple_bond_with_zero_spread_is_the_risk_free_bond() {
        let grid = SimulationGrid::dense(1.0, 4).unwrap();
        let cfg = DriverConfig::default().with(Driver::ShortRate, vasicek(0.5, 0.04, 0.02, 0.02));
        let s = simulate_scenarios(&cfg, &grid, 4, 1).unwrap();
        for p in 0..4 {
            assert_eq!(
                s.simple_bond(&RateSource::risk_free(), p, 1, 2).unwrap(),
                s.bond(p, 1, 2)
            );
        }
    }
}
