//! Job configuration: TOML document, parsed with field-path errors and
//! converted into engine objects.

use std::collections::BTreeMap;
use std::path::Path;

use cfbva_core::closeout::CloseoutKind;
use cfbva_core::collateral::{CollateralCurrency, CsaTerms};
use cfbva_core::deal::{Deal, Payoff};
use cfbva_core::funding::{FundingMode, FundingScope, LiquidityPolicy};
use cfbva_core::grid::SimulationGrid;
use cfbva_core::market::{Curve, Drift, Driver, DriverConfig, GbmParams, ProcessSpec, RateSource, VasicekParams};
use cfbva_core::regression::RegressionSpec;
use cfbva_core::solver::SolverSpec;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}: {message}")]
    Field { path: String, message: String },
}

fn field(path: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        path: path.to_string(),
        message: message.into(),
    }
}

fn two() -> usize {
    2
}

fn one() -> usize {
    1
}

fn three() -> f64 {
    3.0
}

fn yes() -> bool {
    true
}

fn forty() -> f64 {
    0.4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    pub run: RunSection,
    pub grid: GridSection,
    pub model: ModelSection,
    pub deal: DealSection,
    #[serde(default)]
    pub csa: CsaSection,
    #[serde(default)]
    pub liquidity: LiquiditySection,
    #[serde(default)]
    pub closeout: CloseoutSection,
    #[serde(default)]
    pub verify: VerifySection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub n_paths: usize,
    pub seed: u64,
    #[serde(default = "two")]
    pub degree: usize,
    /// Regression state drivers; every stochastic driver when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<Vec<String>>,
    #[serde(default = "two")]
    pub collateral_sweeps: usize,
    /// Write per-path collateral, funding and default ledgers.
    #[serde(default)]
    pub export_ledgers: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub maturity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default = "one")]
    pub margin_every: usize,
    #[serde(default = "one")]
    pub funding_every: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margining: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub funding: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default)]
    pub default_correlation: f64,
    pub drivers: BTreeMap<String, ProcessSection>,
    #[serde(default)]
    pub correlations: Vec<CorrelationEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelationEntry {
    pub a: String,
    pub b: String,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProcessSection {
    Flat {
        value: f64,
    },
    Curve {
        times: Vec<f64>,
        values: Vec<f64>,
    },
    Vasicek {
        mean_reversion: f64,
        long_run: f64,
        volatility: f64,
        initial: f64,
    },
    Gbm {
        initial: f64,
        volatility: f64,
        #[serde(default)]
        drift: DriftSection,
        #[serde(default)]
        dividend_yield: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DriftSection {
    #[default]
    RiskFree,
    Foreign,
    Funding(RateSpec),
    Hedging(RateSpec),
}

/// A rate source: `"risk_free"`, a driver name, or `{ spread = x }` over the
/// risk-free rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RateSpec {
    Name(String),
    Spread { spread: f64 },
}

impl Default for RateSpec {
    fn default() -> Self {
        RateSpec::Name("risk_free".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DealSection {
    pub cashflows: Vec<CashflowSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "payoff", rename_all = "snake_case", deny_unknown_fields)]
pub enum CashflowSection {
    Fixed { time: f64, amount: f64 },
    Linear { time: f64, underlying: String, strike: f64 },
    Call { time: f64, underlying: String, strike: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsaSection {
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub threshold: f64,
    #[serde(default)]
    pub mta: f64,
    #[serde(default = "yes")]
    pub rehypothecation: bool,
    #[serde(rename = "R_I", default = "forty")]
    pub r_i: f64,
    #[serde(rename = "R_C", default = "forty")]
    pub r_c: f64,
    #[serde(rename = "R_prime_I", default, skip_serializing_if = "Option::is_none")]
    pub r_prime_i: Option<f64>,
    #[serde(rename = "R_prime_C", default, skip_serializing_if = "Option::is_none")]
    pub r_prime_c: Option<f64>,
    #[serde(default)]
    pub rate_plus: RateSpec,
    #[serde(default)]
    pub rate_minus: RateSpec,
    #[serde(default)]
    pub currency: CurrencySection,
}

impl Default for CsaSection {
    fn default() -> Self {
        Self {
            alpha: 0.0,
            threshold: 0.0,
            mta: 0.0,
            rehypothecation: true,
            r_i: 0.4,
            r_c: 0.4,
            r_prime_i: None,
            r_prime_c: None,
            rate_plus: RateSpec::default(),
            rate_minus: RateSpec::default(),
            currency: CurrencySection::Domestic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CurrencySection {
    #[default]
    Domestic,
    Foreign {
        basis_spread: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeSection {
    #[default]
    Treasury,
    DirectMarket,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScopeSection {
    Micro,
    MacroAsym,
    MacroSym,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LiquiditySection {
    #[serde(default)]
    pub mode: ModeSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scope: Option<ScopeSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub funder_recovery: Option<f64>,
    #[serde(default)]
    pub funding_plus: RateSpec,
    #[serde(default)]
    pub funding_minus: RateSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hedging_plus: Option<RateSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hedging_minus: Option<RateSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CloseoutKindSection {
    #[default]
    RiskFree,
    CollateralValue,
    RiskFreeWithFunding,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CloseoutSection {
    #[serde(default)]
    pub kind: CloseoutKindSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    /// Tolerance in standard errors for Monte Carlo comparisons.
    #[serde(default = "three")]
    pub sigmas: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ccp: Option<CcpSection>,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self { sigmas: 3.0, ccp: None }
    }
}

/// Flat inputs for the CCP gap-risk check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CcpSection {
    pub jump: f64,
    pub lgd_counterparty: f64,
    #[serde(default)]
    pub lgd_investor: f64,
    pub intensity_counterparty: f64,
    #[serde(default)]
    pub intensity_investor: f64,
    pub overnight: f64,
    pub liquidity_plus: f64,
    #[serde(default)]
    pub liquidity_minus: f64,
    pub collateral_rate: f64,
}

/// Engine objects built from a validated configuration.
#[derive(Debug, Clone)]
pub struct Job {
    pub grid: SimulationGrid<f64>,
    pub drivers: DriverConfig<f64>,
    pub deal: Deal<f64>,
    pub csa: CsaTerms<f64>,
    pub policy: LiquidityPolicy<f64>,
    pub closeout: CloseoutKind,
    pub solver: SolverSpec,
    pub n_paths: usize,
    pub seed: u64,
}

pub fn parse_config(path: &Path) -> Result<JobConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<JobConfig, ConfigError> {
    let de = toml::Deserializer::new(text);
    let cfg: JobConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let msg = inner.message().to_string();
        field(if path == "." { "<root>" } else { &path }, msg)
    })?;
    cfg.build()?;
    Ok(cfg)
}

fn driver(path: &str, name: &str) -> Result<Driver, ConfigError> {
    name.parse::<Driver>()
        .map_err(|_| field(path, format!("unknown driver `{name}`")))
}

fn rate(path: &str, spec: &RateSpec) -> Result<RateSource<f64>, ConfigError> {
    match spec {
        RateSpec::Name(n) if n == "risk_free" => Ok(RateSource::risk_free()),
        RateSpec::Name(n) => Ok(RateSource::Driver(driver(path, n)?)),
        RateSpec::Spread { spread } => Ok(RateSource::RiskFree { spread: *spread }),
    }
}

fn unit(path: &str, x: f64) -> Result<f64, ConfigError> {
    if (0.0..=1.0).contains(&x) {
        Ok(x)
    } else {
        Err(field(path, format!("{x} outside [0, 1]")))
    }
}

fn core_err(path: &str) -> impl Fn(cfbva_core::Error) -> ConfigError + '_ {
    move |e| field(path, e.to_string())
}

impl ProcessSection {
    fn to_spec(&self, path: &str) -> Result<ProcessSpec<f64>, ConfigError> {
        Ok(match self {
            ProcessSection::Flat { value } => ProcessSpec::flat(*value),
            ProcessSection::Curve { times, values } => {
                ProcessSpec::Deterministic(Curve::linear(times.clone(), values.clone()).map_err(core_err(path))?)
            }
            ProcessSection::Vasicek {
                mean_reversion,
                long_run,
                volatility,
                initial,
            } => ProcessSpec::Vasicek(VasicekParams {
                mean_reversion: *mean_reversion,
                long_run: *long_run,
                volatility: *volatility,
                initial: *initial,
            }),
            ProcessSection::Gbm {
                initial,
                volatility,
                drift,
                dividend_yield,
            } => {
                let dpath = format!("{path}.drift");
                ProcessSpec::GeometricBrownian(GbmParams {
                    initial: *initial,
                    volatility: *volatility,
                    drift: match drift {
                        DriftSection::RiskFree => Drift::RiskFree,
                        DriftSection::Foreign => Drift::Foreign,
                        DriftSection::Funding(r) => Drift::Funding(rate(&dpath, r)?),
                        DriftSection::Hedging(r) => Drift::Hedging(rate(&dpath, r)?),
                    },
                    dividend_yield: *dividend_yield,
                })
            }
        })
    }
}

impl JobConfig {
    /// Validates every section and builds the engine objects.
    pub fn build(&self) -> Result<Job, ConfigError> {
        if self.run.n_paths == 0 {
            return Err(field("run.n_paths", "must be positive"));
        }
        let grid = self.grid.build()?;

        let mut drivers = DriverConfig::default().with_default_correlation(self.model.default_correlation);
        for (name, p) in &self.model.drivers {
            let path = format!("model.drivers.{name}");
            let d = driver(&path, name)?;
            drivers = drivers.with(d, p.to_spec(&path)?);
        }
        for (i, c) in self.model.correlations.iter().enumerate() {
            let path = format!("model.correlations[{i}]");
            drivers = drivers.with_correlation(
                driver(&format!("{path}.a"), &c.a)?,
                driver(&format!("{path}.b"), &c.b)?,
                c.rho,
            );
        }
        drivers.validate().map_err(core_err("model"))?;

        let mut flows = Vec::new();
        for (i, c) in self.deal.cashflows.iter().enumerate() {
            let path = format!("deal.cashflows[{i}]");
            let (t, payoff) = match c {
                CashflowSection::Fixed { time, amount } => (*time, Payoff::Fixed(*amount)),
                CashflowSection::Linear {
                    time,
                    underlying,
                    strike,
                } => (
                    *time,
                    Payoff::Linear {
                        underlying: driver(&format!("{path}.underlying"), underlying)?,
                        strike: *strike,
                    },
                ),
                CashflowSection::Call {
                    time,
                    underlying,
                    strike,
                } => (
                    *time,
                    Payoff::Call {
                        underlying: driver(&format!("{path}.underlying"), underlying)?,
                        strike: *strike,
                    },
                ),
            };
            if let Some(d) = payoff.underlying() {
                if drivers.spec(d).is_none() {
                    return Err(field(
                        &format!("{path}.underlying"),
                        format!("driver `{d}` is not declared"),
                    ));
                }
            }
            Deal::new(vec![(t, payoff.clone())], &grid).map_err(core_err(&format!("{path}.time")))?;
            flows.push((t, payoff));
        }
        let deal = Deal::new(flows, &grid).map_err(core_err("deal.cashflows"))?;

        let csa = self.csa.build()?;
        for (p, r) in [("csa.rate_plus", csa.rate_plus()), ("csa.rate_minus", csa.rate_minus())] {
            check_declared(p, r, &drivers)?;
        }
        if matches!(csa.currency(), CollateralCurrency::Foreign { .. }) && drivers.spec(Driver::ForeignRate).is_none() {
            return Err(field("csa.currency", "foreign collateral needs a foreign_rate driver"));
        }
        let policy = self.liquidity.build(&drivers)?;

        let state = match &self.run.state {
            None => None,
            Some(names) => Some(
                names
                    .iter()
                    .enumerate()
                    .map(|(i, n)| {
                        let path = format!("run.state[{i}]");
                        let d = driver(&path, n)?;
                        if drivers.spec(d).is_none() {
                            return Err(field(&path, format!("driver `{n}` is not declared")));
                        }
                        Ok(d)
                    })
                    .collect::<Result<Vec<_>, _>>()?,
            ),
        };
        let closeout = match self.closeout.kind {
            CloseoutKindSection::RiskFree => CloseoutKind::RiskFree,
            CloseoutKindSection::CollateralValue => CloseoutKind::CollateralValue,
            CloseoutKindSection::RiskFreeWithFunding => CloseoutKind::RiskFreeWithFunding,
        };
        if closeout == CloseoutKind::CollateralValue && grid.margining()[0] != 0 {
            return Err(field(
                "grid.margining",
                "collateral-value close-out needs a margining date at t=0",
            ));
        }
        if !(self.verify.sigmas > 0.0) {
            return Err(field("verify.sigmas", "must be positive"));
        }
        Ok(Job {
            grid,
            drivers,
            deal,
            csa,
            policy,
            closeout,
            solver: SolverSpec {
                regression: RegressionSpec {
                    degree: self.run.degree,
                    state,
                },
                collateral_sweeps: self.run.collateral_sweeps.max(1),
                keep_ledgers: self.run.export_ledgers,
            },
            n_paths: self.run.n_paths,
            seed: self.run.seed,
        })
    }
}

fn check_declared(path: &str, r: &RateSource<f64>, drivers: &DriverConfig<f64>) -> Result<(), ConfigError> {
    if let RateSource::Driver(d) = r {
        if drivers.spec(*d).is_none() {
            return Err(field(path, format!("driver `{d}` is not declared")));
        }
    }
    Ok(())
}

impl GridSection {
    pub fn build(&self) -> Result<SimulationGrid<f64>, ConfigError> {
        match (&self.times, self.maturity, self.steps) {
            (Some(times), None, None) => {
                let last = times.len().saturating_sub(1);
                let all = |v: &Option<Vec<usize>>, every: usize| {
                    v.clone().unwrap_or_else(|| {
                        let mut s: Vec<usize> = (0..=last).step_by(every.max(1)).collect();
                        if s.last() != Some(&last) {
                            s.push(last);
                        }
                        s
                    })
                };
                SimulationGrid::new(
                    times.clone(),
                    all(&self.margining, self.margin_every),
                    all(&self.funding, self.funding_every),
                )
                .map_err(core_err("grid"))
            }
            (None, Some(m), Some(n)) => {
                if self.margining.is_some() || self.funding.is_some() {
                    return Err(field("grid", "explicit sub-grids need explicit times"));
                }
                SimulationGrid::uniform(m, n, self.margin_every, self.funding_every).map_err(core_err("grid"))
            }
            _ => Err(field("grid", "give either `times` or both `maturity` and `steps`")),
        }
    }
}

impl CsaSection {
    pub fn build(&self) -> Result<CsaTerms<f64>, ConfigError> {
        unit("csa.alpha", self.alpha)?;
        if self.threshold < 0.0 {
            return Err(field("csa.threshold", "must be non-negative"));
        }
        if self.mta < 0.0 {
            return Err(field("csa.mta", "must be non-negative"));
        }
        let r_i = unit("csa.R_I", self.r_i)?;
        let r_c = unit("csa.R_C", self.r_c)?;
        let mut csa = CsaTerms::new(self.alpha)
            .and_then(|c| c.with_threshold(self.threshold))
            .and_then(|c| c.with_mta(self.mta))
            .and_then(|c| c.with_recoveries(r_i, r_c))
            .map_err(core_err("csa"))?;
        if self.rehypothecation {
            let rp_i = unit("csa.R_prime_I", self.r_prime_i.unwrap_or(r_i))?;
            let rp_c = unit("csa.R_prime_C", self.r_prime_c.unwrap_or(r_c))?;
            if rp_i < r_i {
                return Err(field("csa.R_prime_I", format!("{rp_i} below R_I={r_i}")));
            }
            if rp_c < r_c {
                return Err(field("csa.R_prime_C", format!("{rp_c} below R_C={r_c}")));
            }
            csa = csa.with_rehypothecation(rp_i, rp_c).map_err(core_err("csa"))?;
        } else {
            for (p, v) in [("csa.R_prime_I", self.r_prime_i), ("csa.R_prime_C", self.r_prime_c)] {
                if let Some(v) = v {
                    if v != 1.0 {
                        return Err(field(p, format!("segregated collateral recovers in full; got {v}")));
                    }
                }
            }
            csa = csa.segregated();
        }
        let csa = csa
            .with_rates(
                rate("csa.rate_plus", &self.rate_plus)?,
                rate("csa.rate_minus", &self.rate_minus)?,
            )
            .with_currency(match self.currency {
                CurrencySection::Domestic => CollateralCurrency::Domestic,
                CurrencySection::Foreign { basis_spread } => CollateralCurrency::Foreign { basis_spread },
            });
        csa.validate().map_err(core_err("csa"))?;
        Ok(csa)
    }
}

impl LiquiditySection {
    pub fn build(&self, drivers: &DriverConfig<f64>) -> Result<LiquidityPolicy<f64>, ConfigError> {
        let plus = rate("liquidity.funding_plus", &self.funding_plus)?;
        let minus = rate("liquidity.funding_minus", &self.funding_minus)?;
        check_declared("liquidity.funding_plus", &plus, drivers)?;
        check_declared("liquidity.funding_minus", &minus, drivers)?;
        let mut policy = LiquidityPolicy::treasury(plus, minus);
        if let Some(h) = &self.hedging_plus {
            policy.hedging_plus = rate("liquidity.hedging_plus", h)?;
            check_declared("liquidity.hedging_plus", &policy.hedging_plus, drivers)?;
        }
        if let Some(h) = &self.hedging_minus {
            policy.hedging_minus = rate("liquidity.hedging_minus", h)?;
            check_declared("liquidity.hedging_minus", &policy.hedging_minus, drivers)?;
        }
        match self.mode {
            ModeSection::Treasury => {}
            ModeSection::DirectMarket => {
                let r = match self.funder_recovery {
                    Some(r) => Some(unit("liquidity.funder_recovery", r)?),
                    None => None,
                };
                policy.mode = FundingMode::DirectMarket { recovery: r };
            }
        }
        if let Some(scope) = self.scope {
            policy.scope = match scope {
                ScopeSection::Micro => FundingScope::Micro,
                ScopeSection::MacroAsym => FundingScope::MacroAsym,
                ScopeSection::MacroSym => FundingScope::MacroSym,
            };
        }
        policy.validate().map_err(core_err("liquidity.scope"))?;
        Ok(policy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[run]
n_paths = 16
seed = 7

[grid]
maturity = 1.0
steps = 4

[model.drivers.short_rate]
type = "flat"
value = 0.03

[[deal.cashflows]]
payoff = "fixed"
time = 1.0
amount = 100.0
"#;

    #[test]
    fn minimal_config_parses() {
        let cfg = parse_config_str(MINIMAL).unwrap();
        let job = cfg.build().unwrap();
        assert_eq!(job.n_paths, 16);
        assert_eq!(job.csa.alpha(), 0.0);
        assert_eq!(job.grid.len(), 5);
    }

    #[test]
    fn recovery_out_of_range_names_the_field() {
        let text = format!("{MINIMAL}\n[csa]\nR_C = 1.2\n");
        match parse_config_str(&text) {
            Err(ConfigError::Field { path, .. }) => assert_eq!(path, "csa.R_C"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn segregation_needs_full_collateral_recovery() {
        let text = format!("{MINIMAL}\n[csa]\nrehypothecation = false\nR_prime_C = 0.5\n");
        match parse_config_str(&text) {
            Err(ConfigError::Field { path, .. }) => assert_eq!(path, "csa.R_prime_C"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected_with_their_path() {
        let text = MINIMAL.replace("seed = 7", "seed = 7\nseeds = 3");
        match parse_config_str(&text) {
            Err(ConfigError::Field { path, message }) => {
                assert_eq!(path, "run.seeds", "{message}");
                assert!(message.contains("seeds"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_fields_and_undeclared_drivers() {
        let text = MINIMAL.replace("amount = 100.0", "");
        assert!(matches!(parse_config_str(&text), Err(ConfigError::Field { .. })));
        let text = MINIMAL.replace(
            "payoff = \"fixed\"\ntime = 1.0\namount = 100.0",
            "payoff = \"call\"\ntime = 1.0\nunderlying = \"underlying\"\nstrike = 1.0",
        );
        match parse_config_str(&text) {
            Err(ConfigError::Field { path, .. }) => assert_eq!(path, "deal.cashflows[0].underlying"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn off_grid_cash_flow_is_rejected() {
        let text = MINIMAL.replace("time = 1.0", "time = 0.3");
        match parse_config_str(&text) {
            Err(ConfigError::Field { path, .. }) => assert_eq!(path, "deal.cashflows[0].time"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = parse_config_str(MINIMAL).unwrap();
        let echo = toml::to_string(&cfg).unwrap();
        assert_eq!(parse_config_str(&echo).unwrap(), cfg);
    }
}
