use cfbva_core::analytic::analytic_perfect_collateral;
use cfbva_core::closeout::CloseoutKind;
use cfbva_core::collateral::CsaTerms;
use cfbva_core::deal::{Deal, Payoff};
use cfbva_core::funding::LiquidityPolicy;
use cfbva_core::grid::SimulationGrid;
use cfbva_core::market::{
    simulate_scenarios, Curve, Drift, Driver, DriverConfig, GbmParams, ProcessSpec, RateSource, VasicekParams,
};
use cfbva_core::solver::{backward_cfbva_price, forward_pathwise_oracle, PricingInputs, SolverSpec};
use proptest::prelude::*;

const KINDS: [CloseoutKind; 3] = [
    CloseoutKind::RiskFree,
    CloseoutKind::CollateralValue,
    CloseoutKind::RiskFreeWithFunding,
];

#[derive(Debug, Clone)]
struct Setup {
    rate: f64,
    collateral: f64,
    funding: f64,
    lambda_i: f64,
    lambda_c: f64,
    alpha: f64,
    threshold: f64,
    flows: Vec<(usize, f64)>,
    kind: usize,
    seed: u64,
}

fn setups() -> impl Strategy<Value = Setup> {
    (
        (-0.01f64..0.06, 0.0f64..0.06, 0.0f64..0.08),
        (0.0f64..0.3, 0.0f64..0.3),
        (0.0f64..=1.0, 0.0f64..5.0),
        prop::collection::vec((1usize..=8, -50.0f64..50.0), 1..4),
        0usize..3,
        any::<u64>(),
    )
        .prop_map(
            |((rate, collateral, funding), (lambda_i, lambda_c), (alpha, threshold), flows, kind, seed)| Setup {
                rate,
                collateral,
                funding,
                lambda_i,
                lambda_c,
                alpha,
                threshold,
                flows,
                kind,
                seed,
            },
        )
}

impl Setup {
    fn drivers(&self, stochastic: bool) -> DriverConfig<f64> {
        let short = if stochastic {
            ProcessSpec::Vasicek(VasicekParams {
                mean_reversion: 0.2,
                long_run: self.rate,
                volatility: 0.01,
                initial: self.rate,
            })
        } else {
            ProcessSpec::flat(self.rate)
        };
        let cfg = DriverConfig::default()
            .with(Driver::ShortRate, short)
            .with(Driver::CollateralPlus, ProcessSpec::flat(self.collateral))
            .with(Driver::FundingPlus, ProcessSpec::flat(self.funding))
            .with(Driver::IntensityInvestor, ProcessSpec::flat(self.lambda_i))
            .with(Driver::IntensityCounterparty, ProcessSpec::flat(self.lambda_c));
        if stochastic {
            cfg.with(
                Driver::Underlying,
                ProcessSpec::GeometricBrownian(GbmParams {
                    initial: 10.0,
                    volatility: 0.3,
                    drift: Drift::RiskFree,
                    dividend_yield: 0.0,
                }),
            )
        } else {
            cfg
        }
    }

    fn deal(&self, grid: &SimulationGrid<f64>, stochastic: bool) -> Deal<f64> {
        let mut flows: Vec<(f64, Payoff<f64>)> = self
            .flows
            .iter()
            .map(|&(i, x)| (grid.time(i), Payoff::Fixed(x)))
            .collect();
        if stochastic {
            flows.push((
                grid.maturity(),
                Payoff::Call {
                    underlying: Driver::Underlying,
                    strike: 10.0,
                },
            ));
        }
        Deal::new(flows, grid).unwrap()
    }

    fn csa(&self) -> CsaTerms<f64> {
        let c = RateSource::Driver(Driver::CollateralPlus);
        CsaTerms::new(self.alpha)
            .unwrap()
            .with_threshold(self.threshold)
            .unwrap()
            .with_recoveries(0.3, 0.4)
            .unwrap()
            .with_rates(c.clone(), c)
    }

    fn symmetric_policy(&self) -> LiquidityPolicy<f64> {
        let f = RateSource::Driver(Driver::FundingPlus);
        LiquidityPolicy::treasury(f.clone(), f)
    }

    fn asymmetric_policy(&self) -> LiquidityPolicy<f64> {
        LiquidityPolicy::treasury(RateSource::Driver(Driver::FundingPlus), RateSource::risk_free())
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn interval_payoffs_telescope(setup in setups(), stochastic in any::<bool>()) {
        let grid = SimulationGrid::uniform(2.0, 8, 2, 1).unwrap();
        let s = simulate_scenarios(&setup.drivers(stochastic), &grid, 64, setup.seed).unwrap();
        let deal = setup.deal(&grid, stochastic);
        let (csa, pol, spec) = (setup.csa(), setup.asymmetric_policy(), SolverSpec::default());
        let inputs = PricingInputs::prepare(&s, &deal, &csa, &pol, KINDS[setup.kind], &spec).unwrap();
        let dates = grid.funding();
        for p in 0..s.n_paths() {
            let pieces: f64 = (0..inputs.n_intervals())
                .map(|j| s.discount(p, 0, dates[j]) * inputs.interval_payoff(p, j).total())
                .sum();
            let whole = inputs.full_payoff(p);
            prop_assert!((pieces - whole).abs() <= 1e-10 * (1.0 + whole.abs()), "path {p}: {pieces} vs {whole}");
        }
    }

    #[test]
    fn decomposition_adds_up_to_the_price(setup in setups(), stochastic in any::<bool>()) {
        let grid = SimulationGrid::uniform(2.0, 8, 2, 1).unwrap();
        let s = simulate_scenarios(&setup.drivers(stochastic), &grid, 200, setup.seed).unwrap();
        let deal = setup.deal(&grid, stochastic);
        let r = backward_cfbva_price(
            &s, &deal, &setup.csa(), &setup.asymmetric_policy(), KINDS[setup.kind], &SolverSpec::default(),
        ).unwrap();
        prop_assert!((r.decomposition.total() - r.value).abs() <= 1e-10 * (1.0 + r.value.abs()));
        prop_assert!(r.value.is_finite() && r.standard_error >= 0.0);
    }

    #[test]
    fn symmetric_funding_matches_the_forward_oracle(setup in setups()) {
        let grid = SimulationGrid::uniform(2.0, 8, 2, 1).unwrap();
        let s = simulate_scenarios(&setup.drivers(false), &grid, 200, setup.seed).unwrap();
        let deal = setup.deal(&grid, false);
        let (csa, pol, kind, spec) = (setup.csa(), setup.symmetric_policy(), KINDS[setup.kind], SolverSpec::default());
        let b = backward_cfbva_price(&s, &deal, &csa, &pol, kind, &spec).unwrap();
        let o = forward_pathwise_oracle(&s, &deal, &csa, &pol, kind, &spec).unwrap();
        prop_assert!((b.value - o.value).abs() <= 1e-12 * (1.0 + b.value.abs()), "{} vs {}", b.value, o.value);
    }

    #[test]
    fn no_defaults_no_collateral_risk_free_funding_is_discounting(setup in setups()) {
        let mut setup = setup;
        setup.lambda_i = 0.0;
        setup.lambda_c = 0.0;
        setup.alpha = 0.0;
        let grid = SimulationGrid::uniform(2.0, 8, 2, 1).unwrap();
        let s = simulate_scenarios(&setup.drivers(false), &grid, 4, setup.seed).unwrap();
        let deal = setup.deal(&grid, false);
        let r = backward_cfbva_price(
            &s, &deal, &setup.csa(), &LiquidityPolicy::risk_free(), KINDS[setup.kind], &SolverSpec::default(),
        ).unwrap();
        let expect = analytic_perfect_collateral(&deal, &Curve::Flat(setup.rate), None).unwrap().value;
        prop_assert!((r.value - expect).abs() <= 1e-12 * (1.0 + expect.abs()));
    }
}

#[test]
fn perfect_collateral_survives_defaults() {
    // with collateral-value close-out, full collateral makes default irrelevant
    let cfg = DriverConfig::default()
        .with(
            Driver::ShortRate,
            ProcessSpec::Vasicek(VasicekParams {
                mean_reversion: 0.1,
                long_run: 0.03,
                volatility: 0.01,
                initial: 0.02,
            }),
        )
        .with(Driver::CollateralPlus, ProcessSpec::flat(0.04))
        .with(Driver::FundingPlus, ProcessSpec::flat(0.05))
        .with(Driver::IntensityInvestor, ProcessSpec::flat(0.05))
        .with(Driver::IntensityCounterparty, ProcessSpec::flat(0.1))
        .with(
            Driver::Underlying,
            ProcessSpec::GeometricBrownian(GbmParams {
                initial: 100.0,
                volatility: 0.2,
                drift: Drift::RiskFree,
                dividend_yield: 0.0,
            }),
        );
    let grid = SimulationGrid::<f64>::dense(1.0, 104).unwrap();
    let s = simulate_scenarios(&cfg, &grid, 20_000, 21).unwrap();
    let deal = Deal::new(
        vec![(
            1.0,
            Payoff::Linear {
                underlying: Driver::Underlying,
                strike: 90.0,
            },
        )],
        &grid,
    )
    .unwrap();
    let c = RateSource::Driver(Driver::CollateralPlus);
    let csa = CsaTerms::new(1.0).unwrap().with_rates(c.clone(), c);
    let pol = LiquidityPolicy::treasury(RateSource::Driver(Driver::FundingPlus), RateSource::risk_free());
    let r = backward_cfbva_price(
        &s,
        &deal,
        &csa,
        &pol,
        CloseoutKind::CollateralValue,
        &SolverSpec::default(),
    )
    .unwrap();
    let a = analytic_perfect_collateral(&deal, &Curve::Flat(0.04), Some(&s)).unwrap();
    let se = r.standard_error.hypot(a.standard_error);
    assert!(r.default_paths > 1000, "{} defaults", r.default_paths);
    assert!(
        (r.value - a.value).abs() <= 3.0 * se,
        "{} vs {} (se {se})",
        r.value,
        a.value
    );
}

#[test]
fn single_and_double_precision_agree() {
    let grid64 = SimulationGrid::<f64>::dense(1.0, 12).unwrap();
    let grid32 = SimulationGrid::<f32>::dense(1.0, 12).unwrap();
    let cfg64 = DriverConfig::<f64>::default()
        .with(Driver::ShortRate, ProcessSpec::flat(0.02))
        .with(Driver::FundingPlus, ProcessSpec::flat(0.05));
    let cfg32 = DriverConfig::<f32>::default()
        .with(Driver::ShortRate, ProcessSpec::flat(0.02))
        .with(Driver::FundingPlus, ProcessSpec::flat(0.05));
    let s64 = simulate_scenarios(&cfg64, &grid64, 8, 1).unwrap();
    let s32 = simulate_scenarios(&cfg32, &grid32, 8, 1).unwrap();
    let d64 = Deal::new(vec![(0.5, Payoff::Fixed(-20.0)), (1.0, Payoff::Fixed(100.0))], &grid64).unwrap();
    let d32 = Deal::new(
        vec![(0.5, Payoff::Fixed(-20.0f32)), (1.0, Payoff::Fixed(100.0))],
        &grid32,
    )
    .unwrap();
    let f = RateSource::Driver(Driver::FundingPlus);
    let p64 = LiquidityPolicy::treasury(f.clone(), RateSource::risk_free());
    let p32 = LiquidityPolicy::treasury(RateSource::Driver(Driver::FundingPlus), RateSource::risk_free());
    let spec = SolverSpec::default();
    let v64 = backward_cfbva_price(
        &s64,
        &d64,
        &CsaTerms::uncollateralised(),
        &p64,
        CloseoutKind::RiskFree,
        &spec,
    )
    .unwrap()
    .value;
    let v32 = backward_cfbva_price(
        &s32,
        &d32,
        &CsaTerms::uncollateralised(),
        &p32,
        CloseoutKind::RiskFree,
        &spec,
    )
    .unwrap()
    .value;
    assert!((v64 - v32 as f64).abs() < 1e-4 * v64.abs(), "{v64} vs {v32}");
}
