use std::path::{Path, PathBuf};

use cfbva_cli::json::Json;
use cfbva_cli::run::Rung;
use cfbva_cli::{parse_config, parse_config_str, run_job, Command};

fn shipped(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn field<'a>(j: &'a Json, path: &[&str]) -> &'a Json {
    path.iter().fold(j, |j, k| match j {
        Json::Object(m) => &m[*k],
        other => panic!("not an object at {k}: {other:?}"),
    })
}

fn number(j: &Json) -> f64 {
    match j {
        Json::Float(x) => *x,
        Json::Int(i) => *i as f64,
        other => panic!("not a number: {other:?}"),
    }
}

#[test]
fn every_shipped_config_parses_and_builds() {
    for entry in std::fs::read_dir(shipped("")).unwrap() {
        let path = entry.unwrap().path();
        let cfg = parse_config(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        cfg.build().unwrap();
    }
}

#[test]
fn smoke_price_is_the_discounted_amount() {
    let cfg = parse_config(&shipped("smoke.toml")).unwrap();
    let out = run_job(&cfg, &Command::Price).unwrap();
    let v = number(field(&out.report, &["result", "value"]));
    assert!((v - 100.0 * (-0.03f64).exp()).abs() < 1e-12);
    assert!(out.passed);
    assert_eq!(out.tables[0].0, "steps.csv");
}

#[test]
fn config_echo_reproduces_the_job() {
    let cfg = parse_config(&shipped("uncollateralised.toml")).unwrap();
    let first = run_job(&cfg, &Command::Price).unwrap();
    let Json::Str(echo) = field(&first.report, &["config"]) else {
        panic!("config echo is not a string");
    };
    let again = run_job(&parse_config_str(echo).unwrap(), &Command::Price).unwrap();
    assert_eq!(first.report.render(), again.report.render());
}

#[test]
fn ledgers_are_exported_on_request() {
    let text = std::fs::read_to_string(shipped("perfect_collateral.toml"))
        .unwrap()
        .replace("n_paths = 20000", "n_paths = 200\nexport_ledgers = true");
    let out = run_job(&parse_config_str(&text).unwrap(), &Command::Price).unwrap();
    let names: Vec<&str> = out.tables.iter().map(|t| t.0.as_str()).collect();
    assert_eq!(names, ["steps.csv", "collateral.csv", "funding.csv", "defaults.csv"]);
    let collateral = &out.tables[1].1;
    assert!(collateral.starts_with("path,t_k,mtm,target,C,mu,frozen\n"));
    // 200 paths x 105 margining dates
    assert_eq!(collateral.lines().count(), 1 + 200 * 105);
}

#[test]
fn standard_error_scales_with_path_count() {
    let cfg = parse_config(&shipped("futures.toml")).unwrap();
    let ladder = vec![
        Rung {
            n_paths: 4000,
            steps: Some(26),
        },
        Rung {
            n_paths: 8000,
            steps: Some(26),
        },
    ];
    let out = run_job(&cfg, &Command::Converge(ladder)).unwrap();
    let Json::Array(rows) = field(&out.report, &["ladder"]) else {
        panic!("no ladder");
    };
    let se: Vec<f64> = rows.iter().map(|r| number(field(r, &["standard_error"]))).collect();
    let ratio = se[0] / se[1];
    let ideal = 2f64.sqrt();
    assert!(ratio > ideal / 1.5 && ratio < ideal * 1.5, "ratio {ratio}");
    assert!(matches!(field(&rows[0], &["target_name"]), Json::Str(s) if s == "futures"));
}

#[test]
fn verify_without_an_applicable_check_is_an_error() {
    let text = std::fs::read_to_string(shipped("smoke.toml")).unwrap().replace(
        "value = 0.03",
        "value = 0.03\n\n[model.drivers.intensity_counterparty]\ntype = \"flat\"\nvalue = 0.05",
    );
    let err = run_job(&parse_config_str(&text).unwrap(), &Command::Verify).unwrap_err();
    assert!(err.to_string().contains("no analytic check"), "{err}");
}
