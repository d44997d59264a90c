//! Job execution: price, verify and converge, with their reports and tables.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use cfbva_core::funding::FundingScope;
use cfbva_core::market::simulate_scenarios;
use cfbva_core::solver::{backward_cfbva_price, Method, PricingResult};
use cfbva_core::Scenarios;

use crate::config::{Job, JobConfig};
use crate::json::{self, object, Json};
use crate::verify::{self, Check};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Command {
    Price,
    Verify,
    Converge(Vec<Rung>),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Price => "price",
            Command::Verify => "verify",
            Command::Converge(_) => "converge",
        }
    }
}

/// One convergence run: path count and, optionally, a new step count for
/// the uniform grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Rung {
    pub n_paths: usize,
    pub steps: Option<usize>,
}

/// Parses `"20000x52,40000x104,80000"`.
pub fn parse_ladder(spec: &str) -> anyhow::Result<Vec<Rung>> {
    let rungs = spec
        .split(',')
        .map(|item| {
            let item = item.trim();
            let (n, steps) = match item.split_once(['x', 'X']) {
                Some((n, s)) => (n, Some(s.trim().parse::<usize>())),
                None => (item, None),
            };
            let n_paths = n.trim().parse::<usize>();
            match (n_paths, steps.transpose()) {
                (Ok(n_paths), Ok(steps)) if n_paths > 0 && steps != Some(0) => Ok(Rung { n_paths, steps }),
                _ => bail!("bad ladder rung `{item}`; expected N or NxSTEPS"),
            }
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    if rungs.is_empty() {
        bail!("empty ladder");
    }
    Ok(rungs)
}

/// Everything a job produces: the machine report, CSV tables by file name,
/// a human summary, and whether every requested check passed.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub report: Json,
    pub tables: Vec<(String, String)>,
    pub summary: String,
    pub passed: bool,
}

pub const REPORT_FILE: &str = "report.json";

pub fn run_job(cfg: &JobConfig, command: &Command) -> anyhow::Result<Outcome> {
    let echo = toml::to_string(cfg).context("serialising the effective configuration")?;
    let mut report = vec![
        ("command", Json::from(command.name())),
        ("config", Json::from(echo)),
        (
            "engine",
            object([
                ("name", Json::from("cfbva")),
                ("version", Json::from(cfbva_core::VERSION)),
            ]),
        ),
    ];
    let mut tables = Vec::new();
    let mut summary = String::new();
    let mut passed = true;

    match command {
        Command::Price | Command::Verify => {
            let job = cfg.build()?;
            let (scenario, result) = price(&job)?;
            summary += &summarise(&result);
            report.push(("result", result_json(&job, &scenario, &result)));
            tables.push(("steps.csv".into(), steps_csv(&result)?));
            if job.solver.keep_ledgers {
                tables.extend(ledger_csvs(&scenario, &result)?);
            }
            if *command == Command::Verify {
                let mut checks: Vec<Check> = verify::targets(&job, &scenario)?
                    .iter()
                    .map(|t| t.check(&result, cfg.verify.sigmas))
                    .collect();
                checks.extend(verify::evaluator_checks(&job, cfg.verify.ccp.as_ref())?);
                if checks.is_empty() {
                    bail!("no analytic check applies to this configuration");
                }
                passed = checks.iter().all(|c| c.passed);
                summary += &checks_table(&checks);
                report.push(("checks", Json::Array(checks.iter().map(check_json).collect())));
            }
        }
        Command::Converge(ladder) => {
            let mut rows = Vec::new();
            for rung in ladder {
                let mut c = cfg.clone();
                c.run.n_paths = rung.n_paths;
                c.run.export_ledgers = false;
                if let Some(steps) = rung.steps {
                    if c.grid.steps.is_none() {
                        bail!("ladder step counts need a uniform grid (grid.maturity and grid.steps)");
                    }
                    c.grid.steps = Some(steps);
                }
                let job = c.build().with_context(|| format!("ladder rung {}", rung_label(rung)))?;
                let (scenario, result) = price(&job)?;
                let target = verify::targets(&job, &scenario)?.into_iter().next();
                rows.push(ConvergenceRow {
                    n_paths: job.n_paths,
                    steps: job.grid.last_index(),
                    value: result.value,
                    standard_error: result.standard_error,
                    target,
                });
            }
            summary += &convergence_table(&rows);
            tables.push(("convergence.csv".into(), convergence_csv(&rows)?));
            report.push(("ladder", Json::Array(rows.iter().map(ConvergenceRow::json).collect())));
        }
    }
    report.push(("passed", Json::from(passed)));
    Ok(Outcome {
        report: object(report),
        tables,
        summary,
        passed,
    })
}

fn price(job: &Job) -> anyhow::Result<(Scenarios, PricingResult<f64>)> {
    let scenario =
        simulate_scenarios(&job.drivers, &job.grid, job.n_paths, job.seed).context("simulating scenarios")?;
    let result = backward_cfbva_price(&scenario, &job.deal, &job.csa, &job.policy, job.closeout, &job.solver)
        .context("pricing")?;
    Ok((scenario, result))
}

fn rung_label(r: &Rung) -> String {
    match r.steps {
        Some(s) => format!("{}x{s}", r.n_paths),
        None => r.n_paths.to_string(),
    }
}

fn result_json(job: &Job, scenario: &Scenarios, r: &PricingResult<f64>) -> Json {
    let d = &r.decomposition;
    let diag = scenario.diagnostics();
    object([
        ("value", Json::from(r.value)),
        ("standard_error", Json::from(r.standard_error)),
        (
            "method",
            Json::from(match r.method {
                Method::Backward => "backward",
                Method::ForwardOracle => "forward_oracle",
            }),
        ),
        ("closeout", Json::from(r.closeout.name())),
        ("n_paths", Json::from(r.n_paths)),
        ("n_steps", Json::from(r.n_steps)),
        ("seed", Json::from(r.seed)),
        ("default_paths", Json::from(r.default_paths)),
        ("split_violations", Json::from(r.split_violations)),
        (
            "decomposition",
            object([
                ("deal", Json::from(d.deal)),
                ("margining", Json::from(d.margining)),
                ("funding", Json::from(d.funding)),
                ("closeout", Json::from(d.closeout)),
                ("cva", Json::from(d.cva)),
                ("dva", Json::from(d.dva)),
                ("rehypothecation", Json::from(d.rehypothecation)),
                ("regression_residual", Json::from(d.regression_residual)),
                // components of an asymmetric funding price interact; the split is then indicative
                ("additive", Json::from(job.policy.scope == FundingScope::MacroSym)),
            ]),
        ),
        (
            "simulation",
            object([
                ("floored_intensities", Json::from(diag.floored_intensities)),
                ("default_tie_redraws", Json::from(diag.default_tie_redraws)),
            ]),
        ),
    ])
}

fn check_json(c: &Check) -> Json {
    object([
        ("name", Json::from(c.name)),
        ("value", Json::from(c.value)),
        ("target", Json::from(c.target)),
        ("gap", Json::from(c.gap())),
        ("tolerance", Json::from(c.tolerance)),
        ("passed", Json::from(c.passed)),
        ("detail", Json::from(c.detail.as_str())),
    ])
}

struct ConvergenceRow {
    n_paths: usize,
    steps: usize,
    value: f64,
    standard_error: f64,
    target: Option<verify::Target>,
}

impl ConvergenceRow {
    fn json(&self) -> Json {
        object([
            ("n_paths", Json::from(self.n_paths)),
            ("steps", Json::from(self.steps)),
            ("value", Json::from(self.value)),
            ("standard_error", Json::from(self.standard_error)),
            ("target", Json::from(self.target.map(|t| t.value))),
            ("target_name", Json::from(self.target.map(|t| t.name))),
            ("gap", Json::from(self.target.map(|t| self.value - t.value))),
        ])
    }
}

fn csv_string(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn f(x: f64) -> String {
    json::float(x).trim_matches('"').to_string()
}

fn steps_csv(r: &PricingResult<f64>) -> anyhow::Result<String> {
    csv_string(
        &[
            "stage",
            "time",
            "paths",
            "residual_norm",
            "condition",
            "mean_fallback",
            "ridge",
            "split_violations",
        ],
        r.steps.iter().map(|s| {
            vec![
                s.stage.name().into(),
                f(s.time),
                s.paths.to_string(),
                f(s.residual_norm),
                f(s.condition),
                s.mean_fallback.to_string(),
                s.ridge.to_string(),
                s.split_violations.to_string(),
            ]
        }),
    )
}

fn ledger_csvs(scenario: &Scenarios, r: &PricingResult<f64>) -> anyhow::Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    if let Some(ledger) = &r.collateral {
        out.push((
            "collateral.csv".into(),
            csv_string(
                &["path", "t_k", "mtm", "target", "C", "mu", "frozen"],
                ledger.rows(scenario).map(|row| {
                    vec![
                        row.path.to_string(),
                        f(row.time),
                        f(row.mtm),
                        f(row.target),
                        f(row.posted),
                        f(row.accrued),
                        row.frozen.to_string(),
                    ]
                }),
            )?,
        ));
    }
    if let Some(ledger) = &r.funding {
        out.push((
            "funding.csv".into(),
            csv_string(
                &["path", "t_j", "F", "notional", "H", "phi"],
                ledger.rows(scenario).map(|row| {
                    vec![
                        row.path.to_string(),
                        f(row.time),
                        f(row.position),
                        f(row.notional),
                        f(row.hedge),
                        f(row.phi),
                    ]
                }),
            )?,
        ));
    }
    out.push((
        "defaults.csv".into(),
        csv_string(
            &[
                "path",
                "tau",
                "defaulter",
                "epsilon",
                "C_pre_default",
                "theta",
                "closeout",
                "cva",
                "dva",
                "rehypothecation",
            ],
            r.defaults.iter().map(|o| {
                let b = &o.breakdown;
                vec![
                    o.path.to_string(),
                    f(o.tau),
                    o.defaulter.name().into(),
                    f(o.epsilon),
                    f(o.pre_default_collateral),
                    f(b.theta),
                    f(b.closeout),
                    f(b.cva),
                    f(b.dva),
                    f(b.rehypothecation),
                ]
            }),
        )?,
    ));
    Ok(out)
}

fn convergence_csv(rows: &[ConvergenceRow]) -> anyhow::Result<String> {
    let opt = |x: Option<f64>| x.map(f).unwrap_or_default();
    csv_string(
        &["n_paths", "steps", "value", "standard_error", "target", "gap"],
        rows.iter().map(|r| {
            vec![
                r.n_paths.to_string(),
                r.steps.to_string(),
                f(r.value),
                f(r.standard_error),
                opt(r.target.map(|t| t.value)),
                opt(r.target.map(|t| r.value - t.value)),
            ]
        }),
    )
}

fn summarise(r: &PricingResult<f64>) -> String {
    let d = &r.decomposition;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "paths {}  steps {}  seed {}  close-out {}",
        r.n_paths,
        r.n_steps,
        r.seed,
        r.closeout.name()
    );
    let _ = writeln!(s, "{:<22}{:>16}", "price", format!("{:.8}", r.value));
    let _ = writeln!(s, "{:<22}{:>16}", "standard error", format!("{:.8}", r.standard_error));
    for (k, v) in [
        ("  deal", d.deal),
        ("  margining", d.margining),
        ("  funding", d.funding),
        ("  close-out", d.closeout),
        ("  cva", d.cva),
        ("  dva", d.dva),
        ("  rehypothecation", d.rehypothecation),
        ("  regression residual", d.regression_residual),
    ] {
        let _ = writeln!(s, "{k:<22}{v:>16.8}");
    }
    let _ = writeln!(s, "{:<22}{:>16}", "default paths", r.default_paths);
    s
}

fn checks_table(checks: &[Check]) -> String {
    let mut s = format!(
        "\n{:<20}{:>16}{:>16}{:>12}{:>12}  result\n",
        "check", "value", "target", "gap", "tolerance"
    );
    for c in checks {
        let _ = writeln!(
            s,
            "{:<20}{:>16.8}{:>16.8}{:>12.2e}{:>12.2e}  {}",
            c.name,
            c.value,
            c.target,
            c.gap(),
            c.tolerance,
            if c.passed { "PASS" } else { "FAIL" }
        );
    }
    s
}

fn convergence_table(rows: &[ConvergenceRow]) -> String {
    let mut s = format!(
        "{:>10}{:>8}{:>16}{:>14}{:>16}{:>12}\n",
        "paths", "steps", "price", "std error", "target", "gap"
    );
    for r in rows {
        let (t, g) = match r.target {
            Some(t) => (format!("{:.8}", t.value), format!("{:.2e}", r.value - t.value)),
            None => ("-".into(), "-".into()),
        };
        let _ = writeln!(
            s,
            "{:>10}{:>8}{:>16.8}{:>14.3e}{:>16}{:>12}",
            r.n_paths, r.steps, r.value, r.standard_error, t, g
        );
    }
    s
}

/// Writes the report and tables into `out`. Files go to a staging directory
/// first and are moved into place only once all of them are written.
pub fn write_outputs(out: &Path, outcome: &Outcome) -> anyhow::Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let staging = out.join(format!(".staging-{}", std::process::id()));
    let result = (|| -> anyhow::Result<Vec<PathBuf>> {
        fs::create_dir_all(&staging)?;
        let mut files = vec![REPORT_FILE.to_string()];
        fs::write(staging.join(REPORT_FILE), outcome.report.render())?;
        for (name, body) in &outcome.tables {
            fs::write(staging.join(name), body)?;
            files.push(name.clone());
        }
        files
            .iter()
            .map(|name| {
                let dest = out.join(name);
                fs::rename(staging.join(name), &dest)?;
                Ok(dest)
            })
            .collect()
    })();
    let _ = fs::remove_dir_all(&staging);
    result
        .map(|_| ())
        .with_context(|| format!("writing outputs to {}", out.display()))
}
