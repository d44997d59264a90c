use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use cfbva_cli::{parse_config, parse_ladder, run_job, write_outputs, Command};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "cfbva",
    version,
    about = "Collateral, funding and bilateral valuation adjustments by Monte Carlo"
)]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Price the deal.
    Price(Common),
    /// Price and compare with every analytic special case that applies.
    Verify(Common),
    /// Price over a ladder of path and step counts.
    Converge {
        #[command(flatten)]
        common: Common,
        /// Comma-separated rungs `N` or `NxSTEPS`, e.g. `10000x52,40000x104`.
        #[arg(long)]
        ladder: String,
    },
}

#[derive(Args)]
struct Common {
    config: PathBuf,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: `run.out`, else `cfbva-out`).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let (common, command) = match cli.command {
        Cmd::Price(c) => (c, Command::Price),
        Cmd::Verify(c) => (c, Command::Verify),
        Cmd::Converge { common, ladder } => (common, Command::Converge(parse_ladder(&ladder)?)),
    };
    let mut cfg = parse_config(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.run.seed = seed;
    }
    let out = common
        .out
        .or_else(|| cfg.run.out.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("cfbva-out"));
    let outcome = run_job(&cfg, &command)?;
    write_outputs(&out, &outcome)?;
    print!("{}", outcome.summary);
    println!("report: {}", out.join(cfbva_cli::run::REPORT_FILE).display());
    if command == Command::Verify {
        println!("{}", if outcome.passed { "VERIFY PASS" } else { "VERIFY FAIL" });
    }
    Ok(outcome.passed)
}
