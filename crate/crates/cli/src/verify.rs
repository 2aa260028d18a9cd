use std::path::PathBuf;

use anyhow::anyhow;
use clap::{Args, ValueEnum};
use serde::Serialize;

use lgwnn::verify::{run_suite, Fault, Grid, Suite, SuiteReport, VerifyOptions};

use crate::{CliResult, Failure, Output, EXIT_VERIFY};

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GridArg {
    Small,
    Full,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FaultArg {
    FlipUpdateSign,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// Suites to run (repeatable); all when omitted.
    #[arg(long = "suite", value_parser = parse_suite)]
    suites: Vec<Suite>,
    #[arg(long, value_enum, default_value_t = GridArg::Small)]
    grid: GridArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the JSON report here.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Deliberately break an operator to check that the suites notice.
    #[arg(long, value_enum, hide = true)]
    inject_fault: Option<FaultArg>,
}

fn parse_suite(s: &str) -> Result<Suite, String> {
    s.parse().map_err(|_| {
        let names: Vec<_> = Suite::ALL.iter().map(|s| s.name()).collect();
        format!("unknown suite {s:?}; expected one of {}", names.join(", "))
    })
}

#[derive(Debug, Serialize)]
struct Report {
    passed: bool,
    grid: Grid,
    seed: u64,
    fault: Option<Fault>,
    suites: Vec<SuiteReport>,
}

pub fn run(args: &VerifyArgs, out: Output) -> CliResult {
    let opts = VerifyOptions {
        grid: match args.grid {
            GridArg::Small => Grid::Small,
            GridArg::Full => Grid::Full,
        },
        seed: args.seed,
        fault: args.inject_fault.map(|FaultArg::FlipUpdateSign| Fault::FlipUpdateSign),
    };
    let suites = if args.suites.is_empty() { Suite::ALL.to_vec() } else { args.suites.clone() };
    let mut reports = Vec::new();
    for s in suites {
        let r = run_suite(s, &opts)?;
        if !out.json && !out.quiet {
            println!(
                "{} {:<17} worst {:.3e} (tol {:.0e}) over {} in {:.2}s: {}",
                if r.passed { "PASS" } else { "FAIL" },
                s.name(),
                r.worst,
                r.tolerance,
                r.instances,
                r.seconds,
                r.detail
            );
        }
        reports.push(r);
    }
    let report = Report {
        passed: reports.iter().all(|r| r.passed),
        grid: opts.grid,
        seed: opts.seed,
        fault: opts.fault,
        suites: reports,
    };
    let json = serde_json::to_string_pretty(&report)?;
    if let Some(path) = &args.report {
        std::fs::write(path, format!("{json}\n"))?;
    }
    if out.json {
        println!("{json}");
    }
    if report.passed {
        Ok(())
    } else {
        let failed: Vec<_> = report.suites.iter().filter(|r| !r.passed).map(|r| r.suite.name()).collect();
        Err(Failure {
            code: EXIT_VERIFY,
            error: anyhow!("verification failed: {}", failed.join(", ")),
        })
    }
}
