//! Command-line entry point.
//!
//! Exit status is 0 on success, 1 when the run itself fails and 2 for usage
//! or configuration errors.

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{RunConfig, Scenario};
use crate::output::write_outputs;
use crate::sweep;
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "searchbid",
    version,
    about = "Pricing-and-bidding experiments and search-cost estimation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Benchmarks and Q-learning over θ.
    ThetaSweep(RunArgs),
    /// Benchmarks and Q-learning over the commission rate.
    CommissionSweep(RunArgs),
    /// Benchmarks and Q-learning over the ad reserve price.
    ReserveSweep(RunArgs),
    /// θ sweep with own-bid and full-stateful learners.
    StatefulCompare(RunArgs),
    /// θ sweep with sellers of different quality.
    Asymmetric(RunArgs),
    /// Sweep over the utility penalty of the lower slot.
    RankEffect(RunArgs),
    /// Search-cost estimates per keyword from scraped CSVs.
    Estimate(RunArgs),
    /// Estimator recovery on synthetic panels.
    SyntheticRecovery(RunArgs),
    /// Check a configuration file and print its normalized form.
    ValidateConfig {
        path: PathBuf,
        /// Override a key, as KEY=VALUE. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Configuration file in key = value form.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sweep grid as start:stop:step, or a single value.
    #[arg(long)]
    grid: Option<String>,
    /// Learning sessions per grid point.
    #[arg(long)]
    sessions: Option<u64>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for CSV outputs.
    #[arg(long, env = "SEARCHBID_OUT", default_value = "results")]
    out: PathBuf,
    /// Worker threads; all cores when omitted.
    #[arg(long)]
    threads: Option<usize>,
    /// Override a configuration key, as KEY=VALUE. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Input directory for the estimate scenario.
    #[arg(long)]
    input: Option<PathBuf>,
}

fn split_assignments(set: &[String]) -> Result<Vec<(String, String)>> {
    set.iter()
        .map(|s| {
            s.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| {
                    crate::config::ConfigError::new(s.clone(), "expected KEY=VALUE").into()
                })
        })
        .collect()
}

fn read_config_file(path: Option<&PathBuf>) -> Result<String> {
    match path {
        Some(p) => fs::read_to_string(p).map_err(|e| Error::io(p, e)),
        None => Ok(String::new()),
    }
}

/// Configuration for a run: file, then `--set`, then the dedicated flags.
fn resolve(scenario: Scenario, args: &RunArgs) -> Result<RunConfig> {
    let text = read_config_file(args.config.as_ref())?;
    let mut overrides = split_assignments(&args.set)?;
    overrides.push(("scenario".into(), scenario.name().into()));
    if let Some(g) = &args.grid {
        overrides.push(("grid".into(), g.clone()));
    }
    if let Some(n) = args.sessions {
        overrides.push(("sessions".into(), n.to_string()));
    }
    if let Some(s) = args.seed {
        overrides.push(("seed".into(), s.to_string()));
    }
    if let Some(i) = &args.input {
        overrides.push(("input".into(), i.display().to_string()));
    }
    Ok(RunConfig::parse(&text, &overrides)?)
}

fn execute(scenario: Scenario, args: &RunArgs) -> Result<Vec<PathBuf>> {
    let cfg = resolve(scenario, args)?;
    let work = || -> Result<Vec<PathBuf>> {
        let tables = sweep::run(&cfg)?;
        write_outputs(&args.out, &cfg, &tables)
    };
    match args.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Format(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    }
}

fn report(e: &Error) -> i32 {
    eprintln!("searchbid: {e}");
    if e.is_usage() {
        EXIT_USAGE
    } else {
        EXIT_RUNTIME
    }
}

/// Runs the CLI on `args` (program name first) and returns the exit status.
pub fn main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let (scenario, args) = match &cli.command {
        Command::ValidateConfig { path, set } => {
            let checked = read_config_file(Some(path))
                .and_then(|text| Ok(RunConfig::parse(&text, &split_assignments(set)?)?));
            return match checked {
                Ok(cfg) => {
                    print!("{}", cfg.normalized());
                    EXIT_OK
                }
                Err(e) => report(&e),
            };
        }
        Command::ThetaSweep(a) => (Scenario::ThetaSweep, a),
        Command::CommissionSweep(a) => (Scenario::CommissionSweep, a),
        Command::ReserveSweep(a) => (Scenario::ReserveSweep, a),
        Command::StatefulCompare(a) => (Scenario::StatefulCompare, a),
        Command::Asymmetric(a) => (Scenario::Asymmetric, a),
        Command::RankEffect(a) => (Scenario::RankEffect, a),
        Command::Estimate(a) => (Scenario::Estimate, a),
        Command::SyntheticRecovery(a) => (Scenario::SyntheticRecovery, a),
    };
    match execute(scenario, args) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            EXIT_OK
        }
        Err(e) => report(&e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_flag_is_a_usage_error() {
        assert_eq!(main(["searchbid", "theta-sweep", "--bogus"]), EXIT_USAGE);
        assert_eq!(main(["searchbid", "no-such-scenario"]), EXIT_USAGE);
        assert_eq!(main(["searchbid"]), EXIT_USAGE);
    }

    #[test]
    fn bad_override_is_a_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        assert_eq!(
            main([
                "searchbid",
                "theta-sweep",
                "--out",
                out,
                "--set",
                "theta=1.2"
            ]),
            EXIT_USAGE
        );
        assert_eq!(
            main([
                "searchbid",
                "theta-sweep",
                "--out",
                out,
                "--set",
                "nonsense"
            ]),
            EXIT_USAGE
        );
        assert_eq!(
            main([
                "searchbid",
                "theta-sweep",
                "--out",
                out,
                "--grid",
                "0:2:0.5"
            ]),
            EXIT_USAGE
        );
    }

    #[test]
    fn missing_input_is_a_runtime_error() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        let missing = dir.path().join("nope");
        assert_eq!(
            main([
                "searchbid",
                "estimate",
                "--out",
                out,
                "--input",
                missing.to_str().unwrap()
            ]),
            EXIT_RUNTIME
        );
    }

    #[test]
    fn validate_config_checks_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let good = dir.path().join("good.cfg");
        fs::write(&good, "theta = 0.5\n").unwrap();
        assert_eq!(
            main([
                "searchbid".as_ref(),
                "validate-config".as_ref(),
                good.as_os_str()
            ]),
            EXIT_OK
        );
        let bad = dir.path().join("bad.cfg");
        fs::write(&bad, "theta = 1.2\n").unwrap();
        assert_eq!(
            main([
                "searchbid".as_ref(),
                "validate-config".as_ref(),
                bad.as_os_str()
            ]),
            EXIT_USAGE
        );
    }

    #[test]
    fn flags_override_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        fs::write(&path, "sessions = 3\nseed = 9\n").unwrap();
        let args = RunArgs {
            config: Some(path),
            grid: Some("0:1:0.5".into()),
            sessions: Some(4),
            seed: None,
            out: dir.path().into(),
            threads: None,
            set: vec!["alpha=0.1".into()],
            input: None,
        };
        let c = resolve(Scenario::ThetaSweep, &args).unwrap();
        assert_eq!((c.sessions, c.seed, c.alpha), (4, 9, 0.1));
        assert_eq!(c.sweep_grid().unwrap().values(), [0.0, 0.5, 1.0]);
    }
}
