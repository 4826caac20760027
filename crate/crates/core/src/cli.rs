//! Command-line front end of `rateless-sim`.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{self, ConfigFile};
use crate::engine::{run_all, sweep_configs, ExperimentConfig, MetricsReport};
use crate::error::{Error, Result};
use crate::oracle::{selftest, SelftestOptions};
use crate::output::{render, OutputFormat};

#[derive(Debug, Parser)]
#[command(name = "rateless-sim", version, about = "Downlink control with rateless codes under imperfect CSI")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one configuration per listed seed and strategy.
    Run(RunArgs),
    /// Sweep the configured axis over its values, seeds and strategies.
    Sweep(RunArgs),
    /// Check the optimizers and the quadrature against brute-force oracles.
    Selftest(SelftestArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Flat key=value config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a config key (repeatable; the last occurrence wins).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output file; standard output if absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    pub format: OutputFormat,
}

#[derive(Debug, Args)]
pub struct SelftestArgs {
    /// Use reduced suite sizes.
    #[arg(long)]
    pub quick: bool,
    /// Randomized instances per suite.
    #[arg(long)]
    pub instances: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code: 0 iff everything ran and passed.
pub fn parse_and_dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn load(args: &RunArgs) -> Result<ConfigFile> {
    match &args.config {
        Some(path) => config::load(path, &args.overrides),
        None => config::parse("", &args.overrides),
    }
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Run(args) => {
            let cfg = load(&args)?;
            let configs: Vec<ExperimentConfig> = cfg
                .seeds
                .iter()
                .flat_map(|&seed| {
                    cfg.strategies.iter().map(move |&strategy| (seed, strategy))
                })
                .map(|(seed, strategy)| ExperimentConfig {
                    seed,
                    strategy,
                    ..cfg.base.clone()
                })
                .collect();
            finish(&run_all(&configs)?, &args)
        }
        Command::Sweep(args) => {
            let cfg = load(&args)?;
            let axis = cfg.axis.ok_or_else(|| Error::BadValue {
                key: "axis".into(),
                reason: "sweep needs `axis` and `values` in the config".into(),
            })?;
            let configs = sweep_configs(&cfg.base, axis, &cfg.values, &cfg.seeds, &cfg.strategies)?;
            finish(&run_all(&configs)?, &args)
        }
        Command::Selftest(args) => {
            let mut opts = if args.quick {
                SelftestOptions::quick()
            } else {
                SelftestOptions::default()
            };
            if let Some(n) = args.instances {
                opts.instances = n;
            }
            if let Some(s) = args.seed {
                opts.seed = s;
            }
            let results = selftest(&opts);
            for r in &results {
                println!(
                    "{} {:<22} instances={:<6} worst={:.3e} tol={:.1e}",
                    if r.passed { "PASS" } else { "FAIL" },
                    r.name,
                    r.instances,
                    r.worst,
                    r.tolerance
                );
            }
            Ok(if results.iter().all(|r| r.passed) { 0 } else { 1 })
        }
    }
}

fn finish(reports: &[MetricsReport], args: &RunArgs) -> Result<i32> {
    let text = render(reports, args.format)?;
    match &args.output {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| Error::Io {
                    path: "<stdout>".into(),
                    reason: e.to_string(),
                })?;
        }
    }
    let mut code = 0;
    for r in reports.iter().filter(|r| !r.passed()) {
        let f = r.failure.as_ref();
        eprintln!(
            "invariant failure: strategy={} seed={} slot={} {}",
            r.config.strategy.name(),
            r.config.seed,
            f.map_or(0, |f| f.slot),
            f.map_or(String::new(), |f| f.reason.clone()),
        );
        code = 3;
    }
    Ok(code)
}
