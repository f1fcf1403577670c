//! Command-line front end. Flags override the config file; exit codes are
//! 0 on success, 1 on numeric or validation failure and 2 on usage errors.

mod commands;
mod print;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{BumpsConfig, Config, VolUnits};
use crate::error::{Error, Result};

/// Environment variable holding the default output directory.
pub const OUT_ENV: &str = "GEOGREEKS_OUT";

#[derive(Debug, Parser)]
#[command(name = "geogreeks", version, about = "Connection-adjusted Greeks, liquidity penalties and backtests")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct GlobalArgs {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory for report files.
    #[arg(long, global = true, value_name = "DIR", env = OUT_ENV)]
    pub out: Option<PathBuf>,
    /// Seed for synthetic series.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Ridge parameter for connection calibration.
    #[arg(long, global = true, value_name = "X")]
    pub eta: Option<f64>,
    /// Finite-difference bumps: relative spot bump and vol bump in vol points.
    #[arg(long, global = true, value_name = "hS,hSigma", value_parser = parse_bumps)]
    pub bumps: Option<BumpsConfig>,
    /// Unit of the vol coordinate.
    #[arg(long, global = true, value_enum)]
    pub vol_units: Option<VolUnits>,
}

#[derive(Debug, Subcommand, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Price and Greeks of the configured instrument.
    Greeks,
    /// Fit a connection to the calibration instruments.
    Calibrate,
    /// Covariant Hessian under a configured, calibrated or liquidity connection.
    AdjustedGreeks,
    /// Impact matrix, hedge response, liquidity penalty and its connection.
    Liquidity,
    /// Transport a gradient, Hessian and connection between charts.
    Transform,
    /// Replay one-step P&L predictors over a market series.
    BacktestPnl,
    /// Replay least-cost hedging costs over a market series.
    BacktestCost,
    /// Reconstruct a metric from a connection field on a grid.
    ReconstructMetric,
}

fn parse_bumps(s: &str) -> std::result::Result<BumpsConfig, String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected `hS,hSigma`, got `{s}`"))?;
    let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}"));
    let b = BumpsConfig {
        spot_rel: num(a)?,
        vol_points: num(b)?,
    };
    if !(b.spot_rel > 0.0 && b.vol_points > 0.0) {
        return Err("bumps must be positive".into());
    }
    Ok(b)
}

/// Loads the config and applies flag overrides.
pub fn effective_config(args: &GlobalArgs) -> Result<Config> {
    let mut cfg = match &args.config {
        Some(p) => {
            if !p.is_file() {
                return Err(Error::Usage(format!("config file `{}` does not exist", p.display())));
            }
            Config::load(p)?
        }
        None => Config::default(),
    };
    if let Some(s) = args.seed {
        cfg.seed = Some(s);
    }
    if let Some(e) = args.eta {
        cfg.calibration.eta = e;
    }
    if let Some(b) = args.bumps {
        cfg.bumps = b;
    }
    if let Some(v) = args.vol_units {
        cfg.vol_units = v;
    }
    Ok(cfg)
}

/// Runs one subcommand, writing tables to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    let cfg = effective_config(&cli.global)?;
    let dir = || {
        cli.global
            .out
            .clone()
            .ok_or_else(|| Error::Usage(format!("this subcommand needs --out DIR or {OUT_ENV}")))
    };
    match cli.command {
        Command::Greeks => commands::greeks(&cfg, out),
        Command::Calibrate => commands::calibrate(&cfg, out),
        Command::AdjustedGreeks => commands::adjusted_greeks(&cfg, out),
        Command::Liquidity => commands::liquidity(&cfg, out),
        Command::Transform => commands::transform(&cfg, out),
        Command::BacktestPnl => commands::backtest_pnl(&cfg, &dir()?, out),
        Command::BacktestCost => commands::backtest_cost(&cfg, &dir()?, out),
        Command::ReconstructMetric => commands::reconstruct_metric(&cfg, &dir()?, out),
    }
}

/// Parses `argv` (including the program name), runs, and returns the exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run(&cli, &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            let _ = lock.flush();
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
