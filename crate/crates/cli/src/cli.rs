//! Command-line surface.

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use redsched_core::PolicyName;
use serde::Serialize;
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(
    name = "redsched",
    version,
    about = "Redundancy scheduling: block designs, load indicators and queueing simulation",
    args_override_self = true
)]
pub struct Cli {
    /// Plain-text `key=value` file of flag values; flags on the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Generate or verify a cyclic (n, r, 1) block design.
    #[command(subcommand)]
    Design(DesignCmd),
    /// Estimate LBF and RDF in the arrival-only model.
    Indicators(IndicatorArgs),
    /// LBF and RDF for every policy over a list of redundancy levels.
    SweepIndicators(SweepIndicatorArgs),
    /// Simulate the queueing system at one arrival rate.
    Simulate(SimArgs),
    /// Simulate the queueing system over a list or range of arrival rates.
    Sweep(SimArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignCmd {
    /// Write the design for block size r as JSON.
    Gen {
        #[arg(long)]
        r: usize,
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Check a design file; exit 0 iff it is a valid (n, r, 1) design.
    Verify {
        #[arg(long, value_name = "PATH")]
        file: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyChoice {
    Random,
    #[value(alias = "rr")]
    RoundRobin,
    Bibd,
    All,
}

impl PolicyChoice {
    pub fn names(self) -> Vec<PolicyName> {
        match self {
            PolicyChoice::Random => vec![PolicyName::Random],
            PolicyChoice::RoundRobin => vec![PolicyName::RoundRobin],
            PolicyChoice::Bibd => vec![PolicyName::Bibd],
            PolicyChoice::All => PolicyName::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct IndicatorArgs {
    #[arg(long, value_enum, default_value = "all")]
    pub policy: PolicyChoice,
    /// Servers; defaults to r(r-1)+1.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub r: usize,
    /// Balls thrown per replication; defaults to 10n.
    #[arg(long = "T", value_name = "BALLS")]
    pub balls: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub lag: usize,
    #[arg(long, default_value_t = 1000)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Round-robin window advance per arrival.
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    /// BIBD design to use instead of the built-in one.
    #[arg(long, value_name = "PATH")]
    pub design_file: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepIndicatorArgs {
    /// Comma-separated redundancy levels; n = r(r-1)+1 for each.
    #[arg(long, value_delimiter = ',', required = true)]
    pub r: Vec<usize>,
    #[arg(long = "T", value_name = "BALLS")]
    pub balls: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub lag: usize,
    #[arg(long, default_value_t = 1000)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
#[command(group(ArgGroup::new("rate").required(true).args(["lambda", "load"])))]
pub struct SimArgs {
    #[arg(long, value_enum, default_value = "all")]
    pub policy: PolicyChoice,
    /// Servers; defaults to r(r-1)+1.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 5)]
    pub r: usize,
    /// Service rate of regular jobs.
    #[arg(long, default_value_t = 10.0)]
    pub mu1: f64,
    /// Slowdown of data-intensive jobs.
    #[arg(long, default_value_t = 10.0)]
    pub q: f64,
    /// Probability that a job is data-intensive.
    #[arg(long, default_value_t = 0.1)]
    pub p: f64,
    /// Arrival rates: `x`, `x,y,...` or `lo:hi:step`.
    #[arg(long, visible_alias = "lambdas", value_name = "RATES")]
    pub lambda: Option<String>,
    /// Arrival rates as fractions of saturation n/E[S], same forms as --lambda.
    #[arg(long, value_name = "LOADS")]
    pub load: Option<String>,
    /// Jobs per replication, warmup included (`2000000` or `2e6`).
    #[arg(long, value_parser = parse_count, default_value = "2000000")]
    pub jobs: u64,
    /// Jobs discarded at the start: a count or a percentage such as `10%`.
    #[arg(long, default_value = "10%")]
    pub warmup: String,
    #[arg(long, default_value_t = 10)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    #[arg(long, value_name = "PATH")]
    pub design_file: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ReplayArgs {
    #[arg(long, value_name = "PATH")]
    pub manifest: PathBuf,
    /// Write the regenerated output here (with a fresh manifest).
    #[arg(long, value_name = "PATH", conflicts_with = "check")]
    pub out: Option<PathBuf>,
    /// Compare against the recorded output; exit 1 if it differs.
    #[arg(long)]
    pub check: bool,
}

impl Command {
    pub fn out(&self) -> Option<&PathBuf> {
        match self {
            Command::Design(DesignCmd::Gen { out, .. }) => out.as_ref(),
            Command::Design(DesignCmd::Verify { .. }) | Command::Replay(_) => None,
            Command::Indicators(a) => a.out.as_ref(),
            Command::SweepIndicators(a) => a.out.as_ref(),
            Command::Simulate(a) | Command::Sweep(a) => a.out.as_ref(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Command::Design(DesignCmd::Gen { .. }) => "design gen",
            Command::Design(DesignCmd::Verify { .. }) => "design verify",
            Command::Indicators(_) => "indicators",
            Command::SweepIndicators(_) => "sweep-indicators",
            Command::Simulate(_) => "simulate",
            Command::Sweep(_) => "sweep",
            Command::Replay(_) => "replay",
        }
    }
}

/// Non-negative integer, also in scientific notation (`2e6`).
pub fn parse_count(s: &str) -> Result<u64, String> {
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.fract() == 0.0 && v <= u64::MAX as f64 => Ok(v as u64),
        _ => Err(format!("expected a non-negative integer, got {s:?}")),
    }
}

/// `x`, `x,y,...` or inclusive `lo:hi:step`.
pub fn parse_values(s: &str) -> Result<Vec<f64>, String> {
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("not a number: {t:?}"));
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [single] => single.split(',').map(num).collect(),
        [lo, hi, step] => {
            let (lo, hi, step) = (num(lo)?, num(hi)?, num(step)?);
            if step.is_nan() || step <= 0.0 || !lo.is_finite() || !hi.is_finite() || hi < lo {
                return Err(format!("range {s:?} needs lo <= hi and step > 0"));
            }
            let count = ((hi - lo) / step + 1e-9).floor() as usize;
            Ok((0..=count).map(|k| lo + k as f64 * step).collect())
        }
        _ => Err(format!("expected x, x,y,... or lo:hi:step, got {s:?}")),
    }
}

/// Warmup as a job count: `N` or `P%` of `jobs`.
pub fn parse_warmup(s: &str, jobs: u64) -> Result<u64, String> {
    match s.trim().strip_suffix('%') {
        Some(pct) => match pct.trim().parse::<f64>() {
            Ok(p) if (0.0..100.0).contains(&p) => Ok((jobs as f64 * p / 100.0).floor() as u64),
            _ => Err(format!("warmup percentage must be in [0, 100), got {s:?}")),
        },
        None => parse_count(s),
    }
}
