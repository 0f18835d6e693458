//! Subcommand implementations. Each returns its full output text; writing
//! it (and the manifest) is left to the caller.

use crate::cli::{parse_values, parse_warmup, Command, DesignCmd, IndicatorArgs, SimArgs, SweepIndicatorArgs};
use redsched_core::designs::plane_order_points;
use redsched_core::urns::{sweep_indicators, IndicatorRow, SweepParams, INDICATOR_CSV_HEADER, NO_DESIGN_MARKER};
use redsched_core::{
    estimate_indicators, expand_blocks, find_difference_set, run_replications, verify_design, DesignError, DesignFile,
    PolicyConfig, PolicyName, SimConfig,
};
use std::fmt::Write;
use std::fs;
use std::path::Path;

pub const SIM_CSV_HEADER: &str =
    "policy,n,r,mu1,q,p,lambda,reps,jobs,mean_queue_time,ci95,mean_response_time,util_mean,seed,unstable";

/// Load above which a warning is printed.
const WARN_LOAD: f64 = 0.95;

#[derive(Debug, PartialEq, Eq)]
pub enum Failure {
    Usage(String),
    Verification(String),
    NoDesign(String),
    Io(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Verification(_) => 1,
            Failure::NoDesign(_) => 2,
            Failure::Usage(_) => 64,
            Failure::Io(_) => 74,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Verification(m) | Failure::NoDesign(m) | Failure::Io(m) => m,
        }
    }
}

fn usage(e: impl ToString) -> Failure {
    Failure::Usage(e.to_string())
}

pub struct Output {
    pub text: String,
    pub seed: Option<u64>,
    /// Non-zero for a completed command that still failed (design verify).
    pub status: u8,
}

impl Output {
    fn ok(text: String, seed: Option<u64>) -> Self {
        Output { text, seed, status: 0 }
    }
}

pub fn execute(cmd: &Command) -> Result<Output, Failure> {
    match cmd {
        Command::Design(DesignCmd::Gen { r, .. }) => design_gen(*r),
        Command::Design(DesignCmd::Verify { file }) => design_verify(file),
        Command::Indicators(a) => indicators(a),
        Command::SweepIndicators(a) => sweep_indicators_cmd(a),
        Command::Simulate(a) => simulate(a, true),
        Command::Sweep(a) => simulate(a, false),
        Command::Replay(_) => Err(usage("replay cannot be nested")),
    }
}

fn no_design(e: DesignError) -> Failure {
    match e {
        DesignError::NoDesign { .. } => Failure::NoDesign(e.to_string()),
        DesignError::InvalidParam(m) => Failure::Usage(m),
    }
}

fn design_gen(r: usize) -> Result<Output, Failure> {
    let ds = find_difference_set(r).map_err(no_design)?;
    let mut text = DesignFile::from_difference_set(&ds).to_json();
    text.push('\n');
    Ok(Output::ok(text, None))
}

fn read_design(path: &Path) -> Result<DesignFile, Failure> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    DesignFile::from_json(&text).map_err(|e| usage(format!("{}: not a design file: {e}", path.display())))
}

fn design_verify(path: &Path) -> Result<Output, Failure> {
    let file = read_design(path)?;
    let design = file.design();
    let report = verify_design(&design);
    let mut text = format!(
        "design {}: n={} r={} lambda={} blocks={}\n",
        path.display(),
        file.n,
        file.r,
        file.lambda,
        file.blocks.len()
    );
    let mut passed = report.passed;
    if let Some(b) = file.blocks.iter().find(|b| b.len() != file.r) {
        passed = false;
        let _ = writeln!(text, "FAIL header: r={} but block {b:?} has size {}", file.r, b.len());
    }
    const SHOWN: usize = 20;
    for v in report.violations.iter().take(SHOWN) {
        let _ = writeln!(text, "FAIL {} witness=({}, {}): {}", v.rule, v.witness.0, v.witness.1, v.detail);
    }
    if report.violations.len() > SHOWN {
        let _ = writeln!(text, "... {} more violations", report.violations.len() - SHOWN);
    }
    text.push_str(if passed { "result: PASS\n" } else { "result: FAIL\n" });
    Ok(Output {
        text,
        seed: None,
        status: if passed { 0 } else { 1 },
    })
}

/// BIBD configuration from a design file (verified) or the built-in table.
fn bibd_policy(n: usize, r: usize, design_file: Option<&Path>) -> Result<PolicyConfig, Failure> {
    match design_file {
        Some(path) => {
            let file = read_design(path)?;
            let design = file.design();
            let report = verify_design(&design);
            if !report.passed {
                let v = &report.violations[0];
                return Err(Failure::Verification(format!(
                    "{}: not a valid design ({}: {})",
                    path.display(),
                    v.rule,
                    v.detail
                )));
            }
            let cfg = PolicyConfig::bibd(design);
            if cfg.n != n || cfg.r != r {
                return Err(usage(format!(
                    "design file is ({}, {}), run asks for n={n}, r={r}",
                    cfg.n, cfg.r
                )));
            }
            Ok(cfg)
        }
        None => {
            if n != plane_order_points(r) {
                return Err(usage(format!("bibd needs n = r(r-1)+1 = {}, got n={n}", plane_order_points(r))));
            }
            Ok(PolicyConfig::bibd(expand_blocks(&find_difference_set(r).map_err(no_design)?)))
        }
    }
}

/// `n` when given, else from the design file, else `r(r-1)+1`.
fn resolve_n(n: Option<usize>, r: usize, design_file: Option<&Path>) -> Result<usize, Failure> {
    if r == 0 {
        return Err(usage("r must be >= 1"));
    }
    Ok(match (n, design_file) {
        (Some(n), _) => n,
        (None, Some(path)) => read_design(path)?.n,
        (None, None) => plane_order_points(r),
    })
}

fn policy_for(
    name: PolicyName,
    n: usize,
    r: usize,
    seed: u64,
    stride: usize,
    design_file: Option<&Path>,
) -> Result<PolicyConfig, Failure> {
    let cfg = match name {
        PolicyName::Random => PolicyConfig::random(n, r, seed),
        PolicyName::RoundRobin => PolicyConfig::round_robin(n, r, stride),
        PolicyName::Bibd => bibd_policy(n, r, design_file)?,
    };
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

fn indicators(a: &IndicatorArgs) -> Result<Output, Failure> {
    let design_file = a.design_file.as_deref();
    let n = resolve_n(a.n, a.r, design_file)?;
    let balls = a.balls.unwrap_or(10 * n);
    let names = a.policy.names();
    let mut text = format!("{INDICATOR_CSV_HEADER}\n");
    for name in names.iter().copied() {
        let estimate = match policy_for(name, n, a.r, a.seed, a.stride, design_file) {
            Ok(cfg) => Some(estimate_indicators(&cfg, balls, a.lag, a.reps).map_err(usage)?),
            // with several policies the missing design is reported in-band
            Err(Failure::NoDesign(_)) if names.len() > 1 => None,
            Err(e) => return Err(e),
        };
        let row = IndicatorRow {
            policy: name,
            n,
            r: a.r,
            balls,
            lag: a.lag,
            estimate,
        };
        text.push_str(&row.to_csv());
        text.push('\n');
    }
    Ok(Output::ok(text, Some(a.seed)))
}

fn sweep_indicators_cmd(a: &SweepIndicatorArgs) -> Result<Output, Failure> {
    let params = SweepParams {
        balls: a.balls,
        lag: a.lag,
        reps: a.reps,
        seed: a.seed,
        stride: a.stride,
    };
    let rows = sweep_indicators(&a.r, &params).map_err(usage)?;
    let mut text = format!("{INDICATOR_CSV_HEADER}\n");
    for row in &rows {
        text.push_str(&row.to_csv());
        text.push('\n');
    }
    debug_assert!(rows.iter().all(|row| row.estimate.is_some() || row.to_csv().ends_with(NO_DESIGN_MARKER)));
    Ok(Output::ok(text, Some(a.seed)))
}

fn simulate(a: &SimArgs, single: bool) -> Result<Output, Failure> {
    let design_file = a.design_file.as_deref();
    let n = resolve_n(a.n, a.r, design_file)?;
    let mut base = SimConfig::new(n, a.r, a.mu1, a.q, a.p, 1.0, a.jobs).with_seed(a.seed);
    base.warmup_jobs = parse_warmup(&a.warmup, a.jobs).map_err(usage)?;
    base.validate().map_err(usage)?;
    let saturation = base.saturation_rate();

    let lambdas: Vec<f64> = match (&a.lambda, &a.load) {
        (Some(rates), None) => parse_values(rates).map_err(usage)?,
        (None, Some(loads)) => parse_values(loads).map_err(usage)?.into_iter().map(|f| f * saturation).collect(),
        _ => return Err(usage("give exactly one of --lambda and --load")),
    };
    if let Some(bad) = lambdas.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
        return Err(usage(format!("arrival rate must be positive, got {bad}")));
    }
    if single && lambdas.len() != 1 {
        return Err(usage(format!("simulate takes one arrival rate, got {}; use sweep", lambdas.len())));
    }
    for l in &lambdas {
        if l / saturation > WARN_LOAD {
            eprintln!(
                "warning: lambda={l} is {:.3} of saturation {saturation:.4}; results may not reach steady state",
                l / saturation
            );
        }
    }

    let policies = a
        .policy
        .names()
        .into_iter()
        .map(|name| policy_for(name, n, a.r, a.seed, a.stride, design_file))
        .collect::<Result<Vec<_>, _>>()?;

    let mut text = format!("{SIM_CSV_HEADER}\n");
    for policy in &policies {
        for &lambda in &lambdas {
            let cfg = SimConfig { lambda, ..base.clone() };
            let m = run_replications(&cfg, policy, a.reps).map_err(usage)?;
            let _ = writeln!(
                text,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                policy.name(),
                n,
                a.r,
                a.mu1,
                a.q,
                a.p,
                lambda,
                m.reps,
                cfg.total_jobs,
                m.mean_queue_time,
                m.ci95_queue,
                m.mean_response_time,
                m.mean_utilization(),
                a.seed,
                m.unstable
            );
        }
    }
    Ok(Output::ok(text, Some(a.seed)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(Failure::Verification(String::new()).exit_code(), 1);
        assert_eq!(Failure::NoDesign(String::new()).exit_code(), 2);
        assert_eq!(Failure::Usage(String::new()).exit_code(), 64);
    }

    #[test]
    fn gen_r7_has_no_design() {
        let err = design_gen(7).err().unwrap();
        assert_eq!(err, Failure::NoDesign("no (43,7,1) design exists".into()));
    }

    #[test]
    fn bibd_rejects_off_family_n() {
        assert!(matches!(bibd_policy(20, 5, None), Err(Failure::Usage(_))));
    }
}
