//! Arrival-only model: urns are queues, balls are jobs, nothing departs.
//!
//! After `T` jobs each placed redundantly in `r` urns, the load balancing
//! factor is `E[min count] / E[max count]` (a ratio of expectations) and the
//! redundancy diversity factor is `1 / E[X^2]`, where `X` is the number of
//! urns shared by the assignments of jobs `t` and `t + lag`.

use crate::derive_seed;
use crate::designs::{expand_blocks, find_difference_set, plane_order_points, DesignError};
use crate::policies::{sorted_overlap, Policy, PolicyConfig, PolicyError, PolicyName};
use crate::stats::{min_max, normal_quantile, RunningMoments};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UrnError {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// Balls per urn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OccupancyVector {
    pub counts: Vec<u64>,
}

impl OccupancyVector {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn min_max(&self) -> (u64, u64) {
        min_max(&self.counts).expect("at least one urn")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OnlyArrivalRun {
    pub occupancy: OccupancyVector,
    /// `|A_t ∩ A_{t+lag}|` for `t = 0 .. T - lag`.
    pub overlaps: Vec<usize>,
}

/// Throws `balls` jobs through the policy (seeded from `policy.seed`).
pub fn run_only_arrival(policy: &PolicyConfig, balls: usize, lag: usize) -> Result<OnlyArrivalRun, UrnError> {
    if lag == 0 || balls <= lag {
        return Err(UrnError::InvalidParam(format!(
            "need T > lag >= 1 for at least one overlap sample, got T={balls}, lag={lag}"
        )));
    }
    let mut policy = Policy::new(policy.clone())?;
    let n = policy.config().n;
    let mut counts = vec![0u64; n];
    let mut overlaps = Vec::with_capacity(balls - lag);
    // assignments of the last lag + 1 jobs, indexed by t mod (lag + 1)
    let mut ring: Vec<Vec<usize>> = vec![Vec::new(); lag + 1];
    for t in 0..balls {
        let mut servers = std::mem::take(&mut ring[t % (lag + 1)]);
        policy.next_into(&mut servers);
        for &k in &servers {
            counts[k] += 1;
        }
        if t >= lag {
            overlaps.push(sorted_overlap(&ring[(t - lag) % (lag + 1)], &servers));
        }
        ring[t % (lag + 1)] = servers;
    }
    Ok(OnlyArrivalRun {
        occupancy: OccupancyVector { counts },
        overlaps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorEstimate {
    pub lbf: f64,
    pub lbf_ci95: f64,
    /// `+inf` when every overlap sample is zero.
    pub rdf: f64,
    pub rdf_ci95: f64,
    pub balls: usize,
    pub reps: usize,
    pub lag: usize,
}

impl IndicatorEstimate {
    pub fn lbf_std_error(&self) -> f64 {
        self.lbf_ci95 / z95()
    }

    pub fn rdf_std_error(&self) -> f64 {
        self.rdf_ci95 / z95()
    }
}

fn z95() -> f64 {
    normal_quantile(0.975)
}

/// LBF and RDF over `reps` replications.
///
/// Deterministic policies are run once whatever `reps` says. Replication
/// `k` of the random policy uses seed `derive_seed(policy.seed, k)`.
/// Intervals are normal approximations over replications: delta method for
/// the LBF ratio, first-order propagation through `1/x` for the RDF.
pub fn estimate_indicators(
    policy: &PolicyConfig,
    balls: usize,
    lag: usize,
    reps: usize,
) -> Result<IndicatorEstimate, UrnError> {
    if reps == 0 {
        return Err(UrnError::InvalidParam("reps must be >= 1".into()));
    }
    let reps = if policy.name().is_deterministic() { 1 } else { reps };
    let per_rep: Vec<(f64, f64, f64)> = (0..reps)
        .into_par_iter()
        .map(|k| {
            let cfg = policy.clone().with_seed(derive_seed(policy.seed, k as u64));
            let run = run_only_arrival(&cfg, balls, lag)?;
            let (lo, hi) = run.occupancy.min_max();
            let x2 = run.overlaps.iter().map(|&x| (x * x) as f64).sum::<f64>() / run.overlaps.len() as f64;
            Ok((lo as f64, hi as f64, x2))
        })
        .collect::<Result<_, UrnError>>()?;

    let mins = RunningMoments::from_slice(&per_rep.iter().map(|t| t.0).collect::<Vec<_>>());
    let maxs = RunningMoments::from_slice(&per_rep.iter().map(|t| t.1).collect::<Vec<_>>());
    let x2 = RunningMoments::from_slice(&per_rep.iter().map(|t| t.2).collect::<Vec<_>>());

    let lbf = mins.mean() / maxs.mean();
    let resid = RunningMoments::from_slice(&per_rep.iter().map(|t| t.0 - lbf * t.1).collect::<Vec<_>>());
    let lbf_ci95 = z95() * resid.std_error() / maxs.mean();

    let (rdf, rdf_ci95) = if x2.mean() == 0.0 {
        (f64::INFINITY, 0.0)
    } else {
        (1.0 / x2.mean(), z95() * x2.std_error() / (x2.mean() * x2.mean()))
    };
    Ok(IndicatorEstimate {
        lbf,
        lbf_ci95,
        rdf,
        rdf_ci95,
        balls,
        reps,
        lag,
    })
}

/// `1 / E[X^2]` for `X ~ Hypergeometric(N = n, K = r, draws = r)`, the
/// overlap of two independent uniform `r`-subsets.
pub fn closed_form_rdf_random(n: usize, r: usize) -> Result<f64, UrnError> {
    if r == 0 || r > n {
        return Err(UrnError::InvalidParam(format!("need 1 <= r <= n, got r={r}, n={n}")));
    }
    let (nf, rf) = (n as f64, r as f64);
    let mean = rf * rf / nf;
    let var = if n == 1 {
        0.0
    } else {
        rf * (rf / nf) * (1.0 - rf / nf) * (nf - rf) / (nf - 1.0)
    };
    Ok(1.0 / (var + mean * mean))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepParams {
    /// Balls per replication; `None` means `10 n`.
    pub balls: Option<usize>,
    pub lag: usize,
    pub reps: usize,
    pub seed: u64,
    pub stride: usize,
}

impl Default for SweepParams {
    fn default() -> Self {
        Self {
            balls: None,
            lag: 1,
            reps: 1000,
            seed: 1,
            stride: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorRow {
    pub policy: PolicyName,
    pub n: usize,
    pub r: usize,
    pub balls: usize,
    pub lag: usize,
    /// `None` when no design exists (BIBD only).
    pub estimate: Option<IndicatorEstimate>,
}

pub const INDICATOR_CSV_HEADER: &str = "policy,n,r,T,lag,reps,lbf,lbf_ci95,rdf,rdf_ci95";
pub const NO_DESIGN_MARKER: &str = "NoDesign";

impl IndicatorRow {
    pub fn to_csv(&self) -> String {
        match &self.estimate {
            Some(e) => format!(
                "{},{},{},{},{},{},{},{},{},{}",
                self.policy, self.n, self.r, self.balls, self.lag, e.reps, e.lbf, e.lbf_ci95, e.rdf, e.rdf_ci95
            ),
            None => format!(
                "{},{},{},{},{},0,{m},{m},{m},{m}",
                self.policy,
                self.n,
                self.r,
                self.balls,
                self.lag,
                m = NO_DESIGN_MARKER
            ),
        }
    }
}

/// Policy configuration for `name` on the `n = r(r-1)+1` family.
pub fn family_policy(name: PolicyName, r: usize, stride: usize, seed: u64) -> Result<PolicyConfig, DesignError> {
    let n = plane_order_points(r);
    Ok(match name {
        PolicyName::Random => PolicyConfig::random(n, r, seed),
        PolicyName::RoundRobin => PolicyConfig::round_robin(n, r, stride),
        PolicyName::Bibd => PolicyConfig::bibd(expand_blocks(&find_difference_set(r)?)),
    })
}

/// One row per `(r, policy)`, policies in random, round-robin, BIBD order,
/// with `n = r(r-1)+1`.
pub fn sweep_indicators(r_values: &[usize], params: &SweepParams) -> Result<Vec<IndicatorRow>, UrnError> {
    let mut rows = Vec::with_capacity(3 * r_values.len());
    for &r in r_values {
        if r < 2 {
            return Err(UrnError::InvalidParam(format!("r must be >= 2, got {r}")));
        }
        let n = plane_order_points(r);
        let balls = params.balls.unwrap_or(10 * n);
        for name in PolicyName::ALL {
            let estimate = match family_policy(name, r, params.stride, params.seed) {
                Ok(cfg) => Some(estimate_indicators(&cfg, balls, params.lag, params.reps)?),
                Err(DesignError::NoDesign { .. }) => None,
                Err(e) => return Err(UrnError::InvalidParam(e.to_string())),
            };
            rows.push(IndicatorRow {
                policy: name,
                n,
                r,
                balls,
                lag: params.lag,
                estimate,
            });
        }
    }
    Ok(rows)
}
