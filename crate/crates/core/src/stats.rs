//! Streaming statistics shared by the urn analyzer and the simulator.
//!
//! Everything here is a plain value type. [`RunningMoments`] merges exactly,
//! so replications can be reduced in any grouping.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("confidence interval needs at least 2 batches, got {0}")]
    TooFewBatches(usize),
    #[error("empty input")]
    EmptyInput,
}

/// Welford running mean / variance.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningMoments {
    count: u64,
    mean: f64,
    m2: f64,
}

impl RunningMoments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_slice(xs: &[f64]) -> Self {
        let mut rm = Self::new();
        for &x in xs {
            rm.update(x);
        }
        rm
    }

    #[inline]
    pub fn update(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    /// Combines two streams (Chan et al. pairwise update).
    pub fn merge(&self, other: &Self) -> Self {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let count = self.count + other.count;
        let delta = other.mean - self.mean;
        let (na, nb, n) = (self.count as f64, other.count as f64, count as f64);
        Self {
            count,
            mean: self.mean + delta * nb / n,
            m2: self.m2 + other.m2 + delta * delta * na * nb / n,
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero for fewer than two observations.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).max(0.0)
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    pub fn std_error(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

/// Confidence interval from (approximately independent) batch means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchMeansCI {
    pub batch_size: usize,
    pub batch_means: Vec<f64>,
    pub level: f64,
}

impl BatchMeansCI {
    pub fn new(batch_size: usize, batch_means: Vec<f64>) -> Self {
        Self {
            batch_size,
            batch_means,
            level: 0.95,
        }
    }

    /// Splits `samples` into `batches` contiguous batches of equal size,
    /// dropping the remainder at the front (oldest observations).
    pub fn from_samples(samples: &[f64], batches: usize) -> Self {
        let batches = batches.max(1);
        let batch_size = samples.len() / batches;
        if batch_size == 0 {
            return Self::new(0, Vec::new());
        }
        let skip = samples.len() - batch_size * batches;
        let means = samples[skip..]
            .chunks_exact(batch_size)
            .map(|c| c.iter().sum::<f64>() / batch_size as f64)
            .collect();
        Self::new(batch_size, means)
    }

    pub fn mean(&self) -> f64 {
        RunningMoments::from_slice(&self.batch_means).mean()
    }

    /// Student-t quantile times the standard error of the batch means.
    pub fn half_width(&self) -> Result<f64, StatsError> {
        ci_halfwidth(&self.batch_means, self.level)
    }
}

/// Two-sided t-interval half-width for the mean of `values`.
pub fn ci_halfwidth(values: &[f64], level: f64) -> Result<f64, StatsError> {
    if values.len() < 2 {
        return Err(StatsError::TooFewBatches(values.len()));
    }
    let rm = RunningMoments::from_slice(values);
    let dof = (values.len() - 1) as f64;
    Ok(student_t_quantile(0.5 + level / 2.0, dof) * rm.std_error())
}

/// `(min, max)` of an occupancy vector.
pub fn min_max(counts: &[u64]) -> Result<(u64, u64), StatsError> {
    let mut it = counts.iter().copied();
    let first = it.next().ok_or(StatsError::EmptyInput)?;
    Ok(it.fold((first, first), |(lo, hi), c| (lo.min(c), hi.max(c))))
}

// ---------------------------------------------------------------------------
// Student-t quantiles.
//
// Closed forms for 1 and 2 degrees of freedom; otherwise a Cornish-Fisher
// start from the normal quantile polished by Newton steps on the exact CDF
// (regularized incomplete beta).

/// Quantile function of Student's t with `dof` degrees of freedom.
pub fn student_t_quantile(p: f64, dof: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "probability out of range: {p}");
    assert!(dof > 0.0, "degrees of freedom must be positive");
    if p == 0.5 {
        return 0.0;
    }
    if dof == 1.0 {
        return (std::f64::consts::PI * (p - 0.5)).tan();
    }
    if dof == 2.0 {
        return (2.0 * p - 1.0) / (2.0 * p * (1.0 - p)).sqrt();
    }
    let z = normal_quantile(p);
    let (z3, z5, z7) = (z.powi(3), z.powi(5), z.powi(7));
    let mut t = z
        + (z3 + z) / (4.0 * dof)
        + (5.0 * z5 + 16.0 * z3 + 3.0 * z) / (96.0 * dof * dof)
        + (3.0 * z7 + 19.0 * z5 + 17.0 * z3 - 15.0 * z) / (384.0 * dof.powi(3));
    for _ in 0..50 {
        let err = student_t_cdf(t, dof) - p;
        let step = err / student_t_pdf(t, dof);
        let mut next = t - step;
        // damp overshoots in the tails
        let mut tries = 0;
        while (student_t_cdf(next, dof) - p).abs() > err.abs() && tries < 30 {
            next = t - step / 2f64.powi(tries + 1);
            tries += 1;
        }
        if (next - t).abs() <= 1e-13 * t.abs().max(1.0) {
            return next;
        }
        t = next;
    }
    t
}

pub fn student_t_cdf(t: f64, dof: f64) -> f64 {
    let x = dof / (dof + t * t);
    let tail = 0.5 * regularized_beta(x, dof / 2.0, 0.5);
    if t > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

pub fn student_t_pdf(t: f64, dof: f64) -> f64 {
    (ln_gamma((dof + 1.0) / 2.0)
        - ln_gamma(dof / 2.0)
        - 0.5 * (dof * std::f64::consts::PI).ln()
        - (dof + 1.0) / 2.0 * (1.0 + t * t / dof).ln())
    .exp()
}

/// Acklam's rational approximation to the standard normal quantile
/// (relative error below 1.2e-9).
pub fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

/// Lanczos approximation (g = 7, 9 terms).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + G + 0.5;
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized incomplete beta `I_x(a, b)` by Lentz's continued fraction.
pub fn regularized_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_cf(x, a, b) / a
    } else {
        1.0 - ln_front.exp() * beta_cf(1.0 - x, b, a) / b
    }
}

fn beta_cf(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=500 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}
