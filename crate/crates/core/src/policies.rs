//! Non-adaptive dispatch: each arriving job gets `r` distinct servers chosen
//! without looking at queue state.

use crate::designs::{verify_design, BlockDesign};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("invalid policy config: {0}")]
    InvalidConfig(String),
    #[error("invalid policy state: {0}")]
    InvalidState(String),
}

/// `r` distinct servers, sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Assignment(Vec<usize>);

impl Assignment {
    pub fn servers(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, server: usize) -> bool {
        self.0.binary_search(&server).is_ok()
    }

    /// Size of the intersection of two sorted server sets.
    pub fn overlap(&self, other: &Assignment) -> usize {
        sorted_overlap(&self.0, &other.0)
    }
}

pub(crate) fn sorted_overlap(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut c) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                c += 1;
                i += 1;
                j += 1;
            }
        }
    }
    c
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyName {
    Random,
    RoundRobin,
    Bibd,
}

impl PolicyName {
    pub const ALL: [PolicyName; 3] = [PolicyName::Random, PolicyName::RoundRobin, PolicyName::Bibd];

    pub fn as_str(&self) -> &'static str {
        match self {
            PolicyName::Random => "random",
            PolicyName::RoundRobin => "round-robin",
            PolicyName::Bibd => "bibd",
        }
    }

    pub fn is_deterministic(&self) -> bool {
        !matches!(self, PolicyName::Random)
    }
}

impl fmt::Display for PolicyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyName {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(PolicyName::Random),
            "round-robin" | "rr" => Ok(PolicyName::RoundRobin),
            "bibd" => Ok(PolicyName::Bibd),
            other => Err(PolicyError::InvalidConfig(format!("unknown policy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolicyKind {
    /// Uniform `r`-subset per job.
    Random,
    /// Contiguous window `{c, .., c+r-1} mod n`, advancing `c` by `stride`.
    RoundRobin { stride: usize },
    /// Blocks of a symmetric design in cyclic order.
    Bibd { design: Arc<BlockDesign> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    pub n: usize,
    pub r: usize,
    pub seed: u64,
}

impl PolicyConfig {
    pub fn random(n: usize, r: usize, seed: u64) -> Self {
        Self {
            kind: PolicyKind::Random,
            n,
            r,
            seed,
        }
    }

    pub fn round_robin(n: usize, r: usize, stride: usize) -> Self {
        Self {
            kind: PolicyKind::RoundRobin { stride },
            n,
            r,
            seed: 0,
        }
    }

    /// `n` and `r` come from the design.
    pub fn bibd(design: BlockDesign) -> Self {
        Self {
            n: design.points,
            r: design.block_size().unwrap_or(0),
            kind: PolicyKind::Bibd {
                design: Arc::new(design),
            },
            seed: 0,
        }
    }

    pub fn name(&self) -> PolicyName {
        match self.kind {
            PolicyKind::Random => PolicyName::Random,
            PolicyKind::RoundRobin { .. } => PolicyName::RoundRobin,
            PolicyKind::Bibd { .. } => PolicyName::Bibd,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        let (n, r) = (self.n, self.r);
        if r == 0 || r > n {
            return Err(PolicyError::InvalidConfig(format!("need 1 <= r <= n, got r={r}, n={n}")));
        }
        match &self.kind {
            PolicyKind::Random => Ok(()),
            PolicyKind::RoundRobin { stride } => {
                if *stride == 0 || *stride > n {
                    Err(PolicyError::InvalidConfig(format!("stride {stride} outside 1..={n}")))
                } else {
                    Ok(())
                }
            }
            PolicyKind::Bibd { design } => {
                if design.points != n || design.blocks.len() != n {
                    return Err(PolicyError::InvalidConfig(format!(
                        "design has {} points / {} blocks, need {n}",
                        design.points,
                        design.blocks.len()
                    )));
                }
                if design.blocks.iter().any(|b| b.len() != r) {
                    return Err(PolicyError::InvalidConfig(format!("design blocks must have size {r}")));
                }
                let report = verify_design(design);
                if !report.passed {
                    return Err(PolicyError::InvalidConfig(format!(
                        "design fails verification: {}",
                        report.violations[0].detail
                    )));
                }
                Ok(())
            }
        }
    }
}

/// A running policy: configuration plus cursor and RNG state.
#[derive(Debug, Clone)]
pub struct Policy {
    cfg: PolicyConfig,
    cursor: usize,
    rng: ChaCha8Rng,
    // persistent permutation for partial Fisher-Yates
    perm: Vec<usize>,
}

impl Policy {
    pub fn new(cfg: PolicyConfig) -> Result<Self, PolicyError> {
        cfg.validate()?;
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            perm: (0..cfg.n).collect(),
            cursor: 0,
            cfg,
        })
    }

    /// Starts from an explicit cursor (round-robin start / BIBD block index).
    pub fn with_cursor(cfg: PolicyConfig, cursor: usize) -> Result<Self, PolicyError> {
        let mut p = Self::new(cfg)?;
        p.set_cursor(cursor)?;
        Ok(p)
    }

    pub fn set_cursor(&mut self, cursor: usize) -> Result<(), PolicyError> {
        if cursor >= self.cfg.n {
            return Err(PolicyError::InvalidState(format!(
                "cursor {cursor} outside 0..{}",
                self.cfg.n
            )));
        }
        self.cursor = cursor;
        Ok(())
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.cfg
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    /// Back to cursor 0 and a freshly seeded RNG.
    pub fn reset(&mut self) {
        self.cursor = 0;
        self.rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        self.perm.iter_mut().enumerate().for_each(|(i, p)| *p = i);
    }

    pub fn next_assignment(&mut self) -> Assignment {
        let mut out = Vec::with_capacity(self.cfg.r);
        self.next_into(&mut out);
        Assignment(out)
    }

    /// Allocation-free variant: overwrites `out` with the sorted server set.
    pub fn next_into(&mut self, out: &mut Vec<usize>) {
        let (n, r) = (self.cfg.n, self.cfg.r);
        out.clear();
        match &self.cfg.kind {
            PolicyKind::Random => {
                for i in 0..r {
                    let j = self.rng.random_range(i..n);
                    self.perm.swap(i, j);
                }
                out.extend_from_slice(&self.perm[..r]);
                out.sort_unstable();
            }
            PolicyKind::RoundRobin { stride } => {
                out.extend((0..r).map(|k| (self.cursor + k) % n));
                out.sort_unstable();
                self.cursor = (self.cursor + stride) % n;
            }
            PolicyKind::Bibd { design } => {
                out.extend_from_slice(&design.blocks[self.cursor]);
                out.sort_unstable();
                self.cursor = (self.cursor + 1) % n;
            }
        }
    }
}
