//! Redundancy scheduling for systems with sporadic data-intensive jobs.
//!
//! Each arriving job is queued at `r` of `n` servers and runs on whichever
//! copy starts first; the rest are cancelled on start. The crate provides
//!
//! - [`designs`]: cyclic planar difference sets and the symmetric block
//!   designs behind the BIBD dispatch policy,
//! - [`policies`]: random, round-robin and BIBD server-set generators,
//! - [`urns`]: the arrival-only (urns and balls) model with the load
//!   balancing factor (LBF) and redundancy diversity factor (RDF),
//! - [`simcore`]: the queueing simulator,
//! - [`stats`]: streaming moments and confidence intervals.

pub mod designs;
pub mod policies;
pub mod simcore;
pub mod stats;
pub mod urns;

pub use designs::{
    expand_blocks, find_difference_set, verify_design, BlockDesign, DesignError, DesignFile,
    DifferenceSet, VerificationReport,
};
pub use policies::{Assignment, Policy, PolicyConfig, PolicyKind, PolicyName};
pub use simcore::{run, run_replications, MetricsRecord, SimConfig};
pub use urns::{estimate_indicators, run_only_arrival, IndicatorEstimate};

/// SplitMix64 finalizer over `(seed, stream)`: independent-looking child
/// seeds for replications and substreams.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
