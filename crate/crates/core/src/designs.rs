//! Cyclic planar difference sets and the symmetric `(n, r, 1)` block designs
//! (projective planes of order `r - 1`) they develop into.
//!
//! A planar difference set mod `n = r(r-1) + 1` is a set of `r` residues whose
//! `r(r-1)` ordered differences hit every nonzero residue exactly once. Its
//! `n` cyclic shifts are the blocks of the design: every pair of points shares
//! exactly one block and every pair of blocks shares exactly one point.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DesignError {
    #[error("no ({n},{r},1) design exists")]
    NoDesign { n: usize, r: usize },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
}

/// Server count of the symmetric design with block size `r`.
pub fn plane_order_points(r: usize) -> usize {
    r * (r - 1) + 1
}

/// Planar difference set, kept sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DifferenceSet {
    modulus: usize,
    residues: Vec<usize>,
}

impl DifferenceSet {
    /// Validates both invariants: `n = r(r-1)+1` and λ = 1 difference coverage.
    pub fn new(modulus: usize, residues: impl IntoIterator<Item = usize>) -> Result<Self, DesignError> {
        let set: BTreeSet<usize> = residues.into_iter().collect();
        let residues: Vec<usize> = set.into_iter().collect();
        let r = residues.len();
        if r < 2 || modulus != plane_order_points(r) {
            return Err(DesignError::InvalidParam(format!(
                "{r} residues need modulus {}, got {modulus}",
                if r >= 1 { plane_order_points(r) } else { 1 }
            )));
        }
        if let Some(&x) = residues.iter().find(|&&x| x >= modulus) {
            return Err(DesignError::InvalidParam(format!("residue {x} not below {modulus}")));
        }
        let ds = Self { modulus, residues };
        if let Some(d) = ds.first_repeated_difference() {
            return Err(DesignError::InvalidParam(format!(
                "difference {d} occurs more than once mod {modulus}"
            )));
        }
        Ok(ds)
    }

    pub fn modulus(&self) -> usize {
        self.modulus
    }

    pub fn residues(&self) -> &[usize] {
        &self.residues
    }

    pub fn block_size(&self) -> usize {
        self.residues.len()
    }

    /// The set translated by `t` (mod n).
    pub fn shifted(&self, t: usize) -> Self {
        let mut residues: Vec<usize> = self.residues.iter().map(|x| (x + t) % self.modulus).collect();
        residues.sort_unstable();
        Self {
            modulus: self.modulus,
            residues,
        }
    }

    /// Lexicographically smallest translate that contains 0.
    pub fn min_shift(&self) -> Self {
        self.residues
            .iter()
            .map(|&x| self.shifted(self.modulus - x))
            .min_by(|a, b| a.residues.cmp(&b.residues))
            .expect("non-empty")
    }

    fn first_repeated_difference(&self) -> Option<usize> {
        let n = self.modulus;
        let mut seen = vec![false; n];
        seen[0] = true;
        for &a in &self.residues {
            for &b in &self.residues {
                if a != b {
                    let d = (a + n - b) % n;
                    if std::mem::replace(&mut seen[d], true) {
                        return Some(d);
                    }
                }
            }
        }
        None
    }
}

impl fmt::Display for DifferenceSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let items: Vec<String> = self.residues.iter().map(usize::to_string).collect();
        write!(f, "{{{}}} mod {}", items.join(","), self.modulus)
    }
}

/// Conventional representatives, each the smallest translate of itself that
/// contains 0. Checked against [`DifferenceSet::new`] on every lookup.
const KNOWN: &[(usize, &[usize])] = &[
    (2, &[0, 1]),
    (3, &[0, 1, 3]),
    (4, &[0, 1, 3, 9]),
    (5, &[0, 1, 6, 8, 18]),
    (6, &[0, 1, 3, 8, 12, 18]),
];

/// Difference set for block size `r`, from the built-in table when available,
/// otherwise by exhaustive search.
pub fn find_difference_set(r: usize) -> Result<DifferenceSet, DesignError> {
    if r < 2 {
        return Err(DesignError::InvalidParam(format!("r must be >= 2, got {r}")));
    }
    if let Some((_, residues)) = KNOWN.iter().find(|(k, _)| *k == r) {
        return Ok(DifferenceSet::new(plane_order_points(r), residues.iter().copied())
            .expect("built-in difference set is valid"));
    }
    search_difference_set(r)
}

/// Backtracking search, bypassing the table.
///
/// Every planar set has exactly one pair of residues at difference 1, so a
/// translate contains `{0, 1}`; the search fixes both and extends in
/// ascending order, keeping a bitmask of used differences and pruning on the
/// first repeat. The first hit is therefore the lexicographic minimum over
/// all translates and reflections. Exhausting the tree proves nonexistence.
pub fn search_difference_set(r: usize) -> Result<DifferenceSet, DesignError> {
    if r < 2 {
        return Err(DesignError::InvalidParam(format!("r must be >= 2, got {r}")));
    }
    let n = plane_order_points(r);
    let mut chosen = vec![0usize, 1];
    let mut used = vec![false; n];
    used[1] = true;
    used[n - 1] = true;
    if r == 2 {
        return DifferenceSet::new(n, chosen);
    }
    if extend(n, r, &mut chosen, &mut used) {
        DifferenceSet::new(n, chosen)
    } else {
        Err(DesignError::NoDesign { n, r })
    }
}

fn extend(n: usize, r: usize, chosen: &mut Vec<usize>, used: &mut [bool]) -> bool {
    if chosen.len() == r {
        return true;
    }
    let start = chosen.last().map_or(0, |&x| x + 1);
    // leave room for the remaining elements
    let last = n - (r - chosen.len());
    for cand in start..=last {
        let mut added = Vec::with_capacity(2 * chosen.len());
        let mut ok = true;
        for &x in chosen.iter() {
            let d = cand - x;
            let e = n - d;
            if used[d] || used[e] || d == e {
                ok = false;
                break;
            }
            used[d] = true;
            used[e] = true;
            added.push(d);
            added.push(e);
        }
        if ok {
            chosen.push(cand);
            if extend(n, r, chosen, used) {
                return true;
            }
            chosen.pop();
        }
        for d in added {
            used[d] = false;
        }
    }
    false
}

/// Block design over points `0..points`, each block sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockDesign {
    pub points: usize,
    pub blocks: Vec<Vec<usize>>,
    pub lambda: usize,
}

impl BlockDesign {
    pub fn block_size(&self) -> Option<usize> {
        self.blocks.first().map(Vec::len)
    }
}

/// Cyclic development: `blocks[t] = ds + t (mod n)` for `t = 0..n`.
pub fn expand_blocks(ds: &DifferenceSet) -> BlockDesign {
    let n = ds.modulus();
    let blocks = (0..n).map(|t| ds.shifted(t).residues).collect();
    BlockDesign {
        points: n,
        blocks,
        lambda: 1,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignRule {
    BlockShape,
    Symmetric,
    Replication,
    PairCoverage,
    BlockIntersection,
}

impl fmt::Display for DesignRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DesignRule::BlockShape => "block-shape",
            DesignRule::Symmetric => "symmetric",
            DesignRule::Replication => "replication",
            DesignRule::PairCoverage => "pair-coverage",
            DesignRule::BlockIntersection => "block-intersection",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: DesignRule,
    /// Offending pair of points or blocks, or a single index in `.0`.
    pub witness: (usize, usize),
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub passed: bool,
    pub violations: Vec<Violation>,
}

impl VerificationReport {
    pub fn violations_of(&self, rule: DesignRule) -> impl Iterator<Item = &Violation> {
        self.violations.iter().filter(move |v| v.rule == rule)
    }
}

/// Checks symmetric `(n, r, λ)` structure by brute force.
///
/// Block size `r` is taken from the first block. Every violated instance is
/// listed, not just the first.
pub fn verify_design(d: &BlockDesign) -> VerificationReport {
    let mut violations = Vec::new();
    let n = d.points;
    let r = d.block_size().unwrap_or(0);
    let lambda = d.lambda;

    let sets: Vec<BTreeSet<usize>> = d.blocks.iter().map(|b| b.iter().copied().collect()).collect();
    for (i, (b, s)) in d.blocks.iter().zip(&sets).enumerate() {
        if s.len() != b.len() || b.len() != r || s.iter().any(|&x| x >= n) {
            violations.push(Violation {
                rule: DesignRule::BlockShape,
                witness: (i, i),
                detail: format!("block {i} = {b:?} is not {r} distinct points below {n}"),
            });
        }
    }

    if d.blocks.len() != n {
        violations.push(Violation {
            rule: DesignRule::Symmetric,
            witness: (d.blocks.len(), n),
            detail: format!("{} blocks for {n} points", d.blocks.len()),
        });
    }

    let mut replication = vec![0usize; n];
    for s in &sets {
        for &x in s.iter().filter(|&&x| x < n) {
            replication[x] += 1;
        }
    }
    for (p, &c) in replication.iter().enumerate() {
        if c != r {
            violations.push(Violation {
                rule: DesignRule::Replication,
                witness: (p, p),
                detail: format!("point {p} lies in {c} blocks, expected {r}"),
            });
        }
    }

    for a in 0..n {
        for b in a + 1..n {
            let c = sets.iter().filter(|s| s.contains(&a) && s.contains(&b)).count();
            if c != lambda {
                violations.push(Violation {
                    rule: DesignRule::PairCoverage,
                    witness: (a, b),
                    detail: format!("pair ({a},{b}) covered by {c} blocks, expected {lambda}"),
                });
            }
        }
    }

    for i in 0..sets.len() {
        for j in i + 1..sets.len() {
            let c = sets[i].intersection(&sets[j]).count();
            if c != lambda {
                violations.push(Violation {
                    rule: DesignRule::BlockIntersection,
                    witness: (i, j),
                    detail: format!("blocks {i} and {j} meet in {c} points, expected {lambda}"),
                });
            }
        }
    }

    VerificationReport {
        passed: violations.is_empty(),
        violations,
    }
}

/// On-disk design file: `{"n", "r", "lambda", "residues", "blocks"}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignFile {
    pub n: usize,
    pub r: usize,
    pub lambda: usize,
    pub residues: Vec<usize>,
    pub blocks: Vec<Vec<usize>>,
}

impl DesignFile {
    pub fn from_difference_set(ds: &DifferenceSet) -> Self {
        let design = expand_blocks(ds);
        Self {
            n: ds.modulus(),
            r: ds.block_size(),
            lambda: design.lambda,
            residues: ds.residues().to_vec(),
            blocks: design.blocks,
        }
    }

    pub fn design(&self) -> BlockDesign {
        BlockDesign {
            points: self.n,
            blocks: self.blocks.clone(),
            lambda: self.lambda,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("design file serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fano() -> BlockDesign {
        expand_blocks(&find_difference_set(3).unwrap())
    }

    /// Independent λ = 1 check: count every ordered difference.
    fn covers_each_nonzero_once(n: usize, set: &[usize]) -> bool {
        let mut hits = vec![0; n];
        for &a in set {
            for &b in set {
                if a != b {
                    hits[(a + n - b) % n] += 1;
                }
            }
        }
        hits[1..].iter().all(|&h| h == 1)
    }

    #[test]
    fn small_orders() {
        assert_eq!(find_difference_set(2).unwrap().residues(), &[0, 1]);
        assert_eq!(find_difference_set(3).unwrap().residues(), &[0, 1, 3]);
        assert_eq!(find_difference_set(3).unwrap().modulus(), 7);
        let r5 = find_difference_set(5).unwrap();
        assert_eq!(r5.residues(), &[0, 1, 6, 8, 18]);
        assert_eq!(r5.modulus(), 21);
        assert!(covers_each_nonzero_once(21, r5.residues()));
    }

    #[test]
    fn table_entries_are_valid_and_min_shifted() {
        for &(r, residues) in KNOWN {
            let n = plane_order_points(r);
            assert!(covers_each_nonzero_once(n, residues), "r={r}");
            let ds = DifferenceSet::new(n, residues.iter().copied()).unwrap();
            assert_eq!(ds.min_shift(), ds, "r={r}");
        }
    }

    #[test]
    fn search_agrees_with_table_up_to_equivalence() {
        for r in 2..=6 {
            let found = search_difference_set(r).unwrap();
            let n = found.modulus();
            assert!(covers_each_nonzero_once(n, found.residues()));
            let table = find_difference_set(r).unwrap();
            let reflected =
                DifferenceSet::new(n, table.residues().iter().map(|&x| (n - x) % n)).unwrap();
            assert!(
                found.min_shift() == table || found.min_shift() == reflected.min_shift(),
                "r={r}: {found} vs {table}"
            );
        }
        assert_eq!(search_difference_set(5).unwrap().residues(), &[0, 1, 4, 14, 16]);
    }

    #[test]
    fn order_six_plane_does_not_exist() {
        assert_eq!(find_difference_set(7), Err(DesignError::NoDesign { n: 43, r: 7 }));
    }

    #[test]
    fn order_seven_found_by_search() {
        let ds = find_difference_set(8).unwrap();
        assert_eq!(ds.modulus(), 57);
        assert!(covers_each_nonzero_once(57, ds.residues()));
    }

    #[test]
    fn rejects_small_r() {
        assert!(matches!(find_difference_set(1), Err(DesignError::InvalidParam(_))));
        assert!(matches!(find_difference_set(0), Err(DesignError::InvalidParam(_))));
    }

    #[test]
    fn rejects_bad_sets() {
        assert!(DifferenceSet::new(7, [0, 1, 2]).is_err());
        assert!(DifferenceSet::new(8, [0, 1, 3]).is_err());
        assert!(DifferenceSet::new(7, [0, 1, 10]).is_err());
    }

    #[test]
    fn fano_blocks() {
        let d = fano();
        assert_eq!(d.blocks.len(), 7);
        assert_eq!(d.blocks[1], vec![1, 2, 4]);
        for i in 0..7 {
            for j in i + 1..7 {
                let common = d.blocks[i].iter().filter(|x| d.blocks[j].contains(x)).count();
                assert_eq!(common, 1, "blocks {i},{j}");
            }
        }
        assert!(verify_design(&d).passed);
    }

    #[test]
    fn r5_replication_number() {
        let d = expand_blocks(&find_difference_set(5).unwrap());
        for p in 0..21 {
            assert_eq!(d.blocks.iter().filter(|b| b.contains(&p)).count(), 5);
        }
    }

    #[test]
    fn tampered_fano_reports_pair_13() {
        let mut d = fano();
        d.blocks[0] = vec![0, 1, 2];
        let report = verify_design(&d);
        assert!(!report.passed);
        assert!(report
            .violations_of(DesignRule::PairCoverage)
            .any(|v| v.witness == (1, 3)));
    }

    #[test]
    fn duplicated_block_breaks_intersection() {
        let mut d = fano();
        d.blocks[4] = d.blocks[2].clone();
        let report = verify_design(&d);
        assert!(!report.passed);
        let v = report
            .violations_of(DesignRule::BlockIntersection)
            .find(|v| v.witness == (2, 4))
            .expect("duplicate pair flagged");
        assert!(v.detail.contains("meet in 3 points"));
    }

    #[test]
    fn wrong_block_count_is_not_symmetric() {
        let mut d = fano();
        d.blocks.pop();
        let report = verify_design(&d);
        assert!(report.violations_of(DesignRule::Symmetric).count() == 1);
    }

    #[test]
    fn json_shape() {
        let file = DesignFile::from_difference_set(&find_difference_set(3).unwrap());
        let json = file.to_json();
        assert!(json.starts_with(r#"{"n":7,"r":3,"lambda":1,"residues":[0,1,3],"blocks":[[0,1,3],[1,2,4]"#));
        assert_eq!(DesignFile::from_json(&json).unwrap(), file);
    }
}
