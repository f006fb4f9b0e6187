//! Local increment processes: which subtree of a node grows at each step
//! after the node enters, encoded as -1 (left), +1 (right), 0 (elsewhere).
//!
//! Under digital growth with a full-support measure these sequences are
//! i.i.d. with a pmf given by the child cylinder masses; for a mixture of
//! such laws they are exchangeable. The diagnostics here test that with
//! finite-sample permutation tests (non-falsification, not proof) and check
//! the exact reconstruction identity between increments and subtree counts.

use crate::growth::Trajectory;
use crate::measure::Measure;
use crate::tree::BinaryTree;
use crate::word::Word;
use crate::{Error, Result};
use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Zero};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// The increment sequence observed at one node.
#[derive(Debug, Clone)]
pub struct IncrementProcess {
    node: Word,
    /// Entry step of the node.
    origin: u64,
    values: Vec<i8>,
}

impl IncrementProcess {
    pub fn node(&self) -> &Word {
        &self.node
    }

    pub fn origin(&self) -> u64 {
        self.origin
    }

    pub fn values(&self) -> &[i8] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// A pmf on {-1, 0, +1}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pmf3 {
    pub minus: f64,
    pub zero: f64,
    pub plus: f64,
}

impl Pmf3 {
    pub fn as_array(&self) -> [f64; 3] {
        [self.minus, self.zero, self.plus]
    }
}

/// Reads the increments at `u` off a trajectory: entry `i` is +1/-1/0
/// according as the word inserted at step `origin + i + 1` lies weakly
/// below the right child, the left child, or neither. At most `horizon`
/// entries.
pub fn extract_increments(
    tr: &Trajectory,
    u: &Word,
    horizon: usize,
) -> Result<IncrementProcess> {
    let origin = tr
        .entry_time(u)
        .ok_or_else(|| Error::NeverEntered(u.to_string()))?;
    let mut values = Vec::new();
    // Step k inserts log entry k - 2.
    for k in (origin + 1)..=(tr.n() as u64) {
        if values.len() >= horizon {
            break;
        }
        let v = &tr.insertions()[(k - 2) as usize];
        values.push(if u.is_strict_prefix_of(v) {
            if v.bit(u.len()) == 1 {
                1
            } else {
                -1
            }
        } else {
            0
        });
    }
    Ok(IncrementProcess { node: u.clone(), origin, values })
}

/// The increment pmf under digital growth with measure `mu`:
/// `(mass(u0), 1 - mass(u0) - mass(u1), mass(u1))`. Requires positive mass
/// at `u`.
pub fn increment_pmf(mu: &Measure, u: &Word) -> Result<Pmf3> {
    if mu.mass(u) <= 0.0 {
        return Err(Error::ZeroMassNode(u.to_string()));
    }
    let minus = mu.mass(&u.child(0));
    let plus = mu.mass(&u.child(1));
    Ok(Pmf3 { minus, zero: 1.0 - minus - plus, plus })
}

/// Relative frequencies of -1, 0, +1 in an observed process.
pub fn empirical_pmf(proc: &IncrementProcess) -> Pmf3 {
    assert!(!proc.is_empty(), "empirical pmf of an empty process");
    let n = proc.len() as f64;
    let mut counts = [0u64; 3];
    for &v in proc.values() {
        counts[(v + 1) as usize] += 1;
    }
    Pmf3 {
        minus: counts[0] as f64 / n,
        zero: counts[1] as f64 / n,
        plus: counts[2] as f64 / n,
    }
}

/// Exact bookkeeping identity: after `i` increments the subtree count at
/// the node equals 1 plus the number of nonzero increments so far. Checked
/// against an independent replay of the log through tree insertion.
pub fn verify_reconstruction(tr: &Trajectory, proc: &IncrementProcess) -> Result<bool> {
    let mut tree = BinaryTree::root_only();
    let mut k = 1u64;
    // Replay to the entry step.
    while k < proc.origin() {
        tree.insert(&tr.insertions()[(k - 1) as usize])?;
        k += 1;
    }
    if tree.subtree_count(proc.node()) != 1 {
        return Ok(false);
    }
    let mut nonzero = 0u64;
    for &y in proc.values() {
        tree.insert(&tr.insertions()[(k - 1) as usize])?;
        k += 1;
        if y != 0 {
            nonzero += 1;
        }
        if tree.subtree_count(proc.node()) != 1 + nonzero {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Report of the permutation exchangeability diagnostic.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExchangeabilityReport {
    pub n: usize,
    pub block_len: usize,
    pub num_shuffles: usize,
    pub statistic: f64,
    pub p_value: f64,
}

const MAX_BLOCK_LEN: usize = 8;

fn pattern_counts(values: &[i8], block_len: usize) -> Vec<u64> {
    let cells = 3usize.pow(block_len as u32);
    let mut counts = vec![0u64; cells];
    for block in values.chunks_exact(block_len) {
        let code = block.iter().fold(0usize, |acc, &v| acc * 3 + (v + 1) as usize);
        counts[code] += 1;
    }
    counts
}

/// Chi-square-style discrepancy between the observed distribution of
/// disjoint length-`block_len` patterns and the product of the sequence's
/// symbol frequencies.
fn pattern_statistic(values: &[i8], block_len: usize, symbol_freq: &[f64; 3]) -> f64 {
    let counts = pattern_counts(values, block_len);
    let blocks = (values.len() / block_len) as f64;
    let mut stat = 0.0;
    for (code, &o) in counts.iter().enumerate() {
        let mut p = 1.0;
        let mut c = code;
        for _ in 0..block_len {
            p *= symbol_freq[c % 3];
            c /= 3;
        }
        let e = blocks * p;
        if e > 0.0 {
            let d = o as f64 - e;
            stat += d * d / e;
        }
    }
    stat
}

/// Permutation test of exchangeability: the observed pattern discrepancy is
/// compared against its null distribution over random permutations of the
/// sequence (which preserve symbol frequencies). Exchangeability predicts a
/// super-uniform p-value; an ordered sequence is rejected decisively.
pub fn exchangeability_test(
    values: &[i8],
    block_len: usize,
    num_shuffles: usize,
    rng: &mut impl Rng,
) -> Result<ExchangeabilityReport> {
    if block_len == 0 || block_len > MAX_BLOCK_LEN {
        return Err(Error::SequenceTooShort { need: 1, got: block_len });
    }
    if values.len() < 2 * block_len {
        return Err(Error::SequenceTooShort { need: 2 * block_len, got: values.len() });
    }
    let n = values.len() as f64;
    let mut freq = [0.0f64; 3];
    for &v in values {
        freq[(v + 1) as usize] += 1.0 / n;
    }
    let observed = pattern_statistic(values, block_len, &freq);
    let mut scratch = values.to_vec();
    let mut at_least = 0usize;
    for _ in 0..num_shuffles {
        scratch.shuffle(rng);
        if pattern_statistic(&scratch, block_len, &freq) >= observed {
            at_least += 1;
        }
    }
    let p_value = (1 + at_least) as f64 / (num_shuffles + 1) as f64;
    Ok(ExchangeabilityReport {
        n: values.len(),
        block_len,
        num_shuffles,
        statistic: observed,
        p_value,
    })
}

/// Increment processes at a boundary partition, aligned from the last entry
/// time: each step has exactly one nonzero coordinate, -1 or +1.
#[derive(Debug, Clone)]
pub struct CombinedProcess {
    cells: Vec<Word>,
    /// Last entry time among the cells.
    rho: u64,
    /// One entry per step: (cell index, sign).
    steps: Vec<(u32, i8)>,
}

impl CombinedProcess {
    pub fn cells(&self) -> &[Word] {
        &self.cells
    }

    pub fn d(&self) -> usize {
        self.cells.len()
    }

    pub fn rho(&self) -> u64 {
        self.rho
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn steps(&self) -> &[(u32, i8)] {
        &self.steps
    }

    /// How many steps landed in each cell.
    pub fn cell_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.d()];
        for &(j, _) in &self.steps {
            counts[j as usize] += 1;
        }
        counts
    }

    /// Dense rows, one per step, with exactly one nonzero entry each.
    pub fn to_rows(&self) -> Vec<Vec<i8>> {
        self.steps
            .iter()
            .map(|&(j, s)| {
                let mut row = vec![0i8; self.d()];
                row[j as usize] = s;
                row
            })
            .collect()
    }
}

/// Checks that the words are the boundary of some finite nonempty tree:
/// pairwise prefix-incomparable, none the root, and cylinder masses under
/// the fair-coin measure summing to exactly 1.
pub fn validate_boundary_partition(cells: &[Word]) -> Result<()> {
    if cells.is_empty() {
        return Err(Error::NotBoundaryPartition("empty cell list".into()));
    }
    let mut kraft = BigRational::zero();
    for (i, u) in cells.iter().enumerate() {
        if u.is_empty() {
            return Err(Error::NotBoundaryPartition(
                "the root is not a boundary node of a nonempty tree".into(),
            ));
        }
        for v in &cells[i + 1..] {
            if u.is_prefix_of(v) || v.is_prefix_of(u) {
                return Err(Error::NotBoundaryPartition(format!(
                    "cells {u:?} and {v:?} are prefix-comparable"
                )));
            }
        }
        kraft += BigRational::new(BigInt::one(), BigInt::one() << u.len());
    }
    if kraft != BigRational::one() {
        return Err(Error::NotBoundaryPartition(format!(
            "cylinders cover total mass {kraft}, not 1"
        )));
    }
    Ok(())
}

/// Findings at one node of an increment experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeIncrementReport {
    pub node: Word,
    pub origin: u64,
    pub horizon: usize,
    pub pmf_expected: Pmf3,
    pub pmf_observed: Pmf3,
    /// Permutation p-value of the exchangeability diagnostic.
    pub p_value: f64,
    /// Each observed frequency within the 5-sigma binomial band.
    pub pmf_ok: bool,
    /// Exact subtree-count reconstruction identity held at every step.
    pub reconstruction_ok: bool,
    pub pass: bool,
}

/// A full increment experiment over one digital-growth run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IncrementExperimentReport {
    pub measure: String,
    pub seed: u64,
    pub horizon: usize,
    pub block_len: usize,
    pub num_shuffles: usize,
    pub n: usize,
    pub nodes: Vec<NodeIncrementReport>,
    pub passed: bool,
}

/// Significance level of the per-run exchangeability gate; about one seed
/// in a hundred fails it by construction.
pub const EXCHANGEABILITY_LEVEL: f64 = 0.01;

/// Grows one digital-growth trajectory just long enough that every node has
/// entered and then `horizon` more steps, and runs the per-node increment
/// diagnostics: pmf against the closed form (5-sigma binomial bands), the
/// permutation exchangeability test, and the exact reconstruction identity.
pub fn increment_experiment(
    mu: &Measure,
    nodes: &[Word],
    horizon: usize,
    block_len: usize,
    num_shuffles: usize,
    seed: u64,
) -> Result<IncrementExperimentReport> {
    use crate::seed::rng_from;
    use rand::RngCore;

    let mut min_mass = f64::INFINITY;
    for u in nodes {
        let m = mu.mass(u);
        if m <= 0.0 {
            return Err(Error::ZeroMassNode(u.to_string()));
        }
        min_mass = min_mass.min(m);
    }
    // Entry times are sums of geometrics; this cap leaves the probability
    // of a missed entry negligible.
    let entry_cap = 1_000 + (200.0 / min_mass).ceil() as usize;

    let mut rng = rng_from(seed);
    let mut tree = BinaryTree::root_only();
    let mut log: Vec<Word> = Vec::new();
    while !nodes.iter().all(|u| tree.contains(u)) {
        if log.len() >= entry_cap {
            let missing = nodes.iter().find(|u| !tree.contains(u)).unwrap();
            return Err(Error::NeverEntered(missing.to_string()));
        }
        let mut input = mu.sample_path(rng_from(rng.next_u64()));
        log.push(tree.insert_exit(&mut input)?);
    }
    for _ in 0..horizon {
        let mut input = mu.sample_path(rng_from(rng.next_u64()));
        log.push(tree.insert_exit(&mut input)?);
    }
    let tr = Trajectory::from_parts("dst", seed, log)?;

    let mut reports = Vec::with_capacity(nodes.len());
    let mut shuffle_rng = rng_from(crate::seed::splitmix64(seed, 0x0b10c5));
    for u in nodes {
        let proc = extract_increments(&tr, u, horizon)?;
        let pmf_expected = increment_pmf(mu, u)?;
        let pmf_observed = empirical_pmf(&proc);
        let len = proc.len() as u64;
        let pmf_ok = pmf_observed
            .as_array()
            .iter()
            .zip(pmf_expected.as_array())
            .all(|(o, e)| (o - e).abs() <= crate::stats::binomial_band(e, len, 5.0));
        let exch = exchangeability_test(proc.values(), block_len, num_shuffles, &mut shuffle_rng)?;
        let reconstruction_ok = verify_reconstruction(&tr, &proc)?;
        let pass = pmf_ok && reconstruction_ok && exch.p_value > EXCHANGEABILITY_LEVEL;
        reports.push(NodeIncrementReport {
            node: u.clone(),
            origin: proc.origin(),
            horizon: proc.len(),
            pmf_expected,
            pmf_observed,
            p_value: exch.p_value,
            pmf_ok,
            reconstruction_ok,
            pass,
        });
    }
    let passed = reports.iter().all(|r| r.pass);
    Ok(IncrementExperimentReport {
        measure: mu.to_string(),
        seed,
        horizon,
        block_len,
        num_shuffles,
        n: tr.n(),
        nodes: reports,
        passed,
    })
}

/// Combines the increment processes at a boundary partition into one
/// multi-coordinate process, aligned from the last entry time.
pub fn combine_partition_process(
    tr: &Trajectory,
    partition: &[Word],
) -> Result<CombinedProcess> {
    validate_boundary_partition(partition)?;
    let mut rho = 0u64;
    for u in partition {
        let tau = tr
            .entry_time(u)
            .ok_or_else(|| Error::NeverEntered(u.to_string()))?;
        rho = rho.max(tau);
    }
    let mut steps = Vec::new();
    for k in (rho + 1)..=(tr.n() as u64) {
        let v = &tr.insertions()[(k - 2) as usize];
        let mut hit: Option<(u32, i8)> = None;
        for (j, u) in partition.iter().enumerate() {
            if u.is_strict_prefix_of(v) {
                debug_assert!(hit.is_none(), "cells have disjoint cylinders");
                let sign = if v.bit(u.len()) == 1 { 1 } else { -1 };
                hit = Some((j as u32, sign));
            }
        }
        // Every node inserted after rho lies strictly below exactly one
        // cell: all ancestors of cells are already present.
        let (j, sign) = hit.expect("insertion after rho lies below one cell");
        steps.push((j, sign));
    }
    Ok(CombinedProcess { cells: partition.to_vec(), rho, steps })
}
