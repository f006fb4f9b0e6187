//! Tree-valued growth processes.
//!
//! Three dynamics produce nested sequences, one node per step:
//!
//! * digital growth: each step routes a fresh draw from a dyadic measure
//!   through the tree and occupies the exit node;
//! * rank insertion: each step draws a uniform rank and occupies the
//!   boundary node at that left-right position;
//! * a nested uniform chain: each step inserts one boundary node with
//!   probabilities coupling consecutive Catalan split laws, so the marginal
//!   at every size is exactly uniform.
//!
//! Uniform trees can also be sampled directly at a fixed size by recursive
//! Catalan splits.

use crate::measure::Measure;
use crate::seed::rng_from;
use crate::tree::BinaryTree;
use crate::word::Word;
use crate::{Error, Result};
use num::bigint::BigUint;
use rand::Rng;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::{Arc, Mutex, OnceLock};

/// One growth run: the insertion log `v_2, ..., v_n` (the first tree is
/// always the bare root) plus the final tree.
#[derive(Debug, Clone)]
pub struct Trajectory {
    model: String,
    seed: u64,
    log: Vec<Word>,
    tree: BinaryTree,
}

impl Trajectory {
    /// Number of nodes of the final tree.
    pub fn n(&self) -> usize {
        self.log.len() + 1
    }

    pub fn model(&self) -> &str {
        &self.model
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The inserted words, in order; entry `i` was inserted at step `i + 2`.
    pub fn insertions(&self) -> &[Word] {
        &self.log
    }

    pub fn final_tree(&self) -> &BinaryTree {
        &self.tree
    }

    /// Replays the log through plain insertion, erroring if any step is not
    /// a valid boundary insertion. Returns the rebuilt tree.
    pub fn replay(&self) -> Result<BinaryTree> {
        let mut t = BinaryTree::root_only();
        for v in &self.log {
            t.insert(v)?;
        }
        Ok(t)
    }

    /// First step at which `u` is present, or `None` if it never enters
    /// within this log. The root enters at step 1.
    pub fn entry_time(&self, u: &Word) -> Option<u64> {
        if u.is_empty() {
            return Some(1);
        }
        self.log.iter().position(|v| v == u).map(|i| i as u64 + 2)
    }

    /// Builds a trajectory from a raw insertion log, replaying it to
    /// validate every step.
    pub fn from_parts(model: &str, seed: u64, log: Vec<Word>) -> Result<Trajectory> {
        let mut tr = Trajectory { model: model.into(), seed, log, tree: BinaryTree::new() };
        tr.tree = tr.replay()?;
        Ok(tr)
    }

    /// Text form: a header line `n=<size> model=<tag> seed=<u64>` followed
    /// by one inserted word per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "n={} model={} seed={}", self.n(), self.model, self.seed).unwrap();
        for v in &self.log {
            writeln!(s, "{v}").unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Trajectory> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::BadTrajectoryFile("empty file".into()))?;
        let mut n: Option<usize> = None;
        let mut model = String::new();
        let mut seed = 0u64;
        for field in header.split_whitespace() {
            match field.split_once('=') {
                Some(("n", v)) => {
                    n = Some(v.parse().map_err(|_| {
                        Error::BadTrajectoryFile(format!("bad n in header: {header}"))
                    })?)
                }
                Some(("model", v)) => model = v.to_string(),
                Some(("seed", v)) => {
                    seed = v.parse().map_err(|_| {
                        Error::BadTrajectoryFile(format!("bad seed in header: {header}"))
                    })?
                }
                _ => return Err(Error::BadTrajectoryFile(format!("bad header: {header}"))),
            }
        }
        let n = n.ok_or_else(|| Error::BadTrajectoryFile(format!("missing n: {header}")))?;
        let log: Vec<Word> = lines.map(|l| l.trim().parse()).collect::<Result<_>>()?;
        if log.len() + 1 != n {
            return Err(Error::BadTrajectoryFile(format!(
                "header says n={n} but {} insertions follow",
                log.len()
            )));
        }
        let mut tr = Trajectory { model, seed, log, tree: BinaryTree::new() };
        tr.tree = tr.replay()?;
        Ok(tr)
    }
}

/// A growth dynamic plus its parameters.
#[derive(Debug, Clone)]
pub enum GrowthModel {
    /// Digital growth driven by a dyadic measure.
    Dst(Measure),
    /// Rank insertion.
    Bst,
    /// The nested chain with uniform marginals.
    Remy,
    /// Direct sampling of a uniform tree at each requested size
    /// (not incremental).
    CatalanDirect,
}

impl GrowthModel {
    pub fn tag(&self) -> &'static str {
        match self {
            GrowthModel::Dst(_) => "dst",
            GrowthModel::Bst => "bst",
            GrowthModel::Remy => "remy",
            GrowthModel::CatalanDirect => "catalan",
        }
    }

    /// Grows a trajectory of `n` nodes. Errors for the non-incremental
    /// direct sampler.
    pub fn grow(&self, n: usize, seed: u64) -> Result<Trajectory> {
        let mut rng = rng_from(seed);
        let mut tr = match self {
            GrowthModel::Dst(m) => dst_grow(m, n, &mut rng),
            GrowthModel::Bst => bst_grow(n, &mut rng),
            GrowthModel::Remy => remy_grow(n, &mut rng),
            GrowthModel::CatalanDirect => {
                return Err(Error::NotIncremental(self.tag().into()))
            }
        }?;
        tr.seed = seed;
        Ok(tr)
    }

    /// Final tree only; for the direct sampler this draws a fresh uniform
    /// tree of size `n`.
    pub fn grow_tree(&self, n: usize, seed: u64) -> Result<BinaryTree> {
        let mut rng = rng_from(seed);
        match self {
            GrowthModel::Dst(m) => dst_grow_tree(m, n, &mut rng),
            GrowthModel::Bst => bst_grow_tree(n, &mut rng),
            GrowthModel::Remy => Ok(remy_grow(n, &mut rng)?.tree),
            GrowthModel::CatalanDirect => Ok(uniform_tree(n, &mut rng)),
        }
    }
}

fn grown(model: &str, log: Vec<Word>, tree: BinaryTree) -> Trajectory {
    Trajectory { model: model.into(), seed: 0, log, tree }
}

/// Digital growth: step `k` draws an input sequence from `mu` lazily and
/// inserts the boundary node where it exits the current tree. Each input
/// consumes only the bits needed to exit, from its own derived stream.
pub fn dst_grow(mu: &Measure, n: usize, rng: &mut impl Rng) -> Result<Trajectory> {
    let mut tree = BinaryTree::root_only();
    let mut log = Vec::with_capacity(n.saturating_sub(1));
    for _ in 1..n {
        let mut input = mu.sample_path(rng_from(rng.next_u64()));
        let v = tree.insert_exit(&mut input)?;
        log.push(v);
    }
    Ok(grown("dst", log, tree))
}

/// [`dst_grow`] without the insertion log; same law, same rng consumption.
pub fn dst_grow_tree(mu: &Measure, n: usize, rng: &mut impl Rng) -> Result<BinaryTree> {
    let mut tree = BinaryTree::root_only();
    for _ in 1..n {
        let mut input = mu.sample_path(rng_from(rng.next_u64()));
        tree.insert_exit(&mut input)?;
    }
    Ok(tree)
}

/// Rank insertion: at size `k` the rank is uniform on `1..=k+1` (the exact
/// law of the rank of a fresh continuous value among `k+1`), and the new
/// node is the boundary node at that left-right position.
pub fn bst_grow(n: usize, rng: &mut impl Rng) -> Result<Trajectory> {
    let mut tree = BinaryTree::root_only();
    let mut log = Vec::with_capacity(n.saturating_sub(1));
    for k in 1..n {
        let r = rng.random_range(1..=k as u64 + 1);
        log.push(tree.insert_boundary_rank(r)?);
    }
    Ok(grown("bst", log, tree))
}

pub fn bst_grow_tree(n: usize, rng: &mut impl Rng) -> Result<BinaryTree> {
    let mut tree = BinaryTree::root_only();
    for k in 1..n {
        let r = rng.random_range(1..=k as u64 + 1);
        tree.insert_boundary_rank(r)?;
    }
    Ok(tree)
}

/// Rank insertion driven by an explicit stream of distinct values: the
/// `k`-th value's rank among the first `k` decides the position. With
/// i.i.d. continuous inputs this has the same law as [`bst_grow`].
pub fn bst_grow_from_values(values: &[f64], n: usize) -> Result<Trajectory> {
    if n > 0 && values.len() < n {
        return Err(Error::SequenceTooShort { need: n, got: values.len() });
    }
    let mut tree = BinaryTree::root_only();
    let mut log = Vec::with_capacity(n.saturating_sub(1));
    let mut sorted: Vec<f64> = Vec::with_capacity(n);
    if n > 0 {
        sorted.push(values[0]);
    }
    for (k, &x) in values.iter().enumerate().take(n).skip(1) {
        let pos = sorted.partition_point(|&y| y < x);
        if pos < sorted.len() && sorted[pos] == x {
            return Err(Error::TiedValues(k));
        }
        sorted.insert(pos, x);
        // Rank among the k+1 values seen so far, 1-based.
        log.push(tree.insert_boundary_rank(pos as u64 + 1)?);
    }
    Ok(grown("values", log, tree))
}

/// Exact Catalan number `C_n = binom(2n, n) / (n + 1)`.
pub fn catalan(n: u64) -> BigUint {
    let mut c = BigUint::from(1u8);
    for k in 0..n {
        // C_{k+1} = C_k * 2(2k+1) / (k+2), always exact.
        c = c * BigUint::from(2 * (2 * k + 1)) / BigUint::from(k + 2);
    }
    c
}

/// Left-size pmf for a uniform tree of size `m`:
/// `P(L = a) = C_a C_{m-1-a} / C_m`, by the multiplicative recurrence.
fn split_pmf(m: u64) -> Vec<f64> {
    let m = m as usize;
    let mut p = vec![0.0; m];
    p[0] = (m as f64 + 1.0) / (2.0 * (2.0 * m as f64 - 1.0));
    for a in 1..m {
        let (af, mf) = (a as f64, m as f64);
        p[a] = p[a - 1] * (2.0 * af - 1.0) * (mf - af + 1.0)
            / ((af + 1.0) * (2.0 * mf - 2.0 * af - 1.0));
    }
    p
}

/// Sizes up to this bound get a memoized split CDF table.
const SPLIT_MEMO_CAP: u64 = 2048;

fn split_cdf_table(m: u64) -> Arc<[f64]> {
    static TABLES: OnceLock<Mutex<HashMap<u64, Arc<[f64]>>>> = OnceLock::new();
    let tables = TABLES.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = tables.lock().unwrap();
    guard
        .entry(m)
        .or_insert_with(|| {
            let mut cdf = split_pmf(m);
            for i in 1..cdf.len() {
                cdf[i] += cdf[i - 1];
            }
            cdf.into()
        })
        .clone()
}

/// `(P(L <= a), P(L = a))` for a uniform tree of size `m`. For large `m`
/// the sum runs from whichever end is shorter, using the symmetry
/// `P(L = a) = P(L = m-1-a)`.
fn split_cdf_pmf(m: u64, a: u64) -> (f64, f64) {
    debug_assert!(a < m);
    if m <= SPLIT_MEMO_CAP {
        let cdf = split_cdf_table(m);
        let lo = if a == 0 { 0.0 } else { cdf[a as usize - 1] };
        return (cdf[a as usize], cdf[a as usize] - lo);
    }
    if 2 * a <= m - 1 {
        split_prefix(m, a)
    } else if a == m - 1 {
        (1.0, split_prefix(m, 0).1)
    } else {
        // The tail beyond a mirrors the prefix up to m-2-a.
        let (sum, _) = split_prefix(m, m - 2 - a);
        let (_, at) = split_prefix(m, m - 1 - a);
        (1.0 - sum, at)
    }
}

/// Sum of the split pmf of size `m` over `0..=a`, plus the pmf at `a`.
fn split_prefix(m: u64, a: u64) -> (f64, f64) {
    let mf = m as f64;
    let mut term = (mf + 1.0) / (2.0 * (2.0 * mf - 1.0));
    let mut sum = term;
    for j in 1..=a {
        let jf = j as f64;
        term *= (2.0 * jf - 1.0) * (mf - jf + 1.0) / ((jf + 1.0) * (2.0 * mf - 2.0 * jf - 1.0));
        sum += term;
    }
    (sum, term)
}

/// Draws a left-subtree size for a uniform tree of `m` nodes.
fn sample_split(m: u64, rng: &mut impl Rng) -> u64 {
    debug_assert!(m >= 1);
    if m == 1 {
        return 0;
    }
    let r: f64 = rng.random();
    if m <= SPLIT_MEMO_CAP {
        let cdf = split_cdf_table(m);
        let a = cdf.partition_point(|&c| c < r) as u64;
        return a.min(m - 1);
    }
    let mf = m as f64;
    let mut term = (mf + 1.0) / (2.0 * (2.0 * mf - 1.0));
    let mut sum = term;
    let mut a = 0u64;
    while sum < r && a < m - 1 {
        a += 1;
        let af = a as f64;
        term *= (2.0 * af - 1.0) * (mf - af + 1.0) / ((af + 1.0) * (2.0 * mf - 2.0 * af - 1.0));
        sum += term;
    }
    a
}

/// Samples a uniform tree of `n` nodes by recursive Catalan splits.
pub fn uniform_tree(n: usize, rng: &mut impl Rng) -> BinaryTree {
    BinaryTree::from_split(n as u64, |m| sample_split(m, rng))
}

/// Probability that the step growing a size-`m` subtree with left size `a`
/// sends the new node left. This is the monotone one-step coupling between
/// the split laws at sizes m and m+1; the interlacing
/// `F_{m+1}(a) <= F_m(a) <= F_{m+1}(a+1)` keeps it in [0,1].
fn grow_left_prob(m: u64, a: u64) -> f64 {
    let (f_m, pmf) = split_cdf_pmf(m, a);
    let (f_m1, _) = split_cdf_pmf(m + 1, a);
    if pmf <= 0.0 {
        return 0.5;
    }
    ((f_m - f_m1) / pmf).clamp(0.0, 1.0)
}

/// One step of the nested uniform chain: descends from the root, at each
/// node deciding by [`grow_left_prob`] which side receives the new node,
/// and inserts at the first empty slot reached.
pub(crate) fn remy_insert(tree: &mut BinaryTree, rng: &mut impl Rng) -> Result<Word> {
    let mut path = Word::root();
    {
        let mut cur = tree.root_ref().expect("chain starts from the root tree");
        loop {
            let m = cur.count();
            let a = cur.child_count(0);
            let go_left = rng.random::<f64>() < grow_left_prob(m, a);
            let bit = u8::from(!go_left);
            path.push(bit);
            match cur.child(bit) {
                Some(c) => cur = c,
                None => break,
            }
        }
    }
    tree.insert(&path)?;
    Ok(path)
}

/// The nested chain whose marginal at every size is uniform: a growth-form
/// counterpart of the classical uniform sampler, which relabels addresses
/// when it pushes subtrees down and therefore does not grow word-sets.
/// Steps cost O(subtree sizes along the descent), so whole runs are
/// quadratic in `n`; fine for the moderate sizes it is meant for.
pub fn remy_grow(n: usize, rng: &mut impl Rng) -> Result<Trajectory> {
    let mut tree = BinaryTree::root_only();
    let mut log = Vec::with_capacity(n.saturating_sub(1));
    for _ in 1..n {
        log.push(remy_insert(&mut tree, rng)?);
    }
    Ok(grown("remy", log, tree))
}

/// Probability (and its log) that digital growth under `mu` produces
/// exactly this nested sequence: the product of the cylinder masses of the
/// inserted nodes.
pub fn trajectory_probability(mu: &Measure, tr: &Trajectory) -> (f64, f64) {
    let mut p = 1.0;
    let mut lp = 0.0;
    for v in tr.insertions() {
        p *= mu.mass(v);
        lp += mu.log_mass(v);
    }
    (p, lp)
}

/// Brute-force total probability of all `n`-step trajectories under `mu`;
/// equals 1 for any probability measure. Exponential in `n`, small `n` only.
pub fn trajectory_probability_total(mu: &Measure, n: usize) -> f64 {
    fn rec(mu: &Measure, tree: &BinaryTree, steps_left: usize) -> f64 {
        if steps_left == 0 {
            return 1.0;
        }
        let mut total = 0.0;
        for v in tree.external_boundary() {
            let mass = mu.mass(&v);
            if mass > 0.0 {
                let mut next = tree.clone();
                next.insert(&v).expect("boundary insertion");
                total += mass * rec(mu, &next, steps_left - 1);
            }
        }
        total
    }
    rec(mu, &BinaryTree::root_only(), n.saturating_sub(1))
}

/// Summary of repeated uniform-tree sampling at one size: the left-subtree
/// size histogram and how much mass sits in the middle of the split range.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct UniformSplitReport {
    pub n: usize,
    pub reps: u64,
    pub seed: u64,
    pub histogram: Vec<u64>,
    /// Empirical probability that the left share lies in (1/4, 3/4); under
    /// the split law this mass drains to the extremes as `n` grows.
    pub p_mid: f64,
}

/// Samples `reps` uniform trees of `n` nodes (replicate-seeded, parallel in
/// spirit but cheap enough to run serially) and reports the top split.
pub fn uniform_split_experiment(n: usize, reps: u64, seed: u64) -> UniformSplitReport {
    use crate::seed::replicate_seed;
    let mut histogram = vec![0u64; n.max(1)];
    for r in 0..reps {
        let mut rng = rng_from(replicate_seed(seed, r));
        let tree = uniform_tree(n, &mut rng);
        let left = tree.child_counts(&Word::root()).map_or(0, |(l, _)| l);
        histogram[left as usize] += 1;
    }
    let mut mid = 0u64;
    for (a, &c) in histogram.iter().enumerate() {
        let share = a as f64 / n as f64;
        if share > 0.25 && share < 0.75 {
            mid += c;
        }
    }
    UniformSplitReport { n, reps, seed, histogram, p_mid: mid as f64 / reps as f64 }
}

/// All trees with exactly `n` nodes, by recursive composition. `C_n` trees;
/// small `n` only.
pub fn enumerate_trees(n: usize) -> Vec<BinaryTree> {
    if n == 0 {
        return vec![BinaryTree::new()];
    }
    let mut out = Vec::new();
    for a in 0..n {
        for left in enumerate_trees(a) {
            for right in enumerate_trees(n - 1 - a) {
                let mut words = vec![Word::root()];
                words.extend(left.node_words().iter().map(|w| Word::root().child(0).concat(w)));
                words.extend(right.node_words().iter().map(|w| Word::root().child(1).concat(w)));
                out.push(BinaryTree::from_words(words).expect("composed tree is prefix stable"));
            }
        }
    }
    out
}
