//! Dyadic measures on infinite bit-sequences.
//!
//! A measure is represented by its mass oracle `u -> mass of the cylinder at
//! u`, additive over children, together with the conditional oracle
//! `q(u) = mass(u1)/mass(u)`. Sampling and digital growth work entirely
//! through `q`, so deep paths never multiply tiny floats; masses are products
//! of conditionals used for reporting, with a log-space variant for depth
//! beyond anything float products can express.

use crate::seed::{fold, mix64, unit_open};
use crate::tree::{BinaryTree, Routing};
use crate::word::{BitSource, Word};
use crate::{Error, Result};
use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Zero};
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;

/// Cap on cylinder enumeration depth (2^20 cells is the practical limit).
pub const MAX_CYLINDER_DEPTH: u32 = 20;

/// Tolerance for accepting a table's normalization.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// A probability measure on infinite bit-sequences, determined by its
/// cylinder masses.
#[derive(Clone, Debug)]
pub enum Measure {
    /// Fair-coin product measure: mass `2^{-|u|}`.
    Uniform,
    /// Biased-coin product measure with success probability `p` in (0,1).
    Bernoulli(f64),
    /// Unit mass on a single eventually-periodic sequence.
    Point(PointMeasure),
    /// The measure a finite tree embeds to: uniform over its boundary
    /// cylinders with uniform continuation below them.
    Boundary(BoundaryMeasure),
    /// A realization of the random limit of rank-insertion growth: one
    /// independent uniform stick-break per node, derived from a seed.
    BstLimit(BstLimitMeasure),
    /// Explicit masses at a fixed depth, uniform splitting below.
    Table(TableMeasure),
}

impl Measure {
    pub fn uniform() -> Self {
        Measure::Uniform
    }

    pub fn bernoulli(p: f64) -> Result<Self> {
        // p = 0 or 1 would not have full support.
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::BadProbability(p));
        }
        Ok(Measure::Bernoulli(p))
    }

    /// Point mass on the sequence obtained by repeating `pattern` forever.
    pub fn point_periodic(pattern: Word) -> Result<Self> {
        if pattern.is_empty() {
            return Err(Error::EmptyPointPattern);
        }
        Ok(Measure::Point(PointMeasure { pattern }))
    }

    pub fn boundary(tree: BinaryTree) -> Result<Self> {
        if tree.is_empty() {
            return Err(Error::EmptyTree);
        }
        Ok(Measure::Boundary(BoundaryMeasure { tree }))
    }

    pub fn bst_limit(seed: u64) -> Self {
        Measure::BstLimit(BstLimitMeasure { seed })
    }

    /// Draws a fresh realization of the rank-insertion limit measure. The
    /// returned object is deterministic: the same queries always get the
    /// same answers, so it can serve as a fixed input to digital growth.
    pub fn sample_bst_limit(rng: &mut impl RngCore) -> Self {
        Measure::bst_limit(rng.next_u64())
    }

    pub fn table(masses: Vec<f64>) -> Result<Self> {
        Ok(Measure::Table(TableMeasure::new(masses)?))
    }

    /// Parses the measure mini-syntax: `uniform`, `bernoulli:<p>`,
    /// `point:<bits>`, `table:<path>`, `bst-limit:<seed>`.
    pub fn parse_spec(spec: &str) -> Result<Self> {
        let bad = |why: &str| Error::BadMeasureSpec(spec.to_string(), why.to_string());
        match spec.split_once(':') {
            None => match spec {
                "uniform" => Ok(Measure::Uniform),
                _ => Err(bad("unknown measure kind")),
            },
            Some(("bernoulli", p)) => {
                let p: f64 = p.parse().map_err(|_| bad("cannot parse probability"))?;
                Measure::bernoulli(p)
            }
            Some(("point", bits)) => {
                let w: Word = bits.parse()?;
                Measure::point_periodic(w)
            }
            Some(("table", path)) => {
                Ok(Measure::Table(TableMeasure::load(Path::new(path))?))
            }
            Some(("bst-limit", seed)) => {
                let seed: u64 = seed.parse().map_err(|_| bad("cannot parse seed"))?;
                Ok(Measure::bst_limit(seed))
            }
            Some(_) => Err(bad("unknown measure kind")),
        }
    }

    /// Cylinder mass `mass(u)`.
    pub fn mass(&self, u: &Word) -> f64 {
        match self {
            Measure::Uniform => 0.5f64.powi(u.len() as i32),
            Measure::Bernoulli(p) => {
                let ones = u.count_ones() as i32;
                p.powi(ones) * (1.0 - p).powi(u.len() as i32 - ones)
            }
            Measure::Point(m) => {
                if m.on_path(u) {
                    1.0
                } else {
                    0.0
                }
            }
            Measure::Boundary(m) => m.mass(u),
            Measure::BstLimit(m) => m.mass(u),
            Measure::Table(m) => m.mass(u),
        }
    }

    /// Natural log of the cylinder mass; `-inf` on zero mass. Safe at any
    /// depth, unlike the float product.
    pub fn log_mass(&self, u: &Word) -> f64 {
        match self {
            Measure::Uniform => -(u.len() as f64) * std::f64::consts::LN_2,
            Measure::Bernoulli(p) => {
                let ones = u.count_ones() as f64;
                ones * p.ln() + (u.len() as f64 - ones) * (1.0 - p).ln()
            }
            Measure::Point(m) => {
                if m.on_path(u) {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            Measure::BstLimit(m) => m.log_mass(u),
            _ => self.mass(u).ln(),
        }
    }

    /// Exact cylinder mass where the representation permits one.
    pub fn mass_exact(&self, u: &Word) -> Option<BigRational> {
        match self {
            Measure::Uniform => {
                Some(BigRational::new(BigInt::one(), BigInt::one() << u.len()))
            }
            Measure::Point(m) => Some(if m.on_path(u) {
                BigRational::one()
            } else {
                BigRational::zero()
            }),
            Measure::Boundary(m) => Some(m.mass_exact(u)),
            _ => None,
        }
    }

    /// Conditional oracle: the probability that the bit after prefix `u`
    /// is 1. Fixed to 0 on zero-mass prefixes; sampling never queries those.
    pub fn cond(&self, u: &Word) -> f64 {
        match self {
            Measure::Uniform => 0.5,
            Measure::Bernoulli(p) => *p,
            Measure::Point(m) => {
                if m.on_path(u) {
                    m.bit_at(u.len()) as f64
                } else {
                    0.0
                }
            }
            Measure::Boundary(m) => m.cond(u),
            Measure::BstLimit(m) => 1.0 - m.left_fraction(u),
            Measure::Table(m) => m.cond(u),
        }
    }

    /// Whether every cylinder has positive mass.
    pub fn has_full_support(&self) -> bool {
        match self {
            Measure::Uniform | Measure::Bernoulli(_) | Measure::BstLimit(_) => true,
            Measure::Point(_) => false,
            // Uniform continuation below the boundary is everywhere positive.
            Measure::Boundary(_) => true,
            Measure::Table(m) => m.masses.iter().all(|&m| m > 0.0),
        }
    }

    /// Starts a lazy sample path; bits are drawn on demand through the
    /// conditional oracle from the stream's own rng.
    pub fn sample_path<R: Rng>(&self, rng: R) -> LazyWord<'_, R> {
        LazyWord { measure: self, prefix: Word::root(), rng, cursor: 0, buf: 0, buf_left: 0 }
    }

    /// Masses of all depth-`k` cylinders in lexicographic order.
    pub fn cylinder_masses(&self, k: u32) -> Result<Vec<f64>> {
        if k > MAX_CYLINDER_DEPTH {
            return Err(Error::CylinderDepthOverflow(k, MAX_CYLINDER_DEPTH));
        }
        let mut out = Vec::with_capacity(1usize << k);
        let mut path = Word::root();
        self.cylinders_rec(k, &mut path, &mut out);
        Ok(out)
    }

    fn cylinders_rec(&self, k: u32, path: &mut Word, out: &mut Vec<f64>) {
        if path.len() == k as usize {
            out.push(self.mass(path));
            return;
        }
        for b in 0..2u8 {
            path.push(b);
            self.cylinders_rec(k, path, out);
            path.pop();
        }
    }

    /// Scans all words of length < `depth` for the additivity defect
    /// `|mass(u) - mass(u0) - mass(u1)|` of the mass oracle.
    pub fn check_additivity(&self, depth: u32, tol: f64) -> AdditivityReport {
        let mut worst = Word::root();
        let mut max_defect: f64 = 0.0;
        let mut path = Word::root();
        self.additivity_rec(depth, &mut path, &mut max_defect, &mut worst);
        AdditivityReport {
            measure: self.to_string(),
            depth,
            tol,
            max_defect,
            worst_word: worst.to_string(),
            pass: max_defect <= tol,
        }
    }

    fn additivity_rec(&self, depth: u32, path: &mut Word, max: &mut f64, worst: &mut Word) {
        if path.len() >= depth as usize {
            return;
        }
        let m = self.mass(path);
        path.push(0);
        let m0 = self.mass(path);
        path.pop();
        path.push(1);
        let m1 = self.mass(path);
        path.pop();
        let defect = (m - m0 - m1).abs();
        if defect > *max {
            *max = defect;
            *worst = path.clone();
        }
        for b in 0..2u8 {
            path.push(b);
            self.additivity_rec(depth, path, max, worst);
            path.pop();
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Measure::Uniform => write!(f, "uniform"),
            Measure::Bernoulli(p) => write!(f, "bernoulli({p})"),
            Measure::Point(m) => write!(f, "point({})", m.pattern),
            Measure::Boundary(m) => write!(f, "boundary(n={})", m.tree.len()),
            Measure::BstLimit(m) => write!(f, "bst-limit({})", m.seed),
            Measure::Table(m) => write!(f, "table(depth={})", m.depth),
        }
    }
}

/// Report of an additivity scan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdditivityReport {
    pub measure: String,
    pub depth: u32,
    pub tol: f64,
    pub max_defect: f64,
    pub worst_word: String,
    pub pass: bool,
}

/// Point mass on the periodic sequence `pattern pattern pattern ...`.
#[derive(Clone, Debug)]
pub struct PointMeasure {
    pattern: Word,
}

impl PointMeasure {
    fn bit_at(&self, i: usize) -> u8 {
        self.pattern.bit(i % self.pattern.len())
    }

    fn on_path(&self, u: &Word) -> bool {
        (0..u.len()).all(|i| u.bit(i) == self.bit_at(i))
    }
}

/// The embedding of a finite tree: each boundary cylinder carries mass
/// `1/(|x|+1)`, split uniformly below.
#[derive(Clone, Debug)]
pub struct BoundaryMeasure {
    tree: BinaryTree,
}

impl BoundaryMeasure {
    pub fn tree(&self) -> &BinaryTree {
        &self.tree
    }

    /// Inside the tree the mass is `(1 + count(u)) / (1 + |x|)`; below the
    /// exit node it halves per extra bit.
    fn mass(&self, u: &Word) -> f64 {
        let denom = (self.tree.len() + 1) as f64;
        match self.tree.route(u) {
            Routing::Stored { count, .. } => (1.0 + count as f64) / denom,
            Routing::Exited { exit_len } => {
                0.5f64.powi((u.len() - exit_len) as i32) / denom
            }
        }
    }

    fn mass_exact(&self, u: &Word) -> BigRational {
        let denom = BigInt::from(self.tree.len() as u64 + 1);
        match self.tree.route(u) {
            Routing::Stored { count, .. } => {
                BigRational::new(BigInt::from(count + 1), denom)
            }
            Routing::Exited { exit_len } => {
                BigRational::new(BigInt::one(), denom << (u.len() - exit_len))
            }
        }
    }

    fn cond(&self, u: &Word) -> f64 {
        match self.tree.route(u) {
            Routing::Stored { count, right_count } => {
                (1.0 + right_count as f64) / (1.0 + count as f64)
            }
            Routing::Exited { .. } => 0.5,
        }
    }
}

/// A realization of the random limit measure of rank-insertion growth: the
/// mass splits at every node by an independent uniform fraction. One variate
/// is attached per sibling pair and derived from `(seed, node address)`
/// counter-style, which makes the object a pure function: query order and
/// thread count cannot change any answer.
#[derive(Clone, Debug)]
pub struct BstLimitMeasure {
    seed: u64,
}

impl BstLimitMeasure {
    /// The uniform variate governing the split below `u`: the left child
    /// keeps this fraction of the mass at `u`, the right child the rest.
    fn left_fraction(&self, u: &Word) -> f64 {
        let mut acc = mix64(self.seed ^ 0x7453_1CAB_54E1_9E23);
        acc = fold(acc, u.len() as u64);
        for &limb in u.limbs() {
            acc = fold(acc, limb);
        }
        unit_open(acc)
    }

    fn mass(&self, u: &Word) -> f64 {
        let mut m = 1.0;
        let mut prefix = Word::root();
        for i in 0..u.len() {
            let lf = self.left_fraction(&prefix);
            let b = u.bit(i);
            m *= if b == 0 { lf } else { 1.0 - lf };
            prefix.push(b);
        }
        m
    }

    fn log_mass(&self, u: &Word) -> f64 {
        let mut lm = 0.0;
        let mut prefix = Word::root();
        for i in 0..u.len() {
            let lf = self.left_fraction(&prefix);
            let b = u.bit(i);
            lm += if b == 0 { lf.ln() } else { (1.0 - lf).ln() };
            prefix.push(b);
        }
        lm
    }
}

/// Explicit masses for all cylinders at one depth; uniform splitting below.
#[derive(Clone, Debug)]
pub struct TableMeasure {
    depth: u32,
    masses: Vec<f64>,
    prefix_sums: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct TableFile {
    depth: u32,
    masses: Vec<f64>,
}

impl TableMeasure {
    /// Validates shape, nonnegativity and normalization.
    pub fn new(masses: Vec<f64>) -> Result<Self> {
        let t = Self::new_unchecked(masses)?;
        if let Some(bad) = t.masses.iter().find(|&&m| !(m >= 0.0)) {
            return Err(Error::BadTable(format!("negative or NaN mass {bad}")));
        }
        let sum: f64 = t.masses.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::BadTable(format!("masses sum to {sum}, not 1")));
        }
        Ok(t)
    }

    /// Shape checks only; normalization is left to additivity diagnostics.
    /// Exists so negative controls can exercise a corrupted table.
    pub fn new_unchecked(masses: Vec<f64>) -> Result<Self> {
        if masses.is_empty() || !masses.len().is_power_of_two() {
            return Err(Error::BadTable(format!(
                "{} masses is not a power of two",
                masses.len()
            )));
        }
        let depth = masses.len().trailing_zeros();
        if depth > MAX_CYLINDER_DEPTH {
            return Err(Error::BadTable(format!("depth {depth} too large")));
        }
        let mut prefix_sums = Vec::with_capacity(masses.len() + 1);
        let mut acc = 0.0;
        prefix_sums.push(0.0);
        for &m in &masses {
            acc += m;
            prefix_sums.push(acc);
        }
        Ok(Self { depth, masses, prefix_sums })
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = TableFile { depth: self.depth, masses: self.masses.clone() };
        std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let t = Self::load_unchecked(path)?;
        Self::new(t.masses)
    }

    /// Loads with shape checks only (see [`Self::new_unchecked`]).
    pub fn load_unchecked(path: &Path) -> Result<Self> {
        let file: TableFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        let t = Self::new_unchecked(file.masses)?;
        if t.depth != file.depth {
            return Err(Error::BadTable(format!(
                "declared depth {} but {} masses",
                file.depth,
                t.masses.len()
            )));
        }
        Ok(t)
    }

    /// MSB-first integer value of `u`, which is also its lexicographic rank
    /// among words of the same length.
    fn index(u: &Word) -> usize {
        u.bits().fold(0usize, |acc, b| (acc << 1) | b as usize)
    }

    fn mass(&self, u: &Word) -> f64 {
        // The root mass is 1 by definition; a corrupted table shows up as an
        // additivity defect at the root.
        if u.is_empty() {
            return 1.0;
        }
        let k = self.depth as usize;
        if u.len() <= k {
            let idx = Self::index(u);
            let width = k - u.len();
            self.prefix_sums[(idx + 1) << width] - self.prefix_sums[idx << width]
        } else {
            let (head, tail) =
                (Word::from_bits((0..k).map(|i| u.bit(i))), u.len() - k);
            self.masses[Self::index(&head)] * 0.5f64.powi(tail as i32)
        }
    }

    fn cond(&self, u: &Word) -> f64 {
        if u.len() >= self.depth as usize {
            let m = self.mass(u);
            return if m > 0.0 { 0.5 } else { 0.0 };
        }
        let m = self.mass(u);
        if m > 0.0 {
            self.mass(&u.child(1)) / m
        } else {
            0.0
        }
    }
}

/// An infinite word realized lazily: the prefix drawn so far never changes,
/// and each extension draws one bit through the conditional oracle.
pub struct LazyWord<'m, R: Rng> {
    measure: &'m Measure,
    prefix: Word,
    rng: R,
    cursor: usize,
    /// Fair-bit buffer; the uniform measure takes 64 bits per rng word
    /// instead of one f64 draw per bit.
    buf: u64,
    buf_left: u8,
}

impl<R: Rng> LazyWord<'_, R> {
    /// Bit `i`, realizing the prefix up to it if necessary.
    pub fn bit(&mut self, i: usize) -> u8 {
        while self.prefix.len() <= i {
            self.extend();
        }
        self.prefix.bit(i)
    }

    fn extend(&mut self) {
        let b = if matches!(self.measure, Measure::Uniform) {
            if self.buf_left == 0 {
                self.buf = self.rng.next_u64();
                self.buf_left = 64;
            }
            let bit = (self.buf & 1) as u8;
            self.buf >>= 1;
            self.buf_left -= 1;
            bit
        } else {
            let q = self.measure.cond(&self.prefix);
            u8::from(self.rng.random::<f64>() < q)
        };
        self.prefix.push(b);
    }

    /// Realizes at least `depth` bits and returns the prefix.
    pub fn realize(&mut self, depth: usize) -> &Word {
        while self.prefix.len() < depth {
            self.extend();
        }
        &self.prefix
    }

    pub fn prefix(&self) -> &Word {
        &self.prefix
    }
}

impl<R: Rng> BitSource for LazyWord<'_, R> {
    fn next_bit(&mut self) -> u8 {
        let i = self.cursor;
        self.cursor += 1;
        self.bit(i)
    }
}

/// The ultrametric on realized sequences: `2^{-|common prefix|}`, and 0 for
/// equal finite representations. If one word is a proper prefix of the
/// other, divergence is undecidable from finite data and the call errors.
pub fn ultrametric(v: &Word, w: &Word) -> Result<f64> {
    if v == w {
        return Ok(0.0);
    }
    if v.is_prefix_of(w) || w.is_prefix_of(v) {
        return Err(Error::UndecidablePrefix(v.to_string(), w.to_string()));
    }
    Ok(0.5f64.powi(v.common_prefix_len(w) as i32))
}
