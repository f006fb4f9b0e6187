//! Second-order verification: root-n fluctuations of subtree sizes around
//! their limit masses, their closed-form covariance, Monte Carlo covariance
//! estimation with jackknife error bars, and the two-arm mixture experiment
//! for rank-insertion growth.

use crate::growth::{self, dst_grow_tree, enumerate_trees, GrowthModel};
use crate::measure::Measure;
use crate::seed::{replicate_seed, rng_from, splitmix64};
use crate::stats::{self, ChiSquareTest, Moments};
use crate::tree::{BinaryTree, Routing};
use crate::word::Word;
use crate::{Error, Result};
use num::bigint::BigInt;
use num::rational::BigRational;
use num::One;
use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// The scaled fluctuation vector `sqrt(n) (t(x,u) - mass(u))` over a node
/// list.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FluctuationVector {
    pub nodes: Vec<Word>,
    pub values: Vec<f64>,
    pub n: u64,
    pub measure: String,
}

fn z_values(tree: &BinaryTree, mu: &Measure, nodes: &[Word]) -> Result<Vec<f64>> {
    if tree.is_empty() {
        return Err(Error::EmptyTree);
    }
    let scale = (tree.len() as f64).sqrt();
    nodes
        .iter()
        .map(|u| Ok(scale * (tree.t(u)? - mu.mass(u))))
        .collect()
}

pub fn z_statistic(tree: &BinaryTree, mu: &Measure, nodes: &[Word]) -> Result<FluctuationVector> {
    Ok(FluctuationVector {
        nodes: nodes.to_vec(),
        values: z_values(tree, mu, nodes)?,
        n: tree.len() as u64,
        measure: mu.to_string(),
    })
}

/// The limit covariance of the fluctuation field: variance
/// `m_u (1 - m_u)` on the diagonal, `m_v (1 - m_u)` when `u` is an
/// ancestor of `v` (and symmetrically), `-m_u m_v` for incomparable nodes.
pub fn theoretical_cov(mu: &Measure, u: &Word, v: &Word) -> f64 {
    let mu_u = mu.mass(u);
    let mu_v = mu.mass(v);
    if u == v {
        mu_u * (1.0 - mu_u)
    } else if u.is_strict_prefix_of(v) {
        mu_v * (1.0 - mu_u)
    } else if v.is_strict_prefix_of(u) {
        mu_u * (1.0 - mu_v)
    } else {
        -mu_u * mu_v
    }
}

pub fn theoretical_cov_matrix(mu: &Measure, nodes: &[Word]) -> Vec<Vec<f64>> {
    nodes
        .iter()
        .map(|u| nodes.iter().map(|v| theoretical_cov(mu, u, v)).collect())
        .collect()
}

/// Unbiased sample covariance of fluctuation vectors sharing a node list
/// and tree size.
pub fn empirical_cov(samples: &[FluctuationVector]) -> Result<Vec<Vec<f64>>> {
    if samples.len() < 2 {
        return Err(Error::TooFewSamples { need: 2, got: samples.len() });
    }
    let first = &samples[0];
    for s in &samples[1..] {
        if s.nodes != first.nodes {
            return Err(Error::MismatchedSamples("node lists differ".into()));
        }
        if s.n != first.n {
            return Err(Error::MismatchedSamples("tree sizes differ".into()));
        }
    }
    let rows: Vec<&[f64]> = samples.iter().map(|s| s.values.as_slice()).collect();
    Ok(cov_of_rows(&rows))
}

fn cov_of_rows(rows: &[&[f64]]) -> Vec<Vec<f64>> {
    let r = rows.len() as f64;
    let d = rows[0].len();
    let mut mean = vec![0.0; d];
    for row in rows {
        for (m, &x) in mean.iter_mut().zip(*row) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= r;
    }
    let mut cov = vec![vec![0.0; d]; d];
    for row in rows {
        for i in 0..d {
            let di = row[i] - mean[i];
            for j in 0..d {
                cov[i][j] += di * (row[j] - mean[j]);
            }
        }
    }
    for ci in &mut cov {
        for c in ci.iter_mut() {
            *c /= r - 1.0;
        }
    }
    cov
}

/// Jackknife standard error of the (i, j) sample covariance entry.
fn jackknife_cov_se(rows: &[&[f64]], i: usize, j: usize) -> f64 {
    let rf = rows.len() as f64;
    let (mut s1i, mut s1j, mut sij) = (0.0, 0.0, 0.0);
    for row in rows {
        s1i += row[i];
        s1j += row[j];
        sij += row[i] * row[j];
    }
    let mut loo = Vec::with_capacity(rows.len());
    for row in rows {
        let (xi, xj) = (row[i], row[j]);
        let c = (sij - xi * xj - (s1i - xi) * (s1j - xj) / (rf - 1.0)) / (rf - 2.0);
        loo.push(c);
    }
    stats::jackknife_se(&loo)
}

/// One covariance matrix entry with its verdict.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CovEntry {
    pub u: Word,
    pub v: Word,
    pub theoretical: f64,
    pub empirical: f64,
    pub se: Option<f64>,
    pub pass: bool,
}

/// Per-node marginal statistics of the fluctuation sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarginalStats {
    pub node: Word,
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

/// Result of a covariance experiment. An entry passes when the empirical
/// value is within [`COV_SIGMAS`] jackknife standard errors of the closed
/// form; the report passes when at least [`COV_PASS_QUOTA`] of entries do.
/// With fewer than 3 replicates no error bars exist and the verdict is
/// flagged low-power instead of failed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CovarianceReport {
    pub measure: String,
    pub n: u64,
    pub reps: u64,
    pub seed: u64,
    pub nodes: Vec<Word>,
    pub theoretical: Vec<Vec<f64>>,
    pub empirical: Vec<Vec<f64>>,
    pub entries: Vec<CovEntry>,
    pub pass_fraction: f64,
    pub passed: bool,
    pub low_power: bool,
    pub psd_min_eigenvalue: f64,
    pub marginals: Vec<MarginalStats>,
}

/// Entry tolerance in jackknife standard errors.
pub const COV_SIGMAS: f64 = 5.0;
/// Fraction of entries that must pass.
pub const COV_PASS_QUOTA: f64 = 0.95;

fn min_symmetric_eigenvalue(matrix: &[Vec<f64>]) -> f64 {
    let d = matrix.len();
    let m = nalgebra::DMatrix::from_fn(d, d, |i, j| matrix[i][j]);
    // Symmetrize away float asymmetry before the eigensolve.
    let sym = (&m + m.transpose()) * 0.5;
    sym.symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b))
}

/// Grows `reps` independent digital trees of size `n` under `mu` (replicate
/// seeds derived from `seed`), computes the fluctuation vector of each and
/// compares the sample covariance to the closed form entry by entry.
/// Replicates run in parallel; aggregation is in replicate order, so the
/// report does not depend on the worker count.
pub fn clt_experiment(
    mu: &Measure,
    n: usize,
    reps: usize,
    nodes: &[Word],
    seed: u64,
) -> Result<CovarianceReport> {
    if nodes.is_empty() {
        return Err(Error::MismatchedSamples("empty node list".into()));
    }
    for u in nodes {
        if mu.mass(u) <= 0.0 {
            return Err(Error::ZeroMassNode(u.to_string()));
        }
    }
    if reps < 2 {
        return Err(Error::TooFewSamples { need: 2, got: reps });
    }
    let samples: Vec<Vec<f64>> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_from(replicate_seed(seed, r));
            let tree = dst_grow_tree(mu, n, &mut rng)?;
            z_values(&tree, mu, nodes)
        })
        .collect::<Result<_>>()?;
    build_covariance_report(mu, n as u64, seed, nodes.to_vec(), &samples)
}

fn build_covariance_report(
    mu: &Measure,
    n: u64,
    seed: u64,
    nodes: Vec<Word>,
    samples: &[Vec<f64>],
) -> Result<CovarianceReport> {
    let rows: Vec<&[f64]> = samples.iter().map(|s| s.as_slice()).collect();
    let reps = rows.len();
    let theoretical = theoretical_cov_matrix(mu, &nodes);
    let empirical = cov_of_rows(&rows);
    let low_power = reps < 3;
    let d = nodes.len();
    let mut entries = Vec::with_capacity(d * d);
    let mut passed_entries = 0usize;
    for i in 0..d {
        for j in 0..d {
            let se = if low_power { None } else { Some(jackknife_cov_se(&rows, i, j)) };
            let pass = match se {
                Some(se) => (empirical[i][j] - theoretical[i][j]).abs() <= COV_SIGMAS * se,
                None => true,
            };
            passed_entries += usize::from(pass);
            entries.push(CovEntry {
                u: nodes[i].clone(),
                v: nodes[j].clone(),
                theoretical: theoretical[i][j],
                empirical: empirical[i][j],
                se,
                pass,
            });
        }
    }
    let pass_fraction = passed_entries as f64 / entries.len() as f64;
    let marginals = (0..d)
        .map(|i| {
            let col: Vec<f64> = rows.iter().map(|r| r[i]).collect();
            let Moments { mean, variance, skewness, excess_kurtosis, .. } = stats::moments(&col);
            MarginalStats { node: nodes[i].clone(), mean, variance, skewness, excess_kurtosis }
        })
        .collect();
    let psd_min_eigenvalue = min_symmetric_eigenvalue(&theoretical);
    Ok(CovarianceReport {
        measure: mu.to_string(),
        n,
        reps: reps as u64,
        seed,
        nodes,
        theoretical,
        empirical,
        entries,
        pass_fraction,
        passed: pass_fraction >= COV_PASS_QUOTA,
        low_power,
        psd_min_eigenvalue,
        marginals,
    })
}

/// Shape-class comparison between two growth mechanisms at a small size.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShapeComparison {
    pub depth: usize,
    pub reps_per_arm: u64,
    pub classes: Vec<String>,
    pub bst_counts: Vec<u64>,
    pub mixture_counts: Vec<u64>,
    pub chi_square: ChiSquareTest,
    pub passed: bool,
}

/// Report of the two-arm mixture experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixtureReport {
    pub seed: u64,
    /// Covariance of digital growth conditioned on one sampled limit
    /// measure, against the closed form evaluated at that measure.
    pub conditional: CovarianceReport,
    /// Tree-law equality: plain rank insertion vs sample-then-route.
    pub shapes: ShapeComparison,
    pub passed: bool,
}

/// Significance level for the shape-agreement gate.
pub const SHAPE_LEVEL: f64 = 0.01;

/// Two-arm experiment for the mixture representation of rank-insertion
/// growth.
///
/// Arm 1 samples one limit measure, runs `reps` digital growths to size `n`
/// conditioned on it, and checks the covariance against the closed form at
/// that measure. Arm 2 compares the exact distribution of tree shapes at a
/// small size under plain rank insertion vs freshly-sampled-measure routing
/// (`shape_reps` runs per arm, two-sample chi-square).
pub fn bst_mixture_experiment(
    n: usize,
    reps: usize,
    nodes: &[Word],
    shape_depth: usize,
    shape_reps: usize,
    seed: u64,
) -> Result<MixtureReport> {
    let sampled = Measure::bst_limit(splitmix64(seed, 0x4d49_5854));
    let conditional = clt_experiment(&sampled, n, reps, nodes, splitmix64(seed, 1))?;

    let classes = enumerate_trees(shape_depth);
    let index: HashMap<String, usize> =
        classes.iter().enumerate().map(|(i, t)| (t.shape_key(), i)).collect();
    let count_arm = |arm: u64, mix: bool| -> Result<Vec<u64>> {
        let indices: Vec<usize> = (0..shape_reps as u64)
            .into_par_iter()
            .map(|r| {
                let mut rng = rng_from(replicate_seed(splitmix64(seed, 2 + arm), r));
                let tree = if mix {
                    let m = Measure::sample_bst_limit(&mut rng);
                    dst_grow_tree(&m, shape_depth, &mut rng)?
                } else {
                    growth::bst_grow_tree(shape_depth, &mut rng)?
                };
                Ok(index[&tree.shape_key()])
            })
            .collect::<Result<_>>()?;
        let mut counts = vec![0u64; classes.len()];
        for idx in indices {
            counts[idx] += 1;
        }
        Ok(counts)
    };
    let bst_counts = count_arm(0, false)?;
    let mixture_counts = count_arm(1, true)?;
    let chi_square = stats::chi_square_two_sample(&bst_counts, &mixture_counts)?;
    let shapes = ShapeComparison {
        depth: shape_depth,
        reps_per_arm: shape_reps as u64,
        classes: classes.iter().map(|t| t.shape_key()).collect(),
        bst_counts,
        mixture_counts,
        passed: chi_square.p_value > SHAPE_LEVEL,
        chi_square,
    };
    let passed = conditional.passed && shapes.passed;
    Ok(MixtureReport { seed, conditional, shapes, passed })
}

/// One checkpoint of a convergence trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRow {
    pub n: u64,
    /// Relative subtree size at the node.
    pub t: f64,
    /// Mass the embedded boundary measure gives the node's cylinder.
    pub boundary_mass: f64,
    /// Limit mass under the driving measure, where one is known.
    pub target: Option<f64>,
    /// `boundary_mass - t`, which must lie in `[0, 1/(n+1)]` exactly.
    pub gap: f64,
    pub gap_in_bounds: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceReport {
    pub model: String,
    pub node: Word,
    pub seed: u64,
    pub rows: Vec<TraceRow>,
    /// True when the gap bounds held exactly at every checkpoint.
    pub bounds_ok: bool,
}

/// Exact boundary-measure mass of the cylinder at `u`, straight from the
/// routing outcome.
fn boundary_mass_exact(tree: &BinaryTree, u: &Word) -> BigRational {
    let denom = BigInt::from(tree.len() as u64 + 1);
    match tree.route(u) {
        Routing::Stored { count, .. } => BigRational::new(BigInt::from(count + 1), denom),
        Routing::Exited { exit_len } => {
            BigRational::new(BigInt::one(), denom << (u.len() - exit_len))
        }
    }
}

fn big_to_f64(q: &BigRational) -> f64 {
    let num: f64 = q.numer().to_string().parse().unwrap_or(f64::NAN);
    let den: f64 = q.denom().to_string().parse().unwrap_or(f64::NAN);
    num / den
}

fn trace_row(tree: &BinaryTree, u: &Word, target: Option<f64>) -> Result<TraceRow> {
    let n = tree.len() as u64;
    let t_exact = tree.t_exact(u)?;
    let mass_exact = boundary_mass_exact(tree, u);
    let gap_exact = &mass_exact
        - BigRational::new(BigInt::from(*t_exact.numer()), BigInt::from(*t_exact.denom()));
    let upper = BigRational::new(BigInt::one(), BigInt::from(n + 1));
    let gap_in_bounds =
        gap_exact >= BigRational::from(BigInt::from(0)) && gap_exact <= upper;
    Ok(TraceRow {
        n,
        t: tree.t(u)?,
        boundary_mass: big_to_f64(&mass_exact),
        target,
        gap: big_to_f64(&gap_exact),
        gap_in_bounds,
    })
}

/// Follows one growth run and records, at each checkpoint size, the
/// relative subtree size at `u` and its boundary-measure counterpart. For
/// the non-incremental uniform sampler a fresh tree is drawn per
/// checkpoint.
pub fn convergence_trace(
    model: &GrowthModel,
    u: &Word,
    checkpoints: &[u64],
    seed: u64,
) -> Result<TraceReport> {
    let mut sorted: Vec<u64> = checkpoints.iter().copied().filter(|&c| c >= 1).collect();
    sorted.sort_unstable();
    sorted.dedup();
    let target = match model {
        GrowthModel::Dst(mu) => Some(mu.mass(u)),
        _ => None,
    };
    let mut rows = Vec::with_capacity(sorted.len());
    let mut rng = rng_from(seed);
    match model {
        GrowthModel::CatalanDirect => {
            for &c in &sorted {
                let tree = growth::uniform_tree(c as usize, &mut rng);
                rows.push(trace_row(&tree, u, target)?);
            }
        }
        _ => {
            let mut tree = BinaryTree::root_only();
            let mut size = 1u64;
            for &c in &sorted {
                while size < c {
                    match model {
                        GrowthModel::Dst(mu) => {
                            let mut input = mu.sample_path(rng_from(rng.next_u64()));
                            tree.insert_exit(&mut input)?;
                        }
                        GrowthModel::Bst => {
                            let r = rng.random_range(1..=size + 1);
                            tree.insert_boundary_rank(r)?;
                        }
                        GrowthModel::Remy => {
                            growth::remy_insert(&mut tree, &mut rng)?;
                        }
                        GrowthModel::CatalanDirect => unreachable!(),
                    }
                    size += 1;
                }
                rows.push(trace_row(&tree, u, target)?);
            }
        }
    }
    let bounds_ok = rows.iter().all(|r| r.gap_in_bounds);
    Ok(TraceReport { model: model.tag().to_string(), node: u.clone(), seed, rows, bounds_ok })
}
