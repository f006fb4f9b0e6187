//! Report structures shared by the test suites and the batch front-end,
//! with CSV renderings (RFC 4180 via the csv crate) alongside the serde
//! JSON forms. CSV bodies are deterministic for a fixed report.

use crate::clt::{CovarianceReport, ShapeComparison, TraceReport};
use crate::increments::IncrementProcess;
use crate::measure::Measure;
use crate::tree::{BinaryTree, Routing};
use crate::word::Word;
use crate::{Error, Result};
use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Zero};
use serde::{Deserialize, Serialize};

/// One cylinder row of an embedding report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbedRow {
    pub word: Word,
    /// Relative subtree size at the word.
    pub t: f64,
    /// Mass of the cylinder under the tree's boundary measure.
    pub boundary_mass: f64,
    /// Mass under the driving measure, when one is known.
    pub target_mass: Option<f64>,
}

/// Depth-`k` cylinder view of the boundary-measure embedding of one tree,
/// with the exact sandwich check `0 <= mass - t <= 1/(n+1)` over all words
/// down to that depth.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbedReport {
    pub n: u64,
    pub depth: u32,
    pub rows: Vec<EmbedRow>,
    /// Total-variation distance to the target on depth-`k` cylinders.
    pub tv_to_target: Option<f64>,
    /// Exact bounds verdict over every word of length <= depth.
    pub bounds_ok: bool,
    /// Sum of the boundary-measure cylinder masses (should be 1).
    pub mass_sum: f64,
}

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

/// Builds the embedding report for a tree at cylinder depth `depth`.
pub fn embed_report(
    tree: &BinaryTree,
    target: Option<&Measure>,
    depth: u32,
) -> Result<EmbedReport> {
    if tree.is_empty() {
        return Err(Error::EmptyTree);
    }
    let n = tree.len() as u64;
    let upper = BigRational::new(BigInt::one(), BigInt::from(n + 1));
    let mut rows = Vec::with_capacity(1usize << depth);
    let mut bounds_ok = true;
    let mut mass_sum = 0.0;
    let mut tv = 0.0;
    // One pass over all words of length <= depth, collecting rows at the
    // bottom level and checking the exact bounds everywhere.
    let mut stack = vec![Word::root()];
    while let Some(u) = stack.pop() {
        let mass_exact = boundary_mass_exact(tree, &u);
        let t_exact = tree.t_exact(&u)?;
        let gap = &mass_exact
            - BigRational::new(BigInt::from(*t_exact.numer()), BigInt::from(*t_exact.denom()));
        if gap < BigRational::zero() || gap > upper {
            bounds_ok = false;
        }
        if u.len() == depth as usize {
            let boundary_mass = big_to_f64(&mass_exact);
            let target_mass = target.map(|m| m.mass(&u));
            mass_sum += boundary_mass;
            if let Some(tm) = target_mass {
                tv += 0.5 * (boundary_mass - tm).abs();
            }
            rows.push(EmbedRow {
                word: u,
                t: *t_exact.numer() as f64 / *t_exact.denom() as f64,
                boundary_mass,
                target_mass,
            });
        } else {
            // Push right first so the left child pops first: lex order.
            stack.push(u.child(1));
            stack.push(u.child(0));
        }
    }
    Ok(EmbedReport {
        n,
        depth,
        rows,
        tv_to_target: target.map(|_| tv),
        bounds_ok,
        mass_sum,
    })
}

fn csv_string<F: FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>>(f: F) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    f(&mut w).expect("csv write to memory");
    String::from_utf8(w.into_inner().expect("csv flush")).expect("csv is utf-8")
}

/// `u,v,theoretical,empirical,se,pass` — one row per matrix entry.
pub fn covariance_csv(report: &CovarianceReport) -> String {
    csv_string(|w| {
        w.write_record(["u", "v", "theoretical", "empirical", "se", "pass"])?;
        for e in &report.entries {
            w.write_record([
                e.u.to_string(),
                e.v.to_string(),
                e.theoretical.to_string(),
                e.empirical.to_string(),
                e.se.map_or(String::new(), |s| s.to_string()),
                e.pass.to_string(),
            ])?;
        }
        Ok(())
    })
}

/// `word,mass` rows for a cylinder-mass vector in lexicographic order.
pub fn cylinder_csv(depth: u32, masses: &[f64]) -> String {
    csv_string(|w| {
        w.write_record(["word", "mass"])?;
        for (i, m) in masses.iter().enumerate() {
            let word: String = (0..depth)
                .rev()
                .map(|b| if i >> b & 1 == 1 { '1' } else { '0' })
                .collect();
            w.write_record([word, m.to_string()])?;
        }
        Ok(())
    })
}

/// `word,t,boundary_mass,target_mass` rows of an embedding report.
pub fn embed_csv(report: &EmbedReport) -> String {
    csv_string(|w| {
        w.write_record(["word", "t", "boundary_mass", "target_mass"])?;
        for r in &report.rows {
            w.write_record([
                r.word.to_string(),
                r.t.to_string(),
                r.boundary_mass.to_string(),
                r.target_mass.map_or(String::new(), |m| m.to_string()),
            ])?;
        }
        Ok(())
    })
}

/// `step,value` rows of one increment process.
pub fn increments_csv(proc: &IncrementProcess) -> String {
    csv_string(|w| {
        w.write_record(["step", "value"])?;
        for (i, &v) in proc.values().iter().enumerate() {
            w.write_record([(i + 1).to_string(), v.to_string()])?;
        }
        Ok(())
    })
}

/// `n,t,boundary_mass,target,gap,gap_in_bounds` rows of a trace.
pub fn trace_csv(report: &TraceReport) -> String {
    csv_string(|w| {
        w.write_record(["n", "t", "boundary_mass", "target", "gap", "gap_in_bounds"])?;
        for r in &report.rows {
            w.write_record([
                r.n.to_string(),
                r.t.to_string(),
                r.boundary_mass.to_string(),
                r.target.map_or(String::new(), |t| t.to_string()),
                r.gap.to_string(),
                r.gap_in_bounds.to_string(),
            ])?;
        }
        Ok(())
    })
}

/// `class,bst_count,mixture_count` rows of a shape comparison.
pub fn shapes_csv(report: &ShapeComparison) -> String {
    csv_string(|w| {
        w.write_record(["class", "bst_count", "mixture_count"])?;
        for (i, class) in report.classes.iter().enumerate() {
            w.write_record([
                class.clone(),
                report.bst_counts[i].to_string(),
                report.mixture_counts[i].to_string(),
            ])?;
        }
        Ok(())
    })
}

/// `left_size,count` rows of a split histogram.
pub fn split_histogram_csv(histogram: &[u64]) -> String {
    csv_string(|w| {
        w.write_record(["left_size", "count"])?;
        for (i, c) in histogram.iter().enumerate() {
            w.write_record([i.to_string(), c.to_string()])?;
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::growth::dst_grow_tree;
    use crate::seed::rng_from;

    #[test]
    fn embed_report_on_exact_tree() {
        let tree = BinaryTree::complete(2).unwrap();
        let mu = Measure::uniform();
        let report = embed_report(&tree, Some(&mu), 2).unwrap();
        assert!(report.bounds_ok);
        assert_eq!(report.rows.len(), 4);
        assert!((report.mass_sum - 1.0).abs() < 1e-12);
        // Complete tree of height 2: every depth-2 cylinder gets mass
        // (1 + 1)/8 = 1/4 under the boundary measure.
        for row in &report.rows {
            assert!((row.boundary_mass - 0.25).abs() < 1e-15);
        }
        assert_eq!(report.tv_to_target, Some(0.0));
        // Rows are lexicographic.
        let words: Vec<String> = report.rows.iter().map(|r| r.word.to_string()).collect();
        assert_eq!(words, vec!["00", "01", "10", "11"]);
    }

    #[test]
    fn embed_report_tv_shrinks_with_n() {
        let mu = Measure::uniform();
        let small = dst_grow_tree(&mu, 50, &mut rng_from(1)).unwrap();
        let large = dst_grow_tree(&mu, 5000, &mut rng_from(1)).unwrap();
        let tv_small = embed_report(&small, Some(&mu), 3).unwrap().tv_to_target.unwrap();
        let tv_large = embed_report(&large, Some(&mu), 3).unwrap().tv_to_target.unwrap();
        assert!(tv_large < tv_small, "{tv_large} !< {tv_small}");
    }

    #[test]
    fn csv_forms_are_stable() {
        let csv = cylinder_csv(2, &[0.25, 0.25, 0.25, 0.25]);
        assert_eq!(csv, "word,mass\n00,0.25\n01,0.25\n10,0.25\n11,0.25\n");
        let csv = split_histogram_csv(&[3, 0, 5]);
        assert!(csv.ends_with("0,3\n1,0\n2,5\n"));
    }
}
