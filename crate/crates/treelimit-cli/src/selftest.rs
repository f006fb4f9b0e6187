//! Exact-identity self test: fast rational-arithmetic checks of the
//! structural identities, plus measure additivity and trajectory
//! probability normalization at small sizes.

use anyhow::Result;
use num::bigint::BigInt;
use num::rational::{BigRational, Ratio};
use num::One;
use rand::Rng;
use std::path::Path;
use treelimit::growth::trajectory_probability_total;
use treelimit::measure::{Measure, TableMeasure};
use treelimit::seed::{replicate_seed, rng_from};
use treelimit::tree::BinaryTree;
use treelimit::word::Word;

fn big(r: Ratio<u64>) -> BigRational {
    BigRational::new(BigInt::from(*r.numer()), BigInt::from(*r.denom()))
}

struct Checks {
    failures: u32,
}

impl Checks {
    fn check(&mut self, name: &str, ok: bool) {
        println!("selftest {name}: {}", if ok { "ok" } else { "FAIL" });
        if !ok {
            self.failures += 1;
        }
    }
}

/// Runs the suite; `extra_table` is scanned for additivity after a lenient
/// load, so corrupted fixtures fail the gate rather than the parser.
pub fn run(seed: u64, extra_table: Option<&Path>) -> Result<bool> {
    let started = std::time::Instant::now();
    let mut checks = Checks { failures: 0 };

    let mut trees = Vec::new();
    for i in 0..100u64 {
        let mut rng = rng_from(replicate_seed(seed ^ 0x5e1f, i));
        let size = rng.random_range(1..=200usize);
        let mut t = BinaryTree::root_only();
        for k in 1..size {
            t.insert_boundary_rank(rng.random_range(1..=k as u64 + 1)).unwrap();
        }
        trees.push(t);
    }

    let mut ok = true;
    for t in &trees {
        ok &= t.external_boundary().len() == t.len() + 1;
        for u in t.node_words() {
            let (l, r) = t.child_counts(&u).unwrap();
            ok &= t.subtree_count(&u) == 1 + l + r;
        }
    }
    checks.check("boundary cardinality and count additivity", ok);

    let mut ok = true;
    for t in &trees {
        let n = t.len() as u64;
        let m = Measure::boundary(t.clone()).unwrap();
        for u in t.node_words().iter().chain(t.external_boundary().iter()) {
            let mass = m.mass_exact(u).unwrap();
            let formula = (BigRational::one()
                + BigRational::from(BigInt::from(n)) * big(t.t_exact(u).unwrap()))
                / BigRational::from(BigInt::from(n + 1));
            ok &= mass == formula && mass == big(t.t0(u).unwrap());
        }
    }
    checks.check("embedding mass formula and boundary fraction", ok);

    let mut ok = true;
    let mut rng = rng_from(seed ^ 0xb0b);
    for t in &trees {
        let m = Measure::boundary(t.clone()).unwrap();
        let n = t.len() as u64;
        let upper = BigRational::new(BigInt::one(), BigInt::from(n + 1));
        for _ in 0..10 {
            let len = rng.random_range(0..=t.height() + 3);
            let u = Word::from_bits((0..len).map(|_| rng.random_range(0..2u8)));
            let gap = m.mass_exact(&u).unwrap() - big(t.t_exact(&u).unwrap());
            ok &= gap >= BigRational::from(BigInt::from(0)) && gap <= upper;
        }
    }
    checks.check("embedding sandwich bounds", ok);

    let mut ok = true;
    let mut measures = vec![
        Measure::uniform(),
        Measure::bernoulli(0.3).unwrap(),
        Measure::point_periodic("0".parse().unwrap()).unwrap(),
        Measure::boundary(trees[0].clone()).unwrap(),
        Measure::bst_limit(seed),
    ];
    if let Some(path) = extra_table {
        measures.push(Measure::Table(TableMeasure::load_unchecked(path)?));
    }
    for m in &measures {
        let rep = m.check_additivity(12, 1e-10);
        if !rep.pass {
            println!(
                "  additivity defect {:.3e} at {:?} under {m}",
                rep.max_defect, rep.worst_word
            );
        }
        ok &= rep.pass;
    }
    checks.check("measure additivity at depth 12", ok);

    let mut ok = true;
    for mu in [Measure::uniform(), Measure::bernoulli(0.3).unwrap()] {
        for n in 1..=4 {
            ok &= (trajectory_probability_total(&mu, n) - 1.0).abs() <= 1e-12;
        }
    }
    checks.check("trajectory probability normalization", ok);

    let mut ok = true;
    for n in 0..=12u32 {
        let t = BinaryTree::complete(n).unwrap();
        for k in 0..=n {
            let u = Word::from_bits((0..k).map(|i| (i % 2) as u8));
            ok &= t.t_exact(&u).unwrap()
                == Ratio::new((1u64 << (n - k + 1)) - 1, (1u64 << (n + 1)) - 1);
        }
    }
    checks.check("complete-tree size formula", ok);

    let elapsed = started.elapsed();
    println!(
        "selftest: {} in {elapsed:?}",
        if checks.failures == 0 { "all checks passed" } else { "FAILURES" }
    );
    Ok(checks.failures == 0 && elapsed.as_secs() < 10)
}
