//! Acceptance gates: exact identities in rational arithmetic plus seeded
//! Monte Carlo checks of the limit laws at desk scale. Each test prints one
//! pass line (visible with `--nocapture`); a failed assertion is the fail
//! line. Every tolerance is pinned here, not configurable.

use num::bigint::BigInt;
use num::rational::{BigRational, Ratio};
use num::One;
use rand::{Rng, RngCore};
use rayon::prelude::*;
use treelimit::clt::{bst_mixture_experiment, clt_experiment};
use treelimit::growth::{
    self, bst_grow_tree, dst_grow_tree, enumerate_trees, remy_grow,
    trajectory_probability_total, uniform_split_experiment, uniform_tree,
};
use treelimit::increments::{exchangeability_test, extract_increments, increment_experiment};
use treelimit::measure::Measure;
use treelimit::seed::{replicate_seed, rng_from, splitmix64};
use treelimit::stats;
use treelimit::tree::BinaryTree;
use treelimit::word::Word;

fn w(s: &str) -> Word {
    s.parse().unwrap()
}

fn big(r: Ratio<u64>) -> BigRational {
    BigRational::new(BigInt::from(*r.numer()), BigInt::from(*r.denom()))
}

/// Random tree of the given size grown by seeded uniform boundary ranks.
fn random_tree(size: usize, seed: u64) -> BinaryTree {
    let mut rng = rng_from(seed);
    let mut t = BinaryTree::root_only();
    for k in 1..size {
        t.insert_boundary_rank(rng.random_range(1..=k as u64 + 1)).unwrap();
    }
    t
}

#[test]
fn criterion_01_exact_identities() {
    let started = std::time::Instant::now();
    let master = 0xACCE_0001u64;
    for i in 0..1000u64 {
        let size = 1 + (splitmix64(master, i) % 500) as usize;
        let tree = random_tree(size, replicate_seed(master, i));
        let n = tree.len() as u64;

        // Boundary cardinality and per-node count additivity.
        let boundary = tree.external_boundary();
        assert_eq!(boundary.len(), tree.len() + 1);
        let words = tree.node_words();
        for u in &words {
            let (l, r) = tree.child_counts(u).unwrap();
            assert_eq!(tree.subtree_count(u), 1 + l + r);
        }

        // The embedded measure in exact arithmetic on the tree and its
        // boundary: mass = (1 + n t) / (1 + n), and it equals the boundary
        // count fraction.
        let measure = Measure::boundary(tree.clone()).unwrap();
        for u in words.iter().chain(boundary.iter()) {
            let mass = measure.mass_exact(u).unwrap();
            let t = tree.t_exact(u).unwrap();
            let formula = (BigRational::one() + BigRational::from(BigInt::from(n)) * big(t))
                / BigRational::from(BigInt::from(n + 1));
            assert_eq!(mass, formula);
            assert_eq!(mass, big(tree.t0(u).unwrap()));
        }

        // Sandwich bounds for arbitrary words, including below the
        // boundary: 0 <= mass - t <= 1/(n+1), exactly.
        let mut rng = rng_from(replicate_seed(master, i) ^ 0xB0);
        let upper = BigRational::new(BigInt::one(), BigInt::from(n + 1));
        for _ in 0..20 {
            let len = rng.random_range(0..=tree.height() + 3);
            let u = Word::from_bits((0..len).map(|_| rng.random_range(0..2u8)));
            let gap = measure.mass_exact(&u).unwrap() - big(tree.t_exact(&u).unwrap());
            assert!(gap >= BigRational::from(BigInt::from(0)) && gap <= upper);
        }
    }

    // Complete trees: t = (2^{n-k+1} - 1) / (2^{n+1} - 1), zero tolerance.
    for n in 0..=20u32 {
        let tree = BinaryTree::complete(n).unwrap();
        let mut rng = rng_from(n as u64);
        for k in 0..=n {
            let u = Word::from_bits((0..k).map(|_| rng.random_range(0..2u8)));
            let expect = Ratio::new((1u64 << (n - k + 1)) - 1, (1u64 << (n + 1)) - 1);
            assert_eq!(tree.t_exact(&u).unwrap(), expect);
        }
    }
    let dt = started.elapsed();
    assert!(dt.as_secs() < 10, "exact identity suite took {dt:?}");
    println!("ACCEPTANCE 01 PASS: exact identities on 1000 random trees and complete trees <= 20 ({dt:?})");
}

#[test]
fn criterion_02_measure_additivity_and_total_probability() {
    let table = Measure::table(Measure::bst_limit(99).cylinder_masses(6).unwrap()).unwrap();
    let measures = [
        Measure::uniform(),
        Measure::bernoulli(0.3).unwrap(),
        Measure::bernoulli(0.5).unwrap(),
        Measure::point_periodic(w("0")).unwrap(),
        Measure::point_periodic(w("10")).unwrap(),
        Measure::boundary(random_tree(200, 2)).unwrap(),
        Measure::bst_limit(7),
        table,
    ];
    let mut worst: f64 = 0.0;
    for m in &measures {
        let rep = m.check_additivity(12, 1e-10);
        assert!(rep.pass, "{m}: defect {} at {:?}", rep.max_defect, rep.worst_word);
        worst = worst.max(rep.max_defect);
    }
    for mu in [Measure::uniform(), Measure::bernoulli(0.3).unwrap()] {
        for n in 1..=5 {
            let total = trajectory_probability_total(&mu, n);
            assert!((total - 1.0).abs() <= 1e-12, "{mu} at n={n}: {total}");
        }
    }
    println!(
        "ACCEPTANCE 02 PASS: additivity depth 12 (max defect {worst:.2e} <= 1e-10), \
         trajectory probabilities sum to 1 +- 1e-12 for n <= 5"
    );
}

#[test]
fn criterion_03_first_order_convergence() {
    let mu = Measure::uniform();
    let nodes = [w("0"), w("1"), w("00"), w("01")];
    let n = 1_000_000usize;
    let runs = 100u64;
    let master = 0xACCE_0003u64;
    let ok_runs: u64 = (0..runs)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_from(replicate_seed(master, r));
            let tree = dst_grow_tree(&mu, n, &mut rng).unwrap();
            let all_in_band = nodes.iter().all(|u| {
                let psi = 0.5f64.powi(u.len() as i32);
                let band = stats::binomial_band(psi, n as u64, 5.0);
                (tree.t(u).unwrap() - psi).abs() <= band
            });
            u64::from(all_in_band)
        })
        .sum();
    assert!(ok_runs >= 95, "{ok_runs}/100 runs inside the 5-sigma bands");
    println!(
        "ACCEPTANCE 03 PASS: digital growth at n=10^6, all four nodes within \
         5*sqrt(psi(1-psi)/n) in {ok_runs}/100 runs"
    );
}

#[test]
fn criterion_04_entry_times() {
    let started = std::time::Instant::now();
    let mu = Measure::uniform();
    let runs = 10_000u64;
    let master = 0xACCE_0004u64;
    let (mut first, mut second) = (Vec::new(), Vec::new());
    for r in 0..runs {
        let mut rng = rng_from(replicate_seed(master, r));
        let mut tree = BinaryTree::root_only();
        let target = w("00");
        let mut tau_0 = None;
        let mut tau_00 = None;
        let mut step = 1u64;
        while tau_00.is_none() {
            let mut input = mu.sample_path(rng_from(rng.next_u64()));
            let v = tree.insert_exit(&mut input).unwrap();
            step += 1;
            if tau_0.is_none() && v == w("0") {
                tau_0 = Some(step);
            }
            if v == target {
                tau_00 = Some(step);
            }
            assert!(step < 10_000, "entry took implausibly long");
        }
        // The paper's telescoping measures from the root's entry: tau_root
        // is step 1, so the geometric sums are entry-time differences.
        first.push((tau_0.unwrap() - 1) as f64);
        second.push((tau_00.unwrap() - 1) as f64);
    }
    let (m1, s1) = (stats::mean(&first), stats::mean_se(&first));
    let (m2, s2) = (stats::mean(&second), stats::mean_se(&second));
    assert!((m1 - 2.0).abs() <= 5.0 * s1, "mean {m1} se {s1}");
    assert!((m2 - 6.0).abs() <= 5.0 * s2, "mean {m2} se {s2}");
    let dt = started.elapsed();
    assert!(dt.as_secs() < 30);
    println!(
        "ACCEPTANCE 04 PASS: entry-time means {m1:.3} (target 2) and {m2:.3} (target 6) \
         within 5 SE over 10^4 runs ({dt:?})"
    );
}

#[test]
fn criterion_05_uniform_law_agreement() {
    let started = std::time::Instant::now();
    let classes = enumerate_trees(4);
    let index = |t: &BinaryTree| classes.iter().position(|c| c == t).unwrap();
    let reps = 100_000u64;
    let master = 0xACCE_1005u64;

    let count_runs = |arm: u64, f: &(dyn Fn(&mut rand_chacha::ChaCha8Rng) -> BinaryTree + Sync)| {
        (0..reps)
            .into_par_iter()
            .fold(
                || vec![0u64; classes.len()],
                |mut acc, r| {
                    let mut rng = rng_from(replicate_seed(splitmix64(master, arm), r));
                    acc[index(&f(&mut rng))] += 1;
                    acc
                },
            )
            .reduce(
                || vec![0u64; classes.len()],
                |mut a, b| {
                    for (x, y) in a.iter_mut().zip(b) {
                        *x += y;
                    }
                    a
                },
            )
    };
    let catalan_counts = count_runs(0, &|rng| uniform_tree(4, rng));
    let remy_counts = count_runs(1, &|rng| remy_grow(4, rng).unwrap().final_tree().clone());
    let mask = w("1011");
    let acted_counts = count_runs(2, &|rng| {
        uniform_tree(4, rng).group_act_word(&mask).unwrap()
    });

    let uniform_probs = vec![1.0 / classes.len() as f64; classes.len()];
    let t1 = stats::chi_square_gof(&catalan_counts, &uniform_probs).unwrap();
    let t2 = stats::chi_square_gof(&remy_counts, &uniform_probs).unwrap();
    let t3 = stats::chi_square_two_sample(&catalan_counts, &remy_counts).unwrap();
    let t4 = stats::chi_square_gof(&acted_counts, &uniform_probs).unwrap();
    assert!(t1.p_value > 0.01, "catalan splits vs uniform: p = {}", t1.p_value);
    assert!(t2.p_value > 0.01, "nested chain vs uniform: p = {}", t2.p_value);
    assert!(t3.p_value > 0.01, "two-sample: p = {}", t3.p_value);
    assert!(t4.p_value > 0.01, "group action vs uniform: p = {}", t4.p_value);
    let dt = started.elapsed();
    assert!(dt.as_secs() < 60);
    println!(
        "ACCEPTANCE 05 PASS: size-4 law agreement, p = {:.3}/{:.3}/{:.3}, \
         xor-action p = {:.3} ({dt:?})",
        t1.p_value, t2.p_value, t3.p_value, t4.p_value
    );
}

#[test]
fn criterion_06_catalan_concentration() {
    let started = std::time::Instant::now();
    let reps = 10_000u64;
    let p50 = uniform_split_experiment(50, reps, 0xACCE_0650).p_mid;
    let p200 = uniform_split_experiment(200, reps, 0xACCE_0651).p_mid;
    let p800 = uniform_split_experiment(800, reps, 0xACCE_0652).p_mid;
    assert!(p50 > p200 && p200 > p800, "{p50} > {p200} > {p800} violated");
    let dt = started.elapsed();
    assert!(dt.as_secs() < 120);
    println!(
        "ACCEPTANCE 06 PASS: middle-split mass strictly decreasing: \
         {p50:.4} > {p200:.4} > {p800:.4} ({dt:?})"
    );
}

#[test]
fn criterion_07_local_increments() {
    let started = std::time::Instant::now();
    let mu = Measure::bernoulli(0.3).unwrap();
    let nodes = [w(""), w("0"), w("1")];

    // One full-horizon run gates the pmf bands and the exact
    // reconstruction identity at every node.
    let report = increment_experiment(&mu, &nodes, 10_000, 2, 199, 0xACCE_0007).unwrap();
    for node in &report.nodes {
        assert!(node.pmf_ok, "{:?}: pmf {:?}", node.node, node.pmf_observed);
        assert!(node.reconstruction_ok, "{:?}", node.node);
    }

    // Exchangeability diagnostic: pass rate over 100 seeded runs.
    let master = 0xACCE_0107u64;
    let passes: u64 = (0..100u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_from(replicate_seed(master, r));
            let tr = growth::dst_grow(&mu, 11_000, &mut rng).unwrap();
            let proc = extract_increments(&tr, &w("0"), 10_000).unwrap();
            let mut shuffle_rng = rng_from(replicate_seed(master ^ 0xF00D, r));
            let rep =
                exchangeability_test(proc.values(), 2, 199, &mut shuffle_rng).unwrap();
            u64::from(rep.p_value > 0.01)
        })
        .sum();
    assert!(passes >= 95, "exchangeability passed in {passes}/100 runs");
    let dt = started.elapsed();
    assert!(dt.as_secs() < 120);
    println!(
        "ACCEPTANCE 07 PASS: increment pmfs within 5 sigma, reconstruction exact, \
         exchangeability {passes}/100 at level 0.01 ({dt:?})"
    );
}

#[test]
fn criterion_08_clt_covariance() {
    let started = std::time::Instant::now();
    let mu = Measure::uniform();
    let nodes = [w("0"), w("1"), w("00"), w("01"), w("10")];
    let report = clt_experiment(&mu, 10_000, 10_000, &nodes, 0xACCE_0008).unwrap();
    assert!(
        report.pass_fraction >= 0.95,
        "only {:.0}% of covariance entries within 5 jackknife SE",
        100.0 * report.pass_fraction
    );
    // Spot-check the closed form itself.
    let entry = |u: &str, v: &str| {
        report
            .entries
            .iter()
            .find(|e| e.u == w(u) && e.v == w(v))
            .unwrap()
            .theoretical
    };
    assert!((entry("0", "0") - 0.25).abs() < 1e-15);
    assert!((entry("0", "1") + 0.25).abs() < 1e-15);
    assert!((entry("0", "00") - 0.125).abs() < 1e-15);
    assert!(report.psd_min_eigenvalue >= -1e-9);
    let max_skew = report
        .marginals
        .iter()
        .map(|m| m.skewness.abs())
        .fold(0.0f64, f64::max);
    let max_kurt = report
        .marginals
        .iter()
        .map(|m| m.excess_kurtosis.abs())
        .fold(0.0f64, f64::max);
    let dt = started.elapsed();
    println!(
        "ACCEPTANCE 08 PASS: {:.1}% of entries within 5 jackknife SE at n=reps=10^4; \
         informational marginals: max |skew| {max_skew:.3} (guide 0.1), \
         max |ex. kurtosis| {max_kurt:.3} (guide 0.2) ({dt:?})",
        100.0 * report.pass_fraction
    );
}

#[test]
fn criterion_09_bst_mixture_representation() {
    let started = std::time::Instant::now();

    // Tree-law equality on size-3 shapes, 10^5 runs per arm, plus the
    // conditional covariance arm at moderate scale.
    let report = bst_mixture_experiment(
        2_000,
        1_000,
        &[w("0"), w("1"), w("00")],
        3,
        100_000,
        0xACCE_0009,
    )
    .unwrap();
    assert!(
        report.shapes.passed,
        "shape agreement p = {}",
        report.shapes.chi_square.p_value
    );
    assert!(report.conditional.passed, "conditional covariance arm failed");

    // Terminal left share under rank insertion: mean 1/2, variance 1/12.
    let runs = 10_000u64;
    let n = 100_000usize;
    let master = 0xACCE_0109u64;
    let shares: Vec<f64> = (0..runs)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_from(replicate_seed(master, r));
            let tree = bst_grow_tree(n, &mut rng).unwrap();
            tree.t(&w("0")).unwrap()
        })
        .collect();
    let m = stats::moments(&shares);
    let se = (m.variance / runs as f64).sqrt();
    assert!((m.mean - 0.5).abs() <= 5.0 * se, "mean {} se {se}", m.mean);
    assert!(
        (m.variance - 1.0 / 12.0).abs() <= 0.1 / 12.0,
        "variance {} vs 1/12",
        m.variance
    );

    // Mean sampled-limit masses are dyadic for |u| <= 3.
    let samples = 100_000u64;
    let master2 = 0xACCE_0209u64;
    let mut words = Vec::new();
    for len in 1..=3usize {
        for bits in 0..(1u32 << len) {
            words.push(Word::from_bits((0..len).map(|i| ((bits >> (len - 1 - i)) & 1) as u8)));
        }
    }
    let sums: Vec<f64> = (0..samples)
        .into_par_iter()
        .fold(
            || vec![0.0f64; words.len()],
            |mut acc, s| {
                let m = Measure::bst_limit(replicate_seed(master2, s));
                for (a, u) in acc.iter_mut().zip(&words) {
                    *a += m.mass(u);
                }
                acc
            },
        )
        .reduce(
            || vec![0.0f64; words.len()],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );
    for (sum, u) in sums.iter().zip(&words) {
        let mean = sum / samples as f64;
        let expect = 0.5f64.powi(u.len() as i32);
        // A mass is a product of |u| independent uniform factors; its
        // variance is (1/3)^{|u|} - (1/4)^{|u|}.
        let var = (1.0f64 / 3.0).powi(u.len() as i32) - (0.25f64).powi(u.len() as i32);
        let se = (var / samples as f64).sqrt();
        assert!((mean - expect).abs() <= 5.0 * se, "{u:?}: {mean} vs {expect}");
    }
    let dt = started.elapsed();
    assert!(dt.as_secs() < 300);
    println!(
        "ACCEPTANCE 09 PASS: shape-law agreement p = {:.3}, terminal share mean {:.4} \
         var {:.5} (1/12 = {:.5}), sampled-limit means dyadic for |u| <= 3 ({dt:?})",
        report.shapes.chi_square.p_value,
        m.mean,
        m.variance,
        1.0 / 12.0
    );
}

#[test]
fn criterion_10_determinism_across_workers() {
    let started = std::time::Instant::now();
    let mu = Measure::bernoulli(0.3).unwrap();
    let nodes = [w("0"), w("1"), w("00")];
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| {
            let rep = clt_experiment(&mu, 1_000, 500, &nodes, 0xACCE_0010).unwrap();
            (
                serde_json::to_string(&rep).unwrap(),
                treelimit::report::covariance_csv(&rep),
            )
        })
    };
    let (json1, csv1) = run(1);
    let (json2, csv2) = run(2);
    let (json4, csv4) = run(4);
    assert_eq!(json1, json2);
    assert_eq!(json1, json4);
    assert_eq!(csv1, csv2);
    assert_eq!(csv1, csv4);
    // And a repeated run in the same pool layout is byte-identical too.
    let (json1b, csv1b) = run(1);
    assert_eq!(json1, json1b);
    assert_eq!(csv1, csv1b);
    let dt = started.elapsed();
    assert!(dt.as_secs() < 60);
    println!(
        "ACCEPTANCE 10 PASS: reports byte-identical across 1/2/4 workers and repeats ({dt:?})"
    );
}
