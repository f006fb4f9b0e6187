//! Property tests for the structural invariants: count bookkeeping,
//! boundary cardinality, routing, group action, tree metric axioms, and
//! measure additivity on randomized inputs.

use proptest::prelude::*;
use treelimit::growth::{bst_grow, dst_grow, remy_grow, trajectory_probability};
use treelimit::measure::Measure;
use treelimit::seed::rng_from;
use treelimit::tree::BinaryTree;
use treelimit::word::{PaddedBits, Word};

fn arb_word(max_len: usize) -> impl Strategy<Value = Word> {
    proptest::collection::vec(any::<bool>(), 0..=max_len)
        .prop_map(|bits| Word::from_bits(bits.into_iter().map(u8::from)))
}

/// Random tree built by a sequence of uniform boundary insertions.
fn arb_tree(max_steps: usize) -> impl Strategy<Value = BinaryTree> {
    proptest::collection::vec(any::<u32>(), 0..max_steps).prop_map(|choices| {
        let mut t = BinaryTree::root_only();
        for c in choices {
            let boundary = t.external_boundary();
            t.insert(&boundary[c as usize % boundary.len()]).unwrap();
        }
        t
    })
}

fn xor_word(w: &Word, mask: &Word) -> Word {
    Word::from_bits((0..w.len()).map(|i| w.bit(i) ^ mask.bit(i)))
}

proptest! {
    #[test]
    fn counts_and_boundary_cardinality(tree in arb_tree(60)) {
        prop_assert_eq!(tree.external_boundary().len(), tree.len() + 1);
        for u in tree.node_words() {
            let (l, r) = tree.child_counts(&u).unwrap();
            prop_assert_eq!(tree.subtree_count(&u), 1 + l + r);
        }
    }

    #[test]
    fn relative_size_additivity(tree in arb_tree(60), u in arb_word(6)) {
        let n = tree.len() as u64;
        let t = tree.t_exact(&u).unwrap();
        let t0 = tree.t_exact(&u.child(0)).unwrap();
        let t1 = tree.t_exact(&u.child(1)).unwrap();
        if tree.contains(&u) {
            let unit = num::rational::Ratio::new(1u64, n);
            prop_assert_eq!(t, t0 + t1 + unit);
        } else {
            prop_assert_eq!(t, num::rational::Ratio::new(0, 1));
        }
    }

    #[test]
    fn boundary_sorted_and_ranked(tree in arb_tree(60)) {
        let boundary = tree.external_boundary();
        let mut sorted = boundary.clone();
        sorted.sort();
        prop_assert_eq!(&boundary, &sorted);
        for (i, v) in boundary.iter().enumerate() {
            prop_assert_eq!(&tree.rank_boundary(i as u64 + 1), v);
        }
    }

    #[test]
    fn exit_node_is_the_unique_boundary_prefix(
        tree in arb_tree(50),
        route in arb_word(12),
    ) {
        let mut bits = PaddedBits::new(&route, 0);
        let exit = tree.exit_node(&mut bits);
        // Oracle: scan the boundary for the unique word matching the
        // padded routing bits.
        let mut matches = tree.external_boundary();
        matches.retain(|v| {
            (0..v.len()).all(|i| {
                let bit = if i < route.len() { route.bit(i) } else { 0 };
                v.bit(i) == bit
            })
        });
        prop_assert_eq!(matches.len(), 1);
        prop_assert_eq!(&matches[0], &exit);
    }

    #[test]
    fn group_action_preserves_structure(tree in arb_tree(50), seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = rng_from(seed);
        let mask = Word::from_bits((0..tree.height()).map(|_| rng.random_range(0..2u8)));
        let acted = tree.group_act_word(&mask).unwrap();
        prop_assert_eq!(acted.len(), tree.len());
        prop_assert_eq!(acted.height(), tree.height());
        // Node words map by XOR; depth profile is preserved.
        let mut expect: Vec<Word> = tree.node_words().iter().map(|w| xor_word(w, &mask)).collect();
        expect.sort();
        let mut got = acted.node_words();
        got.sort();
        prop_assert_eq!(&got, &expect);
        // Boundary maps by XOR of the parent relabeling.
        let boundary_mask = Word::from_bits(mask.bits().chain([0]));
        let mut expect_boundary: Vec<Word> = tree
            .external_boundary()
            .iter()
            .map(|w| xor_word(w, &boundary_mask))
            .collect();
        expect_boundary.sort();
        prop_assert_eq!(acted.external_boundary(), expect_boundary);
        // Involution.
        prop_assert_eq!(acted.group_act_word(&mask).unwrap(), tree);
    }

    #[test]
    fn distance_is_a_metric_on_equal_sizes(
        steps_a in proptest::collection::vec(any::<u32>(), 0..40),
        steps_b in proptest::collection::vec(any::<u32>(), 0..40),
    ) {
        let build = |choices: &[u32]| {
            let mut t = BinaryTree::root_only();
            for &c in choices {
                let boundary = t.external_boundary();
                t.insert(&boundary[c as usize % boundary.len()]).unwrap();
            }
            t
        };
        let n = steps_a.len().min(steps_b.len());
        let x = build(&steps_a[..n]);
        let y = build(&steps_b[..n]);
        let dxy = x.distance(&y).unwrap();
        prop_assert!(dxy >= 0.0);
        prop_assert_eq!(dxy, y.distance(&x).unwrap());
        prop_assert_eq!(x.distance(&x).unwrap(), 0.0);
        // Zero distance identifies equal-size trees.
        if dxy == 0.0 {
            prop_assert_eq!(&x, &y);
        } else {
            prop_assert!(x != y);
        }
    }

    #[test]
    fn growth_trajectories_replay(seed in any::<u64>(), n in 1usize..60) {
        let mu = Measure::bernoulli(0.4).unwrap();
        for tr in [
            dst_grow(&mu, n, &mut rng_from(seed)).unwrap(),
            bst_grow(n, &mut rng_from(seed)).unwrap(),
            remy_grow(n, &mut rng_from(seed)).unwrap(),
        ] {
            let replayed = tr.replay().unwrap();
            prop_assert_eq!(&replayed, tr.final_tree());
            prop_assert_eq!(tr.n(), n);
        }
    }

    #[test]
    fn uniform_trajectory_probability_is_dyadic(seed in any::<u64>(), n in 1usize..40) {
        // Under the fair-coin measure the probability of a log is
        // 2^{-(total inserted depth)}, an independently computable value.
        let mu = Measure::uniform();
        let tr = dst_grow(&mu, n, &mut rng_from(seed)).unwrap();
        let depth_sum: i32 = tr.insertions().iter().map(|v| v.len() as i32).sum();
        let (p, lp) = trajectory_probability(&mu, &tr);
        prop_assert!((p - 0.5f64.powi(depth_sum)).abs() <= 1e-12 * p.max(1e-300));
        prop_assert!((lp - depth_sum as f64 * 0.5f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn word_concat_and_lcp(u in arb_word(10), v in arb_word(10)) {
        let uv = u.concat(&v);
        prop_assert_eq!(uv.len(), u.len() + v.len());
        prop_assert!(u.is_prefix_of(&uv));
        let lcp = u.longest_common_prefix(&v);
        prop_assert!(lcp.is_prefix_of(&u));
        prop_assert!(lcp.is_prefix_of(&v));
        // Maximality: the next bits differ or one word ends.
        let k = lcp.len();
        if k < u.len() && k < v.len() {
            prop_assert!(u.bit(k) != v.bit(k));
        }
    }

    #[test]
    fn boundary_measure_agrees_with_t0_on_closure(tree in arb_tree(50)) {
        let measure = Measure::boundary(tree.clone()).unwrap();
        for u in tree.node_words().iter().chain(tree.external_boundary().iter()) {
            let t0 = tree.t0(u).unwrap();
            let expect = *t0.numer() as f64 / *t0.denom() as f64;
            prop_assert!((measure.mass(u) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn table_roundtrip_at_depth(seed in any::<u64>(), depth in 1u32..6) {
        let m = Measure::bst_limit(seed);
        let masses = m.cylinder_masses(depth).unwrap();
        let table = Measure::table(masses.clone()).unwrap();
        let back = table.cylinder_masses(depth).unwrap();
        for (a, b) in masses.iter().zip(&back) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        let report = table.check_additivity(depth + 3, 1e-10);
        prop_assert!(report.pass);
    }
}
