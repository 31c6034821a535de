use std::ops::Range;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sfl::heads::CrfPotentials;
use sfl::tensor::{Tape, Tensor};
use sfl::treebank::{build_wordpiece_graph, corrupt_tree, corruption_count, uas, DepTree, EdgeOrigin, CORRUPT_LABEL};

/// Random tree from a permutation and attachment choices: node `order[k]`
/// hangs under one of `order[..k]`.
fn tree_strategy(max_n: usize) -> impl Strategy<Value = DepTree> {
    (1..=max_n)
        .prop_flat_map(|n| (Just(n), Just((0..n).collect::<Vec<_>>()).prop_shuffle(), prop::collection::vec(any::<u32>(), n)))
        .prop_map(|(n, order, picks)| {
            let mut heads = vec![0; n];
            for k in 1..n {
                heads[order[k]] = order[picks[k] as usize % k] + 1;
            }
            DepTree::from_heads(heads).unwrap()
        })
}

/// Independent validity check: one root, no self-heads, every token reaches
/// the root within n steps.
fn is_valid(heads: &[usize]) -> bool {
    let n = heads.len();
    if heads.iter().filter(|&&h| h == 0).count() != 1 {
        return false;
    }
    (0..n).all(|i| {
        let mut cur = i;
        for _ in 0..=n {
            match heads[cur] {
                0 => return true,
                h if h > n || h - 1 == cur => return false,
                h => cur = h - 1,
            }
        }
        false
    })
}

fn alignment(pieces: &[usize]) -> Vec<Range<usize>> {
    let mut start = 0;
    pieces
        .iter()
        .map(|&p| {
            let r = start..start + p;
            start += p;
            r
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn corruption_keeps_trees_valid(tree in tree_strategy(14), rate in 0.0f64..=1.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = corrupt_tree(&tree, rate, &mut rng).unwrap();
        prop_assert!(is_valid(c.tree.heads()));
        let n = tree.len();
        if n >= 3 {
            prop_assert_eq!(c.rewired.len(), corruption_count(n, rate));
        }
        let changed: Vec<usize> = (0..n).filter(|&i| c.tree.heads()[i] != tree.heads()[i]).collect();
        let mut rewired = c.rewired.clone();
        rewired.sort_unstable();
        prop_assert_eq!(&changed, &rewired);
        for &i in &changed {
            prop_assert_eq!(c.tree.deprels()[i].as_str(), CORRUPT_LABEL);
        }
        let expect = 1.0 - changed.len() as f64 / n as f64;
        prop_assert!((uas(&c.tree, &tree).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn wordpiece_graph_invariants(
        (tree, pieces) in tree_strategy(10).prop_flat_map(|t| {
            let n = t.len();
            (Just(t), prop::collection::vec(1usize..4, n))
        })
    ) {
        let align = alignment(&pieces);
        let g = build_wordpiece_graph(&tree, &align).unwrap();
        let m: usize = pieces.iter().sum();
        prop_assert_eq!(g.len(), m);
        for i in 0..m {
            let nb = g.neighbors(i);
            prop_assert!(nb.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(nb.contains(&i));
            for &j in nb {
                prop_assert!(g.neighbors(j).contains(&i));
            }
        }
        // expected edge set, built independently
        let mut want = std::collections::BTreeSet::new();
        for (d, &h) in tree.heads().iter().enumerate() {
            if h > 0 {
                let (a, b) = (align[h - 1].start, align[d].start);
                want.insert((a.min(b), a.max(b)));
            }
        }
        for r in &align {
            for t in r.start + 1..r.end {
                want.insert((r.start, t));
            }
        }
        let got: std::collections::BTreeSet<(usize, usize)> = (0..m)
            .flat_map(|i| g.neighbors(i).iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
            .collect();
        prop_assert_eq!(&got, &want);
        prop_assert_eq!(g.edge_count(), want.len());
        prop_assert_eq!(g.entry_count(), m + 2 * want.len());
        for r in &align {
            for t in r.start + 1..r.end {
                let k = g.neighbors(r.start).iter().position(|&j| j == t).unwrap();
                prop_assert_eq!(g.origins(r.start)[k], EdgeOrigin::Subword);
                // continuation pieces touch only their first piece
                prop_assert_eq!(g.neighbors(t), &[r.start.min(t), r.start.max(t)][..]);
            }
        }
    }

    #[test]
    fn softmax_rows_are_distributions(
        rows in 1usize..5,
        cols in 1usize..7,
        values in prop::collection::vec(-30.0f64..30.0, 35),
        mask_bits in prop::collection::vec(any::<bool>(), 35),
    ) {
        let data: Vec<f64> = values[..rows * cols].to_vec();
        let mut mask: Vec<bool> = mask_bits[..rows * cols].to_vec();
        for r in 0..rows {
            mask[r * cols + r % cols] = true;
        }
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::new(&[rows, cols], data).unwrap());
        let y = tape.masked_softmax(x, &mask).unwrap();
        let y = tape.value(y);
        for r in 0..rows {
            let row = y.row(r);
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for c in 0..cols {
                prop_assert!(row[c] >= 0.0);
                if !mask[r * cols + c] {
                    prop_assert_eq!(row[c], 0.0);
                }
            }
        }
    }

    #[test]
    fn crf_distribution_is_normalized(
        n in 1usize..5,
        t in 2usize..4,
        values in prop::collection::vec(-3.0f64..3.0, 4 * 3 + 9 + 6),
    ) {
        let emit = Tensor::new(&[n, t], values[..n * t].to_vec()).unwrap();
        let trans = Tensor::new(&[t, t], values[12..12 + t * t].to_vec()).unwrap();
        let start = Tensor::vector(values[21..21 + t].to_vec()).unwrap();
        let end = Tensor::vector(values[24..24 + t].to_vec()).unwrap();
        let crf = CrfPotentials::new(&emit, &trans, &start, &end, None).unwrap();
        let log_z = crf.log_partition();
        let mut total = 0.0;
        let mut tags = vec![0; n];
        loop {
            total += (crf.score(&tags).unwrap() - log_z).exp();
            let mut k = 0;
            while k < n && tags[k] == t - 1 {
                tags[k] = 0;
                k += 1;
            }
            if k == n {
                break;
            }
            tags[k] += 1;
        }
        prop_assert!((total - 1.0).abs() < 1e-9);
        let m = crf.marginals();
        for i in 0..n {
            prop_assert!((m.unary[i * t..(i + 1) * t].iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        prop_assert!((m.pair.iter().sum::<f64>() - (n - 1) as f64).abs() < 1e-9);
    }

    #[test]
    fn validity_oracle_agrees_with_parser(heads in prop::collection::vec(0usize..8, 1..8)) {
        prop_assert_eq!(is_valid(&heads), DepTree::from_heads(heads.clone()).is_ok());
    }
}
