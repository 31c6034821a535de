use rand::seq::SliceRandom;
use rand::Rng;

use super::{DepTree, TreeError};

/// Relation label given to rewired edges.
pub const CORRUPT_LABEL: &str = "_corrupt";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corruption {
    pub tree: DepTree,
    /// 0-based tokens whose head was changed, in rewiring order.
    pub rewired: Vec<usize>,
    /// Set when the tree is too small for any legal rewiring.
    pub too_small: bool,
}

/// Number of tokens `corrupt_tree` aims to rewire.
pub fn corruption_count(n: usize, rate: f64) -> usize {
    if n == 0 {
        return 0;
    }
    // small slack so that e.g. 0.3 * 10 is not floored to 2
    ((rate * (n - 1) as f64) + 1e-9).floor() as usize
}

/// Re-attaches `floor(rate * (n - 1))` distinct non-root tokens to new heads.
///
/// Each new head differs from the token itself, from its current head, and
/// from every token in its subtree, so the result stays a single-rooted tree.
/// Tokens whose subtree leaves no legal target are retried after the others.
pub fn corrupt_tree<R: Rng + ?Sized>(tree: &DepTree, rate: f64, rng: &mut R) -> Result<Corruption, TreeError> {
    if !(0.0..=1.0).contains(&rate) || rate.is_nan() {
        return Err(TreeError::InvalidRate(rate));
    }
    let n = tree.len();
    let target = corruption_count(n, rate);
    if target == 0 {
        return Ok(Corruption {
            tree: tree.clone(),
            rewired: Vec::new(),
            too_small: false,
        });
    }
    if n < 3 {
        return Ok(Corruption {
            tree: tree.clone(),
            rewired: Vec::new(),
            too_small: true,
        });
    }
    let mut order: Vec<usize> = (0..n).filter(|&i| i != tree.root()).collect();
    order.shuffle(rng);
    let mut pending = order;
    pending.truncate(n - 1);

    let mut out = tree.clone();
    let mut rewired = Vec::with_capacity(target);
    while rewired.len() < target {
        let mut progressed = false;
        let mut deferred = Vec::new();
        for &tok in &pending {
            if rewired.len() == target {
                break;
            }
            let current = out.head(tok).expect("non-root token has a head");
            let candidates: Vec<usize> = (0..n)
                .filter(|&c| c != tok && c != current && !out.in_subtree(c, tok))
                .collect();
            if candidates.is_empty() {
                deferred.push(tok);
                continue;
            }
            let new_head = candidates[rng.random_range(0..candidates.len())];
            out.set_head(tok, new_head, CORRUPT_LABEL);
            rewired.push(tok);
            progressed = true;
        }
        if !progressed {
            break;
        }
        pending = deferred;
    }
    debug_assert!(super::validate_heads(out.heads()).is_ok());
    Ok(Corruption {
        tree: out,
        rewired,
        too_small: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::treebank::uas;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_rate_is_identity() {
        let tree = DepTree::from_heads(vec![2, 0, 2, 3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = corrupt_tree(&tree, 0.0, &mut rng).unwrap();
        assert_eq!(c.tree, tree);
        assert_eq!(uas(&c.tree, &tree).unwrap(), 1.0);
    }

    #[test]
    fn tiny_trees_are_flagged() {
        let tree = DepTree::from_heads(vec![2, 0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = corrupt_tree(&tree, 1.0, &mut rng).unwrap();
        assert!(c.too_small);
        assert_eq!(c.tree, tree);
    }

    #[test]
    fn rejects_bad_rate() {
        let tree = DepTree::from_heads(vec![0, 1, 1]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(corrupt_tree(&tree, 1.5, &mut rng).is_err());
        assert!(corrupt_tree(&tree, f64::NAN, &mut rng).is_err());
    }

    #[test]
    fn rewired_labels_use_sentinel() {
        let tree = DepTree::from_heads(vec![0, 1, 1, 1, 1]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let c = corrupt_tree(&tree, 0.5, &mut rng).unwrap();
        assert_eq!(c.rewired.len(), 2);
        for &t in &c.rewired {
            assert_eq!(c.tree.deprels()[t], CORRUPT_LABEL);
        }
    }
}
