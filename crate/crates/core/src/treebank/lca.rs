use std::ops::Range;

use super::{DepTree, TreeError};

/// Lowest common ancestor of every token in `tokens`.
pub fn lowest_common_ancestor(tree: &DepTree, tokens: &[usize]) -> Option<usize> {
    let (&first, rest) = tokens.split_first()?;
    tree.path_to_root(first)
        .into_iter()
        .find(|&cand| rest.iter().all(|&t| tree.in_subtree(t, cand)))
}

/// Tokens of the subtree rooted at the lowest common ancestor of both spans.
pub fn lca_prune(tree: &DepTree, span_a: Range<usize>, span_b: Range<usize>) -> Result<Vec<bool>, TreeError> {
    for span in [&span_a, &span_b] {
        if span.is_empty() || span.end > tree.len() {
            return Err(TreeError::Span {
                start: span.start,
                end: span.end,
                len: tree.len(),
            });
        }
    }
    let tokens: Vec<usize> = span_a.chain(span_b).collect();
    let lca = lowest_common_ancestor(tree, &tokens).expect("every token reaches the root");
    Ok((0..tree.len()).map(|i| tree.in_subtree(i, lca)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_cover_keeps_everything() {
        let tree = DepTree::from_heads(vec![2, 0, 2, 3]).unwrap();
        assert_eq!(lca_prune(&tree, 0..2, 2..4).unwrap(), vec![true; 4]);
    }

    #[test]
    fn chain_example() {
        // 1 <- 2 <- 3 <- 4, spans {1} and {3} (1-based) -> LCA 3
        let tree = DepTree::from_heads(vec![2, 3, 4, 0]).unwrap();
        assert_eq!(lowest_common_ancestor(&tree, &[0, 2]), Some(2));
        assert_eq!(lca_prune(&tree, 0..1, 2..3).unwrap(), vec![true, true, true, false]);
    }

    #[test]
    fn equal_spans() {
        let tree = DepTree::from_heads(vec![2, 0, 2, 3]).unwrap();
        let mask = lca_prune(&tree, 2..3, 2..3).unwrap();
        assert_eq!(mask, vec![false, false, true, true]);
    }

    #[test]
    fn rejects_bad_spans() {
        let tree = DepTree::from_heads(vec![2, 0]).unwrap();
        assert!(lca_prune(&tree, 1..1, 0..1).is_err());
        assert!(lca_prune(&tree, 0..3, 0..1).is_err());
    }
}
