use std::ops::Range;
use std::sync::Arc;

use super::{DepTree, TreeError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeOrigin {
    /// Dependency edge between the first wordpieces of head and dependent.
    Tree,
    /// First wordpiece of a token to one of its continuation pieces.
    Subword,
    SelfLoop,
}

/// Symmetric, self-looped wordpiece graph consumed by graph attention.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WordpieceGraph {
    adjacency: Arc<Vec<Vec<usize>>>,
    origins: Vec<Vec<EdgeOrigin>>,
}

impl WordpieceGraph {
    fn from_edges(m: usize, edges: &[(usize, usize, EdgeOrigin)]) -> Self {
        let mut lists: Vec<Vec<(usize, EdgeOrigin)>> = (0..m).map(|i| vec![(i, EdgeOrigin::SelfLoop)]).collect();
        for &(a, b, origin) in edges {
            if a == b {
                continue;
            }
            lists[a].push((b, origin));
            lists[b].push((a, origin));
        }
        let mut adjacency = Vec::with_capacity(m);
        let mut origins = Vec::with_capacity(m);
        for mut list in lists {
            list.sort_by_key(|&(j, _)| j);
            list.dedup_by_key(|&mut (j, _)| j);
            adjacency.push(list.iter().map(|&(j, _)| j).collect());
            origins.push(list.iter().map(|&(_, o)| o).collect());
        }
        Self {
            adjacency: Arc::new(adjacency),
            origins,
        }
    }

    /// Every node connected to every node (self included).
    pub fn complete(m: usize) -> Self {
        let edges: Vec<_> = (0..m)
            .flat_map(|i| (i + 1..m).map(move |j| (i, j, EdgeOrigin::Tree)))
            .collect();
        Self::from_edges(m, &edges)
    }

    /// Graph over an explicit adjacency list. Symmetrized; self-loops added.
    pub fn from_adjacency(lists: &[Vec<usize>]) -> Self {
        let edges: Vec<_> = lists
            .iter()
            .enumerate()
            .flat_map(|(i, l)| l.iter().map(move |&j| (i, j, EdgeOrigin::Tree)))
            .collect();
        Self::from_edges(lists.len(), &edges)
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn origins(&self, i: usize) -> &[EdgeOrigin] {
        &self.origins[i]
    }

    pub fn adjacency(&self) -> &Arc<Vec<Vec<usize>>> {
        &self.adjacency
    }

    /// Undirected edges excluding self-loops.
    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(|l| l.len() - 1).sum::<usize>() / 2
    }

    /// Directed adjacency entries, self-loops included.
    pub fn entry_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum()
    }

    /// Shortest-path hop counts from `source` (`usize::MAX` if unreachable).
    pub fn distances_from(&self, source: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.len()];
        let mut queue = std::collections::VecDeque::from([source]);
        dist[source] = 0;
        while let Some(i) = queue.pop_front() {
            for &j in self.neighbors(i) {
                if dist[j] == usize::MAX {
                    dist[j] = dist[i] + 1;
                    queue.push_back(j);
                }
            }
        }
        dist
    }
}

fn check_alignment(tree: &DepTree, alignment: &[Range<usize>]) -> Result<usize, TreeError> {
    if alignment.len() != tree.len() {
        return Err(TreeError::LengthMismatch {
            expected: tree.len(),
            found: alignment.len(),
        });
    }
    let mut next = 0;
    for (i, r) in alignment.iter().enumerate() {
        if r.start != next || r.is_empty() {
            return Err(TreeError::Alignment(format!(
                "token {i} has range {r:?}, expected to start at {next}"
            )));
        }
        next = r.end;
    }
    Ok(next)
}

/// Lifts a token-level tree onto wordpieces: dependency edges join first
/// pieces, and each token's first piece links to its remaining pieces.
pub fn build_wordpiece_graph(tree: &DepTree, alignment: &[Range<usize>]) -> Result<WordpieceGraph, TreeError> {
    build_pruned_graph(tree, alignment, None)
}

/// Like [`build_wordpiece_graph`], but dependency edges are kept only when
/// both endpoints are in `keep`. Subword and self edges are always kept.
pub fn build_pruned_graph(
    tree: &DepTree,
    alignment: &[Range<usize>],
    keep: Option<&[bool]>,
) -> Result<WordpieceGraph, TreeError> {
    let m = check_alignment(tree, alignment)?;
    if let Some(k) = keep {
        if k.len() != tree.len() {
            return Err(TreeError::LengthMismatch {
                expected: tree.len(),
                found: k.len(),
            });
        }
    }
    let kept = |i: usize| keep.is_none_or(|k| k[i]);
    let mut edges = Vec::new();
    for (h, d) in tree.edges() {
        if kept(h) && kept(d) {
            edges.push((alignment[h].start, alignment[d].start, EdgeOrigin::Tree));
        }
    }
    for r in alignment {
        for tail in r.start + 1..r.end {
            edges.push((r.start, tail, EdgeOrigin::Subword));
        }
    }
    Ok(WordpieceGraph::from_edges(m, &edges))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_tree() {
        let tree = DepTree::from_heads(vec![2, 0]).unwrap();
        let g = build_wordpiece_graph(&tree, &[0..1, 1..2]).unwrap();
        assert_eq!(g.neighbors(0), &[0, 1]);
        assert_eq!(g.neighbors(1), &[0, 1]);
    }

    #[test]
    fn subword_edges_are_flagged() {
        // "shipping" -> [ship, ##ping] attached to "ok"
        let tree = DepTree::from_heads(vec![0, 1]).unwrap();
        let g = build_wordpiece_graph(&tree, &[0..2, 2..3]).unwrap();
        assert_eq!(g.neighbors(0), &[0, 1, 2]);
        assert_eq!(g.origins(0), &[EdgeOrigin::SelfLoop, EdgeOrigin::Subword, EdgeOrigin::Tree]);
        assert_eq!(g.neighbors(1), &[0, 1]);
    }

    #[test]
    fn split_middle_token_degree() {
        // chain a -> b -> c with b split into three pieces
        let tree = DepTree::from_heads(vec![2, 3, 0]).unwrap();
        let alignment = [0..1, 1..4, 4..5];
        let g = build_wordpiece_graph(&tree, &alignment).unwrap();
        assert_eq!(g.neighbors(1), &[0, 1, 2, 3, 4]);
        assert_eq!(g.edge_count(), 2 + 2);
    }

    #[test]
    fn rejects_bad_alignment() {
        let tree = DepTree::from_heads(vec![2, 0]).unwrap();
        assert!(build_wordpiece_graph(&tree, &[0..1]).is_err());
        assert!(build_wordpiece_graph(&tree, &[0..1, 2..3]).is_err());
    }

    #[test]
    fn pruning_drops_tree_edges_outside_mask() {
        let tree = DepTree::from_heads(vec![2, 0, 2]).unwrap();
        let g = build_pruned_graph(&tree, &[0..1, 1..2, 2..4], Some(&[true, true, false])).unwrap();
        assert_eq!(g.neighbors(1), &[0, 1]);
        assert_eq!(g.neighbors(2), &[2, 3]);
    }
}
