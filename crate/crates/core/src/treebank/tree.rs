use super::TreeError;

/// Token-level dependency tree. `heads[i]` is the 1-based index of token
/// `i`'s head, with 0 marking the root.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DepTree {
    heads: Vec<usize>,
    deprels: Vec<String>,
    root: usize,
}

impl DepTree {
    pub fn new(heads: Vec<usize>, deprels: Vec<String>) -> Result<Self, TreeError> {
        if heads.len() != deprels.len() {
            return Err(TreeError::LengthMismatch {
                expected: heads.len(),
                found: deprels.len(),
            });
        }
        let root = validate_heads(&heads)?;
        Ok(Self {
            heads,
            deprels,
            root,
        })
    }

    /// Tree with every relation labelled `dep` (and `root` for the root).
    pub fn from_heads(heads: Vec<usize>) -> Result<Self, TreeError> {
        let deprels = heads
            .iter()
            .map(|&h| if h == 0 { "root" } else { "dep" }.to_string())
            .collect();
        Self::new(heads, deprels)
    }

    pub fn len(&self) -> usize {
        self.heads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heads.is_empty()
    }

    pub fn heads(&self) -> &[usize] {
        &self.heads
    }

    pub fn deprels(&self) -> &[String] {
        &self.deprels
    }

    /// 0-based index of the root token.
    pub fn root(&self) -> usize {
        self.root
    }

    /// 0-based head of token `i`, `None` for the root.
    pub fn head(&self, i: usize) -> Option<usize> {
        self.heads[i].checked_sub(1)
    }

    /// Non-root edges as 0-based `(head, dependent)` pairs, in dependent order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.len())
            .filter_map(|i| self.head(i).map(|h| (h, i)))
            .collect()
    }

    pub fn children(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.len()];
        for (h, d) in self.edges() {
            out[h].push(d);
        }
        out
    }

    /// Token `i` followed by its ancestors, ending at the root.
    pub fn path_to_root(&self, i: usize) -> Vec<usize> {
        let mut path = vec![i];
        let mut cur = i;
        while let Some(h) = self.head(cur) {
            path.push(h);
            cur = h;
        }
        path
    }

    /// Whether `node` lies in the subtree rooted at `ancestor` (inclusive).
    pub fn in_subtree(&self, node: usize, ancestor: usize) -> bool {
        let mut cur = Some(node);
        while let Some(c) = cur {
            if c == ancestor {
                return true;
            }
            cur = self.head(c);
        }
        false
    }

    pub(crate) fn set_head(&mut self, dependent: usize, new_head: usize, label: &str) {
        self.heads[dependent] = new_head + 1;
        self.deprels[dependent] = label.to_string();
    }
}

/// Checks the single-root, no-self-head, acyclic invariants and returns the
/// 0-based root index.
pub fn validate_heads(heads: &[usize]) -> Result<usize, TreeError> {
    let n = heads.len();
    if n == 0 {
        return Err(TreeError::Empty);
    }
    let mut root = None;
    for (i, &h) in heads.iter().enumerate() {
        if h > n {
            return Err(TreeError::HeadOutOfRange { token: i, head: h });
        }
        if h == i + 1 {
            return Err(TreeError::SelfAttachment(i));
        }
        if h == 0 {
            if let Some(prev) = root {
                return Err(TreeError::MultipleRoots(prev, i));
            }
            root = Some(i);
        }
    }
    let root = root.ok_or(TreeError::NoRoot)?;
    // 0 = unvisited, 1 = on current path, 2 = reaches the root
    let mut state = vec![0u8; n];
    state[root] = 2;
    for start in 0..n {
        let mut path = Vec::new();
        let mut cur = start;
        while state[cur] == 0 {
            state[cur] = 1;
            path.push(cur);
            cur = heads[cur] - 1;
        }
        if state[cur] == 1 {
            return Err(TreeError::Cycle(cur));
        }
        for p in path {
            state[p] = 2;
        }
    }
    Ok(root)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_invalid_heads() {
        assert_eq!(validate_heads(&[]), Err(TreeError::Empty));
        assert_eq!(validate_heads(&[1]), Err(TreeError::SelfAttachment(0)));
        assert_eq!(validate_heads(&[0, 0]), Err(TreeError::MultipleRoots(0, 1)));
        assert_eq!(validate_heads(&[2, 1]), Err(TreeError::NoRoot));
        assert!(matches!(validate_heads(&[0, 3, 2]), Err(TreeError::Cycle(_))));
        assert!(matches!(
            validate_heads(&[0, 7]),
            Err(TreeError::HeadOutOfRange { .. })
        ));
        assert_eq!(validate_heads(&[2, 0]), Ok(1));
    }

    #[test]
    fn navigation() {
        // chain 1 <- 2 <- 3 <- 4
        let t = DepTree::from_heads(vec![2, 3, 4, 0]).unwrap();
        assert_eq!(t.root(), 3);
        assert_eq!(t.path_to_root(0), vec![0, 1, 2, 3]);
        assert!(t.in_subtree(0, 2));
        assert!(!t.in_subtree(3, 2));
        assert_eq!(t.edges(), vec![(1, 0), (2, 1), (3, 2)]);
        assert_eq!(t.children()[3], vec![2]);
    }
}
