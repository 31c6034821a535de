//! Sentences, dependency trees, wordpiece alignment and the tooling around
//! them: CoNLL-U ingestion, wordpiece graphs, attachment scores, controlled
//! tree corruption and lowest-common-ancestor pruning.

mod conllu;
mod corrupt;
mod graph;
mod lca;
mod sentence;
mod tree;
mod vocab;

pub use conllu::{read_conllu, write_conllu, ConlluSentence};
pub use corrupt::{corrupt_tree, corruption_count, Corruption, CORRUPT_LABEL};
pub use graph::{build_pruned_graph, build_wordpiece_graph, EdgeOrigin, WordpieceGraph};
pub use lca::{lca_prune, lowest_common_ancestor};
pub use sentence::{read_records, write_records, Payload, PayloadKind, Record, Sentence};
pub use tree::{validate_heads, DepTree};
pub use vocab::{tokenize, Tokenized, Vocab, BOS, CONTINUATION, PAD, UNK};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TreeError {
    #[error("empty tree")]
    Empty,
    #[error("no root token")]
    NoRoot,
    #[error("multiple roots (tokens {0} and {1})")]
    MultipleRoots(usize, usize),
    #[error("token {0} is its own head")]
    SelfAttachment(usize),
    #[error("head graph contains a cycle through token {0}")]
    Cycle(usize),
    #[error("token {token} has head {head} outside the sentence")]
    HeadOutOfRange { token: usize, head: usize },
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("span {start}..{end} invalid for {len} tokens")]
    Span { start: usize, end: usize, len: usize },
    #[error("corruption rate {0} outside [0, 1]")]
    InvalidRate(f64),
    #[error("invalid alignment: {0}")]
    Alignment(String),
    #[error("CoNLL-U block {block}, line {line}: {message}")]
    Conllu {
        block: usize,
        line: usize,
        message: String,
    },
    #[error("vocabulary: {0}")]
    Vocab(String),
    #[error("dataset: {0}")]
    Dataset(String),
}

/// Unlabeled attachment score: fraction of tokens whose head matches gold.
pub fn uas(predicted: &DepTree, gold: &DepTree) -> Result<f64, TreeError> {
    if predicted.len() != gold.len() {
        return Err(TreeError::LengthMismatch {
            expected: gold.len(),
            found: predicted.len(),
        });
    }
    let matches = predicted
        .heads()
        .iter()
        .zip(gold.heads())
        .filter(|(a, b)| a == b)
        .count();
    Ok(matches as f64 / gold.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uas_counts_matching_heads() {
        let gold = DepTree::from_heads(vec![2, 0, 2, 3]).unwrap();
        assert_eq!(uas(&gold, &gold).unwrap(), 1.0);
        let pred = DepTree::from_heads(vec![2, 0, 2, 2]).unwrap();
        assert_eq!(uas(&pred, &gold).unwrap(), 0.75);
        let short = DepTree::from_heads(vec![0]).unwrap();
        assert!(uas(&short, &gold).is_err());
    }
}
