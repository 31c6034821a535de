//! Task output layers: a linear-chain CRF tagger and a relation classifier.

mod crf;
mod relation;
mod spans;

pub use crf::{crf_log_likelihood, emissions, viterbi_decode, Constraints, CrfParams, CrfPotentials, Marginals};
pub use relation::{re_classify, softmax_cross_entropy, RelationSet, ReHeadParams, NO_RELATION};
pub use spans::{extract_spans, render_tags, Span};

use std::collections::BTreeSet;

use crate::error::{Error, Result};

pub const OUTSIDE: &str = "O";

/// BIO tag inventory. `O` is always id 0; each label contributes `B-X`
/// followed by `I-X`, labels in sorted order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TagSet {
    tags: Vec<String>,
}

impl TagSet {
    pub fn new(tags: Vec<String>) -> Result<Self> {
        if !tags.iter().any(|t| t == OUTSIDE) {
            return Err(Error::Config("tag set needs an O tag".into()));
        }
        let mut seen = BTreeSet::new();
        for t in &tags {
            if !seen.insert(t.as_str()) {
                return Err(Error::Config(format!("duplicate tag {t}")));
            }
            if t != OUTSIDE && !(t.starts_with("B-") || t.starts_with("I-")) || t.len() == 2 {
                return Err(Error::Config(format!("tag {t:?} is not O, B-X or I-X")));
            }
        }
        for t in &tags {
            if let Some(label) = t.strip_prefix("I-") {
                if !seen.contains(format!("B-{label}").as_str()) {
                    return Err(Error::Config(format!("tag {t} has no matching B-{label}")));
                }
            }
        }
        Ok(Self { tags })
    }

    pub fn from_labels<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let labels: BTreeSet<String> = labels.into_iter().map(|l| l.as_ref().to_string()).collect();
        let mut tags = vec![OUTSIDE.to_string()];
        for l in labels {
            tags.push(format!("B-{l}"));
            tags.push(format!("I-{l}"));
        }
        Self { tags }
    }

    /// Collects every span label appearing in `sequences`.
    pub fn from_sequences<'a>(sequences: impl IntoIterator<Item = &'a [String]>) -> Self {
        let labels: BTreeSet<&str> = sequences
            .into_iter()
            .flatten()
            .filter_map(|t| t.strip_prefix("B-").or_else(|| t.strip_prefix("I-")))
            .collect();
        Self::from_labels(labels)
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    pub fn id(&self, tag: &str) -> Option<usize> {
        self.tags.iter().position(|t| t == tag)
    }

    pub fn tag(&self, id: usize) -> &str {
        &self.tags[id]
    }

    pub fn encode(&self, tags: &[String]) -> Result<Vec<usize>> {
        tags.iter()
            .map(|t| self.id(t).ok_or_else(|| Error::Compat(format!("tag {t:?} not in the tag set"))))
            .collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&i| self.tags[i].clone()).collect()
    }

    /// Forbids `I-X` at the start and after anything but `B-X` / `I-X`.
    pub fn bio_constraints(&self) -> Constraints {
        let t = self.len();
        let label = |i: usize| self.tags[i].get(2..).unwrap_or("");
        let inside = |i: usize| self.tags[i].starts_with("I-");
        let start = (0..t).map(|j| !inside(j)).collect();
        let mut trans = vec![true; t * t];
        for a in 0..t {
            for b in 0..t {
                if inside(b) && (self.tags[a] == OUTSIDE || label(a) != label(b)) {
                    trans[a * t + b] = false;
                }
            }
        }
        Constraints { start, trans }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tag_set_layout() {
        let ts = TagSet::from_labels(["B", "A"]);
        assert_eq!(ts.tags(), ["O", "B-A", "I-A", "B-B", "I-B"]);
        assert_eq!(ts.id("I-B"), Some(4));
        let seqs = [vec!["B-X".to_string(), "I-X".into(), "O".into()]];
        let ts = TagSet::from_sequences(seqs.iter().map(Vec::as_slice));
        assert_eq!(ts.tags(), ["O", "B-X", "I-X"]);
    }

    #[test]
    fn tag_set_validation() {
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        assert!(TagSet::new(s(&["O", "B-A", "I-A"])).is_ok());
        assert!(TagSet::new(s(&["B-A"])).is_err());
        assert!(TagSet::new(s(&["O", "I-A"])).is_err());
        assert!(TagSet::new(s(&["O", "X"])).is_err());
        assert!(TagSet::new(s(&["O", "O"])).is_err());
    }

    #[test]
    fn constraints_forbid_orphan_inside() {
        let ts = TagSet::from_labels(["A", "B"]);
        let c = ts.bio_constraints();
        let t = ts.len();
        let (o, ba, ia, ib) = (0, 1, 2, 4);
        assert!(!c.start[ia]);
        assert!(c.trans[ba * t + ia]);
        assert!(c.trans[ia * t + ia]);
        assert!(!c.trans[o * t + ia]);
        assert!(!c.trans[ba * t + ib]);
    }
}
