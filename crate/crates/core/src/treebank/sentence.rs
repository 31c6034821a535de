use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{tokenize, DepTree, TreeError, Vocab};

/// Task annotation carried by a sentence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Payload {
    Tags(Vec<String>),
    Srl { predicate: usize, tags: Vec<String> },
    Relation {
        subj: Range<usize>,
        obj: Range<usize>,
        relation: String,
    },
}

impl Payload {
    pub fn kind(&self) -> PayloadKind {
        match self {
            Payload::Tags(_) => PayloadKind::Tags,
            Payload::Srl { .. } => PayloadKind::Srl,
            Payload::Relation { .. } => PayloadKind::Relation,
        }
    }

    pub fn tags(&self) -> Option<&[String]> {
        match self {
            Payload::Tags(t) | Payload::Srl { tags: t, .. } => Some(t),
            Payload::Relation { .. } => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PayloadKind {
    Tags,
    Srl,
    Relation,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sentence {
    pub tokens: Vec<String>,
    pub wordpieces: Vec<String>,
    pub wordpiece_ids: Vec<usize>,
    pub alignment: Vec<Range<usize>>,
    pub tree: DepTree,
    pub payload: Payload,
}

impl Sentence {
    pub fn new(tokens: Vec<String>, tree: DepTree, payload: Payload, vocab: &Vocab) -> Result<Self, TreeError> {
        let n = tokens.len();
        if tree.len() != n {
            return Err(TreeError::LengthMismatch {
                expected: n,
                found: tree.len(),
            });
        }
        match &payload {
            Payload::Tags(tags) => check_len(n, tags.len())?,
            Payload::Srl { predicate, tags } => {
                check_len(n, tags.len())?;
                if *predicate >= n {
                    return Err(TreeError::Span {
                        start: *predicate,
                        end: predicate + 1,
                        len: n,
                    });
                }
            }
            Payload::Relation { subj, obj, .. } => {
                for s in [subj, obj] {
                    if s.is_empty() || s.end > n {
                        return Err(TreeError::Span {
                            start: s.start,
                            end: s.end,
                            len: n,
                        });
                    }
                }
            }
        }
        let t = tokenize(&tokens, vocab);
        Ok(Self {
            tokens,
            wordpieces: t.pieces,
            wordpiece_ids: t.ids,
            alignment: t.alignment,
            tree,
            payload,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn with_tree(&self, tree: DepTree) -> Result<Self, TreeError> {
        check_len(self.len(), tree.len())?;
        Ok(Self {
            tree,
            ..self.clone()
        })
    }

    /// Per-wordpiece predicate indicator (1 on every piece of the predicate).
    pub fn indicator_ids(&self) -> Option<Vec<usize>> {
        match &self.payload {
            Payload::Srl { predicate, .. } => {
                let mut ids = vec![0; self.wordpieces.len()];
                for p in self.alignment[*predicate].clone() {
                    ids[p] = 1;
                }
                Some(ids)
            }
            _ => None,
        }
    }

    pub fn from_record(record: &Record, vocab: &Vocab) -> Result<Self, TreeError> {
        let tree = DepTree::new(record.heads.clone(), record.deprels.clone())?;
        let payload = match (&record.tags, record.predicate, &record.subj, &record.obj, &record.relation) {
            (Some(tags), None, None, None, None) => Payload::Tags(tags.clone()),
            (Some(tags), Some(p), None, None, None) => Payload::Srl {
                predicate: p,
                tags: tags.clone(),
            },
            (None, None, Some(s), Some(o), Some(r)) => Payload::Relation {
                subj: s[0]..s[1],
                obj: o[0]..o[1],
                relation: r.clone(),
            },
            _ => {
                return Err(TreeError::Dataset(
                    "record must carry exactly one of: tags | predicate+tags | subj+obj+relation".into(),
                ))
            }
        };
        Self::new(record.tokens.clone(), tree, payload, vocab)
    }

    pub fn to_record(&self) -> Record {
        let mut rec = Record {
            tokens: self.tokens.clone(),
            heads: self.tree.heads().to_vec(),
            deprels: self.tree.deprels().to_vec(),
            tags: None,
            predicate: None,
            subj: None,
            obj: None,
            relation: None,
        };
        match &self.payload {
            Payload::Tags(t) => rec.tags = Some(t.clone()),
            Payload::Srl { predicate, tags } => {
                rec.predicate = Some(*predicate);
                rec.tags = Some(tags.clone());
            }
            Payload::Relation { subj, obj, relation } => {
                rec.subj = Some([subj.start, subj.end]);
                rec.obj = Some([obj.start, obj.end]);
                rec.relation = Some(relation.clone());
            }
        }
        rec
    }
}

fn check_len(expected: usize, found: usize) -> Result<(), TreeError> {
    if expected != found {
        return Err(TreeError::LengthMismatch { expected, found });
    }
    Ok(())
}

/// One line of the dataset file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Record {
    pub tokens: Vec<String>,
    pub heads: Vec<usize>,
    pub deprels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tags: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicate: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subj: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub obj: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relation: Option<String>,
}

pub fn read_records(text: &str) -> Result<Vec<Record>, TreeError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| TreeError::Dataset(format!("line {}: {e}", i + 1)))
        })
        .collect()
}

pub fn write_records(records: &[Record]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_variants() {
        let vocab = Vocab::from_corpus(["a", "b", "c"]);
        let line = r#"{"tokens":["a","b","c"],"heads":[2,0,2],"deprels":["x","root","y"],"subj":[0,1],"obj":[2,3],"relation":"r"}"#;
        let recs = read_records(line).unwrap();
        let s = Sentence::from_record(&recs[0], &vocab).unwrap();
        assert!(matches!(s.payload, Payload::Relation { .. }));
        assert_eq!(s.to_record(), recs[0]);

        let srl = r#"{"tokens":["a","b"],"heads":[2,0],"deprels":["x","root"],"predicate":1,"tags":["B-A0","O"]}"#;
        let s = Sentence::from_record(&read_records(srl).unwrap()[0], &vocab).unwrap();
        assert_eq!(s.indicator_ids(), Some(vec![0, 1]));

        let both = r#"{"tokens":["a"],"heads":[0],"deprels":["root"],"tags":["O"],"relation":"r"}"#;
        assert!(Sentence::from_record(&read_records(both).unwrap()[0], &vocab).is_err());
        let short = r#"{"tokens":["a","b"],"heads":[2,0],"deprels":["x","root"],"tags":["O"]}"#;
        assert!(Sentence::from_record(&read_records(short).unwrap()[0], &vocab).is_err());
        assert!(read_records("{not json}").is_err());
    }
}
