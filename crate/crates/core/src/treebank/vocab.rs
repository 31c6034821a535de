use std::collections::{BTreeSet, HashMap};
use std::ops::Range;

use super::TreeError;

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const BOS: &str = "[BOS]";
pub const CONTINUATION: &str = "##";

/// Wordpiece inventory. Ids are line numbers of the vocabulary file; the
/// first three are reserved for [`PAD`], [`UNK`] and [`BOS`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    pieces: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn from_pieces<I, S>(pieces: I) -> Result<Self, TreeError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let pieces: Vec<String> = pieces.into_iter().map(Into::into).collect();
        for (i, reserved) in [PAD, UNK, BOS].iter().enumerate() {
            if pieces.get(i).map(String::as_str) != Some(*reserved) {
                return Err(TreeError::Vocab(format!("line {} must be {reserved}", i + 1)));
            }
        }
        let mut index = HashMap::with_capacity(pieces.len());
        for (id, p) in pieces.iter().enumerate() {
            if p.is_empty() {
                return Err(TreeError::Vocab(format!("empty wordpiece on line {}", id + 1)));
            }
            if index.insert(p.clone(), id).is_some() {
                return Err(TreeError::Vocab(format!("duplicate wordpiece {p:?}")));
            }
        }
        Ok(Self { pieces, index })
    }

    /// Parses the one-wordpiece-per-line file format.
    pub fn parse(text: &str) -> Result<Self, TreeError> {
        Self::from_pieces(text.lines().map(|l| l.trim_end_matches('\r')))
    }

    pub fn to_text(&self) -> String {
        let mut out = self.pieces.join("\n");
        out.push('\n');
        out
    }

    /// Vocabulary holding every whole token plus every character of the
    /// corpus in both initial and continuation form, so that tokenization
    /// never falls back to [`UNK`] on this corpus.
    pub fn from_corpus<'a>(tokens: impl IntoIterator<Item = &'a str>) -> Self {
        let mut words = BTreeSet::new();
        let mut chars = BTreeSet::new();
        for tok in tokens {
            words.insert(tok.to_string());
            for c in tok.chars() {
                chars.insert(c.to_string());
            }
        }
        let mut pieces: Vec<String> = vec![PAD.into(), UNK.into(), BOS.into()];
        let mut seen: BTreeSet<String> = pieces.iter().cloned().collect();
        let continuation = chars.iter().map(|c| format!("{CONTINUATION}{c}"));
        for p in chars.iter().cloned().chain(continuation).chain(words) {
            if seen.insert(p.clone()) {
                pieces.push(p);
            }
        }
        Self::from_pieces(pieces).expect("corpus vocabulary is well-formed")
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn id(&self, piece: &str) -> Option<usize> {
        self.index.get(piece).copied()
    }

    pub fn piece(&self, id: usize) -> Option<&str> {
        self.pieces.get(id).map(String::as_str)
    }

    pub fn unk_id(&self) -> usize {
        1
    }

    pub fn pieces(&self) -> &[String] {
        &self.pieces
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tokenized {
    pub pieces: Vec<String>,
    pub ids: Vec<usize>,
    /// Wordpiece range of each token.
    pub alignment: Vec<Range<usize>>,
    /// Characters that were not in the vocabulary and became [`UNK`].
    pub unknown: usize,
}

/// Greedy longest-match segmentation. Each token becomes a first piece
/// followed by `##`-prefixed continuations.
pub fn tokenize<S: AsRef<str>>(tokens: &[S], vocab: &Vocab) -> Tokenized {
    let mut out = Tokenized {
        pieces: Vec::new(),
        ids: Vec::new(),
        alignment: Vec::with_capacity(tokens.len()),
        unknown: 0,
    };
    for tok in tokens {
        let tok = tok.as_ref();
        let start_piece = out.pieces.len();
        let bounds: Vec<usize> = tok
            .char_indices()
            .map(|(i, _)| i)
            .chain(std::iter::once(tok.len()))
            .collect();
        let mut start = 0;
        while start + 1 < bounds.len() {
            let mut matched = None;
            for end in (start + 1..bounds.len()).rev() {
                let sub = &tok[bounds[start]..bounds[end]];
                let candidate = if start == 0 {
                    sub.to_string()
                } else {
                    format!("{CONTINUATION}{sub}")
                };
                if let Some(id) = vocab.id(&candidate) {
                    matched = Some((end, candidate, id));
                    break;
                }
            }
            match matched {
                Some((end, piece, id)) => {
                    out.pieces.push(piece);
                    out.ids.push(id);
                    start = end;
                }
                None => {
                    out.pieces.push(UNK.to_string());
                    out.ids.push(vocab.unk_id());
                    out.unknown += 1;
                    start += 1;
                }
            }
        }
        if out.pieces.len() == start_piece {
            // empty token string
            out.pieces.push(UNK.to_string());
            out.ids.push(vocab.unk_id());
            out.unknown += 1;
        }
        out.alignment.push(start_piece..out.pieces.len());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab(extra: &[&str]) -> Vocab {
        let mut pieces = vec![PAD, UNK, BOS];
        pieces.extend_from_slice(extra);
        Vocab::from_pieces(pieces).unwrap()
    }

    #[test]
    fn splits_shipping() {
        let v = vocab(&["ship", "##ping", "s", "h", "i", "p", "n", "g", "##s", "##h", "##i", "##p", "##n", "##g"]);
        let t = tokenize(&["shipping"], &v);
        assert_eq!(t.pieces, vec!["ship", "##ping"]);
        assert_eq!(t.alignment, vec![0..2]);
        assert_eq!(t.unknown, 0);
    }

    #[test]
    fn whole_token_is_one_piece() {
        let v = vocab(&["the", "cat"]);
        let t = tokenize(&["the", "cat"], &v);
        assert_eq!(t.alignment, vec![0..1, 1..2]);
        assert_eq!(t.ids, vec![3, 4]);
    }

    #[test]
    fn greedy_is_not_optimal() {
        let v = vocab(&["a", "aa", "##a", "##ab", "##b"]);
        let t = tokenize(&["aaab"], &v);
        assert_eq!(t.pieces, vec!["aa", "##ab"]);
    }

    #[test]
    fn unknown_characters_become_unk() {
        let v = vocab(&["a", "##a"]);
        let t = tokenize(&["aza"], &v);
        assert_eq!(t.pieces, vec!["a", UNK, "##a"]);
        assert_eq!(t.unknown, 1);
        assert_eq!(t.alignment, vec![0..3]);
    }

    #[test]
    fn file_format_round_trip_and_reserved_lines() {
        let v = Vocab::from_corpus(["cat", "dog"]);
        let again = Vocab::parse(&v.to_text()).unwrap();
        assert_eq!(v, again);
        for id in 0..v.len() {
            assert_eq!(v.id(v.piece(id).unwrap()), Some(id));
        }
        assert!(Vocab::parse("[UNK]\n[PAD]\n[BOS]\n").is_err());
        assert!(Vocab::parse("[PAD]\n[UNK]\n[BOS]\nx\nx\n").is_err());
    }
}
