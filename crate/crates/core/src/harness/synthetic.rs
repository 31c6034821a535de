use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::HeadSpec;
use crate::heads::TagSet;
use crate::treebank::{DepTree, Payload, Sentence, Vocab};

use super::{stream_rng, DATA_STREAM};

/// Head-copy task: each token is tagged with the class of its head
/// token; the root carries its own class.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub vocab_size: usize,
    pub classes: usize,
    pub min_len: usize,
    pub max_len: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            vocab_size: 40,
            classes: 8,
            min_len: 5,
            max_len: 12,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 || self.vocab_size < self.classes {
            return Err(Error::Config(format!(
                "synthetic task needs vocab_size >= classes >= 2 (got {} and {})",
                self.vocab_size, self.classes
            )));
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return Err(Error::Config(format!(
                "bad length range {}..={}",
                self.min_len, self.max_len
            )));
        }
        Ok(())
    }

    pub fn token(&self, k: usize) -> String {
        format!("w{k}")
    }

    /// Fixed class of token type `k`.
    pub fn class_of(&self, k: usize) -> usize {
        k % self.classes
    }

    pub fn label(&self, class: usize) -> String {
        format!("c{class}")
    }

    pub fn vocab(&self) -> Vocab {
        let tokens: Vec<String> = (0..self.vocab_size).map(|k| self.token(k)).collect();
        Vocab::from_corpus(tokens.iter().map(String::as_str))
    }

    pub fn tag_set(&self) -> TagSet {
        TagSet::from_labels((0..self.classes).map(|c| self.label(c)))
    }

    pub fn head_spec(&self) -> HeadSpec {
        HeadSpec::Tagging {
            tags: self.tag_set().tags().to_vec(),
            bio_constraints: false,
        }
    }

    /// Token type ids backing a generated sentence.
    pub fn type_ids(&self, sentence: &Sentence) -> Vec<usize> {
        sentence
            .tokens
            .iter()
            .map(|t| t[1..].parse().expect("synthetic token"))
            .collect()
    }
}

/// `count` sentences with uniformly drawn tokens and lengths. The first
/// token is the root; every later token attaches to a uniformly chosen
/// earlier token.
pub fn make_synthetic<R: Rng + ?Sized>(spec: &SyntheticSpec, count: usize, rng: &mut R) -> Result<Vec<Sentence>> {
    spec.validate()?;
    let vocab = spec.vocab();
    (0..count)
        .map(|_| {
            let n = rng.random_range(spec.min_len..=spec.max_len);
            let types: Vec<usize> = (0..n).map(|_| rng.random_range(0..spec.vocab_size)).collect();
            let heads: Vec<usize> = (0..n)
                .map(|i| if i == 0 { 0 } else { rng.random_range(1..=i) })
                .collect();
            let tree = DepTree::from_heads(heads)?;
            let tags = (0..n)
                .map(|i| {
                    let src = tree.head(i).unwrap_or(i);
                    format!("B-{}", spec.label(spec.class_of(types[src])))
                })
                .collect();
            let tokens = types.iter().map(|&k| spec.token(k)).collect();
            Ok(Sentence::new(tokens, tree, Payload::Tags(tags), &vocab)?)
        })
        .collect()
}

/// Splits drawn from data sub-streams `0, 1, 2, ...` of `seed`, one per
/// entry of `sizes`. `synth --split i` writes split `i`.
pub fn synthetic_splits(spec: &SyntheticSpec, seed: u64, sizes: &[usize]) -> Result<Vec<Vec<Sentence>>> {
    sizes
        .iter()
        .enumerate()
        .map(|(i, &count)| make_synthetic(spec, count, &mut stream_rng(seed, DATA_STREAM, i as u64)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::treebank::validate_heads;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_sentences_follow_the_rule() {
        let spec = SyntheticSpec::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data = make_synthetic(&spec, 50, &mut rng).unwrap();
        for s in &data {
            assert!((5..=12).contains(&s.len()));
            assert!(validate_heads(s.tree.heads()).is_ok());
            assert_eq!(s.wordpieces.len(), s.len());
            let types = spec.type_ids(s);
            let tags = s.payload.tags().unwrap();
            for i in 0..s.len() {
                let src = s.tree.head(i).unwrap_or(i);
                assert_eq!(tags[i], format!("B-c{}", types[src] % 8));
            }
        }
    }

    #[test]
    fn identity_classes_reveal_head_identity() {
        let spec = SyntheticSpec {
            vocab_size: 4,
            classes: 4,
            ..SyntheticSpec::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for s in make_synthetic(&spec, 10, &mut rng).unwrap() {
            let types = spec.type_ids(&s);
            for (i, tag) in s.payload.tags().unwrap().iter().enumerate() {
                let head = s.tree.head(i).unwrap_or(i);
                assert_eq!(tag, &format!("B-c{}", types[head]));
            }
        }
    }

    #[test]
    fn rejects_bad_specs() {
        let spec = SyntheticSpec {
            classes: 1,
            ..SyntheticSpec::default()
        };
        assert!(spec.validate().is_err());
    }
}
