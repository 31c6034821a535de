use std::collections::BTreeSet;
use std::ops::Range;

use crate::error::{Error, Result};
use crate::params::{Ctx, Init, ParamId, ParamStore};
use crate::tensor::{log_sum_exp, Tensor, Var};

pub const NO_RELATION: &str = "no_relation";

/// Relation inventory; always contains `no_relation`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelationSet {
    labels: Vec<String>,
}

impl RelationSet {
    /// Sorted unique labels plus `no_relation`.
    pub fn new<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut set: BTreeSet<String> = labels.into_iter().map(|l| l.as_ref().to_string()).collect();
        set.insert(NO_RELATION.to_string());
        Self {
            labels: set.into_iter().collect(),
        }
    }

    pub fn from_labels(labels: Vec<String>) -> Result<Self> {
        let unique: BTreeSet<&String> = labels.iter().collect();
        if unique.len() != labels.len() || !labels.iter().any(|l| l == NO_RELATION) {
            return Err(Error::Config("relation labels must be unique and include no_relation".into()));
        }
        Ok(Self { labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn id(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn label(&self, id: usize) -> &str {
        &self.labels[id]
    }

    pub fn no_relation(&self) -> usize {
        self.id(NO_RELATION).expect("no_relation is always present")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReHeadParams {
    /// `3d × R`.
    pub weight: ParamId,
    pub bias: ParamId,
}

impl ReHeadParams {
    pub fn new(store: &mut ParamStore, init: &mut Init, d: usize, relations: usize) -> Self {
        Self {
            weight: store.add("re.weight", init.normal(&[3 * d, relations])),
            bias: store.add("re.bias", Tensor::zeros(&[relations])),
        }
    }
}

/// Relation scores `[1 × R]` from max-pooled sentence, subject and object
/// vectors. The sentence vector pools over the tokens kept by `prune_mask`.
pub fn re_classify(
    ctx: &mut Ctx,
    states: Var,
    subj: Range<usize>,
    obj: Range<usize>,
    prune_mask: &[bool],
    params: &ReHeadParams,
) -> Result<Var> {
    let n = ctx.tape.shape(states)[0];
    if prune_mask.len() != n {
        return Err(Error::Input(format!("prune mask of {} for {n} tokens", prune_mask.len())));
    }
    for span in [&subj, &obj] {
        if span.is_empty() || span.end > n {
            return Err(Error::Input(format!("span {span:?} outside {n} tokens")));
        }
    }
    let kept: Vec<usize> = (0..n).filter(|&i| prune_mask[i]).collect();
    assert!(!kept.is_empty(), "pruned subtree always contains the entities");
    let sentence = ctx.tape.max_rows(states, &kept)?;
    let s = ctx.tape.max_rows(states, &subj.collect::<Vec<_>>())?;
    let o = ctx.tape.max_rows(states, &obj.collect::<Vec<_>>())?;
    let features = ctx.tape.concat_cols(&[sentence, s, o])?;
    let w = ctx.param(params.weight);
    let b = ctx.param(params.bias);
    let scores = ctx.tape.matmul(features, w)?;
    Ok(ctx.tape.add_row(scores, b)?)
}

/// `log Σ exp(s) - s[gold]` for a `1 × R` score row.
pub fn softmax_cross_entropy(ctx: &mut Ctx, scores: Var, gold: usize) -> Result<Var> {
    let s = ctx.tape.value(scores).data().to_vec();
    if gold >= s.len() {
        return Err(Error::Input(format!("relation id {gold} outside {} classes", s.len())));
    }
    let lse = log_sum_exp(s.iter().copied());
    let mut grad: Vec<f64> = s.iter().map(|x| (x - lse).exp()).collect();
    grad[gold] -= 1.0;
    Ok(ctx.tape.custom_scalar("softmax_cross_entropy", &[scores], lse - s[gold], vec![grad])?)
}
