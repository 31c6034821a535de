//! Relation classification with LCA-subtree pruning. Instances are drawn
//! from synthetic trees; the label says how the object token hangs off the
//! subject token, so only a tree-aware model can learn it.
//!
//! cargo run --release --example relation_extraction -- [epochs]

use sfl::fusion::{FusionModel, HeadSpec, ModelConfig, Variant};
use sfl::harness::{evaluate, synthetic_splits, train, SyntheticSpec, TrainConfig};
use sfl::heads::RelationSet;
use sfl::treebank::{lca_prune, Payload, Sentence, Vocab};

fn relation(s: &Sentence, a: usize, b: usize) -> &'static str {
    let (ha, hb) = (s.tree.head(a), s.tree.head(b));
    if hb == Some(a) {
        "parent_of"
    } else if ha == Some(b) {
        "child_of"
    } else if ha.is_some() && ha == hb {
        "sibling"
    } else {
        "no_relation"
    }
}

fn instances(data: &[Sentence], vocab: &Vocab) -> sfl::Result<Vec<Sentence>> {
    let mut out = Vec::new();
    for (k, s) in data.iter().enumerate() {
        let n = s.len();
        let (a, b) = (k % n, (k * 7 + 3) % n);
        if a == b {
            continue;
        }
        let payload = Payload::Relation {
            subj: a..a + 1,
            obj: b..b + 1,
            relation: relation(s, a, b).to_string(),
        };
        out.push(Sentence::new(s.tokens.clone(), s.tree.clone(), payload, vocab)?);
    }
    Ok(out)
}

fn main() -> sfl::Result<()> {
    let epochs = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(6);
    let spec = SyntheticSpec::default();
    let vocab = spec.vocab();
    let splits = synthetic_splits(&spec, 3, &[1200, 300])?;
    let (data, test) = (instances(&splits[0], &vocab)?, instances(&splits[1], &vocab)?);

    // first instance whose pruned subtree drops something
    for s in &test {
        if let Payload::Relation { subj, obj, relation } = &s.payload {
            let keep = lca_prune(&s.tree, subj.clone(), obj.clone())?;
            if keep.contains(&false) {
                println!("heads {:?}, subj {subj:?}, obj {obj:?} -> {relation}", s.tree.heads());
                println!("LCA subtree mask {keep:?}");
                break;
            }
        }
    }

    let relations = RelationSet::new(["parent_of", "child_of", "sibling"]);
    let head = HeadSpec::Relation {
        labels: relations.labels().to_vec(),
    };
    for variant in [Variant::Baseline, Variant::Late] {
        let mut config = ModelConfig::desk(variant, vocab.len(), head.clone());
        config.encoder.layers = 2;
        config.gnn.layers = 2;
        let model = FusionModel::new(config, vocab.clone(), 3)?;
        let outcome = train(
            model,
            &data,
            &[],
            &TrainConfig {
                epochs,
                seed: 3,
                ..TrainConfig::default()
            },
        )?;
        println!("{variant:>8}: test {}", evaluate(&outcome.model, &test)?.summary());
    }
    Ok(())
}
