//! Model assembly: the tree-blind baseline, late fusion (GNN over encoder
//! output, merged through a highway gate) and joint fusion (GNN over the
//! input embeddings, projected into extra keys/values for every encoder
//! layer). All variants end with wordpiece-to-token summation and a head.

use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{self, AttentionTrace, EncoderConfig, EncoderInput, EncoderParams, JointMode, SyntaxKv};
use crate::error::{Error, Result};
use crate::heads::{
    self, Constraints, CrfParams, ReHeadParams, RelationSet, TagSet,
};
use crate::nn;
use crate::params::{Ctx, Init, ParamId, ParamStore};
use crate::syntax_gnn::{self, GnnConfig, GnnParams, GraphAttentionTrace};
use crate::tensor::{Tape, Tensor, Var};
use crate::treebank::{build_pruned_graph, build_wordpiece_graph, lca_prune, Payload, Sentence, Vocab, WordpieceGraph};

/// Stream label for parameter initialization.
pub const INIT_STREAM: u64 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Baseline,
    Late,
    Joint,
}

impl Variant {
    pub fn uses_tree(self) -> bool {
        self != Variant::Baseline
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Self::Baseline),
            "late" => Ok(Self::Late),
            "joint" => Ok(Self::Joint),
            other => Err(Error::Config(format!("unknown variant {other:?} (baseline|late|joint)"))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Baseline => "baseline",
            Self::Late => "late",
            Self::Joint => "joint",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum HeadSpec {
    /// CRF tagger; `tags` in tag-set order.
    Tagging { tags: Vec<String>, bio_constraints: bool },
    /// Relation classifier; `labels` include no_relation.
    Relation { labels: Vec<String> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub joint_mode: JointMode,
    pub encoder: EncoderConfig,
    pub gnn: GnnConfig,
    pub head: HeadSpec,
    pub gate_bias: f64,
    pub init_std: f64,
}

impl ModelConfig {
    /// Desk-scale defaults for a vocabulary and head.
    pub fn desk(variant: Variant, vocab_size: usize, head: HeadSpec) -> Self {
        Self {
            variant,
            joint_mode: JointMode::Concat,
            encoder: EncoderConfig::desk(vocab_size),
            gnn: GnnConfig::desk(),
            head,
            gate_bias: 2.0,
            init_std: 0.02,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if self.variant.uses_tree() {
            self.gnn.validate()?;
            if self.gnn.d_model != self.encoder.d_model {
                return Err(Error::Config(format!(
                    "gnn width {} differs from encoder width {}",
                    self.gnn.d_model, self.encoder.d_model
                )));
            }
        }
        if !(self.init_std > 0.0) {
            return Err(Error::Config("init_std must be positive".into()));
        }
        match &self.head {
            HeadSpec::Tagging { tags, .. } => {
                TagSet::new(tags.clone())?;
            }
            HeadSpec::Relation { labels } => {
                RelationSet::from_labels(labels.clone())?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GateParams {
    pub weight: ParamId,
    pub bias: ParamId,
}

/// One `(P_K, P_V)` pair per encoder layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JointFusionParams {
    pub layers: Vec<(ParamId, ParamId)>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Head {
    Crf {
        params: CrfParams,
        tags: TagSet,
        constraints: Option<Constraints>,
    },
    Relation {
        params: ReHeadParams,
        relations: RelationSet,
    },
}

#[derive(Clone, Debug, Default)]
pub struct ForwardTrace {
    pub encoder: AttentionTrace,
    pub gnn: Option<GraphAttentionTrace>,
    /// Gate activations `m × d` (late fusion).
    pub gate: Option<Tensor>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Prediction {
    Tags(Vec<usize>),
    Relation(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct FusionModel {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub store: ParamStore,
    pub encoder: EncoderParams,
    pub gnn: Option<GnnParams>,
    pub gate: Option<GateParams>,
    pub joint: Option<JointFusionParams>,
    pub head: Head,
}

impl FusionModel {
    /// Fresh model whose parameters are drawn from the init stream of `seed`.
    pub fn new(config: ModelConfig, vocab: Vocab, seed: u64) -> Result<Self> {
        config.validate()?;
        if vocab.len() != config.encoder.vocab_size {
            return Err(Error::Config(format!(
                "vocabulary has {} pieces but vocab_size is {}",
                vocab.len(),
                config.encoder.vocab_size
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(INIT_STREAM);
        let mut init = Init::new(&mut rng, config.init_std);
        let mut store = ParamStore::new();
        let d = config.encoder.d_model;
        let enc = EncoderParams::new(&mut store, &mut init, &config.encoder);
        let (gnn, gate, joint) = match config.variant {
            Variant::Baseline => (None, None, None),
            Variant::Late => {
                let gnn = GnnParams::new(&mut store, &mut init, &config.gnn);
                let gate = GateParams {
                    weight: store.add("gate.weight", init.normal(&[d, d])),
                    bias: store.add("gate.bias", Tensor::full(&[d], config.gate_bias)),
                };
                (Some(gnn), Some(gate), None)
            }
            Variant::Joint => {
                let gnn = GnnParams::new(&mut store, &mut init, &config.gnn);
                let layers = (0..config.encoder.layers)
                    .map(|l| {
                        let pk = store.add(format!("joint.l{l}.pk"), init.normal(&[d, d]));
                        let pv = store.add(format!("joint.l{l}.pv"), init.normal(&[d, d]));
                        (pk, pv)
                    })
                    .collect();
                (Some(gnn), None, Some(JointFusionParams { layers }))
            }
        };
        let head = match &config.head {
            HeadSpec::Tagging { tags, bio_constraints } => {
                let tags = TagSet::new(tags.clone())?;
                let params = CrfParams::new(&mut store, &mut init, d, tags.len());
                let constraints = bio_constraints.then(|| tags.bio_constraints());
                Head::Crf {
                    params,
                    tags,
                    constraints,
                }
            }
            HeadSpec::Relation { labels } => {
                let relations = RelationSet::from_labels(labels.clone())?;
                Head::Relation {
                    params: ReHeadParams::new(&mut store, &mut init, d, relations.len()),
                    relations,
                }
            }
        };
        Ok(Self {
            config,
            vocab,
            store,
            encoder: enc,
            gnn,
            gate,
            joint,
            head,
        })
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    /// Rebuilds the parameter handles for `config` and installs `store`,
    /// checking every name and shape.
    pub fn with_store(config: ModelConfig, vocab: Vocab, store: ParamStore) -> Result<Self> {
        let mut model = Self::new(config, vocab, 0)?;
        if store.len() != model.store.len() {
            return Err(Error::Checkpoint(format!(
                "{} tensors stored, configuration needs {}",
                store.len(),
                model.store.len()
            )));
        }
        for ((name, expect), (got_name, got)) in model.store.iter().zip(store.iter()) {
            if name != got_name || expect.shape() != got.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor {got_name} {:?} does not match {name} {:?}",
                    got.shape(),
                    expect.shape()
                )));
            }
        }
        model.store = store;
        Ok(model)
    }

    /// Checks that a sentence's payload fits this model's head.
    pub fn check_payload(&self, sentence: &Sentence) -> Result<()> {
        match (&self.head, &sentence.payload) {
            (Head::Crf { tags, .. }, Payload::Tags(t) | Payload::Srl { tags: t, .. }) => tags.encode(t).map(|_| ()),
            (Head::Relation { relations, .. }, Payload::Relation { relation, .. }) => relations
                .id(relation)
                .map(|_| ())
                .ok_or_else(|| Error::Compat(format!("relation {relation:?} unknown to the model"))),
            _ => Err(Error::Compat(format!(
                "{:?} payload does not fit the model head",
                sentence.payload.kind()
            ))),
        }
    }

    /// The graph the GNN runs on: the full wordpiece graph, or for relation
    /// instances the graph restricted to the entities' LCA subtree.
    pub fn graph(&self, sentence: &Sentence) -> Result<Option<WordpieceGraph>> {
        if !self.variant().uses_tree() {
            return Ok(None);
        }
        let graph = match &sentence.payload {
            Payload::Relation { subj, obj, .. } => {
                let keep = lca_prune(&sentence.tree, subj.clone(), obj.clone())?;
                build_pruned_graph(&sentence.tree, &sentence.alignment, Some(&keep))?
            }
            _ => build_wordpiece_graph(&sentence.tree, &sentence.alignment)?,
        };
        Ok(Some(graph))
    }

    /// Token-level states `n × d` for the configured variant.
    pub fn token_states(&self, ctx: &mut Ctx, sentence: &Sentence, graph: Option<&WordpieceGraph>) -> Result<(Var, ForwardTrace)> {
        match self.variant() {
            Variant::Baseline => baseline_forward(ctx, self, sentence),
            Variant::Late => late_fusion_forward(ctx, self, sentence, need(graph)?),
            Variant::Joint => joint_fusion_forward(ctx, self, sentence, need(graph)?),
        }
    }

    /// Negative log-likelihood of the gold annotation.
    pub fn loss(&self, ctx: &mut Ctx, sentence: &Sentence) -> Result<Var> {
        let graph = self.graph(sentence)?;
        let (states, _) = self.token_states(ctx, sentence, graph.as_ref())?;
        match (&self.head, &sentence.payload) {
            (Head::Crf { params, tags, constraints }, Payload::Tags(t) | Payload::Srl { tags: t, .. }) => {
                let gold = tags.encode(t)?;
                let ll = heads::crf_log_likelihood(ctx, states, &gold, params, constraints.as_ref())?;
                Ok(ctx.tape.scale(ll, -1.0)?)
            }
            (Head::Relation { params, relations }, Payload::Relation { subj, obj, relation }) => {
                let gold = relations
                    .id(relation)
                    .ok_or_else(|| Error::Compat(format!("relation {relation:?} unknown to the model")))?;
                let mask = lca_prune(&sentence.tree, subj.clone(), obj.clone())?;
                let scores = heads::re_classify(ctx, states, subj.clone(), obj.clone(), &mask, params)?;
                heads::softmax_cross_entropy(ctx, scores, gold)
            }
            _ => Err(Error::Compat(format!(
                "{:?} payload does not fit the model head",
                sentence.payload.kind()
            ))),
        }
    }

    /// Evaluation-mode token states.
    pub fn states(&self, sentence: &Sentence) -> Result<(Tensor, ForwardTrace)> {
        let graph = self.graph(sentence)?;
        let mut tape = Tape::new();
        let mut ctx = Ctx::eval(&mut tape, &self.store);
        let (h, trace) = self.token_states(&mut ctx, sentence, graph.as_ref())?;
        Ok((tape.value(h).clone(), trace))
    }

    pub fn predict(&self, sentence: &Sentence) -> Result<Prediction> {
        let graph = self.graph(sentence)?;
        let mut tape = Tape::new();
        let mut ctx = Ctx::eval(&mut tape, &self.store);
        let (states, _) = self.token_states(&mut ctx, sentence, graph.as_ref())?;
        match (&self.head, &sentence.payload) {
            (Head::Crf { params, constraints, .. }, _) => {
                let (tags, _) = heads::viterbi_decode(ctx.tape.value(states), &self.store, params, constraints.as_ref())?;
                Ok(Prediction::Tags(tags))
            }
            (Head::Relation { params, .. }, Payload::Relation { subj, obj, .. }) => {
                let mask = lca_prune(&sentence.tree, subj.clone(), obj.clone())?;
                let scores = heads::re_classify(&mut ctx, states, subj.clone(), obj.clone(), &mask, params)?;
                let s = ctx.tape.value(scores).data();
                let best = (0..s.len()).fold(0, |b, i| if s[i] > s[b] { i } else { b });
                Ok(Prediction::Relation(best))
            }
            (Head::Relation { .. }, p) => Err(Error::Compat(format!(
                "{:?} payload does not fit a relation head",
                p.kind()
            ))),
        }
    }
}

fn need(graph: Option<&WordpieceGraph>) -> Result<&WordpieceGraph> {
    graph.ok_or_else(|| Error::Input("syntax variants need a wordpiece graph".into()))
}

fn aggregate(ctx: &mut Ctx, h: Var, sentence: &Sentence) -> Result<Var> {
    Ok(ctx.tape.segment_sum(h, &sentence.alignment)?)
}

pub fn baseline_forward(ctx: &mut Ctx, model: &FusionModel, sentence: &Sentence) -> Result<(Var, ForwardTrace)> {
    let input = EncoderInput::from_sentence(sentence);
    let (h, encoder) = encoder::encode(ctx, &model.encoder, &model.config.encoder, &input, None)?;
    let t = aggregate(ctx, h, sentence)?;
    Ok((
        t,
        ForwardTrace {
            encoder,
            ..ForwardTrace::default()
        },
    ))
}

pub fn late_fusion_forward(
    ctx: &mut Ctx,
    model: &FusionModel,
    sentence: &Sentence,
    graph: &WordpieceGraph,
) -> Result<(Var, ForwardTrace)> {
    let (gnn, gate) = match (&model.gnn, &model.gate) {
        (Some(g), Some(w)) => (g, w),
        _ => return Err(Error::Compat("late fusion needs GNN and gate parameters".into())),
    };
    check_graph(sentence, graph)?;
    let input = EncoderInput::from_sentence(sentence);
    let (v, encoder) = encoder::encode(ctx, &model.encoder, &model.config.encoder, &input, None)?;
    let (z, gnn_trace) = syntax_gnn::gnn_encode(ctx, v, graph, gnn, &model.config.gnn)?;
    let g = nn::linear(ctx, v, gate.weight)?;
    let b = ctx.param(gate.bias);
    let g = ctx.tape.add_row(g, b)?;
    let g = ctx.tape.sigmoid(g)?;
    let gate_values = ctx.tape.value(g).clone();
    let keep = ctx.tape.mul(g, v)?;
    let rest = ctx.tape.one_minus(g)?;
    let mixed = ctx.tape.mul(rest, z)?;
    let h = ctx.tape.add(keep, mixed)?;
    let t = aggregate(ctx, h, sentence)?;
    Ok((
        t,
        ForwardTrace {
            encoder,
            gnn: Some(gnn_trace),
            gate: Some(gate_values),
        },
    ))
}

pub fn joint_fusion_forward(
    ctx: &mut Ctx,
    model: &FusionModel,
    sentence: &Sentence,
    graph: &WordpieceGraph,
) -> Result<(Var, ForwardTrace)> {
    let (gnn, joint) = match (&model.gnn, &model.joint) {
        (Some(g), Some(j)) => (g, j),
        _ => return Err(Error::Compat("joint fusion needs GNN and projection parameters".into())),
    };
    check_graph(sentence, graph)?;
    let input = EncoderInput::from_sentence(sentence);
    let cfg = &model.config.encoder;
    let u = encoder::embed(ctx, &model.encoder, cfg, &input)?;
    let (s, gnn_trace) = syntax_gnn::gnn_encode(ctx, u, graph, gnn, &model.config.gnn)?;
    let mut kv = Vec::with_capacity(joint.layers.len());
    for &(pk, pv) in &joint.layers {
        kv.push(SyntaxKv {
            mode: model.config.joint_mode,
            keys: nn::linear(ctx, s, pk)?,
            values: nn::linear(ctx, s, pv)?,
        });
    }
    let (h, encoder) = encoder::encode_embedded(ctx, u, &model.encoder, cfg, input.pad_mask.as_deref(), Some(&kv))?;
    let t = aggregate(ctx, h, sentence)?;
    Ok((
        t,
        ForwardTrace {
            encoder,
            gnn: Some(gnn_trace),
            gate: None,
        },
    ))
}

fn check_graph(sentence: &Sentence, graph: &WordpieceGraph) -> Result<()> {
    if graph.len() != sentence.wordpieces.len() {
        return Err(Error::Input(format!(
            "graph over {} nodes for {} wordpieces",
            graph.len(),
            sentence.wordpieces.len()
        )));
    }
    Ok(())
}
