//! Finite-difference gradient suite covering every layer type once.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::encoder::{self, EncoderConfig, EncoderParams, JointMode, SyntaxKv};
use crate::error::Result;
use crate::fusion::{FusionModel, HeadSpec, ModelConfig, Variant};
use crate::heads::{self, CrfParams, ReHeadParams, TagSet};
use crate::nn::{self, FfnParams, LayerNormParams};
use crate::params::{Ctx, Init, ParamStore};
use crate::syntax_gnn::{self, GnnConfig, GnnParams};
use crate::tensor::{grad_check, Fault, GradCheckOptions, GradCheckReport, Tape, Tensor, TensorError, Var};
use crate::treebank::{build_wordpiece_graph, DepTree, Payload, Sentence, Vocab};

pub const TOLERANCE: f64 = 1e-4;
pub const STEP: f64 = 1e-5;
/// Denominator floor: gradients below it are compared in absolute terms,
/// where roundoff of the central difference is about 1e-10.
pub const FLOOR: f64 = 1e-5;

/// Layer names in suite order.
pub const LAYERS: [&str; 13] = [
    "matmul",
    "masked_softmax",
    "layer_norm",
    "gelu",
    "ffn",
    "encoder_layer",
    "gnn_layer",
    "gate",
    "joint_kv",
    "crf_loss",
    "re_head",
    "late_fusion",
    "joint_fusion",
];

#[derive(Clone, Debug, PartialEq)]
pub struct LayerCheck {
    pub layer: &'static str,
    pub seeds: usize,
    pub max_rel_error: f64,
    pub failed_seeds: Vec<u64>,
}

impl LayerCheck {
    pub fn passed(&self) -> bool {
        self.failed_seeds.is_empty()
    }
}

/// Runs every layer check for seeds `0..seeds`.
pub fn gradient_suite(seeds: u64, fault: Option<Fault>) -> Result<Vec<LayerCheck>> {
    LAYERS
        .iter()
        .map(|&layer| {
            let mut check = LayerCheck {
                layer,
                seeds: seeds as usize,
                max_rel_error: 0.0,
                failed_seeds: Vec::new(),
            };
            for seed in 0..seeds {
                let err = check_layer(layer, seed, fault)?;
                check.max_rel_error = check.max_rel_error.max(err);
                if err > TOLERANCE {
                    check.failed_seeds.push(seed);
                }
            }
            Ok(check)
        })
        .collect()
}

/// Maximum relative gradient error of one layer at one seed.
pub fn check_layer(layer: &str, seed: u64, fault: Option<Fault>) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(7919).wrapping_add(17));
    let opts = GradCheckOptions {
        step: STEP,
        tolerance: TOLERANCE,
        floor: FLOOR,
        max_entries: Some(12),
        seed,
        fault,
    };
    let normal = |rng: &mut ChaCha8Rng, shape: &[usize], std: f64| Init::new(rng, std).normal(shape);
    let report = match layer {
        "matmul" => {
            let inputs = [normal(&mut rng, &[3, 4], 1.0), normal(&mut rng, &[4, 2], 1.0)];
            let w = normal(&mut rng, &[3, 2], 1.0);
            grad_check(
                |t, v| {
                    let y = t.matmul(v[0], v[1])?;
                    probe(t, y, &w)
                },
                &inputs,
                &opts,
            )?
        }
        "masked_softmax" => {
            let inputs = [normal(&mut rng, &[3, 4], 2.0)];
            let w = normal(&mut rng, &[3, 4], 1.0);
            let mask: Vec<bool> = (0..12).map(|i| i % 4 != (i / 4) % 4 || i == 0).collect();
            grad_check(
                |t, v| {
                    let y = t.masked_softmax(v[0], &mask)?;
                    probe(t, y, &w)
                },
                &inputs,
                &opts,
            )?
        }
        "layer_norm" => {
            let inputs = [
                normal(&mut rng, &[3, 5], 2.0),
                normal(&mut rng, &[5], 1.0),
                normal(&mut rng, &[5], 1.0),
            ];
            let w = normal(&mut rng, &[3, 5], 1.0);
            grad_check(
                |t, v| {
                    let y = t.layer_norm(v[0], v[1], v[2], nn::LN_EPS)?;
                    probe(t, y, &w)
                },
                &inputs,
                &opts,
            )?
        }
        "gelu" => {
            let inputs = [normal(&mut rng, &[2, 4], 2.0)];
            let w = normal(&mut rng, &[2, 4], 1.0);
            grad_check(
                |t, v| {
                    let y = t.gelu(v[0])?;
                    probe(t, y, &w)
                },
                &inputs,
                &opts,
            )?
        }
        "ffn" => {
            let mut store = ParamStore::new();
            let ffn = FfnParams::new(&mut store, &mut Init::new(&mut rng, 0.5), "ffn", 8, 16);
            let ln = LayerNormParams::new(&mut store, "ln", 8);
            let x = normal(&mut rng, &[3, 8], 1.0);
            let w = normal(&mut rng, &[3, 8], 1.0);
            check_store(&store, &[x], &opts, |ctx, v| {
                let y = nn::ffn_block(ctx, v[0], &ffn, &ln, 0.0)?;
                Ok(probe(ctx.tape, y, &w)?)
            })?
        }
        "encoder_layer" => {
            let config = small_encoder(12);
            let mut store = ParamStore::new();
            let params = EncoderParams::new(&mut store, &mut Init::new(&mut rng, 0.3), &config);
            let x = normal(&mut rng, &[4, 16], 1.0);
            let w = normal(&mut rng, &[4, 16], 1.0);
            check_store(&store, &[x], &opts, |ctx, v| {
                let (h, _) = encoder::encode_embedded(ctx, v[0], &params, &config, None, None)?;
                Ok(probe(ctx.tape, h, &w)?)
            })?
        }
        "gnn_layer" => {
            let config = small_gnn();
            let mut store = ParamStore::new();
            let params = GnnParams::new(&mut store, &mut Init::new(&mut rng, 0.3), &config);
            let tree = random_tree(6, &mut rng);
            let alignment: Vec<Range<usize>> = (0..6).map(|i| i..i + 1).collect();
            let graph = build_wordpiece_graph(&tree, &alignment)?;
            let x = normal(&mut rng, &[6, 16], 1.0);
            let w = normal(&mut rng, &[6, 16], 1.0);
            check_store(&store, &[x], &opts, |ctx, v| {
                let (h, _) = syntax_gnn::gnn_encode(ctx, v[0], &graph, &params, &config)?;
                Ok(probe(ctx.tape, h, &w)?)
            })?
        }
        "gate" => {
            let inputs = [
                normal(&mut rng, &[3, 6], 1.0),
                normal(&mut rng, &[3, 6], 1.0),
                normal(&mut rng, &[6, 6], 0.5),
                normal(&mut rng, &[6], 0.5),
            ];
            let w = normal(&mut rng, &[3, 6], 1.0);
            grad_check(
                |t, v| {
                    let g = t.matmul(v[0], v[2])?;
                    let g = t.add_row(g, v[3])?;
                    let g = t.sigmoid(g)?;
                    let a = t.mul(g, v[0])?;
                    let r = t.one_minus(g)?;
                    let b = t.mul(r, v[1])?;
                    let h = t.add(a, b)?;
                    probe(t, h, &w)
                },
                &inputs,
                &opts,
            )?
        }
        "joint_kv" => {
            let config = small_encoder(12);
            let mut store = ParamStore::new();
            let params = EncoderParams::new(&mut store, &mut Init::new(&mut rng, 0.3), &config);
            let layer = params.layers[0].clone();
            let x = normal(&mut rng, &[4, 16], 1.0);
            let s = normal(&mut rng, &[4, 16], 1.0);
            let pk = normal(&mut rng, &[16, 16], 0.3);
            let pv = normal(&mut rng, &[16, 16], 0.3);
            let w = normal(&mut rng, &[4, 16], 1.0);
            let mode = if seed % 2 == 0 { JointMode::Concat } else { JointMode::Add };
            check_store(&store, &[x, s, pk, pv], &opts, |ctx, v| {
                let kv = SyntaxKv {
                    mode,
                    keys: ctx.tape.matmul(v[1], v[2])?,
                    values: ctx.tape.matmul(v[1], v[3])?,
                };
                let (h, _) = encoder::self_attention_layer(ctx, v[0], None, &layer, &config, Some(&kv))?;
                Ok(probe(ctx.tape, h, &w)?)
            })?
        }
        "crf_loss" => {
            let tags = TagSet::from_labels(["A", "B"]);
            let mut store = ParamStore::new();
            let params = CrfParams::new(&mut store, &mut Init::new(&mut rng, 0.5), 6, tags.len());
            for id in [params.transitions, params.start, params.end] {
                *store.get_mut(id) = normal(&mut rng, store.get(id).shape(), 0.5);
            }
            let x = normal(&mut rng, &[5, 6], 1.0);
            let gold: Vec<usize> = (0..5).map(|_| rng.random_range(0..tags.len())).collect();
            let constraints = (seed % 2 == 1).then(|| tags.bio_constraints());
            let gold = if constraints.is_some() { vec![1, 2, 0, 3, 4] } else { gold };
            check_store(&store, &[x], &opts, |ctx, v| {
                heads::crf_log_likelihood(ctx, v[0], &gold, &params, constraints.as_ref())
            })?
        }
        "re_head" => {
            let mut store = ParamStore::new();
            let params = ReHeadParams::new(&mut store, &mut Init::new(&mut rng, 0.5), 6, 4);
            let x = normal(&mut rng, &[5, 6], 1.0);
            let mask = [false, true, true, true, true];
            let gold = rng.random_range(0..4);
            check_store(&store, &[x], &opts, |ctx, v| {
                let s = heads::re_classify(ctx, v[0], 1..2, 3..5, &mask, &params)?;
                heads::softmax_cross_entropy(ctx, s, gold)
            })?
        }
        "late_fusion" | "joint_fusion" => {
            let variant = if layer == "late_fusion" { Variant::Late } else { Variant::Joint };
            let (model, sentence) = desk_model(variant, seed, &mut rng)?;
            let opts = GradCheckOptions {
                max_entries: Some(3),
                ..opts
            };
            check_store(&model.store, &[], &opts, |ctx, _| model.loss(ctx, &sentence))?
        }
        other => panic!("unknown layer {other}"),
    };
    Ok(report.max_rel_error())
}

/// `Σ y ⊙ w` with a fixed random `w`, so every output entry matters.
fn probe(tape: &mut Tape, y: Var, w: &Tensor) -> crate::tensor::Result<Var> {
    let w = tape.constant(w.clone());
    let p = tape.mul(y, w)?;
    tape.sum(p)
}

/// Checks gradients for every parameter in `store` plus `extra` inputs.
fn check_store<F>(store: &ParamStore, extra: &[Tensor], opts: &GradCheckOptions, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Ctx, &[Var]) -> Result<Var>,
{
    let mut inputs = store.values().to_vec();
    inputs.extend_from_slice(extra);
    let n = store.len();
    let report = grad_check(
        |tape, vars| {
            let mut ctx = Ctx::with_bound(tape, store, &vars[..n]);
            f(&mut ctx, &vars[n..]).map_err(|e| match e {
                crate::Error::Tensor(t) => t,
                other => TensorError::Invalid(other.to_string()),
            })
        },
        &inputs,
        opts,
    )?;
    Ok(report)
}

fn small_encoder(vocab_size: usize) -> EncoderConfig {
    EncoderConfig {
        layers: 2,
        heads: 2,
        d_model: 16,
        d_ff: 32,
        max_len: 16,
        vocab_size,
        dropout_p: 0.1,
        segment_types: 1,
    }
}

fn small_gnn() -> GnnConfig {
    GnnConfig {
        layers: 2,
        heads: 2,
        d_model: 16,
        d_ff: 32,
        dropout_p: 0.1,
    }
}

fn random_tree(n: usize, rng: &mut impl Rng) -> DepTree {
    let mut heads = vec![0; n];
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    for k in 1..n {
        heads[order[k]] = order[rng.random_range(0..k)] + 1;
    }
    DepTree::from_heads(heads).expect("attachment to earlier nodes is a tree")
}

/// Desk-size model whose norm gains, biases and transition scores are
/// jittered away from their symmetric initial values.
fn desk_model(variant: Variant, seed: u64, rng: &mut ChaCha8Rng) -> Result<(FusionModel, Sentence)> {
    let words = ["ship", "shipping", "port", "cargo", "sails"];
    let vocab = Vocab::from_pieces(
        ["[PAD]", "[UNK]", "[BOS]", "ship", "##ping", "port", "cargo", "sail", "##s"]
            .iter()
            .copied(),
    )?;
    let tags = TagSet::from_labels(["A", "B"]);
    let mut config = ModelConfig::desk(
        variant,
        vocab.len(),
        HeadSpec::Tagging {
            tags: tags.tags().to_vec(),
            bio_constraints: false,
        },
    );
    config.joint_mode = if seed % 2 == 0 { JointMode::Concat } else { JointMode::Add };
    let mut model = FusionModel::new(config, vocab.clone(), seed)?;
    for id in model.store.ids().collect::<Vec<_>>() {
        let name = model.store.name(id).to_string();
        if name.ends_with(".gain") || name.ends_with(".bias") || name.starts_with("crf.") && name != "crf.emission" {
            let t = model.store.get_mut(id);
            for x in t.data_mut() {
                *x += rng.random_range(-0.3..0.3);
            }
        }
    }
    let n = rng.random_range(3..=words.len());
    let tokens: Vec<String> = (0..n).map(|_| words[rng.random_range(0..words.len())].to_string()).collect();
    let tree = random_tree(n, rng);
    let labels = tags.tags().to_vec();
    let gold: Vec<String> = (0..n).map(|_| labels[rng.random_range(0..labels.len())].clone()).collect();
    let sentence = Sentence::new(tokens, tree, Payload::Tags(gold), &vocab)?;
    Ok((model, sentence))
}
