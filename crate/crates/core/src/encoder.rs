//! Miniature transformer encoder: summed embeddings followed by post-norm
//! self-attention and feed-forward layers. Each attention layer can take an
//! extra set of keys and values, which is how joint fusion injects syntax.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{self, FfnParams, LayerNormParams};
use crate::params::{Ctx, Init, ParamId, ParamStore};
use crate::tensor::{Tensor, Var};
use crate::treebank::Sentence;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub layers: usize,
    pub heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub max_len: usize,
    pub vocab_size: usize,
    pub dropout_p: f64,
    pub segment_types: usize,
}

impl EncoderConfig {
    /// 4 layers, 4 heads, width 64, inner width 256, 64 positions.
    pub fn desk(vocab_size: usize) -> Self {
        Self {
            layers: 4,
            heads: 4,
            d_model: 64,
            d_ff: 256,
            max_len: 64,
            vocab_size,
            dropout_p: 0.1,
            segment_types: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("heads", self.heads),
            ("d_model", self.d_model),
            ("d_ff", self.d_ff),
            ("max_len", self.max_len),
            ("vocab_size", self.vocab_size),
            ("segment_types", self.segment_types),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("encoder {name} must be at least 1")));
        }
        if self.d_model % self.heads != 0 {
            return Err(Error::Config(format!(
                "encoder d_model {} is not divisible by {} heads",
                self.d_model, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Config(format!("dropout_p {} outside [0, 1)", self.dropout_p)));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }
}

/// How an attention layer combines its own keys/values with injected ones.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointMode {
    /// One softmax over the enlarged key set `[K; K_s]`.
    #[default]
    Concat,
    /// `K + K_s`, `V + V_s` position by position.
    Add,
}

impl std::str::FromStr for JointMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "concat" => Ok(Self::Concat),
            "add" => Ok(Self::Add),
            other => Err(Error::Config(format!("unknown joint mode {other:?} (concat|add)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttentionParams {
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub wo: ParamId,
}

impl AttentionParams {
    pub fn new(store: &mut ParamStore, init: &mut Init, prefix: &str, d: usize) -> Self {
        let mut w = |name: &str| store.add(format!("{prefix}.{name}"), init.normal(&[d, d]));
        Self {
            wq: w("wq"),
            wk: w("wk"),
            wv: w("wv"),
            wo: w("wo"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncoderLayerParams {
    pub attn: AttentionParams,
    pub ln_attn: LayerNormParams,
    pub ffn: FfnParams,
    pub ln_ffn: LayerNormParams,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncoderParams {
    pub wordpiece_emb: ParamId,
    pub pos_emb: ParamId,
    pub seg_emb: ParamId,
    pub indicator_emb: ParamId,
    pub layers: Vec<EncoderLayerParams>,
}

impl EncoderParams {
    pub fn new(store: &mut ParamStore, init: &mut Init, config: &EncoderConfig) -> Self {
        let d = config.d_model;
        let wordpiece_emb = store.add("enc.wordpiece_emb", init.normal(&[config.vocab_size, d]));
        let pos_emb = store.add("enc.pos_emb", init.normal(&[config.max_len, d]));
        let seg_emb = store.add("enc.seg_emb", init.normal(&[config.segment_types, d]));
        let indicator_emb = store.add("enc.indicator_emb", init.normal(&[2, d]));
        let layers = (0..config.layers)
            .map(|l| {
                let p = format!("enc.l{l}");
                EncoderLayerParams {
                    attn: AttentionParams::new(store, init, &format!("{p}.attn"), d),
                    ln_attn: LayerNormParams::new(store, &format!("{p}.ln_attn"), d),
                    ffn: FfnParams::new(store, init, &format!("{p}.ffn"), d, config.d_ff),
                    ln_ffn: LayerNormParams::new(store, &format!("{p}.ln_ffn"), d),
                }
            })
            .collect();
        Self {
            wordpiece_emb,
            pos_emb,
            seg_emb,
            indicator_emb,
            layers,
        }
    }
}

/// Wordpiece-level inputs to the encoder.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncoderInput {
    pub ids: Vec<usize>,
    pub segments: Vec<usize>,
    pub indicators: Option<Vec<usize>>,
    /// `true` marks a real position; `None` means no padding.
    pub pad_mask: Option<Vec<bool>>,
}

impl EncoderInput {
    pub fn new(ids: Vec<usize>) -> Self {
        let segments = vec![0; ids.len()];
        Self {
            ids,
            segments,
            indicators: None,
            pad_mask: None,
        }
    }

    pub fn from_sentence(sentence: &Sentence) -> Self {
        Self {
            indicators: sentence.indicator_ids(),
            ..Self::new(sentence.wordpiece_ids.clone())
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Injected keys and values for one attention layer, both `m_s × d`.
#[derive(Clone, Copy, Debug)]
pub struct SyntaxKv {
    pub mode: JointMode,
    pub keys: Var,
    pub values: Var,
}

/// Pre-dropout attention weights: `layers[l][h]` is `queries × keys`.
#[derive(Clone, Debug, Default)]
pub struct AttentionTrace {
    pub layers: Vec<Vec<Tensor>>,
}

pub fn embed(ctx: &mut Ctx, params: &EncoderParams, config: &EncoderConfig, input: &EncoderInput) -> Result<Var> {
    let m = input.len();
    if m == 0 {
        return Err(Error::Input("empty wordpiece sequence".into()));
    }
    if m > config.max_len {
        return Err(Error::Input(format!(
            "{m} wordpieces exceed max_len {}",
            config.max_len
        )));
    }
    if input.segments.len() != m || input.indicators.as_ref().is_some_and(|i| i.len() != m) {
        return Err(Error::Input("segment/indicator ids do not match wordpiece count".into()));
    }
    let table = ctx.param(params.wordpiece_emb);
    let mut x = ctx.tape.gather(table, &input.ids)?;
    let positions: Vec<usize> = (0..m).collect();
    let pos = ctx.param(params.pos_emb);
    let pos = ctx.tape.gather(pos, &positions)?;
    x = ctx.tape.add(x, pos)?;
    let seg = ctx.param(params.seg_emb);
    let seg = ctx.tape.gather(seg, &input.segments)?;
    x = ctx.tape.add(x, seg)?;
    if let Some(ind) = &input.indicators {
        let table = ctx.param(params.indicator_emb);
        let e = ctx.tape.gather(table, ind)?;
        x = ctx.tape.add(x, e)?;
    }
    Ok(ctx.dropout(x, config.dropout_p)?)
}

/// Multi-head attention sublayer followed by residual and layer norm.
/// Returns the new states and one weight matrix per head.
pub fn self_attention_layer(
    ctx: &mut Ctx,
    h: Var,
    pad_mask: Option<&[bool]>,
    layer: &EncoderLayerParams,
    config: &EncoderConfig,
    extra: Option<&SyntaxKv>,
) -> Result<(Var, Vec<Tensor>)> {
    let (o, trace) = multi_head_attention(ctx, h, pad_mask, &layer.attn, config, extra)?;
    let out = nn::residual_norm(ctx, h, o, &layer.ln_attn, config.dropout_p)?;
    Ok((out, trace))
}

/// Attention output after the output projection, before the residual.
pub fn multi_head_attention(
    ctx: &mut Ctx,
    h: Var,
    pad_mask: Option<&[bool]>,
    attn: &AttentionParams,
    config: &EncoderConfig,
    extra: Option<&SyntaxKv>,
) -> Result<(Var, Vec<Tensor>)> {
    let (m, d) = matrix_dims(ctx, h)?;
    if d != config.d_model {
        return Err(Error::Input(format!("state width {d} != d_model {}", config.d_model)));
    }
    let q = nn::linear(ctx, h, attn.wq)?;
    let mut k = nn::linear(ctx, h, attn.wk)?;
    let mut v = nn::linear(ctx, h, attn.wv)?;
    let own_mask: Vec<bool> = pad_mask.map_or_else(|| vec![true; m], <[bool]>::to_vec);
    let mut key_mask = own_mask.clone();
    if let Some(kv) = extra {
        let (mk, dk) = matrix_dims(ctx, kv.keys)?;
        let (mv, dv) = matrix_dims(ctx, kv.values)?;
        if dk != d || dv != d || mk != mv {
            return Err(Error::Input(format!(
                "injected keys {mk}x{dk} / values {mv}x{dv} do not fit width {d}"
            )));
        }
        match kv.mode {
            JointMode::Add => {
                k = ctx.tape.add(k, kv.keys)?;
                v = ctx.tape.add(v, kv.values)?;
            }
            JointMode::Concat => {
                if mk != m {
                    return Err(Error::Input(format!("{mk} injected keys for {m} positions")));
                }
                k = ctx.tape.concat_rows(&[k, kv.keys])?;
                v = ctx.tape.concat_rows(&[v, kv.values])?;
                key_mask.extend_from_slice(&own_mask);
            }
        }
    }
    let keys = key_mask.len();
    let mask: Vec<bool> = (0..m).flat_map(|_| key_mask.iter().copied()).collect();
    let dh = config.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();
    let mut outs = Vec::with_capacity(config.heads);
    let mut trace = Vec::with_capacity(config.heads);
    for head in 0..config.heads {
        let qh = ctx.tape.cols(q, head * dh, dh)?;
        let kh = ctx.tape.cols(k, head * dh, dh)?;
        let vh = ctx.tape.cols(v, head * dh, dh)?;
        let s = ctx.tape.matmul_nt(qh, kh)?;
        let s = ctx.tape.scale(s, scale)?;
        let a = ctx.tape.masked_softmax(s, &mask)?;
        debug_assert_eq!(ctx.tape.shape(a), [m, keys]);
        trace.push(ctx.tape.value(a).clone());
        let a = ctx.dropout(a, config.dropout_p)?;
        outs.push(ctx.tape.matmul(a, vh)?);
    }
    let o = ctx.tape.concat_cols(&outs)?;
    let o = nn::linear(ctx, o, attn.wo)?;
    Ok((o, trace))
}

pub fn ffn_layer(ctx: &mut Ctx, h: Var, layer: &EncoderLayerParams, config: &EncoderConfig) -> Result<Var> {
    Ok(nn::ffn_block(ctx, h, &layer.ffn, &layer.ln_ffn, config.dropout_p)?)
}

/// Runs an already embedded sequence through every layer.
pub fn encode_embedded(
    ctx: &mut Ctx,
    x: Var,
    params: &EncoderParams,
    config: &EncoderConfig,
    pad_mask: Option<&[bool]>,
    syntax: Option<&[SyntaxKv]>,
) -> Result<(Var, AttentionTrace)> {
    if let Some(kv) = syntax {
        if kv.len() != params.layers.len() {
            return Err(Error::Input(format!(
                "{} injected key/value sets for {} layers",
                kv.len(),
                params.layers.len()
            )));
        }
    }
    let mut h = x;
    let mut trace = AttentionTrace::default();
    for (l, layer) in params.layers.iter().enumerate() {
        let extra = syntax.map(|kv| &kv[l]);
        let (a, weights) = self_attention_layer(ctx, h, pad_mask, layer, config, extra)?;
        h = ffn_layer(ctx, a, layer, config)?;
        trace.layers.push(weights);
    }
    Ok((h, trace))
}

pub fn encode(
    ctx: &mut Ctx,
    params: &EncoderParams,
    config: &EncoderConfig,
    input: &EncoderInput,
    syntax: Option<&[SyntaxKv]>,
) -> Result<(Var, AttentionTrace)> {
    let x = embed(ctx, params, config, input)?;
    encode_embedded(ctx, x, params, config, input.pad_mask.as_deref(), syntax)
}

fn matrix_dims(ctx: &Ctx, v: Var) -> Result<(usize, usize)> {
    match *ctx.tape.shape(v) {
        [m, d] => Ok((m, d)),
        ref other => Err(Error::Input(format!("expected a matrix, got shape {other:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tape;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small(layers: usize) -> (EncoderConfig, ParamStore, EncoderParams) {
        let config = EncoderConfig {
            layers,
            heads: 2,
            d_model: 8,
            d_ff: 32,
            max_len: 16,
            vocab_size: 12,
            dropout_p: 0.1,
            segment_types: 1,
        };
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = EncoderParams::new(&mut store, &mut Init::new(&mut rng, 0.5), &config);
        (config, store, params)
    }

    fn run(store: &ParamStore, params: &EncoderParams, config: &EncoderConfig, input: &EncoderInput) -> (Tensor, AttentionTrace) {
        let mut tape = Tape::new();
        let mut ctx = Ctx::eval(&mut tape, store);
        let (h, trace) = encode(&mut ctx, params, config, input, None).unwrap();
        (tape.value(h).clone(), trace)
    }

    #[test]
    fn zero_tables_embed_to_zero() {
        let (config, mut store, params) = small(0);
        for id in [params.wordpiece_emb, params.pos_emb, params.seg_emb] {
            store.get_mut(id).fill(0.0);
        }
        let (out, _) = run(&store, &params, &config, &EncoderInput::new(vec![3, 4, 5]));
        assert!(out.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_position_embedding_is_table_sum() {
        let (config, store, params) = small(0);
        let (out, _) = run(&store, &params, &config, &EncoderInput::new(vec![7]));
        let w = store.get(params.wordpiece_emb);
        let p = store.get(params.pos_emb);
        let s = store.get(params.seg_emb);
        for c in 0..8 {
            assert_eq!(out.get(0, c), w.get(7, c) + p.get(0, c) + s.get(0, c));
        }
    }

    #[test]
    fn null_indicator_changes_nothing() {
        let (config, mut store, params) = small(1);
        for c in 0..8 {
            store.get_mut(params.indicator_emb).set(0, c, 0.0);
        }
        let plain = EncoderInput::new(vec![1, 2, 3]);
        let marked = EncoderInput {
            indicators: Some(vec![0, 0, 0]),
            ..plain.clone()
        };
        let a = run(&store, &params, &config, &plain).0;
        let b = run(&store, &params, &config, &marked).0;
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_long_and_out_of_range_inputs() {
        let (config, store, params) = small(1);
        let mut tape = Tape::new();
        let mut ctx = Ctx::eval(&mut tape, &store);
        let long = EncoderInput::new(vec![1; 17]);
        assert!(matches!(embed(&mut ctx, &params, &config, &long), Err(Error::Input(_))));
        let bad = EncoderInput::new(vec![99]);
        assert!(embed(&mut ctx, &params, &config, &bad).is_err());
    }

    #[test]
    fn single_position_attends_to_itself() {
        let (config, store, params) = small(1);
        let (_, trace) = run(&store, &params, &config, &EncoderInput::new(vec![4]));
        assert_eq!(trace.layers[0][0].data(), &[1.0]);
    }

    #[test]
    fn attention_rows_are_distributions_and_padding_gets_zero() {
        let (config, store, params) = small(2);
        let input = EncoderInput {
            pad_mask: Some(vec![true, true, true, false]),
            ..EncoderInput::new(vec![1, 5, 9, 0])
        };
        let (_, trace) = run(&store, &params, &config, &input);
        for layer in &trace.layers {
            for w in layer {
                for r in 0..4 {
                    let row = w.row(r);
                    assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                    assert_eq!(row[3], 0.0);
                }
            }
        }
    }

    #[test]
    fn padded_inputs_do_not_leak() {
        let (config, store, params) = small(2);
        let mask = Some(vec![true, true, false]);
        let a = EncoderInput {
            pad_mask: mask.clone(),
            ..EncoderInput::new(vec![1, 2, 3])
        };
        let b = EncoderInput {
            pad_mask: mask,
            ..EncoderInput::new(vec![1, 2, 11])
        };
        let (ha, _) = run(&store, &params, &config, &a);
        let (hb, _) = run(&store, &params, &config, &b);
        assert_eq!(ha.row(0), hb.row(0));
        assert_eq!(ha.row(1), hb.row(1));
        assert_ne!(ha.row(2), hb.row(2));
    }

    #[test]
    fn positions_break_permutation_equivariance() {
        let (config, store, params) = small(1);
        let (a, _) = run(&store, &params, &config, &EncoderInput::new(vec![1, 2]));
        let (b, _) = run(&store, &params, &config, &EncoderInput::new(vec![2, 1]));
        assert!(a.row(0).iter().zip(b.row(1)).any(|(x, y)| (x - y).abs() > 1e-6));
    }

    #[test]
    fn deterministic_in_eval() {
        let (config, store, params) = small(2);
        let input = EncoderInput::new(vec![1, 2, 3, 4]);
        assert_eq!(run(&store, &params, &config, &input).0, run(&store, &params, &config, &input).0);
    }

    #[test]
    fn zero_injection_in_add_mode_is_exact() {
        let (config, store, params) = small(2);
        let input = EncoderInput::new(vec![1, 2, 3]);
        let (base, _) = run(&store, &params, &config, &input);
        let mut tape = Tape::new();
        let mut ctx = Ctx::eval(&mut tape, &store);
        let zeros = ctx.tape.constant(Tensor::zeros(&[3, 8]));
        let kv = vec![
            SyntaxKv {
                mode: JointMode::Add,
                keys: zeros,
                values: zeros,
            };
            2
        ];
        let (h, _) = encode(&mut ctx, &params, &config, &input, Some(&kv)).unwrap();
        assert!(tape.value(h).max_abs_diff(&base) <= 1e-9);
    }

    #[test]
    fn zero_ffn_reduces_to_layer_norm() {
        let (config, mut store, params) = small(1);
        let layer = params.layers[0].clone();
        for id in [layer.ffn.w1, layer.ffn.w2] {
            store.get_mut(id).fill(0.0);
        }
        let mut tape = Tape::new();
        let mut ctx = Ctx::eval(&mut tape, &store);
        let x = ctx.tape.constant(Tensor::from_rows(&[vec![1.0, 2.0, 0.0, -1.0, 3.0, 0.5, 0.0, 1.0]]).unwrap());
        let y = ffn_layer(&mut ctx, x, &layer, &config).unwrap();
        let ln = layer.ln_ffn.forward(&mut ctx, x).unwrap();
        assert_eq!(tape.value(y), tape.value(ln));
        assert_eq!(store.get(layer.ffn.w1).shape(), [8, 32]);
    }

    #[test]
    fn dropout_only_in_training() {
        let (config, store, params) = small(1);
        let input = EncoderInput::new(vec![1, 2, 3]);
        let (eval, _) = run(&store, &params, &config, &input);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut tape = Tape::new();
        let mut ctx = Ctx::train(&mut tape, &store, &mut rng);
        let (h, _) = encode(&mut ctx, &params, &config, &input, None).unwrap();
        assert_ne!(tape.value(h), &eval);
    }

    #[test]
    fn joint_mode_parses() {
        assert_eq!("add".parse::<JointMode>().unwrap(), JointMode::Add);
        assert!("sum".parse::<JointMode>().is_err());
    }
}
