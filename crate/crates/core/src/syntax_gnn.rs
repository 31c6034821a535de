//! Graph-attention encoder over the wordpiece dependency graph. Each layer is
//! a transformer layer whose attention only looks at graph neighbours.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{self, FfnParams, LayerNormParams};
use crate::params::{Ctx, Init, ParamId, ParamStore};
use crate::tensor::{EdgeAttention, Var};
use crate::treebank::WordpieceGraph;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GnnConfig {
    pub layers: usize,
    pub heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub dropout_p: f64,
}

impl GnnConfig {
    pub fn desk() -> Self {
        Self {
            layers: 4,
            heads: 4,
            d_model: 64,
            d_ff: 256,
            dropout_p: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || self.d_model == 0 || self.d_ff == 0 {
            return Err(Error::Config("gnn heads, d_model and d_ff must be at least 1".into()));
        }
        if self.d_model % self.heads != 0 {
            return Err(Error::Config(format!(
                "gnn d_model {} is not divisible by {} heads",
                self.d_model, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Config(format!("dropout_p {} outside [0, 1)", self.dropout_p)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GnnLayerParams {
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub wf: ParamId,
    pub ln_attn: LayerNormParams,
    pub ffn: FfnParams,
    pub ln_ffn: LayerNormParams,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GnnParams {
    pub layers: Vec<GnnLayerParams>,
}

impl GnnParams {
    pub fn new(store: &mut ParamStore, init: &mut Init, config: &GnnConfig) -> Self {
        let d = config.d_model;
        let layers = (0..config.layers)
            .map(|l| {
                let p = format!("gnn.l{l}");
                let mut w = |name: &str| store.add(format!("{p}.{name}"), init.normal(&[d, d]));
                let (wq, wk, wv, wf) = (w("wq"), w("wk"), w("wv"), w("wf"));
                GnnLayerParams {
                    wq,
                    wk,
                    wv,
                    wf,
                    ln_attn: LayerNormParams::new(store, &format!("{p}.ln_attn"), d),
                    ffn: FfnParams::new(store, init, &format!("{p}.ffn"), d, config.d_ff),
                    ln_ffn: LayerNormParams::new(store, &format!("{p}.ln_ffn"), d),
                }
            })
            .collect();
        Self { layers }
    }
}

/// Per layer, per head: scores and weights on each node's neighbour list.
#[derive(Clone, Debug, Default)]
pub struct GraphAttentionTrace {
    pub layers: Vec<Vec<EdgeAttention>>,
}

/// Neighbourhood-restricted attention followed by the output projection.
/// The residual and layer norm belong to the caller.
pub fn graph_attention(
    ctx: &mut Ctx,
    v: Var,
    graph: &WordpieceGraph,
    layer: &GnnLayerParams,
    config: &GnnConfig,
) -> Result<(Var, Vec<EdgeAttention>)> {
    let m = ctx.tape.shape(v)[0];
    if m != graph.len() {
        return Err(Error::Input(format!(
            "{m} node states for a graph of {} nodes",
            graph.len()
        )));
    }
    let q = nn::linear(ctx, v, layer.wq)?;
    let k = nn::linear(ctx, v, layer.wk)?;
    let val = nn::linear(ctx, v, layer.wv)?;
    let keep = ctx.dropout_keep(config.heads * graph.entry_count(), config.dropout_p);
    let scale = 1.0 / ((config.d_model / config.heads) as f64).sqrt();
    let (agg, trace) = ctx
        .tape
        .graph_attention(q, k, val, config.heads, graph.adjacency(), scale, keep)?;
    let z = nn::linear(ctx, agg, layer.wf)?;
    Ok((z, trace))
}

pub fn gnn_layer(
    ctx: &mut Ctx,
    v: Var,
    graph: &WordpieceGraph,
    layer: &GnnLayerParams,
    config: &GnnConfig,
) -> Result<(Var, Vec<EdgeAttention>)> {
    let (z, trace) = graph_attention(ctx, v, graph, layer, config)?;
    let h = nn::residual_norm(ctx, v, z, &layer.ln_attn, config.dropout_p)?;
    let out = nn::ffn_block(ctx, h, &layer.ffn, &layer.ln_ffn, config.dropout_p)?;
    Ok((out, trace))
}

pub fn gnn_encode(
    ctx: &mut Ctx,
    x: Var,
    graph: &WordpieceGraph,
    params: &GnnParams,
    config: &GnnConfig,
) -> Result<(Var, GraphAttentionTrace)> {
    let mut h = x;
    let mut trace = GraphAttentionTrace::default();
    for layer in &params.layers {
        let (out, t) = gnn_layer(ctx, h, graph, layer, config)?;
        h = out;
        trace.layers.push(t);
    }
    Ok((h, trace))
}
