//! Building blocks shared by the sequence encoder and the syntax GNN.

use crate::params::{Ctx, Init, ParamId, ParamStore};
use crate::tensor::{Result, Tensor, Var};

pub const LN_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerNormParams {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNormParams {
    pub fn new(store: &mut ParamStore, prefix: &str, d: usize) -> Self {
        Self {
            gain: store.add(format!("{prefix}.gain"), Tensor::full(&[d], 1.0)),
            bias: store.add(format!("{prefix}.bias"), Tensor::zeros(&[d])),
        }
    }

    pub fn forward(&self, ctx: &mut Ctx, x: Var) -> Result<Var> {
        let g = ctx.param(self.gain);
        let b = ctx.param(self.bias);
        ctx.tape.layer_norm(x, g, b, LN_EPS)
    }
}

/// Position-wise `W2 · gelu(x W1 + b1) + b2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FfnParams {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

impl FfnParams {
    pub fn new(store: &mut ParamStore, init: &mut Init, prefix: &str, d: usize, d_ff: usize) -> Self {
        Self {
            w1: store.add(format!("{prefix}.w1"), init.normal(&[d, d_ff])),
            b1: store.add(format!("{prefix}.b1"), Tensor::zeros(&[d_ff])),
            w2: store.add(format!("{prefix}.w2"), init.normal(&[d_ff, d])),
            b2: store.add(format!("{prefix}.b2"), Tensor::zeros(&[d])),
        }
    }

    pub fn forward(&self, ctx: &mut Ctx, x: Var) -> Result<Var> {
        let h = linear(ctx, x, self.w1)?;
        let b1 = ctx.param(self.b1);
        let h = ctx.tape.add_row(h, b1)?;
        let h = ctx.tape.gelu(h)?;
        let h = linear(ctx, h, self.w2)?;
        let b2 = ctx.param(self.b2);
        ctx.tape.add_row(h, b2)
    }
}

pub fn linear(ctx: &mut Ctx, x: Var, w: ParamId) -> Result<Var> {
    let wv = ctx.param(w);
    ctx.tape.matmul(x, wv)
}

/// `LN(h + dropout(FFN(h)))`.
pub fn ffn_block(ctx: &mut Ctx, h: Var, ffn: &FfnParams, ln: &LayerNormParams, dropout_p: f64) -> Result<Var> {
    let f = ffn.forward(ctx, h)?;
    let f = ctx.dropout(f, dropout_p)?;
    let r = ctx.tape.add(h, f)?;
    ln.forward(ctx, r)
}

/// `LN(x + dropout(y))`.
pub fn residual_norm(ctx: &mut Ctx, x: Var, y: Var, ln: &LayerNormParams, dropout_p: f64) -> Result<Var> {
    let y = ctx.dropout(y, dropout_p)?;
    let r = ctx.tape.add(x, y)?;
    ln.forward(ctx, r)
}
