use crate::error::{Error, Result};
use crate::params::{Ctx, Init, ParamId, ParamStore};
use crate::tensor::{gemm, log_sum_exp, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CrfParams {
    /// `d × T` emission projection.
    pub emission: ParamId,
    /// `T × T`, row = previous tag.
    pub transitions: ParamId,
    pub start: ParamId,
    pub end: ParamId,
}

impl CrfParams {
    pub fn new(store: &mut ParamStore, init: &mut Init, d: usize, tags: usize) -> Self {
        Self {
            emission: store.add("crf.emission", init.normal(&[d, tags])),
            transitions: store.add("crf.transitions", Tensor::zeros(&[tags, tags])),
            start: store.add("crf.start", Tensor::zeros(&[tags])),
            end: store.add("crf.end", Tensor::zeros(&[tags])),
        }
    }

    pub fn tag_count(&self, store: &ParamStore) -> usize {
        store.get(self.start).len()
    }
}

/// Allowed starts and transitions (`trans[prev * T + next]`). Disallowed
/// entries score `-inf`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Constraints {
    pub start: Vec<bool>,
    pub trans: Vec<bool>,
}

/// Dense CRF scores for one sentence.
#[derive(Clone, Debug, PartialEq)]
pub struct CrfPotentials {
    pub n: usize,
    pub t: usize,
    /// `n × T` row-major.
    pub emit: Vec<f64>,
    pub trans: Vec<f64>,
    pub start: Vec<f64>,
    pub end: Vec<f64>,
}

/// Posterior marginals under the CRF.
#[derive(Clone, Debug)]
pub struct Marginals {
    pub log_z: f64,
    /// `n × T`: P(y_i = a).
    pub unary: Vec<f64>,
    /// `T × T`: Σ_i P(y_{i-1} = a, y_i = b).
    pub pair: Vec<f64>,
}

impl CrfPotentials {
    pub fn new(emit: &Tensor, trans: &Tensor, start: &Tensor, end: &Tensor, constraints: Option<&Constraints>) -> Result<Self> {
        let (n, t) = match *emit.shape() {
            [n, t] if n >= 1 && t >= 1 => (n, t),
            ref s => return Err(Error::Input(format!("emissions must be n×T, got {s:?}"))),
        };
        if trans.shape() != [t, t] || start.len() != t || end.len() != t {
            return Err(Error::Input(format!("CRF parameters do not match {t} tags")));
        }
        let mut p = Self {
            n,
            t,
            emit: emit.data().to_vec(),
            trans: trans.data().to_vec(),
            start: start.data().to_vec(),
            end: end.data().to_vec(),
        };
        if let Some(c) = constraints {
            if c.start.len() != t || c.trans.len() != t * t {
                return Err(Error::Input("constraint masks do not match tag count".into()));
            }
            for (s, &ok) in p.start.iter_mut().zip(&c.start) {
                if !ok {
                    *s = f64::NEG_INFINITY;
                }
            }
            for (s, &ok) in p.trans.iter_mut().zip(&c.trans) {
                if !ok {
                    *s = f64::NEG_INFINITY;
                }
            }
        }
        Ok(p)
    }

    fn e(&self, i: usize, y: usize) -> f64 {
        self.emit[i * self.t + y]
    }

    fn tr(&self, a: usize, b: usize) -> f64 {
        self.trans[a * self.t + b]
    }

    pub fn score(&self, tags: &[usize]) -> Result<f64> {
        if tags.len() != self.n {
            return Err(Error::Input(format!("{} tags for {} positions", tags.len(), self.n)));
        }
        if let Some(&bad) = tags.iter().find(|&&y| y >= self.t) {
            return Err(Error::Input(format!("tag id {bad} outside {} tags", self.t)));
        }
        let mut s = self.start[tags[0]] + self.end[tags[self.n - 1]];
        for (i, &y) in tags.iter().enumerate() {
            s += self.e(i, y);
            if i > 0 {
                s += self.tr(tags[i - 1], y);
            }
        }
        Ok(s)
    }

    fn forward(&self) -> Vec<f64> {
        let (n, t) = (self.n, self.t);
        let mut alpha = vec![0.0; n * t];
        for y in 0..t {
            alpha[y] = self.start[y] + self.e(0, y);
        }
        for i in 1..n {
            for y in 0..t {
                let prev = &alpha[(i - 1) * t..i * t];
                alpha[i * t + y] = log_sum_exp((0..t).map(|a| prev[a] + self.tr(a, y))) + self.e(i, y);
            }
        }
        alpha
    }

    fn backward(&self) -> Vec<f64> {
        let (n, t) = (self.n, self.t);
        let mut beta = vec![0.0; n * t];
        beta[(n - 1) * t..].copy_from_slice(&self.end);
        for i in (0..n - 1).rev() {
            for y in 0..t {
                let next = &beta[(i + 1) * t..(i + 2) * t];
                beta[i * t + y] = log_sum_exp((0..t).map(|b| self.tr(y, b) + self.e(i + 1, b) + next[b]));
            }
        }
        beta
    }

    /// Forward algorithm in log space.
    pub fn log_partition(&self) -> f64 {
        let alpha = self.forward();
        let last = &alpha[(self.n - 1) * self.t..];
        log_sum_exp((0..self.t).map(|y| last[y] + self.end[y]))
    }

    pub fn marginals(&self) -> Marginals {
        let (n, t) = (self.n, self.t);
        let alpha = self.forward();
        let beta = self.backward();
        let log_z = log_sum_exp((0..t).map(|y| alpha[(n - 1) * t + y] + self.end[y]));
        let unary = alpha
            .iter()
            .zip(&beta)
            .map(|(a, b)| (a + b - log_z).exp())
            .collect();
        let mut pair = vec![0.0; t * t];
        for i in 1..n {
            for a in 0..t {
                let fa = alpha[(i - 1) * t + a];
                if fa == f64::NEG_INFINITY {
                    continue;
                }
                for b in 0..t {
                    let s = fa + self.tr(a, b) + self.e(i, b) + beta[i * t + b] - log_z;
                    pair[a * t + b] += s.exp();
                }
            }
        }
        Marginals { log_z, unary, pair }
    }

    /// Highest-scoring sequence. Ties go to the lowest tag id, both at each
    /// back-pointer and at the final position.
    pub fn viterbi(&self) -> (Vec<usize>, f64) {
        let (n, t) = (self.n, self.t);
        let mut delta: Vec<f64> = (0..t).map(|y| self.start[y] + self.e(0, y)).collect();
        let mut back = vec![0usize; n * t];
        for i in 1..n {
            let mut next = vec![0.0; t];
            for y in 0..t {
                let mut best = (0, f64::NEG_INFINITY);
                for (a, &d) in delta.iter().enumerate() {
                    let s = d + self.tr(a, y);
                    if s > best.1 {
                        best = (a, s);
                    }
                }
                back[i * t + y] = best.0;
                next[y] = best.1 + self.e(i, y);
            }
            delta = next;
        }
        let mut best = (0, f64::NEG_INFINITY);
        for (y, &d) in delta.iter().enumerate() {
            let s = d + self.end[y];
            if s > best.1 {
                best = (y, s);
            }
        }
        let mut tags = vec![best.0; n];
        for i in (1..n).rev() {
            tags[i - 1] = back[i * t + tags[i]];
        }
        (tags, best.1)
    }
}

/// `states · W_emission`, recorded on the tape.
pub fn emissions(ctx: &mut Ctx, states: Var, params: &CrfParams) -> Result<Var> {
    let w = ctx.param(params.emission);
    Ok(ctx.tape.matmul(states, w)?)
}

/// `score(gold) - log Z` as a differentiable scalar. The local gradients
/// are the usual observed-minus-expected counts.
pub fn crf_log_likelihood(
    ctx: &mut Ctx,
    states: Var,
    gold: &[usize],
    params: &CrfParams,
    constraints: Option<&Constraints>,
) -> Result<Var> {
    let e = emissions(ctx, states, params)?;
    let tr = ctx.param(params.transitions);
    let st = ctx.param(params.start);
    let en = ctx.param(params.end);
    let pot = CrfPotentials::new(
        ctx.tape.value(e),
        ctx.tape.value(tr),
        ctx.tape.value(st),
        ctx.tape.value(en),
        constraints,
    )?;
    let gold_score = pot.score(gold)?;
    let marg = pot.marginals();
    let (n, t) = (pot.n, pot.t);
    let mut d_emit: Vec<f64> = marg.unary.iter().map(|p| -p).collect();
    let mut d_trans: Vec<f64> = marg.pair.iter().map(|p| -p).collect();
    let mut d_start: Vec<f64> = marg.unary[..t].iter().map(|p| -p).collect();
    let mut d_end: Vec<f64> = marg.unary[(n - 1) * t..].iter().map(|p| -p).collect();
    for (i, &y) in gold.iter().enumerate() {
        d_emit[i * t + y] += 1.0;
        if i > 0 {
            d_trans[gold[i - 1] * t + y] += 1.0;
        }
    }
    d_start[gold[0]] += 1.0;
    d_end[gold[n - 1]] += 1.0;
    Ok(ctx.tape.custom_scalar(
        "crf_log_likelihood",
        &[e, tr, st, en],
        gold_score - marg.log_z,
        vec![d_emit, d_trans, d_start, d_end],
    )?)
}

/// Best tag sequence for already computed token states.
pub fn viterbi_decode(
    states: &Tensor,
    store: &ParamStore,
    params: &CrfParams,
    constraints: Option<&Constraints>,
) -> Result<(Vec<usize>, f64)> {
    let w = store.get(params.emission);
    let (n, d) = (states.rows(), states.cols());
    if w.rows() != d {
        return Err(Error::Input(format!("states of width {d} for a {:?} emission matrix", w.shape())));
    }
    let t = w.cols();
    let mut emit = vec![0.0; n * t];
    gemm(n, d, t, states.data(), false, w.data(), false, &mut emit, false);
    let emit = Tensor::new(&[n, t], emit)?;
    let pot = CrfPotentials::new(
        &emit,
        store.get(params.transitions),
        store.get(params.start),
        store.get(params.end),
        constraints,
    )?;
    Ok(pot.viterbi())
}
