//! Named parameter storage and the per-forward binding context.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::tensor::{self, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Ordered collection of named tensors. Insertion order is the checkpoint
/// order and the order in which optimizer state is kept.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(
            !self.names.contains(&name),
            "duplicate parameter name {name}"
        );
        self.names.push(name);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn values(&self) -> &[Tensor] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Tensor] {
        &mut self.values
    }

    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }
}

/// Gaussian initializer drawing from a dedicated stream.
pub struct Init<'r> {
    rng: &'r mut ChaCha8Rng,
    std: f64,
}

impl<'r> Init<'r> {
    pub fn new(rng: &'r mut ChaCha8Rng, std: f64) -> Self {
        Self { rng, std }
    }

    pub fn normal(&mut self, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        let dist = Normal::new(0.0, self.std).expect("positive std");
        Tensor::new(shape, (0..n).map(|_| dist.sample(&mut *self.rng)).collect())
            .expect("init shape is positive")
    }
}

/// Binds parameters onto a tape for one forward pass and carries the
/// dropout stream when training.
pub struct Ctx<'a> {
    pub tape: &'a mut Tape,
    store: &'a ParamStore,
    bound: Vec<Option<Var>>,
    track: bool,
    rng: Option<&'a mut ChaCha8Rng>,
}

impl<'a> Ctx<'a> {
    /// Evaluation: no gradients, no dropout.
    pub fn eval(tape: &'a mut Tape, store: &'a ParamStore) -> Self {
        Self::build(tape, store, false, None)
    }

    /// Gradients tracked, dropout disabled.
    pub fn with_grads(tape: &'a mut Tape, store: &'a ParamStore) -> Self {
        Self::build(tape, store, true, None)
    }

    /// Gradients tracked and dropout drawn from `rng`.
    pub fn train(tape: &'a mut Tape, store: &'a ParamStore, rng: &'a mut ChaCha8Rng) -> Self {
        Self::build(tape, store, true, Some(rng))
    }

    /// Uses pre-made tape variables for every parameter, in store order.
    pub fn with_bound(tape: &'a mut Tape, store: &'a ParamStore, vars: &[Var]) -> Self {
        assert_eq!(vars.len(), store.len(), "one variable per parameter");
        let mut ctx = Self::build(tape, store, false, None);
        ctx.bound = vars.iter().copied().map(Some).collect();
        ctx
    }

    fn build(tape: &'a mut Tape, store: &'a ParamStore, track: bool, rng: Option<&'a mut ChaCha8Rng>) -> Self {
        Self {
            tape,
            store,
            bound: vec![None; store.len()],
            track,
            rng,
        }
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.0] {
            return v;
        }
        let v = self.tape.leaf(self.store.get(id).clone(), self.track);
        self.bound[id.0] = Some(v);
        v
    }

    pub fn params(&self) -> &ParamStore {
        self.store
    }

    pub fn training(&self) -> bool {
        self.rng.is_some()
    }

    pub fn dropout(&mut self, x: Var, p: f64) -> tensor::Result<Var> {
        match self.rng.as_deref_mut() {
            Some(rng) if p > 0.0 => self.tape.dropout(x, p, rng),
            _ => Ok(x),
        }
    }

    /// Keep mask for `len` entries in training mode, `None` otherwise.
    pub fn dropout_keep(&mut self, len: usize, p: f64) -> Option<Vec<f64>> {
        match self.rng.as_deref_mut() {
            Some(rng) if p > 0.0 => Some(tensor::dropout_mask(len, p, rng)),
            _ => None,
        }
    }

    pub fn random_u64(&mut self) -> Option<u64> {
        self.rng.as_deref_mut().map(|r| r.random())
    }

    /// Parameters that were used by this forward pass, with their variables.
    pub fn bindings(&self) -> Vec<(ParamId, Var)> {
        self.bound
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| (ParamId(i), v)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn binding_is_cached_per_forward() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::full(&[2, 2], 1.0));
        assert_eq!(store.id("w"), Some(w));
        let mut tape = Tape::new();
        let mut ctx = Ctx::with_grads(&mut tape, &store);
        let a = ctx.param(w);
        let b = ctx.param(w);
        assert_eq!(a, b);
        assert_eq!(ctx.bindings().len(), 1);
        assert!(!ctx.training());
    }

    #[test]
    fn init_is_seeded() {
        let mut r1 = ChaCha8Rng::seed_from_u64(4);
        let mut r2 = ChaCha8Rng::seed_from_u64(4);
        let a = Init::new(&mut r1, 0.02).normal(&[3, 3]);
        let b = Init::new(&mut r2, 0.02).normal(&[3, 3]);
        assert_eq!(a, b);
    }

    #[test]
    #[should_panic(expected = "duplicate")]
    fn duplicate_names_panic() {
        let mut store = ParamStore::new();
        store.add("w", Tensor::scalar(0.0));
        store.add("w", Tensor::scalar(0.0));
    }
}
