use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor;

/// Adam state with a linearly decaying learning rate.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: usize,
    pub base_lr: f64,
    pub total_steps: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptimState {
    pub fn new(store: &ParamStore, base_lr: f64, total_steps: usize) -> Self {
        let zeros: Vec<Tensor> = store.values().iter().map(|t| Tensor::zeros(t.shape())).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
            base_lr,
            total_steps,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// Learning rate used by the next step.
    pub fn lr(&self) -> f64 {
        self.base_lr * (1.0 - self.step as f64 / self.total_steps as f64)
    }
}

/// One bias-corrected Adam update. `grads` is aligned with the store;
/// `None` means the parameter was not used and gets a zero gradient.
pub fn adam_step(store: &mut ParamStore, grads: &[Option<Tensor>], state: &mut OptimState) -> Result<()> {
    if state.step >= state.total_steps {
        return Err(Error::Config(format!(
            "optimizer already took all {} steps",
            state.total_steps
        )));
    }
    if grads.len() != store.len() {
        return Err(Error::Input(format!("{} gradients for {} parameters", grads.len(), store.len())));
    }
    for id in store.ids() {
        if let Some(g) = &grads[id.index()] {
            if g.shape() != store.get(id).shape() {
                return Err(Error::Input(format!("gradient shape mismatch for {}", store.name(id))));
            }
            if !g.is_finite() {
                return Err(Error::Divergence(format!("non-finite gradient for {}", store.name(id))));
            }
        }
    }
    let lr = state.lr();
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    for (i, value) in store.values_mut().iter_mut().enumerate() {
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        let g = grads[i].as_ref().map(Tensor::data);
        for (k, x) in value.data_mut().iter_mut().enumerate() {
            let gk = g.map_or(0.0, |g| g[k]);
            m[k] = b1 * m[k] + (1.0 - b1) * gk;
            v[k] = b2 * v[k] + (1.0 - b2) * gk * gk;
            let mhat = m[k] / c1;
            let vhat = v[k] / c2;
            *x -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(x: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("x", Tensor::scalar(x));
        s
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut store = scalar_store(1.5);
        let mut st = OptimState::new(&store, 0.1, 10);
        adam_step(&mut store, &[Some(Tensor::scalar(0.0))], &mut st).unwrap();
        adam_step(&mut store, &[None], &mut st).unwrap();
        assert_eq!(store.values()[0].item(), 1.5);
    }

    #[test]
    fn schedule_endpoint() {
        let store = scalar_store(0.0);
        let mut st = OptimState::new(&store, 0.1, 10);
        st.step = 9;
        assert!((st.lr() - 0.01).abs() < 1e-15);
        st.step = 10;
        let mut store = store;
        assert!(adam_step(&mut store, &[None], &mut st).is_err());
    }

    #[test]
    fn constant_gradient_matches_hand_recursion() {
        let mut store = scalar_store(0.0);
        let mut st = OptimState::new(&store, 0.1, 3);
        for _ in 0..3 {
            adam_step(&mut store, &[Some(Tensor::scalar(1.0))], &mut st).unwrap();
        }
        // with g = 1, the bias-corrected ratio is 1 / (1 + eps) at every step
        let r = 1.0 / (1.0 + 1e-8);
        let expect = -(0.1 * r + 0.1 * (2.0 / 3.0) * r + 0.1 * (1.0 / 3.0) * r);
        assert!((store.values()[0].item() - expect).abs() < 1e-12);
    }

    #[test]
    fn nan_gradient_names_parameter() {
        let mut store = scalar_store(0.0);
        let mut st = OptimState::new(&store, 0.1, 3);
        let err = adam_step(&mut store, &[Some(Tensor::scalar(f64::NAN))], &mut st).unwrap_err();
        assert!(err.to_string().contains('x'));
    }
}
