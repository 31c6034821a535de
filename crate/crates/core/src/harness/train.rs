use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::FusionModel;
use crate::params::Ctx;
use crate::tensor::{Tape, Tensor};
use crate::treebank::Sentence;

use super::metrics::{evaluate, MetricsReport};
use super::optim::{adam_step, OptimState};
use super::{stream_rng, DROPOUT_STREAM, SHUFFLE_STREAM};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 16,
            base_lr: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev: MetricsReport,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best dev F1.
    pub model: FusionModel,
    pub history: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
}

/// Loss and parameter gradients for one sentence.
pub fn sentence_gradients(
    model: &FusionModel,
    sentence: &Sentence,
    dropout: Option<&mut rand_chacha::ChaCha8Rng>,
) -> Result<(f64, Vec<Option<Tensor>>)> {
    let mut tape = Tape::new();
    let (loss, bindings) = {
        let mut ctx = match dropout {
            Some(rng) => Ctx::train(&mut tape, &model.store, rng),
            None => Ctx::with_grads(&mut tape, &model.store),
        };
        let loss = model.loss(&mut ctx, sentence)?;
        (loss, ctx.bindings())
    };
    let value = tape.value(loss).item();
    tape.backward(loss)?;
    let mut grads = vec![None; model.store.len()];
    for (id, var) in bindings {
        grads[id.index()] = tape.grad(var).cloned();
    }
    Ok((value, grads))
}

/// Mini-batch Adam with a linearly decaying rate. Dev metrics are taken
/// after every epoch; with an empty dev split the training split is used.
pub fn train(model: FusionModel, data: &[Sentence], dev: &[Sentence], config: &TrainConfig) -> Result<TrainOutcome> {
    if config.batch_size == 0 {
        return Err(Error::Config("batch_size must be at least 1".into()));
    }
    for s in data.iter().chain(dev) {
        model.check_payload(s)?;
    }
    let mut model = model;
    if config.epochs == 0 || data.is_empty() {
        return Ok(TrainOutcome {
            model,
            history: Vec::new(),
            best_epoch: None,
        });
    }
    let dev = if dev.is_empty() { data } else { dev };
    let batches = data.len().div_ceil(config.batch_size);
    let mut state = OptimState::new(&model.store, config.base_lr, batches * config.epochs);
    let mut shuffle = stream_rng(config.seed, SHUFFLE_STREAM, 0);
    let mut dropout = stream_rng(config.seed, DROPOUT_STREAM, 0);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, crate::params::ParamStore)> = None;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut acc: Vec<Option<Tensor>> = vec![None; model.store.len()];
            for &i in batch {
                let (loss, grads) = sentence_gradients(&model, &data[i], Some(&mut dropout))?;
                if !loss.is_finite() {
                    return Err(Error::Divergence(format!("loss {loss} at epoch {epoch}")));
                }
                total += loss;
                for (slot, g) in acc.iter_mut().zip(grads) {
                    match (slot.as_mut(), g) {
                        (Some(a), Some(g)) => a.data_mut().iter_mut().zip(g.data()).for_each(|(x, y)| *x += y),
                        (None, Some(g)) => *slot = Some(g),
                        _ => {}
                    }
                }
            }
            let inv = 1.0 / batch.len() as f64;
            for g in acc.iter_mut().flatten() {
                g.data_mut().iter_mut().for_each(|x| *x *= inv);
            }
            adam_step(&mut model.store, &acc, &mut state)?;
        }
        let report = evaluate(&model, dev)?;
        if best.as_ref().is_none_or(|(f1, _, _)| report.f1 > *f1) {
            best = Some((report.f1, epoch, model.store.clone()));
        }
        history.push(EpochRecord {
            epoch,
            train_loss: total / data.len() as f64,
            dev: report,
        });
    }
    let (_, best_epoch, store) = best.expect("at least one epoch ran");
    model.store = store;
    Ok(TrainOutcome {
        model,
        history,
        best_epoch: Some(best_epoch),
    })
}

/// `epoch,train_loss,dev_precision,dev_recall,dev_f1,dev_accuracy`
pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_loss,dev_precision,dev_recall,dev_f1,dev_accuracy\n");
    for r in history {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
            r.epoch, r.train_loss, r.dev.precision, r.dev.recall, r.dev.f1, r.dev.accuracy
        ));
    }
    out
}
