//! Trains baseline, late-fusion and joint-fusion taggers on the synthetic
//! head-copy task and reports test accuracy with gold and with fully
//! corrupted trees.
//!
//! cargo run --release --example head_copy -- [train_size] [epochs] [seed]

use std::time::Instant;

use sfl::fusion::{FusionModel, ModelConfig, Variant};
use sfl::harness::{corrupt_dataset, eval_spans, synthetic_splits, train, SyntheticSpec, TrainConfig};

fn main() -> sfl::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let train_size = args.first().and_then(|a| a.parse().ok()).unwrap_or(2000);
    let epochs = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(6);
    let seed = args.get(2).and_then(|a| a.parse().ok()).unwrap_or(0);

    let spec = SyntheticSpec::default();
    let [data, dev, test]: [Vec<_>; 3] = synthetic_splits(&spec, seed, &[train_size, 200, 500])?
        .try_into()
        .expect("three splits");
    let scrambled = corrupt_dataset(&test, 1.0, seed)?;

    for variant in [Variant::Baseline, Variant::Late, Variant::Joint] {
        let config = ModelConfig::desk(variant, spec.vocab().len(), spec.head_spec());
        let model = FusionModel::new(config, spec.vocab(), seed)?;
        let started = Instant::now();
        let outcome = train(
            model,
            &data,
            &dev,
            &TrainConfig {
                epochs,
                seed,
                ..TrainConfig::default()
            },
        )?;
        for r in &outcome.history {
            println!("  {variant} epoch {} loss {:.4} dev acc {:.4}", r.epoch, r.train_loss, r.dev.accuracy);
        }
        let gold = eval_spans(&outcome.model, &test)?;
        let noisy = eval_spans(&outcome.model, &scrambled)?;
        println!(
            "{variant:>8}: gold-tree acc {:.4}, corrupted-tree acc {:.4} ({:.0?})",
            gold.accuracy,
            noisy.accuracy,
            started.elapsed()
        );
    }
    Ok(())
}
