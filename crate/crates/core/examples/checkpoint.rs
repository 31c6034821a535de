//! Saves a trained model, reloads it and compares evaluation outputs.
//! Weights are stored as 32-bit floats, so states drift by about 1e-7.
//!
//! cargo run --release --example checkpoint

use sfl::fusion::{FusionModel, ModelConfig, Variant};
use sfl::harness::{evaluate, load_checkpoint, save_checkpoint, synthetic_splits, to_bytes, train, SyntheticSpec, TrainConfig};

fn main() -> sfl::Result<()> {
    let spec = SyntheticSpec::default();
    let splits = synthetic_splits(&spec, 1, &[200, 50])?;
    let config = ModelConfig::desk(Variant::Joint, spec.vocab().len(), spec.head_spec());
    let model = FusionModel::new(config, spec.vocab(), 1)?;
    let model = train(
        model,
        &splits[0],
        &splits[1],
        &TrainConfig {
            epochs: 2,
            seed: 1,
            ..TrainConfig::default()
        },
    )?
    .model;

    let path = std::env::temp_dir().join("sfl-example-checkpoint.bin");
    save_checkpoint(&model, &path)?;
    let loaded = load_checkpoint(&path)?;
    println!("{} tensors, {} bytes", loaded.store.len(), std::fs::metadata(&path)?.len());
    println!("second save identical: {}", to_bytes(&loaded) == std::fs::read(&path)?);

    let drift = splits[1]
        .iter()
        .map(|s| Ok(model.states(s)?.0.max_abs_diff(&loaded.states(s)?.0)))
        .collect::<sfl::Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    println!("max token-state drift {drift:.2e}");
    println!("before {}", evaluate(&model, &splits[1])?.summary());
    println!("after  {}", evaluate(&loaded, &splits[1])?.summary());
    std::fs::remove_file(&path)?;
    Ok(())
}
