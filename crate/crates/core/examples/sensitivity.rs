//! Parse-quality sensitivity on the head-copy task: a late-fusion tagger
//! trained on gold trees against one trained on corrupted trees, each
//! evaluated under increasing corruption. Prints the pooled OLS slope of
//! (UAS, ΔF1) per model and writes both CSVs to the working directory.
//!
//! cargo run --release --example sensitivity -- [train_size] [epochs] [seed] [noisy_rate]

use sfl::fusion::{FusionModel, ModelConfig, Variant};
use sfl::harness::{corrupt_dataset, sensitivity_experiment, synthetic_splits, train, SyntheticSpec, TrainConfig};

fn main() -> sfl::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let train_size = args.first().and_then(|a| a.parse().ok()).unwrap_or(2000);
    let epochs = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(8);
    let seed = args.get(2).and_then(|a| a.parse().ok()).unwrap_or(0);
    let noisy_rate = args.get(3).and_then(|a| a.parse().ok()).unwrap_or(0.3);

    let spec = SyntheticSpec::default();
    let [data, dev, test]: [Vec<_>; 3] = synthetic_splits(&spec, seed, &[train_size, 200, 500])?
        .try_into()
        .expect("three splits");

    let config = TrainConfig {
        epochs,
        seed,
        ..TrainConfig::default()
    };
    let fresh = || FusionModel::new(ModelConfig::desk(Variant::Late, spec.vocab().len(), spec.head_spec()), spec.vocab(), seed);
    let gold = train(fresh()?, &data, &dev, &config)?.model;
    let noisy_data = corrupt_dataset(&data, noisy_rate, seed ^ 0x5eed)?;
    let noisy_dev = corrupt_dataset(&dev, noisy_rate, seed ^ 0x5eed)?;
    let noisy = train(fresh()?, &noisy_data, &noisy_dev, &config)?.model;

    let rates = [0.1, 0.2, 0.3, 0.4, 0.5];
    let report = sensitivity_experiment(&[("gold_trained", &gold), ("noisy_trained", &noisy)], &test, &rates, seed)?;
    for fit in &report.fits {
        let rate = fit.rate.map_or("all".to_string(), |r| r.to_string());
        let slope = fit.slope.map_or("undefined".to_string(), |s| format!("{s:.4}"));
        println!("{:>14} rate {rate:>4} slope {slope}", fit.condition);
    }
    std::fs::write("metrics.csv", report.metrics_csv())?;
    std::fs::write("sensitivity.csv", report.fits_csv())?;
    Ok(())
}
