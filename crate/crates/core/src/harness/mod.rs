//! Training, evaluation, synthetic data, the parse-quality sensitivity
//! experiment and checkpoint persistence.

mod checkpoint;
mod metrics;
mod optim;
mod parallel;
mod sensitivity;
mod synthetic;
mod train;

pub use checkpoint::{from_bytes, load_checkpoint, save_checkpoint, to_bytes, MAGIC, VERSION};
pub use metrics::{
    eval_relations, eval_spans, evaluate, prf, relation_counts, relation_report, span_counts, MetricsReport,
};
pub use optim::{adam_step, OptimState};
pub use parallel::{map_sentences, worker_count};
pub use sensitivity::{corrupt_dataset, ols, sensitivity_experiment, Fit, SensitivityReport, SensitivityRow};
pub use synthetic::{make_synthetic, synthetic_splits, SyntheticSpec};
pub use train::{history_csv, sentence_gradients, train, EpochRecord, TrainConfig, TrainOutcome};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use crate::fusion::INIT_STREAM;
pub const DROPOUT_STREAM: u64 = 2;
pub const SHUFFLE_STREAM: u64 = 3;
pub const CORRUPT_STREAM: u64 = 4;
pub const DATA_STREAM: u64 = 5;

/// Generator for one labelled purpose of a master seed. `index`
/// distinguishes several generators of the same purpose.
pub fn stream_rng(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    let mixed = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17);
    let mut rng = ChaCha8Rng::seed_from_u64(mixed);
    rng.set_stream(stream);
    rng
}
