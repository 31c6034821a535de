//! Controlled parse corruption: rewires a fraction of heads and reports
//! the attachment score against the original trees. The expected column
//! comes from the rewire count alone; two-token sentences have no legal new
//! head, which is why rate 1.0 lands above it.
//!
//! cargo run --example corrupt_trees

use sfl::harness::{corrupt_dataset, synthetic_splits, SyntheticSpec};
use sfl::treebank::{corruption_count, uas};

fn main() -> sfl::Result<()> {
    let data = synthetic_splits(&SyntheticSpec::default(), 0, &[1000])?.remove(0);
    println!("rate  mean UAS  expected");
    for rate in [0.0, 0.1, 0.3, 0.5, 1.0] {
        let noisy = corrupt_dataset(&data, rate, 42)?;
        let mut total = 0.0;
        let mut expected = 0.0;
        for (gold, bad) in data.iter().zip(&noisy) {
            total += uas(&bad.tree, &gold.tree)?;
            let n = gold.len();
            expected += 1.0 - corruption_count(n, rate) as f64 / n as f64;
        }
        let n = data.len() as f64;
        println!("{rate:<4}  {:.4}    {:.4}", total / n, expected / n);
    }

    let s = &data[0];
    let bad = &corrupt_dataset(&data[..1], 0.5, 7)?[0];
    println!("before {:?} {:?}", s.tree.heads(), s.tree.deprels());
    println!("after  {:?} {:?}", bad.tree.heads(), bad.tree.deprels());
    Ok(())
}
