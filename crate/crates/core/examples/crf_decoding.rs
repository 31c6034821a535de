//! Linear-chain CRF over BIO tags: partition function, posterior
//! marginals and constrained Viterbi decoding, then span extraction.
//!
//! cargo run --example crf_decoding

use sfl::heads::{extract_spans, CrfPotentials, TagSet};
use sfl::tensor::Tensor;

fn main() -> sfl::Result<()> {
    let tags = TagSet::from_labels(["ARG0", "ARG1"]);
    println!("tags {:?}", tags.tags());
    let words = ["the", "agent", "ships", "cargo", "today"];
    // emission scores a tagger might produce, one row per word
    let emit = Tensor::from_rows(&[
        vec![0.1, 1.5, 0.2, 0.1, 0.0],
        vec![0.2, 0.3, 1.8, 0.0, 0.1],
        vec![2.0, 0.1, 0.1, 0.1, 0.1],
        vec![0.3, 0.0, 1.0, 1.4, 0.2],
        vec![1.2, 0.0, 0.4, 0.0, 0.6],
    ])?;
    let t = tags.len();
    let trans = Tensor::zeros(&[t, t]);
    let (start, end) = (Tensor::zeros(&[t]), Tensor::zeros(&[t]));

    for (label, constraints) in [("unconstrained", None), ("BIO-constrained", Some(tags.bio_constraints()))] {
        let crf = CrfPotentials::new(&emit, &trans, &start, &end, constraints.as_ref())?;
        let (path, score) = crf.viterbi();
        let decoded = tags.decode(&path);
        println!("{label}: log Z {:.4}, best score {score:.4}", crf.log_partition());
        println!("  tags  {decoded:?}");
        println!("  spans {:?}", extract_spans(&decoded));
        let m = crf.marginals();
        for (i, w) in words.iter().enumerate() {
            let row = &m.unary[i * t..(i + 1) * t];
            let best = (0..t).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
            println!("  {w:>6}: P({}) = {:.3}", tags.tag(best), row[best]);
        }
    }
    Ok(())
}
