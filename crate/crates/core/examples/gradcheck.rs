//! Finite-difference check of every layer over ten seeds.
//!
//! `cargo run --release --example gradcheck [seeds]`

use sfl::tensor::Fault;
use sfl::verify::{gradient_suite, TOLERANCE};

fn main() -> sfl::Result<()> {
    let seeds = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    for (label, fault) in [("clean", None), ("gelu backward sign flipped", Some(Fault::GeluBackwardSign))] {
        println!("{label}:");
        for check in gradient_suite(seeds, fault)? {
            let status = if check.passed() { "ok" } else { "FAIL" };
            println!("  {:<15} max rel err {:.2e}  {status}", check.layer, check.max_rel_error);
        }
    }
    println!("tolerance {TOLERANCE:e}");
    Ok(())
}
