//! Runs the property suite, or the checks named on the command line.
//!
//! `cargo run --release --example verify_suite -- sym6 tower`

use almost_commute::harness::verify::{verify_all, DEFAULT_SCALE};

fn main() {
    let selector: Vec<String> = std::env::args().skip(1).collect();
    let summary = verify_all(&selector, DEFAULT_SCALE, 1).expect("known check names");
    print!("{}", summary.table());
    for r in summary.rows.iter().filter(|r| !r.passed) {
        let detail = serde_json::to_string(&r.detail).unwrap_or_default();
        println!("{}: {}", r.key, &detail[..detail.len().min(2000)]);
    }
    println!("{}", if summary.passed() { "all passed" } else { "some checks failed" });
}
