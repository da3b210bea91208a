//! Maximal abelian subgroup orders of `Sym(n)`, both searches compared.
//!
//! `cargo run --release --example spectrum -- 6`

use almost_commute::spectrum::spectrum_report;

fn main() {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let jobs = std::thread::available_parallelism().map_or(1, |p| p.get());
    let t = std::time::Instant::now();
    let r = spectrum_report(n, jobs).expect("n within the cap");
    println!("Sym({n}), order {}", r.group_order);
    for (size, count) in &r.counts {
        println!("  {count:>6} maximal abelian subgroups of order {size}");
    }
    println!("spectrum {:?}", r.spectrum);
    println!("searches agree: {} ({:.2?})", r.strategies_agree, t.elapsed());
}
