//! Run a scenario file and print its report.
use almost_commute::harness::scenario::{run, Scenario};

fn main() {
    let path = std::env::args().nth(1).unwrap_or_else(|| "scenarios/gz-demo.json".into());
    let s = Scenario::load(path.as_ref()).unwrap_or_else(|e| {
        eprintln!("{e}");
        std::process::exit(2)
    });
    match run(&s) {
        Ok(r) => println!("{}", r.to_json()),
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(1)
        }
    }
}
