//! Build a nice family, check it, and test the class bounds for one epsilon.
use almost_commute::builders::nice::{build_nice_family, cm1_verify, nice_check, ratio, NiceContext};
use almost_commute::error::Error;
use almost_commute::perm::Window;

fn main() -> almost_commute::error::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let w = Window::new(20_000, 64)?;
    let build = build_nice_family(seed, 3, &w)?;
    for l in &build.logs {
        println!(
            "member {}: {} point steps, {} params steps, final m={} eps={}, violations {}",
            l.member,
            l.point_steps,
            l.params_steps,
            l.final_m,
            l.final_epsilon,
            l.violations.len()
        );
    }
    let check = nice_check(&build.family)?;
    println!("nice check: ratio {:?} km {} passed {}", check.ratio_ok, check.km_ok, check.passed);
    let ctx = NiceContext::new(&build.family)?;
    for m in 1..=ctx.len() {
        let st = ctx.stage(m);
        match cm1_verify(&ctx, m, st.stable_from..st.usable_end, 2, &ratio(1, 3)) {
            Ok(r) => println!("m={m}: checked {:?}, {} violations", r.checked, r.violations.len()),
            Err(Error::HypothesisFails { class, detail }) => println!("m={m}: hypothesis fails at {class}: {detail}"),
            Err(e) => return Err(e),
        }
    }
    Ok(())
}
