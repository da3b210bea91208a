//! A scheduled tower run over five block-local involutions.
use almost_commute::blocks::BlockSequence;
use almost_commute::builders::tower::tower_run;
use almost_commute::perm::{LocalRule, PermExpr, Window};

fn main() -> almost_commute::error::Result<()> {
    let w = Window::new(4096, 256)?;
    let blocks = BlockSequence::arithmetic(0, 32)?;
    let fam: Vec<PermExpr> = [1u64, 2, 4, 8, 16]
        .iter()
        .map(|&mask| PermExpr::block_local(blocks.clone(), LocalRule::Xor { mask }))
        .collect();
    let points: Vec<u64> = (0..1000).collect();
    let diag: Vec<(PermExpr, u64)> = (0..5).map(|i| (fam[i].clone(), 100 * i as u64 + 7)).collect();
    let run = tower_run(&fam, &points, &diag, &w)?;
    println!("{} steps, |dom h| = {}, violations {}", run.audit.len(), run.condition.h.len(), run.violations.len());
    for i in 0..fam.len() {
        let (ok, outside) = run.nc_within_audit(i, &w);
        println!("member {i}: NC inside audited set {ok} {outside:?}");
    }
    for ((_, k), j) in diag.iter().zip(run.diagonal_witnesses(&diag, &w)) {
        println!("diagonal k={k}: witness {j:?}");
    }
    print!("{}", run.audit_jsonl().lines().take(3).collect::<Vec<_>>().join("\n"));
    println!("\n...");
    Ok(())
}
