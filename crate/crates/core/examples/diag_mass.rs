//! Greedy six-class gadgets that pile up reciprocal mass against a fixed map.
use almost_commute::blocks::BlockSequence;
use almost_commute::builders::gadget::{diagonalize_summable, sym6_witness};
use almost_commute::builders::nice::{ratio, NiceCondition, NiceContext, NiceFamily};
use almost_commute::perm::{LocalRule, PermExpr, Window};

fn main() -> almost_commute::error::Result<()> {
    println!("witness for (0 1 2): {:?}", sym6_witness(&[1, 2, 0, 3, 4, 5])?);
    let fam = NiceFamily { members: vec![PermExpr::adjacent_swaps(0)], window: Window::new(4096, 32)? };
    let ctx = NiceContext::new(&fam)?;
    let start = NiceCondition::new((0..8).map(|x| (x, x)).collect(), 1, ratio(1, 2), &ctx)?;
    let pi = PermExpr::block_local(BlockSequence::arithmetic(0, 4)?, LocalRule::Xor { mask: 2 });
    let (_, rep) = diagonalize_summable(&start, &ctx, &pi, 0, &ratio(3, 2))?;
    println!("{} gadgets, {} witnesses, mass {:.4}, reached {} ({})", rep.gadgets.len(), rep.witnesses.len(), rep.mass, rep.reached, rep.stop);
    for g in rep.gadgets.iter().take(4) {
        println!("  classes from {}: sigma {:?}, fresh {}, mass {:.4}", g.first_class, g.sigma, g.fresh, g.mass.max(0.0));
    }
    Ok(())
}
