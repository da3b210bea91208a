//! Windowed evaluation, composition and non-commutation sets.
use almost_commute::blocks::BlockSequence;
use almost_commute::perm::{compose, nc_set, orbit, LocalRule, PermExpr, Window};
use almost_commute::sets::SetExpr;

fn main() -> almost_commute::error::Result<()> {
    let w = Window::new(1 << 12, 64)?;
    let blocks = BlockSequence::arithmetic(0, 8)?;
    let rev = PermExpr::block_local(blocks.clone(), LocalRule::Reverse);
    let adj = PermExpr::adjacent_swaps(0);
    let shift = PermExpr::shift(SetExpr::evens(), 1);

    println!("rev(5) = {:?}, (rev o adj)(5) = {:?}", rev.at(5, w.bound), compose(&rev, &adj).at(5, w.bound));
    println!("shift on evens: 10 -> {:?}, 11 -> {:?}", shift.at(10, w.bound), shift.at(11, w.bound));

    let nc = nc_set(&rev, &adj, &w);
    println!("|NC(rev, adj)| = {} certified={}", nc.points.len(), nc.certified);
    let fixed = PermExpr::swap([(3, 17)])?;
    let nc = nc_set(&fixed, &adj, &w);
    println!("NC(swap 3 17, adj) = {:?}", nc.points);

    let o = orbit(&compose(&rev, &adj), 1, 64, &w);
    println!("orbit of 1 under rev o adj: {:?} ({:?})", o.points, o.status);
    Ok(())
}
