//! Repair a leaky map on factorial blocks, then build and compare g_Z maps.
use std::collections::BTreeSet;

use almost_commute::block::{g_z, gz_distinct_witnesses, gz_pairwise_nc, repair, Scan};
use almost_commute::blocks::BlockSequence;
use almost_commute::perm::{compose, LocalRule, PermExpr, Window};
use almost_commute::sets::IndexSetExpr;

fn main() -> almost_commute::error::Result<()> {
    let fact = BlockSequence::factorial();
    let w = Window::exact(46_234);
    let g = compose(
        &PermExpr::block_local(fact.clone(), LocalRule::Rotate { shift: 3 }),
        &PermExpr::boundary_band(fact.clone(), 2),
    );
    let rep = repair(&g, &fact, &w, Scan::Full)?;
    println!("leak set B = {:?}", rep.leakage.leak_set());
    for (i, d) in rep.leakage.densities().iter().enumerate() {
        println!("  block {i}: density {d}");
    }
    let zs: Vec<IndexSetExpr> = [vec![2, 4, 6], vec![3, 5, 7], vec![2, 3, 4, 5]]
        .into_iter()
        .map(|z| IndexSetExpr::Finite { indices: z.into_iter().collect::<BTreeSet<u64>>() })
        .collect();
    for (a, b, nc) in gz_pairwise_nc(&rep.perm, &zs, &fact, &w) {
        println!("NC(g_Z{a}, g_Z{b}) has {} points", nc.len());
    }
    for (a, b, wit) in gz_distinct_witnesses(&rep.perm, &zs, &fact, &w)? {
        println!("g_Z{a} and g_Z{b} differ at {wit:?}");
    }
    let evens = g_z(&rep.perm, &IndexSetExpr::periodic(2, [0]), &fact, Some(&w))?;
    println!("g_evens(100) = {:?}", evens.at(100, w.bound));
    Ok(())
}
