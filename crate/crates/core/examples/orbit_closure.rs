//! Orbit partitions, the class-size bound and agreement spreading.
use almost_commute::blocks::BlockSequence;
use almost_commute::orbit::{omega_partition, propagate_agreement, verify_orbit_bound};
use almost_commute::perm::{compose, LocalRule, PermExpr, Window};

fn main() -> almost_commute::error::Result<()> {
    let w = Window::exact(4096);
    let blocks = BlockSequence::arithmetic(0, 16)?;
    let s = vec![
        PermExpr::block_local(blocks.clone(), LocalRule::Xor { mask: 1 }),
        PermExpr::block_local(blocks.clone(), LocalRule::Xor { mask: 4 }),
        PermExpr::swap([(3, 40), (100, 101)])?,
    ];
    let part = omega_partition(&s, &w);
    println!("class sizes (size: complete, incomplete): {:?}", part.size_histogram());
    let rep = verify_orbit_bound(&s, &[2, 2, 2], &w)?;
    println!(
        "bound {}: {} complete classes, {} over the bound, all explained by NC: {}",
        rep.product,
        rep.complete_classes,
        rep.violations.len(),
        rep.explained
    );

    // Rotation by 8 is xor 8 here: it commutes with both members, and its cube is itself.
    let rot = PermExpr::block_local(blocks.clone(), LocalRule::Rotate { shift: 8 });
    let theta = compose(&rot, &compose(&rot, &rot));
    let a = propagate_agreement(&rot, &theta, &s[..2], &[0], &w);
    println!(
        "agreement from {{0}}: |Y| = {}, closure {} points, disagreement {:?}",
        a.y.len(),
        a.closure_size,
        a.disagreement
    );
    Ok(())
}
