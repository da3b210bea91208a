//! Type representatives, the interval sequence and a block-diagonal swap.
use almost_commute::builders::star::{representative_table, star_intervals, LReading};
use almost_commute::perm::{compose, PermExpr, Window};

fn main() -> almost_commute::error::Result<()> {
    let w = Window::new(4096, 64)?;
    let fam = vec![PermExpr::adjacent_swaps(0), compose(&PermExpr::swap([(0, 2)])?, &PermExpr::adjacent_swaps(4))];
    for j in 0..3 {
        let t = representative_table(&fam, j, &w)?;
        println!("j={j}: representatives {:?} over {} classes", t.points(), t.classes_seen);
    }
    for reading in [LReading::InitialSegment, LReading::Singleton { j: 1 }] {
        println!("{reading:?}: intervals {:?}", star_intervals(&fam, 5, reading, &w)?);
    }
    Ok(())
}
