//! Zero-sum vectors over an almost disjoint family to almost commuting bijections.
use almost_commute::mad::{homomorphism_defect, phi, ADFamily, ZeroSumVector};
use almost_commute::perm::{nc_set, Window};

fn main() -> almost_commute::error::Result<()> {
    let w = Window::new(8192, 64)?;
    let fam = ADFamily::residues(4);
    fam.check(&w)?;
    let f = ZeroSumVector::new([(0, 2), (1, -1), (3, -1)]);
    let g = ZeroSumVector::new([(1, 1), (2, -1)]);
    let pf = phi(&fam, &f, &w)?;
    let pg = phi(&fam, &g, &w)?;
    println!("phi(f): hull {:?}, patch {} points", pf.hull, pf.patch().len());
    let d = homomorphism_defect(&fam, &f, &g, &w)?;
    println!("defect of phi(f) phi(g) vs phi(f+g): {:?} inside declared set: {}", d.points, d.contained);
    let nc = nc_set(&pf.perm, &pg.perm, &w);
    println!("NC(phi(f), phi(g)) = {:?}", nc.points);
    match phi(&fam, &ZeroSumVector::new([(0, 1)]), &w) {
        Err(e) => println!("nonzero sum: {e}"),
        Ok(_) => println!("nonzero sum accepted"),
    }

    let tree = ADFamily::branches(&[(vec![], vec![0]), (vec![], vec![1]), (vec![0], vec![1])]);
    let tw = Window::new(1 << 16, (1 << 16) - (1 << 11))?;
    let p = phi(&tree, &ZeroSumVector::pair(0, 2), &tw)?;
    println!("branch family: hull {:?}", p.hull);
    Ok(())
}
