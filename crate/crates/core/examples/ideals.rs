//! Membership in the finite, summable and block-density ideals.
use almost_commute::blocks::BlockSequence;
use almost_commute::ideal::{contains, diagnostic, partial_weight_sum, IdealDescriptor, Weights};
use almost_commute::sets::{IndexSetExpr, SetExpr};

fn main() -> almost_commute::error::Result<()> {
    let fact = BlockSequence::factorial();
    let ideals = [
        ("finite", IdealDescriptor::Finite),
        ("summable 1/x", IdealDescriptor::Summable { weights: Weights::Reciprocal }),
        ("density on factorial blocks", IdealDescriptor::BlockDensity { blocks: fact.clone() }),
    ];
    let sets = [
        ("{1, 5, 9}", SetExpr::finite([1, 5, 9])),
        ("evens", SetExpr::evens()),
        ("branch 0^w", SetExpr::branch(vec![], vec![0])),
        ("odd blocks", SetExpr::block_union(fact.clone(), IndexSetExpr::periodic(2, [1]))),
    ];
    for (iname, i) in &ideals {
        for (sname, s) in &sets {
            println!("{iname:<28} {sname:<12} {:?}", contains(i, s));
        }
    }
    let squares = SetExpr::finite((1..200u64).map(|k| k * k));
    let ws = partial_weight_sum(&Weights::Reciprocal, &squares, 10_000);
    println!("sum 1/x over squares below 10^4 = {:.6}", num_traits::ToPrimitive::to_f64(&ws.sum).unwrap());
    let sample = SetExpr::Sample { bound: 4096, points: (0..4096).filter(|n| n % 7 == 0).collect() };
    println!("sampled multiples of 7: {:?}", diagnostic(&ideals[2].1, &sample, 4096));
    Ok(())
}
