//! Ideals on the naturals with exact membership on a closed class of sets.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::blocks::{BlockRule, BlockSequence};
use crate::error::{Error, Result};
use crate::sets::{IndexSetExpr, SetExpr};

/// Weight functions of summable ideals.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Weights {
    /// `h(x) = 1/x`, with `h(0) = 1`.
    Reciprocal,
    /// `h(j) = n_i^{-3}` on block `i`, and `1` below `n_0`.
    BlockCubic { blocks: BlockSequence },
}

impl Weights {
    pub fn weight(&self, x: u64) -> BigRational {
        match self {
            Weights::Reciprocal => {
                BigRational::new(BigInt::one(), BigInt::from(x.max(1)))
            }
            Weights::BlockCubic { blocks } => match blocks.block_of(x) {
                Some(i) => {
                    let n = BigInt::from(blocks.start(i).unwrap());
                    BigRational::new(BigInt::one(), &n * &n * &n)
                }
                None => BigRational::one(),
            },
        }
    }
}

/// A definable ideal.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IdealDescriptor {
    Finite,
    Summable { weights: Weights },
    /// Sets whose relative density in `[n_i, n_{i+1})` tends to zero.
    BlockDensity { blocks: BlockSequence },
}

/// Membership answer; `In`/`NotIn` only on the closed class.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum MembershipVerdict {
    In,
    NotIn,
    /// Raw numbers on a window: per-block densities or dyadic partial sums.
    Diagnostic { profile: Vec<String>, window: u64 },
}

/// Window used for diagnostic profiles.
pub const DIAGNOSTIC_BOUND: u64 = 1 << 14;

fn exact(ideal: &IdealDescriptor, s: &SetExpr) -> Option<bool> {
    use IdealDescriptor as I;
    match s {
        SetExpr::Finite { .. } => Some(true),
        SetExpr::Sample { .. } => None,
        SetExpr::Periodic { residues, .. } => {
            if residues.is_empty() {
                return Some(true);
            }
            match ideal {
                I::BlockDensity { blocks } if !blocks.is_infinite() => None,
                _ => Some(false),
            }
        }
        SetExpr::Interval { hi, .. } => match (hi, ideal) {
            (Some(_), _) => Some(true),
            (None, I::BlockDensity { blocks }) if !blocks.is_infinite() => None,
            (None, _) => Some(false),
        },
        SetExpr::Branch { .. } => match ideal {
            I::Finite => Some(false),
            I::Summable { .. } => Some(true),
            I::BlockDensity { .. } => None,
        },
        SetExpr::BlockUnion { blocks, index } => {
            let touches_open_block = |idx: &IndexSetExpr| {
                let mut last = None;
                let mut i = 0;
                while blocks.has_block(i) && blocks.end(i).is_some() {
                    i += 1;
                    if i > 64 && matches!(blocks.rule(), BlockRule::Arithmetic { .. }) {
                        return false;
                    }
                }
                if blocks.has_block(i) && blocks.end(i).is_none() {
                    last = Some(i);
                }
                last.map_or(false, |l| idx.contains(l as u64) == Some(true))
            };
            match index.is_finite() {
                None => None,
                Some(true) => Some(!touches_open_block(index)),
                Some(false) => {
                    if !blocks.is_infinite() {
                        return Some(true);
                    }
                    match ideal {
                        I::Finite => Some(false),
                        I::BlockDensity { blocks: b2 } => (b2 == blocks).then_some(false),
                        I::Summable {
                            weights: Weights::Reciprocal,
                        } => Some(false),
                        I::Summable {
                            weights: Weights::BlockCubic { blocks: b2 },
                        } => (b2 == blocks && matches!(blocks.rule(), BlockRule::CubicGaps { .. }))
                            .then_some(false),
                    }
                }
            }
        }
        SetExpr::Union { parts } => {
            let verdicts: Vec<Option<bool>> = parts.iter().map(|p| exact(ideal, p)).collect();
            if verdicts.iter().any(|v| *v == Some(false)) {
                Some(false)
            } else if verdicts.iter().all(|v| *v == Some(true)) {
                Some(true)
            } else {
                None
            }
        }
        SetExpr::Intersection { parts } => {
            if parts.iter().any(|p| exact(ideal, p) == Some(true)) {
                return Some(true);
            }
            // Two block unions over one sequence intersect blockwise.
            if let [SetExpr::BlockUnion { blocks: b1, index: i1 }, SetExpr::BlockUnion { blocks: b2, index: i2 }] =
                parts.as_slice()
            {
                if b1 == b2 {
                    let idx = i1.intersect(i2)?;
                    return exact(
                        ideal,
                        &SetExpr::BlockUnion {
                            blocks: b1.clone(),
                            index: idx,
                        },
                    );
                }
            }
            None
        }
        SetExpr::Difference { left, right } => match (exact(ideal, left), exact(ideal, right)) {
            (Some(true), _) => Some(true),
            (Some(false), Some(true)) => Some(false),
            _ => None,
        },
    }
}

/// Decides `s ∈ ideal` on the closed class; a diagnostic profile otherwise.
pub fn contains(ideal: &IdealDescriptor, s: &SetExpr) -> MembershipVerdict {
    match exact(ideal, s) {
        Some(true) => MembershipVerdict::In,
        Some(false) => MembershipVerdict::NotIn,
        None => diagnostic(ideal, s, DIAGNOSTIC_BOUND),
    }
}

/// The raw numbers behind a non-exact verdict.
pub fn diagnostic(ideal: &IdealDescriptor, s: &SetExpr, bound: u64) -> MembershipVerdict {
    let profile = match ideal {
        IdealDescriptor::BlockDensity { blocks } => {
            let k = blocks.complete_blocks_below(bound);
            density_profile(blocks, s, k)
                .into_iter()
                .map(|q| q.to_string())
                .collect()
        }
        IdealDescriptor::Summable { weights } => {
            let mut out = Vec::new();
            let mut upto = 1u64;
            while upto <= bound {
                out.push(partial_weight_sum(weights, s, upto).sum.to_string());
                upto *= 4;
            }
            out
        }
        IdealDescriptor::Finite => {
            let mut out = Vec::new();
            let mut upto = 1u64;
            while upto <= bound {
                out.push(s.count_in(0, upto).to_string());
                upto *= 4;
            }
            out
        }
    };
    MembershipVerdict::Diagnostic {
        profile,
        window: bound,
    }
}

/// `|s ∩ [n_i, n_{i+1})| / (n_{i+1} - n_i)` for `i < up_to_block`.
pub fn density_profile(blocks: &BlockSequence, s: &SetExpr, up_to_block: usize) -> Vec<BigRational> {
    (0..up_to_block)
        .map_while(|i| {
            let a = blocks.start(i)?;
            let b = blocks.end(i)?;
            Some(BigRational::new(
                BigInt::from(s.count_in(a, b)),
                BigInt::from(b - a),
            ))
        })
        .collect()
}

/// Exact partial sum with a tail bound where one is known.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WeightSum {
    pub sum: BigRational,
    /// Upper bound on `Σ_{x ∈ s, x >= up_to} h(x)`; `None` when the tail
    /// diverges or no bound is available.
    pub tail_upper: Option<BigRational>,
    /// True when the tail is known to diverge.
    pub tail_diverges: bool,
}

/// Unreduced numerator and denominator of `Σ 1/x` by binary splitting.
fn reciprocal_parts(p: &[u64]) -> (BigInt, BigInt) {
    match p.len() {
        0 => (BigInt::zero(), BigInt::one()),
        1 => (BigInt::one(), BigInt::from(p[0].max(1))),
        _ => {
            let (l, r) = p.split_at(p.len() / 2);
            let (a, b) = reciprocal_parts(l);
            let (c, d) = reciprocal_parts(r);
            (a * &d + c * &b, b * d)
        }
    }
}

/// Exact `Σ 1/x` over the given points by binary splitting.
pub fn reciprocal_sum(points: &[u64]) -> BigRational {
    let (n, d) = reciprocal_parts(points);
    BigRational::new(n, d)
}

/// `Σ 1/x >= target`, decided without reducing the sum.
pub fn reciprocal_sum_at_least(points: &[u64], target: &BigRational) -> bool {
    let (n, d) = reciprocal_parts(points);
    n * target.denom() >= target.numer() * d
}

/// `Σ_{x ∈ s, x < up_to} h(x)` exactly, with tail bounds for closed-class sets.
pub fn partial_weight_sum(weights: &Weights, s: &SetExpr, up_to: u64) -> WeightSum {
    match weights {
        Weights::Reciprocal => {
            let pts = s.members_below(up_to);
            let sum = reciprocal_sum(&pts);
            let (tail_upper, tail_diverges) = match s {
                SetExpr::Finite { points } => {
                    let rest: Vec<u64> = points.range(up_to..).copied().collect();
                    (Some(reciprocal_sum(&rest)), false)
                }
                SetExpr::Branch { .. } => {
                    // Codes of length-k nodes are at least 2^k - 1 and at most
                    // 2^{k+1} - 2, so the tail is at most Σ_{k>=k0} 2^{1-k}.
                    let mut k0 = 0u32;
                    while (1u64 << (k0 + 1)) - 2 < up_to {
                        k0 += 1;
                    }
                    let head = if k0 == 0 { BigRational::one() } else { BigRational::zero() };
                    let k0 = k0.max(1);
                    let bound = BigRational::new(BigInt::from(4), BigInt::one() << k0 as usize);
                    (Some(head + bound), false)
                }
                _ => match exact(
                    &IdealDescriptor::Summable {
                        weights: weights.clone(),
                    },
                    s,
                ) {
                    Some(false) => (None, true),
                    _ => (None, false),
                },
            };
            WeightSum {
                sum,
                tail_upper,
                tail_diverges,
            }
        }
        Weights::BlockCubic { blocks } => {
            let mut sum = BigRational::from_integer(BigInt::from(s.count_in(0, blocks.start(0).unwrap_or(0).min(up_to))));
            let mut i = 0;
            while blocks.has_block(i) {
                let a = blocks.start(i).unwrap();
                if a >= up_to {
                    break;
                }
                let b = blocks.end(i).map_or(up_to, |e| e.min(up_to));
                let c = s.count_in(a, b);
                if c > 0 {
                    let n = BigInt::from(a);
                    sum += BigRational::new(BigInt::from(c), &n * &n * &n);
                }
                i += 1;
            }
            let (tail_upper, tail_diverges) = match s {
                SetExpr::Finite { points } => {
                    let mut t = BigRational::zero();
                    for &x in points.range(up_to..) {
                        t += weights.weight(x);
                    }
                    (Some(t), false)
                }
                _ => match exact(
                    &IdealDescriptor::Summable {
                        weights: weights.clone(),
                    },
                    s,
                ) {
                    Some(false) => (None, true),
                    _ => (None, false),
                },
            };
            WeightSum {
                sum,
                tail_upper,
                tail_diverges,
            }
        }
    }
}

/// Upper bound on `Σ_{i >= i0} n_i^{-3}` for a cubic-gap sequence, the tail
/// mass of any set meeting each block in at most one point.
pub fn cubic_one_per_block_tail(blocks: &BlockSequence, i0: usize) -> Option<BigRational> {
    // n_{i+1} > n_i^3 gives n_{i+1}^{-3} < n_i^{-9}, so the tail is below
    // twice its first term once n_{i0} >= 2.
    let n = BigInt::from(blocks.start(i0)?);
    Some(BigRational::new(BigInt::from(2), &n * &n * &n))
}

/// Lifts block-index sets to unions of blocks, `A ↦ ∪_{i∈A} [n_i, n_{i+1})`.
pub fn lift_ad_family(blocks: &BlockSequence, family: &[IndexSetExpr]) -> Result<Vec<SetExpr>> {
    for i in 0..family.len() {
        for j in i + 1..family.len() {
            let finite = match family[i].intersect(&family[j]) {
                Some(x) => x.is_finite(),
                None => None,
            };
            let finite = match finite {
                Some(f) => f,
                None => explicit_intersection_finite(&family[i], &family[j]),
            };
            if !finite {
                return Err(Error::NotAlmostDisjoint { first: i, second: j });
            }
        }
    }
    Ok(family
        .iter()
        .map(|ix| SetExpr::block_union(blocks.clone(), ix.clone()))
        .collect())
}

/// Listed sets are finite, so their intersections are too; anything else
/// falls back to comparing one period of the periodic parts.
fn explicit_intersection_finite(a: &IndexSetExpr, b: &IndexSetExpr) -> bool {
    matches!(a, IndexSetExpr::Explicit { .. } | IndexSetExpr::Finite { .. })
        || matches!(b, IndexSetExpr::Explicit { .. } | IndexSetExpr::Finite { .. })
        || {
            // Cofinite against periodic with excluded points: infinite iff the
            // periodic part is non-empty.
            let periodic_nonempty = |x: &IndexSetExpr| match x {
                IndexSetExpr::Periodic { residues, .. } => !residues.is_empty(),
                _ => true,
            };
            !(periodic_nonempty(a) && periodic_nonempty(b))
        }
}
