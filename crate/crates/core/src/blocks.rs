//! Increasing block sequences `n_0 < n_1 < ...` partitioning the naturals
//! into intervals `[n_i, n_{i+1})`.

use num_bigint::BigInt;
use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Generating rule of a block sequence.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum BlockRule {
    /// Finite list of boundaries; points at or past the last one lie in no block.
    Explicit { points: Vec<u64> },
    /// `n_{i+1} = n_i + i!`.
    FactorialGaps { start: u64 },
    /// `n_{i+1} = n_i + n_i^3`; needs `start >= 2` to be strictly increasing.
    CubicGaps { start: u64 },
    /// `n_i = start + i * step`.
    Arithmetic { start: u64, step: u64 },
}

/// A block sequence with its computed prefix.
///
/// For the factorial and cubic rules the prefix runs until the next boundary
/// would overflow `u64`; the final block is then open-ended.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "BlockRule", into = "BlockRule")]
pub struct BlockSequence {
    rule: BlockRule,
    starts: Vec<u64>,
    open_end: bool,
}

impl PartialEq for BlockSequence {
    fn eq(&self, other: &Self) -> bool {
        self.rule == other.rule
    }
}

impl Eq for BlockSequence {}

impl From<BlockSequence> for BlockRule {
    fn from(b: BlockSequence) -> Self {
        b.rule
    }
}

impl TryFrom<BlockRule> for BlockSequence {
    type Error = Error;
    fn try_from(rule: BlockRule) -> Result<Self> {
        BlockSequence::new(rule)
    }
}

impl BlockSequence {
    pub fn new(rule: BlockRule) -> Result<Self> {
        let (starts, open_end) = match &rule {
            BlockRule::Explicit { points } => {
                if points.len() < 2 || points.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::InvalidExpr(
                        "explicit blocks need at least two strictly increasing points".into(),
                    ));
                }
                (points.clone(), false)
            }
            BlockRule::FactorialGaps { start } => {
                let mut v = vec![*start];
                let mut fact: u64 = 1;
                let mut i: u64 = 0;
                loop {
                    let last = *v.last().unwrap();
                    match last.checked_add(fact) {
                        Some(next) => v.push(next),
                        None => break,
                    }
                    i += 1;
                    match fact.checked_mul(i) {
                        Some(f) => fact = f,
                        None => break,
                    }
                }
                (v, true)
            }
            BlockRule::CubicGaps { start } => {
                if *start < 2 {
                    return Err(Error::InvalidExpr("cubic gaps need start >= 2".into()));
                }
                let mut v = vec![*start];
                loop {
                    let last = *v.last().unwrap();
                    let next = last
                        .checked_mul(last)
                        .and_then(|s| s.checked_mul(last))
                        .and_then(|c| c.checked_add(last));
                    match next {
                        Some(n) => v.push(n),
                        None => break,
                    }
                }
                (v, true)
            }
            BlockRule::Arithmetic { step, .. } => {
                if *step == 0 {
                    return Err(Error::InvalidExpr("arithmetic blocks need step > 0".into()));
                }
                (Vec::new(), true)
            }
        };
        Ok(BlockSequence {
            rule,
            starts,
            open_end,
        })
    }

    pub fn factorial() -> Self {
        Self::new(BlockRule::FactorialGaps { start: 0 }).unwrap()
    }

    pub fn cubic(start: u64) -> Result<Self> {
        Self::new(BlockRule::CubicGaps { start })
    }

    pub fn arithmetic(start: u64, step: u64) -> Result<Self> {
        Self::new(BlockRule::Arithmetic { start, step })
    }

    pub fn explicit(points: Vec<u64>) -> Result<Self> {
        Self::new(BlockRule::Explicit { points })
    }

    pub fn rule(&self) -> &BlockRule {
        &self.rule
    }

    /// True when the sequence has infinitely many blocks in principle.
    pub fn is_infinite(&self) -> bool {
        !matches!(self.rule, BlockRule::Explicit { .. })
    }

    /// `n_i`, or `None` past the computed prefix.
    pub fn start(&self, i: usize) -> Option<u64> {
        match self.rule {
            BlockRule::Arithmetic { start, step } => {
                (i as u64).checked_mul(step).and_then(|x| x.checked_add(start))
            }
            _ => self.starts.get(i).copied(),
        }
    }

    /// `n_{i+1}`; `None` means the block is unbounded above or does not exist.
    pub fn end(&self, i: usize) -> Option<u64> {
        self.start(i + 1)
    }

    /// Whether block `i` exists.
    pub fn has_block(&self, i: usize) -> bool {
        match self.rule {
            BlockRule::Explicit { .. } => i + 1 < self.starts.len(),
            BlockRule::Arithmetic { .. } => self.start(i).is_some(),
            _ => i < self.starts.len() && (i + 1 < self.starts.len() || self.open_end),
        }
    }

    /// Index of the block containing `n`.
    pub fn block_of(&self, n: u64) -> Option<usize> {
        match self.rule {
            BlockRule::Arithmetic { start, step } => {
                if n < start {
                    None
                } else {
                    Some(((n - start) / step) as usize)
                }
            }
            _ => {
                if n < self.starts[0] {
                    return None;
                }
                let i = self.starts.partition_point(|&s| s <= n) - 1;
                if i + 1 == self.starts.len() && !self.open_end {
                    None
                } else {
                    Some(i)
                }
            }
        }
    }

    /// Number of blocks lying entirely below `bound`.
    pub fn complete_blocks_below(&self, bound: u64) -> usize {
        let mut i = 0;
        while let Some(e) = self.end(i) {
            if e > bound {
                break;
            }
            i += 1;
        }
        i
    }

    /// Length of block `i` if it is bounded.
    pub fn len(&self, i: usize) -> Option<u64> {
        Some(self.end(i)? - self.start(i)?)
    }

    /// Gap ratios `(n_{i+1} - n_i) / (n_{i+2} - n_{i+1})` for `i < count`.
    pub fn gap_ratios(&self, count: usize) -> Vec<BigRational> {
        (0..count)
            .map_while(|i| {
                let a = self.len(i)?;
                let b = self.len(i + 1)?;
                Some(BigRational::new(BigInt::from(a), BigInt::from(b)))
            })
            .collect()
    }

    /// Boundaries `n_0 .. n_k` with `n_k` the first boundary `>= bound`, or
    /// all known boundaries if none reaches it.
    pub fn boundaries_through(&self, bound: u64) -> Vec<u64> {
        let mut out = Vec::new();
        let mut i = 0;
        while let Some(s) = self.start(i) {
            out.push(s);
            if s >= bound {
                break;
            }
            i += 1;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::One;

    #[test]
    fn factorial_prefix() {
        let b = BlockSequence::factorial();
        let expected = [
            0u64, 1, 2, 4, 10, 34, 154, 874, 5914, 46234, 409114, 4037914, 43954714,
        ];
        for (i, e) in expected.iter().enumerate() {
            assert_eq!(b.start(i), Some(*e));
        }
        assert_eq!(b.block_of(0), Some(0));
        assert_eq!(b.block_of(3), Some(2));
        assert_eq!(b.block_of(4), Some(3));
        assert_eq!(b.block_of(43954713), Some(11));
    }

    #[test]
    fn factorial_gap_ratio_is_reciprocal() {
        let b = BlockSequence::factorial();
        for (i, r) in b.gap_ratios(15).into_iter().enumerate() {
            let expect = BigRational::new(BigInt::one(), BigInt::from(i as u64 + 1));
            assert_eq!(r, expect);
        }
    }

    #[test]
    fn cubic_prefix_and_open_end() {
        let b = BlockSequence::cubic(2).unwrap();
        assert_eq!(b.start(1), Some(10));
        assert_eq!(b.start(2), Some(1010));
        assert_eq!(b.start(3), Some(1030302010));
        assert_eq!(b.start(4), None);
        assert_eq!(b.block_of(u64::MAX), Some(3));
        assert_eq!(b.block_of(1), None);
    }

    #[test]
    fn explicit_rejects_non_increasing() {
        assert!(BlockSequence::explicit(vec![0, 3, 3]).is_err());
        let b = BlockSequence::explicit(vec![0, 3, 7]).unwrap();
        assert_eq!(b.block_of(6), Some(1));
        assert_eq!(b.block_of(7), None);
    }

    #[test]
    fn json_round_trip() {
        let b = BlockSequence::arithmetic(5, 8).unwrap();
        let s = serde_json::to_string(&b).unwrap();
        assert_eq!(s, r#"{"rule":"arithmetic","start":5,"step":8}"#);
        let back: BlockSequence = serde_json::from_str(&s).unwrap();
        assert_eq!(back, b);
        assert_eq!(back.block_of(21), Some(2));
    }

    proptest::proptest! {
        #[test]
        fn block_of_brackets_point(n in 0u64..50_000_000) {
            let b = BlockSequence::factorial();
            let i = b.block_of(n).unwrap();
            proptest::prop_assert!(b.start(i).unwrap() <= n);
            proptest::prop_assert!(n < b.end(i).unwrap());
        }
    }
}
