//! Definable subsets of the naturals and of block indices.

use std::collections::BTreeSet;

use num_integer::Integer;
use serde::{Deserialize, Serialize};

use crate::blocks::BlockSequence;

/// A set of block indices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IndexSetExpr {
    Finite { indices: BTreeSet<u64> },
    Cofinite { excluded: BTreeSet<u64> },
    Periodic { modulus: u64, residues: BTreeSet<u64> },
    /// A listed set known only below `cap`.
    Explicit { indices: BTreeSet<u64>, cap: u64 },
}

impl IndexSetExpr {
    pub fn finite(indices: impl IntoIterator<Item = u64>) -> Self {
        IndexSetExpr::Finite {
            indices: indices.into_iter().collect(),
        }
    }

    pub fn all() -> Self {
        IndexSetExpr::Cofinite {
            excluded: BTreeSet::new(),
        }
    }

    pub fn periodic(modulus: u64, residues: impl IntoIterator<Item = u64>) -> Self {
        assert!(modulus > 0, "modulus must be positive");
        IndexSetExpr::Periodic {
            modulus,
            residues: residues.into_iter().map(|r| r % modulus).collect(),
        }
    }

    /// Membership; `None` when `Explicit` is queried at or past its cap.
    pub fn contains(&self, i: u64) -> Option<bool> {
        match self {
            IndexSetExpr::Finite { indices } => Some(indices.contains(&i)),
            IndexSetExpr::Cofinite { excluded } => Some(!excluded.contains(&i)),
            IndexSetExpr::Periodic { modulus, residues } => Some(residues.contains(&(i % modulus))),
            IndexSetExpr::Explicit { indices, cap } => (i < *cap).then(|| indices.contains(&i)),
        }
    }

    /// Whether the set is finite; `None` for `Explicit`.
    pub fn is_finite(&self) -> Option<bool> {
        match self {
            IndexSetExpr::Finite { .. } => Some(true),
            IndexSetExpr::Cofinite { .. } => Some(false),
            IndexSetExpr::Periodic { residues, .. } => Some(residues.is_empty()),
            IndexSetExpr::Explicit { .. } => None,
        }
    }

    /// Exact intersection when both operands are in the closed class.
    pub fn intersect(&self, other: &IndexSetExpr) -> Option<IndexSetExpr> {
        use IndexSetExpr::*;
        Some(match (self, other) {
            (Finite { indices }, o) | (o, Finite { indices }) => {
                let mut out = BTreeSet::new();
                for &i in indices {
                    if o.contains(i)? {
                        out.insert(i);
                    }
                }
                Finite { indices: out }
            }
            (Cofinite { excluded: a }, Cofinite { excluded: b }) => Cofinite {
                excluded: a.union(b).copied().collect(),
            },
            (Periodic { modulus: m1, residues: r1 }, Periodic { modulus: m2, residues: r2 }) => {
                let l = m1.lcm(m2);
                let residues = (0..l)
                    .filter(|x| r1.contains(&(x % m1)) && r2.contains(&(x % m2)))
                    .collect();
                Periodic {
                    modulus: l,
                    residues,
                }
            }
            (Periodic { modulus, residues }, Cofinite { excluded })
            | (Cofinite { excluded }, Periodic { modulus, residues }) => {
                if excluded.is_empty() {
                    Periodic {
                        modulus: *modulus,
                        residues: residues.clone(),
                    }
                } else if residues.is_empty() {
                    Finite {
                        indices: BTreeSet::new(),
                    }
                } else {
                    // Infinite but not periodic.
                    return None;
                }
            }
            _ => return None,
        })
    }

    /// Least member `>= i`, searching below `limit`.
    pub fn next_from(&self, i: u64, limit: u64) -> Option<u64> {
        match self {
            IndexSetExpr::Finite { indices } | IndexSetExpr::Explicit { indices, .. } => {
                indices.range(i..limit).next().copied()
            }
            IndexSetExpr::Cofinite { excluded } => {
                let mut x = i;
                while x < limit {
                    if !excluded.contains(&x) {
                        return Some(x);
                    }
                    x += 1;
                }
                None
            }
            IndexSetExpr::Periodic { modulus, residues } => {
                if residues.is_empty() {
                    return None;
                }
                let base = i - i % modulus;
                let r = i % modulus;
                let x = match residues.range(r..).next() {
                    Some(&s) => base + s,
                    None => base + modulus + residues.iter().next().unwrap(),
                };
                (x < limit).then_some(x)
            }
        }
    }
}

/// A definable subset of the naturals.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SetExpr {
    Finite {
        points: BTreeSet<u64>,
    },
    /// `{n : n mod modulus ∈ residues}`.
    Periodic {
        modulus: u64,
        residues: BTreeSet<u64>,
    },
    /// `[lo, hi)`, unbounded when `hi` is absent.
    Interval {
        lo: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        hi: Option<u64>,
    },
    /// Union of the blocks whose index lies in `index`.
    BlockUnion {
        blocks: BlockSequence,
        index: IndexSetExpr,
    },
    /// Codes of the initial segments of an eventually periodic binary branch.
    /// The node coded by `n` is the binary expansion of `n + 1` without its
    /// leading one; the branch bits are `prefix` followed by `cycle` repeated.
    Branch {
        prefix: Vec<u8>,
        cycle: Vec<u8>,
    },
    Union {
        parts: Vec<SetExpr>,
    },
    Intersection {
        parts: Vec<SetExpr>,
    },
    Difference {
        left: Box<SetExpr>,
        right: Box<SetExpr>,
    },
    /// A predicate tabulated on `[0, bound)`; empty at and past `bound`.
    Sample {
        bound: u64,
        points: BTreeSet<u64>,
    },
}

impl SetExpr {
    pub fn empty() -> Self {
        SetExpr::Finite {
            points: BTreeSet::new(),
        }
    }

    pub fn naturals() -> Self {
        SetExpr::Interval { lo: 0, hi: None }
    }

    pub fn finite(points: impl IntoIterator<Item = u64>) -> Self {
        SetExpr::Finite {
            points: points.into_iter().collect(),
        }
    }

    pub fn periodic(modulus: u64, residues: impl IntoIterator<Item = u64>) -> Self {
        assert!(modulus > 0, "modulus must be positive");
        SetExpr::Periodic {
            modulus,
            residues: residues.into_iter().map(|r| r % modulus).collect(),
        }
    }

    pub fn evens() -> Self {
        Self::periodic(2, [0])
    }

    pub fn odds() -> Self {
        Self::periodic(2, [1])
    }

    pub fn interval(lo: u64, hi: u64) -> Self {
        SetExpr::Interval { lo, hi: Some(hi) }
    }

    pub fn block_union(blocks: BlockSequence, index: IndexSetExpr) -> Self {
        SetExpr::BlockUnion { blocks, index }
    }

    pub fn union(parts: Vec<SetExpr>) -> Self {
        SetExpr::Union { parts }
    }

    pub fn intersection(parts: Vec<SetExpr>) -> Self {
        SetExpr::Intersection { parts }
    }

    pub fn difference(left: SetExpr, right: SetExpr) -> Self {
        SetExpr::Difference {
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn branch(prefix: Vec<u8>, cycle: Vec<u8>) -> Self {
        assert!(!cycle.is_empty(), "branch cycle must be non-empty");
        SetExpr::Branch { prefix, cycle }
    }

    /// Membership of `n`.
    pub fn contains(&self, n: u64) -> bool {
        match self {
            SetExpr::Finite { points } => points.contains(&n),
            SetExpr::Periodic { modulus, residues } => residues.contains(&(n % modulus)),
            SetExpr::Interval { lo, hi } => n >= *lo && hi.map_or(true, |h| n < h),
            SetExpr::BlockUnion { blocks, index } => match blocks.block_of(n) {
                Some(i) => index.contains(i as u64).unwrap_or(false),
                None => false,
            },
            SetExpr::Branch { prefix, cycle } => {
                let k = 63 - (n + 1).leading_zeros() as usize;
                branch_code(prefix, cycle, k) == Some(n)
            }
            SetExpr::Union { parts } => parts.iter().any(|p| p.contains(n)),
            SetExpr::Intersection { parts } => parts.iter().all(|p| p.contains(n)),
            SetExpr::Difference { left, right } => left.contains(n) && !right.contains(n),
            SetExpr::Sample { bound, points } => n < *bound && points.contains(&n),
        }
    }

    /// Least member `>= n` and `< limit`.
    pub fn next_from(&self, n: u64, limit: u64) -> Option<u64> {
        if n >= limit {
            return None;
        }
        match self {
            SetExpr::Finite { points } | SetExpr::Sample { points, .. } => {
                points.range(n..limit).next().copied()
            }
            SetExpr::Periodic { modulus, residues } => {
                if residues.is_empty() {
                    return None;
                }
                let base = n - n % modulus;
                let r = n % modulus;
                let x = match residues.range(r..).next() {
                    Some(&s) => Some(base + s),
                    None => base
                        .checked_add(*modulus)
                        .map(|b| b + residues.iter().next().unwrap()),
                };
                x.filter(|&x| x < limit)
            }
            SetExpr::Interval { lo, hi } => {
                let x = n.max(*lo);
                (x < limit && hi.map_or(true, |h| x < h)).then_some(x)
            }
            SetExpr::BlockUnion { blocks, index } => {
                let mut x = n;
                loop {
                    let i = match blocks.block_of(x) {
                        Some(i) => i,
                        None => {
                            let s0 = blocks.start(0)?;
                            if x < s0 {
                                x = s0;
                                if x >= limit {
                                    return None;
                                }
                                continue;
                            }
                            return None;
                        }
                    };
                    let j = index.next_from(i as u64, u64::MAX)? as usize;
                    if !blocks.has_block(j) {
                        return None;
                    }
                    let s = blocks.start(j)?;
                    let cand = if j == i { x } else { s };
                    if cand >= limit {
                        return None;
                    }
                    if blocks.end(j).map_or(true, |e| cand < e) {
                        return Some(cand);
                    }
                    x = blocks.end(j)?;
                }
            }
            SetExpr::Branch { prefix, cycle } => {
                let mut k = 63 - (n + 1).leading_zeros() as usize;
                loop {
                    let c = branch_code(prefix, cycle, k)?;
                    if c >= limit {
                        return None;
                    }
                    if c >= n {
                        return Some(c);
                    }
                    k += 1;
                }
            }
            SetExpr::Union { parts } => parts.iter().filter_map(|p| p.next_from(n, limit)).min(),
            SetExpr::Intersection { parts } => {
                let (first, rest) = parts.split_first()?;
                let mut x = n;
                loop {
                    let c = first.next_from(x, limit)?;
                    if rest.iter().all(|p| p.contains(c)) {
                        return Some(c);
                    }
                    x = c + 1;
                }
            }
            SetExpr::Difference { left, right } => {
                let mut x = n;
                loop {
                    let c = left.next_from(x, limit)?;
                    if !right.contains(c) {
                        return Some(c);
                    }
                    x = c + 1;
                }
            }
        }
    }

    /// Greatest member `< n`.
    pub fn prev_before(&self, n: u64) -> Option<u64> {
        if n == 0 {
            return None;
        }
        match self {
            SetExpr::Finite { points } => points.range(..n).next_back().copied(),
            SetExpr::Sample { bound, points } => points.range(..n.min(*bound)).next_back().copied(),
            SetExpr::Periodic { modulus, residues } => {
                if residues.is_empty() {
                    return None;
                }
                let m = n - 1;
                let base = m - m % modulus;
                let r = m % modulus;
                match residues.range(..=r).next_back() {
                    Some(&s) => Some(base + s),
                    None => {
                        if base == 0 {
                            None
                        } else {
                            Some(base - modulus + residues.iter().next_back().unwrap())
                        }
                    }
                }
            }
            SetExpr::Interval { lo, hi } => {
                let top = hi.map_or(n, |h| n.min(h));
                (top > *lo).then(|| top - 1)
            }
            SetExpr::BlockUnion { blocks, index } => {
                let mut x = n - 1;
                loop {
                    let i = match blocks.block_of(x) {
                        Some(i) => i,
                        None => {
                            if x < blocks.start(0)? {
                                return None;
                            }
                            // Past the end of an explicit sequence.
                            let mut last = 0;
                            while blocks.has_block(last + 1) {
                                last += 1;
                            }
                            x = blocks.end(last)? - 1;
                            continue;
                        }
                    };
                    if index.contains(i as u64) == Some(true) {
                        return Some(x);
                    }
                    let s = blocks.start(i)?;
                    if s == 0 {
                        return None;
                    }
                    x = s - 1;
                }
            }
            SetExpr::Branch { prefix, cycle } => {
                let mut k = 63 - n.leading_zeros() as usize;
                loop {
                    if let Some(c) = branch_code(prefix, cycle, k) {
                        if c < n {
                            return Some(c);
                        }
                    }
                    if k == 0 {
                        return None;
                    }
                    k -= 1;
                }
            }
            SetExpr::Union { parts } => parts.iter().filter_map(|p| p.prev_before(n)).max(),
            SetExpr::Intersection { parts } => {
                let (first, rest) = parts.split_first()?;
                let mut x = n;
                loop {
                    let c = first.prev_before(x)?;
                    if rest.iter().all(|p| p.contains(c)) {
                        return Some(c);
                    }
                    x = c;
                }
            }
            SetExpr::Difference { left, right } => {
                let mut x = n;
                loop {
                    let c = left.prev_before(x)?;
                    if !right.contains(c) {
                        return Some(c);
                    }
                    x = c;
                }
            }
        }
    }

    /// `|self ∩ [lo, hi)|`.
    pub fn count_in(&self, lo: u64, hi: u64) -> u64 {
        if lo >= hi {
            return 0;
        }
        match self {
            SetExpr::Finite { points } | SetExpr::Sample { points, .. } => {
                let bound = match self {
                    SetExpr::Sample { bound, .. } => hi.min(*bound),
                    _ => hi,
                };
                if lo >= bound {
                    0
                } else {
                    points.range(lo..bound).count() as u64
                }
            }
            SetExpr::Periodic { modulus, residues } => {
                let upto = |x: u64| -> u64 {
                    // members in [0, x)
                    let full = x / modulus;
                    let rem = x % modulus;
                    full * residues.len() as u64 + residues.range(..rem).count() as u64
                };
                upto(hi) - upto(lo)
            }
            SetExpr::Interval { lo: a, hi: b } => {
                let s = lo.max(*a);
                let e = b.map_or(hi, |b| hi.min(b));
                e.saturating_sub(s)
            }
            SetExpr::BlockUnion { blocks, index } => {
                let mut total = 0;
                let mut i = match blocks.block_of(lo) {
                    Some(i) => i,
                    None => {
                        if blocks.start(0).map_or(false, |s| lo < s) {
                            0
                        } else {
                            return 0;
                        }
                    }
                };
                while blocks.has_block(i) {
                    let s = blocks.start(i).unwrap();
                    if s >= hi {
                        break;
                    }
                    if index.contains(i as u64).unwrap_or(false) {
                        let e = blocks.end(i).map_or(hi, |e| e.min(hi));
                        total += e - s.max(lo);
                    }
                    i += 1;
                }
                total
            }
            _ => {
                let mut c = 0;
                let mut x = lo;
                while let Some(y) = self.next_from(x, hi) {
                    c += 1;
                    x = y + 1;
                }
                c
            }
        }
    }

    /// Members below `limit`, in increasing order.
    pub fn members_below(&self, limit: u64) -> Vec<u64> {
        let mut out = Vec::new();
        let mut x = 0;
        while let Some(y) = self.next_from(x, limit) {
            out.push(y);
            x = y + 1;
        }
        out
    }
}

/// Code of the length-`k` initial segment of the branch, if it fits in `u64`.
fn branch_code(prefix: &[u8], cycle: &[u8], k: usize) -> Option<u64> {
    if k >= 63 {
        return None;
    }
    let mut v: u64 = 0;
    for t in 0..k {
        let bit = if t < prefix.len() {
            prefix[t]
        } else {
            cycle[(t - prefix.len()) % cycle.len()]
        };
        v = (v << 1) | (bit & 1) as u64;
    }
    Some((1u64 << k) - 1 + v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_next(s: &SetExpr, n: u64, limit: u64) -> Option<u64> {
        (n..limit).find(|&x| s.contains(x))
    }

    fn brute_prev(s: &SetExpr, n: u64) -> Option<u64> {
        (0..n).rev().find(|&x| s.contains(x))
    }

    fn sample_sets() -> Vec<SetExpr> {
        let fb = BlockSequence::factorial();
        vec![
            SetExpr::finite([3, 9, 27]),
            SetExpr::periodic(5, [1, 3]),
            SetExpr::interval(10, 40),
            SetExpr::block_union(fb.clone(), IndexSetExpr::periodic(2, [1])),
            SetExpr::block_union(
                BlockSequence::explicit(vec![4, 9, 15, 30]).unwrap(),
                IndexSetExpr::finite([0, 2]),
            ),
            SetExpr::branch(vec![1, 0], vec![1]),
            SetExpr::branch(vec![], vec![0, 1]),
            SetExpr::union(vec![SetExpr::evens(), SetExpr::finite([7])]),
            SetExpr::intersection(vec![SetExpr::periodic(3, [0]), SetExpr::evens()]),
            SetExpr::difference(SetExpr::interval(0, 50), SetExpr::periodic(4, [0])),
        ]
    }

    #[test]
    fn branch_codes_follow_binary_tree() {
        // Branch 1,0,1,1,...: codes 0, 2, 5, 12, 26.
        let s = SetExpr::branch(vec![1, 0], vec![1]);
        assert_eq!(s.members_below(30), vec![0, 2, 5, 12, 26]);
    }

    #[test]
    fn count_matches_iteration() {
        for s in sample_sets() {
            for (lo, hi) in [(0, 60), (5, 17), (33, 34), (40, 40)] {
                let brute = (lo..hi).filter(|&x| s.contains(x)).count() as u64;
                assert_eq!(s.count_in(lo, hi), brute, "{s:?} on [{lo},{hi})");
            }
        }
    }

    #[test]
    fn index_intersection_exact() {
        let a = IndexSetExpr::periodic(2, [0]);
        let b = IndexSetExpr::periodic(3, [0]);
        let c = a.intersect(&b).unwrap();
        assert_eq!(c, IndexSetExpr::periodic(6, [0]));
        assert_eq!(c.is_finite(), Some(false));
        let d = IndexSetExpr::periodic(2, [1]).intersect(&a).unwrap();
        assert_eq!(d.is_finite(), Some(true));
    }

    #[test]
    fn json_tagged() {
        let s = SetExpr::evens();
        let j = serde_json::to_string(&s).unwrap();
        assert_eq!(j, r#"{"kind":"periodic","modulus":2,"residues":[0]}"#);
        let back: SetExpr = serde_json::from_str(&j).unwrap();
        assert_eq!(back, s);
    }

    proptest! {
        #[test]
        fn next_and_prev_agree_with_scan(idx in 0usize..10, n in 0u64..80, span in 0u64..80) {
            let s = &sample_sets()[idx];
            let limit = n + span;
            prop_assert_eq!(s.next_from(n, limit), brute_next(s, n, limit));
            prop_assert_eq!(s.prev_before(n), brute_prev(s, n));
        }
    }
}
