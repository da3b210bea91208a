//! Representative tables, challenge points and block-wise diagonal assembly
//! for a countable family of almost commuting involutions.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orbit::{bounded, class_type_maps, closure_of_maps, omega_partition, ClassType};
use crate::perm::{Ev, FiniteMap, PermExpr, Window};

fn prefix(fam: &[PermExpr], j: usize) -> &[PermExpr] {
    &fam[..j.min(fam.len())]
}

/// Closure of `x` under the first `depth` members, sorted.
pub fn depth_closure(fam: &[PermExpr], depth: usize, x: &[u64], w: &Window) -> Result<Vec<u64>> {
    let maps = bounded(prefix(fam, depth), w);
    let (pts, complete) = closure_of_maps(&maps, x.iter().copied(), w.bound);
    if !complete {
        return Err(Error::IncompleteClass {
            point: x.first().copied().unwrap_or(0),
        });
    }
    Ok(pts)
}

/// `Δ`-relabeled type of the closure of `{i}` under the first `depth` members.
pub fn point_type(fam: &[PermExpr], depth: usize, i: u64, w: &Window) -> Result<ClassType> {
    let cl = depth_closure(fam, depth, &[i], w)?;
    class_type_maps(&bounded(prefix(fam, depth), w), &cl)
}

/// One entry of `C(j)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Representative {
    pub point: u64,
    pub class_max: u64,
    pub size: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepresentativeTable {
    pub j: usize,
    pub reps: Vec<Representative>,
    /// Usable classes above `j` that were examined.
    pub classes_seen: usize,
}

impl RepresentativeTable {
    pub fn points(&self) -> Vec<u64> {
        self.reps.iter().map(|r| r.point).collect()
    }
}

/// `C(j)`: for each type of class (under the first `j` members) lying above
/// `j`, the least element of the earliest class with that type.
pub fn representative_table(fam: &[PermExpr], j: usize, w: &Window) -> Result<RepresentativeTable> {
    let members = prefix(fam, j);
    let part = omega_partition(members, w);
    let maps = bounded(members, w);
    let mut seen: BTreeMap<ClassType, Representative> = BTreeMap::new();
    let mut classes_seen = 0;
    for (_, c) in part.complete_classes() {
        let max = *c.points.last().unwrap();
        if c.min() < j as u64 || max >= w.interior() {
            continue;
        }
        classes_seen += 1;
        let t = class_type_maps(&maps, &c.points)?;
        seen.entry(t).or_insert(Representative {
            point: c.min(),
            class_max: max,
            size: c.len(),
        });
    }
    let mut reps: Vec<Representative> = seen.into_values().collect();
    reps.sort_by_key(|r| r.point);
    Ok(RepresentativeTable { j, reps, classes_seen })
}

/// Checks the three defining properties of `C(j)` against a direct scan of
/// the points of the interior.
pub fn verify_representatives(fam: &[PermExpr], t: &RepresentativeTable, w: &Window) -> Result<Vec<String>> {
    let j = t.j;
    let mut out = Vec::new();
    let mut rep_types = BTreeMap::new();
    for r in &t.reps {
        let cl = depth_closure(fam, j, &[r.point], w)?;
        if cl[0] < j as u64 {
            out.push(format!("closure of {} meets [0, {j})", r.point));
        }
        rep_types.insert(point_type(fam, j, r.point, w)?, cl[0]);
    }
    for i in j as u64..w.interior() {
        let Ok(cl) = depth_closure(fam, j, &[i], w) else {
            continue;
        };
        if cl[0] < j as u64 || *cl.last().unwrap() >= w.interior() {
            continue;
        }
        let ty = point_type(fam, j, i, w)?;
        match rep_types.get(&ty) {
            None => out.push(format!("type of {i} has no representative")),
            Some(&m) if cl[0] < m => out.push(format!("class of {i} precedes its representative")),
            _ => {}
        }
    }
    Ok(out)
}

/// How `L(k)` is read.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reading", rename_all = "snake_case")]
pub enum LReading {
    /// `max` of the closure of `[0, k)` under the first `k` members.
    InitialSegment,
    /// `max` of the closure of `{j}` under the first `k` members.
    Singleton { j: u64 },
}

/// `L(k)`; `0` for an empty set.
pub fn l_bound(fam: &[PermExpr], k: u64, reading: LReading, w: &Window) -> Result<u64> {
    let x: Vec<u64> = match reading {
        LReading::InitialSegment => (0..k).collect(),
        LReading::Singleton { j } => vec![j],
    };
    if x.is_empty() {
        return Ok(0);
    }
    let cl = depth_closure(fam, k as usize, &x, w)?;
    Ok(*cl.last().unwrap())
}

/// `f*(k)` restricted to one-point sets: the least `t` such that every type
/// realized by a usable class above `L(k)` has a member in `[L(k), t)`.
pub fn f_star(fam: &[PermExpr], k: u64, reading: LReading, w: &Window) -> Result<u64> {
    let l = l_bound(fam, k, reading, w)?;
    let members = prefix(fam, k as usize);
    let part = omega_partition(members, w);
    let maps = bounded(members, w);
    let mut first: BTreeMap<ClassType, u64> = BTreeMap::new();
    for (_, c) in part.complete_classes() {
        if c.min() < l || *c.points.last().unwrap() >= w.interior() {
            continue;
        }
        first.entry(class_type_maps(&maps, &c.points)?).or_insert(c.min());
    }
    first
        .values()
        .max()
        .map(|m| m + 1)
        .ok_or_else(|| Error::WindowExhausted(format!("no usable class above L({k}) = {l}")))
}

/// `a_0 = 0`, `a_{n+1} = L(L(f*(a_n)))`, stopping at `count` terms or the window.
pub fn star_intervals(fam: &[PermExpr], count: usize, reading: LReading, w: &Window) -> Result<Vec<u64>> {
    let mut a = vec![0u64];
    while a.len() < count {
        let last = *a.last().unwrap();
        let fs = match f_star(fam, last, reading, w) {
            Ok(v) => v,
            Err(Error::WindowExhausted(_)) | Err(Error::IncompleteClass { .. }) => break,
            Err(e) => return Err(e),
        };
        let next = match l_bound(fam, fs, LReading::InitialSegment, w) {
            Ok(v) => v,
            Err(Error::IncompleteClass { .. }) => break,
            Err(e) => return Err(e),
        };
        let next = match l_bound(fam, next, LReading::InitialSegment, w) {
            Ok(v) => v.max(last + 1),
            Err(Error::IncompleteClass { .. }) => break,
            Err(e) => return Err(e),
        };
        a.push(next);
    }
    Ok(a)
}

/// `Δ_A ∘ r ∘ Δ_A^{-1}` on `[0, |A|)`, with `None` for images outside `A`.
fn conjugate(r: &PermExpr, a: &[u64], horizon: u64) -> Vec<Option<u32>> {
    a.iter()
        .map(|&x| match r.at(x, horizon) {
            Ev::Val(v) => a.binary_search(&v).ok().map(|i| i as u32),
            _ => None,
        })
        .collect()
}

/// `H(j)`: the least `h ≥ j` in the interior whose class has the type of some
/// representative `i ∈ C(j)` while `r` acts differently on the two classes.
pub fn challenge(fam: &[PermExpr], r: &PermExpr, j: usize, w: &Window) -> Result<Option<u64>> {
    let table = representative_table(fam, j, w)?;
    let mut reps: BTreeMap<ClassType, Vec<Option<u32>>> = BTreeMap::new();
    for rep in &table.reps {
        let cl = depth_closure(fam, j, &[rep.point], w)?;
        reps.insert(point_type(fam, j, rep.point, w)?, conjugate(r, &cl, w.bound));
    }
    for h in j as u64..w.interior() {
        let Ok(cl) = depth_closure(fam, j, &[h], w) else {
            continue;
        };
        let ty = point_type(fam, j, h, w)?;
        if let Some(c) = reps.get(&ty) {
            if *c != conjugate(r, &cl, w.bound) {
                return Ok(Some(h));
            }
        }
    }
    Ok(None)
}

/// One block of a diagonal assembly.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockChallenge {
    /// `[a, b)`.
    pub interval: (u64, u64),
    pub source: Vec<u64>,
    pub target: Vec<u64>,
    /// Closures are taken under the first `depth` members.
    pub depth: usize,
}

/// Swaps, inside each interval, the closure of the source with the closure
/// of the target by `Δ`, and is the identity elsewhere.
pub fn assemble_diagonal_blocks(fam: &[PermExpr], blocks: &[BlockChallenge], w: &Window) -> Result<PermExpr> {
    let mut pairs: BTreeMap<u64, u64> = BTreeMap::new();
    let mut prev_end = 0u64;
    for (bi, b) in blocks.iter().enumerate() {
        let bad = |reason: String| Error::BlockViolation { block: bi, reason };
        let (lo, hi) = b.interval;
        if lo >= hi || lo < prev_end {
            return Err(bad(format!("interval [{lo}, {hi}) is empty or overlaps the previous one")));
        }
        prev_end = hi;
        let close = |x: &[u64]| -> Result<Vec<u64>> {
            depth_closure(fam, b.depth, x, w).map_err(|_| bad("closure is not complete in the window".into()))
        };
        let s = close(&b.source)?;
        let t = close(&b.target)?;
        let inside = |c: &[u64]| c.first().map_or(true, |&x| x >= lo) && c.last().map_or(true, |&x| x < hi);
        if !inside(&s) || !inside(&t) {
            return Err(bad("closure leaves the interval".into()));
        }
        let ss: BTreeSet<u64> = s.iter().copied().collect();
        if t.iter().any(|x| ss.contains(x)) {
            return Err(bad("source and target closures overlap".into()));
        }
        let maps = bounded(prefix(fam, b.depth), w);
        if class_type_maps(&maps, &s)? != class_type_maps(&maps, &t)? {
            return Err(bad("closures are not isomorphic by the order map".into()));
        }
        let mut local = BTreeMap::new();
        for (&x, &y) in s.iter().zip(&t) {
            local.insert(x, y);
            local.insert(y, x);
        }
        for (&x, &y) in &local {
            for p in prefix(fam, b.depth) {
                let lhs = p.at(y, w.bound);
                let rhs = match p.at(x, w.bound) {
                    Ev::Val(v) => Ev::Val(local.get(&v).copied().unwrap_or(v)),
                    e => e,
                };
                if lhs != rhs {
                    return Err(bad(format!("swap does not commute with a member at {x}")));
                }
            }
        }
        pairs.extend(local);
    }
    Ok(PermExpr::finite(FiniteMap::new(pairs)?))
}

/// A growth function for the first sequence condition.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GrowthFn {
    /// `mul · x + add`.
    Affine { mul: u64, add: u64 },
    /// `x²`.
    Square,
    /// `values[x]`, and the last value beyond the table.
    Table { values: Vec<u64> },
}

impl GrowthFn {
    pub fn eval(&self, x: u64) -> u64 {
        match self {
            GrowthFn::Affine { mul, add } => mul.saturating_mul(x).saturating_add(*add),
            GrowthFn::Square => x.saturating_mul(x),
            GrowthFn::Table { values } => values
                .get(x as usize)
                .or(values.last())
                .copied()
                .unwrap_or(0),
        }
    }
}

/// `R(1), R(2), …` with `|R(n)| ≤ n`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RSequence {
    pub entries: Vec<BTreeSet<u64>>,
}

impl RSequence {
    /// `R(n)`, `n ≥ 1`.
    pub fn get(&self, n: usize) -> Option<&BTreeSet<u64>> {
        n.checked_sub(1).and_then(|i| self.entries.get(i))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RSequenceReport {
    pub checked: usize,
    /// Indices `n` with `H ∩ (n × R(n)) ≠ ∅`.
    pub hits: Vec<usize>,
}

/// Checks `|R(n)| ≤ n` and `f(max ⋃_{i<n} R(i)) < min R(n)` for every entry,
/// and lists the `n` for which some sampled pair `(a, H(a))` has `a < n` and
/// `H(a) ∈ R(n)`. Empty entries and empty unions make the inequality vacuous.
pub fn validate_r_sequence(r: &RSequence, f: &GrowthFn, h: &[(u64, u64)]) -> Result<RSequenceReport> {
    let mut max_so_far: Option<u64> = None;
    let mut hits = Vec::new();
    for (idx, rn) in r.entries.iter().enumerate() {
        let n = idx + 1;
        if rn.len() > n {
            return Err(Error::GrowthViolated { index: n });
        }
        if let (Some(mx), Some(&mn)) = (max_so_far, rn.first()) {
            if f.eval(mx) >= mn {
                return Err(Error::GrowthViolated { index: n });
            }
        }
        if let Some(&mx) = rn.last() {
            max_so_far = Some(max_so_far.map_or(mx, |m| m.max(mx)));
        }
        if h.iter().any(|&(a, b)| a < n as u64 && rn.contains(&b)) {
            hits.push(n);
        }
    }
    Ok(RSequenceReport {
        checked: r.entries.len(),
        hits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::BlockSequence;
    use crate::perm::{compose, nc_set, LocalRule};
    use proptest::prelude::*;

    fn w() -> Window {
        Window::new(256, 16).unwrap()
    }

    /// `(0 2)` followed by adjacent swaps from 4 on.
    fn mixed() -> Vec<PermExpr> {
        vec![compose(&PermExpr::swap([(0, 2)]).unwrap(), &PermExpr::adjacent_swaps(4))]
    }

    #[test]
    fn representatives_examples() {
        let t = representative_table(&[], 0, &w()).unwrap();
        assert_eq!(t.points(), vec![0]);
        let t = representative_table(&[], 7, &w()).unwrap();
        assert_eq!(t.points(), vec![7]);
        let fam = mixed();
        let t = representative_table(&fam, 1, &w()).unwrap();
        // Depth 1 above 1: fixed point 1, the singleton 3 shares its type, pairs from 4.
        assert_eq!(t.points(), vec![1, 4]);
        assert!(verify_representatives(&fam, &t, &w()).unwrap().is_empty());
        // Depth 0 sees no members at all.
        let t = representative_table(&fam, 0, &w()).unwrap();
        assert_eq!(t.points(), vec![0]);
        let t = representative_table(&fam, 3, &w()).unwrap();
        assert_eq!(t.points(), vec![3, 4]);
        assert!(verify_representatives(&fam, &t, &w()).unwrap().is_empty());
    }

    #[test]
    fn l_readings() {
        let fam = mixed();
        assert_eq!(l_bound(&fam, 0, LReading::InitialSegment, &w()).unwrap(), 0);
        assert_eq!(l_bound(&fam, 1, LReading::InitialSegment, &w()).unwrap(), 2);
        assert_eq!(l_bound(&fam, 5, LReading::InitialSegment, &w()).unwrap(), 5);
        assert_eq!(l_bound(&fam, 5, LReading::Singleton { j: 6 }, &w()).unwrap(), 7);
        let a = star_intervals(&fam, 5, LReading::InitialSegment, &w()).unwrap();
        assert_eq!(a[0], 0);
        assert!(a.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn challenge_finds_first_disagreement() {
        let fam = vec![PermExpr::adjacent_swaps(0)];
        // r swaps 10 and 11 only; at depth 1 the representative pair {0, 1} is fixed by r.
        let r = PermExpr::swap([(10, 11)]).unwrap();
        assert_eq!(challenge(&fam, &r, 1, &w()).unwrap(), Some(10));
        assert_eq!(challenge(&fam, &PermExpr::Identity, 1, &w()).unwrap(), None);
    }

    #[test]
    fn assemble_examples() {
        let fam = vec![PermExpr::adjacent_swaps(0)];
        assert_eq!(assemble_diagonal_blocks(&fam, &[], &w()).unwrap(), PermExpr::Identity);
        let b = BlockChallenge {
            interval: (8, 16),
            source: vec![8],
            target: vec![12],
            depth: 1,
        };
        let p = assemble_diagonal_blocks(&fam, &[b.clone()], &w()).unwrap();
        assert_eq!(p.at(8, 256), Ev::Val(12));
        assert_eq!(p.at(13, 256), Ev::Val(9));
        assert!(nc_set(&p, &fam[0], &w()).points.is_empty());
        let overlap = BlockChallenge {
            target: vec![9],
            ..b.clone()
        };
        assert!(matches!(
            assemble_diagonal_blocks(&fam, &[overlap], &w()),
            Err(Error::BlockViolation { block: 0, .. })
        ));
        let outside = BlockChallenge {
            target: vec![20],
            ..b
        };
        assert!(matches!(
            assemble_diagonal_blocks(&fam, &[outside], &w()),
            Err(Error::BlockViolation { .. })
        ));
    }

    #[test]
    fn r_sequence_examples() {
        let r = RSequence {
            entries: vec![[5].into(), [11, 12].into(), [30].into()],
        };
        let f = GrowthFn::Affine { mul: 2, add: 0 };
        assert_eq!(validate_r_sequence(&r, &f, &[]).unwrap().hits, Vec::<usize>::new());
        let bad = RSequence {
            entries: vec![[5].into(), [10].into()],
        };
        assert_eq!(validate_r_sequence(&bad, &f, &[]), Err(Error::GrowthViolated { index: 2 }));
        let big = RSequence {
            entries: vec![[5, 6].into()],
        };
        assert_eq!(validate_r_sequence(&big, &f, &[]), Err(Error::GrowthViolated { index: 1 }));
        // H(0) lands in every R(n).
        let every = RSequence {
            entries: (0..6).map(|i| [10u64.pow(i + 1)].into()).collect(),
        };
        let h: Vec<(u64, u64)> = (0..6).map(|i| (0, 10u64.pow(i + 1))).collect();
        let rep = validate_r_sequence(&every, &GrowthFn::Affine { mul: 5, add: 0 }, &h).unwrap();
        assert_eq!(rep.hits, vec![1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn growth_fn_eval() {
        assert_eq!(GrowthFn::Square.eval(7), 49);
        assert_eq!(GrowthFn::Table { values: vec![1, 5] }.eval(9), 5);
        assert_eq!(GrowthFn::Affine { mul: u64::MAX, add: 1 }.eval(3), u64::MAX);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn assembly_commutes_with_certifying_members(
            starts in proptest::collection::vec(0u64..6, 1..5),
            depth in 0usize..3,
        ) {
            let blocks8 = BlockSequence::arithmetic(0, 8).unwrap();
            let fam = vec![
                PermExpr::adjacent_swaps(0),
                PermExpr::block_local(blocks8.clone(), LocalRule::Xor { mask: 2 }),
                PermExpr::block_local(blocks8, LocalRule::Xor { mask: 4 }),
            ];
            let w = Window::new(512, 32).unwrap();
            // Block b covers [32 b, 32 b + 32); swap the depth-closures of two aligned groups.
            let size = 1u64 << depth;
            let chall: Vec<BlockChallenge> = starts.iter().enumerate().map(|(b, &s)| {
                let lo = 32 * b as u64;
                let s0 = lo + (s % (16 / size)) * size;
                BlockChallenge { interval: (lo, lo + 32), source: vec![s0], target: vec![s0 + 16], depth }
            }).collect();
            let p = assemble_diagonal_blocks(&fam, &chall, &w).unwrap();
            for (i, m) in fam.iter().enumerate().take(depth) {
                prop_assert!(nc_set(&p, m, &w).points.is_empty(), "member {}", i);
            }
            let sq = compose(&p, &p);
            for n in 0..w.bound {
                prop_assert_eq!(sq.at(n, w.bound), Ev::Val(n));
            }
        }
    }
}
