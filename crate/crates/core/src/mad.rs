//! Shift permutations along almost disjoint families: the embedding of
//! zero-sum integer vectors into permutations modulo finite ones, and the
//! search for non-commuting witnesses against permutations outside its image.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perm::{nc_at, Bounded, Ev, FiniteMap, NcPoint, PermExpr, PointMap, TabulatedPerm, Window};
use crate::sets::SetExpr;

/// A finite almost disjoint family of infinite sets.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ADFamily {
    pub members: Vec<SetExpr>,
}

impl ADFamily {
    pub fn new(members: Vec<SetExpr>) -> Self {
        ADFamily { members }
    }

    /// The residue classes modulo `m`.
    pub fn residues(m: u64) -> Self {
        ADFamily::new((0..m).map(|r| SetExpr::periodic(m, [r])).collect())
    }

    /// Branches of the binary tree, each given as `(prefix, cycle)`.
    pub fn branches(codes: &[(Vec<u8>, Vec<u8>)]) -> Self {
        ADFamily::new(
            codes
                .iter()
                .map(|(p, c)| SetExpr::branch(p.clone(), c.clone()))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Each member meets the upper half of the interior and no two members
    /// meet there.
    pub fn check(&self, w: &Window) -> Result<()> {
        let lo = w.interior() / 2;
        for (i, m) in self.members.iter().enumerate() {
            if m.next_from(lo, w.interior()).is_none() {
                return Err(Error::InsufficientWindow {
                    bound: w.bound,
                    reason: format!("member {i} has no points in the upper half"),
                });
            }
        }
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                let x = SetExpr::intersection(vec![self.members[i].clone(), self.members[j].clone()]);
                if x.next_from(lo, w.interior()).is_some() {
                    return Err(Error::NotAlmostDisjoint { first: i, second: j });
                }
            }
        }
        Ok(())
    }
}

/// A finitely supported integer vector indexed by family members.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ZeroSumVector {
    pub coeffs: BTreeMap<usize, i64>,
}

impl ZeroSumVector {
    pub fn new(coeffs: impl IntoIterator<Item = (usize, i64)>) -> Self {
        ZeroSumVector {
            coeffs: coeffs.into_iter().filter(|&(_, c)| c != 0).collect(),
        }
    }

    pub fn sum(&self) -> i64 {
        self.coeffs.values().sum()
    }

    pub fn get(&self, i: usize) -> i64 {
        self.coeffs.get(&i).copied().unwrap_or(0)
    }

    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.coeffs.iter().filter(|(_, &c)| c != 0).map(|(&i, _)| i)
    }

    pub fn add(&self, other: &ZeroSumVector) -> ZeroSumVector {
        let mut c = self.coeffs.clone();
        for (&i, &v) in &other.coeffs {
            *c.entry(i).or_insert(0) += v;
        }
        ZeroSumVector::new(c)
    }

    pub fn neg(&self) -> ZeroSumVector {
        ZeroSumVector::new(self.coeffs.iter().map(|(&i, &v)| (i, -v)))
    }

    /// `f_{a,a'}`: `+1` at `a`, `-1` at `a'`.
    pub fn pair(a: usize, a2: usize) -> ZeroSumVector {
        ZeroSumVector::new([(a, 1), (a2, -1)])
    }
}

/// `π_a^j`: `j` steps along `a`.
pub fn pi_shift(a: &SetExpr, j: i64) -> PermExpr {
    PermExpr::shift(a.clone(), j)
}

/// A constructed representative of the coset assigned to a vector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phi {
    pub perm: PermExpr,
    /// The finite hull `F`.
    pub hull: Vec<u64>,
    /// `b*` for each support member.
    pub stars: BTreeMap<usize, Vec<u64>>,
    /// `θ` as (source, target) pairs.
    pub theta: Vec<(u64, u64)>,
}

impl Phi {
    /// `F` together with every `b*`: the only points where the map is not
    /// a plain shift or the identity.
    pub fn patch(&self) -> BTreeSet<u64> {
        let mut p: BTreeSet<u64> = self.hull.iter().copied().collect();
        for s in self.stars.values() {
            p.extend(s.iter().copied());
        }
        p
    }
}

/// Least finite `F` containing the pairwise intersections of the given
/// members with `F ∩ b` an initial segment of each `b`.
pub fn minimal_hull(family: &ADFamily, idx: &[usize], w: &Window) -> Result<BTreeSet<u64>> {
    let lo = w.interior() / 2;
    let mut hull = BTreeSet::new();
    for (x, &i) in idx.iter().enumerate() {
        for &j in &idx[x + 1..] {
            let inter = SetExpr::intersection(vec![family.members[i].clone(), family.members[j].clone()]);
            let pts = inter.members_below(w.bound);
            if pts.last().map_or(false, |&p| p >= lo) {
                return Err(Error::InsufficientWindow {
                    bound: w.bound,
                    reason: format!("members {i} and {j} still meet in the upper half"),
                });
            }
            hull.extend(pts);
        }
    }
    // Points below the largest hull point of a member are shared only with
    // members whose intersections already lie in the hull, so one pass suffices.
    let mut extra = Vec::new();
    for &i in idx {
        let b = &family.members[i];
        if let Some(&top) = hull.iter().rev().find(|&&p| b.contains(p)) {
            extra.extend(b.members_below(top));
        }
    }
    hull.extend(extra);
    Ok(hull)
}

/// The permutation attached to a zero-sum vector: shifts by `f(b)` along each
/// support member outside the hull, patched by `θ` on the first points.
pub fn phi(family: &ADFamily, f: &ZeroSumVector, w: &Window) -> Result<Phi> {
    let sum = f.sum();
    if sum != 0 {
        return Err(Error::NonZeroSum { sum });
    }
    let support: Vec<usize> = f.support().collect();
    if let Some(&bad) = support.iter().find(|&&i| i >= family.len()) {
        return Err(Error::Precondition(format!("vector names member {bad} outside the family")));
    }
    if support.is_empty() {
        return Ok(Phi {
            perm: PermExpr::Identity,
            hull: Vec::new(),
            stars: BTreeMap::new(),
            theta: Vec::new(),
        });
    }
    let hull = minimal_hull(family, &support, w)?;
    let hull_set = SetExpr::Finite { points: hull.clone() };
    let mut stars = BTreeMap::new();
    for &i in &support {
        let b = &family.members[i];
        let need = f.get(i).unsigned_abs() as usize;
        let mut star = Vec::with_capacity(need);
        let mut x = 0;
        while star.len() < need {
            match b.next_from(x, w.interior()) {
                Some(y) => {
                    if !hull.contains(&y) {
                        star.push(y);
                    }
                    x = y + 1;
                }
                None => {
                    return Err(Error::InsufficientWindow {
                        bound: w.bound,
                        reason: format!("member {i} has fewer than {need} points past the hull"),
                    })
                }
            }
        }
        stars.insert(i, star);
    }
    let mut sources: Vec<u64> = Vec::new();
    let mut targets: Vec<u64> = Vec::new();
    for &i in &support {
        if f.get(i) < 0 {
            sources.extend(&stars[&i]);
        } else {
            targets.extend(&stars[&i]);
        }
    }
    sources.sort_unstable();
    targets.sort_unstable();
    let theta: Vec<(u64, u64)> = sources.iter().copied().zip(targets.iter().copied()).collect();

    let mut cases = Vec::new();
    let neg_stars: Vec<u64> = sources.clone();
    if !theta.is_empty() {
        cases.push((
            SetExpr::finite(neg_stars),
            PermExpr::swap(theta.iter().copied())?,
        ));
    }
    for &i in &support {
        let b = family.members[i].clone();
        let k = f.get(i);
        let excluded = if k < 0 {
            let mut e = hull.clone();
            e.extend(&stars[&i]);
            SetExpr::Finite { points: e }
        } else {
            hull_set.clone()
        };
        cases.push((SetExpr::difference(b.clone(), excluded), pi_shift(&b, k)));
    }
    let perm = PermExpr::piecewise(cases, PermExpr::Identity);
    let out = Phi {
        perm,
        hull: hull.into_iter().collect(),
        stars,
        theta,
    };
    let probe: Vec<u64> = support
        .iter()
        .flat_map(|&i| family.members[i].members_below(w.interior().min(1 << 20)))
        .collect();
    verify_bijective(&out.perm, w, &probe)?;
    Ok(out)
}

/// Checks injectivity on the window and that every interior point has a
/// preimage; windows too large to tabulate are checked on `probe` only.
fn verify_bijective(p: &PermExpr, w: &Window, probe: &[u64]) -> Result<()> {
    if w.bound > 1 << 24 {
        for &n in probe {
            if let Ev::Val(m) = p.at(n, w.bound) {
                if p.at_inv(m, w.bound) != Ev::Val(n) {
                    return Err(Error::InvalidExpr(format!("constructed map is not injective at {n}")));
                }
            }
        }
        return Ok(());
    }
    let t = TabulatedPerm::new(p, w)?;
    for n in 0..w.interior() {
        match t.preimage(n) {
            Ev::Val(m) if t.image(m) == Ev::Val(n) => {}
            Ev::Val(_) | Ev::Undef => {
                return Err(Error::InvalidExpr(format!("constructed map misses {n}")))
            }
            Ev::Escape => {}
        }
    }
    Ok(())
}

/// `π_{a,a'}`, the image of `f_{a,a'}`.
pub fn phi_pair(family: &ADFamily, a: usize, a2: usize, w: &Window) -> Result<Phi> {
    if a == a2 {
        return Err(Error::Precondition("gadget needs two distinct members".into()));
    }
    phi(family, &ZeroSumVector::pair(a, a2), w)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Defect {
    /// Points where `Φ(f) ∘ Φ(g)` and `Φ(f + g)` differ on the interior.
    pub points: Vec<u64>,
    /// `K ∪ Φ(g)^{-1}(K)` with `K` the union of the three patches and the
    /// pairwise intersections of all members involved.
    pub declared: Vec<u64>,
    pub contained: bool,
    pub certified: bool,
}

pub fn homomorphism_defect(
    family: &ADFamily,
    f: &ZeroSumVector,
    g: &ZeroSumVector,
    w: &Window,
) -> Result<Defect> {
    let pf = phi(family, f, w)?;
    let pg = phi(family, g, w)?;
    let pfg = phi(family, &f.add(g), w)?;
    let mut involved: BTreeSet<usize> = f.support().collect();
    involved.extend(g.support());
    let involved: Vec<usize> = involved.into_iter().collect();
    let mut k = minimal_hull(family, &involved, w)?;
    k.extend(pf.patch());
    k.extend(pg.patch());
    k.extend(pfg.patch());
    let mut declared = k.clone();
    for &x in &k {
        if let Ev::Val(v) = pg.perm.at_inv(x, w.bound) {
            declared.insert(v);
        }
    }
    let a = TabulatedPerm::new(&pf.perm, w)?;
    let b = TabulatedPerm::new(&pg.perm, w)?;
    let c = TabulatedPerm::new(&pfg.perm, w)?;
    let mut points = Vec::new();
    let mut certified = true;
    for n in 0..w.interior() {
        let lhs = match b.image(n) {
            Ev::Val(m) => a.image(m),
            e => e,
        };
        match (lhs, c.image(n)) {
            (Ev::Val(x), Ev::Val(y)) => {
                if x != y {
                    points.push(n);
                }
            }
            _ => certified = false,
        }
    }
    let contained = points.iter().all(|p| declared.contains(p));
    Ok(Defect {
        points,
        declared: declared.into_iter().collect(),
        contained,
        certified,
    })
}

/// Which step of the maximality argument produced a witness.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Claim {
    /// The support meets a member in an infinite, co-infinite set.
    CofiniteSupport,
    /// The map sends infinitely many points of a member outside it.
    MapsInto,
    /// The shift exponent along a member is not eventually constant.
    UniformExponent,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Witness {
    /// `π` agrees with `Φ(exponents)` above the listed residual points.
    InImage {
        exponents: ZeroSumVector,
        residual: Vec<u64>,
    },
    /// A gadget `π_{a,a'}` and points where it fails to commute with `π`.
    NonCommuting {
        claim: Claim,
        member: usize,
        partner: usize,
        gadget: PermExpr,
        points: Vec<u64>,
    },
    /// Support points in the upper half lying in no member.
    Uncovered { points: Vec<u64> },
    /// Exponents found but they do not sum to zero within the window.
    Unbalanced { exponents: BTreeMap<usize, i64> },
}

/// Position of `x` within `a`: `|a ∩ [0, x)|`.
fn rank(a: &SetExpr, x: u64) -> u64 {
    a.count_in(0, x)
}

/// Runs the three claims against `π` on the upper half of the interior.
pub fn maximality_witness(family: &ADFamily, pi: &PermExpr, w: &Window) -> Result<Witness> {
    let lo = w.interior() / 2;
    let hi = w.interior();
    let bp = Bounded::new(pi, w);
    let image = |n: u64| bp.image(n).val().filter(|&v| v < w.bound);
    let moved = |n: u64| image(n).map_or(false, |v| v != n);
    let partner_of = |i: usize| (0..family.len()).find(|&j| j != i);
    let confirm = |gadget: &PermExpr, pts: Vec<u64>| -> Vec<u64> {
        let g = Bounded::new(gadget, w);
        pts.into_iter()
            .filter(|&n| nc_at(&bp, &g, n, w.bound) == NcPoint::Differs)
            .collect()
    };

    let mut exponents = BTreeMap::new();
    for (i, a) in family.members.iter().enumerate() {
        let pts = a.members_below(hi);
        let tail: Vec<u64> = pts.iter().copied().filter(|&n| n >= lo).collect();
        if !tail.iter().any(|&n| moved(n)) {
            continue;
        }
        let Some(j) = partner_of(i) else {
            return Err(Error::Precondition("family needs two members for gadgets".into()));
        };

        // A moved point of `a` followed in `a` by a fixed one.
        let c1: Vec<u64> = tail
            .windows(2)
            .filter(|x| moved(x[0]) && !moved(x[1]))
            .map(|x| x[0])
            .collect();
        if !c1.is_empty() {
            let g = phi_pair(family, i, j, w)?.perm;
            let pts = confirm(&g, c1);
            if !pts.is_empty() {
                return Ok(Witness::NonCommuting {
                    claim: Claim::CofiniteSupport,
                    member: i,
                    partner: j,
                    gadget: g,
                    points: pts,
                });
            }
        }

        // Points of `a` sent outside `a`.
        let x: Vec<u64> = tail
            .iter()
            .copied()
            .filter(|&n| image(n).map_or(false, |v| !a.contains(v)))
            .collect();
        if !x.is_empty() {
            let best = (0..family.len())
                .filter(|&k| k != i)
                .max_by_key(|&k| {
                    let out = x.iter().filter(|&&n| !family.members[k].contains(image(n).unwrap())).count();
                    (out, std::cmp::Reverse(k))
                })
                .unwrap();
            let g = phi_pair(family, i, best, w)?.perm;
            let cand: Vec<u64> = x
                .iter()
                .copied()
                .filter(|&n| !family.members[best].contains(image(n).unwrap()))
                .collect();
            let pts = confirm(&g, cand);
            if !pts.is_empty() {
                return Ok(Witness::NonCommuting {
                    claim: Claim::MapsInto,
                    member: i,
                    partner: best,
                    gadget: g,
                    points: pts,
                });
            }
        }

        // `π(n) = π_a^{k(n)}(n)` with `k` constant.
        let ks: Vec<(u64, Option<i64>)> = tail
            .iter()
            .map(|&n| {
                let k = image(n)
                    .filter(|&v| a.contains(v))
                    .map(|v| rank(a, v) as i64 - rank(a, n) as i64);
                (n, k)
            })
            .collect();
        let first = ks.iter().find_map(|(_, k)| *k);
        let c3: Vec<u64> = ks
            .windows(2)
            .filter(|p| p[0].1.is_some() && p[1].1.is_some() && p[0].1 != p[1].1)
            .map(|p| p[0].0)
            .collect();
        if !c3.is_empty() {
            let g = phi_pair(family, i, j, w)?.perm;
            let pts = confirm(&g, c3);
            if !pts.is_empty() {
                return Ok(Witness::NonCommuting {
                    claim: Claim::UniformExponent,
                    member: i,
                    partner: j,
                    gadget: g,
                    points: pts,
                });
            }
        }
        if let Some(k) = first {
            if k != 0 {
                exponents.insert(i, k);
            }
        }
    }

    let uncovered: Vec<u64> = (lo..hi)
        .filter(|&n| moved(n) && !family.members.iter().any(|a| a.contains(n)))
        .collect();
    if !uncovered.is_empty() {
        return Ok(Witness::Uncovered { points: uncovered });
    }
    let v = ZeroSumVector::new(exponents.clone());
    if v.sum() != 0 {
        return Ok(Witness::Unbalanced { exponents });
    }
    let rep = phi(family, &v, w)?;
    let br = Bounded::new(&rep.perm, w);
    let residual = (0..hi)
        .filter(|&n| match (bp.image(n), br.image(n)) {
            (Ev::Val(x), Ev::Val(y)) => x != y,
            _ => false,
        })
        .collect();
    Ok(Witness::InImage {
        exponents: v,
        residual,
    })
}

/// Number of interior points where two maps differ.
pub fn difference_count(p: &PermExpr, q: &PermExpr, w: &Window) -> usize {
    (0..w.interior())
        .filter(|&n| match (p.at(n, w.bound), q.at(n, w.bound)) {
            (Ev::Val(x), Ev::Val(y)) => x != y,
            _ => false,
        })
        .count()
}

/// The finite permutation swapping consecutive members of `a` in pairs of
/// ranks `(2m, 2m + 1)` for `m` in `ranks`, used to build test inputs.
pub fn rank_swaps(a: &SetExpr, ranks: impl Iterator<Item = u64>, w: &Window) -> Result<PermExpr> {
    let pts = a.members_below(w.bound);
    let mut pairs = Vec::new();
    for m in ranks {
        let (i, j) = (2 * m as usize, 2 * m as usize + 1);
        if j < pts.len() {
            pairs.push((pts[i], pts[j]));
        }
    }
    Ok(PermExpr::finite(FiniteMap::from_pairs(pairs)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perm::nc_set;
    use proptest::prelude::*;

    fn w() -> Window {
        Window::new(4_000, 100).unwrap()
    }

    #[test]
    fn pi_shift_examples() {
        let a = SetExpr::evens();
        assert_eq!(pi_shift(&a, 1).at(4, 100), Ev::Val(6));
        assert_eq!(pi_shift(&a, 0).at(4, 100), Ev::Val(4));
        assert_eq!(pi_shift(&a, 0).at(3, 100), Ev::Undef);
        for n in (0..80).step_by(2) {
            let twice = match pi_shift(&a, 1).at(n, 100) {
                Ev::Val(m) => pi_shift(&a, 1).at(m, 100),
                e => e,
            };
            assert_eq!(pi_shift(&a, 2).at(n, 100), twice);
        }
    }

    #[test]
    fn phi_zero_is_identity() {
        let fam = ADFamily::residues(3);
        let p = phi(&fam, &ZeroSumVector::default(), &w()).unwrap();
        assert_eq!(p.perm, PermExpr::Identity);
    }

    #[test]
    fn phi_evens_odds() {
        let fam = ADFamily::residues(2);
        let w = Window::new(10_000, 10).unwrap();
        let p = phi(&fam, &ZeroSumVector::new([(0, 1), (1, -1)]), &w).unwrap();
        assert!(p.hull.is_empty());
        assert_eq!(p.theta, vec![(1, 0)]);
        assert_eq!(p.perm.at(1, w.bound), Ev::Val(0));
        assert_eq!(p.perm.at(0, w.bound), Ev::Val(2));
        assert_eq!(p.perm.at(5, w.bound), Ev::Val(3));
        // Bijective on the interior, checked independently.
        let mut seen = vec![false; w.bound as usize + 2];
        for n in 0..w.interior() {
            let v = p.perm.at(n, w.bound).val().unwrap();
            assert!(!seen[v as usize]);
            seen[v as usize] = true;
        }
        assert!((0..w.interior() - 2).all(|n| seen[n as usize]));
    }

    #[test]
    fn phi_rejects_nonzero_sum() {
        let fam = ADFamily::residues(2);
        assert_eq!(
            phi(&fam, &ZeroSumVector::new([(0, 2), (1, -1)]), &w()),
            Err(Error::NonZeroSum { sum: 1 })
        );
    }

    #[test]
    fn phi_on_overlapping_branches() {
        // Branches sharing a prefix meet in finitely many nodes.
        let fam = ADFamily::branches(&[
            (vec![0, 1], vec![0]),
            (vec![0, 1], vec![1]),
            (vec![0], vec![0, 1]),
        ]);
        let w = Window::new(1 << 40, 0).unwrap();
        let p = phi(&fam, &ZeroSumVector::new([(0, 2), (1, -1), (2, -1)]), &w).unwrap();
        assert!(!p.hull.is_empty());
        // Checked along each branch rather than over the whole window.
        for (i, k) in [(0usize, 2i64), (1, -1), (2, -1)] {
            let b = &fam.members[i];
            for x in b.members_below(1 << 30) {
                if p.patch().contains(&x) {
                    continue;
                }
                assert_eq!(p.perm.at(x, w.bound), pi_shift(b, k).at(x, w.bound));
            }
        }
    }

    #[test]
    fn pair_gadget() {
        let fam = ADFamily::residues(3);
        let g = phi_pair(&fam, 0, 2, &w()).unwrap();
        assert_eq!(g.theta, vec![(2, 0)]);
        assert_eq!(g.perm.at(3, 4000), Ev::Val(6));
        assert_eq!(g.perm.at(8, 4000), Ev::Val(5));
        assert_eq!(g.perm.at(7, 4000), Ev::Val(7));
        assert!(phi_pair(&fam, 1, 1, &w()).is_err());
    }

    #[test]
    fn defect_examples() {
        let fam = ADFamily::residues(3);
        let f = ZeroSumVector::new([(0, 2), (1, -1), (2, -1)]);
        let d = homomorphism_defect(&fam, &f, &f.neg(), &w()).unwrap();
        assert!(d.contained && d.certified);
        assert!(d.points.iter().all(|&p| p < 20));
        let z = ZeroSumVector::default();
        assert!(homomorphism_defect(&fam, &z, &z, &w()).unwrap().points.is_empty());
    }

    #[test]
    fn witness_for_image_member() {
        let fam = ADFamily::residues(3);
        let f = ZeroSumVector::new([(0, 1), (2, -1)]);
        let p = phi(&fam, &f, &w()).unwrap();
        match maximality_witness(&fam, &p.perm, &w()).unwrap() {
            Witness::InImage { exponents, residual } => {
                assert_eq!(exponents, f);
                assert!(residual.is_empty());
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn witness_claim2() {
        // π swaps 4k with 4k + 2, which lies in neither member.
        let fam = ADFamily::new(vec![SetExpr::periodic(4, [0]), SetExpr::periodic(4, [1])]);
        let w = w();
        let pi = PermExpr::block_local(
            crate::blocks::BlockSequence::arithmetic(0, 4).unwrap(),
            crate::perm::LocalRule::Xor { mask: 2 },
        );
        let r = maximality_witness(&fam, &pi, &w).unwrap();
        let Witness::NonCommuting { claim, gadget, points, .. } = r else {
            panic!("expected a witness, got {r:?}");
        };
        assert_eq!(claim, Claim::MapsInto);
        let nc = nc_set(&pi, &gadget, &w);
        assert!(points.iter().all(|p| nc.points.contains(p)));
        for &n in &points {
            let pn = pi.at(n, w.bound).val().unwrap();
            assert_eq!(gadget.at(pn, w.bound), Ev::Val(pn));
            let gn = gadget.at(n, w.bound).val().unwrap();
            assert_ne!(pi.at(gn, w.bound), Ev::Val(pn));
        }
    }

    #[test]
    fn witness_claim1_and_claim3() {
        let fam = ADFamily::residues(2);
        let w = w();
        let evens = SetExpr::evens();
        // Swaps on every other pair of ranks: support neither finite nor cofinite.
        let sparse = rank_swaps(&evens, (0..2000).step_by(2), &w).unwrap();
        let r = maximality_witness(&fam, &sparse, &w).unwrap();
        assert!(matches!(r, Witness::NonCommuting { claim: Claim::CofiniteSupport, .. }), "{r:?}");
        // Swaps on all rank pairs: exponents alternate +1, -1.
        let dense = rank_swaps(&evens, 0..2000, &w).unwrap();
        let r = maximality_witness(&fam, &dense, &w).unwrap();
        let Witness::NonCommuting { claim, gadget, points, .. } = r else {
            panic!("expected a witness, got {r:?}");
        };
        assert_eq!(claim, Claim::UniformExponent);
        let nc = nc_set(&dense, &gadget, &w);
        assert!(points.iter().all(|p| nc.points.contains(p)));
    }

    #[test]
    fn family_check() {
        assert!(ADFamily::residues(5).check(&w()).is_ok());
        let bad = ADFamily::new(vec![SetExpr::evens(), SetExpr::periodic(4, [0])]);
        assert_eq!(bad.check(&w()), Err(Error::NotAlmostDisjoint { first: 0, second: 1 }));
    }

    fn arb_vector(m: usize) -> impl Strategy<Value = ZeroSumVector> {
        proptest::collection::vec(-3i64..=3, m - 1).prop_map(move |v| {
            let last = -v.iter().sum::<i64>();
            ZeroSumVector::new(v.into_iter().chain([last]).enumerate())
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn defect_confined_to_patch(f in arb_vector(3), g in arb_vector(3)) {
            let fam = ADFamily::residues(3);
            let d = homomorphism_defect(&fam, &f, &g, &w()).unwrap();
            prop_assert!(d.contained);
        }

        #[test]
        fn image_commutes_mod_finite(f in arb_vector(4), g in arb_vector(4)) {
            let fam = ADFamily::residues(4);
            let w = w();
            let a = phi(&fam, &f, &w).unwrap();
            let b = phi(&fam, &g, &w).unwrap();
            let nc = nc_set(&a.perm, &b.perm, &w);
            // Patches hold at most Σ|f| + Σ|g| points of four residue classes,
            // and each map moves a point at most 3 · 4 further.
            let reach: i64 = f.coeffs.values().chain(g.coeffs.values()).map(|c| c.abs()).sum();
            let limit = 4 * (reach as u64 + 1) + 12 * 4;
            prop_assert!(nc.points.iter().all(|&p| p < limit), "{:?} vs {}", nc.points, limit);
        }

        #[test]
        fn phi_injective_mod_finite(f in arb_vector(3), g in arb_vector(3)) {
            prop_assume!(f != g);
            let fam = ADFamily::residues(3);
            let w = w();
            let a = phi(&fam, &f, &w).unwrap();
            let b = phi(&fam, &g, &w).unwrap();
            // Differing on a whole residue class: at least a third of the window.
            prop_assert!(difference_count(&a.perm, &b.perm, &w) as u64 >= w.interior() / 3 - 20);
        }

        #[test]
        fn image_members_have_no_witness(f in arb_vector(3)) {
            let fam = ADFamily::residues(3);
            let w = w();
            let p = phi(&fam, &f, &w).unwrap();
            let r = maximality_witness(&fam, &p.perm, &w).unwrap();
            let is_image = matches!(&r, Witness::InImage { exponents, .. } if *exponents == f);
            prop_assert!(is_image, "{:?}", r);
        }
    }
}
