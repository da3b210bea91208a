//! Equivalence classes generated by finite families of permutations, class
//! types up to member-preserving isomorphism, and closure constructions.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use petgraph::unionfind::UnionFind;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perm::{
    invert, nc_at, nc_scan, orbit_of, Bounded, Ev, FiniteMap, NcPoint, NcReport, OrbitStatus,
    PermExpr, PointMap, TabulatedPerm, Window,
};
use crate::sets::SetExpr;

/// One equivalence class inside the window.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrbitClass {
    pub points: Vec<u64>,
    /// Closed under every member and its inverse without leaving the window.
    pub complete: bool,
}

impl OrbitClass {
    pub fn min(&self) -> u64 {
        self.points[0]
    }
    pub fn len(&self) -> usize {
        self.points.len()
    }
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// The partition of `[0, bound)` into classes, ordered by least element.
#[derive(Clone, Debug)]
pub struct OrbitPartition {
    pub window: Window,
    pub family: Vec<PermExpr>,
    classes: Vec<OrbitClass>,
    point_to_class: Vec<u32>,
}

/// Evaluates each member of a family with the window as search horizon.
pub fn bounded<'a>(s: &'a [PermExpr], w: &Window) -> Vec<Bounded<'a>> {
    s.iter().map(|p| Bounded::new(p, w)).collect()
}

/// Tabulates each member on the window.
pub fn tabulate(s: &[PermExpr], w: &Window) -> Result<Vec<TabulatedPerm>> {
    s.iter().map(|p| TabulatedPerm::new(p, w)).collect()
}

/// `Ω_S` on the window.
pub fn omega_partition(s: &[PermExpr], w: &Window) -> OrbitPartition {
    let mut part = match tabulate(s, w) {
        Ok(t) => OrbitPartition::from_maps(&t, w),
        Err(_) => OrbitPartition::from_maps(&bounded(s, w), w),
    };
    part.family = s.to_vec();
    part
}

impl OrbitPartition {
    /// Builds the partition from any point maps.
    pub fn from_maps<P: PointMap>(maps: &[P], w: &Window) -> Self {
        let n = w.bound as usize;
        let mut uf = UnionFind::<u32>::new(n);
        let mut bad = vec![false; n];
        let mut partial = vec![false; maps.len()];
        for (k, m) in maps.iter().enumerate() {
            for x in 0..w.bound {
                match m.image(x) {
                    Ev::Val(v) if v < w.bound => {
                        uf.union(x as u32, v as u32);
                    }
                    Ev::Undef => partial[k] = true,
                    _ => bad[x as usize] = true,
                }
            }
        }
        // A partial map may send an outside point into a class through a
        // chain start; check preimages for those maps.
        for (k, m) in maps.iter().enumerate() {
            if !partial[k] {
                continue;
            }
            for x in 0..w.bound {
                match m.preimage(x) {
                    Ev::Val(v) if v < w.bound => {}
                    Ev::Undef => {}
                    _ => bad[x as usize] = true,
                }
            }
        }
        let mut root_to_class: BTreeMap<u32, u32> = BTreeMap::new();
        let mut classes: Vec<OrbitClass> = Vec::new();
        let mut point_to_class = vec![0u32; n];
        for x in 0..n {
            let r = uf.find_mut(x as u32);
            let c = *root_to_class.entry(r).or_insert_with(|| {
                classes.push(OrbitClass {
                    points: Vec::new(),
                    complete: true,
                });
                (classes.len() - 1) as u32
            });
            classes[c as usize].points.push(x as u64);
            if bad[x] {
                classes[c as usize].complete = false;
            }
            point_to_class[x] = c;
        }
        OrbitPartition {
            window: *w,
            family: Vec::new(),
            classes,
            point_to_class,
        }
    }

    pub fn classes(&self) -> &[OrbitClass] {
        &self.classes
    }

    pub fn class(&self, i: usize) -> &OrbitClass {
        &self.classes[i]
    }

    /// Index of the class containing `n`.
    pub fn class_of(&self, n: u64) -> Option<usize> {
        self.point_to_class.get(n as usize).map(|&c| c as usize)
    }

    pub fn complete_classes(&self) -> impl Iterator<Item = (usize, &OrbitClass)> {
        self.classes.iter().enumerate().filter(|(_, c)| c.complete)
    }

    /// Class size ↦ (complete count, incomplete count).
    pub fn size_histogram(&self) -> BTreeMap<usize, (usize, usize)> {
        let mut h: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
        for c in &self.classes {
            let e = h.entry(c.len()).or_default();
            if c.complete {
                e.0 += 1;
            } else {
                e.1 += 1;
            }
        }
        h
    }

    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("size,complete,incomplete\n");
        for (size, (c, i)) in self.size_histogram() {
            out.push_str(&format!("{size},{c},{i}\n"));
        }
        out
    }
}

/// `Ω_S(X)` within the window: the least set containing `X` closed under the
/// members and their inverses. The flag is false if the search met the edge.
pub fn omega_closure(s: &[PermExpr], x: &SetExpr, w: &Window) -> (Vec<u64>, bool) {
    closure_of_maps(&bounded(s, w), x.members_below(w.bound), w.bound)
}

/// [`omega_closure`] for point maps and explicit seeds.
pub fn closure_of_maps<P: PointMap>(
    maps: &[P],
    seeds: impl IntoIterator<Item = u64>,
    bound: u64,
) -> (Vec<u64>, bool) {
    let mut seen: BTreeSet<u64> = BTreeSet::new();
    let mut queue = VecDeque::new();
    let mut complete = true;
    for x in seeds {
        if x < bound && seen.insert(x) {
            queue.push_back(x);
        }
    }
    while let Some(x) = queue.pop_front() {
        for m in maps {
            for e in [m.image(x), m.preimage(x)] {
                match e {
                    Ev::Val(v) if v < bound => {
                        if seen.insert(v) {
                            queue.push_back(v);
                        }
                    }
                    Ev::Undef => {}
                    _ => complete = false,
                }
            }
        }
    }
    (seen.into_iter().collect(), complete)
}

/// The order isomorphism `Δ_{A,B}`; inputs are sorted and deduplicated first.
pub fn delta_map(a: &[u64], b: &[u64]) -> Result<BTreeMap<u64, u64>> {
    let a: BTreeSet<u64> = a.iter().copied().collect();
    let b: BTreeSet<u64> = b.iter().copied().collect();
    if a.len() != b.len() {
        return Err(Error::SizeMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(a.into_iter().zip(b).collect())
}

/// The structure of a class: each member's action relabeled through `Δ`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClassType {
    pub size: usize,
    pub actions: Vec<Vec<u32>>,
}

impl ClassType {
    /// BFS relabeling from `start`, following members in order.
    fn labeling_from(&self, start: usize) -> Option<Vec<u32>> {
        let mut label = vec![u32::MAX; self.size];
        let mut next = 0u32;
        let mut queue = VecDeque::new();
        label[start] = 0;
        next += 1;
        queue.push_back(start);
        while let Some(x) = queue.pop_front() {
            for act in &self.actions {
                let y = act[x] as usize;
                if label[y] == u32::MAX {
                    label[y] = next;
                    next += 1;
                    queue.push_back(y);
                }
            }
        }
        (next as usize == self.size).then_some(label)
    }

    fn relabel(&self, label: &[u32]) -> Vec<Vec<u32>> {
        self.actions
            .iter()
            .map(|act| {
                let mut t = vec![0u32; self.size];
                for (x, &y) in act.iter().enumerate() {
                    t[label[x] as usize] = label[y as usize];
                }
                t
            })
            .collect()
    }

    /// Lexicographically least relabeled tables with the labeling attaining them.
    pub fn canonical_labeling(&self) -> Option<(Vec<Vec<u32>>, Vec<u32>)> {
        if self.size == 0 {
            return Some((self.actions.clone(), Vec::new()));
        }
        let mut best: Option<(Vec<Vec<u32>>, Vec<u32>)> = None;
        for s in 0..self.size {
            let label = self.labeling_from(s)?;
            let t = self.relabel(&label);
            if best.as_ref().map_or(true, |(b, _)| t < *b) {
                best = Some((t, label));
            }
        }
        best
    }

    /// Canonical representative: equal for two classes iff they are isomorphic.
    pub fn canonical(&self) -> Option<ClassType> {
        self.canonical_labeling().map(|(actions, _)| ClassType {
            size: self.size,
            actions,
        })
    }
}

/// The type of a complete class under point maps.
pub fn class_type_maps<P: PointMap>(maps: &[P], class: &[u64]) -> Result<ClassType> {
    let pts: Vec<u64> = class.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let idx = |v: u64| pts.binary_search(&v).ok();
    let mut actions = Vec::with_capacity(maps.len());
    for m in maps {
        let mut t = Vec::with_capacity(pts.len());
        for &x in &pts {
            match m.image(x) {
                Ev::Val(v) => match idx(v) {
                    Some(i) => t.push(i as u32),
                    None => return Err(Error::IncompleteClass { point: x }),
                },
                _ => return Err(Error::IncompleteClass { point: x }),
            }
        }
        actions.push(t);
    }
    Ok(ClassType {
        size: pts.len(),
        actions,
    })
}

/// The type of a complete class of `Ω_S`.
pub fn class_type(s: &[PermExpr], class: &[u64], w: &Window) -> Result<ClassType> {
    class_type_maps(&bounded(s, w), class)
}

/// A bijection `ψ: A → B` with `σ(ψ(a)) = ψ(σ(a))` for every member, if one exists.
pub fn s_isomorphic_maps<P: PointMap>(
    a: &[u64],
    b: &[u64],
    maps: &[P],
) -> Option<BTreeMap<u64, u64>> {
    let ta = class_type_maps(maps, a).ok()?;
    let tb = class_type_maps(maps, b).ok()?;
    if ta.size != tb.size {
        return None;
    }
    let pa: Vec<u64> = a.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let pb: Vec<u64> = b.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if ta == tb {
        return Some(pa.into_iter().zip(pb).collect());
    }
    let (ca, la) = ta.canonical_labeling()?;
    let (cb, lb) = tb.canonical_labeling()?;
    if ca != cb {
        return None;
    }
    let mut inv_b = vec![0usize; tb.size];
    for (i, &l) in lb.iter().enumerate() {
        inv_b[l as usize] = i;
    }
    Some(
        pa.iter()
            .enumerate()
            .map(|(i, &x)| (x, pb[inv_b[la[i] as usize]]))
            .collect(),
    )
}

/// [`s_isomorphic_maps`] for a family of expressions.
pub fn s_isomorphic(a: &[u64], b: &[u64], s: &[PermExpr], w: &Window) -> Option<BTreeMap<u64, u64>> {
    s_isomorphic_maps(a, b, &bounded(s, w))
}

/// A class whose size exceeds the product bound.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundViolation {
    pub class_min: u64,
    pub size: usize,
    /// Pairwise non-commutation points lying in the class.
    pub nc_points: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrbitBoundReport {
    pub product: u128,
    pub complete_classes: usize,
    pub violations: Vec<BoundViolation>,
    /// Union of `NC(π_i, π_j)` over pairs of members.
    pub nc_points: Vec<u64>,
    /// Members whose own closed orbits exceed the declared bound: (member, point, size).
    pub member_orbit_excess: Vec<(usize, u64, usize)>,
    /// Every violating class contains a non-commutation point.
    pub explained: bool,
}

/// Checks that complete classes away from the non-commutation points have at
/// most `∏ m(π)` elements.
pub fn verify_orbit_bound(s: &[PermExpr], m: &[usize], w: &Window) -> Result<OrbitBoundReport> {
    if s.len() != m.len() {
        return Err(Error::SizeMismatch {
            left: s.len(),
            right: m.len(),
        });
    }
    let maps = tabulate(s, w)?;
    let part = OrbitPartition::from_maps(&maps, w);
    let product: u128 = m.iter().map(|&x| x as u128).product();

    let mut nc: BTreeSet<u64> = BTreeSet::new();
    for i in 0..maps.len() {
        for j in i + 1..maps.len() {
            let (pts, _) = nc_scan(&maps[i], &maps[j], 0, w.bound, w.bound);
            nc.extend(pts);
        }
    }

    let mut member_orbit_excess = Vec::new();
    for (k, t) in maps.iter().enumerate() {
        let mut seen = vec![false; w.bound as usize];
        for x in 0..w.bound {
            if seen[x as usize] {
                continue;
            }
            let o = orbit_of(t, x, m[k] + 1, w.bound);
            for &p in &o.points {
                seen[p as usize] = true;
            }
            if o.points.len() > m[k] && o.status != OrbitStatus::BoundaryHit {
                member_orbit_excess.push((k, x, o.points.len()));
            }
        }
    }

    let mut violations = Vec::new();
    let mut complete = 0;
    for (_, c) in part.complete_classes() {
        complete += 1;
        if c.len() as u128 > product {
            violations.push(BoundViolation {
                class_min: c.min(),
                size: c.len(),
                nc_points: c.points.iter().filter(|p| nc.contains(p)).copied().collect(),
            });
        }
    }
    let explained = violations.iter().all(|v| !v.nc_points.is_empty());
    Ok(OrbitBoundReport {
        product,
        complete_classes: complete,
        violations,
        nc_points: nc.into_iter().collect(),
        member_orbit_excess,
        explained,
    })
}

/// Where `π` and `θ` first disagree inside the closure.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Disagreement {
    pub point: u64,
    pub pi: Option<u64>,
    pub theta: Option<u64>,
    /// `(member, parent, inverse_step)`: the point was reached from `parent`
    /// by the member or, if the flag is set, its inverse.
    pub reached_from: Option<(usize, u64, bool)>,
    /// At `parent`: `π` fails to commute with the step map.
    pub pi_fails: bool,
    /// At `parent`: `θ` fails to commute with the step map.
    pub theta_fails: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgreementReport {
    /// `Y' = ∪ NC(σ, π) ∪ NC(σ, θ)`.
    pub y_prime: Vec<u64>,
    /// `Y = ∪ σ(Y') ∪ σ^{-1}(Y')`.
    pub y: Vec<u64>,
    /// First point of `X ∪ Y` where the hypothesis fails.
    pub hypothesis_failure: Option<u64>,
    pub closure_size: usize,
    pub closure_complete: bool,
    pub disagreement: Option<Disagreement>,
}

/// Checks that agreement of `π` and `θ` on `X ∪ Y` spreads to `Ω_S(X ∪ Y)`.
pub fn propagate_agreement(
    pi: &PermExpr,
    theta: &PermExpr,
    s: &[PermExpr],
    x: &[u64],
    w: &Window,
) -> AgreementReport {
    let bp = Bounded::new(pi, w);
    let bt = Bounded::new(theta, w);
    let maps = bounded(s, w);
    let mut y_prime = BTreeSet::new();
    for m in &maps {
        for n in 0..w.bound {
            if nc_at(m, &bp, n, w.bound) == NcPoint::Differs
                || nc_at(m, &bt, n, w.bound) == NcPoint::Differs
            {
                y_prime.insert(n);
            }
        }
    }
    let mut y = BTreeSet::new();
    for m in &maps {
        for &p in &y_prime {
            for e in [m.image(p), m.preimage(p)] {
                if let Ev::Val(v) = e {
                    y.insert(v);
                }
            }
        }
    }
    let mut seeds: BTreeSet<u64> = x.iter().copied().filter(|&v| v < w.bound).collect();
    seeds.extend(y.iter().copied().filter(|&v| v < w.bound));
    let agrees = |n: u64| bp.image(n) == bt.image(n);
    let hypothesis_failure = seeds.iter().copied().find(|&n| !agrees(n));

    let mut report = AgreementReport {
        y_prime: y_prime.into_iter().collect(),
        y: y.into_iter().collect(),
        hypothesis_failure,
        closure_size: 0,
        closure_complete: true,
        disagreement: None,
    };
    if hypothesis_failure.is_some() {
        return report;
    }

    let (size, complete, d) = spread_agreement(pi, theta, s, &seeds.into_iter().collect::<Vec<_>>(), w);
    report.closure_size = size;
    report.closure_complete = complete;
    report.disagreement = d;
    report
}

/// Walks `Ω_S(seeds)` checking `π = θ`; the first disagreement is traced to
/// the step that reached it. Returns the closure size and completeness.
pub fn spread_agreement(
    pi: &PermExpr,
    theta: &PermExpr,
    s: &[PermExpr],
    seeds: &[u64],
    w: &Window,
) -> (usize, bool, Option<Disagreement>) {
    let bp = Bounded::new(pi, w);
    let bt = Bounded::new(theta, w);
    let maps = bounded(s, w);
    let agrees = |n: u64| bp.image(n) == bt.image(n);
    let mut complete = true;
    let mut found = None;
    let mut parent: BTreeMap<u64, Option<(usize, u64, bool)>> =
        seeds.iter().filter(|&&n| n < w.bound).map(|&n| (n, None)).collect();
    let mut queue: VecDeque<u64> = parent.keys().copied().collect();
    while let Some(n) = queue.pop_front() {
        if !agrees(n) {
            let from = parent[&n];
            let (mut pf, mut tf) = (false, false);
            if let Some((k, p, inv)) = from {
                let step = |v: u64| if inv { maps[k].preimage(v) } else { maps[k].image(v) };
                let check = |f: &Bounded| {
                    let lhs = step(p).val().map(|q| f.image(q));
                    let rhs = f.image(p).val().map(step);
                    lhs != rhs
                };
                pf = check(&bp);
                tf = check(&bt);
            }
            found = Some(Disagreement {
                point: n,
                pi: bp.image(n).val(),
                theta: bt.image(n).val(),
                reached_from: from,
                pi_fails: pf,
                theta_fails: tf,
            });
            break;
        }
        for (k, m) in maps.iter().enumerate() {
            for (e, inv) in [(m.image(n), false), (m.preimage(n), true)] {
                match e {
                    Ev::Val(v) if v < w.bound => {
                        if let std::collections::btree_map::Entry::Vacant(slot) = parent.entry(v) {
                            slot.insert(Some((k, n, inv)));
                            queue.push_back(v);
                        }
                    }
                    Ev::Undef => {}
                    _ => complete = false,
                }
            }
        }
    }
    (parent.len(), complete, found)
}

/// A family with a declared finite exceptional set for each member.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedFamily {
    pub members: Vec<PermExpr>,
    pub exceptional: Vec<BTreeSet<u64>>,
}

/// A pair whose non-commutation escapes the declared sets.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationBreach {
    pub first: usize,
    pub second: usize,
    pub points: Vec<u64>,
}

impl AnnotatedFamily {
    pub fn new(members: Vec<PermExpr>, exceptional: Vec<BTreeSet<u64>>) -> Result<Self> {
        if members.len() != exceptional.len() {
            return Err(Error::SizeMismatch {
                left: members.len(),
                right: exceptional.len(),
            });
        }
        Ok(AnnotatedFamily {
            members,
            exceptional,
        })
    }

    /// Pairs with `NC(h_1, h_2) ⊄ F(h_1) ∪ F(h_2)` on the certified interior.
    pub fn breaches(&self, w: &Window) -> Vec<AnnotationBreach> {
        let maps = bounded(&self.members, w);
        let mut out = Vec::new();
        for i in 0..maps.len() {
            for j in i + 1..maps.len() {
                let (pts, _) = nc_scan(&maps[i], &maps[j], 0, w.interior(), w.bound);
                let bad: Vec<u64> = pts
                    .into_iter()
                    .filter(|p| !self.exceptional[i].contains(p) && !self.exceptional[j].contains(p))
                    .collect();
                if !bad.is_empty() {
                    out.push(AnnotationBreach {
                        first: i,
                        second: j,
                        points: bad,
                    });
                }
            }
        }
        out
    }

    /// `F(h^{-1})`: the declared set of a listed inverse, or `F(h) ∪ h(F(h))`.
    pub fn inverse_exceptional(&self, i: usize, w: &Window) -> BTreeSet<u64> {
        let inv = invert(&self.members[i]);
        if let Some(j) = self.members.iter().position(|m| *m == inv) {
            return self.exceptional[j].clone();
        }
        let mut f = self.exceptional[i].clone();
        for &p in &self.exceptional[i] {
            if let Ev::Val(v) = self.members[i].at(p, w.bound) {
                f.insert(v);
            }
        }
        f
    }
}

/// `cl_W(X) = ∪_{i>=1} cl^i_W(X)` within the window, where
/// `cl^1_W(X) = {z ∉ W : ∃h ∃x ∈ X \ F(h), z = h(x), z ∉ F(h^{-1})}`.
pub fn cl_closure(
    h: &AnnotatedFamily,
    wset: &BTreeSet<u64>,
    x: &BTreeSet<u64>,
    w: &Window,
) -> (BTreeSet<u64>, bool) {
    let inv_f: Vec<BTreeSet<u64>> = (0..h.members.len()).map(|i| h.inverse_exceptional(i, w)).collect();
    let mut out = BTreeSet::new();
    let mut complete = true;
    let mut frontier: Vec<u64> = x.iter().copied().collect();
    let mut expanded: BTreeSet<u64> = BTreeSet::new();
    while let Some(p) = frontier.pop() {
        if !expanded.insert(p) {
            continue;
        }
        for (i, m) in h.members.iter().enumerate() {
            if h.exceptional[i].contains(&p) {
                continue;
            }
            match m.at(p, w.bound) {
                Ev::Val(z) if z < w.bound => {
                    if !wset.contains(&z) && !inv_f[i].contains(&z) && out.insert(z) {
                        frontier.push(z);
                    }
                }
                Ev::Undef => {}
                _ => complete = false,
            }
        }
    }
    (out, complete)
}

/// `g_t`: `ḡ` on the blocks with `t(i) = 0`, the identity elsewhere.
pub fn g_t_family(gbar: &PermExpr, blocks: &[Vec<u64>], t: &[bool], w: &Window) -> Result<PermExpr> {
    let mut pairs = Vec::new();
    for (i, block) in blocks.iter().enumerate() {
        let set: BTreeSet<u64> = block.iter().copied().collect();
        for &p in &set {
            match gbar.at(p, w.bound) {
                Ev::Val(v) if set.contains(&v) => {
                    if !t.get(i).copied().unwrap_or(true) {
                        pairs.push((p, v));
                    }
                }
                _ => return Err(Error::BlockNotInvariant { point: p }),
            }
        }
    }
    Ok(PermExpr::finite(FiniteMap::new(pairs)?))
}

/// `θ_F` with its non-commutation certificates against the family.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThetaF {
    pub perm: PermExpr,
    /// Class size ↦ index of the designated member acting there.
    pub designated: BTreeMap<usize, usize>,
    pub certificates: Vec<NcReport>,
}

/// Acts on `A_j` (union of complete classes of size `j`) as the designated
/// member when `f[j]` is set, identity elsewhere. Sizes without an explicit
/// designation use the first member moving a point of `A_j`.
pub fn theta_f_family(
    h: &[PermExpr],
    designated: &BTreeMap<usize, usize>,
    f: &[bool],
    w: &Window,
) -> Result<ThetaF> {
    let maps = tabulate(h, w)?;
    let part = OrbitPartition::from_maps(&maps, w);
    let mut by_size: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, c) in part.complete_classes() {
        by_size.entry(c.len()).or_default().push(i);
    }
    let mut chosen = BTreeMap::new();
    let mut pairs = Vec::new();
    for (&j, cls) in &by_size {
        if !f.get(j).copied().unwrap_or(false) {
            continue;
        }
        let moves = |k: usize| {
            cls.iter()
                .any(|&c| part.class(c).points.iter().any(|&p| maps[k].get(p) != Some(p)))
        };
        let k = match designated.get(&j) {
            Some(&k) if k < h.len() && moves(k) => k,
            Some(_) => return Err(Error::NoDesignatedGenerator { size: j }),
            None => match (0..h.len()).find(|&k| moves(k)) {
                Some(k) => k,
                None => return Err(Error::NoDesignatedGenerator { size: j }),
            },
        };
        chosen.insert(j, k);
        for &c in cls {
            for &p in &part.class(c).points {
                pairs.push((p, maps[k].get(p).unwrap()));
            }
        }
    }
    let perm = PermExpr::finite(FiniteMap::new(pairs)?);
    let theta_tab = TabulatedPerm::new(&perm, w)?;
    let certificates = maps
        .iter()
        .map(|m| {
            let (points, unresolved) = nc_scan(&theta_tab, m, 0, w.interior(), w.bound);
            NcReport {
                points,
                certified: unresolved == 0,
                unresolved,
                window: *w,
            }
        })
        .collect();
    Ok(ThetaF {
        perm,
        designated: chosen,
        certificates,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Confidence {
    /// Every seed lies in an orbit that is infinite by construction.
    Symbolic,
    /// Some seeds only ran past the orbit cap.
    CapHeuristic,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InfinitePart {
    pub points: Vec<u64>,
    pub confidence: Confidence,
    /// Seeds whose orbit exceeded the cap without a symbolic proof.
    pub heuristic_seeds: usize,
    pub complete: bool,
}

/// Whether a set is infinite by its shape.
pub fn provably_infinite(s: &SetExpr) -> bool {
    match s {
        SetExpr::Finite { .. } | SetExpr::Sample { .. } => false,
        SetExpr::Periodic { residues, .. } => !residues.is_empty(),
        SetExpr::Interval { hi, .. } => hi.is_none(),
        SetExpr::Branch { .. } => true,
        SetExpr::BlockUnion { blocks, index } => {
            blocks.is_infinite() && index.is_finite() == Some(false)
        }
        SetExpr::Union { parts } => parts.iter().any(provably_infinite),
        SetExpr::Intersection { .. } | SetExpr::Difference { .. } => false,
    }
}

/// `I*(S)`: the closure of all infinite orbits of the members.
pub fn infinite_part(s: &[PermExpr], w: &Window, cap: usize) -> InfinitePart {
    let maps = bounded(s, w);
    let mut seeds: BTreeSet<u64> = BTreeSet::new();
    let mut heuristic = 0usize;
    for (k, p) in s.iter().enumerate() {
        let symbolic = match p {
            PermExpr::SuccessorShift { carrier, exp } if *exp != 0 && provably_infinite(carrier) => {
                Some(carrier)
            }
            PermExpr::Inverse { inner } => match inner.as_ref() {
                PermExpr::SuccessorShift { carrier, exp } if *exp != 0 && provably_infinite(carrier) => {
                    Some(carrier)
                }
                _ => None,
            },
            _ => None,
        };
        if let Some(c) = symbolic {
            seeds.extend(c.members_below(w.bound));
            continue;
        }
        let mut seen = vec![false; w.bound as usize];
        for x in 0..w.bound {
            if seen[x as usize] {
                continue;
            }
            let o = orbit_of(&maps[k], x, cap, w.bound);
            for &q in &o.points {
                seen[q as usize] = true;
            }
            if o.status == OrbitStatus::CapHit {
                heuristic += o.points.len();
                seeds.extend(o.points.iter().copied());
            }
        }
    }
    let (points, complete) = closure_of_maps(&maps, seeds, w.bound);
    InfinitePart {
        points,
        confidence: if heuristic == 0 {
            Confidence::Symbolic
        } else {
            Confidence::CapHeuristic
        },
        heuristic_seeds: heuristic,
        complete,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::BlockSequence;
    use crate::perm::{LocalRule, SwapRule};
    use proptest::prelude::*;

    fn pair_swaps() -> PermExpr {
        PermExpr::SwapRule {
            rule: SwapRule::Adjacent { start: 0 },
        }
    }

    fn set(v: &[u64]) -> BTreeSet<u64> {
        v.iter().copied().collect()
    }

    /// All bijections `A → B` commuting with every map, by brute force.
    fn brute_isos<P: PointMap>(a: &[u64], b: &[u64], maps: &[P]) -> Vec<BTreeMap<u64, u64>> {
        fn perms(n: usize) -> Vec<Vec<usize>> {
            if n == 0 {
                return vec![vec![]];
            }
            let mut out = Vec::new();
            for p in perms(n - 1) {
                for i in 0..n {
                    let mut q = p.clone();
                    q.insert(i, n - 1);
                    out.push(q);
                }
            }
            out
        }
        if a.len() != b.len() {
            return vec![];
        }
        perms(a.len())
            .into_iter()
            .map(|p| a.iter().enumerate().map(|(i, &x)| (x, b[p[i]])).collect::<BTreeMap<_, _>>())
            .filter(|psi| {
                maps.iter().all(|m| {
                    a.iter().all(|&x| {
                        let lhs = m.image(psi[&x]).val();
                        let rhs = m.image(x).val().and_then(|y| psi.get(&y).copied());
                        lhs.is_some() && lhs == rhs
                    })
                })
            })
            .collect()
    }

    #[test]
    fn partition_examples() {
        let w = Window::exact(11);
        let p = omega_partition(&[pair_swaps()], &w);
        for (i, c) in p.classes().iter().enumerate() {
            if i < 5 {
                assert_eq!(c.points, vec![2 * i as u64, 2 * i as u64 + 1]);
                assert!(c.complete);
            } else {
                assert_eq!(c.points, vec![10]);
                assert!(!c.complete);
            }
        }
        let s = [
            PermExpr::swap([(0, 1)]).unwrap(),
            PermExpr::swap([(1, 2)]).unwrap(),
        ];
        let p = omega_partition(&s, &Window::exact(8));
        assert_eq!(p.class(0).points, vec![0, 1, 2]);
        assert!(p.classes()[1..].iter().all(|c| c.len() == 1 && c.complete));
        let p = omega_partition(&[], &Window::exact(5));
        assert_eq!(p.classes().len(), 5);
        assert_eq!(p.histogram_csv(), "size,complete,incomplete\n1,5,0\n");
    }

    #[test]
    fn closure_examples() {
        let w = Window::exact(20);
        assert_eq!(omega_closure(&[pair_swaps()], &SetExpr::empty(), &w).0, Vec::<u64>::new());
        assert_eq!(omega_closure(&[pair_swaps()], &SetExpr::finite([0]), &w).0, vec![0, 1]);
        let s = [
            PermExpr::swap([(0, 1)]).unwrap(),
            PermExpr::swap([(1, 2)]).unwrap(),
        ];
        assert_eq!(omega_closure(&s, &SetExpr::finite([1]), &w), (vec![0, 1, 2], true));
        let shift = PermExpr::shift(SetExpr::naturals(), 1);
        let (_, complete) = omega_closure(&[shift], &SetExpr::finite([3]), &w);
        assert!(!complete);
    }

    #[test]
    fn delta_examples() {
        assert_eq!(delta_map(&[3, 7], &[1, 9]).unwrap(), BTreeMap::from([(3, 1), (7, 9)]));
        assert_eq!(delta_map(&[4, 6], &[4, 6]).unwrap(), BTreeMap::from([(4, 4), (6, 6)]));
        assert_eq!(
            delta_map(&[5, 2, 9], &[0, 1, 2]).unwrap(),
            BTreeMap::from([(2, 0), (5, 1), (9, 2)])
        );
        assert_eq!(
            delta_map(&[1], &[1, 2]),
            Err(Error::SizeMismatch { left: 1, right: 2 })
        );
    }

    #[test]
    fn isomorphism_examples() {
        let w = Window::exact(10);
        let s = [pair_swaps()];
        assert_eq!(
            s_isomorphic(&[0, 1], &[2, 3], &s, &w),
            Some(BTreeMap::from([(0, 2), (1, 3)]))
        );
        assert_eq!(
            s_isomorphic(&[4, 5], &[4, 5], &s, &w),
            Some(BTreeMap::from([(4, 4), (5, 5)]))
        );
        // A swapped pair against two fixed points.
        let s = [PermExpr::swap([(0, 1)]).unwrap()];
        let maps = bounded(&s, &w);
        assert_eq!(brute_isos(&[0, 1], &[2, 3], &maps).len(), 0);
        assert_eq!(s_isomorphic(&[0, 1], &[2, 3], &s, &w), None);
    }

    #[test]
    fn class_type_examples() {
        let w = Window::exact(10);
        let t = class_type(&[pair_swaps()], &[7], &w);
        assert!(t.is_err());
        let t = class_type(&[PermExpr::identity()], &[7], &w).unwrap();
        assert_eq!(t, ClassType { size: 1, actions: vec![vec![0]] });
        let t = class_type(&[pair_swaps()], &[4, 5], &w).unwrap();
        assert_eq!(t.actions, vec![vec![1, 0]]);
        let s = [
            PermExpr::swap([(0, 1)]).unwrap(),
            PermExpr::swap([(1, 2)]).unwrap(),
        ];
        let t = class_type(&s, &[0, 1, 2], &w).unwrap();
        assert_eq!(t.actions, vec![vec![1, 0, 2], vec![0, 2, 1]]);
        let json = serde_json::to_string(&t).unwrap();
        assert_eq!(json, r#"{"size":3,"actions":[[1,0,2],[0,2,1]]}"#);
    }

    #[test]
    fn canonical_needs_nontrivial_relabeling() {
        // 3-cycles in opposite directions are isomorphic only via a
        // non-monotone bijection.
        let a = FiniteMap::new([(0, 1), (1, 2), (2, 0), (3, 5), (5, 4), (4, 3)]).unwrap();
        let s = [PermExpr::finite(a)];
        let w = Window::exact(6);
        let psi = s_isomorphic(&[0, 1, 2], &[3, 4, 5], &s, &w).unwrap();
        let maps = bounded(&s, &w);
        assert!(brute_isos(&[0, 1, 2], &[3, 4, 5], &maps).contains(&psi));
    }

    #[test]
    fn orbit_bound_examples() {
        let w = Window::exact(64);
        let s = [
            pair_swaps(),
            PermExpr::block_local(BlockSequence::arithmetic(0, 4).unwrap(), LocalRule::Reverse),
        ];
        let r = verify_orbit_bound(&s, &[2, 2], &w).unwrap();
        assert!(r.nc_points.is_empty());
        assert!(r.violations.is_empty());
        assert_eq!(r.product, 4);

        let r = verify_orbit_bound(&[], &[], &w).unwrap();
        assert!(r.violations.is_empty());
        assert_eq!(r.product, 1);

        // Planted non-commutation merges classes near the origin.
        let planted = PermExpr::swap([(1, 2), (3, 4)]).unwrap();
        let r = verify_orbit_bound(&[s[0].clone(), planted], &[2, 2], &w).unwrap();
        assert!(!r.violations.is_empty());
        assert!(r.explained);
        assert!(r.violations.iter().all(|v| v.class_min < 8));
    }

    #[test]
    fn agreement_examples() {
        let w = Window::exact(40);
        let s = [pair_swaps()];
        let pi = PermExpr::block_local(BlockSequence::arithmetic(0, 4).unwrap(), LocalRule::Reverse);
        let r = propagate_agreement(&pi, &pi, &s, &[3], &w);
        assert!(r.disagreement.is_none() && r.hypothesis_failure.is_none());

        // θ differs from π only outside Ω_S({0}) = {0,1}; both commute with S.
        let theta = PermExpr::block_local(BlockSequence::explicit(vec![0, 4, 8]).unwrap(), LocalRule::Reverse);
        let pi2 = PermExpr::block_local(BlockSequence::explicit(vec![0, 4]).unwrap(), LocalRule::Reverse);
        let r = propagate_agreement(&pi2, &theta, &s, &[0], &w);
        assert!(r.y.is_empty());
        assert!(r.disagreement.is_none());
        assert_eq!(r.closure_size, 2);
    }

    #[test]
    fn agreement_pinpoints_relation() {
        // Without Y, a θ that breaks commutation at 0 disagrees at 1.
        let w = Window::exact(8);
        let s = [PermExpr::swap([(0, 1)]).unwrap()];
        let pi = PermExpr::identity();
        let theta = PermExpr::swap([(1, 5)]).unwrap();
        let maps = bounded(&s, &w);
        let bt = Bounded::new(&theta, &w);
        assert_eq!(nc_at(&maps[0], &bt, 0, 8), NcPoint::Differs);
        let r = propagate_agreement(&pi, &theta, &s, &[0], &w);
        assert_eq!(r.y_prime, vec![0, 1, 5]);
        // 1 = σ(0) is in Y, so the hypothesis itself fails there.
        assert_eq!(r.hypothesis_failure, Some(1));
        // Spreading from {0} alone reaches 1 through σ and blames θ.
        let (_, _, d) = spread_agreement(&pi, &theta, &s, &[0], &w);
        let d = d.unwrap();
        assert_eq!(d.point, 1);
        assert_eq!(d.reached_from, Some((0, 0, false)));
        assert!(d.theta_fails && !d.pi_fails);
    }

    #[test]
    fn annotated_and_cl() {
        let w = Window::exact(20);
        let fam = AnnotatedFamily::new(
            vec![pair_swaps(), PermExpr::swap([(1, 2)]).unwrap()],
            vec![set(&[]), set(&[0, 1, 2, 3])],
        )
        .unwrap();
        assert!(fam.breaches(&w).is_empty());
        let tight = AnnotatedFamily::new(fam.members.clone(), vec![set(&[]), set(&[1])]).unwrap();
        assert!(!tight.breaches(&w).is_empty());

        let id = AnnotatedFamily::new(vec![PermExpr::identity()], vec![set(&[])]).unwrap();
        assert_eq!(cl_closure(&id, &set(&[]), &set(&[]), &w).0, set(&[]));
        assert_eq!(cl_closure(&id, &set(&[2]), &set(&[1, 2, 3]), &w).0, set(&[1, 3]));
        let inv = AnnotatedFamily::new(vec![pair_swaps()], vec![set(&[])]).unwrap();
        assert_eq!(cl_closure(&inv, &set(&[5]), &set(&[4]), &w).0, set(&[]));
        assert_eq!(cl_closure(&inv, &set(&[]), &set(&[4]), &w).0, set(&[4, 5]));
    }

    #[test]
    fn g_t_examples() {
        let w = Window::exact(20);
        let gbar = pair_swaps();
        let blocks = vec![vec![0, 1], vec![4, 5]];
        assert_eq!(g_t_family(&gbar, &blocks, &[true, true], &w).unwrap(), PermExpr::Identity);
        let all = g_t_family(&gbar, &blocks, &[false, false], &w).unwrap();
        for n in 0..8 {
            let e = if [0, 1, 4, 5].contains(&n) { n ^ 1 } else { n };
            assert_eq!(all.at(n, 20), Ev::Val(e));
        }
        let mixed = g_t_family(&gbar, &blocks, &[false, true], &w).unwrap();
        let h = PermExpr::block_local(BlockSequence::arithmetic(0, 2).unwrap(), LocalRule::Reverse);
        assert!(crate::perm::nc_set(&mixed, &h, &w).points.is_empty());
        assert_eq!(
            g_t_family(&gbar, &[vec![1, 2]], &[false], &w),
            Err(Error::BlockNotInvariant { point: 1 })
        );
    }

    #[test]
    fn theta_f_examples() {
        // Classes of sizes 2 and 3 alternate.
        let blocks = BlockSequence::explicit((0..=20).map(|i| (i / 2) * 5 + if i % 2 == 1 { 2 } else { 0 }).collect()).unwrap();
        let h = [PermExpr::block_local(blocks, LocalRule::Rotate { shift: 1 })];
        let w = Window::exact(50);
        let none = theta_f_family(&h, &BTreeMap::new(), &[], &w).unwrap();
        assert_eq!(none.perm, PermExpr::Identity);
        let both = theta_f_family(&h, &BTreeMap::new(), &[false, false, true, true], &w).unwrap();
        assert!(both.certificates.iter().all(|c| c.points.is_empty()));
        let only3 = theta_f_family(&h, &BTreeMap::new(), &[false, false, false, true], &w).unwrap();
        let differ = (0..50).filter(|&n| both.perm.at(n, 50) != only3.perm.at(n, 50)).count();
        assert_eq!(differ, 20);
        let err = theta_f_family(&[PermExpr::identity()], &BTreeMap::new(), &[false, true], &w);
        assert_eq!(err.unwrap_err(), Error::NoDesignatedGenerator { size: 1 });
    }

    #[test]
    fn infinite_part_examples() {
        let w = Window::exact(30);
        let r = infinite_part(&[pair_swaps()], &w, 100);
        assert!(r.points.is_empty());
        assert_eq!(r.confidence, Confidence::Symbolic);
        let r = infinite_part(&[PermExpr::shift(SetExpr::naturals(), 1)], &w, 100);
        assert_eq!(r.points.len(), 30);
        assert_eq!(r.confidence, Confidence::Symbolic);
        let mixed = [PermExpr::shift(SetExpr::evens(), 1), PermExpr::swap([(3, 4), (7, 9)]).unwrap()];
        let r = infinite_part(&mixed, &w, 100);
        let mut expect: Vec<u64> = (0..30).step_by(2).collect();
        expect.push(3);
        expect.sort();
        assert_eq!(r.points, expect);
    }

    fn arb_family() -> impl Strategy<Value = Vec<PermExpr>> {
        let member = prop_oneof![
            (1u64..6).prop_map(|s| PermExpr::block_local(BlockSequence::arithmetic(0, s).unwrap(), LocalRule::Reverse)),
            (1u64..6, 0i64..5).prop_map(|(s, r)| PermExpr::block_local(
                BlockSequence::arithmetic(1, s + 1).unwrap(),
                LocalRule::Rotate { shift: r }
            )),
            proptest::collection::vec((0u64..40, 0u64..40), 0..4).prop_filter_map("disjoint", |v| {
                PermExpr::swap(v).ok()
            }),
        ];
        proptest::collection::vec(member, 0..4)
    }

    fn small_classes(p: &OrbitPartition) -> Vec<Vec<u64>> {
        p.complete_classes().map(|(_, c)| c.points.clone()).collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn partition_ignores_order_and_inverses(fam in arb_family(), flip in proptest::collection::vec(any::<bool>(), 4)) {
            let w = Window::exact(48);
            let base = omega_partition(&fam, &w);
            let mut alt: Vec<PermExpr> = fam.iter().zip(&flip).map(|(p, &f)| if f { invert(p) } else { p.clone() }).collect();
            alt.reverse();
            let other = omega_partition(&alt, &w);
            prop_assert_eq!(base.classes(), other.classes());
        }

        #[test]
        fn delta_composes(mut a in proptest::collection::btree_set(0u64..100, 5), b in proptest::collection::btree_set(0u64..100, 5), c in proptest::collection::btree_set(0u64..100, 5)) {
            let a: Vec<u64> = std::mem::take(&mut a).into_iter().collect();
            let b: Vec<u64> = b.into_iter().collect();
            let c: Vec<u64> = c.into_iter().collect();
            let ab = delta_map(&a, &b).unwrap();
            let bc = delta_map(&b, &c).unwrap();
            let ac = delta_map(&a, &c).unwrap();
            for x in &a {
                prop_assert_eq!(bc[&ab[x]], ac[x]);
            }
        }

        #[test]
        fn class_type_matches_brute_force(fam in arb_family()) {
            let w = Window::exact(48);
            let p = omega_partition(&fam, &w);
            let maps = bounded(&fam, &w);
            let cls: Vec<Vec<u64>> = small_classes(&p).into_iter().filter(|c| c.len() <= 6).take(8).collect();
            for a in &cls {
                for b in &cls {
                    let brute = brute_isos(a, b, &maps);
                    let fast = s_isomorphic(a, b, &fam, &w);
                    prop_assert_eq!(brute.is_empty(), fast.is_none());
                    if let Some(psi) = fast {
                        prop_assert!(brute.contains(&psi));
                    }
                    let ta = class_type(&fam, a, &w).unwrap().canonical();
                    let tb = class_type(&fam, b, &w).unwrap().canonical();
                    prop_assert_eq!(ta == tb, !brute.is_empty());
                }
            }
        }

        #[test]
        fn commuting_family_has_no_bound_violation(s1 in 1u64..5, s2 in 1u64..4) {
            // Block-local maps on nested blocks commute exactly.
            let inner = BlockSequence::arithmetic(0, s1).unwrap();
            let outer_step = s1 * (s2 + 1);
            let a = PermExpr::block_local(inner, LocalRule::Rotate { shift: 1 });
            let b = PermExpr::block_local(
                BlockSequence::arithmetic(0, outer_step).unwrap(),
                LocalRule::Rotate { shift: s1 as i64 },
            );
            let w = Window::exact(outer_step * 6);
            let r = verify_orbit_bound(&[a, b], &[s1 as usize, (s2 + 1) as usize], &w).unwrap();
            prop_assert!(r.nc_points.is_empty());
            prop_assert!(r.violations.is_empty());
        }

        #[test]
        fn commuting_agreement_spreads(seed in proptest::collection::btree_set(0u64..60, 1..4), rot in 0i64..4) {
            let w = Window::exact(60);
            let s = [PermExpr::block_local(BlockSequence::arithmetic(0, 4).unwrap(), LocalRule::Rotate { shift: 1 })];
            let pi = PermExpr::block_local(BlockSequence::arithmetic(0, 4).unwrap(), LocalRule::Rotate { shift: rot });
            // θ agrees with π on the blocks of the seeds and is the identity elsewhere.
            let blocks: BTreeSet<u64> = seed.iter().map(|x| x / 4).collect();
            let pairs: Vec<(u64, u64)> = blocks.iter().flat_map(|b| (0..4).map(move |o| (4 * b + o, 4 * b + (o + rot as u64) % 4))).collect();
            let theta = PermExpr::finite(FiniteMap::new(pairs).unwrap());
            let x: Vec<u64> = seed.into_iter().collect();
            let r = propagate_agreement(&pi, &theta, &s, &x, &w);
            prop_assert!(r.y.is_empty());
            prop_assert!(r.disagreement.is_none());
        }
    }
}
