//! Finite conditions `(h, S)`: a finite involution `h` together with a finite
//! family `S`, extended one requirement at a time.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orbit::{class_type_maps, infinite_part, s_isomorphic_maps, ClassType, OrbitPartition};
use crate::perm::{nc_set, Ev, FiniteMap, PermExpr, TabulatedPerm, Window};

/// Orbit cap used when looking for infinite orbits of `S`.
pub const ORBIT_CAP: usize = 4096;

/// A finite involution `h` (fixed points included in its domain) and a family `S`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TowerCondition {
    pub h: BTreeMap<u64, u64>,
    pub s: Vec<PermExpr>,
}

impl TowerCondition {
    pub fn new(s: Vec<PermExpr>) -> Self {
        TowerCondition { h: BTreeMap::new(), s }
    }

    pub fn in_domain(&self, n: u64) -> bool {
        self.h.contains_key(&n)
    }

    pub fn is_involution(&self) -> bool {
        self.h.iter().all(|(&x, &y)| self.h.get(&y) == Some(&x))
    }

    /// `h` extended by the identity.
    pub fn as_perm(&self) -> Result<PermExpr> {
        Ok(PermExpr::finite(FiniteMap::new(self.h.iter().map(|(&a, &b)| (a, b)))?))
    }
}

/// Tabulated members, their classes and `I*(S)` for one family.
struct SContext {
    tabs: Vec<TabulatedPerm>,
    part: OrbitPartition,
    infinite: BTreeSet<u64>,
    types: BTreeMap<usize, Option<ClassType>>,
}

impl SContext {
    fn new(s: &[PermExpr], w: &Window) -> Result<Self> {
        let tabs = s
            .iter()
            .map(|p| TabulatedPerm::new(p, w))
            .collect::<Result<Vec<_>>>()?;
        let part = OrbitPartition::from_maps(&tabs, w);
        let infinite = infinite_part(s, w, ORBIT_CAP).points.into_iter().collect();
        Ok(SContext {
            tabs,
            part,
            infinite,
            types: BTreeMap::new(),
        })
    }

    fn usable(&self, i: usize, w: &Window) -> bool {
        let c = self.part.class(i);
        c.complete && *c.points.last().unwrap() < w.interior()
    }

    fn canonical(&mut self, i: usize) -> Option<ClassType> {
        if let Some(t) = self.types.get(&i) {
            return t.clone();
        }
        let t = class_type_maps(&self.tabs, &self.part.class(i).points)
            .ok()
            .and_then(|t| t.canonical());
        self.types.insert(i, t.clone());
        t
    }
}

/// One requirement of a run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Requirement {
    /// `π` joins `S`.
    Member { index: usize },
    /// `n ∈ dom(h) ∪ I*(S)`.
    Point { n: u64 },
    /// Some `j >= k` with `h(j) ≠ π(j)`.
    Diagonal { index: usize, k: u64 },
}

/// How a requirement was met.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Justification {
    /// `S` grew; `h` gained the identity on the closure of its old domain.
    MemberJoined { closed: Vec<u64> },
    AlreadyInDomain,
    InInfinitePart,
    /// Identity on the finite class of `n`.
    IdentityOnClass { class_min: u64, size: usize },
    /// `π` already swaps `A` onto `B` by the chosen isomorphism.
    DiagonalIdentity { a_min: u64, b_min: u64, witness: u64 },
    /// `A` and `B` swapped by an `S`-isomorphism.
    DiagonalSwap { a_min: u64, b_min: u64, witness: u64 },
    Failed { error: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub step: usize,
    pub requirement: Requirement,
    pub justification: Justification,
    /// Points added to `dom(h)`.
    pub added: usize,
}

/// Checks the order clauses for `stronger ≤ weaker`: both parts grow, new
/// domain avoids `I*(S)` of the weaker condition, and each new point is moved
/// inside the new domain by every old member, which commutes with `h` there.
pub fn order_violations(stronger: &TowerCondition, weaker: &TowerCondition, w: &Window) -> Vec<String> {
    let mut out = Vec::new();
    for (x, y) in &weaker.h {
        if stronger.h.get(x) != Some(y) {
            out.push(format!("h shrank at {x}"));
        }
    }
    if !weaker.s.iter().all(|p| stronger.s.contains(p)) {
        out.push("S shrank".into());
    }
    if !stronger.is_involution() {
        out.push("h is not an involution".into());
    }
    let new: BTreeSet<u64> = stronger
        .h
        .keys()
        .copied()
        .filter(|x| !weaker.h.contains_key(x))
        .collect();
    if new.is_empty() {
        return out;
    }
    let inf: BTreeSet<u64> = infinite_part(&weaker.s, w, ORBIT_CAP).points.into_iter().collect();
    if let Some(x) = new.iter().find(|x| inf.contains(x)) {
        out.push(format!("new point {x} lies in I*(S)"));
    }
    for (k, sigma) in weaker.s.iter().enumerate() {
        for &j in &new {
            let sj = match sigma.at(j, w.bound) {
                Ev::Val(v) => v,
                _ => {
                    out.push(format!("member {k} is undefined at {j}"));
                    continue;
                }
            };
            if !new.contains(&sj) {
                out.push(format!("member {k} sends new point {j} outside the new domain"));
                continue;
            }
            let lhs = sigma.at(stronger.h[&j], w.bound);
            if lhs != Ev::Val(stronger.h[&sj]) {
                out.push(format!("member {k} does not commute with h at {j}"));
            }
        }
    }
    out
}

/// A condition together with cached data for its family.
pub struct Tower {
    pub cond: TowerCondition,
    window: Window,
    ctx: SContext,
}

impl Tower {
    pub fn new(cond: TowerCondition, w: &Window) -> Result<Self> {
        let ctx = SContext::new(&cond.s, w)?;
        Ok(Tower {
            cond,
            window: *w,
            ctx,
        })
    }

    /// Adds `π` to `S`, closing `dom(h)` under the new family by the identity.
    pub fn add_member(&mut self, pi: PermExpr) -> Result<Vec<u64>> {
        let mut s = self.cond.s.clone();
        s.push(pi);
        let ctx = SContext::new(&s, &self.window)?;
        let mut closed = BTreeSet::new();
        let mut seen = BTreeSet::new();
        for &x in self.cond.h.keys() {
            let c = ctx.part.class_of(x).unwrap();
            if !seen.insert(c) {
                continue;
            }
            let class = ctx.part.class(c);
            if !class.complete {
                return Err(Error::IncompleteClass { point: x });
            }
            for &y in &class.points {
                if !self.cond.h.contains_key(&y) {
                    closed.insert(y);
                }
            }
        }
        for &y in &closed {
            self.cond.h.insert(y, y);
        }
        self.cond.s = s;
        self.ctx = ctx;
        Ok(closed.into_iter().collect())
    }

    /// Puts `n` into `dom(h)` by the identity on its class.
    pub fn extend_point(&mut self, n: u64) -> Result<Justification> {
        if self.cond.in_domain(n) {
            return Ok(Justification::AlreadyInDomain);
        }
        if self.ctx.infinite.contains(&n) {
            return Err(Error::InInfinitePart { point: n });
        }
        let c = self
            .ctx
            .part
            .class_of(n)
            .ok_or(Error::IncompleteClass { point: n })?;
        if !self.ctx.usable(c, &self.window) {
            return Err(Error::IncompleteClass { point: n });
        }
        let class = self.ctx.part.class(c);
        if class.points.iter().any(|x| self.cond.in_domain(*x)) {
            return Err(Error::BlockNotInvariant { point: n });
        }
        for &x in &class.points {
            self.cond.h.insert(x, x);
        }
        Ok(Justification::IdentityOnClass {
            class_min: class.min(),
            size: class.len(),
        })
    }

    fn free_class(&self, i: usize) -> bool {
        self.ctx.usable(i, &self.window)
            && self
                .ctx
                .part
                .class(i)
                .points
                .iter()
                .all(|x| !self.cond.in_domain(*x) && !self.ctx.infinite.contains(x))
    }

    /// Meets the requirement that `h` differs from `π` at some `j >= k`.
    pub fn extend_diagonal(&mut self, pi: &PermExpr, k: u64) -> Result<Justification> {
        let n = self.ctx.part.classes().len();
        let start = self.ctx.part.classes().partition_point(|c| c.min() <= k);
        let mut pair = None;
        'outer: for a in start..n {
            if !self.free_class(a) {
                continue;
            }
            let ta = self.ctx.canonical(a);
            if ta.is_none() {
                continue;
            }
            for b in a + 1..n {
                if self.free_class(b)
                    && self.ctx.part.class(b).len() == self.ctx.part.class(a).len()
                    && self.ctx.canonical(b) == ta
                {
                    pair = Some((a, b));
                    break 'outer;
                }
            }
        }
        let (a, b) = pair.ok_or(Error::NoSuitableClassPair { k })?;
        let pa = self.ctx.part.class(a).points.clone();
        let pb = self.ctx.part.class(b).points.clone();
        let phi = s_isomorphic_maps(&pa, &pb, &self.ctx.tabs)
            .ok_or(Error::ClassesNotIsomorphic { first: a, second: b })?;
        let disagree = pa
            .iter()
            .copied()
            .find(|&x| pi.at(x, u64::MAX) != Ev::Val(phi[&x]));
        match disagree {
            None => {
                for &x in &pa {
                    self.cond.h.insert(x, x);
                }
                Ok(Justification::DiagonalIdentity {
                    a_min: pa[0],
                    b_min: pb[0],
                    witness: pa[0],
                })
            }
            Some(j) => {
                for (&x, &y) in &phi {
                    self.cond.h.insert(x, y);
                    self.cond.h.insert(y, x);
                }
                Ok(Justification::DiagonalSwap {
                    a_min: pa[0],
                    b_min: pb[0],
                    witness: j,
                })
            }
        }
    }
}

/// Extends `c` so that `n ∈ dom(h)`.
pub fn tower_extend_point(c: &TowerCondition, n: u64, w: &Window) -> Result<TowerCondition> {
    let mut t = Tower::new(c.clone(), w)?;
    t.extend_point(n)?;
    Ok(t.cond)
}

/// Extends `c` so that `h(j) ≠ π(j)` for some `j >= k`; returns the witness.
pub fn tower_extend_diagonal(
    c: &TowerCondition,
    pi: &PermExpr,
    k: u64,
    w: &Window,
) -> Result<(TowerCondition, u64)> {
    let mut t = Tower::new(c.clone(), w)?;
    let j = match t.extend_diagonal(pi, k)? {
        Justification::DiagonalIdentity { witness, .. } | Justification::DiagonalSwap { witness, .. } => witness,
        _ => unreachable!(),
    };
    Ok((t.cond, j))
}

/// Result of a scheduled run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TowerRun {
    pub pi_g: PermExpr,
    pub condition: TowerCondition,
    pub audit: Vec<AuditRecord>,
    /// For each scheduled member, `dom(h)` right after it joined `S`.
    pub audited: Vec<Vec<u64>>,
    /// Order-clause violations found between consecutive conditions.
    pub violations: Vec<String>,
}

impl TowerRun {
    /// The audit log as JSON lines.
    pub fn audit_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.audit {
            out.push_str(&serde_json::to_string(r).unwrap());
            out.push('\n');
        }
        out
    }

    /// `NC(π_G, π) ⊆ audited set` for member `i`.
    pub fn nc_within_audit(&self, i: usize, w: &Window) -> (bool, Vec<u64>) {
        let pi = &self.condition.s[i];
        let nc = nc_set(&self.pi_g, pi, w);
        let allowed: BTreeSet<u64> = self.audited[i].iter().copied().collect();
        let outside: Vec<u64> = nc.points.into_iter().filter(|p| !allowed.contains(p)).collect();
        (outside.is_empty() && nc.certified, outside)
    }

    /// Diagonal witnesses with `j >= k` and `π_G(j) ≠ π(j)`.
    pub fn diagonal_witnesses(&self, diag: &[(PermExpr, u64)], w: &Window) -> Vec<Option<u64>> {
        let mut out = vec![None; diag.len()];
        for r in &self.audit {
            if let Requirement::Diagonal { index, k } = r.requirement {
                if let Justification::DiagonalIdentity { witness, .. } | Justification::DiagonalSwap { witness, .. } =
                    r.justification
                {
                    let ok = witness >= k
                        && self.pi_g.at(witness, w.bound) != diag[index].0.at(witness, w.bound);
                    if ok {
                        out[index] = Some(witness);
                    }
                }
            }
        }
        out
    }
}

/// Meets the scheduled requirements round-robin: one member, one point and
/// one diagonal requirement per round, until all lists are used up.
pub fn tower_run(
    members: &[PermExpr],
    points: &[u64],
    diag: &[(PermExpr, u64)],
    w: &Window,
) -> Result<TowerRun> {
    let mut tower = Tower::new(TowerCondition::default(), w)?;
    let mut audit = Vec::new();
    let mut audited = vec![Vec::new(); members.len()];
    let mut violations = Vec::new();
    let rounds = members.len().max(points.len()).max(diag.len());
    let mut step = 0;
    for r in 0..rounds {
        let mut reqs = Vec::new();
        if r < members.len() {
            reqs.push(Requirement::Member { index: r });
        }
        if r < points.len() {
            reqs.push(Requirement::Point { n: points[r] });
        }
        if r < diag.len() {
            reqs.push(Requirement::Diagonal { index: r, k: diag[r].1 });
        }
        for req in reqs {
            let before = tower.cond.clone();
            let outcome = match &req {
                Requirement::Member { index } => {
                    let r = tower
                        .add_member(members[*index].clone())
                        .map(|closed| Justification::MemberJoined { closed });
                    audited[*index] = tower.cond.h.keys().copied().collect();
                    r
                }
                Requirement::Point { n } => match tower.extend_point(*n) {
                    Err(Error::InInfinitePart { .. }) => Ok(Justification::InInfinitePart),
                    other => other,
                },
                Requirement::Diagonal { index, k } => tower.extend_diagonal(&diag[*index].0, *k),
            };
            let justification = outcome.unwrap_or_else(|e| Justification::Failed { error: e.to_string() });
            for v in order_violations(&tower.cond, &before, w) {
                violations.push(format!("step {step}: {v}"));
            }
            audit.push(AuditRecord {
                step,
                requirement: req,
                justification,
                added: tower.cond.h.len() - before.h.len(),
            });
            step += 1;
        }
    }
    Ok(TowerRun {
        pi_g: tower.cond.as_perm()?,
        condition: tower.cond,
        audit,
        audited,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::BlockSequence;
    use crate::perm::{compose, LocalRule, SwapRule};

    fn pair_swaps() -> PermExpr {
        PermExpr::SwapRule {
            rule: SwapRule::Adjacent { start: 0 },
        }
    }

    fn xor_family() -> Vec<PermExpr> {
        let b = BlockSequence::arithmetic(0, 8).unwrap();
        [1u64, 2, 4]
            .iter()
            .map(|&mask| PermExpr::block_local(b.clone(), LocalRule::Xor { mask }))
            .collect()
    }

    #[test]
    fn extend_point_examples() {
        let w = Window::new(64, 8).unwrap();
        let c = tower_extend_point(&TowerCondition::default(), 5, &w).unwrap();
        assert_eq!(c.h, BTreeMap::from([(5, 5)]));
        let c = tower_extend_point(&TowerCondition::new(vec![pair_swaps()]), 4, &w).unwrap();
        assert_eq!(c.h, BTreeMap::from([(4, 4), (5, 5)]));
        assert_eq!(tower_extend_point(&c, 5, &w).unwrap(), c);
    }

    #[test]
    fn infinite_part_blocks_extension() {
        let w = Window::new(64, 8).unwrap();
        let c = TowerCondition::new(vec![PermExpr::shift(crate::sets::SetExpr::evens(), 1)]);
        assert_eq!(
            tower_extend_point(&c, 4, &w),
            Err(Error::InInfinitePart { point: 4 })
        );
    }

    #[test]
    fn diagonal_against_identity_swaps() {
        let w = Window::new(64, 8).unwrap();
        let c = TowerCondition::new(vec![pair_swaps()]);
        let (c2, j) = tower_extend_diagonal(&c, &PermExpr::Identity, 3, &w).unwrap();
        // Classes {4,5} and {6,7} swapped in order.
        assert_eq!(c2.h, BTreeMap::from([(4, 6), (5, 7), (6, 4), (7, 5)]));
        assert!(j >= 3 && c2.h[&j] != j);
        assert!(order_violations(&c2, &c, &w).is_empty());
    }

    #[test]
    fn diagonal_dichotomy_takes_identity_branch() {
        let w = Window::new(64, 8).unwrap();
        let c = TowerCondition::new(vec![pair_swaps()]);
        let swap = PermExpr::swap([(4, 6), (5, 7)]).unwrap();
        let (c2, j) = tower_extend_diagonal(&c, &swap, 3, &w).unwrap();
        assert_eq!(c2.h, BTreeMap::from([(4, 4), (5, 5)]));
        assert_eq!(j, 4);
        assert_ne!(c2.h[&j], swap.at(j, 64).val().unwrap());
    }

    #[test]
    fn diagonal_beyond_window_fails() {
        let w = Window::new(64, 8).unwrap();
        let c = TowerCondition::new(vec![pair_swaps()]);
        assert_eq!(
            tower_extend_diagonal(&c, &PermExpr::Identity, 100, &w),
            Err(Error::NoSuitableClassPair { k: 100 })
        );
    }

    #[test]
    fn empty_run_is_identity() {
        let w = Window::new(64, 8).unwrap();
        let run = tower_run(&[], &[], &[], &w).unwrap();
        assert_eq!(run.pi_g, PermExpr::finite(FiniteMap::default()));
        assert!(run.audit.is_empty());
    }

    #[test]
    fn single_diagonal_run() {
        let w = Window::new(64, 8).unwrap();
        let diag = vec![(PermExpr::Identity, 0)];
        let run = tower_run(&[], &[], &diag, &w).unwrap();
        let wit = run.diagonal_witnesses(&diag, &w);
        assert!(wit[0].is_some());
    }

    #[test]
    fn full_run_over_xor_family() {
        let w = Window::new(1024, 64).unwrap();
        let fam = xor_family();
        let points: Vec<u64> = (0..200).collect();
        let diag: Vec<(PermExpr, u64)> = (0..6)
            .map(|i| (fam[i % 3].clone(), 10 * i as u64))
            .collect();
        let run = tower_run(&fam, &points, &diag, &w).unwrap();
        assert!(run.violations.is_empty(), "{:?}", run.violations);
        // π_G is an involution.
        let sq = compose(&run.pi_g, &run.pi_g);
        for n in 0..w.bound {
            assert_eq!(sq.at(n, w.bound), Ev::Val(n));
        }
        for i in 0..fam.len() {
            let (ok, outside) = run.nc_within_audit(i, &w);
            assert!(ok, "member {i}: {outside:?}");
        }
        assert!(run.diagonal_witnesses(&diag, &w).iter().all(Option::is_some));
        for n in 0..200 {
            assert!(run.condition.in_domain(n));
        }
        assert_eq!(run.audit_jsonl().lines().count(), run.audit.len());
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(16))]

        #[test]
        fn random_schedules_respect_the_order(
            masks in proptest::collection::vec(proptest::sample::select(vec![1u64, 2, 3, 4, 5, 6, 7]), 0..4),
            points in proptest::collection::vec(0u64..300, 0..40),
            diag in proptest::collection::vec((0usize..4, 0u64..200), 0..5),
        ) {
            let w = Window::new(512, 32).unwrap();
            let b = BlockSequence::arithmetic(0, 8).unwrap();
            let fam: Vec<PermExpr> = masks
                .iter()
                .map(|&mask| PermExpr::block_local(b.clone(), LocalRule::Xor { mask }))
                .collect();
            let diag: Vec<(PermExpr, u64)> = diag
                .into_iter()
                .map(|(i, k)| (fam.get(i).cloned().unwrap_or(PermExpr::Identity), k))
                .collect();
            let run = tower_run(&fam, &points, &diag, &w).unwrap();
            proptest::prop_assert!(run.violations.is_empty(), "{:?}", run.violations);
            let sq = compose(&run.pi_g, &run.pi_g);
            for n in 0..w.bound {
                proptest::prop_assert_eq!(sq.at(n, w.bound), Ev::Val(n));
            }
            for i in 0..fam.len() {
                proptest::prop_assert!(run.nc_within_audit(i, &w).0);
            }
        }
    }
}
