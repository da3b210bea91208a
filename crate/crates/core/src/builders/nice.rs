//! Nice families of involutions and the `(f, m, ε)` conditions built over them.
//!
//! Everything here works on a fixed window. `Ω_m` is the orbit partition of the
//! first `m` members, its classes indexed by their least element. A class is
//! usable when it is complete and lies below the window interior; the usable
//! classes form a prefix of the index order and every check stays inside it.

use std::collections::{BTreeMap, HashMap};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orbit::{class_type_maps, ClassType, OrbitPartition};
use crate::perm::{Ev, FiniteMap, PermExpr, PointMap, TabulatedPerm, Window};

/// A family of involutions on a window.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NiceFamily {
    pub members: Vec<PermExpr>,
    pub window: Window,
}

/// `|π(x) - x| / x` as an exact fraction; `den == 0` means unbounded.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Defect {
    pub num: u64,
    pub den: u64,
}

impl Defect {
    pub const ZERO: Defect = Defect { num: 0, den: 1 };
    pub const UNBOUNDED: Defect = Defect { num: 1, den: 0 };

    pub fn of(x: u64, y: u64) -> Defect {
        if x == 0 {
            if y == 0 {
                Defect::ZERO
            } else {
                Defect::UNBOUNDED
            }
        } else {
            Defect { num: x.abs_diff(y), den: x }
        }
    }

    pub fn is_unbounded(&self) -> bool {
        self.den == 0
    }

    pub fn less_than(&self, other: &Defect) -> bool {
        match (self.is_unbounded(), other.is_unbounded()) {
            (_, true) => !self.is_unbounded(),
            (true, false) => false,
            _ => (self.num as u128) * (other.den as u128) < (other.num as u128) * (self.den as u128),
        }
    }

    pub fn max(self, other: Defect) -> Defect {
        if self.less_than(&other) {
            other
        } else {
            self
        }
    }

    pub fn to_rational(&self) -> Option<BigRational> {
        (!self.is_unbounded()).then(|| ratio(self.num, self.den))
    }

    pub fn to_f64(&self) -> f64 {
        if self.is_unbounded() {
            f64::INFINITY
        } else {
            self.num as f64 / self.den as f64
        }
    }
}

impl std::fmt::Display for Defect {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_unbounded() {
            write!(f, "inf")
        } else {
            write!(f, "{}", ratio(self.num, self.den))
        }
    }
}

/// `n / d` as an exact rational.
pub fn ratio(n: u64, d: u64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Parses `"a/b"` or `"a"` into a rational.
pub fn parse_rational(s: &str) -> Result<BigRational> {
    let bad = || Error::Schema(format!("not a rational: {s}"));
    let s = s.trim();
    match s.split_once('/') {
        Some((a, b)) => {
            let a: BigInt = a.trim().parse().map_err(|_| bad())?;
            let b: BigInt = b.trim().parse().map_err(|_| bad())?;
            if b.is_zero() {
                return Err(bad());
            }
            Ok(BigRational::new(a, b))
        }
        None => Ok(BigRational::from_integer(s.parse().map_err(|_| bad())?)),
    }
}

fn pow(r: &BigRational, e: usize) -> BigRational {
    num_traits::pow(r.clone(), e)
}

/// `1 + 2^m (1 - (1 + e)^{-m})`.
pub fn growth_factor(m: usize, e: &BigRational) -> BigRational {
    let one = BigRational::one();
    let q = pow(&(&one + e), m);
    let two_m = BigRational::from_integer(BigInt::one() << m);
    &one + two_m * (&one - q.recip())
}

/// Left side of the ratio budget: `growth_factor(m, δ)^power · (1 + δ)^m`.
pub fn budget_lhs(m: usize, delta: &BigRational, power: usize) -> BigRational {
    pow(&growth_factor(m, delta), power) * pow(&(BigRational::one() + delta), m)
}

/// The budget inequality `budget_lhs(m, δ, 1) < 1 + ε`.
pub fn budget_holds(m: usize, delta: &Defect, eps: &BigRational) -> bool {
    match delta.to_rational() {
        None => false,
        Some(d) => budget_lhs(m, &d, 1) < BigRational::one() + eps,
    }
}

/// Partition data for the first `m` members.
pub struct Stage {
    pub m: usize,
    pub part: OrbitPartition,
    /// Classes with index below this are complete and inside the interior.
    pub usable_end: usize,
    /// Least index from which all usable classes are isomorphic (`K_m + 1`).
    pub stable_from: usize,
    /// Least index above every class holding a non-commutation point of two
    /// of the first `m` members.
    pub nc_until: usize,
    literal: Vec<u32>,
    canon: Vec<u32>,
    labels: Vec<Vec<u32>>,
    defect: Vec<Defect>,
    suffix: Vec<Defect>,
}

impl Stage {
    fn new(tabs: &[TabulatedPerm], w: &Window) -> Stage {
        let m = tabs.len();
        let part = OrbitPartition::from_maps(tabs, w);
        let n = part.classes().len();
        let usable_end = part
            .classes()
            .iter()
            .position(|c| !c.complete || *c.points.last().unwrap() >= w.interior())
            .unwrap_or(n);
        let mut lit_ids: HashMap<ClassType, u32> = HashMap::new();
        let mut can_ids: HashMap<ClassType, u32> = HashMap::new();
        let mut literal = Vec::with_capacity(usable_end);
        let mut canon = Vec::with_capacity(usable_end);
        let mut labels = Vec::with_capacity(usable_end);
        let mut defect = Vec::with_capacity(usable_end);
        for i in 0..usable_end {
            let pts = &part.class(i).points;
            let t = class_type_maps(tabs, pts).expect("usable classes are complete");
            let (ctab, lab) = t.canonical_labeling().expect("classes are connected");
            let next = lit_ids.len() as u32;
            literal.push(*lit_ids.entry(t.clone()).or_insert(next));
            let next = can_ids.len() as u32;
            let ct = ClassType {
                size: t.size,
                actions: ctab,
            };
            canon.push(*can_ids.entry(ct).or_insert(next));
            labels.push(lab);
            let mut d = Defect::ZERO;
            for &x in pts {
                for tab in tabs {
                    let y = tab.get(x).expect("usable classes are complete");
                    d = d.max(Defect::of(x, y));
                }
            }
            defect.push(d);
        }
        let mut suffix = vec![Defect::ZERO; usable_end + 1];
        for i in (0..usable_end).rev() {
            suffix[i] = suffix[i + 1].max(defect[i]);
        }
        let mut stable_from = usable_end;
        while stable_from > 0 && canon[stable_from - 1] == canon[usable_end - 1] {
            stable_from -= 1;
        }
        let mut nc_until = 0;
        for x in 0..w.interior() {
            let mut bad = false;
            'pairs: for a in 0..m {
                for b in a + 1..m {
                    let ab = tabs[b].get(x).and_then(|y| tabs[a].get(y));
                    let ba = tabs[a].get(x).and_then(|y| tabs[b].get(y));
                    if let (Some(p), Some(q)) = (ab, ba) {
                        if p != q {
                            bad = true;
                            break 'pairs;
                        }
                    }
                }
            }
            if bad {
                nc_until = nc_until.max(part.class_of(x).unwrap() + 1);
            }
        }
        Stage {
            m,
            part,
            usable_end,
            stable_from,
            nc_until,
            literal,
            canon,
            labels,
            defect,
            suffix,
        }
    }

    pub fn class(&self, i: usize) -> &[u64] {
        &self.part.class(i).points
    }

    pub fn class_min(&self, i: usize) -> u64 {
        self.part.class(i).min()
    }

    pub fn class_max(&self, i: usize) -> u64 {
        *self.part.class(i).points.last().unwrap()
    }

    /// Largest defect of the first `m` members on class `i`.
    pub fn defect(&self, i: usize) -> Defect {
        self.defect[i]
    }

    /// `δ` for a domain covering the classes below `i`.
    pub fn delta_from(&self, i: usize) -> Defect {
        self.suffix[i.min(self.usable_end)]
    }

    pub fn isomorphic(&self, a: usize, b: usize) -> bool {
        a < self.usable_end && b < self.usable_end && self.canon[a] == self.canon[b]
    }

    /// An isomorphism from class `a` onto class `b`: `Δ` when the relabeled
    /// actions agree, otherwise the one through canonical labelings. The
    /// second choice is coherent: `pair_map(b, c) ∘ pair_map(a, b) = pair_map(a, c)`.
    pub fn pair_map(&self, a: usize, b: usize) -> Result<Vec<(u64, u64)>> {
        if !self.isomorphic(a, b) {
            return Err(Error::ClassesNotIsomorphic { first: a, second: b });
        }
        let pa = self.class(a);
        let pb = self.class(b);
        if self.literal[a] == self.literal[b] {
            return Ok(pa.iter().copied().zip(pb.iter().copied()).collect());
        }
        let mut inv_b = vec![0usize; pb.len()];
        for (i, &l) in self.labels[b].iter().enumerate() {
            inv_b[l as usize] = i;
        }
        Ok(pa
            .iter()
            .enumerate()
            .map(|(i, &x)| (x, pb[inv_b[self.labels[a][i] as usize]]))
            .collect())
    }
}

/// Tabulated members and one [`Stage`] per prefix length.
pub struct NiceContext {
    pub window: Window,
    tabs: Vec<TabulatedPerm>,
    stages: Vec<Stage>,
}

impl NiceContext {
    pub fn new(fam: &NiceFamily) -> Result<Self> {
        let w = fam.window;
        let tabs = fam
            .members
            .iter()
            .map(|p| TabulatedPerm::new(p, &w))
            .collect::<Result<Vec<_>>>()?;
        let stages = (0..=tabs.len()).map(|m| Stage::new(&tabs[..m], &w)).collect();
        Ok(NiceContext {
            window: w,
            tabs,
            stages,
        })
    }

    /// Number of members.
    pub fn len(&self) -> usize {
        self.tabs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tabs.is_empty()
    }

    pub fn stage(&self, m: usize) -> &Stage {
        &self.stages[m]
    }

    pub fn member(&self, k: usize) -> &TabulatedPerm {
        &self.tabs[k]
    }

    /// Whether `frag` commutes with the first `m` members on its domain.
    pub fn equivariant(&self, m: usize, frag: &BTreeMap<u64, u64>) -> Option<u64> {
        for (&x, &y) in frag {
            for t in &self.tabs[..m] {
                let lhs = t.get(y);
                let rhs = t.get(x).and_then(|z| frag.get(&z).copied());
                if lhs.is_none() || lhs != rhs {
                    return Some(x);
                }
            }
        }
        None
    }
}

/// A condition `(f, m, ε)` with `dom(f)` the union of the first `i_p` classes of `Ω_m`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NiceCondition {
    pub f: BTreeMap<u64, u64>,
    pub m: usize,
    pub epsilon: BigRational,
    pub i_p: usize,
}

/// The smallest distance of `f(x)/x` from `1 ± ε` over the points checked.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Margin {
    pub points: usize,
    pub min: f64,
}

impl Margin {
    pub fn none() -> Self {
        Margin {
            points: 0,
            min: f64::INFINITY,
        }
    }

    fn merge(&mut self, o: Margin) {
        self.points += o.points;
        self.min = self.min.min(o.min);
    }
}

/// Checks `1 - ε < y/x < 1 + ε` exactly for every pair.
pub fn ratio_margin(pairs: &[(u64, u64)], eps: &BigRational) -> Result<Margin> {
    let num = eps.numer();
    let den = eps.denom();
    let ef = eps.to_f64().unwrap_or(0.0);
    let mut out = Margin::none();
    for &(x, y) in pairs {
        let ok = x > 0 && BigInt::from(x.abs_diff(y)) * den < BigInt::from(x) * num;
        if !ok {
            return Err(Error::A4Violated { point: x });
        }
        out.points += 1;
        out.min = out.min.min(ef - x.abs_diff(y) as f64 / x as f64);
    }
    Ok(out)
}

impl NiceCondition {
    /// A condition with the given `f`; `dom(f)` must be a prefix union of classes.
    pub fn new(f: BTreeMap<u64, u64>, m: usize, epsilon: BigRational, ctx: &NiceContext) -> Result<Self> {
        if m > ctx.len() {
            return Err(Error::Precondition(format!("m = {m} exceeds the family length {}", ctx.len())));
        }
        let i_p = prefix_classes(ctx.stage(m), &f)
            .ok_or_else(|| Error::Precondition("dom(f) is not an initial union of classes".into()))?;
        Ok(NiceCondition { f, m, epsilon, i_p })
    }

    /// The empty condition.
    pub fn empty(m: usize, epsilon: BigRational) -> Self {
        NiceCondition {
            f: BTreeMap::new(),
            m,
            epsilon,
            i_p: 0,
        }
    }

    pub fn in_domain(&self, x: u64) -> bool {
        self.f.contains_key(&x)
    }

    pub fn as_perm(&self) -> Result<PermExpr> {
        Ok(PermExpr::finite(FiniteMap::new(self.f.iter().map(|(&a, &b)| (a, b)))?))
    }

    /// Least point outside `dom(f)`.
    pub fn least_outside(&self) -> u64 {
        let mut u = 0;
        for &x in self.f.keys() {
            if x != u {
                break;
            }
            u += 1;
        }
        u
    }

    fn add(&mut self, pairs: &[(u64, u64)]) {
        for &(x, y) in pairs {
            self.f.insert(x, y);
            self.f.insert(y, x);
        }
    }

    /// Pairs classes `i_p` and `i_p + 1`.
    fn pair_next(&mut self, ctx: &NiceContext) -> Result<Margin> {
        self.pair_next_points(ctx).map(|r| r.0)
    }

    /// [`Self::pair_next`], also returning the points added.
    fn pair_next_points(&mut self, ctx: &NiceContext) -> Result<(Margin, Vec<u64>)> {
        let st = ctx.stage(self.m);
        let (a, b) = (self.i_p, self.i_p + 1);
        if b >= st.usable_end {
            return Err(Error::WindowExhausted(format!(
                "class {b} of the {}-member partition is not usable",
                self.m
            )));
        }
        let phi = st.pair_map(a, b)?;
        let back: Vec<(u64, u64)> = phi.iter().map(|&(x, y)| (y, x)).collect();
        let mut margin = ratio_margin(&phi, &self.epsilon)?;
        margin.merge(ratio_margin(&back, &self.epsilon)?);
        self.add(&phi);
        self.i_p += 2;
        let pts = phi.iter().flat_map(|&(x, y)| [x, y]).collect();
        Ok((margin, pts))
    }
}

/// Number of leading classes whose union is exactly `dom(f)`.
fn prefix_classes(st: &Stage, f: &BTreeMap<u64, u64>) -> Option<usize> {
    let mut covered = 0usize;
    let mut i = 0;
    while covered < f.len() {
        if i >= st.part.classes().len() {
            return None;
        }
        for x in st.class(i) {
            if !f.contains_key(x) {
                return None;
            }
        }
        covered += st.class(i).len();
        i += 1;
    }
    (covered == f.len()).then_some(i)
}

/// Everything wrong with `c` as a condition over `ctx`.
pub fn nice_violations(c: &NiceCondition, ctx: &NiceContext) -> Vec<String> {
    let mut out = Vec::new();
    if c.m > ctx.len() {
        out.push(format!("m = {} exceeds the family length", c.m));
        return out;
    }
    if !c.epsilon.is_positive() {
        out.push("epsilon is not positive".into());
    }
    for (&x, &y) in &c.f {
        if c.f.get(&y) != Some(&x) {
            out.push(format!("f is not an involution at {x}"));
            break;
        }
    }
    let st = ctx.stage(c.m);
    match prefix_classes(st, &c.f) {
        Some(i) if i == c.i_p => {}
        Some(i) => out.push(format!("dom(f) covers {i} classes, recorded {}", c.i_p)),
        None => out.push("dom(f) is not an initial union of classes".into()),
    }
    if c.i_p > st.usable_end {
        out.push("dom(f) runs past the usable classes".into());
        return out;
    }
    if c.i_p < st.stable_from {
        out.push(format!(
            "classes from {} on are not all isomorphic (stable from {})",
            c.i_p, st.stable_from
        ));
    }
    if c.i_p < st.nc_until {
        out.push(format!("members fail to commute outside dom(f) below class {}", st.nc_until));
    }
    if !budget_holds(c.m, &st.delta_from(c.i_p), &c.epsilon) {
        out.push(format!("ratio budget fails with delta = {}", st.delta_from(c.i_p)));
    }
    out
}

/// Everything wrong with `p ≤ q`.
pub fn nice_order_violations(p: &NiceCondition, q: &NiceCondition, ctx: &NiceContext) -> Vec<String> {
    let mut out = Vec::new();
    if p.epsilon > q.epsilon {
        out.push("epsilon grew".into());
    }
    if p.m < q.m {
        out.push("m shrank".into());
    }
    for (x, y) in &q.f {
        if p.f.get(x) != Some(y) {
            out.push(format!("f changed at {x}"));
            return out;
        }
    }
    // New pairs are classes of the weaker condition's partition: a parameter
    // change first absorbs pairs under the old `m`.
    let st = ctx.stage(q.m.min(ctx.len()));
    let new: BTreeMap<u64, u64> = p
        .f
        .iter()
        .filter(|(x, _)| !q.f.contains_key(x))
        .map(|(&x, &y)| (x, y))
        .collect();
    for &x in new.keys() {
        let c = st.part.class_of(x);
        let cy = st.part.class_of(new[&x]);
        if c.is_none() || c == cy {
            out.push(format!("new point {x} is not swapped with another class"));
            break;
        }
    }
    if let Some(x) = ctx.equivariant(q.m, &new) {
        out.push(format!("new part does not commute with the members at {x}"));
    }
    let pairs: Vec<(u64, u64)> = new.into_iter().collect();
    if let Err(e) = ratio_margin(&pairs, &q.epsilon) {
        out.push(e.to_string());
    }
    out
}

/// Extends `c` until `u ∈ dom(f)` by pairing consecutive classes.
pub fn nice_extend_point(c: &NiceCondition, ctx: &NiceContext, u: u64) -> Result<(NiceCondition, Margin)> {
    let mut out = c.clone();
    let mut margin = Margin::none();
    while !out.in_domain(u) {
        margin.merge(out.pair_next(ctx)?);
    }
    Ok((out, margin))
}

/// Record of a parameter change.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamsLog {
    pub absorbed: usize,
    pub margin: Margin,
}

/// Absorbs class pairs until the conditions hold for `(m', ε')`, then switches.
pub fn nice_extend_params(
    c: &NiceCondition,
    ctx: &NiceContext,
    eps: &BigRational,
    m: usize,
) -> Result<(NiceCondition, ParamsLog)> {
    if !eps.is_positive() {
        return Err(Error::Precondition("epsilon must be positive".into()));
    }
    if m < c.m {
        return Err(Error::Precondition(format!("m cannot shrink from {} to {m}", c.m)));
    }
    if m > ctx.len() {
        return Err(Error::Precondition(format!("m = {m} exceeds the family length {}", ctx.len())));
    }
    let target = ctx.stage(m);
    let new_eps = if *eps < c.epsilon { eps.clone() } else { c.epsilon.clone() };
    let mut cur = c.clone();
    let mut covered: HashMap<usize, usize> = HashMap::new();
    let mut split = 0usize;
    let count = |x: u64, covered: &mut HashMap<usize, usize>, split: &mut usize| -> Result<()> {
        let ci = target.part.class_of(x).ok_or_else(|| Error::WindowExhausted(format!("{x} is outside the window")))?;
        let size = target.part.class(ci).len();
        let e = covered.entry(ci).or_insert(0);
        if *e == 0 && size > 1 {
            *split += 1;
        }
        *e += 1;
        if *e == size && size > 1 {
            *split -= 1;
        }
        Ok(())
    };
    for &x in cur.f.keys() {
        count(x, &mut covered, &mut split)?;
    }
    let mut log = ParamsLog {
        absorbed: 0,
        margin: Margin::none(),
    };
    // Budget failures are cached by δ, which only changes with the class count.
    let mut failed_delta = None;
    loop {
        if split == 0 {
            let i = covered.len();
            let delta = target.delta_from(i);
            if i < target.usable_end
                && i >= target.stable_from
                && i >= target.nc_until
                && failed_delta != Some(delta)
            {
                if budget_holds(m, &delta, &new_eps) {
                    cur.m = m;
                    cur.epsilon = new_eps;
                    cur.i_p = i;
                    return Ok((cur, log));
                }
                failed_delta = Some(delta);
            }
        }
        let (mg, added) = cur.pair_next_points(ctx)?;
        log.margin.merge(mg);
        log.absorbed += 1;
        for x in added {
            count(x, &mut covered, &mut split)?;
        }
    }
}

/// One dyadic segment of a ratio profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentRatio {
    pub lo: u64,
    pub hi: u64,
    pub sup: Defect,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KmEntry {
    pub m: usize,
    pub index: usize,
    pub point: Option<u64>,
    pub usable: usize,
}

/// Window-scale check of the four defining conditions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NiceCheckReport {
    pub ratio_profiles: Vec<Vec<SegmentRatio>>,
    pub ratio_ok: Vec<bool>,
    /// `(member, point)` where `π(π(x)) ≠ x`.
    pub involution_failures: Vec<(usize, u64)>,
    /// `(a, b, point)` non-commutation points in the upper half of the interior.
    pub nc_tail: Vec<(usize, usize, u64)>,
    pub km: Vec<KmEntry>,
    pub km_ok: bool,
    pub passed: bool,
}

/// Tail segments whose lower end is at least this fraction of the interior
/// must have non-increasing sup ratios.
const TAIL_FRACTION: u64 = 256;

/// Sup ratio required on the last dyadic segment.
const LAST_SEGMENT_SUP: Defect = Defect { num: 1, den: 16 };

pub fn nice_check(fam: &NiceFamily) -> Result<NiceCheckReport> {
    let ctx = NiceContext::new(fam)?;
    let top = fam.window.interior();
    let mut ratio_profiles = Vec::new();
    let mut ratio_ok = Vec::new();
    let mut involution_failures = Vec::new();
    for (k, t) in ctx.tabs.iter().enumerate() {
        let mut prof = Vec::new();
        let mut lo = 1u64;
        while lo < top {
            let hi = (lo * 2).min(top);
            let mut sup = Defect::ZERO;
            for x in lo..hi {
                sup = sup.max(t.get(x).map_or(Defect::UNBOUNDED, |y| Defect::of(x, y)));
            }
            prof.push(SegmentRatio { lo, hi, sup });
            lo = hi;
        }
        let tail: Vec<&SegmentRatio> = prof.iter().filter(|s| s.lo >= top / TAIL_FRACTION).collect();
        let ok = tail.windows(2).all(|w| !w[0].sup.less_than(&w[1].sup))
            && prof.last().map_or(true, |s| !LAST_SEGMENT_SUP.less_than(&s.sup));
        ratio_ok.push(ok);
        ratio_profiles.push(prof);
        if let Some(x) = (0..top).find(|&x| t.get(x).and_then(|y| t.get(y)) != Some(x)) {
            involution_failures.push((k, x));
        }
    }
    let mut nc_tail = Vec::new();
    for a in 0..ctx.len() {
        for b in a + 1..ctx.len() {
            let (ta, tb) = (&ctx.tabs[a], &ctx.tabs[b]);
            for x in top / 2..top {
                let ab = tb.get(x).and_then(|y| ta.get(y));
                let ba = ta.get(x).and_then(|y| tb.get(y));
                if matches!((ab, ba), (Some(p), Some(q)) if p != q) {
                    nc_tail.push((a, b, x));
                    break;
                }
            }
        }
    }
    let km: Vec<KmEntry> = (0..=ctx.len())
        .map(|m| {
            let st = ctx.stage(m);
            KmEntry {
                m,
                index: st.stable_from,
                point: (st.stable_from < st.usable_end).then(|| st.class_min(st.stable_from)),
                usable: st.usable_end,
            }
        })
        .collect();
    let km_ok = km.iter().all(|e| e.usable == 0 || e.point.map_or(false, |p| p < top / 2));
    let passed = ratio_ok.iter().all(|&b| b) && involution_failures.is_empty() && nc_tail.is_empty() && km_ok;
    Ok(NiceCheckReport {
        ratio_profiles,
        ratio_ok,
        involution_failures,
        nc_tail,
        km,
        km_ok,
        passed,
    })
}

/// One failed inequality.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cm1Violation {
    pub class: usize,
    pub inequality: String,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cm1Report {
    pub m: usize,
    pub k: usize,
    pub epsilon: BigRational,
    pub classes: (usize, usize),
    /// Number of instances checked for the span, gap, k-gap and map bounds.
    pub checked: [usize; 4],
    /// Smallest `rhs / lhs - 1` seen for each bound.
    pub min_slack: [f64; 4],
    pub violations: Vec<Cm1Violation>,
}

impl Cm1Report {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

fn lt_f64(a: &BigRational, b: &BigRational) -> (bool, f64, f64) {
    (a < b, a.to_f64().unwrap_or(f64::NAN), b.to_f64().unwrap_or(f64::NAN))
}

/// Checks the span, gap, k-gap and isomorphism-ratio bounds for classes in
/// `range` of `Ω_m`. The hypothesis is the ratio bound `|1 - π_n(x)/x| < ε`
/// for every `n < m` and every `x` in a usable class with index at least
/// `range.start`, which must itself be at least the stabilization index.
/// `ε` must be below 1: past that `(1 - ε)^m` is no lower bound.
pub fn cm1_verify(
    ctx: &NiceContext,
    m: usize,
    range: std::ops::Range<usize>,
    k: usize,
    eps: &BigRational,
) -> Result<Cm1Report> {
    if m == 0 || m > ctx.len() {
        return Err(Error::Precondition(format!("m = {m} must lie in 1..={}", ctx.len())));
    }
    if !eps.is_positive() || *eps >= BigRational::one() {
        return Err(Error::Precondition("epsilon must lie strictly between 0 and 1".into()));
    }
    let st = ctx.stage(m);
    if range.start < st.stable_from {
        return Err(Error::HypothesisFails {
            class: range.start,
            detail: format!("below the stabilization index {}", st.stable_from),
        });
    }
    for i in range.start..st.usable_end {
        let d = st.defect(i);
        if !d.to_rational().map_or(false, |d| &d < eps) {
            return Err(Error::HypothesisFails {
                class: i,
                detail: format!("ratio defect {d} is not below epsilon"),
            });
        }
    }
    let one = BigRational::one();
    let span = pow(&(&one + eps), m);
    let gap = growth_factor(m, eps);
    let gap_k = pow(&gap, k);
    let low = pow(&(&one - eps), m);
    let high = &gap_k * &span;
    let hi = range.end.min(st.usable_end);
    let mut rep = Cm1Report {
        m,
        k,
        epsilon: eps.clone(),
        classes: (range.start, hi),
        checked: [0; 4],
        min_slack: [f64::INFINITY; 4],
        violations: Vec::new(),
    };
    let int = |x: u64| BigRational::from_integer(BigInt::from(x));
    let record = |rep: &mut Cm1Report, idx: usize, class: usize, name: &str, r: (bool, f64, f64)| {
        rep.checked[idx] += 1;
        rep.min_slack[idx] = rep.min_slack[idx].min(r.2 / r.1 - 1.0);
        if !r.0 {
            rep.violations.push(Cm1Violation {
                class,
                inequality: name.into(),
                lhs: r.1,
                rhs: r.2,
            });
        }
    };
    for i in range.start..hi {
        let a = st.class_min(i);
        let fa = int(a);
        record(&mut rep, 0, i, "span", lt_f64(&(int(st.class_max(i)) / &fa), &span));
        if i + 1 < st.usable_end {
            record(&mut rep, 1, i, "gap", lt_f64(&(int(st.class_min(i + 1)) / &fa), &gap));
        }
        if i + k < st.usable_end {
            record(&mut rep, 2, i, "k-gap", lt_f64(&(int(st.class_min(i + k)) / &fa), &gap_k));
            for (x, y) in st.pair_map(i, i + k)? {
                let r = int(y) / int(x);
                let (lo_ok, lo_l, lo_r) = lt_f64(&low, &r);
                let (hi_ok, hi_l, hi_r) = lt_f64(&r, &high);
                let ok = lo_ok && hi_ok;
                let (l, rr) = if !lo_ok || (lo_r / lo_l) < (hi_r / hi_l) {
                    (lo_l, lo_r)
                } else {
                    (hi_l, hi_r)
                };
                record(&mut rep, 3, i, "map", (ok, l, rr));
            }
        }
    }
    Ok(rep)
}

/// Log of one member's construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemberLog {
    pub member: usize,
    pub window: Window,
    pub initial_classes: usize,
    pub point_steps: usize,
    pub params_steps: usize,
    pub failed_params: usize,
    pub final_m: usize,
    pub final_epsilon: BigRational,
    pub margin: Margin,
    pub violations: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NiceBuild {
    pub family: NiceFamily,
    pub logs: Vec<MemberLog>,
}

/// Starting `ε` of each member.
const START_EPS: (u64, u64) = (1, 2);
/// Smallest `ε` the schedule asks for.
const EPS_FLOOR: (u64, u64) = (1, 64);

/// Builds `count` involutions, each as the union of a run of conditions over
/// the previous members. The schedule (initial involution, pairing blocks,
/// when to shrink `ε`) is drawn from a ChaCha8 stream seeded with `seed`.
/// Each member is the identity from the first point its run did not reach;
/// the next member is built on the window ending there.
pub fn build_nice_family(seed: u64, count: usize, w: &Window) -> Result<NiceBuild> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut members = Vec::new();
    let mut logs = Vec::new();
    let mut win = *w;
    let floor = ratio(EPS_FLOOR.0, EPS_FLOOR.1);
    for k in 0..count {
        let fam = NiceFamily {
            members: members.clone(),
            window: win,
        };
        let ctx = NiceContext::new(&fam)?;
        let eps0 = ratio(START_EPS.0, START_EPS.1);
        let i0 = rng.gen_range(3..=6usize);
        let mut start = None;
        for extra in 0..2 {
            let n = i0 + extra;
            let mut pts: Vec<u64> = (0..n as u64).collect();
            pts.shuffle(&mut rng);
            let mut f = BTreeMap::new();
            let pairs = rng.gen_range(0..=n / 2);
            for p in 0..n {
                let x = pts[p];
                let y = if p < 2 * pairs { pts[p ^ 1] } else { x };
                f.insert(x, y);
            }
            let c = NiceCondition::new(f, 0, eps0.clone(), &ctx)?;
            match nice_extend_params(&c, &ctx, &eps0, k) {
                Ok((c, _)) => {
                    start = Some((n, c));
                    break;
                }
                Err(Error::WindowExhausted(_)) => continue,
                Err(e) => return Err(e),
            }
        }
        let (initial_classes, mut c) =
            start.ok_or_else(|| Error::WindowExhausted(format!("member {k} cannot reach m = {k}")))?;
        let mut log = MemberLog {
            member: k,
            window: win,
            initial_classes,
            point_steps: 0,
            params_steps: 0,
            failed_params: 0,
            final_m: k,
            final_epsilon: c.epsilon.clone(),
            margin: Margin::none(),
            violations: Vec::new(),
        };
        let mut shrinking = true;
        loop {
            if shrinking && c.epsilon > floor && rng.gen_ratio(1, 8) {
                let e = &c.epsilon * ratio(3, 4);
                match nice_extend_params(&c, &ctx, &e, c.m) {
                    Ok((next, p)) => {
                        log.violations.extend(nice_order_violations(&next, &c, &ctx));
                        log.margin.merge(p.margin);
                        log.params_steps += 1;
                        c = next;
                    }
                    Err(Error::WindowExhausted(_)) => {
                        log.failed_params += 1;
                        shrinking = false;
                    }
                    Err(e) => return Err(e),
                }
                continue;
            }
            let b = [2usize, 4, 6][rng.gen_range(0..3)];
            let st = ctx.stage(c.m);
            if c.i_p + b > st.usable_end {
                break;
            }
            let sigma = random_pairing(b, &mut rng);
            let mut pairs = Vec::new();
            for (w0, &w1) in sigma.iter().enumerate() {
                if w0 < w1 {
                    pairs.extend(st.pair_map(c.i_p + w0, c.i_p + w1)?);
                }
            }
            let both: Vec<(u64, u64)> = pairs.iter().flat_map(|&(x, y)| [(x, y), (y, x)]).collect();
            match ratio_margin(&both, &c.epsilon) {
                Ok(mg) => {
                    c.add(&pairs);
                    c.i_p += b;
                    log.margin.merge(mg);
                    log.point_steps += 1;
                }
                Err(Error::A4Violated { .. }) => match c.pair_next(&ctx) {
                    Ok(mg) => {
                        log.margin.merge(mg);
                        log.point_steps += 1;
                    }
                    Err(_) => break,
                },
                Err(e) => return Err(e),
            }
        }
        log.violations.extend(nice_violations(&c, &ctx));
        log.final_m = c.m;
        log.final_epsilon = c.epsilon.clone();
        let end = c.least_outside();
        members.push(c.as_perm()?);
        logs.push(log);
        let bound = end.min(win.bound);
        if bound <= win.margin {
            return Err(Error::WindowExhausted(format!("member {k} left no room for the next")));
        }
        win = Window::new(bound, win.margin)?;
    }
    Ok(NiceBuild {
        family: NiceFamily {
            members,
            window: win,
        },
        logs,
    })
}

/// A uniformly random fixed-point-free involution of `0..b`, `b` even.
fn random_pairing(b: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut pts: Vec<usize> = (0..b).collect();
    pts.shuffle(rng);
    let mut sigma = vec![0; b];
    for p in pts.chunks(2) {
        sigma[p[0]] = p[1];
        sigma[p[1]] = p[0];
    }
    sigma
}

/// Points `x ≥ k` with `x, π(x) ∈ dom(f)` and `π(f(x)) ≠ f(π(x))`.
pub fn disagreement_points(f: &BTreeMap<u64, u64>, pi: &PermExpr, k: u64, horizon: u64) -> Vec<u64> {
    f.range(k..)
        .filter_map(|(&x, &fx)| {
            let px = match pi.at(x, horizon) {
                Ev::Val(v) => v,
                _ => return None,
            };
            let fpx = f.get(&px)?;
            match pi.at(fx, horizon) {
                Ev::Val(v) if v != *fpx => Some(x),
                Ev::Val(_) => None,
                _ => None,
            }
        })
        .collect()
}

impl PointMap for NiceCondition {
    fn image(&self, n: u64) -> Ev {
        self.f.get(&n).map_or(Ev::Undef, |&v| Ev::Val(v))
    }
    fn preimage(&self, n: u64) -> Ev {
        self.image(n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::BlockSequence;
    use crate::perm::LocalRule;
    use proptest::prelude::*;
    use rand::Rng;

    fn xor_family(k: usize, bound: u64) -> NiceFamily {
        let b = BlockSequence::arithmetic(0, 1 << k).unwrap();
        NiceFamily {
            members: (0..k)
                .map(|i| PermExpr::block_local(b.clone(), LocalRule::Xor { mask: 1 << i }))
                .collect(),
            window: Window::new(bound, 64).unwrap(),
        }
    }

    fn identity_family(k: usize, bound: u64) -> NiceFamily {
        NiceFamily {
            members: vec![PermExpr::Identity; k],
            window: Window::new(bound, 16).unwrap(),
        }
    }

    #[test]
    fn defect_order() {
        assert!(Defect::of(4, 5).less_than(&Defect::of(2, 3)));
        assert!(Defect::of(4, 5).less_than(&Defect::UNBOUNDED));
        assert!(!Defect::UNBOUNDED.less_than(&Defect::of(1, 100)));
        assert_eq!(Defect::of(0, 0), Defect::ZERO);
        assert_eq!(Defect::of(6, 3).to_string(), "1/2");
    }

    #[test]
    fn budget_formula_by_hand() {
        // m = 1: (1 + 2(1 - 1/(1+δ)))(1+δ) = 1 + 3δ.
        let d = ratio(1, 10);
        assert_eq!(budget_lhs(1, &d, 1), ratio(13, 10));
        assert!(budget_holds(1, &Defect::of(10, 11), &ratio(31, 100)));
        assert!(!budget_holds(1, &Defect::of(10, 11), &ratio(3, 10)));
        assert!(budget_holds(0, &Defect::ZERO, &ratio(1, 1000)));
        assert!(!budget_holds(0, &Defect::UNBOUNDED, &ratio(1, 1)));
    }

    #[test]
    fn xor_stage_structure() {
        let ctx = NiceContext::new(&xor_family(3, 1024)).unwrap();
        let st = ctx.stage(3);
        assert_eq!(st.class(5), &[40, 41, 42, 43, 44, 45, 46, 47]);
        assert_eq!(st.stable_from, 0);
        assert_eq!(st.nc_until, 0);
        assert_eq!(st.usable_end, (1024 - 64) / 8);
        // Defect on class 1 is attained at 8 moved by 4.
        assert_eq!(st.defect(1), Defect::of(8, 12));
        assert_eq!(st.pair_map(1, 2).unwrap()[0], (8, 16));
    }

    #[test]
    fn pair_map_is_equivariant_for_non_order_isomorphic_classes() {
        // Block 0 reversed, block 1 swaps adjacent pairs: both are four points
        // with two transpositions but Δ is not an isomorphism.
        let tables = vec![vec![3, 2, 1, 0], vec![1, 0, 3, 2]];
        let fam = NiceFamily {
            members: vec![PermExpr::block_local(
                BlockSequence::arithmetic(0, 4).unwrap(),
                LocalRule::Tables { tables },
            )],
            window: Window::new(64, 8).unwrap(),
        };
        let ctx = NiceContext::new(&fam).unwrap();
        let st = ctx.stage(1);
        let phi: BTreeMap<u64, u64> = st.pair_map(0, 1).unwrap().into_iter().collect();
        let mut both = phi.clone();
        for (&x, &y) in &phi {
            both.insert(y, x);
        }
        assert_eq!(ctx.equivariant(1, &both), None);
        assert_ne!(phi[&0], 4);
    }

    #[test]
    fn extend_point_examples() {
        let ctx = NiceContext::new(&xor_family(1, 256)).unwrap();
        let c = NiceCondition::new((0..8).map(|x| (x, x)).collect(), 1, ratio(1, 2), &ctx).unwrap();
        assert!(nice_violations(&c, &ctx).is_empty());
        let (same, m) = nice_extend_point(&c, &ctx, 3).unwrap();
        assert_eq!(same, c);
        assert_eq!(m.points, 0);
        let (d, m) = nice_extend_point(&c, &ctx, 9).unwrap();
        assert_eq!(d.i_p, 6);
        assert_eq!(d.f[&8], 10);
        assert_eq!(d.f[&11], 9);
        assert!(m.min > 0.0);
        assert!(nice_violations(&d, &ctx).is_empty());
        assert!(nice_order_violations(&d, &c, &ctx).is_empty());
        // 10/8 is outside 1 ± 1/8.
        let tight = NiceCondition { epsilon: ratio(1, 8), ..c };
        assert_eq!(nice_extend_point(&tight, &ctx, 9), Err(Error::A4Violated { point: 8 }));
    }

    #[test]
    fn extend_params_examples() {
        let ctx = NiceContext::new(&xor_family(2, 4096)).unwrap();
        let c = NiceCondition::new((0..8).map(|x| (x, x)).collect(), 1, ratio(1, 2), &ctx).unwrap();
        let (same, log) = nice_extend_params(&c, &ctx, &ratio(1, 2), 1).unwrap();
        assert_eq!(same, c);
        assert_eq!(log.absorbed, 0);
        let (d, log) = nice_extend_params(&c, &ctx, &ratio(1, 4), 1).unwrap();
        assert!(log.absorbed > 0);
        assert_eq!(d.epsilon, ratio(1, 4));
        assert!(nice_violations(&d, &ctx).is_empty());
        assert!(nice_order_violations(&d, &c, &ctx).is_empty());
        let (e, _) = nice_extend_params(&d, &ctx, &ratio(1, 4), 2).unwrap();
        assert_eq!(e.m, 2);
        assert_eq!(e.i_p * 4, e.f.len());
        assert!(nice_violations(&e, &ctx).is_empty());
        assert!(matches!(nice_extend_params(&c, &ctx, &ratio(1, 2), 3), Err(Error::Precondition(_))));
        // Far too small for this window.
        assert!(matches!(
            nice_extend_params(&c, &ctx, &ratio(1, 100_000), 2),
            Err(Error::WindowExhausted(_))
        ));
    }

    #[test]
    fn check_examples() {
        let r = nice_check(&xor_family(3, 4096)).unwrap();
        assert!(r.passed, "{r:?}");
        assert!(r.km.iter().all(|e| e.index == 0));
        let bad = NiceFamily {
            members: vec![PermExpr::block_local(
                BlockSequence::arithmetic(0, 3).unwrap(),
                LocalRule::Rotate { shift: 1 },
            )],
            window: Window::new(300, 10).unwrap(),
        };
        let r = nice_check(&bad).unwrap();
        assert!(!r.passed);
        assert_eq!(r.involution_failures, vec![(0, 0)]);
        let empty = NiceFamily {
            members: vec![],
            window: Window::new(100, 10).unwrap(),
        };
        assert!(nice_check(&empty).unwrap().passed);
    }

    #[test]
    fn cm1_identity_family() {
        let ctx = NiceContext::new(&identity_family(2, 512)).unwrap();
        let r = cm1_verify(&ctx, 2, 2..400, 3, &ratio(1, 2)).unwrap();
        assert!(r.holds(), "{:?}", r.violations);
        assert!(r.checked.iter().all(|&c| c > 0));
        // Singletons at 1: gap 2/1 against 1 + 4(1 - 4/9) = 29/9 still holds,
        // but the gap bound fails at 1 once ε is small.
        let r = cm1_verify(&ctx, 2, 1..3, 1, &ratio(1, 100)).unwrap();
        assert!(!r.holds());
    }

    #[test]
    fn cm1_xor_family_and_hypothesis_failure() {
        let ctx = NiceContext::new(&xor_family(2, 8192)).unwrap();
        let st = ctx.stage(2);
        let lo = 10;
        let eps = st.delta_from(lo).to_rational().unwrap() * ratio(11, 10);
        let r = cm1_verify(&ctx, 2, lo..st.usable_end, 2, &eps).unwrap();
        assert!(r.holds(), "{:?}", &r.violations[..r.violations.len().min(5)]);
        assert!(matches!(
            cm1_verify(&ctx, 2, 1..10, 1, &ratio(1, 10)),
            Err(Error::HypothesisFails { class: 1, .. })
        ));
    }

    #[test]
    fn build_examples() {
        let w = Window::new(20_000, 200).unwrap();
        let b = build_nice_family(7, 0, &w).unwrap();
        assert!(b.family.members.is_empty());
        let b = build_nice_family(7, 1, &w).unwrap();
        assert_eq!(b.family.members.len(), 1);
        let b = build_nice_family(7, 3, &w).unwrap();
        for l in &b.logs {
            assert!(l.violations.is_empty(), "{l:?}");
            assert!(l.margin.min > 0.0);
        }
        let r = nice_check(&b.family).unwrap();
        assert!(r.passed, "{:?} {:?} {:?} {:?}", r.ratio_ok, r.involution_failures, r.nc_tail, r.km);
        let again = build_nice_family(7, 3, &w).unwrap();
        assert_eq!(again, b);
    }

    #[test]
    fn disagreement_examples() {
        let f: BTreeMap<u64, u64> = [(0, 1), (1, 0), (2, 3), (3, 2)].into_iter().collect();
        let swap = PermExpr::adjacent_swaps(0);
        assert!(disagreement_points(&f, &swap, 0, 100).is_empty());
        let cross = PermExpr::swap([(1, 2)]).unwrap();
        assert_eq!(disagreement_points(&f, &cross, 0, 100), vec![0, 1, 2, 3]);
        assert_eq!(disagreement_points(&f, &cross, 2, 100), vec![2, 3]);
    }

    #[test]
    fn parse_rational_forms() {
        assert_eq!(parse_rational("3/12").unwrap(), ratio(1, 4));
        assert_eq!(parse_rational("2").unwrap(), ratio(2, 1));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("x").is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn extensions_stay_valid(seed in 0u64..1000, steps in 1usize..30) {
            let ctx = NiceContext::new(&xor_family(2, 4096)).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut c = NiceCondition::new((0..4).map(|x| (x, x)).collect(), 0, ratio(1, 2), &ctx).unwrap();
            for _ in 0..steps {
                let next = if rng.gen_bool(0.5) {
                    let u = c.least_outside() + rng.gen_range(0..6);
                    nice_extend_point(&c, &ctx, u).map(|r| r.0)
                } else {
                    let e = &c.epsilon * ratio(rng.gen_range(7..=10), 10);
                    let m = (c.m + rng.gen_range(0..2)).min(2);
                    nice_extend_params(&c, &ctx, &e, m).map(|r| r.0)
                };
                match next {
                    Ok(n) => {
                        prop_assert!(nice_violations(&n, &ctx).is_empty());
                        let v = nice_order_violations(&n, &c, &ctx);
                        prop_assert!(v.is_empty(), "{:?}", v);
                        c = n;
                    }
                    Err(Error::WindowExhausted(_)) | Err(Error::A4Violated { .. }) => {}
                    Err(e) => prop_assert!(false, "{e}"),
                }
            }
        }
    }
}
