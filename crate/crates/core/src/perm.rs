//! Symbolic permutations and partial injections of the naturals.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::blocks::BlockSequence;
use crate::error::{Error, Result};
use crate::sets::SetExpr;

/// Outcome of evaluating a map at one point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ev {
    Val(u64),
    /// The map is partial and undefined here.
    Undef,
    /// A search ran past the horizon before the value was determined.
    Escape,
}

impl Ev {
    pub fn val(self) -> Option<u64> {
        match self {
            Ev::Val(v) => Some(v),
            _ => None,
        }
    }
}

/// Evaluation domain `[0, bound)`; the last `margin` points are evaluated but
/// excluded from certified answers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub bound: u64,
    #[serde(default)]
    pub margin: u64,
}

impl Window {
    pub fn new(bound: u64, margin: u64) -> Result<Self> {
        if bound <= margin {
            return Err(Error::InvalidWindow { bound, margin });
        }
        Ok(Window { bound, margin })
    }

    /// Window without a margin.
    pub fn exact(bound: u64) -> Self {
        Window { bound, margin: 0 }
    }

    /// End of the certified interior.
    pub fn interior(&self) -> u64 {
        self.bound - self.margin
    }
}

/// A finite permutation: a bijection of a finite set onto itself.
#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<(u64, u64)>", into = "Vec<(u64, u64)>")]
pub struct FiniteMap {
    fwd: Vec<(u64, u64)>,
    bwd: Vec<(u64, u64)>,
}

impl TryFrom<Vec<(u64, u64)>> for FiniteMap {
    type Error = Error;
    fn try_from(pairs: Vec<(u64, u64)>) -> Result<Self> {
        FiniteMap::new(pairs)
    }
}

impl From<FiniteMap> for Vec<(u64, u64)> {
    fn from(m: FiniteMap) -> Self {
        m.fwd
    }
}

impl FiniteMap {
    /// Builds the map, dropping fixed points; the domain and range must coincide.
    pub fn new(pairs: impl IntoIterator<Item = (u64, u64)>) -> Result<Self> {
        let mut fwd: Vec<(u64, u64)> = pairs.into_iter().filter(|(a, b)| a != b).collect();
        fwd.sort_unstable();
        if fwd.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidExpr("finite map has a repeated source".into()));
        }
        let mut bwd: Vec<(u64, u64)> = fwd.iter().map(|&(a, b)| (b, a)).collect();
        bwd.sort_unstable();
        if bwd.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidExpr("finite map is not injective".into()));
        }
        if fwd.iter().zip(&bwd).any(|(f, b)| f.0 != b.0) {
            return Err(Error::InvalidExpr("finite map range differs from its domain".into()));
        }
        Ok(FiniteMap { fwd, bwd })
    }

    /// Involution swapping each listed pair; pairs must be disjoint.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (u64, u64)>) -> Result<Self> {
        let mut all = Vec::new();
        let mut seen = BTreeSet::new();
        for (a, b) in pairs {
            if a == b {
                continue;
            }
            if !seen.insert(a) || !seen.insert(b) {
                return Err(Error::InvalidExpr(format!("swap pairs overlap at ({a},{b})")));
            }
            all.push((a, b));
            all.push((b, a));
        }
        FiniteMap::new(all)
    }

    pub fn get(&self, n: u64) -> u64 {
        match self.fwd.binary_search_by_key(&n, |p| p.0) {
            Ok(i) => self.fwd[i].1,
            Err(_) => n,
        }
    }

    pub fn get_inv(&self, n: u64) -> u64 {
        match self.bwd.binary_search_by_key(&n, |p| p.0) {
            Ok(i) => self.bwd[i].1,
            Err(_) => n,
        }
    }

    /// Moved points, ascending.
    pub fn support(&self) -> impl Iterator<Item = u64> + '_ {
        self.fwd.iter().map(|p| p.0)
    }

    pub fn pairs(&self) -> &[(u64, u64)] {
        &self.fwd
    }

    pub fn inverse(&self) -> FiniteMap {
        FiniteMap {
            fwd: self.bwd.clone(),
            bwd: self.fwd.clone(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.fwd.is_empty()
    }

    pub fn len(&self) -> usize {
        self.fwd.len()
    }
}

/// In-block action of a block-local permutation; `o` is the offset in a
/// block of length `len`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LocalRule {
    /// `o ↦ len - 1 - o`.
    Reverse,
    /// `o ↦ (o + shift) mod len`.
    Rotate { shift: i64 },
    /// `o ↦ o xor mask` when that stays inside the block, else fixed.
    Xor { mask: u64 },
    /// Block `i` uses `tables[i mod tables.len()]` when the lengths agree and
    /// is fixed otherwise.
    Tables { tables: Vec<Vec<u32>> },
}

/// Rule-generated disjoint transpositions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SwapRule {
    /// `start + 2i ↔ start + 2i + 1`.
    Adjacent { start: u64 },
    /// `n_i - 1 - t ↔ n_i + t` for `t < w_i` and every boundary `i >= 1`,
    /// where `w_i = min(width, len_{i-1} / 2, len_i / 2)`.
    BoundaryBand { blocks: BlockSequence, width: u64 },
}

/// One case of a piecewise map.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Case {
    pub set: SetExpr,
    pub perm: PermExpr,
}

/// A finitely described permutation or partial injection of the naturals.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PermExpr {
    Identity,
    /// Identity off a finite set.
    FiniteSupport { map: FiniteMap },
    BlockLocal { blocks: BlockSequence, rule: LocalRule },
    /// `x ↦` the element `exp` steps further along `carrier`; undefined off
    /// the carrier and where no such element exists.
    #[serde(rename = "succshift")]
    SuccessorShift { carrier: SetExpr, exp: i64 },
    /// Transpositions of listed disjoint pairs.
    Swap {
        #[serde(with = "pair_list")]
        pairs: FiniteMap,
    },
    SwapRule { rule: SwapRule },
    /// `left ∘ right`: apply `right` first.
    Compose { left: Box<PermExpr>, right: Box<PermExpr> },
    Inverse { inner: Box<PermExpr> },
    /// First case whose set contains the point wins; `default` otherwise.
    Piecewise { cases: Vec<Case>, default: Box<PermExpr> },
}

mod pair_list {
    use super::FiniteMap;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &FiniteMap, s: S) -> Result<S::Ok, S::Error> {
        let pairs: Vec<(u64, u64)> = m.pairs().iter().filter(|(a, b)| a < b).copied().collect();
        pairs.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<FiniteMap, D::Error> {
        let pairs = Vec::<(u64, u64)>::deserialize(d)?;
        FiniteMap::from_pairs(pairs).map_err(serde::de::Error::custom)
    }
}

fn local_apply(rule: &LocalRule, block: usize, o: u64, len: Option<u64>, inverse: bool) -> u64 {
    match rule {
        LocalRule::Reverse => match len {
            Some(l) => l - 1 - o,
            None => o,
        },
        LocalRule::Rotate { shift } => match len {
            Some(l) => {
                let s = shift.rem_euclid(l as i64) as u64;
                let s = if inverse { (l - s) % l } else { s };
                (o + s) % l
            }
            None => o,
        },
        LocalRule::Xor { mask } => {
            let x = o ^ mask;
            if len.map_or(true, |l| x < l) {
                x
            } else {
                o
            }
        }
        LocalRule::Tables { tables } => {
            if tables.is_empty() {
                return o;
            }
            let t = &tables[block % tables.len()];
            if len != Some(t.len() as u64) {
                return o;
            }
            if inverse {
                t.iter().position(|&v| v as u64 == o).unwrap() as u64
            } else {
                t[o as usize] as u64
            }
        }
    }
}

pub(crate) fn band_width(blocks: &BlockSequence, width: u64, i: usize) -> u64 {
    if i == 0 {
        return 0;
    }
    let prev = match blocks.len(i - 1) {
        Some(l) => l / 2,
        None => return 0,
    };
    let cur = blocks.len(i).map_or(u64::MAX, |l| l / 2);
    width.min(prev).min(cur)
}

fn swap_rule_apply(rule: &SwapRule, n: u64) -> u64 {
    match rule {
        SwapRule::Adjacent { start } => {
            if n < *start {
                n
            } else {
                start + ((n - start) ^ 1)
            }
        }
        SwapRule::BoundaryBand { blocks, width } => {
            let i = match blocks.block_of(n) {
                Some(i) => i,
                None => return n,
            };
            let s = blocks.start(i).unwrap();
            // Lower end of block i pairs with boundary i.
            let t = n - s;
            if t < band_width(blocks, *width, i) {
                return s - 1 - t;
            }
            if let Some(e) = blocks.end(i) {
                if blocks.has_block(i + 1) {
                    let t = e - 1 - n;
                    if t < band_width(blocks, *width, i + 1) {
                        return e + t;
                    }
                }
            }
            n
        }
    }
}

impl PermExpr {
    pub fn identity() -> Self {
        PermExpr::Identity
    }

    pub fn finite(map: FiniteMap) -> Self {
        if map.is_empty() {
            PermExpr::Identity
        } else {
            PermExpr::FiniteSupport { map }
        }
    }

    /// Transpositions of the given disjoint pairs.
    pub fn swap(pairs: impl IntoIterator<Item = (u64, u64)>) -> Result<Self> {
        Ok(PermExpr::Swap {
            pairs: FiniteMap::from_pairs(pairs)?,
        })
    }

    /// `2i ↔ 2i + 1` for all `i`, starting at `start`.
    pub fn adjacent_swaps(start: u64) -> Self {
        PermExpr::SwapRule {
            rule: SwapRule::Adjacent { start },
        }
    }

    pub fn shift(carrier: SetExpr, exp: i64) -> Self {
        PermExpr::SuccessorShift { carrier, exp }
    }

    pub fn block_local(blocks: BlockSequence, rule: LocalRule) -> Self {
        PermExpr::BlockLocal { blocks, rule }
    }

    pub fn boundary_band(blocks: BlockSequence, width: u64) -> Self {
        PermExpr::SwapRule {
            rule: SwapRule::BoundaryBand { blocks, width },
        }
    }

    pub fn piecewise(cases: Vec<(SetExpr, PermExpr)>, default: PermExpr) -> Self {
        PermExpr::Piecewise {
            cases: cases
                .into_iter()
                .map(|(set, perm)| Case { set, perm })
                .collect(),
            default: Box::new(default),
        }
    }

    /// Value at `n`; set searches give up at `horizon`.
    pub fn at(&self, n: u64, horizon: u64) -> Ev {
        match self {
            PermExpr::Identity => Ev::Val(n),
            PermExpr::FiniteSupport { map } | PermExpr::Swap { pairs: map } => Ev::Val(map.get(n)),
            PermExpr::BlockLocal { blocks, rule } => Ev::Val(block_local_at(blocks, rule, n, false)),
            PermExpr::SuccessorShift { carrier, exp } => shift_at(carrier, *exp, n, horizon),
            PermExpr::SwapRule { rule } => Ev::Val(swap_rule_apply(rule, n)),
            PermExpr::Compose { left, right } => match right.at(n, horizon) {
                Ev::Val(m) => left.at(m, horizon),
                other => other,
            },
            PermExpr::Inverse { inner } => inner.at_inv(n, horizon),
            PermExpr::Piecewise { cases, default } => {
                for c in cases {
                    if c.set.contains(n) {
                        return c.perm.at(n, horizon);
                    }
                }
                default.at(n, horizon)
            }
        }
    }

    /// Value of the inverse at `n`.
    pub fn at_inv(&self, n: u64, horizon: u64) -> Ev {
        match self {
            PermExpr::Identity => Ev::Val(n),
            PermExpr::FiniteSupport { map } => Ev::Val(map.get_inv(n)),
            PermExpr::Swap { pairs } => Ev::Val(pairs.get(n)),
            PermExpr::BlockLocal { blocks, rule } => Ev::Val(block_local_at(blocks, rule, n, true)),
            PermExpr::SuccessorShift { carrier, exp } => shift_at(carrier, -exp, n, horizon),
            PermExpr::SwapRule { rule } => Ev::Val(swap_rule_apply(rule, n)),
            PermExpr::Compose { left, right } => match left.at_inv(n, horizon) {
                Ev::Val(m) => right.at_inv(m, horizon),
                other => other,
            },
            PermExpr::Inverse { inner } => inner.at(n, horizon),
            PermExpr::Piecewise { cases, default } => {
                let mut escaped = false;
                for c in cases {
                    match c.perm.at_inv(n, horizon) {
                        Ev::Val(m) if c.set.contains(m) => return Ev::Val(m),
                        Ev::Escape => escaped = true,
                        _ => {}
                    }
                }
                match default.at_inv(n, horizon) {
                    Ev::Val(m) if !cases.iter().any(|c| c.set.contains(m)) => Ev::Val(m),
                    Ev::Escape => Ev::Escape,
                    _ if escaped => Ev::Escape,
                    _ => Ev::Undef,
                }
            }
        }
    }

    /// Whether the expression contains a shift along an infinite carrier,
    /// the only source of infinite orbits among the variants.
    pub fn has_shift(&self) -> bool {
        match self {
            PermExpr::SuccessorShift { exp, .. } => *exp != 0,
            PermExpr::Compose { left, right } => left.has_shift() || right.has_shift(),
            PermExpr::Inverse { inner } => inner.has_shift(),
            PermExpr::Piecewise { cases, default } => {
                cases.iter().any(|c| c.perm.has_shift()) || default.has_shift()
            }
            _ => false,
        }
    }

    /// Carriers of the shift components.
    pub fn shift_carriers(&self) -> Vec<SetExpr> {
        match self {
            PermExpr::SuccessorShift { carrier, exp } if *exp != 0 => vec![carrier.clone()],
            PermExpr::Compose { left, right } => {
                let mut v = left.shift_carriers();
                v.extend(right.shift_carriers());
                v
            }
            PermExpr::Inverse { inner } => inner.shift_carriers(),
            PermExpr::Piecewise { cases, default } => {
                let mut v = default.shift_carriers();
                for c in cases {
                    v.extend(c.perm.shift_carriers());
                }
                v
            }
            _ => Vec::new(),
        }
    }
}

fn block_local_at(blocks: &BlockSequence, rule: &LocalRule, n: u64, inverse: bool) -> u64 {
    match blocks.block_of(n) {
        Some(i) => {
            let s = blocks.start(i).unwrap();
            s + local_apply(rule, i, n - s, blocks.len(i), inverse)
        }
        None => n,
    }
}

fn shift_at(carrier: &SetExpr, exp: i64, n: u64, horizon: u64) -> Ev {
    if !carrier.contains(n) {
        return Ev::Undef;
    }
    let mut x = n;
    if exp >= 0 {
        for _ in 0..exp {
            if x == u64::MAX {
                return Ev::Undef;
            }
            match carrier.next_from(x + 1, horizon) {
                Some(y) => x = y,
                None if horizon == u64::MAX => return Ev::Undef,
                None => return Ev::Escape,
            }
        }
    } else {
        for _ in 0..exp.unsigned_abs() {
            match carrier.prev_before(x) {
                Some(y) => x = y,
                None => return Ev::Undef,
            }
        }
    }
    Ev::Val(x)
}

/// `p(n)` on a window.
pub fn eval(p: &PermExpr, n: u64, w: &Window) -> Result<Option<u64>> {
    match p.at(n, w.bound) {
        Ev::Val(v) if v < w.bound => Ok(Some(v)),
        Ev::Undef => Ok(None),
        _ => Err(Error::BoundaryEscape {
            point: n,
            bound: w.bound,
        }),
    }
}

/// `p ∘ q`.
pub fn compose(p: &PermExpr, q: &PermExpr) -> PermExpr {
    match (p, q) {
        (PermExpr::Identity, _) => q.clone(),
        (_, PermExpr::Identity) => p.clone(),
        _ => PermExpr::Compose {
            left: Box::new(p.clone()),
            right: Box::new(q.clone()),
        },
    }
}

/// Inverse, simplified where the inverse has a direct form.
pub fn invert(p: &PermExpr) -> PermExpr {
    match p {
        PermExpr::Identity => PermExpr::Identity,
        PermExpr::FiniteSupport { map } => PermExpr::FiniteSupport { map: map.inverse() },
        PermExpr::Swap { .. } | PermExpr::SwapRule { .. } => p.clone(),
        PermExpr::SuccessorShift { carrier, exp } => PermExpr::SuccessorShift {
            carrier: carrier.clone(),
            exp: -exp,
        },
        PermExpr::BlockLocal {
            rule: LocalRule::Reverse | LocalRule::Xor { .. },
            ..
        } => p.clone(),
        PermExpr::BlockLocal {
            blocks,
            rule: LocalRule::Rotate { shift },
        } => PermExpr::BlockLocal {
            blocks: blocks.clone(),
            rule: LocalRule::Rotate { shift: -shift },
        },
        PermExpr::Inverse { inner } => (**inner).clone(),
        PermExpr::Compose { left, right } => compose(&invert(right), &invert(left)),
        _ => PermExpr::Inverse {
            inner: Box::new(p.clone()),
        },
    }
}

/// `{x < bound : p(x) ≠ x}` with a certification flag.
pub fn support(p: &PermExpr, w: &Window) -> (SetExpr, bool) {
    match p {
        PermExpr::Identity => (SetExpr::empty(), true),
        PermExpr::FiniteSupport { map } | PermExpr::Swap { pairs: map } => (
            SetExpr::finite(map.support().filter(|&x| x < w.bound)),
            true,
        ),
        PermExpr::SwapRule {
            rule: SwapRule::Adjacent { start },
        } => (SetExpr::interval((*start).min(w.bound), w.bound), true),
        PermExpr::SuccessorShift { carrier, exp } if *exp == 0 => {
            let _ = carrier;
            (SetExpr::empty(), true)
        }
        PermExpr::SuccessorShift { carrier, exp } if *exp < 0 => {
            let skip: BTreeSet<u64> = {
                let mut v = BTreeSet::new();
                let mut x = 0;
                while (v.len() as u64) < exp.unsigned_abs() {
                    match carrier.next_from(x, w.bound) {
                        Some(y) => {
                            v.insert(y);
                            x = y + 1;
                        }
                        None => break,
                    }
                }
                v
            };
            (
                SetExpr::difference(
                    SetExpr::intersection(vec![carrier.clone(), SetExpr::interval(0, w.bound)]),
                    SetExpr::Finite { points: skip },
                ),
                true,
            )
        }
        _ => {
            let mut points = BTreeSet::new();
            let mut certified = true;
            for x in 0..w.bound {
                match p.at(x, w.bound) {
                    Ev::Val(v) if v != x => {
                        points.insert(x);
                    }
                    Ev::Escape => {
                        certified = false;
                    }
                    _ => {}
                }
            }
            (
                SetExpr::Sample {
                    bound: w.bound,
                    points,
                },
                certified,
            )
        }
    }
}

/// Anything that maps points to points within a horizon.
pub trait PointMap {
    fn image(&self, n: u64) -> Ev;
    fn preimage(&self, n: u64) -> Ev;
}

/// A symbolic permutation evaluated with a fixed search horizon.
#[derive(Clone, Copy, Debug)]
pub struct Bounded<'a> {
    pub perm: &'a PermExpr,
    pub horizon: u64,
}

impl<'a> Bounded<'a> {
    pub fn new(perm: &'a PermExpr, w: &Window) -> Self {
        Bounded {
            perm,
            horizon: w.bound,
        }
    }
}

impl PointMap for Bounded<'_> {
    fn image(&self, n: u64) -> Ev {
        self.perm.at(n, self.horizon)
    }
    fn preimage(&self, n: u64) -> Ev {
        self.perm.at_inv(n, self.horizon)
    }
}

const TAB_UNDEF: u32 = u32::MAX;
const TAB_OUT: u32 = u32::MAX - 1;

/// A map tabulated on `[0, bound)`; values at or past `bound` read as escapes.
#[derive(Clone, Debug)]
pub struct TabulatedPerm {
    bound: u64,
    fwd: Vec<u32>,
    inv: Vec<u32>,
}

impl TabulatedPerm {
    /// Tabulates `p` and its inverse on the window.
    pub fn new(p: &PermExpr, w: &Window) -> Result<Self> {
        Self::from_fn(w.bound, |n| p.at(n, w.bound))
    }

    /// Tabulates any map on `[0, bound)`.
    pub fn from_fn(bound: u64, f: impl Fn(u64) -> Ev) -> Result<Self> {
        if bound >= TAB_OUT as u64 {
            return Err(Error::InsufficientWindow {
                bound,
                reason: "tabulation supports windows below 2^32 - 2".into(),
            });
        }
        let mut fwd = vec![TAB_UNDEF; bound as usize];
        let mut inv = vec![TAB_UNDEF; bound as usize];
        for n in 0..bound {
            let e = match f(n) {
                Ev::Val(v) if v < bound => {
                    if inv[v as usize] != TAB_UNDEF {
                        return Err(Error::InvalidExpr(format!("map is not injective at {v}")));
                    }
                    inv[v as usize] = n as u32;
                    v as u32
                }
                Ev::Undef => TAB_UNDEF,
                _ => TAB_OUT,
            };
            fwd[n as usize] = e;
        }
        // Preimages of points hit from outside the window are unknown.
        let hit_from_outside = fwd.iter().filter(|&&e| e == TAB_OUT).count();
        if hit_from_outside > 0 {
            for e in inv.iter_mut() {
                if *e == TAB_UNDEF {
                    *e = TAB_OUT;
                }
            }
        }
        Ok(TabulatedPerm { bound, fwd, inv })
    }

    pub fn bound(&self) -> u64 {
        self.bound
    }

    /// Raw table entry, `None` unless it is a value inside the window.
    pub fn get(&self, n: u64) -> Option<u64> {
        match self.fwd.get(n as usize) {
            Some(&e) if e < TAB_OUT => Some(e as u64),
            _ => None,
        }
    }
}

fn decode(e: Option<&u32>) -> Ev {
    match e {
        None => Ev::Escape,
        Some(&TAB_UNDEF) => Ev::Undef,
        Some(&TAB_OUT) => Ev::Escape,
        Some(&v) => Ev::Val(v as u64),
    }
}

impl PointMap for TabulatedPerm {
    fn image(&self, n: u64) -> Ev {
        decode(self.fwd.get(n as usize))
    }
    fn preimage(&self, n: u64) -> Ev {
        decode(self.inv.get(n as usize))
    }
}

impl PointMap for FiniteMap {
    fn image(&self, n: u64) -> Ev {
        Ev::Val(self.get(n))
    }
    fn preimage(&self, n: u64) -> Ev {
        Ev::Val(self.get_inv(n))
    }
}

/// Non-commutation points on a window.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NcReport {
    pub points: Vec<u64>,
    /// No evaluation consulted a point at or past the bound.
    pub certified: bool,
    /// Points of the interior whose membership could not be decided.
    pub unresolved: u64,
    pub window: Window,
}

/// Outcome of checking `p(q(n))` against `q(p(n))` at one point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NcPoint {
    Commutes,
    Differs,
    Unresolved,
}

/// Compares the two composites at `n`, consulting only points below `bound`.
pub fn nc_at<P: PointMap + ?Sized, Q: PointMap + ?Sized>(p: &P, q: &Q, n: u64, bound: u64) -> NcPoint {
    let (a, b) = match (p.image(n), q.image(n)) {
        (Ev::Val(a), Ev::Val(b)) if a < bound && b < bound => (a, b),
        _ => return NcPoint::Unresolved,
    };
    match (p.image(b), q.image(a)) {
        (Ev::Val(x), Ev::Val(y)) => {
            if x == y {
                NcPoint::Commutes
            } else {
                NcPoint::Differs
            }
        }
        _ => NcPoint::Unresolved,
    }
}

/// `NC` over `[lo, hi)` for any pair of point maps.
pub fn nc_scan<P: PointMap + ?Sized, Q: PointMap + ?Sized>(
    p: &P,
    q: &Q,
    lo: u64,
    hi: u64,
    bound: u64,
) -> (Vec<u64>, u64) {
    let mut points = Vec::new();
    let mut unresolved = 0;
    for n in lo..hi {
        match nc_at(p, q, n, bound) {
            NcPoint::Commutes => {}
            NcPoint::Differs => points.push(n),
            NcPoint::Unresolved => unresolved += 1,
        }
    }
    (points, unresolved)
}

/// `NC(p, q) = {n : p(q(n)) ≠ q(p(n))}` on the certified interior.
pub fn nc_set(p: &PermExpr, q: &PermExpr, w: &Window) -> NcReport {
    let (points, unresolved) = nc_scan(&Bounded::new(p, w), &Bounded::new(q, w), 0, w.interior(), w.bound);
    NcReport {
        points,
        certified: unresolved == 0,
        unresolved,
        window: *w,
    }
}

/// How an orbit enumeration ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrbitStatus {
    /// A genuine finite orbit: a cycle, or a chain undefined at both ends.
    Closed,
    CapHit,
    BoundaryHit,
}

/// Orbit points in order `p^{-b}(x), ..., x, ..., p^{f}(x)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrbitTrace {
    pub points: Vec<u64>,
    pub status: OrbitStatus,
}

/// Enumerates the orbit of `x` until closure, `cap` points, or the window edge.
pub fn orbit(p: &PermExpr, x: u64, cap: usize, w: &Window) -> OrbitTrace {
    orbit_of(&Bounded::new(p, w), x, cap, w.bound)
}

/// [`orbit`] for any point map.
pub fn orbit_of<P: PointMap + ?Sized>(p: &P, x: u64, cap: usize, bound: u64) -> OrbitTrace {
    let cap = cap.max(1);
    let mut fwd = vec![x];
    let mut boundary = false;
    let mut cur = x;
    loop {
        if fwd.len() >= cap {
            return OrbitTrace {
                points: fwd,
                status: OrbitStatus::CapHit,
            };
        }
        match p.image(cur) {
            Ev::Val(y) if y == x => {
                return OrbitTrace {
                    points: fwd,
                    status: OrbitStatus::Closed,
                }
            }
            Ev::Val(y) if y < bound => {
                fwd.push(y);
                cur = y;
            }
            Ev::Undef => break,
            _ => {
                boundary = true;
                break;
            }
        }
    }
    let mut back = Vec::new();
    cur = x;
    loop {
        if fwd.len() + back.len() >= cap {
            back.reverse();
            back.extend(fwd);
            return OrbitTrace {
                points: back,
                status: OrbitStatus::CapHit,
            };
        }
        match p.preimage(cur) {
            Ev::Val(y) if y < bound => {
                back.push(y);
                cur = y;
            }
            Ev::Undef => break,
            _ => {
                boundary = true;
                break;
            }
        }
    }
    back.reverse();
    back.extend(fwd);
    OrbitTrace {
        points: back,
        status: if boundary {
            OrbitStatus::BoundaryHit
        } else {
            OrbitStatus::Closed
        },
    }
}
