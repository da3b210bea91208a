//! Six-class gadgets and the greedy disagreement-mass search built from them.

use std::collections::BTreeMap;

use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use super::nice::{disagreement_points, ratio_margin, Margin, NiceCondition, NiceContext};
use crate::error::{Error, Result};
use crate::ideal::reciprocal_sum_at_least;
use crate::perm::{Ev, PermExpr};

pub type Sym6 = [u8; 6];

pub const IDENTITY6: Sym6 = [0, 1, 2, 3, 4, 5];

fn compose6(a: &Sym6, b: &Sym6) -> Sym6 {
    let mut out = [0u8; 6];
    for i in 0..6 {
        out[i] = a[b[i] as usize];
    }
    out
}

/// The 15 fixed-point-free involutions of six points, lexicographically sorted.
pub fn fpf_involutions() -> Vec<Sym6> {
    fn rec(cur: &mut Sym6, used: u8, out: &mut Vec<Sym6>) {
        if used == 0b11_1111 {
            out.push(*cur);
            return;
        }
        let a = (0..6).find(|&i| used & (1 << i) == 0).unwrap();
        for b in a + 1..6 {
            if used & (1 << b) == 0 {
                cur[a] = b as u8;
                cur[b] = a as u8;
                rec(cur, used | (1 << a) | (1 << b), out);
            }
        }
    }
    let mut out = Vec::with_capacity(15);
    rec(&mut [0; 6], 0, &mut out);
    out.sort();
    out
}

/// All 720 permutations of six points in lexicographic order.
pub fn all_sym6() -> Vec<Sym6> {
    let mut out = Vec::with_capacity(720);
    let mut p = IDENTITY6;
    loop {
        out.push(p);
        // next permutation
        let Some(i) = (0..5).rev().find(|&i| p[i] < p[i + 1]) else {
            break;
        };
        let j = (i + 1..6).rev().find(|&j| p[j] > p[i]).unwrap();
        p.swap(i, j);
        p[i + 1..].reverse();
    }
    out
}

pub fn is_permutation6(p: &Sym6) -> bool {
    let mut seen = 0u8;
    for &x in p {
        if x >= 6 || seen & (1 << x) != 0 {
            return false;
        }
        seen |= 1 << x;
    }
    true
}

/// Least fixed-point-free involution that does not commute with `pi`.
pub fn sym6_witness(pi: &Sym6) -> Result<Sym6> {
    if !is_permutation6(pi) {
        return Err(Error::Precondition(format!("{pi:?} is not a permutation of six points")));
    }
    if *pi == IDENTITY6 {
        return Err(Error::IdentityInput);
    }
    fpf_involutions()
        .into_iter()
        .find(|s| compose6(s, pi) != compose6(pi, s))
        .ok_or(Error::IdentityInput)
}

/// The involution swapping each class `J + 6i + w` with `J + 6j + σ(w)`.
/// With `i == j` it pairs classes inside one group, `σ` an involution; a fixed
/// point of `σ` then contributes the identity on that class.
pub fn six_block_swap(
    ctx: &NiceContext,
    m: usize,
    j0: usize,
    i: usize,
    j: usize,
    sigma: &Sym6,
) -> Result<BTreeMap<u64, u64>> {
    if !is_permutation6(sigma) {
        return Err(Error::Precondition(format!("{sigma:?} is not a permutation of six points")));
    }
    if i == j && compose6(sigma, sigma) != IDENTITY6 {
        return Err(Error::Precondition("a single-group swap needs an involution".into()));
    }
    let st = ctx.stage(m);
    let mut frag = BTreeMap::new();
    for w in 0..6 {
        let a = j0 + 6 * i + w;
        let b = j0 + 6 * j + sigma[w] as usize;
        if a == b {
            if a >= st.usable_end {
                return Err(Error::WindowExhausted(format!("class {a} is not usable")));
            }
            for &x in st.class(a) {
                frag.insert(x, x);
            }
            continue;
        }
        for (x, y) in st.pair_map(a, b)? {
            frag.insert(x, y);
            frag.insert(y, x);
        }
    }
    if let Some(x) = frag.iter().find(|(x, y)| frag.get(y) != Some(x)).map(|(x, _)| *x) {
        return Err(Error::Precondition(format!("gadget is not an involution at {x}")));
    }
    if let Some(x) = ctx.equivariant(m, &frag) {
        return Err(Error::Precondition(format!("gadget does not commute with the members at {x}")));
    }
    Ok(frag)
}

/// One accepted gadget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GadgetRecord {
    /// First class index of the gadget.
    pub first_class: usize,
    /// Six classes for a single group, twelve for a cross pair.
    pub classes: usize,
    pub sigma: Sym6,
    pub fresh: usize,
    pub mass: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagReport {
    pub gadgets: Vec<GadgetRecord>,
    pub witnesses: Vec<u64>,
    /// Floating estimate of `Σ 1/x` over the witnesses.
    pub mass: f64,
    /// Exact comparison of the mass with the target.
    pub reached: bool,
    pub stop: String,
    pub margin: Margin,
}

/// Greedy search over six-class gadgets placed right after `dom(f)`.
///
/// Each step tries the 15 single-group pairings and the 15 cross-group pairings
/// of the next two groups, keeps those whose new points respect the ratio
/// bound for `c.epsilon`, and takes the one adding the most mass `Σ 1/x` over
/// fresh points `x ≥ k` where `π(f(x)) ≠ f(π(x))`. Ties go to the earlier
/// candidate, so a step without gain pairs consecutive classes. The search
/// stops once the exact mass reaches `target`, or at the end of the window.
pub fn diagonalize_summable(
    c: &NiceCondition,
    ctx: &NiceContext,
    pi: &PermExpr,
    k: u64,
    target: &BigRational,
) -> Result<(NiceCondition, DiagReport)> {
    let horizon = ctx.window.bound;
    let mut cur = c.clone();
    let mut witnesses = disagreement_points(&cur.f, pi, k, horizon);
    let mut report = DiagReport {
        gadgets: Vec::new(),
        mass: witnesses.iter().map(|&x| 1.0 / x.max(1) as f64).sum(),
        reached: reciprocal_sum_at_least(&witnesses, target),
        witnesses: Vec::new(),
        stop: String::new(),
        margin: Margin::none(),
    };
    let st = ctx.stage(c.m);
    let sigmas = super::gadget::fpf_involutions();
    let target_f = num_traits::ToPrimitive::to_f64(target).unwrap_or(f64::INFINITY);
    while !report.reached {
        let j0 = cur.i_p;
        if j0 + 6 > st.usable_end {
            report.stop = "window".into();
            break;
        }
        let mut best: Option<(f64, usize, Sym6, BTreeMap<u64, u64>, Vec<u64>, Margin)> = None;
        let cross_ok = j0 + 12 <= st.usable_end;
        let cands = sigmas
            .iter()
            .map(|s| (0usize, *s))
            .chain(sigmas.iter().filter(|_| cross_ok).map(|s| (1usize, *s)));
        for (j, sigma) in cands {
            let frag = match six_block_swap(ctx, c.m, j0, 0, j, &sigma) {
                Ok(f) => f,
                Err(Error::ClassesNotIsomorphic { .. }) => continue,
                Err(e) => return Err(e),
            };
            let pairs: Vec<(u64, u64)> = frag.iter().map(|(&x, &y)| (x, y)).collect();
            let margin = match ratio_margin(&pairs, &cur.epsilon) {
                Ok(mg) => mg,
                Err(Error::A4Violated { .. }) => continue,
                Err(e) => return Err(e),
            };
            let fresh = fresh_witnesses(&cur.f, &frag, pi, k, horizon);
            let gain: f64 = fresh.iter().map(|&x| 1.0 / x.max(1) as f64).sum();
            if best.as_ref().map_or(true, |b| gain > b.0) {
                best = Some((gain, j, sigma, frag, fresh, margin));
            }
        }
        let Some((gain, j, sigma, frag, fresh, margin)) = best else {
            report.stop = "ratio bound".into();
            break;
        };
        cur.f.extend(frag);
        cur.i_p += 6 * (j + 1);
        report.margin.min = report.margin.min.min(margin.min);
        report.margin.points += margin.points;
        report.mass += gain;
        report.gadgets.push(GadgetRecord {
            first_class: j0,
            classes: 6 * (j + 1),
            sigma,
            fresh: fresh.len(),
            mass: gain,
        });
        if !fresh.is_empty() {
            witnesses.extend(fresh);
            witnesses.sort_unstable();
            if report.mass >= target_f * (1.0 - 1e-9) {
                report.reached = reciprocal_sum_at_least(&witnesses, target);
            }
        }
    }
    if report.reached && report.stop.is_empty() {
        report.stop = "target".into();
    }
    report.witnesses = witnesses;
    Ok((cur, report))
}

/// Disagreement points created by adding `frag` to `f`.
fn fresh_witnesses(
    f: &BTreeMap<u64, u64>,
    frag: &BTreeMap<u64, u64>,
    pi: &PermExpr,
    k: u64,
    horizon: u64,
) -> Vec<u64> {
    let get = |x: u64| f.get(&x).or_else(|| frag.get(&x)).copied();
    let val = |e: Ev| match e {
        Ev::Val(v) => Some(v),
        _ => None,
    };
    let mut cand: Vec<u64> = frag.keys().copied().collect();
    for &y in frag.keys() {
        if let Some(x) = val(pi.at_inv(y, horizon)) {
            if f.contains_key(&x) {
                cand.push(x);
            }
        }
    }
    cand.sort_unstable();
    cand.dedup();
    cand.into_iter()
        .filter(|&x| x >= k)
        .filter(|&x| {
            let (Some(fx), Some(px)) = (get(x), val(pi.at(x, horizon))) else {
                return false;
            };
            match (get(px), val(pi.at(fx, horizon))) {
                (Some(fpx), Some(pfx)) => fpx != pfx,
                _ => false,
            }
        })
        .collect()
}
