//! Maximal abelian subgroups of small symmetric groups, by exhaustive search.
//!
//! Elements of `Sym(n)` are indexed by their lexicographic rank. Two
//! enumerations are provided: a centralizer fixpoint search over bitsets, and
//! a plain breadth-first walk through every abelian subgroup with maximality
//! tested element by element. They share only the element indexing.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_CAP: usize = 8;

/// A permutation of `[0, n)`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FinitePerm {
    table: Vec<u8>,
}

impl FinitePerm {
    pub fn new(table: Vec<u8>) -> Result<Self> {
        let n = table.len();
        let mut seen = vec![false; n];
        for &x in &table {
            let x = x as usize;
            if x >= n || seen[x] {
                return Err(Error::Precondition(format!("{table:?} is not a permutation")));
            }
            seen[x] = true;
        }
        Ok(FinitePerm { table })
    }

    pub fn identity(n: usize) -> Self {
        FinitePerm {
            table: (0..n as u8).collect(),
        }
    }

    /// The transposition `(a b)` on `n` points.
    pub fn transposition(n: usize, a: u8, b: u8) -> Result<Self> {
        let mut t: Vec<u8> = (0..n as u8).collect();
        if a as usize >= n || b as usize >= n {
            return Err(Error::Precondition(format!("({a} {b}) outside {n} points")));
        }
        t.swap(a as usize, b as usize);
        Ok(FinitePerm { table: t })
    }

    pub fn n(&self) -> usize {
        self.table.len()
    }

    pub fn table(&self) -> &[u8] {
        &self.table
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &FinitePerm) -> FinitePerm {
        FinitePerm {
            table: other.table.iter().map(|&x| self.table[x as usize]).collect(),
        }
    }

    pub fn commutes(&self, other: &FinitePerm) -> bool {
        self.table
            .iter()
            .zip(&other.table)
            .all(|(&a, &b)| other.table[a as usize] == self.table[b as usize])
    }

    /// Cycle notation without fixed points, `()` for the identity.
    pub fn cycles(&self) -> String {
        let mut seen = vec![false; self.n()];
        let mut out = String::new();
        for s in 0..self.n() {
            if seen[s] || self.table[s] as usize == s {
                continue;
            }
            let mut c = vec![s];
            seen[s] = true;
            let mut x = self.table[s] as usize;
            while x != s {
                seen[x] = true;
                c.push(x);
                x = self.table[x] as usize;
            }
            let parts: Vec<String> = c.iter().map(|v| v.to_string()).collect();
            out.push_str(&format!("({})", parts.join(" ")));
        }
        if out.is_empty() {
            out.push_str("()");
        }
        out
    }
}

fn check_cap(n: usize, cap: usize) -> Result<()> {
    if n > cap.min(DEFAULT_CAP) {
        return Err(Error::CapExceeded { n, cap: cap.min(DEFAULT_CAP) });
    }
    Ok(())
}

/// All elements of `Sym(n)` in lexicographic order, with rank lookup.
pub struct SymGroup {
    n: usize,
    elems: Vec<FinitePerm>,
    rank: HashMap<Vec<u8>, u32>,
}

impl SymGroup {
    pub fn new(n: usize, cap: usize) -> Result<Self> {
        check_cap(n, cap)?;
        let mut elems = Vec::new();
        let mut p: Vec<u8> = (0..n as u8).collect();
        loop {
            elems.push(FinitePerm { table: p.clone() });
            let Some(i) = (0..n.saturating_sub(1)).rev().find(|&i| p[i] < p[i + 1]) else {
                break;
            };
            let j = (i + 1..n).rev().find(|&j| p[j] > p[i]).unwrap();
            p.swap(i, j);
            p[i + 1..].reverse();
        }
        let rank = elems
            .iter()
            .enumerate()
            .map(|(i, e)| (e.table.clone(), i as u32))
            .collect();
        Ok(SymGroup { n, elems, rank })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> usize {
        self.elems.len()
    }

    pub fn elem(&self, i: u32) -> &FinitePerm {
        &self.elems[i as usize]
    }

    pub fn index(&self, p: &FinitePerm) -> Result<u32> {
        self.rank
            .get(&p.table)
            .copied()
            .ok_or_else(|| Error::Precondition(format!("{} is not on {} points", p.cycles(), self.n)))
    }

    fn mul(&self, a: u32, b: u32) -> u32 {
        self.rank[&self.elem(a).compose(self.elem(b)).table]
    }
}

/// A subgroup as its sorted element ranks.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Subgroup {
    pub elements: Vec<u32>,
}

impl Subgroup {
    pub fn order(&self) -> usize {
        self.elements.len()
    }

    pub fn contains(&self, x: u32) -> bool {
        self.elements.binary_search(&x).is_ok()
    }

    pub fn perms<'a>(&'a self, g: &'a SymGroup) -> impl Iterator<Item = &'a FinitePerm> + 'a {
        self.elements.iter().map(move |&i| g.elem(i))
    }
}

/// Elements of `Sym(n)` commuting with every member of `s`.
pub fn centralizer(s: &[FinitePerm], n: usize, cap: usize) -> Result<Vec<FinitePerm>> {
    check_cap(n, cap)?;
    if let Some(p) = s.iter().find(|p| p.n() != n) {
        return Err(Error::Precondition(format!("{} is not on {n} points", p.cycles())));
    }
    let g = SymGroup::new(n, cap)?;
    Ok(g.elems.into_iter().filter(|x| s.iter().all(|p| x.commutes(p))).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Search {
    /// Centralizer fixpoints from cyclic seeds, on bitsets.
    Fixpoint,
    /// Every abelian subgroup, maximality by element-wise extension.
    Exhaustive,
}

/// `⟨elements, g⟩` for an abelian group and an element commuting with it.
fn extend_abelian(g: &SymGroup, elements: &[u32], x: u32) -> Vec<u32> {
    let mut powers = vec![0u32];
    let mut p = x;
    while p != 0 {
        powers.push(p);
        p = g.mul(p, x);
    }
    let mut out: BTreeSet<u32> = BTreeSet::new();
    for &a in elements {
        for &q in &powers {
            out.insert(g.mul(a, q));
        }
    }
    out.into_iter().collect()
}

type Bits = Vec<u64>;

fn bits_of(len: usize, xs: impl IntoIterator<Item = u32>) -> Bits {
    let mut b = vec![0u64; len.div_ceil(64)];
    for x in xs {
        b[x as usize / 64] |= 1 << (x % 64);
    }
    b
}

fn bits_iter(b: &Bits) -> impl Iterator<Item = u32> + '_ {
    b.iter().enumerate().flat_map(|(w, &word)| {
        (0..64).filter(move |k| word >> k & 1 == 1).map(move |k| (w * 64 + k) as u32)
    })
}

fn subset(a: &Bits, b: &Bits) -> bool {
    a.iter().zip(b).all(|(x, y)| x & !y == 0)
}

struct Centralizers<'a> {
    g: &'a SymGroup,
    cache: HashMap<u32, Bits>,
}

impl Centralizers<'_> {
    fn of(&mut self, x: u32) -> &Bits {
        let g = self.g;
        self.cache.entry(x).or_insert_with(|| {
            let p = g.elem(x);
            bits_of(g.order(), (0..g.order() as u32).filter(|&y| g.elem(y).commutes(p)))
        })
    }

    fn of_set(&mut self, xs: impl IntoIterator<Item = u32>) -> Bits {
        let mut acc = vec![!0u64; self.g.order().div_ceil(64)];
        for x in xs {
            for (a, b) in acc.iter_mut().zip(self.of(x)) {
                *a &= b;
            }
        }
        let tail = self.g.order() % 64;
        if tail != 0 {
            *acc.last_mut().unwrap() &= (1u64 << tail) - 1;
        }
        acc
    }
}

fn fixpoint_search(g: &SymGroup, seeds: &[u32]) -> BTreeSet<Subgroup> {
    let mut cz = Centralizers { g, cache: HashMap::new() };
    let mut found = BTreeSet::new();
    let mut visited: HashSet<Vec<u32>> = HashSet::new();
    let mut stack: Vec<(Vec<u32>, Vec<u32>)> = seeds
        .iter()
        .map(|&s| (vec![s], extend_abelian(g, &[0], s)))
        .collect();
    while let Some((gens, elements)) = stack.pop() {
        if !visited.insert(elements.clone()) {
            continue;
        }
        let c = cz.of_set(gens.iter().copied());
        let c_elems: Vec<u32> = bits_iter(&c).collect();
        let cc = cz.of_set(c_elems.iter().copied());
        if subset(&c, &cc) {
            // C(A) is abelian, hence the unique maximal abelian group above A.
            found.insert(Subgroup { elements: c_elems });
            continue;
        }
        let a_bits = bits_of(g.order(), elements.iter().copied());
        for &x in &c_elems {
            if a_bits[x as usize / 64] >> (x % 64) & 1 == 0 {
                let mut ng = gens.clone();
                ng.push(x);
                stack.push((ng, extend_abelian(g, &elements, x)));
            }
        }
    }
    found
}

fn exhaustive_search(g: &SymGroup, seeds: &[u32]) -> BTreeSet<Subgroup> {
    let mut found = BTreeSet::new();
    let mut seen: HashSet<Vec<u32>> = HashSet::new();
    let mut queue: VecDeque<(Vec<u32>, Vec<u32>)> = VecDeque::new();
    for &s in seeds {
        let e = extend_abelian(g, &[0], s);
        if seen.insert(e.clone()) {
            queue.push_back((vec![s], e));
        }
    }
    while let Some((gens, elements)) = queue.pop_front() {
        let mut maximal = true;
        let mut covered: HashSet<u32> = elements.iter().copied().collect();
        for x in 0..g.order() as u32 {
            if covered.contains(&x) {
                continue;
            }
            let px = g.elem(x);
            if !elements.iter().all(|&a| g.elem(a).commutes(px)) {
                continue;
            }
            maximal = false;
            let next = extend_abelian(g, &elements, x);
            covered.extend(next.iter().copied());
            if seen.insert(next.clone()) {
                let mut ng = gens.clone();
                ng.push(x);
                queue.push_back((ng, next));
            }
        }
        if maximal {
            found.insert(Subgroup { elements });
        }
    }
    found
}

/// Maximal abelian subgroups of `Sym(n)`, sorted and deduplicated. Seeds are
/// the cyclic subgroups, split across `jobs` threads.
pub fn maximal_abelian_subgroups_with(
    g: &SymGroup,
    strategy: Search,
    jobs: usize,
) -> Vec<Subgroup> {
    let all: Vec<u32> = (0..g.order() as u32).collect();
    if g.order() == 1 {
        return vec![Subgroup { elements: vec![0] }];
    }
    let seeds = &all[1..];
    let jobs = jobs.clamp(1, seeds.len());
    let chunk = seeds.len().div_ceil(jobs);
    let run = |part: &[u32]| match strategy {
        Search::Fixpoint => fixpoint_search(g, part),
        Search::Exhaustive => exhaustive_search(g, part),
    };
    let mut out = BTreeSet::new();
    if jobs == 1 {
        out = run(seeds);
    } else {
        std::thread::scope(|sc| {
            let handles: Vec<_> = seeds.chunks(chunk).map(|p| sc.spawn(move || run(p))).collect();
            for h in handles {
                out.extend(h.join().expect("enumeration thread panicked"));
            }
        });
    }
    out.into_iter().collect()
}

pub fn maximal_abelian_subgroups(n: usize) -> Result<Vec<Subgroup>> {
    let g = SymGroup::new(n, DEFAULT_CAP)?;
    Ok(maximal_abelian_subgroups_with(&g, Search::Fixpoint, 1))
}

/// Orders of the maximal abelian subgroups of `Sym(n)`.
pub fn spectrum(n: usize) -> Result<BTreeSet<usize>> {
    Ok(maximal_abelian_subgroups(n)?.iter().map(Subgroup::order).collect())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub n: usize,
    pub group_order: usize,
    pub spectrum: BTreeSet<usize>,
    /// Number of maximal abelian subgroups of each order.
    pub counts: Vec<(usize, usize)>,
    pub strategies_agree: bool,
}

/// Runs both strategies and compares their subgroup lists.
pub fn spectrum_report(n: usize, jobs: usize) -> Result<SpectrumReport> {
    let g = SymGroup::new(n, DEFAULT_CAP)?;
    let a = maximal_abelian_subgroups_with(&g, Search::Fixpoint, jobs);
    let b = maximal_abelian_subgroups_with(&g, Search::Exhaustive, jobs);
    let mut counts = std::collections::BTreeMap::new();
    for h in &a {
        *counts.entry(h.order()).or_insert(0) += 1;
    }
    Ok(SpectrumReport {
        n,
        group_order: g.order(),
        spectrum: a.iter().map(Subgroup::order).collect(),
        counts: counts.into_iter().collect(),
        strategies_agree: a == b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(t: &[u8]) -> FinitePerm {
        FinitePerm::new(t.to_vec()).unwrap()
    }

    #[test]
    fn perm_basics() {
        assert!(FinitePerm::new(vec![0, 0]).is_err());
        let c = p(&[1, 2, 0]);
        assert_eq!(c.cycles(), "(0 1 2)");
        assert_eq!(c.compose(&c).compose(&c), FinitePerm::identity(3));
        assert!(!c.commutes(&p(&[1, 0, 2])));
        assert_eq!(SymGroup::new(4, 8).unwrap().order(), 24);
    }

    #[test]
    fn centralizer_examples() {
        assert_eq!(centralizer(&[], 4, 8).unwrap().len(), 24);
        let c = centralizer(&[p(&[1, 0, 2])], 3, 8).unwrap();
        assert_eq!(c, vec![p(&[0, 1, 2]), p(&[1, 0, 2])]);
        let all = SymGroup::new(4, 8).unwrap().elems;
        assert_eq!(centralizer(&all, 4, 8).unwrap(), vec![FinitePerm::identity(4)]);
        assert_eq!(centralizer(&[], 9, 8), Err(Error::CapExceeded { n: 9, cap: 8 }));
        assert_eq!(centralizer(&[], 5, 4), Err(Error::CapExceeded { n: 5, cap: 4 }));
    }

    #[test]
    fn small_spectra() {
        assert_eq!(spectrum(1).unwrap(), BTreeSet::from([1]));
        assert_eq!(spectrum(2).unwrap(), BTreeSet::from([2]));
        assert_eq!(spectrum(3).unwrap(), BTreeSet::from([2, 3]));
        assert_eq!(spectrum(4).unwrap(), BTreeSet::from([3, 4]));
        let g = SymGroup::new(3, 8).unwrap();
        let list = maximal_abelian_subgroups(3).unwrap();
        assert_eq!(list.len(), 4);
        let mut descr: Vec<String> = list
            .iter()
            .map(|h| h.perms(&g).map(FinitePerm::cycles).collect::<Vec<_>>().join(" "))
            .collect();
        descr.sort();
        assert_eq!(descr, ["() (0 1 2) (0 2 1)", "() (0 1)", "() (0 2)", "() (1 2)"]);
        assert_eq!(maximal_abelian_subgroups(9), Err(Error::CapExceeded { n: 9, cap: 8 }));
    }

    #[test]
    fn strategies_agree_to_six() {
        for n in 1..=6 {
            let r = spectrum_report(n, 2).unwrap();
            assert!(r.strategies_agree, "n = {n}");
        }
    }

    #[test]
    fn listed_groups_are_self_centralizing() {
        let g = SymGroup::new(5, 8).unwrap();
        for h in maximal_abelian_subgroups_with(&g, Search::Fixpoint, 1) {
            let gens: Vec<FinitePerm> = h.perms(&g).cloned().collect();
            let c = centralizer(&gens, 5, 8).unwrap();
            let ids: Vec<u32> = c.iter().map(|x| g.index(x).unwrap()).collect();
            assert_eq!(ids, h.elements);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn abelian_groups_extend_to_listed_ones(seed in 0u32..720, picks in proptest::collection::vec(0u32..720, 0..4)) {
            let g = SymGroup::new(6, 8).unwrap();
            let list = maximal_abelian_subgroups_with(&g, Search::Fixpoint, 1);
            let mut elements = extend_abelian(&g, &[0], seed);
            for x in picks {
                if elements.iter().all(|&a| g.elem(a).commutes(g.elem(x))) {
                    elements = extend_abelian(&g, &elements, x);
                }
            }
            prop_assert!(list.iter().any(|h| elements.iter().all(|&x| h.contains(x))));
        }
    }
}
