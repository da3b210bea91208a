//! The property suite behind `verify-all`.
//!
//! Each check is seeded and returns a [`CheckRow`] whose JSON form depends only
//! on the seeds and the scale, so two runs can be compared byte for byte.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use num_rational::BigRational;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::block::{
    band_support, check_block_preserving, commutation_containment, g_z, gz_distinct_witnesses,
    gz_pairwise_nc, repair, summable_leakage_bound, Scan,
};
use crate::blocks::BlockSequence;
use crate::builders::gadget::{all_sym6, fpf_involutions, sym6_witness, IDENTITY6};
use crate::builders::nice::{
    build_nice_family, cm1_verify, nice_extend_params, nice_extend_point, nice_order_violations, nice_violations,
    ratio, NiceCondition, NiceContext,
};
use crate::builders::tower::tower_run;
use crate::error::{Error, Result};
use crate::mad::{homomorphism_defect, phi, ADFamily, ZeroSumVector};
use crate::orbit::{omega_partition, propagate_agreement, verify_orbit_bound};
use crate::perm::{compose, nc_set, Ev, LocalRule, PermExpr, Window};
use crate::sets::IndexSetExpr;
use crate::spectrum::spectrum_report;

/// Window scale used when none is given.
pub const DEFAULT_SCALE: u64 = 100_000;

/// Base seed of the suite; check `i` draws from `BASE_SEED + i`.
pub const BASE_SEED: u64 = 0x5eed;

/// One row of the summary table.
#[derive(Clone, Debug, Serialize)]
pub struct CheckRow {
    pub id: usize,
    pub key: &'static str,
    pub property: &'static str,
    pub passed: bool,
    pub summary: String,
    pub detail: Value,
    #[serde(skip)]
    pub elapsed: Duration,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifySummary {
    pub scale: u64,
    pub rows: Vec<CheckRow>,
}

impl VerifySummary {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }

    pub fn table(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            out.push_str(&format!(
                "{:>2} {:<12} {:<4} {:<52} {} ({:.2?})\n",
                r.id,
                r.key,
                if r.passed { "PASS" } else { "FAIL" },
                r.property,
                r.summary,
                r.elapsed
            ));
        }
        out
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("id,key,passed,property,summary\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},\"{}\",\"{}\"\n",
                r.id,
                r.key,
                r.passed,
                r.property,
                r.summary.replace('"', "'")
            ));
        }
        out
    }
}

type CheckFn = fn(u64, u64) -> Result<(bool, String, Value)>;

struct Check {
    key: &'static str,
    property: &'static str,
    run: CheckFn,
}

const CHECKS: &[Check] = &[
    Check {
        key: "sym6",
        property: "every non-identity of Sym(6) has an involution witness",
        run: check_sym6,
    },
    Check {
        key: "orbit-bound",
        property: "classes away from NC have at most prod m(pi) points",
        run: check_orbit_bound,
    },
    Check {
        key: "agreement",
        property: "agreement on X (and Y) spreads to the closure",
        run: check_agreement,
    },
    Check {
        key: "phi",
        property: "zero-sum vectors give almost commuting bijections",
        run: check_phi,
    },
    Check {
        key: "factorial",
        property: "leakage repair and g_Z family on factorial blocks",
        run: check_factorial,
    },
    Check {
        key: "cubic",
        property: "prefix leakage sums below n_i^-2 on cubic blocks",
        run: check_cubic,
    },
    Check {
        key: "cm1",
        property: "span, gap, k-gap and map bounds on built families",
        run: check_cm1,
    },
    Check {
        key: "tower",
        property: "tower run: involution, audited NC, diagonal witnesses",
        run: check_tower,
    },
    Check {
        key: "nice",
        property: "alternating nice steps stay valid with positive margins",
        run: check_nice_steps,
    },
    Check {
        key: "spectrum",
        property: "two searches agree on maximal abelian subgroups",
        run: check_spectrum,
    },
];

/// Keys accepted by [`verify_all`], in order.
pub fn check_keys() -> Vec<&'static str> {
    CHECKS.iter().map(|c| c.key).chain(["determinism"]).collect()
}

fn run_rows(selected: &[usize], scale: u64, jobs: usize) -> Vec<CheckRow> {
    let one = |i: usize| {
        let c = &CHECKS[i];
        let t = Instant::now();
        let (passed, summary, detail) = match (c.run)(BASE_SEED + i as u64, scale) {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}"), Value::Null),
        };
        CheckRow {
            id: i + 1,
            key: c.key,
            property: c.property,
            passed,
            summary,
            detail,
            elapsed: t.elapsed(),
        }
    };
    let jobs = jobs.max(1);
    if jobs == 1 {
        return selected.iter().map(|&i| one(i)).collect();
    }
    let mut slots: Vec<Option<CheckRow>> = vec![None; selected.len()];
    let next = std::sync::atomic::AtomicUsize::new(0);
    std::thread::scope(|sc| {
        let handles: Vec<_> = (0..jobs.min(selected.len()))
            .map(|_| {
                sc.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let k = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                        if k >= selected.len() {
                            break;
                        }
                        done.push((k, one(selected[k])));
                    }
                    done
                })
            })
            .collect();
        for h in handles {
            for (k, row) in h.join().expect("check thread panicked") {
                slots[k] = Some(row);
            }
        }
    });
    slots.into_iter().map(Option::unwrap).collect()
}

/// Runs the checks named in `selector` (all of them when empty) at the given
/// window scale. The `determinism` row reruns the other selected checks and
/// compares their JSON.
pub fn verify_all(selector: &[String], scale: u64, jobs: usize) -> Result<VerifySummary> {
    let keys = check_keys();
    if let Some(bad) = selector.iter().find(|s| !keys.contains(&s.as_str())) {
        return Err(Error::Schema(format!("unknown check {bad:?}; expected one of {}", keys.join(", "))));
    }
    let want = |k: &str| selector.is_empty() || selector.iter().any(|s| s == k);
    let selected: Vec<usize> = (0..CHECKS.len()).filter(|&i| want(CHECKS[i].key)).collect();
    let mut rows = run_rows(&selected, scale, jobs);
    if want("determinism") {
        let t = Instant::now();
        let again = if selected.is_empty() {
            Vec::new()
        } else {
            run_rows(&selected, scale, jobs)
        };
        let a = serde_json::to_string(&rows).map_err(|e| Error::Schema(e.to_string()))?;
        let b = serde_json::to_string(&again).map_err(|e| Error::Schema(e.to_string()))?;
        let differing: Vec<&str> = rows
            .iter()
            .zip(&again)
            .filter(|(x, y)| serde_json::to_string(x).ok() != serde_json::to_string(y).ok())
            .map(|(x, _)| x.key)
            .collect();
        rows.push(CheckRow {
            id: CHECKS.len() + 1,
            key: "determinism",
            property: "seeded reruns give byte-identical reports",
            passed: a == b,
            summary: format!("{} rows rerun, {} bytes, {} differ", again.len(), a.len(), differing.len()),
            detail: json!({ "differing": differing }),
            elapsed: t.elapsed(),
        });
    }
    Ok(VerifySummary { scale, rows })
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn compose6(a: &[u8; 6], b: &[u8; 6]) -> [u8; 6] {
    std::array::from_fn(|i| a[b[i] as usize])
}

fn check_sym6(_seed: u64, _scale: u64) -> Result<(bool, String, Value)> {
    let invs = fpf_involutions();
    let mut failures = Vec::new();
    let mut checked = 0;
    for p in all_sym6().into_iter().filter(|p| *p != IDENTITY6) {
        checked += 1;
        let brute = invs.iter().copied().filter(|s| compose6(s, &p) != compose6(&p, s)).min();
        match sym6_witness(&p) {
            Ok(w) if Some(w) == brute => {}
            other => failures.push(format!("{p:?}: {other:?}")),
        }
    }
    let ok = checked == 719 && failures.is_empty();
    Ok((ok, format!("{checked} permutations, {} failures", failures.len()), json!({ "failures": failures })))
}

fn check_orbit_bound(seed: u64, scale: u64) -> Result<(bool, String, Value)> {
    let w = Window::exact(scale.max(2_000));
    let blocks = BlockSequence::arithmetic(0, 16)?;
    let mut bad = Vec::new();
    let mut planted_classes = 0usize;
    for f in 0..100u64 {
        let mut r = rng(seed * 1000 + f);
        let k = r.gen_range(1..=3usize);
        let mut masks = vec![1u64, 2, 4, 8];
        masks.shuffle(&mut r);
        let mut fam: Vec<PermExpr> = masks[..k]
            .iter()
            .map(|&mask| PermExpr::block_local(blocks.clone(), LocalRule::Xor { mask }))
            .collect();
        let mut pts: Vec<u64> = (0..400).collect();
        pts.shuffle(&mut r);
        let npairs = r.gen_range(1..=6usize);
        fam.push(PermExpr::swap(pts[..2 * npairs].chunks(2).map(|c| (c[0], c[1])))?);
        let m = vec![2usize; fam.len()];
        let rep = verify_orbit_bound(&fam, &m, &w)?;
        // Independent pass: classes meeting no pairwise NC point.
        let mut nc = BTreeSet::new();
        for i in 0..fam.len() {
            for j in i + 1..fam.len() {
                nc.extend(nc_set(&fam[i], &fam[j], &w).points);
            }
        }
        let bound = 1usize << fam.len();
        let part = omega_partition(&fam, &w);
        for (_, c) in part.complete_classes() {
            let touches = c.points.iter().any(|p| nc.contains(p));
            if touches {
                planted_classes += 1;
            } else if c.len() > bound {
                bad.push(json!({ "family": f, "class_min": c.min(), "size": c.len() }));
            }
        }
        if !rep.explained || !rep.member_orbit_excess.is_empty() {
            bad.push(json!({ "family": f, "explained": rep.explained }));
        }
    }
    Ok((
        bad.is_empty(),
        format!("100 families on {}, {planted_classes} classes near NC, {} violations", w.bound, bad.len()),
        json!({ "violations": bad }),
    ))
}

fn check_agreement(seed: u64, scale: u64) -> Result<(bool, String, Value)> {
    let w = Window::exact(scale.clamp(600, 20_000));
    let mut bad = Vec::new();
    let mut with_nc = 0;
    for t in 0..100u64 {
        let mut r = rng(seed * 1000 + t);
        let b = r.gen_range(3..=8u64);
        let blocks = BlockSequence::arithmetic(0, b)?;
        let rot = |s: i64| PermExpr::block_local(blocks.clone(), LocalRule::Rotate { shift: s });
        let s = vec![rot(1), rot(2)];
        let pi = rot(r.gen_range(0..b as i64));
        let p = r.gen_range(2..=4u64);
        let res = r.gen_range(0..p);
        let z = IndexSetExpr::periodic(p, [res]);
        let theta = compose(&pi, &g_z(&rot(r.gen_range(1..b as i64)), &z, &blocks, None)?);
        let free: Vec<u64> = (0..w.bound / 2).filter(|&n| (n / b) % p != res).collect();
        let x: Vec<u64> = (0..r.gen_range(1..=4)).map(|_| free[r.gen_range(0..free.len())]).collect();
        let rep = propagate_agreement(&pi, &theta, &s, &x, &w);
        if rep.hypothesis_failure.is_some() || rep.disagreement.is_some() || !rep.y_prime.is_empty() {
            bad.push(json!({ "system": t, "part": "commuting", "report": rep }));
        }
        // Plant the same finite swap into both maps, inside agreeing blocks.
        let near: Vec<u64> = free.iter().copied().filter(|&n| n < 60).collect();
        let mut c = near.clone();
        c.shuffle(&mut r);
        let swap = PermExpr::swap([(c[0], c[1]), (c[2], c[3])])?;
        let pi2 = compose(&pi, &swap);
        let theta2 = compose(&theta, &swap);
        let rep = propagate_agreement(&pi2, &theta2, &s, &x, &w);
        if !rep.y_prime.is_empty() && rep.hypothesis_failure.is_none() {
            with_nc += 1;
        }
        if rep.hypothesis_failure.is_none() && rep.disagreement.is_some() {
            bad.push(json!({ "system": t, "part": "planted", "report": rep }));
        }
    }
    let ok = bad.is_empty() && with_nc > 0;
    Ok((
        ok,
        format!("100 systems, {with_nc} with nonempty NC and the hypothesis met, {} failures", bad.len()),
        json!({ "failures": bad }),
    ))
}

fn random_zero_sum(r: &mut ChaCha8Rng, len: usize, c: i64) -> ZeroSumVector {
    loop {
        let mut v: Vec<i64> = (0..len).map(|_| r.gen_range(-c..=c)).collect();
        let last = -v[..len - 1].iter().sum::<i64>();
        v[len - 1] = last;
        if last.abs() <= 2 * c {
            return ZeroSumVector::new(v.into_iter().enumerate());
        }
    }
}

fn bijective_on_interior(p: &PermExpr, w: &Window) -> bool {
    (0..w.interior()).all(|n| match p.at(n, w.bound) {
        Ev::Val(v) => p.at_inv(v, w.bound) == Ev::Val(n) && matches!(p.at_inv(n, w.bound), Ev::Val(_)),
        _ => false,
    })
}

fn check_phi(seed: u64, scale: u64) -> Result<(bool, String, Value)> {
    let codes: Vec<(Vec<u8>, Vec<u8>)> = vec![
        (vec![], vec![0]),
        (vec![], vec![1]),
        (vec![0], vec![1]),
        (vec![1], vec![0]),
        (vec![], vec![0, 1]),
        (vec![0, 0], vec![1]),
    ];
    let mut families: Vec<(String, ADFamily, Window, i64)> = Vec::new();
    let rw = Window::new(scale.clamp(4_000, 40_000), 64)?;
    for m in 3..=6u64 {
        families.push((format!("residues {m}"), ADFamily::residues(m), rw, 3));
    }
    // Branch nodes roughly double at each step; coefficients stay within 4.
    let tw = Window::new(1 << 16, (1 << 16) - (1 << 11))?;
    for k in 3..=6usize {
        families.push((format!("branches {k}"), ADFamily::branches(&codes[..k]), tw, 2));
    }
    for (name, fam, w, _) in &families {
        fam.check(w).map_err(|e| Error::Precondition(format!("{name}: {e}")))?;
    }
    let mut r = rng(seed);
    let mut bad = Vec::new();
    let mut max_nc = 0u64;
    for v in 0..50 {
        let (name, fam, w, c) = &families[v % families.len()];
        let f = random_zero_sum(&mut r, fam.len(), *c);
        let g = random_zero_sum(&mut r, fam.len(), *c);
        let pf = phi(fam, &f, w)?;
        let pg = phi(fam, &g, w)?;
        if !bijective_on_interior(&pf.perm, w) {
            bad.push(json!({ "vector": v, "family": name, "failure": "not bijective" }));
        }
        let d = homomorphism_defect(fam, &f, &g, w)?;
        if !d.contained || !d.certified || d.points.iter().any(|&p| p >= w.interior() / 2) {
            bad.push(json!({ "vector": v, "family": name, "failure": "defect", "points": d.points }));
        }
        // Finite: the same NC set on the window and on its double.
        let nc = nc_set(&pf.perm, &pg.perm, w);
        let w2 = Window::new(2 * w.bound, 2 * w.margin)?;
        let nc2 = nc_set(&phi(fam, &f, &w2)?.perm, &phi(fam, &g, &w2)?.perm, &w2);
        if nc.points != nc2.points || !nc.certified {
            bad.push(json!({ "vector": v, "family": name, "failure": "nc not stable" }));
        }
        max_nc = max_nc.max(nc.points.last().copied().unwrap_or(0));
        let mut skew = f.clone();
        skew.coeffs.entry(0).and_modify(|c| *c += 1).or_insert(1);
        if !matches!(phi(fam, &skew, w), Err(Error::NonZeroSum { .. })) {
            bad.push(json!({ "vector": v, "family": name, "failure": "nonzero sum accepted" }));
        }
    }
    Ok((
        bad.is_empty(),
        format!("50 vectors over {} families, largest NC point {max_nc}, {} failures", families.len(), bad.len()),
        json!({ "failures": bad }),
    ))
}

/// `n_i - 1 ↔ n_i` at every boundary between blocks of length at least two.
pub fn boundary_swap(blocks: &BlockSequence, bound: u64) -> Result<PermExpr> {
    let mut pairs = Vec::new();
    let mut i = 1;
    while let Some(s) = blocks.start(i) {
        if s > bound {
            break;
        }
        if blocks.len(i - 1).unwrap_or(0) >= 2 && blocks.len(i).map_or(true, |l| l >= 2) {
            pairs.push((s - 1, s));
        }
        i += 1;
    }
    PermExpr::swap(pairs)
}

fn check_factorial(seed: u64, scale: u64) -> Result<(bool, String, Value)> {
    let fact = BlockSequence::factorial();
    // 0! + 1! + ... + 11! points: twelve complete blocks.
    let bound = if scale >= DEFAULT_SCALE { 43_954_714 } else { 409_114 };
    let w = Window::exact(bound);
    let nblocks = fact.complete_blocks_below(bound);
    let eps = BigRational::new(BigInt::from(1), BigInt::from(100));
    let mut r = rng(seed);
    let mut rows = Vec::new();
    let mut ok = nblocks >= if scale >= DEFAULT_SCALE { 12 } else { 10 };
    let mut maps = vec![("boundary swap".to_string(), boundary_swap(&fact, bound)?, 1u64)];
    for _ in 0..2 {
        let shift = r.gen_range(1..5i64);
        let width = r.gen_range(1..=3u64);
        let g = compose(
            &PermExpr::block_local(fact.clone(), LocalRule::Rotate { shift }),
            &PermExpr::boundary_band(fact.clone(), width),
        );
        maps.push((format!("rotate {shift} after band {width}"), g, width));
    }
    let mut repaired = Vec::new();
    for (name, g, width) in &maps {
        let cands = band_support(&fact, *width, bound);
        let rep = repair(g, &fact, &w, Scan::Candidates(&cands))?;
        let tail = rep.leakage.tail_below(3, &eps);
        let preserving = check_block_preserving(&rep.perm, &fact, &w).is_ok();
        let leak: BTreeSet<u64> = rep.leakage.leak_set().into_iter().collect();
        let agrees = cands
            .iter()
            .filter(|&&x| x < bound && !leak.contains(&x))
            .all(|&x| rep.perm.at(x, bound) == g.at(x, bound));
        ok &= tail && preserving && agrees;
        rows.push(json!({
            "map": name,
            "leak": leak.len(),
            "last_densities": rep.leakage.densities()[nblocks.saturating_sub(3)..].iter().map(|d| d.to_string()).collect::<Vec<_>>(),
            "tail_below": tail,
            "block_preserving": preserving,
            "agrees_off_leak": agrees,
        }));
        repaired.push((rep.perm, rep.leakage.leak_set()));
    }
    // g_Z is built from the first seeded leaky map.
    let g = maps[1].1.clone();
    let (gp, leak_b) = repaired.swap_remove(1);
    // Sixteen distinct index sets over blocks 2.. so each difference is visible.
    let mut zs: Vec<IndexSetExpr> = Vec::new();
    let mut seen = BTreeSet::new();
    while zs.len() < 16 {
        let s: BTreeSet<u64> = (2..nblocks as u64).filter(|_| r.gen_bool(0.5)).collect();
        if seen.insert(s.clone()) {
            zs.push(IndexSetExpr::Finite { indices: s });
        }
    }
    let gz_w = Window::exact(bound.min(4_037_914));
    let nc_pairs = gz_pairwise_nc(&gp, &zs, &fact, &gz_w);
    let commuting = nc_pairs.iter().all(|(_, _, p)| p.is_empty());
    let witnesses = gz_distinct_witnesses(&gp, &zs, &fact, &gz_w)?;
    let distinct = witnesses.iter().all(|(_, _, wit)| wit.is_some());
    let mut containment = Vec::new();
    for (zi, hshift) in [(0usize, 1i64), (5, 2), (11, 3)] {
        let h = compose(
            &PermExpr::block_local(fact.clone(), LocalRule::Rotate { shift: hshift }),
            &PermExpr::boundary_band(fact.clone(), 1),
        );
        let gz = g_z(&gp, &zs[zi], &fact, None)?;
        let rep = commutation_containment(&g, &gz, &leak_b, &h, &fact, &gz_w, Scan::Full)?;
        ok &= rep.contained;
        containment.push(json!({ "z": zi, "h_shift": hshift, "nc": rep.nc.len(), "e": rep.e.len(), "contained": rep.contained }));
    }
    ok &= commuting && distinct;
    Ok((
        ok,
        format!(
            "{nblocks} blocks, {} maps, g_Z: 16 sets commute={commuting} distinct={distinct}",
            maps.len()
        ),
        json!({ "maps": rows, "containment": containment }),
    ))
}

fn check_cubic(_seed: u64, _scale: u64) -> Result<(bool, String, Value)> {
    let cb = BlockSequence::cubic(2)?;
    let bound = 1_030_302_010;
    let w = Window::exact(bound);
    let g = boundary_swap(&cb, bound)?;
    let cands = band_support(&cb, 1, bound);
    let r = summable_leakage_bound(&g, &cb, &w, Scan::Candidates(&cands))?;
    let ok = !r.is_empty() && r.iter().all(|p| p.holds);
    let rows: Vec<Value> = r
        .iter()
        .map(|p| json!({ "n_i": p.n_i, "sum": p.sum.to_string(), "right": p.right.to_string(), "holds": p.holds }))
        .collect();
    Ok((ok, format!("{} prefixes, all hold: {ok}", r.len()), json!({ "prefixes": rows })))
}

/// Families for the cm1 and nice checks.
fn nice_window(scale: u64) -> Result<Window> {
    Window::new(scale.clamp(20_000, 100_000), 64)
}

fn check_cm1(seed: u64, scale: u64) -> Result<(bool, String, Value)> {
    let w = nice_window(scale)?;
    let mut runs = 0usize;
    let mut checked = [0usize; 4];
    let mut violations = Vec::new();
    for fi in 0..20u64 {
        let build = build_nice_family(seed * 100 + fi, 3, &w)?;
        let ctx = NiceContext::new(&build.family)?;
        for m in 1..=ctx.len() {
            let st = ctx.stage(m);
            let start = st.stable_from;
            if start >= st.usable_end {
                continue;
            }
            let Some(delta) = st.delta_from(start).to_rational() else {
                continue;
            };
            let cands = [&delta * ratio(11, 10), ratio(1, 2)];
            let mut seen = BTreeSet::new();
            for eps in cands {
                if eps <= delta || eps >= ratio(1, 1) || !seen.insert(eps.clone()) {
                    continue;
                }
                let rep = match cm1_verify(&ctx, m, start..st.usable_end, 2, &eps) {
                    Ok(r) => r,
                    Err(Error::HypothesisFails { .. }) => continue,
                    Err(e) => return Err(e),
                };
                runs += 1;
                for (a, b) in checked.iter_mut().zip(rep.checked) {
                    *a += b;
                }
                for v in &rep.violations {
                    violations.push(json!({
                        "family": fi, "m": m, "epsilon": eps.to_string(),
                        "class": v.class, "inequality": v.inequality, "lhs": v.lhs, "rhs": v.rhs,
                    }));
                }
            }
        }
    }
    let by_kind: Vec<(String, usize)> = ["span", "gap", "k-gap", "map"]
        .iter()
        .map(|k| (k.to_string(), violations.iter().filter(|v| v["inequality"] == *k).count()))
        .collect();
    Ok((
        violations.is_empty() && runs > 0,
        format!(
            "{runs} runs, checked {checked:?}, violations {}",
            by_kind.iter().map(|(k, n)| format!("{k}={n}")).collect::<Vec<_>>().join(" ")
        ),
        json!({ "violations": violations }),
    ))
}

fn check_tower(seed: u64, scale: u64) -> Result<(bool, String, Value)> {
    let w = Window::new(scale.clamp(4_096, 16_384), 256)?;
    let blocks = BlockSequence::arithmetic(0, 32)?;
    let fam: Vec<PermExpr> = [1u64, 2, 4, 8, 16]
        .iter()
        .map(|&mask| PermExpr::block_local(blocks.clone(), LocalRule::Xor { mask }))
        .collect();
    let points: Vec<u64> = (0..1000).collect();
    let mut r = rng(seed);
    let diag: Vec<(PermExpr, u64)> = (0..10)
        .map(|_| (fam[r.gen_range(0..fam.len())].clone(), r.gen_range(0..1000)))
        .collect();
    let run = tower_run(&fam, &points, &diag, &w)?;
    let sq = compose(&run.pi_g, &run.pi_g);
    let involution = (0..w.bound).all(|n| sq.at(n, w.bound) == Ev::Val(n));
    let nc_ok: Vec<bool> = (0..fam.len()).map(|i| run.nc_within_audit(i, &w).0).collect();
    let wit = run.diagonal_witnesses(&diag, &w);
    let wit_ok = wit
        .iter()
        .zip(&diag)
        .all(|(j, (p, k))| j.is_some_and(|j| j >= *k && run.pi_g.at(j, w.bound) != p.at(j, w.bound)));
    let covered = points.iter().all(|&n| run.condition.in_domain(n));
    let ok = run.violations.is_empty() && involution && nc_ok.iter().all(|&b| b) && wit_ok && covered;
    Ok((
        ok,
        format!(
            "{} steps, |dom| = {}, involution={involution}, witnesses={wit_ok}",
            run.audit.len(),
            run.condition.h.len()
        ),
        json!({ "violations": run.violations, "nc_within_audit": nc_ok, "witnesses": wit }),
    ))
}

fn check_nice_steps(seed: u64, scale: u64) -> Result<(bool, String, Value)> {
    let w = nice_window(scale)?;
    let build = build_nice_family(seed, 3, &w)?;
    let ctx = NiceContext::new(&build.family)?;
    let mut r = rng(seed ^ 0xface);
    // Point 0 cannot be moved under a ratio bound, so start from a fixed prefix.
    let mut c = NiceCondition::new((0..4).map(|x| (x, x)).collect(), 0, ratio(1, 2), &ctx)?;
    let floor = ratio(1, 32);
    let mut done = [0usize; 2];
    let mut skipped = [0usize; 2];
    let mut bad = Vec::new();
    let mut min_margin = f64::INFINITY;
    for step in 0..1000 {
        let out = if step % 2 == 0 {
            let u = c.least_outside() + r.gen_range(0..4);
            nice_extend_point(&c, &ctx, u)
        } else {
            let mut eps = c.epsilon.clone();
            if r.gen_ratio(1, 4) && eps > floor {
                eps = eps * ratio(15, 16);
            }
            let m = if r.gen_ratio(1, 8) { (c.m + 1).min(ctx.len()) } else { c.m };
            nice_extend_params(&c, &ctx, &eps, m).map(|(n, l)| (n, l.margin))
        };
        match out {
            Ok((next, margin)) => {
                done[step % 2] += 1;
                if margin.points > 0 {
                    min_margin = min_margin.min(margin.min);
                    if margin.min <= 0.0 {
                        bad.push(format!("step {step}: margin {}", margin.min));
                    }
                }
                for v in nice_violations(&next, &ctx).into_iter().chain(nice_order_violations(&next, &c, &ctx)) {
                    bad.push(format!("step {step}: {v}"));
                }
                c = next;
            }
            Err(Error::WindowExhausted(_)) | Err(Error::A4Violated { .. }) => skipped[step % 2] += 1,
            Err(e) => return Err(e),
        }
    }
    let ok = bad.is_empty() && done[0] + done[1] >= 500;
    Ok((
        ok,
        format!(
            "point {}/{} params {}/{} done, final m={} eps={:.4e}, min margin {:.3e}",
            done[0],
            done[0] + skipped[0],
            done[1],
            done[1] + skipped[1],
            c.m,
            num_traits::ToPrimitive::to_f64(&c.epsilon).unwrap_or(f64::NAN),
            min_margin
        ),
        json!({ "violations": bad, "final_classes": c.i_p }),
    ))
}

fn check_spectrum(_seed: u64, scale: u64) -> Result<(bool, String, Value)> {
    let top = if scale >= DEFAULT_SCALE { 7 } else { 6 };
    let mut ok = true;
    let mut rows = Vec::new();
    for n in 1..=top {
        let rep = spectrum_report(n, 1)?;
        ok &= rep.strategies_agree;
        match n {
            3 => ok &= rep.spectrum == BTreeSet::from([2, 3]),
            4 => ok &= rep.spectrum == BTreeSet::from([3, 4]),
            _ => {}
        }
        rows.push(json!({ "n": n, "spectrum": rep.spectrum, "agree": rep.strategies_agree }));
    }
    Ok((ok, format!("n = 1..={top}, searches agree: {ok}"), json!({ "spectra": rows })))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selector_is_validated() {
        assert!(matches!(verify_all(&["nope".into()], 100, 1), Err(Error::Schema(_))));
        let s = verify_all(&["sym6".into()], 100, 1).unwrap();
        assert_eq!(s.rows.len(), 1);
        assert!(s.passed());
        assert!(s.csv().lines().count() == 2);
    }

    #[test]
    fn boundary_swap_pairs() {
        let fact = BlockSequence::factorial();
        let g = boundary_swap(&fact, 100).unwrap();
        // Starts 0, 1, 2, 4, 10, 34: blocks 0 and 1 have one point each.
        assert_eq!(g.at(3, 100), Ev::Val(4));
        assert_eq!(g.at(9, 100), Ev::Val(10));
        assert_eq!(g.at(1, 100), Ev::Val(1));
    }
}
