//! JSON scenarios: a window, an optional ideal and family, one operation and a
//! seed. [`run`] dispatches to the library and returns a [`Report`] whose JSON
//! form depends only on the scenario.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::block::{
    check_block_preserving, commutation_containment, g_z, gz_distinct_witnesses, gz_pairwise_nc, repair, Scan,
};
use crate::blocks::{BlockRule, BlockSequence};
use crate::builders::gadget::diagonalize_summable;
use crate::builders::nice::{
    build_nice_family, cm1_verify, nice_check, nice_order_violations, nice_violations, parse_rational, NiceCondition,
    NiceContext, NiceFamily,
};
use crate::builders::tower::tower_run;
use crate::error::{Error, Result};
use crate::ideal::{contains, IdealDescriptor};
use crate::perm::{compose, Ev, LocalRule, PermExpr, Window};
use crate::sets::{IndexSetExpr, SetExpr};
use crate::spectrum::spectrum_report;

/// Name of the generator behind every seeded choice.
pub const GENERATOR: &str = "chacha8";

/// How the permutation family of a scenario is given.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilySpec {
    Members { members: Vec<PermExpr> },
    /// Built by the seeded nice-family builder on the scenario window.
    Nice { count: usize },
    /// `o ↦ o xor mask` on consecutive blocks of `block_len` points.
    XorBlocks { block_len: u64, masks: Vec<u64> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Operation {
    Identity,
    GzFamily,
    TowerRun,
    NiceBuild,
    DiagMass,
    Cm1Verify,
    Spectrum,
}

impl Operation {
    pub fn name(self) -> &'static str {
        match self {
            Operation::Identity => "identity",
            Operation::GzFamily => "gz-family",
            Operation::TowerRun => "tower-run",
            Operation::NiceBuild => "nice-build",
            Operation::DiagMass => "diag-mass",
            Operation::Cm1Verify => "cm1-verify",
            Operation::Spectrum => "spectrum",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub window: Window,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ideal_spec: Option<IdealDescriptor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family_spec: Option<FamilySpec>,
    pub operation: Operation,
    #[serde(default)]
    pub parameters: Value,
    #[serde(default)]
    pub seed: u64,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Schema(m) => Error::Schema(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    fn validate(&self) -> Result<()> {
        if self.window.bound <= self.window.margin {
            return Err(Error::Schema(format!(
                "window bound {} must exceed margin {}",
                self.window.bound, self.window.margin
            )));
        }
        if !(self.parameters.is_null() || self.parameters.is_object()) {
            return Err(Error::Schema("parameters must be an object".into()));
        }
        Ok(())
    }

    /// Replaces the window bound, shrinking the margin if it no longer fits.
    pub fn with_bound(mut self, bound: u64) -> Result<Self> {
        let margin = self.window.margin.min(bound / 2);
        self.window = Window::new(bound, margin)?;
        Ok(self)
    }
}

/// Output of [`run`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub scenario: String,
    pub operation: &'static str,
    pub seed: u64,
    pub generator: &'static str,
    pub window: Window,
    /// Every certification and property flag the operation computed.
    pub flags: BTreeMap<String, bool>,
    pub passed: bool,
    pub result: Value,
    pub audit: Vec<Value>,
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// `flag,value` lines.
    pub fn csv(&self) -> String {
        let mut out = String::from("scenario,operation,flag,value\n");
        for (k, v) in &self.flags {
            out.push_str(&format!("{},{},{k},{v}\n", self.scenario, self.operation));
        }
        out.push_str(&format!("{},{},passed,{}\n", self.scenario, self.operation, self.passed));
        out
    }
}

/// A module error raised while running a named scenario.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("scenario {scenario:?} ({operation}): {source}")]
pub struct ScenarioError {
    pub scenario: String,
    pub operation: &'static str,
    pub source: Error,
}

struct Out {
    flags: BTreeMap<String, bool>,
    result: Value,
    audit: Vec<Value>,
}

impl Out {
    fn new(result: Value) -> Self {
        Out { flags: BTreeMap::new(), result, audit: Vec::new() }
    }

    fn flag(&mut self, k: &str, v: bool) -> &mut Self {
        self.flags.insert(k.to_string(), v);
        self
    }
}

pub fn run(s: &Scenario) -> std::result::Result<Report, ScenarioError> {
    run_with_jobs(s, 1)
}

/// As [`run`]; `jobs` is handed to operations that can split their work.
pub fn run_with_jobs(s: &Scenario, jobs: usize) -> std::result::Result<Report, ScenarioError> {
    let op = s.operation;
    let out = dispatch(s, jobs).map_err(|source| ScenarioError {
        scenario: s.name.clone(),
        operation: op.name(),
        source,
    })?;
    Ok(Report {
        scenario: s.name.clone(),
        operation: op.name(),
        seed: s.seed,
        generator: GENERATOR,
        window: s.window,
        passed: out.flags.values().all(|&b| b),
        flags: out.flags,
        result: out.result,
        audit: out.audit,
    })
}

/// Runs several scenarios on up to `jobs` threads; results keep input order.
pub fn run_many(ss: &[Scenario], jobs: usize) -> Vec<std::result::Result<Report, ScenarioError>> {
    let jobs = jobs.max(1).min(ss.len().max(1));
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut slots: Vec<Option<_>> = (0..ss.len()).map(|_| None).collect();
    std::thread::scope(|sc| {
        let handles: Vec<_> = (0..jobs)
            .map(|_| {
                sc.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let k = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                        if k >= ss.len() {
                            break;
                        }
                        done.push((k, run(&ss[k])));
                    }
                    done
                })
            })
            .collect();
        for h in handles {
            for (k, r) in h.join().expect("scenario thread panicked") {
                slots[k] = Some(r);
            }
        }
    });
    slots.into_iter().map(Option::unwrap).collect()
}

fn dispatch(s: &Scenario, jobs: usize) -> Result<Out> {
    match s.operation {
        Operation::Identity => op_identity(s),
        Operation::GzFamily => op_gz_family(s),
        Operation::TowerRun => op_tower_run(s),
        Operation::NiceBuild => op_nice_build(s),
        Operation::DiagMass => op_diag_mass(s),
        Operation::Cm1Verify => op_cm1(s),
        Operation::Spectrum => op_spectrum(s, jobs),
    }
}

fn param<T: serde::de::DeserializeOwned>(s: &Scenario, key: &str) -> Result<Option<T>> {
    match s.parameters.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => serde_json::from_value(v.clone())
            .map(Some)
            .map_err(|e| Error::Schema(format!("parameter {key}: {e}"))),
    }
}

fn rational_param(s: &Scenario, key: &str, default: &str) -> Result<BigRational> {
    let text: String = param(s, key)?.unwrap_or_else(|| default.to_string());
    parse_rational(&text).map_err(|e| Error::Schema(format!("parameter {key}: {e}")))
}

/// The scenario family as explicit expressions; nice families are built here.
fn members(s: &Scenario) -> Result<Option<Vec<PermExpr>>> {
    Ok(match &s.family_spec {
        None => None,
        Some(FamilySpec::Members { members }) => Some(members.clone()),
        Some(FamilySpec::Nice { count }) => Some(build_nice_family(s.seed, *count, &s.window)?.family.members),
        Some(FamilySpec::XorBlocks { block_len, masks }) => {
            let blocks = BlockSequence::arithmetic(0, *block_len)?;
            Some(
                masks
                    .iter()
                    .map(|&mask| PermExpr::block_local(blocks.clone(), LocalRule::Xor { mask }))
                    .collect(),
            )
        }
    })
}

fn require_members(s: &Scenario) -> Result<Vec<PermExpr>> {
    match members(s)? {
        Some(m) if !m.is_empty() => Ok(m),
        _ => Err(Error::Schema(format!("operation {} needs a non-empty familySpec", s.operation.name()))),
    }
}

fn op_identity(s: &Scenario) -> Result<Out> {
    let n = members(s)?.map_or(0, |m| m.len());
    let mut out = Out::new(json!({ "members": n, "interior": s.window.interior() }));
    out.flag("schema_valid", true);
    Ok(out)
}

/// Repairs the first member on the scenario blocks and checks the `g_Z`
/// family for `zCount` seeded index sets; the second member, when present,
/// is the block-respecting `h` of the containment check.
fn op_gz_family(s: &Scenario) -> Result<Out> {
    let fam = require_members(s)?;
    let rule: BlockRule = param(s, "blocks")?.unwrap_or(BlockRule::FactorialGaps { start: 0 });
    let blocks = BlockSequence::new(rule)?;
    let z_count: usize = param(s, "zCount")?.unwrap_or(4);
    let first: u64 = param(s, "firstBlock")?.unwrap_or(2);
    let w = s.window;
    let nblocks = blocks.complete_blocks_below(w.bound) as u64;
    if nblocks <= first + 1 {
        return Err(Error::InsufficientWindow { bound: w.bound, reason: format!("{nblocks} complete blocks") });
    }
    let g = &fam[0];
    let rep = repair(g, &blocks, &w, Scan::Full)?;
    let leak = rep.leakage.leak_set();
    let preserving = check_block_preserving(&rep.perm, &blocks, &w).is_ok();
    let leak_set: BTreeSet<u64> = leak.iter().copied().collect();
    let agrees = (0..w.interior())
        .filter(|x| !leak_set.contains(x))
        .all(|x| rep.perm.at(x, w.bound) == g.at(x, w.bound));

    let mut r = ChaCha8Rng::seed_from_u64(s.seed);
    let avail = nblocks - first;
    let mut zs = Vec::new();
    let mut seen = BTreeSet::new();
    let limit = if avail >= 63 { usize::MAX } else { (1usize << avail) - 1 };
    while zs.len() < z_count.min(limit) {
        let z: BTreeSet<u64> = (first..nblocks).filter(|_| r.gen_bool(0.5)).collect();
        if seen.insert(z.clone()) {
            zs.push(IndexSetExpr::Finite { indices: z });
        }
    }
    let pairs = gz_pairwise_nc(&rep.perm, &zs, &blocks, &w);
    let commuting = pairs.iter().all(|(_, _, p)| p.is_empty());
    let wit = gz_distinct_witnesses(&rep.perm, &zs, &blocks, &w)?;
    let distinct = wit.iter().all(|(_, _, p)| p.is_some());

    let mut out = Out::new(Value::Null);
    let mut containment = Vec::new();
    if let Some(h) = fam.get(1) {
        let mut all = true;
        for (i, z) in zs.iter().enumerate() {
            let gz = g_z(&rep.perm, z, &blocks, None)?;
            let c = commutation_containment(g, &gz, &leak, h, &blocks, &w, Scan::Full)?;
            all &= c.contained;
            containment.push(json!({ "z": i, "nc": c.nc.len(), "e": c.e.len(), "contained": c.contained, "escapes": c.escapes }));
        }
        out.flag("containment", all);
    }
    let verdict = s.ideal_spec.as_ref().map(|i| contains(i, &SetExpr::finite(leak.iter().copied())));
    out.flag("block_preserving", preserving)
        .flag("agrees_off_leak", agrees)
        .flag("pairwise_commute", commuting)
        .flag("distinct", distinct);
    out.result = json!({
        "blocks": nblocks,
        "leak": leak,
        "densities": rep.leakage.densities().iter().map(|d| d.to_string()).collect::<Vec<_>>(),
        "leak_in_ideal": verdict,
        "z": zs,
        "witnesses": wit,
        "containment": containment,
    });
    out.audit = rep
        .leakage
        .per_block
        .iter()
        .map(|b| serde_json::to_value(b).expect("leak record serializes"))
        .collect();
    Ok(out)
}

fn op_tower_run(s: &Scenario) -> Result<Out> {
    let fam = require_members(s)?;
    let w = s.window;
    let npoints: u64 = param(s, "points")?.unwrap_or(1000);
    let ndiag: usize = param(s, "diagonal")?.unwrap_or(10);
    let points: Vec<u64> = (0..npoints.min(w.interior())).collect();
    let mut r = ChaCha8Rng::seed_from_u64(s.seed);
    let diag: Vec<(PermExpr, u64)> = (0..ndiag)
        .map(|_| (fam[r.gen_range(0..fam.len())].clone(), r.gen_range(0..npoints.max(1))))
        .collect();
    let run = tower_run(&fam, &points, &diag, &w)?;
    let sq = compose(&run.pi_g, &run.pi_g);
    let involution = (0..w.bound).all(|n| sq.at(n, w.bound) == Ev::Val(n));
    let nc: Vec<(bool, Vec<u64>)> = (0..fam.len()).map(|i| run.nc_within_audit(i, &w)).collect();
    let wit = run.diagonal_witnesses(&diag, &w);
    let mut out = Out::new(json!({
        "domain": run.condition.h.len(),
        "steps": run.audit.len(),
        "nc_outside_audit": nc.iter().map(|(_, p)| p).collect::<Vec<_>>(),
        "diagonal": diag.iter().zip(&wit).map(|((_, k), j)| json!({ "k": k, "witness": j })).collect::<Vec<_>>(),
        "violations": run.violations,
    }));
    out.flag("order_respected", run.violations.is_empty())
        .flag("involution", involution)
        .flag("nc_within_audit", nc.iter().all(|(b, _)| *b))
        .flag("diagonal_witnesses", wit.iter().all(Option::is_some))
        .flag("points_covered", points.iter().all(|&n| run.condition.in_domain(n)));
    out.audit = run.audit.iter().map(|a| serde_json::to_value(a).expect("audit serializes")).collect();
    Ok(out)
}

fn nice_count(s: &Scenario, default: usize) -> Result<usize> {
    Ok(match &s.family_spec {
        Some(FamilySpec::Nice { count }) => *count,
        None => param(s, "count")?.unwrap_or(default),
        Some(_) => return Err(Error::Schema("this operation builds its own family; use kind \"nice\"".into())),
    })
}

fn op_nice_build(s: &Scenario) -> Result<Out> {
    let count = nice_count(s, 3)?;
    let build = build_nice_family(s.seed, count, &s.window)?;
    let check = nice_check(&build.family)?;
    let mut out = Out::new(json!({
        "members": build.family.members.len(),
        "check": check,
    }));
    out.flag("steps_valid", build.logs.iter().all(|l| l.violations.is_empty()))
        .flag("nice_check", check.passed);
    out.audit = build.logs.iter().map(|l| serde_json::to_value(l).expect("log serializes")).collect();
    Ok(out)
}

/// Greedy gadget search against `pi` from a fixed identity prefix.
fn op_diag_mass(s: &Scenario) -> Result<Out> {
    let fam = match members(s)? {
        Some(m) => m,
        None => vec![PermExpr::adjacent_swaps(0)],
    };
    let nf = NiceFamily { members: fam, window: s.window };
    let ctx = NiceContext::new(&nf)?;
    let pi: PermExpr = param(s, "pi")?.unwrap_or_else(|| {
        PermExpr::block_local(BlockSequence::arithmetic(0, 4).expect("valid blocks"), LocalRule::Xor { mask: 2 })
    });
    let k: u64 = param(s, "k")?.unwrap_or(0);
    let m: usize = param(s, "m")?.unwrap_or(1).min(ctx.len());
    let prefix: u64 = param(s, "prefix")?.unwrap_or(8);
    let eps = rational_param(s, "epsilon", "1/2")?;
    let target = rational_param(s, "target", "1")?;
    let c = NiceCondition::new((0..prefix).map(|x| (x, x)).collect(), m, eps, &ctx)?;
    let (d, rep) = diagonalize_summable(&c, &ctx, &pi, k, &target)?;
    let valid = nice_violations(&d, &ctx);
    let order = nice_order_violations(&d, &c, &ctx);
    let mut out = Out::new(json!({
        "mass": rep.mass,
        "witnesses": rep.witnesses.len(),
        "stop": rep.stop,
        "margin": rep.margin,
        "violations": valid.iter().chain(&order).collect::<Vec<_>>(),
    }));
    out.flag("reached", rep.reached)
        .flag("condition_valid", valid.is_empty())
        .flag("extends_start", order.is_empty())
        .flag("margin_positive", rep.margin.points == 0 || rep.margin.min > 0.0);
    out.audit = rep.gadgets.iter().map(|g| serde_json::to_value(g).expect("gadget serializes")).collect();
    Ok(out)
}

fn op_cm1(s: &Scenario) -> Result<Out> {
    let count = nice_count(s, 3)?;
    let eps = rational_param(s, "epsilon", "1/2")?;
    let k: usize = param(s, "k")?.unwrap_or(2);
    let build = build_nice_family(s.seed, count, &s.window)?;
    let ctx = NiceContext::new(&build.family)?;
    let ms: Vec<usize> = match param::<usize>(s, "m")? {
        Some(m) => vec![m],
        None => (1..=ctx.len()).collect(),
    };
    let mut rows = Vec::new();
    let mut holds = true;
    let mut checked = 0;
    for m in ms {
        let st = ctx.stage(m.clamp(1, ctx.len().max(1)));
        let range = st.stable_from..st.usable_end;
        match cm1_verify(&ctx, m, range, k, &eps) {
            Ok(rep) => {
                holds &= rep.holds();
                checked += 1;
                rows.push(json!({ "m": m, "report": rep }));
            }
            Err(Error::HypothesisFails { class, detail }) => {
                rows.push(json!({ "m": m, "skipped": format!("class {class}: {detail}") }));
            }
            Err(e) => return Err(e),
        }
    }
    let mut out = Out::new(json!({ "epsilon": eps.to_string(), "k": k, "stages_checked": checked }));
    out.flag("cm1_holds", holds);
    out.audit = rows;
    Ok(out)
}

fn op_spectrum(s: &Scenario, jobs: usize) -> Result<Out> {
    let n: usize = param(s, "n")?.ok_or_else(|| Error::Schema("spectrum needs parameter n".into()))?;
    let rep = spectrum_report(n, jobs)?;
    let mut out = Out::new(serde_json::to_value(&rep).expect("spectrum serializes"));
    out.flag("strategies_agree", rep.strategies_agree);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal(op: &str) -> String {
        format!(r#"{{"name":"t","window":{{"bound":64,"margin":4}},"operation":"{op}","seed":1}}"#)
    }

    #[test]
    fn identity_scenario_is_trivial() {
        let s = Scenario::from_json(&minimal("identity")).unwrap();
        let r = run(&s).unwrap();
        assert!(r.passed);
        assert_eq!(r.generator, "chacha8");
        assert_eq!(r.result["interior"], 60);
    }

    #[test]
    fn malformed_input_is_a_schema_error() {
        assert!(matches!(Scenario::from_json("{"), Err(Error::Schema(_))));
        assert!(matches!(Scenario::from_json(&minimal("frobnicate")), Err(Error::Schema(_))));
        let bad_window = r#"{"name":"t","window":{"bound":4,"margin":4},"operation":"identity"}"#;
        assert!(matches!(Scenario::from_json(bad_window), Err(Error::Schema(_))));
        let extra = r#"{"name":"t","window":{"bound":9},"operation":"identity","colour":1}"#;
        assert!(matches!(Scenario::from_json(extra), Err(Error::Schema(_))));
    }

    #[test]
    fn module_errors_carry_the_scenario() {
        let s = Scenario::from_json(&minimal("tower-run")).unwrap();
        let e = run(&s).unwrap_err();
        assert_eq!(e.scenario, "t");
        assert!(matches!(e.source, Error::Schema(_)));
    }

    #[test]
    fn reports_are_deterministic() {
        let text = r#"{"name":"x","window":{"bound":2048,"margin":64},"operation":"tower-run",
            "familySpec":{"kind":"xor_blocks","block_len":16,"masks":[1,2,4]},
            "parameters":{"points":200,"diagonal":4},"seed":9}"#;
        let s = Scenario::from_json(text).unwrap();
        let a = run(&s).unwrap();
        assert!(a.passed, "{:?}", a.flags);
        let b = run_many(&[s.clone(), s], 2);
        for r in b {
            assert_eq!(r.unwrap().to_json(), a.to_json());
        }
    }

    #[test]
    fn spectrum_of_four() {
        let text = r#"{"name":"s","window":{"bound":1},"operation":"spectrum","parameters":{"n":4}}"#;
        let r = run(&Scenario::from_json(text).unwrap()).unwrap();
        assert!(r.passed);
        assert_eq!(r.result["spectrum"], json!([3, 4]));
    }

    #[test]
    fn diag_mass_defaults_reach_target() {
        let text = r#"{"name":"d","window":{"bound":4096,"margin":32},"operation":"diag-mass"}"#;
        let r = run(&Scenario::from_json(text).unwrap()).unwrap();
        assert!(r.passed, "{:?} {}", r.flags, r.result);
    }
}
