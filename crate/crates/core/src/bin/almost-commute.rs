use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use almost_commute::error::Error;
use almost_commute::harness::scenario::{run_many, run_with_jobs, Report, Scenario, ScenarioError};
use almost_commute::harness::verify::{check_keys, verify_all, DEFAULT_SCALE};

#[derive(Parser)]
#[command(name = "almost-commute", version, about = "Checks and builders for almost commuting permutations")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Window bound; for verify-all, the window scale.
    #[arg(long, global = true)]
    window: Option<u64>,
    /// Seed of the chacha8 generator.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print the full JSON report.
    #[arg(long, global = true, conflicts_with = "csv")]
    json: bool,
    /// Print CSV rows.
    #[arg(long, global = true)]
    csv: bool,
    /// Worker threads.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one or more scenario files.
    Run {
        #[arg(long, required = true, num_args = 1..)]
        scenario: Vec<PathBuf>,
    },
    /// Repair a leaky map on factorial blocks and check its g_Z family.
    GzFamily {
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Number of seeded index sets.
        #[arg(long, default_value_t = 8)]
        z_count: usize,
    },
    /// Scheduled tower run over block-local involutions.
    TowerRun {
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        points: u64,
        #[arg(long, default_value_t = 10)]
        diagonal: usize,
    },
    /// Build a nice family and check it.
    NiceBuild {
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        count: usize,
    },
    /// Greedy gadget search for reciprocal mass against a class-level map.
    DiagMass {
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Target mass as a fraction, e.g. 3/2.
        #[arg(long, default_value = "1")]
        target: String,
    },
    /// Span, gap, k-gap and map bounds on a built family.
    Cm1Verify {
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        count: usize,
        #[arg(long, default_value = "1/2")]
        epsilon: String,
        #[arg(long, default_value_t = 2)]
        k: usize,
    },
    /// Orders of maximal abelian subgroups of Sym(n).
    Spectrum {
        #[arg(long)]
        n: usize,
    },
    /// Run the property suite; optional check names select a subset.
    VerifyAll {
        checks: Vec<String>,
    },
}

enum Failure {
    Usage(String),
    Module(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Schema(m) => Failure::Usage(m),
            e @ (Error::CapExceeded { .. } | Error::Precondition(_)) => Failure::Usage(e.to_string()),
            other => Failure::Module(other.to_string()),
        }
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        match e.source {
            Error::Schema(_) | Error::CapExceeded { .. } | Error::Precondition(_) => Failure::Usage(e.to_string()),
            _ => Failure::Module(e.to_string()),
        }
    }
}

fn scenario(c: &Common, file: Option<&PathBuf>, default: Value) -> Result<Scenario, Failure> {
    let mut s = match file {
        Some(p) => Scenario::load(p)?,
        None => Scenario::from_json(&default.to_string())?,
    };
    if let Some(b) = c.window {
        s = s.with_bound(b).map_err(|e| Failure::Usage(e.to_string()))?;
    }
    if let Some(seed) = c.seed {
        s.seed = seed;
    }
    Ok(s)
}

fn print_reports(c: &Common, reports: &[Report]) {
    if c.json {
        if let [r] = reports {
            println!("{}", r.to_json());
        } else {
            println!("{}", serde_json::to_string_pretty(reports).expect("reports serialize"));
        }
    } else if c.csv {
        for (i, r) in reports.iter().enumerate() {
            let csv = r.csv();
            print!("{}", if i == 0 { &csv[..] } else { csv.split_once('\n').map_or("", |x| x.1) });
        }
    } else {
        for r in reports {
            println!(
                "{} [{} seed={} window={}/{}]: {}",
                r.scenario,
                r.operation,
                r.seed,
                r.window.bound,
                r.window.margin,
                if r.passed { "PASS" } else { "FAIL" }
            );
            for (k, v) in &r.flags {
                println!("  {k:<20} {v}");
            }
            if !r.passed {
                println!("  (--json shows the failing instances)");
            }
        }
    }
}

fn one(c: &Common, s: Scenario) -> Result<bool, Failure> {
    let r = run_with_jobs(&s, c.jobs)?;
    print_reports(c, std::slice::from_ref(&r));
    Ok(r.passed)
}

fn body(cli: Cli) -> Result<bool, Failure> {
    let c = &cli.common;
    match &cli.cmd {
        Cmd::Run { scenario: files } => {
            let mut ss = Vec::new();
            for f in files {
                ss.push(scenario(c, Some(f), Value::Null)?);
            }
            let mut reports = Vec::new();
            for r in run_many(&ss, c.jobs) {
                reports.push(r?);
            }
            print_reports(c, &reports);
            Ok(reports.iter().all(|r| r.passed))
        }
        Cmd::GzFamily { scenario: f, z_count } => {
            let fact = json!({ "rule": "factorial_gaps", "start": 0 });
            let band = json!({ "kind": "swap_rule", "rule": { "type": "boundary_band", "blocks": fact, "width": 1 } });
            let rot = |shift: i64| {
                json!({ "kind": "compose",
                    "left": { "kind": "block_local", "blocks": fact, "rule": { "type": "rotate", "shift": shift } },
                    "right": band })
            };
            let d = json!({
                "name": "gz-family", "window": { "bound": 46234, "margin": 0 },
                "idealSpec": { "kind": "block_density", "blocks": fact },
                "familySpec": { "kind": "members", "members": [rot(2), rot(1)] },
                "operation": "gz-family", "parameters": { "blocks": fact, "zCount": z_count }, "seed": 7,
            });
            one(c, scenario(c, f.as_ref(), d)?)
        }
        Cmd::TowerRun { scenario: f, points, diagonal } => {
            let d = json!({
                "name": "tower-run", "window": { "bound": 4096, "margin": 256 },
                "familySpec": { "kind": "xor_blocks", "block_len": 32, "masks": [1, 2, 4, 8, 16] },
                "operation": "tower-run", "parameters": { "points": points, "diagonal": diagonal }, "seed": 11,
            });
            one(c, scenario(c, f.as_ref(), d)?)
        }
        Cmd::NiceBuild { scenario: f, count } => {
            let d = json!({
                "name": "nice-build", "window": { "bound": 20000, "margin": 64 },
                "familySpec": { "kind": "nice", "count": count }, "operation": "nice-build", "seed": 1,
            });
            one(c, scenario(c, f.as_ref(), d)?)
        }
        Cmd::DiagMass { scenario: f, target } => {
            let d = json!({
                "name": "diag-mass", "window": { "bound": 4096, "margin": 32 },
                "operation": "diag-mass", "parameters": { "target": target }, "seed": 0,
            });
            one(c, scenario(c, f.as_ref(), d)?)
        }
        Cmd::Cm1Verify { scenario: f, count, epsilon, k } => {
            let d = json!({
                "name": "cm1-verify", "window": { "bound": 20000, "margin": 64 },
                "familySpec": { "kind": "nice", "count": count }, "operation": "cm1-verify",
                "parameters": { "epsilon": epsilon, "k": k }, "seed": 1,
            });
            one(c, scenario(c, f.as_ref(), d)?)
        }
        Cmd::Spectrum { n } => {
            let d = json!({
                "name": "spectrum", "window": { "bound": 1, "margin": 0 },
                "operation": "spectrum", "parameters": { "n": n },
            });
            let s = Scenario::from_json(&d.to_string())?;
            let r = run_with_jobs(&s, c.jobs)?;
            if c.json || c.csv {
                print_reports(c, std::slice::from_ref(&r));
            } else {
                println!("A(Sym({n})) = {}", r.result["spectrum"]);
                println!("counts by order: {}", r.result["counts"]);
                println!("searches agree: {}", r.result["strategies_agree"]);
            }
            Ok(r.passed)
        }
        Cmd::VerifyAll { checks } => {
            let scale = c.window.unwrap_or(DEFAULT_SCALE);
            let summary = verify_all(checks, scale, c.jobs).map_err(|e| match e {
                Error::Schema(m) => Failure::Usage(format!("{m}\nchecks: {}", check_keys().join(" "))),
                other => other.into(),
            })?;
            if c.json {
                println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
            } else if c.csv {
                print!("{}", summary.csv());
            } else {
                print!("{}", summary.table());
                let failed = summary.rows.iter().filter(|r| !r.passed).count();
                println!("{} checks, {failed} failed", summary.rows.len());
            }
            Ok(summary.passed())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match body(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Module(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
