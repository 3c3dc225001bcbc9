//! `feac` command line: validate, plan, simulate and audit.
//!
//! Exit codes: 0 success, 1 semantic failure or violation, 2 usage or I/O,
//! 3 disaster.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::engine::{check_trace, parse_trace, Mode, TraceError};
use crate::model::EntityId;
use crate::num::Exact;
use crate::planner::{plan_group, PlanContext};
use crate::scenario::{parse_scenario, run_simulation, Scenario};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DISASTER: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "feac", version, about = "Emergency-aware access control toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse a scenario and check every table invariant.
    Validate { scenario: PathBuf },
    /// Plan one emergency-group and print the selected path.
    Plan {
        scenario: PathBuf,
        #[arg(long)]
        group: String,
        /// Virtual time at which the group's environment gates open.
        #[arg(long, default_value = "0")]
        at: Exact,
    },
    /// Run a scenario and write its audit trace.
    Simulate {
        scenario: PathBuf,
        /// Overrides the scenario's `config seed`.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "60")]
        until: Exact,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Re-check a trace against every theorem suite.
    Audit {
        trace: PathBuf,
        #[arg(long)]
        check: bool,
        /// Initial scenario, enabling replay of the final store.
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
}

fn read(path: &Path, err: &mut dyn Write) -> Result<String, i32> {
    std::fs::read_to_string(path).map_err(|e| {
        let _ = writeln!(err, "error: cannot read {}: {e}", path.display());
        EXIT_USAGE
    })
}

/// Parses and validates; diagnostics go to `err`.
fn load(path: &Path, err: &mut dyn Write) -> Result<Scenario, i32> {
    let text = read(path, err)?;
    let sc = parse_scenario(&text).map_err(|diags| {
        for d in diags {
            let _ = writeln!(err, "{}:{d}", path.display());
        }
        EXIT_FAILURE
    })?;
    let violations = sc.validate();
    if !violations.is_empty() {
        for v in violations {
            let _ = writeln!(err, "{}: invalid: {v}", path.display());
        }
        return Err(EXIT_FAILURE);
    }
    Ok(sc)
}

/// Runs one invocation; `args[0]` is the program name.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    let r = match cli.command {
        Command::Validate { scenario } => validate(&scenario, out, err),
        Command::Plan { scenario, group, at } => plan(&scenario, &group, &at, out, err),
        Command::Simulate {
            scenario,
            seed,
            until,
            trace,
        } => simulate(&scenario, seed, &until, trace.as_deref(), out, err),
        Command::Audit {
            trace,
            check,
            scenario,
        } => audit(&trace, check, scenario.as_deref(), out, err),
    };
    r.unwrap_or_else(|code| code)
}

fn validate(path: &Path, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, i32> {
    let sc = load(path, err)?;
    let _ = writeln!(
        out,
        "{}: ok ({} emergencies, {} groups)",
        path.display(),
        sc.emergencies.len(),
        sc.groups().len()
    );
    Ok(EXIT_OK)
}

fn plan(path: &Path, group: &str, at: &Exact, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, i32> {
    let sc = load(path, err)?;
    let groups = sc.groups();
    let Some(g) = groups.get(&EntityId::new(group)) else {
        let _ = writeln!(err, "error: no emergency-group `{group}`");
        return Err(EXIT_FAILURE);
    };
    let ctx = PlanContext {
        gate_release: at.clone(),
        blocked_resources: sc.config.blocked.clone(),
        ..PlanContext::default()
    };
    let cfg = sc.engine_config().planner;
    let plan = plan_group(g, &sc.store, &sc.influence, &cfg, &ctx, false).map_err(|e| {
        let _ = writeln!(err, "error: planning {group}: {e}");
        EXIT_FAILURE
    })?;
    let members: Vec<String> = g.members.iter().map(|m| m.eid.to_string()).collect();
    let order: Vec<String> = plan.path.eids().iter().map(|e| e.to_string()).collect();
    let _ = writeln!(out, "group {group} at {at}: {}", members.join(", "));
    let _ = write!(out, "{}", plan.to_text());
    let _ = writeln!(
        out,
        "path {} time={} feasible={}",
        order.join(" -> "),
        plan.path.total_time,
        plan.path.feasible
    );
    Ok(EXIT_OK)
}

fn simulate(
    path: &Path,
    seed: Option<u64>,
    until: &Exact,
    trace: Option<&Path>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32, i32> {
    let mut sc = load(path, err)?;
    if let Some(seed) = seed {
        sc.config.seed = seed;
    }
    let t = run_simulation(&sc, until).map_err(|e| {
        let _ = writeln!(err, "error: {e}");
        EXIT_USAGE
    })?;
    if let Some(file) = trace {
        std::fs::write(file, t.trace_text()).map_err(|e| {
            let _ = writeln!(err, "error: cannot write {}: {e}", file.display());
            EXIT_USAGE
        })?;
    }
    let _ = write!(out, "{}", t.summary());
    Ok(if t.final_mode == Mode::Disaster {
        EXIT_DISASTER
    } else {
        EXIT_OK
    })
}

fn audit(
    path: &Path,
    check: bool,
    scenario: Option<&Path>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32, i32> {
    let text = read(path, err)?;
    let records = parse_trace(&text).map_err(|e| {
        let _ = match e {
            TraceError::Malformed { .. } => writeln!(err, "{}: {e}", path.display()),
            TraceError::Truncated => writeln!(
                err,
                "{}: line {}: {e}",
                path.display(),
                text.lines().count()
            ),
        };
        EXIT_USAGE
    })?;
    let initial = scenario.map(|p| load(p, err)).transpose()?;
    if !check {
        let _ = writeln!(out, "{}: {} records", path.display(), records.len());
        return Ok(EXIT_OK);
    }
    let report = check_trace(&records, initial.as_ref().map(|s| &s.store));
    for v in &report.violations {
        let _ = writeln!(out, "{v}");
    }
    if report.ok() {
        let _ = writeln!(
            out,
            "{}: {} records, all checks hold{}",
            path.display(),
            records.len(),
            if initial.is_some() { " (store replayed)" } else { "" }
        );
        Ok(EXIT_OK)
    } else {
        let _ = writeln!(out, "{} violation(s)", report.violations.len());
        Ok(EXIT_FAILURE)
    }
}
