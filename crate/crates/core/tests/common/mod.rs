//! Shared helpers: fixtures, an exhaustive planner oracle and seeded
//! generators for random groups and scenarios.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::PathBuf;

use feac_core::model::{
    Eid, Emergency, EmergencyGroup, EntityId, InfluenceSpec, Oid, Op, ResourceId, Sigmas, TaskSet,
    TsId,
};
use feac_core::num::Exact;
use feac_core::planner::{FallbackStrategy, PlanContext, PlannerConfig, Strategy};
use feac_core::scenario::DiagnosticKind;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn fixture_text(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).unwrap()
}

pub fn d(s: &str) -> Exact {
    s.parse().unwrap()
}

// ---------------------------------------------------------------------------
// Exhaustive planner oracle
//
// Enumerates every permutation of the group, keeps those that satisfy the
// ordering rules checked directly on the sequence, crosses them with every
// combination of task-sets and keeps the combinations the task-set rule
// allows. Each surviving (order, task-sets) pair is scored from scratch.

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OraclePath {
    pub eids: Vec<String>,
    pub tsids: Vec<String>,
    pub cumulative: Vec<Exact>,
    pub probability: Exact,
    pub total_time: Exact,
    pub feasible: bool,
}

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub pv: Exact,
    pub strategy: Strategy,
    pub chosen: OraclePath,
    pub paths: Vec<OraclePath>,
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Connected components of the undirected dependency graph.
fn components(n: usize, tdt: &[(usize, usize)]) -> Vec<usize> {
    let mut comp: Vec<usize> = (0..n).collect();
    let mut changed = true;
    while changed {
        changed = false;
        for &(a, b) in tdt {
            let m = comp[a].min(comp[b]);
            if comp[a] != m || comp[b] != m {
                let (ca, cb) = (comp[a], comp[b]);
                for c in comp.iter_mut() {
                    if *c == ca || *c == cb {
                        *c = m;
                    }
                }
                changed = true;
            }
        }
    }
    comp
}

/// Dependency-linked members are contiguous, every dependency points
/// forward, blocks go by their most urgent priority and members inside a
/// block by priority.
pub fn admissible(members: &[Emergency], tdt: &[(usize, usize)], order: &[usize]) -> bool {
    let comp = components(members.len(), tdt);
    let pos: BTreeMap<usize, usize> = order.iter().enumerate().map(|(p, &i)| (i, p)).collect();
    if tdt.iter().any(|&(a, b)| pos[&a] > pos[&b]) {
        return false;
    }
    // contiguity: a component never reappears after being left
    let mut seen = BTreeSet::new();
    let mut runs = Vec::new();
    for &i in order {
        if runs.last() != Some(&comp[i]) {
            if !seen.insert(comp[i]) {
                return false;
            }
            runs.push(comp[i]);
        }
    }
    let head = |c: usize| (0..members.len()).filter(|&i| comp[i] == c).map(|i| members[i].prio).min().unwrap();
    if runs.windows(2).any(|w| head(w[0]) > head(w[1])) {
        return false;
    }
    order
        .windows(2)
        .all(|w| comp[w[0]] != comp[w[1]] || members[w[0]].prio <= members[w[1]].prio)
}

fn ts_rank_key(ts: &TaskSet) -> (std::cmp::Reverse<Exact>, Exact, TsId) {
    (std::cmp::Reverse(ts.prob.clone()), ts.exec_time.clone(), ts.tsid.clone())
}

/// Index of the task-set the selection rule allows, and whether it is
/// executable.
fn rule_choice(e: &Emergency, blocked: &BTreeSet<ResourceId>) -> (usize, bool) {
    let best = |filter: &dyn Fn(&TaskSet) -> bool| {
        (0..e.task_sets.len())
            .filter(|&i| filter(&e.task_sets[i]))
            .min_by_key(|&i| ts_rank_key(&e.task_sets[i]))
    };
    match best(&|ts| ts.resources.iter().all(|r| !blocked.contains(r))) {
        Some(i) => (i, true),
        None => (best(&|_| true).unwrap(), false),
    }
}

fn one_minus(x: &Exact) -> Exact {
    Exact::one() - x.clone()
}

/// Metrics of member `i` given the set of pending members.
fn adjusted(
    members: &[Emergency],
    i: usize,
    ts: &TaskSet,
    pending: &BTreeSet<usize>,
    infl: &InfluenceSpec,
    cfg: &PlannerConfig,
) -> (Exact, Exact, Exact) {
    let (mut kp, mut kt, mut ke) = (Exact::one(), Exact::one(), Exact::one());
    for &j in pending {
        if j == i {
            continue;
        }
        if let Some(s) = infl.get(&members[j].eid, &members[i].eid) {
            kp = kp * one_minus(&s.p);
            kt = kt * one_minus(&s.t);
            ke = ke * one_minus(&s.ed);
        }
    }
    let p = kp * ts.prob.clone();
    let t = (Exact::one() + cfg.alpha.clone() * one_minus(&kt)) * ts.exec_time.clone();
    let ed = (Exact::one() - cfg.beta.clone() * one_minus(&ke)) * members[i].ed.clone();
    (p, t, ed)
}

pub fn oracle_plan(
    group: &EmergencyGroup,
    tdt_pairs: &BTreeSet<(Eid, Eid)>,
    infl: &InfluenceSpec,
    cfg: &PlannerConfig,
    ctx: &PlanContext,
) -> OracleResult {
    let members = &group.members;
    let n = members.len();
    let idx = |e: &Eid| members.iter().position(|m| &m.eid == e);
    let tdt: Vec<(usize, usize)> = tdt_pairs
        .iter()
        .filter_map(|(a, b)| Some((idx(a)?, idx(b)?)))
        .collect();
    let zero = Exact::zero();
    let consumed = |i: usize| ctx.consumed.get(&members[i].eid).unwrap_or(&zero).clone();

    // every task-set combination, mixed radix
    let radices: Vec<usize> = members.iter().map(|m| m.task_sets.len()).collect();
    let combos: usize = radices.iter().product();
    let rule: Vec<(usize, bool)> = members.iter().map(|m| rule_choice(m, &ctx.blocked_resources)).collect();

    let mut paths = Vec::new();
    for order in permutations(n).into_iter().filter(|o| admissible(members, &tdt, o)) {
        for mut c in 0..combos {
            let mut choice = Vec::with_capacity(n);
            for &r in &radices {
                choice.push(c % r);
                c /= r;
            }
            if (0..n).any(|i| choice[i] != rule[i].0) {
                continue;
            }
            let mut pending: BTreeSet<usize> = (0..n).collect();
            let mut elapsed = ctx.gate_release.clone();
            let mut path = OraclePath {
                eids: vec![],
                tsids: vec![],
                cumulative: vec![],
                probability: Exact::one(),
                total_time: Exact::zero(),
                feasible: true,
            };
            for &i in &order {
                let ts = &members[i].task_sets[choice[i]];
                let (p, t, ed) = adjusted(members, i, ts, &pending, infl, cfg);
                let finish = elapsed.clone() + t.clone();
                let mut expired = consumed(i) + finish.clone() > ed;
                for &j in &pending {
                    if j != i {
                        let tj = &members[j].task_sets[choice[j]];
                        let (_, _, edj) = adjusted(members, j, tj, &pending, infl, cfg);
                        expired |= consumed(j) + finish.clone() > edj;
                    }
                }
                path.feasible &= rule[i].1 && !expired;
                path.eids.push(members[i].eid.to_string());
                path.tsids.push(ts.tsid.to_string());
                path.cumulative.push(finish.clone());
                path.probability = path.probability * p;
                path.total_time = path.total_time + t;
                elapsed = finish;
                pending.remove(&i);
            }
            paths.push(path);
        }
    }

    let pv = paths
        .iter()
        .filter(|p| p.feasible)
        .map(|p| p.probability.clone())
        .max()
        .unwrap_or_else(Exact::zero);
    let by_prob = |p: &&OraclePath| (std::cmp::Reverse(p.probability.clone()), p.total_time.clone(), p.eids.clone());
    let by_time = |p: &&OraclePath| (p.total_time.clone(), std::cmp::Reverse(p.probability.clone()), p.eids.clone());
    let (strategy, chosen) = if pv.is_positive() {
        (Strategy::Optimal, paths.iter().filter(|p| p.feasible).min_by_key(by_prob))
    } else {
        match cfg.fallback {
            FallbackStrategy::ProbabilityFirst => (Strategy::ProbabilityFirst, paths.iter().min_by_key(by_prob)),
            FallbackStrategy::TimeFirst => (Strategy::TimeFirst, paths.iter().min_by_key(by_time)),
        }
    };
    OracleResult {
        pv,
        strategy,
        chosen: chosen.unwrap().clone(),
        paths,
    }
}

// ---------------------------------------------------------------------------
// Random groups

pub struct RandomGroup {
    pub group: EmergencyGroup,
    pub tdt: BTreeSet<(Eid, Eid)>,
    pub infl: InfluenceSpec,
    pub cfg: PlannerConfig,
    pub ctx: PlanContext,
}

fn pick<'a, R: Rng>(rng: &mut R, xs: &[&'a str]) -> &'a str {
    xs.choose(rng).unwrap()
}

pub fn random_group(seed: u64) -> RandomGroup {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=5);
    let members: Vec<Emergency> = (0..n)
        .map(|i| {
            let n_ts = rng.gen_range(1..=2);
            Emergency {
                eid: Eid::new(format!("E{i}")),
                task_sets: (0..n_ts)
                    .map(|k| TaskSet {
                        tsid: TsId::new(format!("T{i}{k}")),
                        actions: vec![(Oid::new("O"), Op::Use)],
                        exec_time: d(pick(&mut rng, &["0.5", "1", "1.5", "2", "3"])),
                        prob: d(pick(&mut rng, &["0.5", "0.7", "0.8", "0.9", "0.95", "1"])),
                        resources: if rng.gen_bool(0.25) {
                            [ResourceId::new(pick(&mut rng, &["R1", "R2"]))].into()
                        } else {
                            BTreeSet::new()
                        },
                    })
                    .collect(),
                ed: d(pick(&mut rng, &["2", "4", "6", "8", "12", "20"])),
                prio: rng.gen_range(1..=4),
                entity: EntityId::new("X"),
                ft_feasible: true,
            }
        })
        .collect();
    let mut tdt = BTreeSet::new();
    let mut infl = InfluenceSpec::default();
    for a in &members {
        for b in &members {
            if a.prio < b.prio && rng.gen_bool(0.2) {
                tdt.insert((a.eid.clone(), b.eid.clone()));
            }
            if a.eid != b.eid && rng.gen_bool(0.3) {
                let mut s = || d(pick(&mut rng, &["0", "0.1", "0.2", "0.5"]));
                infl.set(a.eid.as_str(), b.eid.as_str(), Sigmas { p: s(), t: s(), ed: s() });
            }
        }
    }
    let cfg = PlannerConfig {
        alpha: d(pick(&mut rng, &["0.5", "1", "2"])),
        beta: d(pick(&mut rng, &["0.5", "1"])),
        k: 120 + rng.gen_range(0..10),
        seed: rng.gen(),
        fallback: if rng.gen_bool(0.5) {
            FallbackStrategy::ProbabilityFirst
        } else {
            FallbackStrategy::TimeFirst
        },
    };
    let mut ctx = PlanContext {
        gate_release: d(pick(&mut rng, &["0", "0.5", "1", "3"])),
        ..PlanContext::default()
    };
    if rng.gen_bool(0.3) {
        ctx.blocked_resources.insert(ResourceId::new("R1"));
    }
    for m in &members {
        if rng.gen_bool(0.2) {
            ctx.consumed.insert(m.eid.clone(), d(pick(&mut rng, &["0.5", "1", "2"])));
        }
    }
    RandomGroup {
        group: EmergencyGroup {
            entity: EntityId::new("X"),
            members,
        },
        tdt,
        infl,
        cfg,
        ctx,
    }
}

// ---------------------------------------------------------------------------
// Random scenarios, emitted as scenario text so the parser is exercised too

pub fn random_scenario(seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = String::new();
    let roles = ["Medic", "Guard", "Tech"];
    let w = &mut s;
    let _ = writeln!(w, "scenario random{seed}");
    let _ = writeln!(w, "config tp = {}", pick(&mut rng, &["0.5", "1", "0.25"]));
    let _ = writeln!(w, "config seed = {}", rng.gen::<u32>());
    let _ = writeln!(w, "config k = {}", pick(&mut rng, &["8", "64"]));
    let _ = writeln!(
        w,
        "config fallback = {}",
        pick(&mut rng, &["probability_first", "time_first"])
    );
    if rng.gen_bool(0.3) {
        let _ = writeln!(w, "config blocked = [R1]");
    }
    for r in roles {
        let _ = writeln!(w, "role {r}");
    }
    let _ = writeln!(w, "constraint close = distance(pos, (0, 0)) <= 30");

    let n_subjects = rng.gen_range(2..=7);
    for i in 0..n_subjects {
        let mut rs: Vec<&str> = roles.iter().copied().filter(|_| rng.gen_bool(0.45)).collect();
        if rs.is_empty() && rng.gen_bool(0.7) {
            rs.push(pick(&mut rng, &roles));
        }
        let _ = writeln!(
            w,
            "subject S{i} {{ pos = ({}, {}) roles = [{}] }}",
            rng.gen_range(0..40),
            rng.gen_range(0..40),
            rs.join(", ")
        );
    }
    let objects = ["O0", "O1", "O2", "O3"];
    for o in objects {
        let _ = write!(w, "object {o}");
        if rng.gen_bool(0.5) {
            let _ = write!(w, " {{ grant {} {} }}", pick(&mut rng, &roles), pick(&mut rng, &["use", "read"]));
        }
        w.push('\n');
    }
    let entities = ["X0", "X1", "X2"];
    for x in entities {
        let _ = writeln!(w, "object {x}");
    }
    let _ = writeln!(w, "object Y0");
    for x in entities {
        if rng.gen_bool(0.5) {
            let _ = writeln!(w, "fgroup {x} = G{x}");
            if rng.gen_bool(0.6) {
                let _ = writeln!(w, "fgroup {x}p = G{x}");
                let _ = writeln!(w, "object {x}p");
            }
        }
    }

    let n_em = rng.gen_range(2..=6);
    let mut ems: Vec<(String, String, i64)> = Vec::new();
    for i in 0..n_em {
        let eid = format!("E{i}");
        let entity = pick(&mut rng, &["env", "X0", "X1", "X2", "X0"]).to_string();
        let prio = rng.gen_range(1..=6);
        let _ = write!(w, "erole {eid}");
        if rng.gen_bool(0.85) {
            let _ = write!(w, " map [{}]", pick(&mut rng, &["Medic", "Guard", "Tech", "Medic, Guard", "Tech, Medic"]));
            if rng.gen_bool(0.2) {
                let _ = write!(w, " constraint close");
            }
        }
        if rng.gen_bool(0.3) {
            let _ = write!(w, " fallback true");
        }
        w.push('\n');
        let _ = writeln!(
            w,
            "emergency {eid} {{ entity {entity} prio {prio} ed {} ft {}",
            pick(&mut rng, &["1", "3", "5", "8", "12", "20"]),
            rng.gen_bool(0.8)
        );
        for k in 0..rng.gen_range(1..=2) {
            let mut acts = Vec::new();
            for o in objects {
                if rng.gen_bool(0.4) {
                    acts.push(format!("({o} {})", pick(&mut rng, &["use", "read", "write", "read_write"])));
                }
            }
            let acts = if acts.is_empty() { vec!["(O0 use)".to_string()] } else { acts };
            let res = if rng.gen_bool(0.3) {
                pick(&mut rng, &["R1", "R2", "R1, R2"])
            } else {
                ""
            };
            let _ = writeln!(
                w,
                "  ts T{i}{k} {{ actions [{}] time {} prob {} resources [{res}] }}",
                acts.join(" "),
                pick(&mut rng, &["0.5", "1", "1.5", "2", "3.3"]),
                pick(&mut rng, &["0.5", "0.75", "0.9", "1"])
            );
        }
        let _ = writeln!(w, "}}");
        ems.push((eid, entity, prio));
    }
    for (a, ea, pa) in &ems {
        for (b, eb, pb) in &ems {
            if ea == eb && pa < pb && rng.gen_bool(0.3) {
                let _ = writeln!(w, "depends time {a} -> {b}");
            }
            if a != b && ea == eb && rng.gen_bool(0.2) {
                let _ = writeln!(w, "influence {a} -> {b} sigma_t 0.2 sigma_p 0.1");
            }
        }
        if ea == "env" {
            for x in entities {
                if rng.gen_bool(0.4) {
                    let _ = writeln!(w, "depends env {x} on {a}");
                }
            }
        }
    }
    for (eid, _, _) in &ems {
        if rng.gen_bool(0.9) {
            let _ = writeln!(w, "at {} raise {eid}", pick(&mut rng, &["0", "0", "0.3", "1", "2.5", "4", "7.1"]));
        }
        if rng.gen_bool(0.4) {
            let _ = writeln!(
                w,
                "at {} force {eid} T{}0 {}",
                pick(&mut rng, &["0", "1"]),
                &eid[1..],
                if rng.gen_bool(0.7) { "success" } else { "failure" }
            );
        }
    }
    if rng.gen_bool(0.3) {
        let _ = writeln!(
            w,
            "at {} fail {}",
            pick(&mut rng, &["0", "1", "2"]),
            pick(&mut rng, &["X0", "X1", "X2", "Y0"])
        );
    }
    for _ in 0..rng.gen_range(0..4) {
        let _ = writeln!(
            w,
            "at {} request S{} {} {}",
            pick(&mut rng, &["0", "1.5", "3", "10", "30"]),
            rng.gen_range(0..n_subjects),
            pick(&mut rng, &objects),
            pick(&mut rng, &["use", "read", "write"])
        );
    }
    s
}

// ---------------------------------------------------------------------------
// Single-fault mutations of the hospital fixture

pub enum Edit {
    /// Replace the first occurrence of `from`; the diagnostic is on its line.
    Replace(&'static str, &'static str),
    /// Append a line; the diagnostic is on it.
    Append(&'static str),
    /// Replace, with the diagnostic on the line holding the third string.
    ReplaceAt(&'static str, &'static str, &'static str),
}

fn edits() -> Vec<(Edit, DiagnosticKind)> {
    vec![
        (Edit::Replace("entity P1  prio 6", "entity P9  prio 6"), DiagnosticKind::Unresolved),
        (Edit::Replace("depends time E6 -> E7", "depends time E7 -> E6"), DiagnosticKind::Invalid),
        (Edit::ReplaceAt("entity P2  prio 8", "entity P2  prio 5", "depends time E6"), DiagnosticKind::Invalid),
        (Edit::Replace("roles = [Technician]", "roles = [Mechanic]"), DiagnosticKind::Unresolved),
        (Edit::Replace("erole E1 map [FireFighter]", "erole E1 map [Firefighter]"), DiagnosticKind::Unresolved),
        (Edit::Replace("erole E3 map [Doctor, Nurse] constraint near_icu", "erole E3 map [Doctor, Nurse] constraint near_ward"), DiagnosticKind::Unresolved),
        (Edit::Replace("(VentilationFan use)", "(Fan use)"), DiagnosticKind::Unresolved),
        (Edit::Replace("depends env P1 on E1", "depends env P1 on E8"), DiagnosticKind::Unresolved),
        (Edit::Replace("depends env P1 on E1", "depends env P3 on E1"), DiagnosticKind::Unresolved),
        (Edit::Replace("influence E4 -> E5", "influence E4 -> E9"), DiagnosticKind::Unresolved),
        (Edit::Replace("at 0 raise E7", "at 0 raise E8"), DiagnosticKind::Unresolved),
        (Edit::Replace("force E5 TS5", "force E5 TS9"), DiagnosticKind::Unresolved),
        (Edit::Replace("at 4 request N1", "at 4 request N9"), DiagnosticKind::Unresolved),
        (Edit::Replace("grant Technician use", "grant Plumber use"), DiagnosticKind::Unresolved),
        (Edit::Append("subject D1 { roles = [Doctor] }"), DiagnosticKind::Duplicate),
        (Edit::Append("object ICUDoor"), DiagnosticKind::Duplicate),
        (Edit::Append("role Nurse"), DiagnosticKind::Duplicate),
        (Edit::Append("erole E4 map [Nurse]"), DiagnosticKind::Duplicate),
        (Edit::Append("at 1 raise E3"), DiagnosticKind::Duplicate),
        (Edit::Replace("prio 9  ed 30", "prio nine  ed 30"), DiagnosticKind::Syntax),
    ]
}

pub struct Mutation {
    pub text: String,
    pub kind: DiagnosticKind,
    /// Line the single diagnostic must point at.
    pub line: usize,
}

pub fn hospital_mutations() -> Vec<Mutation> {
    let base = fixture_text("hospital.feac");
    edits()
        .into_iter()
        .map(|(edit, kind)| {
            let (text, line) = match edit {
                Edit::Replace(from, to) => {
                    let at = base.find(from).unwrap_or_else(|| panic!("`{from}` not in fixture"));
                    (base.replacen(from, to, 1), base[..at].matches('\n').count() + 1)
                }
                Edit::Append(l) => (format!("{base}{l}\n"), base.lines().count() + 1),
                Edit::ReplaceAt(from, to, anchor) => {
                    let text = base.replacen(from, to, 1);
                    let line = text.lines().position(|l| l.contains(anchor)).unwrap() + 1;
                    (text, line)
                }
            };
            Mutation { text, kind, line }
        })
        .collect()
}
