//! Offline checks of an audit trace against the engine's guarantees.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::audit::{AuditRecord, RecordKind};
use super::{grant, revoke, store_digest, swap_in, swap_out, Mode};
use crate::fault::transfer_policy;
use crate::model::{EntityId, Oid, Op, PolicyStore, RoleId, Sid};
use crate::num::Exact;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Suite {
    /// Every raised emergency gets a subject (or an unavailability note)
    /// within one poll period.
    Responsiveness,
    /// Emergency-roles only in emergency modes; optimal selection iff Pv > 0.
    Correctness,
    /// No emergency grant survives into normal mode; substitution only on
    /// the Pv = 0 branch.
    Security,
    /// Each grant is rescinded exactly once, no later than `td + tp`.
    Liveness,
    /// Replaying the trace reproduces the final store.
    NonRepudiation,
    SubjectExclusivity,
    EnvironmentGating,
    ResourceExclusivity,
}

impl Suite {
    pub const ALL: [Suite; 8] = [
        Suite::Responsiveness,
        Suite::Correctness,
        Suite::Security,
        Suite::Liveness,
        Suite::NonRepudiation,
        Suite::SubjectExclusivity,
        Suite::EnvironmentGating,
        Suite::ResourceExclusivity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Suite::Responsiveness => "T1-responsiveness",
            Suite::Correctness => "T2-correctness",
            Suite::Security => "T3-security",
            Suite::Liveness => "T4-liveness",
            Suite::NonRepudiation => "T5-non-repudiation",
            Suite::SubjectExclusivity => "subject-exclusivity",
            Suite::EnvironmentGating => "environment-gating",
            Suite::ResourceExclusivity => "resource-exclusivity",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TheoremViolation {
    pub suite: Suite,
    /// Offending record, 0 for whole-trace findings.
    pub seq: u64,
    pub message: String,
}

impl fmt::Display for TheoremViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} violation at seq {}: {}", self.suite, self.seq, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CheckReport {
    pub violations: Vec<TheoremViolation>,
    /// Whether the replay suite ran (it needs the initial store).
    pub replayed: bool,
}

impl CheckReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, suite: Suite) -> usize {
        self.violations.iter().filter(|v| v.suite == suite).count()
    }
}

type GrantKey = (RoleId, Oid, Op);

fn grant_key(r: &AuditRecord) -> Option<GrantKey> {
    Some((
        RoleId::new(r.get("role")?),
        Oid::new(r.get("oid")?),
        r.get("op")?.parse().ok()?,
    ))
}

struct Checker<'a> {
    records: &'a [AuditRecord],
    tp: Exact,
    end: Exact,
    out: Vec<TheoremViolation>,
}

impl Checker<'_> {
    fn flag(&mut self, suite: Suite, seq: u64, message: impl Into<String>) {
        self.out.push(TheoremViolation {
            suite,
            seq,
            message: message.into(),
        });
    }

    fn responsiveness(&mut self) {
        for (i, r) in self.records.iter().enumerate() {
            if r.kind != RecordKind::EmergencyRaised {
                continue;
            }
            let eid = r.field("eid");
            let limit = &r.time + &self.tp;
            let mut served = false;
            for later in &self.records[i + 1..] {
                if later.time > limit {
                    break;
                }
                let answers = match later.kind {
                    RecordKind::RoleAssigned => later.get("eid") == Some(eid),
                    RecordKind::SubjectNotified => {
                        later.get("eid") == Some(eid) && later.get("status") == Some("unavailable")
                    }
                    // nothing is assigned once the system is down
                    RecordKind::Disaster => true,
                    _ => false,
                };
                if answers {
                    served = true;
                    break;
                }
            }
            if !served && limit <= self.end {
                self.flag(
                    Suite::Responsiveness,
                    r.seq,
                    format!("{eid} raised at {} has no assignment by {limit}", r.time),
                );
            }
        }
    }

    fn modes_and_grants(&mut self) {
        let eroles: BTreeSet<&str> = self
            .records
            .iter()
            .filter(|r| matches!(r.kind, RecordKind::RoleAssigned | RecordKind::PermissionGranted))
            .filter_map(|r| r.get("role"))
            .collect();
        let mut mode = Mode::Normal;
        let mut open: BTreeMap<GrantKey, (u64, Exact)> = BTreeMap::new();
        let mut holders: BTreeMap<Sid, u64> = BTreeMap::new();
        // set by ft_substitution, cleared by the next plan_selected
        let mut pending_ft: Option<u64> = None;

        for r in self.records {
            match r.kind {
                RecordKind::StateTransition => {
                    let from = r.field("from").parse::<Mode>();
                    let to = r.field("to").parse::<Mode>();
                    match (from, to) {
                        (Ok(from), Ok(to)) => {
                            if from != mode {
                                self.flag(
                                    Suite::Correctness,
                                    r.seq,
                                    format!("transition from {from} while in {mode}"),
                                );
                            }
                            if to == Mode::Normal && (!open.is_empty() || !holders.is_empty()) {
                                self.flag(
                                    Suite::Security,
                                    r.seq,
                                    format!(
                                        "entering normal mode with {} emergency grants and {} emergency-role holders",
                                        open.len(),
                                        holders.len()
                                    ),
                                );
                            }
                            if to != Mode::FaultTolerant {
                                if let Some(ft) = pending_ft.take() {
                                    self.flag(
                                        Suite::Security,
                                        ft,
                                        "substitution not followed by a fallback selection",
                                    );
                                }
                            }
                            mode = to;
                        }
                        _ => self.flag(Suite::Correctness, r.seq, "unknown mode in transition"),
                    }
                }
                RecordKind::PlanSelected => {
                    let pv = r.exact("pv");
                    let optimal = r.get("strategy") == Some("optimal");
                    match pv {
                        Some(pv) if pv.is_positive() != optimal => self.flag(
                            Suite::Correctness,
                            r.seq,
                            format!("strategy {} with pv={pv}", r.field("strategy")),
                        ),
                        None => self.flag(Suite::Correctness, r.seq, "plan without a pv"),
                        _ => {}
                    }
                    if pending_ft.take().is_some() && optimal {
                        self.flag(Suite::Security, r.seq, "substitution followed by an optimal selection");
                    }
                }
                RecordKind::FtSubstitution => {
                    if mode != Mode::FaultTolerant {
                        self.flag(Suite::Security, r.seq, format!("substitution in {mode} mode"));
                    }
                    pending_ft = Some(r.seq);
                }
                RecordKind::RoleAssigned => {
                    if !matches!(mode, Mode::Emergency | Mode::FaultTolerant) {
                        self.flag(Suite::Correctness, r.seq, format!("emergency-role assigned in {mode} mode"));
                    }
                    let sid = Sid::new(r.field("sid"));
                    if let Some(prev) = holders.insert(sid.clone(), r.seq) {
                        self.flag(
                            Suite::SubjectExclusivity,
                            r.seq,
                            format!("{sid} already holds the emergency-role assigned at seq {prev}"),
                        );
                    }
                }
                RecordKind::RoleRestored => {
                    holders.remove(r.field("sid"));
                }
                RecordKind::PermissionGranted => {
                    let (Some(key), Some(td)) = (grant_key(r), r.exact("td")) else {
                        self.flag(Suite::Liveness, r.seq, "grant without a finite td");
                        continue;
                    };
                    if let Some((prev, _)) = open.insert(key.clone(), (r.seq, td)) {
                        self.flag(
                            Suite::Liveness,
                            r.seq,
                            format!("{} {} {} granted again before the grant at seq {prev} was rescinded", key.0, key.1, key.2),
                        );
                    }
                }
                RecordKind::PermissionRescinded => {
                    let Some(key) = grant_key(r) else {
                        self.flag(Suite::Liveness, r.seq, "malformed rescission");
                        continue;
                    };
                    match open.remove(&key) {
                        None => self.flag(
                            Suite::Liveness,
                            r.seq,
                            format!("{} {} {} rescinded without an open grant", key.0, key.1, key.2),
                        ),
                        Some((seq, td)) if r.time > &td + &self.tp => self.flag(
                            Suite::Liveness,
                            seq,
                            format!("rescinded at {} past td {td} + tp", r.time),
                        ),
                        _ => {}
                    }
                }
                RecordKind::AccessRequest => {
                    if mode == Mode::Normal
                        && r.get("decision") == Some("permit")
                        && eroles.contains(r.field("detail"))
                    {
                        self.flag(
                            Suite::Security,
                            r.seq,
                            format!("emergency-role {} used in normal mode", r.field("detail")),
                        );
                    }
                }
                _ => {}
            }
        }
        if let Some(ft) = pending_ft {
            self.flag(Suite::Security, ft, "substitution not followed by a fallback selection");
        }
        for (key, (seq, td)) in open {
            if &td + &self.tp < self.end {
                self.flag(
                    Suite::Liveness,
                    seq,
                    format!("{} {} {} never rescinded (td {td})", key.0, key.1, key.2),
                );
            }
        }
    }

    fn gating_and_resources(&mut self) {
        let mut env_active: BTreeSet<&str> = BTreeSet::new();
        let mut held: BTreeMap<&str, &str> = BTreeMap::new();
        for r in self.records {
            match r.kind {
                RecordKind::EmergencyRaised if EntityId::new(r.field("entity")).is_environment() => {
                    env_active.insert(r.field("eid"));
                }
                RecordKind::ActionStarted => {
                    for gate in r.list("gates") {
                        if env_active.contains(gate) {
                            self.flag(
                                Suite::EnvironmentGating,
                                r.seq,
                                format!("{} started while {gate} is unresolved", r.field("eid")),
                            );
                        }
                    }
                    for res in r.list("resources") {
                        if let Some(other) = held.insert(res, r.field("eid")) {
                            self.flag(
                                Suite::ResourceExclusivity,
                                r.seq,
                                format!("{res} taken by {} while held by {other}", r.field("eid")),
                            );
                        }
                    }
                }
                RecordKind::ActionFinished | RecordKind::ActionFailed => {
                    let eid = r.field("eid");
                    held.retain(|_, e| *e != eid);
                    let resolved = r.kind == RecordKind::ActionFinished || r.get("reason") != Some("failure");
                    if resolved {
                        env_active.remove(eid);
                    }
                }
                RecordKind::Disaster => env_active.clear(),
                _ => {}
            }
        }
    }
}

/// Runs every suite over a closed trace. The replay suite runs only when
/// the initial store is supplied.
pub fn check_trace(records: &[AuditRecord], initial: Option<&PolicyStore>) -> CheckReport {
    let last = records.last();
    let end = last.map(|r| r.time.clone()).unwrap_or_default();
    let tp = last
        .filter(|r| r.kind == RecordKind::TraceEnd)
        .and_then(|r| r.exact("tp"))
        .unwrap_or_default();
    let mut c = Checker {
        records,
        tp,
        end,
        out: Vec::new(),
    };
    c.responsiveness();
    c.modes_and_grants();
    c.gating_and_resources();
    if let Some(store) = initial {
        match replay_trace(store, records) {
            Ok(final_store) => {
                let digest = last.filter(|r| r.kind == RecordKind::TraceEnd).and_then(|r| r.get("digest"));
                let replayed = store_digest(&final_store);
                if digest != Some(replayed.as_str()) {
                    c.flag(
                        Suite::NonRepudiation,
                        last.map_or(0, |r| r.seq),
                        format!("replayed store digest {replayed} differs from the recorded one"),
                    );
                }
            }
            Err(v) => c.out.push(v),
        }
    }
    c.out.sort_by_key(|v| (v.suite, v.seq));
    CheckReport {
        violations: c.out,
        replayed: initial.is_some(),
    }
}

/// Applies every store-mutating record to `initial`, checking that each
/// record's payload agrees with the state it claims to change.
pub fn replay_trace(initial: &PolicyStore, records: &[AuditRecord]) -> Result<PolicyStore, TheoremViolation> {
    let mut store = initial.clone();
    let fail = |r: &AuditRecord, message: String| TheoremViolation {
        suite: Suite::NonRepudiation,
        seq: r.seq,
        message,
    };
    let roles = |r: &AuditRecord, key: &str| -> BTreeSet<RoleId> { r.list(key).into_iter().map(RoleId::new).collect() };
    for r in records {
        match r.kind {
            RecordKind::PermissionGranted => {
                let (Some((role, oid, op)), Some(td)) = (grant_key(r), r.exact("td")) else {
                    return Err(fail(r, "malformed grant".into()));
                };
                grant(&mut store, &role, &oid, op, &td, &r.time);
            }
            RecordKind::PermissionRescinded => {
                let Some((role, oid, op)) = grant_key(r) else {
                    return Err(fail(r, "malformed rescission".into()));
                };
                if !revoke(&mut store, &role, &oid, op) {
                    return Err(fail(r, format!("no {role} {op} entry on {oid} to rescind")));
                }
            }
            RecordKind::RoleAssigned => {
                let sid = Sid::new(r.field("sid"));
                let saved = roles(r, "saved");
                let current = store.asrt.get(&sid).cloned().unwrap_or_default();
                if current != saved {
                    return Err(fail(r, format!("{sid} active roles differ from the saved ones")));
                }
                swap_in(&mut store, &sid, &RoleId::new(r.field("role")), &saved);
            }
            RecordKind::RoleRestored => {
                let sid = Sid::new(r.field("sid"));
                if swap_out(&mut store, &sid) != roles(r, "restored") {
                    return Err(fail(r, format!("{sid} restored roles differ from ORT")));
                }
            }
            RecordKind::FtSubstitution => {
                let t = transfer_policy(
                    &mut store,
                    &EntityId::new(r.field("failed")),
                    &EntityId::new(r.field("substitute")),
                );
                if t.acl.to_string() != r.field("acl") || t.roles.to_string() != r.field("roles") {
                    return Err(fail(r, "substitution transfers differ from the record".into()));
                }
            }
            _ => {}
        }
    }
    Ok(store)
}
