use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use super::{
    ConstraintExpr, Eid, Emergency, EntityId, FgId, Oid, Op, RoleId, RoleKind, Sid, Value,
};
use crate::num::Exact;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subject {
    pub sid: Sid,
    pub properties: BTreeMap<String, Value>,
}

/// One `(role, <oid, op, td>)` pair of an object's ACL.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AclEntry {
    pub role: RoleId,
    pub op: Op,
    pub td: Option<Exact>,
    /// Set for grants issued at run time; `td` is never earlier.
    pub granted_at: Option<Exact>,
    /// Constraint gating the entry at check time.
    pub when: Option<ConstraintExpr>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ObjectEntry {
    pub oid: Oid,
    /// Keyed by `(role, op)` so an ACL can never hold duplicate triples.
    pub acl: BTreeMap<(RoleId, Op), AclEntry>,
}

/// RMT row: ordered normal-role hierarchy plus the mapping constraint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoleMapping {
    pub normal_roles: Vec<RoleId>,
    pub constraint: Option<ConstraintExpr>,
}

/// Subjects, objects, roles, constraints and the eight policy tables.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PolicyStore {
    pub subjects: BTreeMap<Sid, Subject>,
    pub objects: BTreeMap<Oid, ObjectEntry>,
    pub roles: BTreeMap<RoleId, RoleKind>,
    pub constraints: BTreeMap<String, ConstraintExpr>,
    pub srt: BTreeMap<Sid, BTreeSet<RoleId>>,
    pub asrt: BTreeMap<Sid, BTreeSet<RoleId>>,
    /// `(a, b)`: `a` is processed before `b`.
    pub tdt: BTreeSet<(Eid, Eid)>,
    /// `(entity, eid)`: entity waits for environment emergency `eid`.
    pub edt: BTreeSet<(EntityId, Eid)>,
    pub rmt: BTreeMap<RoleId, RoleMapping>,
    pub rct: BTreeMap<RoleId, ConstraintExpr>,
    pub ort: BTreeMap<Sid, BTreeSet<RoleId>>,
    pub efgt: BTreeMap<EntityId, FgId>,
}

impl PolicyStore {
    pub fn role_kind(&self, role: &RoleId) -> Option<RoleKind> {
        self.roles.get(role).copied()
    }

    pub fn is_emergency_role(&self, role: &RoleId) -> bool {
        self.role_kind(role) == Some(RoleKind::Emergency)
    }

    pub fn active_roles(&self, sid: &Sid) -> impl Iterator<Item = &RoleId> {
        self.asrt.get(sid).into_iter().flatten()
    }

    /// Whether the subject currently holds any emergency-role.
    pub fn holds_emergency_role(&self, sid: &Sid) -> bool {
        self.active_roles(sid).any(|r| self.is_emergency_role(r))
    }

    /// Entities are declared subjects or objects, plus the environment.
    pub fn entity_exists(&self, entity: &EntityId) -> bool {
        entity.is_environment()
            || self.subjects.contains_key(entity.as_str())
            || self.objects.contains_key(entity.as_str())
    }

    /// Canonical text rendering; equal stores render to equal bytes.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let list = |set: &BTreeSet<RoleId>| join_or_dash(set.iter().map(|r| r.as_str()));
        for s in self.subjects.values() {
            let _ = write!(out, "subject {}", s.sid);
            for (k, v) in &s.properties {
                let _ = write!(out, " {k}={v}");
            }
            out.push('\n');
        }
        for (role, kind) in &self.roles {
            let kind = match kind {
                RoleKind::Normal => "normal",
                RoleKind::Emergency => "emergency",
            };
            let _ = writeln!(out, "role {role} {kind}");
        }
        for (name, c) in &self.constraints {
            let _ = writeln!(out, "constraint {name} = {c}");
        }
        for o in self.objects.values() {
            let _ = writeln!(out, "object {}", o.oid);
            for e in o.acl.values() {
                let _ = write!(
                    out,
                    "acl {} {} {} td={} at={}",
                    o.oid,
                    e.role,
                    e.op,
                    opt(&e.td),
                    opt(&e.granted_at)
                );
                if let Some(w) = &e.when {
                    let _ = write!(out, " when {w}");
                }
                out.push('\n');
            }
        }
        for (table, map) in [("srt", &self.srt), ("asrt", &self.asrt), ("ort", &self.ort)] {
            for (sid, roles) in map {
                let _ = writeln!(out, "{table} {sid} {}", list(roles));
            }
        }
        for (a, b) in &self.tdt {
            let _ = writeln!(out, "tdt {a} {b}");
        }
        for (e, eid) in &self.edt {
            let _ = writeln!(out, "edt {e} {eid}");
        }
        for (er, m) in &self.rmt {
            let _ = write!(
                out,
                "rmt {er} {}",
                join_or_dash(m.normal_roles.iter().map(|r| r.as_str()))
            );
            if let Some(c) = &m.constraint {
                let _ = write!(out, " when {c}");
            }
            out.push('\n');
        }
        for (er, c) in &self.rct {
            let _ = writeln!(out, "rct {er} {c}");
        }
        for (e, fg) in &self.efgt {
            let _ = writeln!(out, "efgt {e} {fg}");
        }
        out
    }
}

fn opt(v: &Option<Exact>) -> String {
    v.as_ref().map_or_else(|| "-".to_string(), |x| x.to_string())
}

pub(crate) fn join_or_dash<'a>(items: impl Iterator<Item = &'a str>) -> String {
    let v: Vec<&str> = items.collect();
    if v.is_empty() {
        "-".to_string()
    } else {
        v.join(",")
    }
}

/// Per-pair influence coefficients, each in `[0, 1)`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Sigmas {
    pub p: Exact,
    pub t: Exact,
    pub ed: Exact,
}

impl Sigmas {
    pub fn uniform(sigma: Exact) -> Self {
        Sigmas {
            p: sigma.clone(),
            t: sigma.clone(),
            ed: sigma,
        }
    }
}

/// `(influencer, influenced) -> sigmas`. Missing pairs mean no influence.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct InfluenceSpec {
    pub pairs: BTreeMap<(Eid, Eid), Sigmas>,
}

impl InfluenceSpec {
    pub fn get(&self, influencer: &Eid, influenced: &Eid) -> Option<&Sigmas> {
        self.pairs.get(&(influencer.clone(), influenced.clone()))
    }

    pub fn set(&mut self, influencer: &str, influenced: &str, sigmas: Sigmas) {
        self.pairs
            .insert((Eid::new(influencer), Eid::new(influenced)), sigmas);
    }
}

/// A broken table invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub table: &'static str,
    pub entry: String,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {}", self.table, self.entry, self.rule)
    }
}

/// Checks every table invariant; an empty result means the store is sound.
pub fn validate_store(store: &PolicyStore, emergencies: &[Emergency]) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut v = |table: &'static str, entry: String, rule: &str| {
        out.push(Violation {
            table,
            entry,
            rule: rule.to_string(),
        })
    };

    let mut by_eid: BTreeMap<&Eid, &Emergency> = BTreeMap::new();
    for e in emergencies {
        if by_eid.insert(&e.eid, e).is_some() {
            v("E", e.eid.to_string(), "eid must be unique");
        }
        if e.task_sets.is_empty() {
            v("E", e.eid.to_string(), "task-sets must be non-empty");
        }
        if !e.ed.is_positive() {
            v("E", e.eid.to_string(), "Ed must be > 0");
        }
        if !store.entity_exists(&e.entity) {
            v("E", e.eid.to_string(), "entity must be declared");
        }
        if !store.is_emergency_role(&e.emergency_role()) {
            v("E", e.eid.to_string(), "emergency-role of the same name must be declared");
        }
        let mut tsids = BTreeSet::new();
        for ts in &e.task_sets {
            let entry = format!("{}/{}", e.eid, ts.tsid);
            if !tsids.insert(&ts.tsid) {
                v("TS", entry.clone(), "tsid must be unique within the emergency");
            }
            if ts.actions.is_empty() {
                v("TS", entry.clone(), "actions must be non-empty");
            }
            if !ts.exec_time.is_positive() {
                v("TS", entry.clone(), "t must be > 0");
            }
            if !ts.prob.is_positive() || ts.prob > Exact::one() {
                v("TS", entry.clone(), "p must be in (0, 1]");
            }
            for (oid, _) in &ts.actions {
                if !store.objects.contains_key(oid) {
                    v("TS", entry.clone(), &format!("action object {oid} must be declared"));
                }
            }
        }
    }

    let is_normal = |r: &RoleId| store.role_kind(r) == Some(RoleKind::Normal);

    for (sid, roles) in &store.srt {
        if !store.subjects.contains_key(sid) {
            v("SRT", sid.to_string(), "subject must be declared");
        }
        for r in roles {
            if !is_normal(r) {
                v("SRT", format!("({sid}, {r})"), "assignable roles must be declared normal-roles");
            }
        }
    }
    for (sid, roles) in &store.asrt {
        if !store.subjects.contains_key(sid) {
            v("ASRT", sid.to_string(), "subject must be declared");
        }
        let assignable = store.srt.get(sid);
        for r in roles {
            match store.role_kind(r) {
                Some(RoleKind::Normal) => {
                    if !assignable.is_some_and(|s| s.contains(r)) {
                        v("ASRT", format!("({sid}, {r})"), "ASRT ⊂ SRT: active role not assignable");
                    }
                }
                Some(RoleKind::Emergency) => {
                    if !store.ort.contains_key(sid) {
                        v("ASRT", format!("({sid}, {r})"), "emergency-role active without saved ORT roles");
                    }
                }
                None => v("ASRT", format!("({sid}, {r})"), "role must be declared"),
            }
        }
        if roles.iter().filter(|r| store.is_emergency_role(r)).count() > 1 {
            v("ASRT", sid.to_string(), "a subject holds at most one emergency-role");
        }
    }
    for (sid, roles) in &store.ort {
        if !store.subjects.contains_key(sid) {
            v("ORT", sid.to_string(), "subject must be declared");
        }
        for r in roles {
            if !is_normal(r) {
                v("ORT", format!("({sid}, {r})"), "saved roles must be normal-roles");
            }
        }
    }

    for (a, b) in &store.tdt {
        let entry = format!("({a}, {b})");
        match (by_eid.get(a), by_eid.get(b)) {
            (Some(ea), Some(eb)) => {
                if ea.prio >= eb.prio {
                    v(
                        "TDT",
                        entry.clone(),
                        "time-dependency must run from higher priority (lower number) to lower priority",
                    );
                }
                if ea.entity != eb.entity {
                    v("TDT", entry, "time-dependency must stay within one emergency-group");
                }
            }
            _ => v("TDT", entry, "both emergencies must be declared"),
        }
    }
    for (entity, eid) in &store.edt {
        let entry = format!("({entity}, {eid})");
        if !store.entity_exists(entity) {
            v("EDT", entry.clone(), "entity must be declared");
        }
        match by_eid.get(eid) {
            Some(e) if e.entity.is_environment() => {}
            Some(_) => v("EDT", entry, "dependency must name an environment emergency"),
            None => v("EDT", entry, "emergency must be declared"),
        }
    }
    for (er, m) in &store.rmt {
        if !store.is_emergency_role(er) {
            v("RMT", er.to_string(), "key must be an emergency-role");
        }
        for r in &m.normal_roles {
            if !is_normal(r) {
                v("RMT", format!("({er}, {r})"), "mapped roles must be normal-roles");
            }
        }
    }
    for er in store.rct.keys() {
        if !store.is_emergency_role(er) {
            v("RCT", er.to_string(), "key must be an emergency-role");
        }
    }
    for entity in store.efgt.keys() {
        if !store.entity_exists(entity) {
            v("EFGT", entity.to_string(), "entity must be declared");
        }
    }
    for o in store.objects.values() {
        for e in o.acl.values() {
            if store.role_kind(&e.role).is_none() {
                v("ACL", format!("({}, {}, {})", e.role, o.oid, e.op), "role must be declared");
            }
            if let (Some(td), Some(at)) = (&e.td, &e.granted_at) {
                if td < at {
                    v("ACL", format!("({}, {}, {})", e.role, o.oid, e.op), "td must not precede grant time");
                }
            }
        }
    }

    // constraint references and cycles
    let declared_props: BTreeSet<&str> = store
        .subjects
        .values()
        .flat_map(|s| s.properties.keys().map(String::as_str))
        .collect();
    let mut exprs: Vec<(String, &ConstraintExpr)> = Vec::new();
    for (name, c) in &store.constraints {
        exprs.push((format!("constraint {name}"), c));
    }
    for (er, m) in &store.rmt {
        if let Some(c) = &m.constraint {
            exprs.push((format!("RMT {er}"), c));
        }
    }
    for (er, c) in &store.rct {
        exprs.push((format!("RCT {er}"), c));
    }
    for o in store.objects.values() {
        for e in o.acl.values() {
            if let Some(c) = &e.when {
                exprs.push((format!("ACL ({}, {}, {})", e.role, o.oid, e.op), c));
            }
        }
    }
    for (entry, c) in exprs {
        for r in c.references() {
            if !store.constraints.contains_key(r) {
                v("C", entry.clone(), &format!("constraint {r} must be declared"));
            }
        }
        for p in c.properties() {
            if !declared_props.contains(p) {
                v("C", entry.clone(), &format!("property {p} is not declared on any subject"));
            }
        }
        for role in c.roles() {
            if store.role_kind(role).is_none() {
                v("C", entry.clone(), &format!("role {role} must be declared"));
            }
        }
    }
    if let Some(name) = constraint_cycle(store) {
        v("C", name, "named constraints must not reference themselves");
    }
    out
}

fn constraint_cycle(store: &PolicyStore) -> Option<String> {
    // 0 = unvisited, 1 = on stack, 2 = done
    fn visit<'a>(
        name: &'a str,
        store: &'a PolicyStore,
        state: &mut BTreeMap<&'a str, u8>,
    ) -> bool {
        match state.get(name) {
            Some(1) => return true,
            Some(2) => return false,
            _ => {}
        }
        state.insert(name, 1);
        if let Some(c) = store.constraints.get(name) {
            for r in c.references() {
                if visit(r, store, state) {
                    return true;
                }
            }
        }
        state.insert(name, 2);
        false
    }
    let mut state = BTreeMap::new();
    store
        .constraints
        .keys()
        .find(|name| visit(name, store, &mut state))
        .cloned()
}

/// Checks influence pairs: known emergencies, same group, sigmas in `[0, 1)`.
pub fn validate_influence(infl: &InfluenceSpec, emergencies: &[Emergency]) -> Vec<Violation> {
    let by_eid: BTreeMap<&Eid, &Emergency> = emergencies.iter().map(|e| (&e.eid, e)).collect();
    let mut out = Vec::new();
    for ((a, b), s) in &infl.pairs {
        let entry = format!("({a} -> {b})");
        let mut push = |rule: &str| {
            out.push(Violation {
                table: "INFL",
                entry: entry.clone(),
                rule: rule.to_string(),
            })
        };
        match (by_eid.get(a), by_eid.get(b)) {
            (Some(ea), Some(eb)) => {
                if ea.entity != eb.entity {
                    push("influence pairs must stay within one emergency-group");
                }
            }
            _ => push("both emergencies must be declared"),
        }
        if a == b {
            push("an emergency does not influence itself");
        }
        for sigma in [&s.p, &s.t, &s.ed] {
            if sigma.is_negative() || *sigma >= Exact::one() {
                push("sigma must be in [0, 1)");
                break;
            }
        }
    }
    out
}
