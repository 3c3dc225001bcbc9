//! The execution loop: detection, per-group planning, subject selection,
//! permission enablement and rescission, fault tolerance, auditing.
//!
//! The engine owns all mutable state. One [`Engine::tick`] is one pass of
//! the loop at the current virtual clock, after which the clock moves on by
//! `tp` minutes.

pub mod audit;
mod check;
mod subject;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::fault::{apply_fault_tolerance, FtOutcome, HealthTable};
use crate::model::{
    acl_check, AccessDecision, AclEntry, AclError, DenyReason, Eid, Emergency, EmergencyGroup,
    EntityId, InfluenceSpec, ObjectEntry, Oid, Op, Permission, PolicyStore, ResourceId, RoleId,
    Sid, TsId,
};
use crate::num::Exact;
use crate::planner::{plan_group, Plan, PlanContext, PlanError, PlannerConfig, Strategy};

pub use audit::{join_list, parse_trace, AuditError, AuditLog, AuditRecord, RecordKind, TraceError};
pub use check::{check_trace, replay_trace, CheckReport, Suite, TheoremViolation};
pub use subject::select_subject;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    Normal,
    Emergency,
    FaultTolerant,
    Disaster,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Normal => "normal",
            Mode::Emergency => "emergency",
            Mode::FaultTolerant => "fault_tolerant",
            Mode::Disaster => "disaster",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [Mode::Normal, Mode::Emergency, Mode::FaultTolerant, Mode::Disaster]
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown mode `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EngineConfig {
    /// Poll period in minutes.
    pub tp: Exact,
    pub planner: PlannerConfig,
    /// Resources no task-set can get at all.
    pub blocked_resources: BTreeSet<ResourceId>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            tp: Exact::from_scaled(5, 1),
            planner: PlannerConfig::default(),
            blocked_resources: BTreeSet::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Event {
    Raise(Eid),
    Fail(EntityId),
    /// Fixes the outcome of every execution of `tsid` for `eid`.
    Force { eid: Eid, tsid: TsId, success: bool },
    Request { sid: Sid, oid: Oid, op: Op },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimedEvent {
    pub at: Exact,
    pub event: Event,
}

/// A subject serving one emergency through its emergency-role.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub sid: Sid,
    pub role: RoleId,
    pub eid: Eid,
    /// Every grant carries the same finite `td`.
    pub grants: Vec<Permission>,
    pub td: Exact,
    /// Normal roles parked in ORT.
    pub saved: BTreeSet<RoleId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Eliminated,
    Expired,
    Unprocessed,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Eliminated => "eliminated",
            Outcome::Expired => "expired",
            Outcome::Unprocessed => "unprocessed",
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Read-only snapshot of the engine.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SystemState {
    pub mode: Mode,
    pub clock: Exact,
    /// Active emergencies by owning entity.
    pub active: BTreeMap<EntityId, Vec<Eid>>,
    /// Per EDT-gated entity: whether every environment emergency it waits
    /// on is inactive.
    pub gates: BTreeMap<EntityId, bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EngineError {
    #[error("the system is in disaster state")]
    Disaster,
    #[error("planning group {group}: {source}")]
    Plan { group: EntityId, source: PlanError },
    #[error(transparent)]
    Audit(#[from] AuditError),
    #[error("unknown emergency {0}")]
    UnknownEmergency(Eid),
    #[error("invalid engine configuration: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone)]
struct Active {
    raised_at: Exact,
    assignment: Option<Assignment>,
    noted_unavailable: bool,
}

#[derive(Debug, Clone)]
struct Execution {
    eid: Eid,
    tsid: TsId,
    end: Exact,
    p: Exact,
    resources: BTreeSet<ResourceId>,
}

/// Sort key putting the environment group first.
fn group_key(e: &EntityId) -> (bool, &EntityId) {
    (!e.is_environment(), e)
}

pub struct Engine {
    store: PolicyStore,
    emergencies: BTreeMap<Eid, Emergency>,
    infl: InfluenceSpec,
    cfg: EngineConfig,
    clock: Exact,
    now: Exact,
    mode: Mode,
    health: HealthTable,
    audit: AuditLog,
    events: VecDeque<TimedEvent>,
    active: BTreeMap<Eid, Active>,
    plans: BTreeMap<EntityId, Plan>,
    dirty: BTreeSet<EntityId>,
    running: BTreeMap<EntityId, Execution>,
    locks: BTreeMap<ResourceId, Eid>,
    forced: BTreeMap<Eid, (TsId, bool)>,
    outcomes: BTreeMap<Eid, Outcome>,
    requests: Vec<(Exact, Sid, Oid, Op)>,
    rng: ChaCha8Rng,
}

impl Engine {
    pub fn new(
        store: PolicyStore,
        emergencies: impl IntoIterator<Item = Emergency>,
        infl: InfluenceSpec,
        cfg: EngineConfig,
    ) -> Result<Self, EngineError> {
        if !cfg.tp.is_positive() {
            return Err(EngineError::InvalidConfig("tp must be positive"));
        }
        let rng = ChaCha8Rng::seed_from_u64(cfg.planner.seed);
        Ok(Engine {
            store,
            emergencies: emergencies.into_iter().map(|e| (e.eid.clone(), e)).collect(),
            infl,
            cfg,
            clock: Exact::zero(),
            now: Exact::zero(),
            mode: Mode::Normal,
            health: HealthTable::default(),
            audit: AuditLog::new(),
            events: VecDeque::new(),
            active: BTreeMap::new(),
            plans: BTreeMap::new(),
            dirty: BTreeSet::new(),
            running: BTreeMap::new(),
            locks: BTreeMap::new(),
            forced: BTreeMap::new(),
            outcomes: BTreeMap::new(),
            requests: Vec::new(),
            rng,
        })
    }

    /// Queues events; equal times keep their given order.
    pub fn schedule(&mut self, events: impl IntoIterator<Item = TimedEvent>) {
        let mut all: Vec<TimedEvent> = self.events.drain(..).collect();
        all.extend(events);
        all.sort_by(|a, b| a.at.cmp(&b.at));
        self.events = all.into();
    }

    pub fn store(&self) -> &PolicyStore {
        &self.store
    }

    pub fn audit(&self) -> &AuditLog {
        &self.audit
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Time of the next tick.
    pub fn clock(&self) -> &Exact {
        &self.clock
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn health(&self) -> &HealthTable {
        &self.health
    }

    pub fn outcomes(&self) -> &BTreeMap<Eid, Outcome> {
        &self.outcomes
    }

    pub fn assignment(&self, eid: &Eid) -> Option<&Assignment> {
        self.active.get(eid)?.assignment.as_ref()
    }

    pub fn plan(&self, group: &EntityId) -> Option<&Plan> {
        self.plans.get(group)
    }

    pub fn has_pending_events(&self) -> bool {
        !self.events.is_empty()
    }

    pub fn check_sys_state(&self) -> SystemState {
        let mut active: BTreeMap<EntityId, Vec<Eid>> = BTreeMap::new();
        for eid in self.active.keys() {
            active
                .entry(self.emergencies[eid].entity.clone())
                .or_default()
                .push(eid.clone());
        }
        let mut gates = BTreeMap::new();
        for (entity, _) in &self.store.edt {
            gates.insert(entity.clone(), self.gate_open(entity));
        }
        SystemState {
            mode: self.mode,
            clock: self.clock.clone(),
            active,
            gates,
        }
    }

    fn gate_open(&self, entity: &EntityId) -> bool {
        self.store
            .edt
            .iter()
            .filter(|(e, _)| e == entity)
            .all(|(_, env)| !self.active.contains_key(env))
    }

    fn rec(&mut self, kind: RecordKind, values: Vec<String>) -> Result<(), EngineError> {
        self.audit.record_action(self.now.clone(), kind, values)?;
        Ok(())
    }

    fn transition(&mut self, to: Mode) -> Result<(), EngineError> {
        let from = self.mode;
        self.mode = to;
        self.rec(RecordKind::StateTransition, vec![from.to_string(), to.to_string()])
    }

    /// One pass of the loop at the current clock; returns the records it
    /// appended.
    pub fn tick(&mut self) -> Result<Vec<AuditRecord>, EngineError> {
        if self.mode == Mode::Disaster {
            return Err(EngineError::Disaster);
        }
        let first = self.audit.len();
        self.now = self.clock.clone();
        self.step()?;
        self.clock = &self.clock + &self.cfg.tp;
        Ok(self.audit.records()[first..].to_vec())
    }

    fn step(&mut self) -> Result<(), EngineError> {
        self.take_events()?;
        self.advance_executions()?;
        self.expire_overdue()?;
        if self.mode == Mode::Normal && !self.active.is_empty() {
            self.transition(Mode::Emergency)?;
        } else if self.mode == Mode::Emergency && self.active.is_empty() {
            self.rescind_all("normal")?;
            self.plans.clear();
            self.transition(Mode::Normal)?;
        }
        if self.mode == Mode::Emergency {
            self.replan()?;
        }
        if self.mode == Mode::Emergency {
            self.find_emergencies()?;
            self.start_executions()?;
        }
        if self.mode != Mode::Disaster {
            self.answer_requests()?;
        }
        Ok(())
    }

    fn take_events(&mut self) -> Result<(), EngineError> {
        while self.events.front().is_some_and(|e| e.at <= self.now) {
            let TimedEvent { at, event } = self.events.pop_front().expect("front checked");
            match event {
                Event::Raise(eid) => {
                    let e = self
                        .emergencies
                        .get(&eid)
                        .ok_or_else(|| EngineError::UnknownEmergency(eid.clone()))?;
                    if self.active.contains_key(&eid) {
                        continue;
                    }
                    let (entity, prio, ed) = (e.entity.clone(), e.prio, e.ed.clone());
                    self.active.insert(
                        eid.clone(),
                        Active {
                            raised_at: self.now.clone(),
                            assignment: None,
                            noted_unavailable: false,
                        },
                    );
                    self.outcomes.insert(eid.clone(), Outcome::Unprocessed);
                    self.mark_dirty(&entity);
                    self.rec(
                        RecordKind::EmergencyRaised,
                        vec![eid.to_string(), entity.to_string(), prio.to_string(), ed.to_string(), at.to_string()],
                    )?;
                }
                Event::Fail(entity) => {
                    self.health.mark_failed(&entity);
                    self.mark_dirty(&entity);
                    self.rec(RecordKind::EntityFailed, vec![entity.to_string(), at.to_string()])?;
                }
                Event::Force { eid, tsid, success } => {
                    let outcome = if success { "success" } else { "failure" };
                    self.rec(
                        RecordKind::OutcomeForced,
                        vec![eid.to_string(), tsid.to_string(), outcome.into(), at.to_string()],
                    )?;
                    self.forced.insert(eid, (tsid, success));
                }
                Event::Request { sid, oid, op } => self.requests.push((at, sid, oid, op)),
            }
        }
        Ok(())
    }

    /// A membership change in an environment emergency moves the gates of
    /// every entity depending on it, so those groups replan too.
    fn mark_dirty(&mut self, entity: &EntityId) {
        self.dirty.insert(entity.clone());
        if entity.is_environment() {
            for (e, _) in &self.store.edt {
                self.dirty.insert(e.clone());
            }
        }
    }

    fn deadline(&self, eid: &Eid) -> Exact {
        let a = &self.active[eid];
        match &a.assignment {
            Some(asg) => asg.td.clone(),
            None => &a.raised_at + &self.emergencies[eid].ed,
        }
    }

    fn advance_executions(&mut self) -> Result<(), EngineError> {
        let groups: Vec<EntityId> = self.running.keys().cloned().collect();
        for g in groups {
            let ex = &self.running[&g];
            if ex.end > self.now || ex.end > self.deadline(&ex.eid) {
                continue;
            }
            let ex = self.running.remove(&g).expect("present");
            self.release(&ex);
            let success = match self.forced.get(&ex.eid) {
                Some((ts, s)) if *ts == ex.tsid => *s,
                _ => self.rng.gen::<f64>() < ex.p.to_f64(),
            };
            self.mark_dirty(&g);
            if success {
                self.rec(
                    RecordKind::ActionFinished,
                    vec![ex.eid.to_string(), ex.tsid.to_string(), ex.end.to_string()],
                )?;
                self.rescind_emergency(&ex.eid, "solved")?;
                self.active.remove(&ex.eid);
                self.outcomes.insert(ex.eid, Outcome::Eliminated);
            } else {
                self.rec(
                    RecordKind::ActionFailed,
                    vec![ex.eid.to_string(), ex.tsid.to_string(), "failure".into()],
                )?;
            }
        }
        Ok(())
    }

    /// Emergencies whose deadline passed before they were solved.
    fn expire_overdue(&mut self) -> Result<(), EngineError> {
        let overdue: Vec<Eid> = self
            .active
            .keys()
            .filter(|eid| self.deadline(eid) < self.now)
            .cloned()
            .collect();
        for eid in overdue {
            let entity = self.emergencies[&eid].entity.clone();
            // recorded even when it never started, so the trace shows the end
            let tsid = if self.running.get(&entity).is_some_and(|x| x.eid == eid) {
                let ex = self.running.remove(&entity).expect("present");
                self.release(&ex);
                ex.tsid.to_string()
            } else {
                String::new()
            };
            self.rec(RecordKind::ActionFailed, vec![eid.to_string(), tsid, "expired".into()])?;
            self.rescind_emergency(&eid, "expired")?;
            self.active.remove(&eid);
            self.outcomes.insert(eid, Outcome::Expired);
            self.mark_dirty(&entity);
        }
        Ok(())
    }

    fn release(&mut self, ex: &Execution) {
        for r in &ex.resources {
            self.locks.remove(r);
        }
    }

    /// Removes the grants of one emergency and restores its subject's roles.
    fn rescind_emergency(&mut self, eid: &Eid, reason: &str) -> Result<(), EngineError> {
        let Some(asg) = self.active.get_mut(eid).and_then(|a| a.assignment.take()) else {
            return Ok(());
        };
        for p in &asg.grants {
            revoke(&mut self.store, &asg.role, &p.oid, p.op);
            self.rec(
                RecordKind::PermissionRescinded,
                vec![asg.role.to_string(), p.oid.to_string(), p.op.to_string(), reason.into()],
            )?;
        }
        let restored = swap_out(&mut self.store, &asg.sid);
        self.rec(
            RecordKind::RoleRestored,
            vec![asg.sid.to_string(), asg.role.to_string(), join_list(&restored)],
        )
    }

    fn rescind_all(&mut self, reason: &str) -> Result<(), EngineError> {
        let eids: Vec<Eid> = self.active.keys().cloned().collect();
        for eid in eids {
            self.rescind_emergency(&eid, reason)?;
        }
        Ok(())
    }

    /// Removes emergency grants (all of them, or one emergency's) and puts
    /// the subjects' normal roles back. Idempotent.
    pub fn rescind_permissions(
        &mut self,
        scope: Option<&Eid>,
        reason: &str,
    ) -> Result<Vec<AuditRecord>, EngineError> {
        let first = self.audit.len();
        match scope {
            Some(eid) => self.rescind_emergency(eid, reason)?,
            None => self.rescind_all(reason)?,
        }
        Ok(self.audit.records()[first..].to_vec())
    }

    /// Minutes from now until every gate of `entity` and its own in-flight
    /// action are expected to clear.
    fn gate_release(&self, entity: &EntityId) -> Exact {
        let mut wait = Exact::zero();
        let remaining = |ex: &Execution| (&ex.end - &self.now).max(Exact::zero());
        if let Some(ex) = self.running.get(entity) {
            wait = wait.max(remaining(ex));
        }
        let env = EntityId::new(crate::model::ENV_ENTITY);
        for (e, env_eid) in &self.store.edt {
            if e != entity || !self.active.contains_key(env_eid) {
                continue;
            }
            let est = match self.running.get(&env) {
                Some(ex) if &ex.eid == env_eid => remaining(ex),
                _ => self
                    .plans
                    .get(&env)
                    .and_then(|p| {
                        let i = p.path.links.iter().position(|l| &l.eid == env_eid)?;
                        Some(p.path.cumulative[i].clone())
                    })
                    .unwrap_or_default(),
            };
            wait = wait.max(est);
        }
        wait
    }

    fn replan(&mut self) -> Result<(), EngineError> {
        let mut groups: Vec<EntityId> = std::mem::take(&mut self.dirty).into_iter().collect();
        groups.sort_by(|a, b| group_key(a).cmp(&group_key(b)));
        for g in groups {
            self.replan_group(&g)?;
            if self.mode == Mode::Disaster {
                break;
            }
        }
        Ok(())
    }

    fn replan_group(&mut self, entity: &EntityId) -> Result<(), EngineError> {
        let in_flight = self.running.get(entity).map(|x| x.eid.clone());
        let members: Vec<Emergency> = self
            .active
            .keys()
            .filter(|eid| Some(*eid) != in_flight.as_ref())
            .map(|eid| &self.emergencies[eid])
            .filter(|e| &e.entity == entity)
            .cloned()
            .collect();
        if members.is_empty() {
            self.plans.remove(entity);
            return Ok(());
        }
        let ctx = PlanContext {
            gate_release: self.gate_release(entity),
            consumed: members
                .iter()
                .map(|e| (e.eid.clone(), &self.now - &self.active[&e.eid].raised_at))
                .collect(),
            blocked_resources: self.cfg.blocked_resources.clone(),
        };
        let ft_feasible = members.iter().all(|e| e.ft_feasible);
        let group = EmergencyGroup {
            entity: entity.clone(),
            members,
        };
        let force = self.health.needs_substitute(entity);
        let plan = plan_group(&group, &self.store, &self.infl, &self.cfg.planner, &ctx, force)
            .map_err(|source| EngineError::Plan {
                group: entity.clone(),
                source,
            })?;
        if plan.strategy != Strategy::Optimal {
            self.transition(Mode::FaultTolerant)?;
            if self.health.substitute_for(entity).is_none() {
                let report = apply_fault_tolerance(&mut self.store, &mut self.health, entity, ft_feasible);
                match (report.outcome, report.substitute) {
                    (FtOutcome::Substituted, Some(se)) => self.rec(
                        RecordKind::FtSubstitution,
                        vec![
                            entity.to_string(),
                            se.to_string(),
                            report.acl_transferred.to_string(),
                            report.roles_transferred.to_string(),
                            join_list(&report.notified),
                        ],
                    )?,
                    _ => {
                        let reason = if ft_feasible { "no_substitute" } else { "ft_infeasible" };
                        return self.disaster(entity, reason);
                    }
                }
            }
            self.record_plan(&plan)?;
            self.plans.insert(entity.clone(), plan);
            self.transition(Mode::Emergency)?;
        } else {
            self.record_plan(&plan)?;
            self.plans.insert(entity.clone(), plan);
        }
        Ok(())
    }

    fn record_plan(&mut self, plan: &Plan) -> Result<(), EngineError> {
        self.rec(
            RecordKind::PlanSelected,
            vec![
                plan.group.to_string(),
                plan.strategy.to_string(),
                plan.pv.to_string(),
                join_list(plan.path.links.iter().map(|l| &l.eid)),
                join_list(plan.path.links.iter().map(|l| &l.tsid)),
            ],
        )
    }

    /// Terminal: every action stops, every emergency grant goes.
    fn disaster(&mut self, group: &EntityId, reason: &str) -> Result<(), EngineError> {
        let running: Vec<Execution> = std::mem::take(&mut self.running).into_values().collect();
        for ex in running {
            self.release(&ex);
            self.rec(
                RecordKind::ActionFailed,
                vec![ex.eid.to_string(), ex.tsid.to_string(), "disaster".into()],
            )?;
        }
        self.rescind_all("disaster")?;
        self.plans.clear();
        self.transition(Mode::Disaster)?;
        self.rec(RecordKind::Disaster, vec![group.to_string(), reason.into()])
    }

    /// Task-set and adjusted deadline the current plan holds for `eid`.
    fn planned(&self, eid: &Eid) -> (TsId, Exact) {
        let e = &self.emergencies[eid];
        self.plans
            .get(&e.entity)
            .and_then(|p| p.path.links.iter().find(|l| &l.eid == eid))
            .map(|l| (l.tsid.clone(), l.ed.clone()))
            .unwrap_or_else(|| (e.task_sets[0].tsid.clone(), e.ed.clone()))
    }

    fn find_emergencies(&mut self) -> Result<(), EngineError> {
        let waiting: Vec<Eid> = self
            .active
            .iter()
            .filter(|(_, a)| a.assignment.is_none())
            .map(|(eid, _)| eid.clone())
            .collect();
        for eid in waiting {
            let role = self.emergencies[&eid].emergency_role();
            match select_subject(&role, &self.store, &self.health) {
                Some(sid) => {
                    self.enable_response_actions(&eid, &sid)?;
                }
                None => {
                    let a = self.active.get_mut(&eid).expect("active");
                    if !a.noted_unavailable {
                        a.noted_unavailable = true;
                        self.rec(
                            RecordKind::SubjectNotified,
                            vec![String::new(), eid.to_string(), role.to_string(), "unavailable".into()],
                        )?;
                    }
                }
            }
        }
        Ok(())
    }

    /// Hands `sid` the emergency-role of `eid`: parks its normal roles in
    /// ORT and activates the emergency-role, grants the planned task-set's
    /// permissions with `td = now + Ed'`, then notifies the subject.
    /// Does nothing when the subject already serves another emergency.
    pub fn enable_response_actions(&mut self, eid: &Eid, sid: &Sid) -> Result<Vec<AuditRecord>, EngineError> {
        let first = self.audit.len();
        let e = self.emergencies.get(eid).ok_or_else(|| EngineError::UnknownEmergency(eid.clone()))?;
        if !self.active.contains_key(eid) || self.store.holds_emergency_role(sid) {
            return Ok(Vec::new());
        }
        let role = e.emergency_role();
        let (tsid, ed) = self.planned(eid);
        let actions = e
            .task_set(&tsid)
            .map(|ts| ts.distinct_actions())
            .unwrap_or_default();
        let td = &self.now + &ed;
        let saved = self.store.asrt.get(sid).cloned().unwrap_or_default();
        swap_in(&mut self.store, sid, &role, &saved);
        self.rec(
            RecordKind::RoleAssigned,
            vec![sid.to_string(), role.to_string(), eid.to_string(), join_list(&saved)],
        )?;
        let mut grants = Vec::new();
        for (oid, op) in actions {
            grant(&mut self.store, &role, &oid, op, &td, &self.now);
            self.rec(
                RecordKind::PermissionGranted,
                vec![role.to_string(), oid.to_string(), op.to_string(), td.to_string(), eid.to_string()],
            )?;
            grants.push(Permission {
                oid,
                op,
                td: Some(td.clone()),
            });
        }
        self.rec(
            RecordKind::SubjectNotified,
            vec![sid.to_string(), eid.to_string(), role.to_string(), "assigned".into()],
        )?;
        self.active.get_mut(eid).expect("active").assignment = Some(Assignment {
            sid: sid.clone(),
            role,
            eid: eid.clone(),
            grants,
            td,
            saved,
        });
        Ok(self.audit.records()[first..].to_vec())
    }

    fn start_executions(&mut self) -> Result<(), EngineError> {
        let mut groups: Vec<EntityId> = self.plans.keys().cloned().collect();
        groups.sort_by(|a, b| group_key(a).cmp(&group_key(b)));
        for g in groups {
            if self.running.contains_key(&g) || !self.gate_open(&g) {
                continue;
            }
            let plan = &self.plans[&g];
            let Some(link) = plan.path.links.iter().find(|l| self.active.contains_key(&l.eid)) else {
                continue;
            };
            let Some(asg) = self.active[&link.eid].assignment.as_ref() else {
                continue;
            };
            if !link.executable {
                continue;
            }
            let ts = self.emergencies[&link.eid]
                .task_set(&link.tsid)
                .expect("planned task-set exists");
            if ts.resources.iter().any(|r| self.locks.contains_key(r)) {
                continue;
            }
            let ex = Execution {
                eid: link.eid.clone(),
                tsid: link.tsid.clone(),
                end: &self.now + &link.t,
                p: link.p.clone(),
                resources: ts.resources.clone(),
            };
            let gates: Vec<&Eid> = self
                .store
                .edt
                .iter()
                .filter(|(e, _)| *e == g)
                .map(|(_, env)| env)
                .collect();
            let values = vec![
                ex.eid.to_string(),
                g.to_string(),
                ex.tsid.to_string(),
                asg.sid.to_string(),
                ex.end.to_string(),
                join_list(&ex.resources),
                join_list(gates),
            ];
            for r in &ex.resources {
                self.locks.insert(r.clone(), ex.eid.clone());
            }
            self.running.insert(g, ex);
            self.rec(RecordKind::ActionStarted, values)?;
        }
        Ok(())
    }

    fn answer_requests(&mut self) -> Result<(), EngineError> {
        for (at, sid, oid, op) in std::mem::take(&mut self.requests) {
            let (decision, detail) = match acl_check(&self.store, &sid, &oid, op, &self.now) {
                Ok(AccessDecision::Permit { role }) => ("permit", role.to_string()),
                Ok(AccessDecision::Deny(r)) => ("deny", deny_code(&r).to_string()),
                Err(AclError::UnknownSubject(_)) => ("deny", "unknown_subject".into()),
                Err(AclError::UnknownObject(_)) => ("deny", "unknown_object".into()),
            };
            self.rec(
                RecordKind::AccessRequest,
                vec![sid.to_string(), oid.to_string(), op.to_string(), decision.into(), detail, at.to_string()],
            )?;
        }
        Ok(())
    }

    /// Appends `trace_end` with the final mode and a digest of the store;
    /// marks any still-active emergency unprocessed.
    pub fn close(&mut self) -> Result<(), EngineError> {
        let last = self.audit.records().last().map(|r| r.time.clone()).unwrap_or_default();
        let at = last.max(self.now.clone());
        self.audit.record_action(
            at,
            RecordKind::TraceEnd,
            vec![self.mode.to_string(), self.cfg.tp.to_string(), store_digest(&self.store)],
        )?;
        Ok(())
    }
}

/// Free-function form of [`Engine::tick`].
pub fn engine_tick(engine: &mut Engine) -> Result<Vec<AuditRecord>, EngineError> {
    engine.tick()
}

fn deny_code(r: &DenyReason) -> &'static str {
    match r {
        DenyReason::NoActiveRole => "no_active_role",
        DenyReason::NoMatchingEntry => "no_matching_entry",
        DenyReason::Expired { .. } => "expired",
        DenyReason::ConstraintFailed { .. } => "constraint_failed",
    }
}

/// Hex SHA-256 of the store's canonical dump.
pub fn store_digest(store: &PolicyStore) -> String {
    Sha256::digest(store.dump().as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

// Store mutations, shared with trace replay so both sides agree byte for
// byte. Empty role sets are never stored.

pub(crate) fn grant(store: &mut PolicyStore, role: &RoleId, oid: &Oid, op: Op, td: &Exact, at: &Exact) {
    store
        .objects
        .entry(oid.clone())
        .or_insert_with(|| ObjectEntry {
            oid: oid.clone(),
            acl: BTreeMap::new(),
        })
        .acl
        .insert(
            (role.clone(), op),
            AclEntry {
                role: role.clone(),
                op,
                td: Some(td.clone()),
                granted_at: Some(at.clone()),
                when: None,
            },
        );
}

pub(crate) fn revoke(store: &mut PolicyStore, role: &RoleId, oid: &Oid, op: Op) -> bool {
    store
        .objects
        .get_mut(oid)
        .and_then(|o| o.acl.remove(&(role.clone(), op)))
        .is_some()
}

pub(crate) fn swap_in(store: &mut PolicyStore, sid: &Sid, role: &RoleId, saved: &BTreeSet<RoleId>) {
    if saved.is_empty() {
        store.ort.remove(sid);
    } else {
        store.ort.insert(sid.clone(), saved.clone());
    }
    store.asrt.insert(sid.clone(), [role.clone()].into());
}

pub(crate) fn swap_out(store: &mut PolicyStore, sid: &Sid) -> BTreeSet<RoleId> {
    let restored = store.ort.remove(sid).unwrap_or_default();
    if restored.is_empty() {
        store.asrt.remove(sid);
    } else {
        store.asrt.insert(sid.clone(), restored.clone());
    }
    restored
}
