//! Substitution of a failed entity by a functionally equivalent peer.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::model::{EntityId, Oid, PolicyStore, RoleId, RoleKind, Sid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum HealthStatus {
    #[default]
    Healthy,
    Failed,
    Substituting,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityHealth {
    pub entity: EntityId,
    pub status: HealthStatus,
    /// Entity this one stands in for, when substituting.
    pub substitute_of: Option<EntityId>,
}

/// Health of every entity; unknown entities are healthy.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HealthTable {
    entries: BTreeMap<EntityId, EntityHealth>,
}

impl HealthTable {
    pub fn status(&self, e: &EntityId) -> HealthStatus {
        self.entries.get(e).map_or(HealthStatus::Healthy, |h| h.status)
    }

    pub fn get(&self, e: &EntityId) -> Option<&EntityHealth> {
        self.entries.get(e)
    }

    pub fn set(&mut self, e: &EntityId, status: HealthStatus, substitute_of: Option<EntityId>) {
        self.entries.insert(
            e.clone(),
            EntityHealth {
                entity: e.clone(),
                status,
                substitute_of,
            },
        );
    }

    pub fn mark_failed(&mut self, e: &EntityId) {
        self.set(e, HealthStatus::Failed, None);
    }

    /// Entity currently standing in for `e`.
    pub fn substitute_for(&self, e: &EntityId) -> Option<&EntityId> {
        self.entries
            .values()
            .find(|h| h.substitute_of.as_ref() == Some(e))
            .map(|h| &h.entity)
    }

    /// Failed and nobody has taken over yet.
    pub fn needs_substitute(&self, e: &EntityId) -> bool {
        self.status(e) == HealthStatus::Failed && self.substitute_for(e).is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FtOutcome {
    Substituted,
    Disaster,
}

impl fmt::Display for FtOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FtOutcome::Substituted => "substituted",
            FtOutcome::Disaster => "disaster",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FtReport {
    pub original: EntityId,
    pub substitute: Option<EntityId>,
    pub acl_transferred: usize,
    pub roles_transferred: usize,
    /// Subjects told about the exchange, sorted.
    pub notified: Vec<Sid>,
    pub outcome: FtOutcome,
}

/// Healthy, idle entity of the same function group as `e`, smallest id
/// first. `None` when `e` has no EFGT entry or no peer qualifies.
pub fn find_substitute(
    store: &PolicyStore,
    health: &HealthTable,
    e: &EntityId,
) -> Option<EntityId> {
    let group = store.efgt.get(e)?;
    store
        .efgt
        .iter()
        .filter(|(peer, fg)| *peer != e && *fg == group)
        .map(|(peer, _)| peer)
        .find(|peer| health.status(peer) == HealthStatus::Healthy)
        .cloned()
}

/// Store-side effect of a substitution.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Transfer {
    pub acl: usize,
    pub roles: usize,
    pub notified: Vec<Sid>,
}

/// Copies `e`'s static ACL entries onto `se`'s object and `e`'s normal
/// roles (active or saved while serving an emergency) onto `se`. Run-time
/// emergency grants stay where they are; they are rescinded on their own. Nothing is removed from anyone. Deterministic in the
/// store, so replaying an audit trace can reproduce it.
pub fn transfer_policy(store: &mut PolicyStore, e: &EntityId, se: &EntityId) -> Transfer {
    let mut notified = BTreeSet::new();
    let mut acl = 0;
    let entries: Vec<_> = store
        .objects
        .get(e.as_str())
        .map(|o| {
            o.acl
                .values()
                .filter(|a| a.granted_at.is_none())
                .cloned()
                .collect()
        })
        .unwrap_or_default();
    if !entries.is_empty() {
        let roles: BTreeSet<&RoleId> = entries.iter().map(|a| &a.role).collect();
        for (sid, active) in &store.asrt {
            if active.iter().any(|r| roles.contains(r)) {
                notified.insert(sid.clone());
            }
        }
        let target = store
            .objects
            .entry(Oid::new(se.as_str()))
            .or_insert_with(|| crate::model::ObjectEntry {
                oid: Oid::new(se.as_str()),
                acl: BTreeMap::new(),
            });
        for entry in entries {
            let key = (entry.role.clone(), entry.op);
            if !target.acl.contains_key(&key) {
                target.acl.insert(key, entry);
                acl += 1;
            }
        }
    }

    let mut roles = 0;
    let e_sid = Sid::new(e.as_str());
    let held: BTreeSet<RoleId> = store
        .active_roles(&e_sid)
        .chain(store.ort.get(&e_sid).into_iter().flatten())
        .filter(|r| store.role_kind(r) == Some(RoleKind::Normal))
        .cloned()
        .collect();
    let se_sid = Sid::new(se.as_str());
    if !held.is_empty() && store.subjects.contains_key(&se_sid) {
        let busy = store.holds_emergency_role(&se_sid);
        for r in held {
            store.srt.entry(se_sid.clone()).or_default().insert(r.clone());
            // a subject serving an emergency gets the role back on restore
            let table = if busy { &mut store.ort } else { &mut store.asrt };
            if table.entry(se_sid.clone()).or_default().insert(r) {
                roles += 1;
            }
        }
        if roles > 0 {
            notified.insert(se_sid);
        }
    }
    Transfer {
        acl,
        roles,
        notified: notified.into_iter().collect(),
    }
}

/// Fault tolerance for `e`: disaster when infeasible or without a peer,
/// otherwise the peer takes over `e`'s ACL entries and roles and the health
/// table records the swap.
pub fn apply_fault_tolerance(
    store: &mut PolicyStore,
    health: &mut HealthTable,
    e: &EntityId,
    ft_feasible: bool,
) -> FtReport {
    let disaster = FtReport {
        original: e.clone(),
        substitute: None,
        acl_transferred: 0,
        roles_transferred: 0,
        notified: Vec::new(),
        outcome: FtOutcome::Disaster,
    };
    if !ft_feasible {
        return disaster;
    }
    let Some(se) = find_substitute(store, health, e) else {
        return disaster;
    };
    let t = transfer_policy(store, e, &se);
    health.mark_failed(e);
    health.set(&se, HealthStatus::Substituting, Some(e.clone()));
    FtReport {
        original: e.clone(),
        substitute: Some(se),
        acl_transferred: t.acl,
        roles_transferred: t.roles,
        notified: t.notified,
        outcome: FtOutcome::Substituted,
    }
}
