use crate::fault::{HealthStatus, HealthTable};
use crate::model::{ConstraintExpr, EntityId, EvalContext, PolicyStore, RoleId, Sid, Subject};

fn eligible(store: &PolicyStore, health: &HealthTable, s: &Subject, when: Option<&ConstraintExpr>) -> bool {
    !store.holds_emergency_role(&s.sid)
        && health.status(&EntityId::new(s.sid.as_str())) != HealthStatus::Failed
        && when.is_none_or(|c| c.eval(s, EvalContext { store }))
}

/// Picks the subject to serve `erole`.
///
/// Walks the mapped normal-role hierarchy top-down; at each level the
/// candidates hold that role in SRT, hold no emergency-role, are not failed
/// and satisfy the mapping constraint. When every level is empty the
/// role-constraint is tried over all subjects. Ties go to the smallest sid.
pub fn select_subject(erole: &RoleId, store: &PolicyStore, health: &HealthTable) -> Option<Sid> {
    if let Some(m) = store.rmt.get(erole) {
        for level in &m.normal_roles {
            let found = store.subjects.values().find(|s| {
                store.srt.get(&s.sid).is_some_and(|r| r.contains(level))
                    && eligible(store, health, s, m.constraint.as_ref())
            });
            if let Some(s) = found {
                return Some(s.sid.clone());
            }
        }
    }
    let c = store.rct.get(erole)?;
    store
        .subjects
        .values()
        .find(|s| eligible(store, health, s, Some(c)))
        .map(|s| s.sid.clone())
}
