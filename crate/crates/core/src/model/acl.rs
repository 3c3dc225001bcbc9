use std::fmt;

use super::{EvalContext, Oid, Op, PolicyStore, RoleId, Sid};
use crate::num::Exact;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DenyReason {
    NoActiveRole,
    NoMatchingEntry,
    Expired { role: RoleId, td: Exact },
    ConstraintFailed { role: RoleId },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AccessDecision {
    Permit { role: RoleId },
    Deny(DenyReason),
}

impl AccessDecision {
    pub fn is_permit(&self) -> bool {
        matches!(self, AccessDecision::Permit { .. })
    }
}

impl fmt::Display for AccessDecision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AccessDecision::Permit { role } => write!(f, "permit via {role}"),
            AccessDecision::Deny(DenyReason::NoActiveRole) => write!(f, "deny: no active role"),
            AccessDecision::Deny(DenyReason::NoMatchingEntry) => {
                write!(f, "deny: no matching ACL entry")
            }
            AccessDecision::Deny(DenyReason::Expired { role, td }) => {
                write!(f, "deny: entry for {role} expired at {td}")
            }
            AccessDecision::Deny(DenyReason::ConstraintFailed { role }) => {
                write!(f, "deny: constraint on {role} entry not satisfied")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AclError {
    #[error("unknown subject {0}")]
    UnknownSubject(Sid),
    #[error("unknown object {0}")]
    UnknownObject(Oid),
}

/// Decides an access request against the object's ACL and the subject's
/// active roles. Denials carry the first failing reason in role order.
pub fn acl_check(
    store: &PolicyStore,
    sid: &Sid,
    oid: &Oid,
    op: Op,
    now: &Exact,
) -> Result<AccessDecision, AclError> {
    let subject = store
        .subjects
        .get(sid)
        .ok_or_else(|| AclError::UnknownSubject(sid.clone()))?;
    let object = store
        .objects
        .get(oid)
        .ok_or_else(|| AclError::UnknownObject(oid.clone()))?;

    let mut first_failure: Option<DenyReason> = None;
    let mut any_role = false;
    for role in store.active_roles(sid) {
        any_role = true;
        for granted in Op::ALL.into_iter().filter(|g| g.covers(op)) {
            let Some(entry) = object.acl.get(&(role.clone(), granted)) else {
                continue;
            };
            if let Some(td) = &entry.td {
                if now > td {
                    first_failure.get_or_insert(DenyReason::Expired {
                        role: role.clone(),
                        td: td.clone(),
                    });
                    continue;
                }
            }
            if let Some(cond) = &entry.when {
                if !cond.eval(subject, EvalContext { store }) {
                    first_failure
                        .get_or_insert(DenyReason::ConstraintFailed { role: role.clone() });
                    continue;
                }
            }
            return Ok(AccessDecision::Permit { role: role.clone() });
        }
    }
    let reason = match first_failure {
        Some(r) => r,
        None if !any_role => DenyReason::NoActiveRole,
        None => DenyReason::NoMatchingEntry,
    };
    Ok(AccessDecision::Deny(reason))
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::model::{AclEntry, CmpOp, ConstraintExpr, ObjectEntry, RoleKind, Subject, Value};
    use crate::num::dec;

    fn store_with(td: Option<&str>) -> PolicyStore {
        let mut s = PolicyStore::default();
        s.roles.insert(RoleId::new("Doctor"), RoleKind::Normal);
        s.roles.insert(RoleId::new("Nurse"), RoleKind::Normal);
        s.subjects.insert(
            Sid::new("D1"),
            Subject {
                sid: Sid::new("D1"),
                properties: [("experience".to_string(), Value::Num(dec("5")))].into(),
            },
        );
        s.srt.insert(
            Sid::new("D1"),
            [RoleId::new("Doctor"), RoleId::new("Nurse")].into(),
        );
        s.asrt.insert(Sid::new("D1"), [RoleId::new("Doctor")].into());
        let mut acl = BTreeMap::new();
        acl.insert(
            (RoleId::new("Doctor"), Op::ReadWrite),
            AclEntry {
                role: RoleId::new("Doctor"),
                op: Op::ReadWrite,
                td: td.map(dec),
                granted_at: None,
                when: None,
            },
        );
        acl.insert(
            (RoleId::new("Nurse"), Op::Use),
            AclEntry {
                role: RoleId::new("Nurse"),
                op: Op::Use,
                td: None,
                granted_at: None,
                when: None,
            },
        );
        s.objects.insert(
            Oid::new("P1HealthData"),
            ObjectEntry {
                oid: Oid::new("P1HealthData"),
                acl,
            },
        );
        s
    }

    fn check(s: &PolicyStore, op: Op, now: &str) -> AccessDecision {
        acl_check(s, &Sid::new("D1"), &Oid::new("P1HealthData"), op, &dec(now)).unwrap()
    }

    #[test]
    fn read_write_entry_permits_read() {
        let s = store_with(None);
        assert_eq!(
            check(&s, Op::Read, "5"),
            AccessDecision::Permit {
                role: RoleId::new("Doctor")
            }
        );
    }

    #[test]
    fn expired_entry_denies() {
        let s = store_with(Some("4"));
        assert!(matches!(
            check(&s, Op::Read, "5"),
            AccessDecision::Deny(DenyReason::Expired { .. })
        ));
        // the bound is inclusive
        assert!(check(&s, Op::Read, "4").is_permit());
    }

    #[test]
    fn assignable_but_inactive_role_denies() {
        let s = store_with(None);
        // Nurse has a use entry but is only in SRT, not ASRT
        assert_eq!(
            check(&s, Op::Use, "0"),
            AccessDecision::Deny(DenyReason::NoMatchingEntry)
        );
    }

    #[test]
    fn unknown_ids_are_errors_not_denials() {
        let s = store_with(None);
        assert_eq!(
            acl_check(&s, &Sid::new("X"), &Oid::new("P1HealthData"), Op::Read, &dec("0")),
            Err(AclError::UnknownSubject(Sid::new("X")))
        );
        assert_eq!(
            acl_check(&s, &Sid::new("D1"), &Oid::new("X"), Op::Read, &dec("0")),
            Err(AclError::UnknownObject(Oid::new("X")))
        );
    }

    #[test]
    fn gated_entry_consults_constraint() {
        let mut s = store_with(None);
        let entry = s
            .objects
            .get_mut("P1HealthData")
            .unwrap()
            .acl
            .get_mut(&(RoleId::new("Doctor"), Op::ReadWrite))
            .unwrap();
        entry.when = Some(ConstraintExpr::Compare {
            property: "experience".into(),
            op: CmpOp::Ge,
            value: Value::Num(dec("10")),
        });
        assert_eq!(
            check(&s, Op::Write, "0"),
            AccessDecision::Deny(DenyReason::ConstraintFailed {
                role: RoleId::new("Doctor")
            })
        );
    }

    #[test]
    fn no_active_roles() {
        let mut s = store_with(None);
        s.asrt.clear();
        assert_eq!(
            check(&s, Op::Read, "0"),
            AccessDecision::Deny(DenyReason::NoActiveRole)
        );
    }
}
