//! Domain types shared by every other module: subjects, objects, roles,
//! permissions, task-sets, emergencies and the policy tables.

mod acl;
mod constraint;
mod group;
mod store;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::num::Exact;

pub use acl::{acl_check, AccessDecision, AclError, DenyReason};
pub use constraint::{CmpOp, ConstraintExpr, EvalContext, Value};
pub use group::{group_by_entity, EmergencyGroup};
pub use store::{
    validate_influence, validate_store, AclEntry, InfluenceSpec, ObjectEntry, PolicyStore,
    RoleMapping, Sigmas, Subject, Violation,
};

/// Entity id of the environment emergency-group.
pub const ENV_ENTITY: &str = "env";

macro_rules! id_type {
    ($($(#[$meta:meta])* $name:ident),* $(,)?) => {$(
        $(#[$meta])*
        #[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Self {
                $name(s.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({:?})", stringify!($name), self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                $name(s.to_string())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                $name(s)
            }
        }

        impl std::borrow::Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }
    )*};
}

id_type!(
    /// Subject identifier.
    Sid,
    /// Object identifier.
    Oid,
    /// Role name; normal and emergency roles share one namespace.
    RoleId,
    /// Emergency identifier.
    Eid,
    /// Entity an emergency happens on (patient, sensor node, `env`).
    EntityId,
    TsId,
    ResourceId,
    /// Entity function group (EFGT value).
    FgId,
);

impl EntityId {
    pub fn is_environment(&self) -> bool {
        self.0 == ENV_ENTITY
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Op {
    Use,
    Read,
    Write,
    ReadWrite,
}

impl Op {
    pub const ALL: [Op; 4] = [Op::Use, Op::Read, Op::Write, Op::ReadWrite];

    /// Whether a permission for `self` authorizes a request for `requested`.
    pub fn covers(self, requested: Op) -> bool {
        match self {
            Op::ReadWrite => matches!(requested, Op::Read | Op::Write | Op::ReadWrite),
            other => other == requested,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Op::Use => "use",
            Op::Read => "read",
            Op::Write => "write",
            Op::ReadWrite => "read_write",
        }
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Op {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Op::ALL
            .into_iter()
            .find(|op| op.as_str() == s)
            .ok_or_else(|| format!("unknown operation `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RoleKind {
    Normal,
    Emergency,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Role {
    pub name: RoleId,
    pub kind: RoleKind,
}

/// `<Oid, op, td>`; `td` absent means unbounded.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Permission {
    pub oid: Oid,
    pub op: Op,
    pub td: Option<Exact>,
}

/// A candidate bundle of response actions for one emergency.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskSet {
    pub tsid: TsId,
    pub actions: Vec<(Oid, Op)>,
    pub exec_time: Exact,
    pub prob: Exact,
    /// Resources held exclusively while the task-set executes.
    pub resources: BTreeSet<ResourceId>,
}

impl TaskSet {
    /// Actions with duplicate `(oid, op)` pairs collapsed, in first-seen order.
    pub fn distinct_actions(&self) -> Vec<(Oid, Op)> {
        let mut seen = BTreeSet::new();
        self.actions
            .iter()
            .filter(|a| seen.insert((*a).clone()))
            .cloned()
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Emergency {
    pub eid: Eid,
    pub task_sets: Vec<TaskSet>,
    /// Emergency-duration: minutes available before the system fails.
    pub ed: Exact,
    /// Lower number is more urgent.
    pub prio: i64,
    pub entity: EntityId,
    pub ft_feasible: bool,
}

impl Emergency {
    pub fn task_set(&self, tsid: &TsId) -> Option<&TaskSet> {
        self.task_sets.iter().find(|ts| &ts.tsid == tsid)
    }

    /// Emergency-role responsible for this emergency; each emergency is
    /// served by the emergency-role carrying its own id.
    pub fn emergency_role(&self) -> RoleId {
        RoleId::new(self.eid.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn read_write_covers_read_and_write_only() {
        assert!(Op::ReadWrite.covers(Op::Read));
        assert!(Op::ReadWrite.covers(Op::Write));
        assert!(Op::ReadWrite.covers(Op::ReadWrite));
        assert!(!Op::ReadWrite.covers(Op::Use));
        assert!(Op::Use.covers(Op::Use));
        assert!(!Op::Use.covers(Op::Read));
        assert!(!Op::Read.covers(Op::ReadWrite));
    }

    #[test]
    fn op_round_trips_through_text() {
        for op in Op::ALL {
            assert_eq!(op.as_str().parse::<Op>().unwrap(), op);
        }
        assert!("r&w".parse::<Op>().is_err());
    }
}
