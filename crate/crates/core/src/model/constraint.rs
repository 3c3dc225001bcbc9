use std::collections::BTreeSet;
use std::fmt;

use super::{PolicyStore, RoleId, Subject};
use crate::num::Exact;

/// Scalar subject property.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Value {
    Num(Exact),
    Bool(bool),
    Str(String),
    /// 2-D coordinate in meters.
    Point(Exact, Exact),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Num(n) => write!(f, "{n}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Str(s) => write!(f, "\"{s}\""),
            Value::Point(x, y) => write!(f, "({x}, {y})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn as_str(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    fn holds<T: Ord>(self, lhs: &T, rhs: &T) -> bool {
        match self {
            CmpOp::Eq => lhs == rhs,
            CmpOp::Ne => lhs != rhs,
            CmpOp::Lt => lhs < rhs,
            CmpOp::Le => lhs <= rhs,
            CmpOp::Gt => lhs > rhs,
            CmpOp::Ge => lhs >= rhs,
        }
    }
}

/// Boolean constraint over subject properties and ambient store context.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConstraintExpr {
    Const(bool),
    /// `property CMP value`
    Compare {
        property: String,
        op: CmpOp,
        value: Value,
    },
    /// `distance(property, (x, y)) CMP radius`
    Distance {
        property: String,
        point: (Exact, Exact),
        op: CmpOp,
        radius: Exact,
    },
    /// `count(role) CMP limit`: number of subjects with `role` active.
    Count {
        role: RoleId,
        op: CmpOp,
        limit: Exact,
    },
    /// Reference to a named constraint.
    Ref(String),
    Not(Box<ConstraintExpr>),
    And(Box<ConstraintExpr>, Box<ConstraintExpr>),
    Or(Box<ConstraintExpr>, Box<ConstraintExpr>),
}

/// Ambient data a constraint may consult besides the subject itself.
#[derive(Clone, Copy)]
pub struct EvalContext<'a> {
    pub store: &'a PolicyStore,
}

// Named-constraint references nest at most this deep; validation rejects
// cycles, this only keeps evaluation total on unvalidated stores.
const MAX_REF_DEPTH: usize = 64;

impl ConstraintExpr {
    /// Total evaluation: missing properties, type mismatches and dangling
    /// references make the atom false, never an error.
    pub fn eval(&self, subject: &Subject, ctx: EvalContext<'_>) -> bool {
        self.eval_depth(subject, ctx, 0)
    }

    fn eval_depth(&self, subject: &Subject, ctx: EvalContext<'_>, depth: usize) -> bool {
        match self {
            ConstraintExpr::Const(b) => *b,
            ConstraintExpr::Compare {
                property,
                op,
                value,
            } => match (subject.properties.get(property), value) {
                (Some(Value::Num(a)), Value::Num(b)) => op.holds(a, b),
                (Some(Value::Bool(a)), Value::Bool(b)) => eq_only(*op, a == b),
                (Some(Value::Str(a)), Value::Str(b)) => eq_only(*op, a == b),
                (Some(Value::Point(ax, ay)), Value::Point(bx, by)) => {
                    eq_only(*op, ax == bx && ay == by)
                }
                _ => false,
            },
            ConstraintExpr::Distance {
                property,
                point,
                op,
                radius,
            } => match subject.properties.get(property) {
                Some(Value::Point(x, y)) => {
                    let dx = x - &point.0;
                    let dy = y - &point.1;
                    let dist_sq = &dx * &dx + &dy * &dy;
                    compare_distance(dist_sq, *op, radius)
                }
                _ => false,
            },
            ConstraintExpr::Count { role, op, limit } => {
                let n = ctx
                    .store
                    .asrt
                    .values()
                    .filter(|roles| roles.contains(role))
                    .count();
                op.holds(&Exact::from_int(n as i64), limit)
            }
            ConstraintExpr::Ref(name) => {
                if depth >= MAX_REF_DEPTH {
                    return false;
                }
                ctx.store
                    .constraints
                    .get(name)
                    .is_some_and(|c| c.eval_depth(subject, ctx, depth + 1))
            }
            ConstraintExpr::Not(e) => !e.eval_depth(subject, ctx, depth),
            ConstraintExpr::And(a, b) => {
                a.eval_depth(subject, ctx, depth) && b.eval_depth(subject, ctx, depth)
            }
            ConstraintExpr::Or(a, b) => {
                a.eval_depth(subject, ctx, depth) || b.eval_depth(subject, ctx, depth)
            }
        }
    }

    /// Subject property names referenced directly (not through `Ref`).
    pub fn properties(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        self.walk(&mut |e| match e {
            ConstraintExpr::Compare { property, .. } | ConstraintExpr::Distance { property, .. } => {
                out.insert(property.as_str());
            }
            _ => {}
        });
        out
    }

    /// Named constraints referenced directly.
    pub fn references(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        self.walk(&mut |e| {
            if let ConstraintExpr::Ref(name) = e {
                out.insert(name.as_str());
            }
        });
        out
    }

    pub fn roles(&self) -> BTreeSet<&RoleId> {
        let mut out = BTreeSet::new();
        self.walk(&mut |e| {
            if let ConstraintExpr::Count { role, .. } = e {
                out.insert(role);
            }
        });
        out
    }

    fn walk<'a>(&'a self, f: &mut impl FnMut(&'a ConstraintExpr)) {
        f(self);
        match self {
            ConstraintExpr::Not(e) => e.walk(f),
            ConstraintExpr::And(a, b) | ConstraintExpr::Or(a, b) => {
                a.walk(f);
                b.walk(f);
            }
            _ => {}
        }
    }
}

fn eq_only(op: CmpOp, equal: bool) -> bool {
    match op {
        CmpOp::Eq => equal,
        CmpOp::Ne => !equal,
        _ => false,
    }
}

/// Compares `sqrt(dist_sq) CMP radius` without leaving exact arithmetic.
fn compare_distance(dist_sq: Exact, op: CmpOp, radius: &Exact) -> bool {
    if radius.is_negative() {
        // distance is never negative
        return matches!(op, CmpOp::Ne | CmpOp::Gt | CmpOp::Ge);
    }
    op.holds(&dist_sq, &(radius * radius))
}

impl fmt::Display for ConstraintExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConstraintExpr::Const(b) => write!(f, "{b}"),
            ConstraintExpr::Compare {
                property,
                op,
                value,
            } => write!(f, "{property} {} {value}", op.as_str()),
            ConstraintExpr::Distance {
                property,
                point,
                op,
                radius,
            } => write!(
                f,
                "distance({property}, ({}, {})) {} {radius}",
                point.0,
                point.1,
                op.as_str()
            ),
            ConstraintExpr::Count { role, op, limit } => {
                write!(f, "count({role}) {} {limit}", op.as_str())
            }
            ConstraintExpr::Ref(name) => f.write_str(name),
            ConstraintExpr::Not(e) => write!(f, "not ({e})"),
            ConstraintExpr::And(a, b) => write!(f, "({a}) and ({b})"),
            ConstraintExpr::Or(a, b) => write!(f, "({a}) or ({b})"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Sid;
    use crate::num::dec;

    fn subject(props: &[(&str, Value)]) -> Subject {
        Subject {
            sid: Sid::new("S"),
            properties: props
                .iter()
                .map(|(k, v)| (k.to_string(), v.clone()))
                .collect(),
        }
    }

    #[test]
    fn distance_is_compared_exactly() {
        let store = PolicyStore::default();
        let ctx = EvalContext { store: &store };
        let s = subject(&[("location", Value::Point(dec("3"), dec("4")))]);
        let within = |r: &str, op| ConstraintExpr::Distance {
            property: "location".into(),
            point: (dec("0"), dec("0")),
            op,
            radius: dec(r),
        };
        assert!(within("5", CmpOp::Le).eval(&s, ctx));
        assert!(!within("4.99", CmpOp::Le).eval(&s, ctx));
        assert!(within("5", CmpOp::Eq).eval(&s, ctx));
        assert!(within("-1", CmpOp::Gt).eval(&s, ctx));
    }

    #[test]
    fn missing_property_is_false_not_error() {
        let store = PolicyStore::default();
        let ctx = EvalContext { store: &store };
        let s = subject(&[]);
        let e = ConstraintExpr::Compare {
            property: "experience".into(),
            op: CmpOp::Ge,
            value: Value::Num(dec("2")),
        };
        assert!(!e.eval(&s, ctx));
        assert!(ConstraintExpr::Not(Box::new(e)).eval(&s, ctx));
        assert!(!ConstraintExpr::Ref("nope".into()).eval(&s, ctx));
    }

    #[test]
    fn type_mismatch_is_false() {
        let store = PolicyStore::default();
        let ctx = EvalContext { store: &store };
        let s = subject(&[("certified", Value::Bool(true))]);
        let e = ConstraintExpr::Compare {
            property: "certified".into(),
            op: CmpOp::Lt,
            value: Value::Bool(true),
        };
        assert!(!e.eval(&s, ctx));
        let e = ConstraintExpr::Compare {
            property: "certified".into(),
            op: CmpOp::Eq,
            value: Value::Num(dec("1")),
        };
        assert!(!e.eval(&s, ctx));
    }

    #[test]
    fn count_reads_active_roles() {
        let mut store = PolicyStore::default();
        store
            .asrt
            .insert(Sid::new("A"), [RoleId::new("Nurse")].into_iter().collect());
        store
            .asrt
            .insert(Sid::new("B"), [RoleId::new("Nurse")].into_iter().collect());
        let ctx = EvalContext { store: &store };
        let e = ConstraintExpr::Count {
            role: RoleId::new("Nurse"),
            op: CmpOp::Lt,
            limit: dec("3"),
        };
        assert!(e.eval(&subject(&[]), ctx));
        let e = ConstraintExpr::Count {
            role: RoleId::new("Nurse"),
            op: CmpOp::Lt,
            limit: dec("2"),
        };
        assert!(!e.eval(&subject(&[]), ctx));
    }

    #[test]
    fn self_reference_terminates() {
        let mut store = PolicyStore::default();
        store
            .constraints
            .insert("loop".into(), ConstraintExpr::Ref("loop".into()));
        let ctx = EvalContext { store: &store };
        assert!(!ConstraintExpr::Ref("loop".into()).eval(&subject(&[]), ctx));
    }
}
