//! Append-only audit trace.
//!
//! One record per line, `seq|timestamp|kind|key=value,...`, keys in a fixed
//! order per kind. Lists are joined with `+`; an empty value is `-`.

use std::fmt;
use std::str::FromStr;

use crate::num::Exact;

macro_rules! kinds {
    ($($variant:ident => $name:literal [$($key:literal),*],)*) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum RecordKind {
            $($variant,)*
        }

        impl RecordKind {
            pub const ALL: &'static [RecordKind] = &[$(RecordKind::$variant,)*];

            pub fn as_str(self) -> &'static str {
                match self {
                    $(RecordKind::$variant => $name,)*
                }
            }

            /// Payload keys, in serialization order.
            pub fn keys(self) -> &'static [&'static str] {
                match self {
                    $(RecordKind::$variant => &[$($key),*],)*
                }
            }
        }
    };
}

kinds! {
    StateTransition => "state_transition" ["from", "to"],
    EmergencyRaised => "emergency_raised" ["eid", "entity", "prio", "ed", "at"],
    PlanSelected => "plan_selected" ["group", "strategy", "pv", "path", "ts"],
    RoleAssigned => "role_assigned" ["sid", "role", "eid", "saved"],
    PermissionGranted => "permission_granted" ["role", "oid", "op", "td", "eid"],
    SubjectNotified => "subject_notified" ["sid", "eid", "role", "status"],
    ActionStarted => "action_started" ["eid", "group", "ts", "sid", "end", "resources", "gates"],
    ActionFinished => "action_finished" ["eid", "ts", "end"],
    ActionFailed => "action_failed" ["eid", "ts", "reason"],
    PermissionRescinded => "permission_rescinded" ["role", "oid", "op", "reason"],
    RoleRestored => "role_restored" ["sid", "role", "restored"],
    FtSubstitution => "ft_substitution" ["failed", "substitute", "acl", "roles", "notified"],
    Disaster => "disaster" ["group", "reason"],
    EntityFailed => "entity_failed" ["entity", "at"],
    OutcomeForced => "outcome_forced" ["eid", "ts", "outcome", "at"],
    AccessRequest => "access_request" ["sid", "oid", "op", "decision", "detail", "at"],
    TraceEnd => "trace_end" ["mode", "tp", "digest"],
}

impl fmt::Display for RecordKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RecordKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RecordKind::ALL
            .iter()
            .copied()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown record kind `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditRecord {
    pub seq: u64,
    pub time: Exact,
    pub kind: RecordKind,
    /// One value per key of `kind`, `-` when empty.
    values: Vec<String>,
}

impl AuditRecord {
    pub fn get(&self, key: &str) -> Option<&str> {
        let i = self.kind.keys().iter().position(|k| *k == key)?;
        Some(self.values[i].as_str()).filter(|v| *v != "-")
    }

    /// `get`, or the empty string when absent.
    pub fn field(&self, key: &str) -> &str {
        self.get(key).unwrap_or("")
    }

    pub fn list(&self, key: &str) -> Vec<&str> {
        self.get(key).map_or_else(Vec::new, |v| v.split('+').collect())
    }

    pub fn exact(&self, key: &str) -> Option<Exact> {
        self.get(key)?.parse().ok()
    }

    pub fn values(&self) -> impl Iterator<Item = (&'static str, &str)> {
        self.kind.keys().iter().copied().zip(self.values.iter().map(String::as_str))
    }
}

impl fmt::Display for AuditRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}|{}|{}|", self.seq, self.time, self.kind)?;
        for (i, (k, v)) in self.values().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

/// Joins list items with `+`, `-` when empty.
pub fn join_list<I, T>(items: I) -> String
where
    I: IntoIterator<Item = T>,
    T: fmt::Display,
{
    let v: Vec<String> = items.into_iter().map(|x| x.to_string()).collect();
    if v.is_empty() {
        "-".into()
    } else {
        v.join("+")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AuditError {
    #[error("audit closed by a disaster record; only trace_end may follow")]
    Closed,
    #[error("timestamp {time} precedes the previous record's {last}")]
    TimeRegression { time: Exact, last: Exact },
}

#[derive(Debug, Clone, Default)]
pub struct AuditLog {
    records: Vec<AuditRecord>,
    closed: bool,
}

impl AuditLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a record and returns its sequence number (1-based).
    ///
    /// Panics if `values` does not match the kind's key count; that is a
    /// programming error, not a run-time condition.
    pub fn record_action(
        &mut self,
        time: Exact,
        kind: RecordKind,
        values: Vec<String>,
    ) -> Result<u64, AuditError> {
        assert_eq!(values.len(), kind.keys().len(), "payload arity for {kind}");
        if self.closed && kind != RecordKind::TraceEnd {
            return Err(AuditError::Closed);
        }
        if let Some(last) = self.records.last() {
            if time < last.time {
                return Err(AuditError::TimeRegression {
                    time,
                    last: last.time.clone(),
                });
            }
        }
        let seq = self.records.len() as u64 + 1;
        let values = values
            .into_iter()
            .map(|v| if v.is_empty() { "-".to_string() } else { v })
            .collect();
        self.records.push(AuditRecord {
            seq,
            time,
            kind,
            values,
        });
        if kind == RecordKind::Disaster {
            self.closed = true;
        }
        Ok(seq)
    }

    pub fn records(&self) -> &[AuditRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            s.push_str(&r.to_string());
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TraceError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("trace is truncated: no trace_end record")]
    Truncated,
}

fn malformed(line: usize, message: impl Into<String>) -> TraceError {
    TraceError::Malformed {
        line,
        message: message.into(),
    }
}

/// Parses a trace; the last record must be `trace_end`.
pub fn parse_trace(text: &str) -> Result<Vec<AuditRecord>, TraceError> {
    let mut out: Vec<AuditRecord> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = raw.splitn(4, '|').collect();
        let [seq, time, kind, payload] = parts[..] else {
            return Err(malformed(n, "expected `seq|timestamp|kind|payload`"));
        };
        let seq: u64 = seq.parse().map_err(|_| malformed(n, format!("bad sequence number `{seq}`")))?;
        let time: Exact = time.parse().map_err(|_| malformed(n, format!("bad timestamp `{time}`")))?;
        let kind: RecordKind = kind.parse().map_err(|e: String| malformed(n, e))?;
        let keys = kind.keys();
        let pairs: Vec<&str> = if payload.is_empty() { Vec::new() } else { payload.split(',').collect() };
        if pairs.len() != keys.len() {
            return Err(malformed(n, format!("{kind} takes {} fields, found {}", keys.len(), pairs.len())));
        }
        let mut values = Vec::with_capacity(keys.len());
        for (pair, key) in pairs.iter().zip(keys) {
            match pair.split_once('=') {
                Some((k, v)) if k == *key && !v.is_empty() => values.push(v.to_string()),
                _ => return Err(malformed(n, format!("expected `{key}=...`, found `{pair}`"))),
            }
        }
        if let Some(prev) = out.last() {
            if seq <= prev.seq {
                return Err(malformed(n, "sequence numbers must increase"));
            }
            if time < prev.time {
                return Err(malformed(n, "timestamp goes backwards"));
            }
            if prev.kind == RecordKind::TraceEnd {
                return Err(malformed(n, "record after trace_end"));
            }
        }
        out.push(AuditRecord {
            seq,
            time,
            kind,
            values,
        });
    }
    match out.last() {
        Some(r) if r.kind == RecordKind::TraceEnd => Ok(out),
        _ => Err(TraceError::Truncated),
    }
}
