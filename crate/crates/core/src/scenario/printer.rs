use std::fmt::Write as _;

use super::Scenario;
use crate::engine::Event;
use crate::model::RoleKind;

fn list<T: std::fmt::Display>(items: impl IntoIterator<Item = T>) -> String {
    let v: Vec<String> = items.into_iter().map(|x| x.to_string()).collect();
    format!("[{}]", v.join(", "))
}

/// Canonical text of `sc`; parsing it back yields an equal scenario.
pub fn print_scenario(sc: &Scenario) -> String {
    let mut out = String::new();
    let o = &mut out;
    let s = &sc.store;
    let c = &sc.config;

    if let Some(name) = &sc.name {
        let _ = writeln!(o, "scenario {name}\n");
    }
    let _ = writeln!(o, "config tp = {}", c.tp);
    let _ = writeln!(o, "config alpha = {}", c.alpha);
    let _ = writeln!(o, "config beta = {}", c.beta);
    let _ = writeln!(o, "config k = {}", c.k);
    let _ = writeln!(o, "config seed = {}", c.seed);
    let _ = writeln!(o, "config fallback = {}", c.fallback.as_str());
    let _ = writeln!(o, "config blocked = {}", list(&c.blocked));

    o.push('\n');
    for (role, kind) in &s.roles {
        match kind {
            RoleKind::Normal => {
                let _ = writeln!(o, "role {role}");
            }
            RoleKind::Emergency => {
                let _ = write!(o, "erole {role}");
                if let Some(m) = s.rmt.get(role) {
                    let _ = write!(o, " map {}", list(&m.normal_roles));
                    if let Some(e) = &m.constraint {
                        let _ = write!(o, " constraint {e}");
                    }
                }
                if let Some(e) = s.rct.get(role) {
                    let _ = write!(o, " fallback {e}");
                }
                o.push('\n');
            }
        }
    }
    for (name, e) in &s.constraints {
        let _ = writeln!(o, "constraint {name} = {e}");
    }

    o.push('\n');
    for (sid, subj) in &s.subjects {
        let _ = writeln!(o, "subject {sid} {{");
        for (k, v) in &subj.properties {
            let _ = writeln!(o, "  {k} = {v}");
        }
        let empty = Default::default();
        let _ = writeln!(o, "  roles = {}", list(s.srt.get(sid).unwrap_or(&empty)));
        let _ = writeln!(o, "  active = {}", list(s.asrt.get(sid).unwrap_or(&empty)));
        let _ = writeln!(o, "}}");
    }
    for (oid, obj) in &s.objects {
        if obj.acl.is_empty() {
            let _ = writeln!(o, "object {oid}");
            continue;
        }
        let _ = writeln!(o, "object {oid} {{");
        for e in obj.acl.values() {
            let _ = write!(o, "  grant {} {}", e.role, e.op.as_str());
            if let Some(td) = &e.td {
                let _ = write!(o, " td {td}");
            }
            if let Some(w) = &e.when {
                let _ = write!(o, " when {w}");
            }
            o.push('\n');
        }
        let _ = writeln!(o, "}}");
    }

    for e in &sc.emergencies {
        let _ = writeln!(
            o,
            "\nemergency {} {{\n  entity {}\n  prio {}\n  ed {}\n  ft {}",
            e.eid, e.entity, e.prio, e.ed, e.ft_feasible
        );
        for ts in &e.task_sets {
            let actions: Vec<String> = ts
                .actions
                .iter()
                .map(|(oid, op)| format!("({oid} {})", op.as_str()))
                .collect();
            let _ = writeln!(
                o,
                "  ts {} {{ actions [{}] time {} prob {} resources {} }}",
                ts.tsid,
                actions.join(" "),
                ts.exec_time,
                ts.prob,
                list(&ts.resources)
            );
        }
        let _ = writeln!(o, "}}");
    }

    o.push('\n');
    for (a, b) in &s.tdt {
        let _ = writeln!(o, "depends time {a} -> {b}");
    }
    for (entity, eid) in &s.edt {
        let _ = writeln!(o, "depends env {entity} on {eid}");
    }
    for ((a, b), sg) in &sc.influence.pairs {
        let _ = writeln!(
            o,
            "influence {a} -> {b} sigma_p {} sigma_t {} sigma_ed {}",
            sg.p, sg.t, sg.ed
        );
    }
    for (entity, fg) in &s.efgt {
        let _ = writeln!(o, "fgroup {entity} = {fg}");
    }

    if !sc.events.is_empty() {
        o.push('\n');
    }
    for ev in &sc.events {
        let _ = match &ev.event {
            Event::Raise(eid) => writeln!(o, "at {} raise {eid}", ev.at),
            Event::Fail(entity) => writeln!(o, "at {} fail {entity}", ev.at),
            Event::Force { eid, tsid, success } => writeln!(
                o,
                "at {} force {eid} {tsid} {}",
                ev.at,
                if *success { "success" } else { "failure" }
            ),
            Event::Request { sid, oid, op } => {
                writeln!(o, "at {} request {sid} {oid} {}", ev.at, op.as_str())
            }
        };
    }
    out
}
