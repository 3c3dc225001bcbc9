//! Two passes: statements are read into positioned declarations, then
//! resolved against each other into a [`Scenario`].

use std::collections::{BTreeMap, BTreeSet};

use super::lexer::{tokenize, Pos, Tok, Token};
use super::{Diagnostic, DiagnosticKind, Scenario, ScenarioConfig};
use crate::engine::{Event, TimedEvent};
use crate::model::{
    AclEntry, CmpOp, ConstraintExpr, Eid, Emergency, EntityId, FgId, ObjectEntry, Oid, Op,
    ResourceId, RoleId, RoleKind, RoleMapping, Sid, Sigmas, Subject, TaskSet, TsId, Value,
};
use crate::num::Exact;

const STATEMENTS: &[&str] = &[
    "scenario",
    "config",
    "subject",
    "object",
    "role",
    "erole",
    "constraint",
    "emergency",
    "depends",
    "influence",
    "fgroup",
    "at",
];

#[derive(Debug, Clone)]
struct Sp<T> {
    v: T,
    pos: Pos,
}

type Name = Sp<String>;

#[derive(Debug, Clone)]
enum Prop {
    Val(Value),
    List(Vec<Name>),
}

#[derive(Debug, Clone)]
enum ConfigVal {
    Num(String),
    Ident(String),
    List(Vec<String>),
}

#[derive(Debug, Clone)]
struct GrantDecl {
    role: Name,
    op: Op,
    td: Option<Exact>,
    when: Option<ConstraintExpr>,
}

#[derive(Debug, Clone)]
struct TsDecl {
    id: Name,
    actions: Vec<(Name, Op)>,
    time: Exact,
    prob: Exact,
    resources: Vec<String>,
}

#[derive(Debug, Clone)]
enum EventDecl {
    Raise(Name),
    Fail(Name),
    Force(Name, Name, bool),
    Request(Name, Name, Op),
}

#[derive(Debug, Clone)]
enum Stmt {
    Scenario(Name),
    Config(Name, ConfigVal),
    Subject(Name, Vec<(Name, Prop)>),
    Object(Name, Vec<GrantDecl>),
    Role(Name),
    Erole {
        id: Name,
        map: Option<(Vec<Name>, Option<ConstraintExpr>)>,
        fallback: Option<ConstraintExpr>,
    },
    Constraint(Name, ConstraintExpr),
    Emergency {
        id: Name,
        entity: Name,
        prio: i64,
        ed: Exact,
        ft: bool,
        ts: Vec<TsDecl>,
    },
    Tdt(Name, Name),
    Edt(Name, Name),
    Influence(Name, Name, Sigmas),
    Fgroup(Name, String),
    At(Sp<Exact>, EventDecl),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RefKind {
    Constraint,
    Role,
}

struct Parser {
    toks: Vec<Token>,
    i: usize,
    diags: Vec<Diagnostic>,
    /// Names used inside constraint expressions, resolved later.
    expr_refs: Vec<(RefKind, Name)>,
}

type PResult<T> = Result<T, Diagnostic>;

fn syntax(pos: Pos, message: impl Into<String>) -> Diagnostic {
    Diagnostic {
        pos,
        kind: DiagnosticKind::Syntax,
        message: message.into(),
    }
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.i].tok
    }

    fn pos(&self) -> Pos {
        self.toks[self.i].pos
    }

    /// A statement keyword opening a line always starts a new statement.
    fn at_statement(&self) -> bool {
        let t = &self.toks[self.i];
        t.tok == Tok::Eof
            || (t.line_start && matches!(&t.tok, Tok::Ident(s) if STATEMENTS.contains(&s.as_str())))
    }

    fn unexpected(&self, expected: &str) -> Diagnostic {
        syntax(self.pos(), format!("expected {expected}, found {}", self.peek()))
    }

    fn at_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.at_kw(kw) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("`{kw}`")))
        }
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == t {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, t: Tok) -> PResult<()> {
        if self.eat(&t) {
            Ok(())
        } else {
            Err(self.unexpected(&t.to_string()))
        }
    }

    fn ident(&mut self, what: &str) -> PResult<Name> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Ident(s) if !self.at_statement() => {
                self.i += 1;
                Ok(Sp { v: s, pos })
            }
            _ => Err(self.unexpected(what)),
        }
    }

    fn number(&mut self) -> PResult<Sp<Exact>> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Num(s) => {
                self.i += 1;
                let v = s.parse().map_err(|_| syntax(pos, format!("malformed number `{s}`")))?;
                Ok(Sp { v, pos })
            }
            _ => Err(self.unexpected("a number")),
        }
    }

    fn integer(&mut self) -> PResult<i64> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Num(s) => {
                self.i += 1;
                s.parse().map_err(|_| syntax(pos, format!("expected an integer, found `{s}`")))
            }
            _ => Err(self.unexpected("an integer")),
        }
    }

    fn boolean(&mut self) -> PResult<bool> {
        if self.eat_kw("true") {
            Ok(true)
        } else if self.eat_kw("false") {
            Ok(false)
        } else {
            Err(self.unexpected("`true` or `false`"))
        }
    }

    fn op(&mut self) -> PResult<Op> {
        let pos = self.pos();
        let name = self.ident("an operation")?;
        name.v.parse().map_err(|e: String| syntax(pos, e))
    }

    /// `[a, b c]`: separators optional.
    fn name_list(&mut self, what: &str) -> PResult<Vec<Name>> {
        self.expect(Tok::LBracket)?;
        let mut out = Vec::new();
        while !self.eat(&Tok::RBracket) {
            out.push(self.ident(what)?);
            self.eat(&Tok::Comma);
        }
        Ok(out)
    }

    fn point(&mut self) -> PResult<(Exact, Exact)> {
        self.expect(Tok::LParen)?;
        let x = self.number()?.v;
        self.expect(Tok::Comma)?;
        let y = self.number()?.v;
        self.expect(Tok::RParen)?;
        Ok((x, y))
    }

    fn value(&mut self) -> PResult<Value> {
        match self.peek().clone() {
            Tok::Num(_) => Ok(Value::Num(self.number()?.v)),
            Tok::Str(s) => {
                self.i += 1;
                Ok(Value::Str(s))
            }
            Tok::LParen => {
                let (x, y) = self.point()?;
                Ok(Value::Point(x, y))
            }
            Tok::Ident(s) if s == "true" || s == "false" => Ok(Value::Bool(self.boolean()?)),
            _ => Err(self.unexpected("a value")),
        }
    }

    fn cmp(&mut self) -> Option<CmpOp> {
        let op = match self.peek() {
            Tok::Eq => CmpOp::Eq,
            Tok::Ne => CmpOp::Ne,
            Tok::Lt => CmpOp::Lt,
            Tok::Le => CmpOp::Le,
            Tok::Gt => CmpOp::Gt,
            Tok::Ge => CmpOp::Ge,
            _ => return None,
        };
        self.i += 1;
        Some(op)
    }

    fn expect_cmp(&mut self) -> PResult<CmpOp> {
        self.cmp().ok_or_else(|| self.unexpected("a comparison"))
    }

    fn expr(&mut self) -> PResult<ConstraintExpr> {
        let mut lhs = self.conj()?;
        while self.eat_kw("or") {
            let rhs = self.conj()?;
            lhs = ConstraintExpr::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn conj(&mut self) -> PResult<ConstraintExpr> {
        let mut lhs = self.unary()?;
        while self.eat_kw("and") {
            let rhs = self.unary()?;
            lhs = ConstraintExpr::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<ConstraintExpr> {
        if self.eat_kw("not") {
            return Ok(ConstraintExpr::Not(Box::new(self.unary()?)));
        }
        if self.eat(&Tok::LParen) {
            let e = self.expr()?;
            self.expect(Tok::RParen)?;
            return Ok(e);
        }
        let name = self.ident("a constraint")?;
        match name.v.as_str() {
            "true" => return Ok(ConstraintExpr::Const(true)),
            "false" => return Ok(ConstraintExpr::Const(false)),
            "distance" if self.peek() == &Tok::LParen => {
                self.i += 1;
                let property = self.ident("a property")?.v;
                self.expect(Tok::Comma)?;
                let point = self.point()?;
                self.expect(Tok::RParen)?;
                let op = self.expect_cmp()?;
                let radius = self.number()?.v;
                return Ok(ConstraintExpr::Distance {
                    property,
                    point,
                    op,
                    radius,
                });
            }
            "count" if self.peek() == &Tok::LParen => {
                self.i += 1;
                let role = self.ident("a role")?;
                self.expect(Tok::RParen)?;
                let op = self.expect_cmp()?;
                let limit = self.number()?.v;
                self.expr_refs.push((RefKind::Role, role.clone()));
                return Ok(ConstraintExpr::Count {
                    role: RoleId::new(role.v),
                    op,
                    limit,
                });
            }
            _ => {}
        }
        match self.cmp() {
            Some(op) => Ok(ConstraintExpr::Compare {
                property: name.v,
                op,
                value: self.value()?,
            }),
            None => {
                self.expr_refs.push((RefKind::Constraint, name.clone()));
                Ok(ConstraintExpr::Ref(name.v))
            }
        }
    }

    /// Skips to the next statement keyword that starts a line, always
    /// making progress past `start`.
    fn recover(&mut self, start: usize) {
        if self.i == start && self.peek() != &Tok::Eof {
            self.i += 1;
        }
        while !self.at_statement() {
            self.i += 1;
        }
    }

    fn statements(&mut self) -> Vec<Stmt> {
        let mut out = Vec::new();
        while self.peek() != &Tok::Eof {
            let start = self.i;
            match self.statement() {
                Ok(s) => out.push(s),
                Err(d) => {
                    self.diags.push(d);
                    self.recover(start);
                }
            }
        }
        out
    }

    fn statement(&mut self) -> PResult<Stmt> {
        let pos = self.pos();
        let Tok::Ident(kw) = self.peek().clone() else {
            return Err(self.unexpected("a statement"));
        };
        self.i += 1;
        let kw = Sp { v: kw, pos };
        match kw.v.as_str() {
            "scenario" => Ok(Stmt::Scenario(self.ident("a scenario name")?)),
            "config" => {
                let key = self.ident("a config key")?;
                self.expect(Tok::Eq)?;
                let val = match self.peek().clone() {
                    Tok::Num(s) => {
                        self.i += 1;
                        ConfigVal::Num(s)
                    }
                    Tok::Ident(s) => {
                        self.i += 1;
                        ConfigVal::Ident(s)
                    }
                    Tok::LBracket => ConfigVal::List(self.name_list("a resource")?.into_iter().map(|n| n.v).collect()),
                    _ => return Err(self.unexpected("a config value")),
                };
                Ok(Stmt::Config(key, val))
            }
            "subject" => {
                let id = self.ident("a subject id")?;
                let mut props = Vec::new();
                if self.eat(&Tok::LBrace) {
                    while !self.eat(&Tok::RBrace) {
                        let key = self.ident("a property name or `}`")?;
                        self.expect(Tok::Eq)?;
                        let v = if self.peek() == &Tok::LBracket {
                            Prop::List(self.name_list("a role")?)
                        } else {
                            Prop::Val(self.value()?)
                        };
                        props.push((key, v));
                        self.eat(&Tok::Comma);
                        self.eat(&Tok::Semi);
                    }
                }
                Ok(Stmt::Subject(id, props))
            }
            "object" => {
                let id = self.ident("an object id")?;
                let mut grants = Vec::new();
                if self.eat(&Tok::LBrace) {
                    while !self.eat(&Tok::RBrace) {
                        self.expect_kw("grant").map_err(|_| self.unexpected("`grant` or `}`"))?;
                        let role = self.ident("a role")?;
                        let op = self.op()?;
                        let td = if self.eat_kw("td") { Some(self.number()?.v) } else { None };
                        let when = if self.eat_kw("when") { Some(self.expr()?) } else { None };
                        grants.push(GrantDecl { role, op, td, when });
                        self.eat(&Tok::Semi);
                    }
                }
                Ok(Stmt::Object(id, grants))
            }
            "role" => Ok(Stmt::Role(self.ident("a role id")?)),
            "erole" => {
                let id = self.ident("an emergency-role id")?;
                let mut map = None;
                let mut fallback = None;
                loop {
                    if map.is_none() && self.eat_kw("map") {
                        let roles = self.name_list("a role")?;
                        let c = if self.eat_kw("constraint") { Some(self.expr()?) } else { None };
                        map = Some((roles, c));
                    } else if fallback.is_none() && self.eat_kw("fallback") {
                        fallback = Some(self.expr()?);
                    } else {
                        break;
                    }
                }
                Ok(Stmt::Erole { id, map, fallback })
            }
            "constraint" => {
                let id = self.ident("a constraint name")?;
                self.expect(Tok::Eq)?;
                Ok(Stmt::Constraint(id, self.expr()?))
            }
            "emergency" => self.emergency(),
            "depends" => {
                if self.eat_kw("time") {
                    let a = self.ident("an emergency id")?;
                    self.expect(Tok::Arrow)?;
                    let b = self.ident("an emergency id")?;
                    Ok(Stmt::Tdt(a, b))
                } else if self.eat_kw("env") {
                    let entity = self.ident("an entity id")?;
                    self.expect_kw("on")?;
                    let eid = self.ident("an emergency id")?;
                    Ok(Stmt::Edt(entity, eid))
                } else {
                    Err(self.unexpected("`time` or `env`"))
                }
            }
            "influence" => {
                let a = self.ident("an emergency id")?;
                self.expect(Tok::Arrow)?;
                let b = self.ident("an emergency id")?;
                let mut s = Sigmas::uniform(Exact::zero());
                loop {
                    if self.eat_kw("sigma_p") {
                        s.p = self.number()?.v;
                    } else if self.eat_kw("sigma_t") {
                        s.t = self.number()?.v;
                    } else if self.eat_kw("sigma_ed") {
                        s.ed = self.number()?.v;
                    } else {
                        break;
                    }
                }
                Ok(Stmt::Influence(a, b, s))
            }
            "fgroup" => {
                let entity = self.ident("an entity id")?;
                self.expect(Tok::Eq)?;
                Ok(Stmt::Fgroup(entity, self.ident("a function-group id")?.v))
            }
            "at" => {
                let at = self.number()?;
                let ev = if self.eat_kw("raise") {
                    EventDecl::Raise(self.ident("an emergency id")?)
                } else if self.eat_kw("fail") {
                    EventDecl::Fail(self.ident("an entity id")?)
                } else if self.eat_kw("force") {
                    let eid = self.ident("an emergency id")?;
                    let ts = self.ident("a task-set id")?;
                    let ok = if self.eat_kw("success") {
                        true
                    } else if self.eat_kw("failure") {
                        false
                    } else {
                        return Err(self.unexpected("`success` or `failure`"));
                    };
                    EventDecl::Force(eid, ts, ok)
                } else if self.eat_kw("request") {
                    let sid = self.ident("a subject id")?;
                    let oid = self.ident("an object id")?;
                    EventDecl::Request(sid, oid, self.op()?)
                } else {
                    return Err(self.unexpected("`raise`, `fail`, `force` or `request`"));
                };
                Ok(Stmt::At(at, ev))
            }
            _ => Err(syntax(
                kw.pos,
                format!("expected a statement keyword, found `{}`", kw.v),
            )),
        }
    }

    fn emergency(&mut self) -> PResult<Stmt> {
        let id = self.ident("an emergency id")?;
        let braced = self.eat(&Tok::LBrace);
        let (mut entity, mut prio, mut ed, mut ft) = (None, None, None, None);
        let mut ts = Vec::new();
        loop {
            if braced && self.eat(&Tok::RBrace) {
                break;
            }
            if entity.is_none() && self.eat_kw("entity") {
                entity = Some(self.ident("an entity id")?);
            } else if prio.is_none() && self.eat_kw("prio") {
                prio = Some(self.integer()?);
            } else if ed.is_none() && self.eat_kw("ed") {
                ed = Some(self.number()?.v);
            } else if ft.is_none() && self.eat_kw("ft") {
                ft = Some(self.boolean()?);
            } else if self.eat_kw("ts") {
                ts.push(self.task_set()?);
            } else if braced {
                return Err(self.unexpected("an emergency clause or `}`"));
            } else {
                break;
            }
            self.eat(&Tok::Semi);
        }
        let missing = |what: &str| syntax(id.pos, format!("emergency {} is missing `{what}`", id.v));
        let entity = entity.ok_or_else(|| missing("entity"))?;
        let prio = prio.ok_or_else(|| missing("prio"))?;
        let ed = ed.ok_or_else(|| missing("ed"))?;
        if ts.is_empty() {
            return Err(missing("ts"));
        }
        Ok(Stmt::Emergency {
            id,
            entity,
            prio,
            ed,
            ft: ft.unwrap_or(true),
            ts,
        })
    }

    fn task_set(&mut self) -> PResult<TsDecl> {
        let id = self.ident("a task-set id")?;
        self.expect(Tok::LBrace)?;
        let (mut actions, mut time, mut prob, mut resources) = (None, None, None, None);
        while !self.eat(&Tok::RBrace) {
            if actions.is_none() && self.eat_kw("actions") {
                self.expect(Tok::LBracket)?;
                let mut list = Vec::new();
                while !self.eat(&Tok::RBracket) {
                    self.expect(Tok::LParen)?;
                    let oid = self.ident("an object id")?;
                    self.eat(&Tok::Comma);
                    let op = self.op()?;
                    self.expect(Tok::RParen)?;
                    list.push((oid, op));
                    self.eat(&Tok::Comma);
                }
                actions = Some(list);
            } else if time.is_none() && self.eat_kw("time") {
                time = Some(self.number()?.v);
            } else if prob.is_none() && self.eat_kw("prob") {
                prob = Some(self.number()?.v);
            } else if resources.is_none() && self.eat_kw("resources") {
                resources = Some(self.name_list("a resource")?.into_iter().map(|n| n.v).collect());
            } else {
                return Err(self.unexpected("`actions`, `time`, `prob`, `resources` or `}`"));
            }
            self.eat(&Tok::Semi);
        }
        let missing = |what: &str| syntax(id.pos, format!("task-set {} is missing `{what}`", id.v));
        Ok(TsDecl {
            time: time.ok_or_else(|| missing("time"))?,
            prob: prob.ok_or_else(|| missing("prob"))?,
            actions: actions.unwrap_or_default(),
            resources: resources.unwrap_or_default(),
            id,
        })
    }
}

struct Resolver {
    diags: Vec<Diagnostic>,
}

impl Resolver {
    fn push(&mut self, pos: Pos, kind: DiagnosticKind, message: String) {
        self.diags.push(Diagnostic { pos, kind, message });
    }

    fn unresolved(&mut self, n: &Name, what: &str) {
        self.push(n.pos, DiagnosticKind::Unresolved, format!("unknown {what} `{}`", n.v));
    }

    fn duplicate(&mut self, n: &Name, what: &str) {
        self.push(n.pos, DiagnosticKind::Duplicate, format!("duplicate {what} `{}`", n.v));
    }

    fn invalid(&mut self, pos: Pos, message: String) {
        self.push(pos, DiagnosticKind::Invalid, message);
    }
}

/// Parses scenario text. Total: any input yields a scenario or a list of
/// positioned diagnostics.
pub fn parse_scenario(text: &str) -> Result<Scenario, Vec<Diagnostic>> {
    let (toks, lex_errors) = tokenize(text);
    let mut p = Parser {
        toks,
        i: 0,
        diags: lex_errors
            .into_iter()
            .map(|e| syntax(e.pos, e.message))
            .collect(),
        expr_refs: Vec::new(),
    };
    let stmts = p.statements();
    if !p.diags.is_empty() {
        return Err(p.diags);
    }
    let mut r = Resolver { diags: Vec::new() };
    let sc = resolve(&mut r, stmts, &p.expr_refs);
    if r.diags.is_empty() {
        Ok(sc)
    } else {
        r.diags.sort_by_key(|d| d.pos);
        Err(r.diags)
    }
}

fn resolve(r: &mut Resolver, stmts: Vec<Stmt>, expr_refs: &[(RefKind, Name)]) -> Scenario {
    let mut sc = Scenario::default();

    // declarations first, so references may point forward
    let mut subjects = BTreeSet::new();
    let mut objects = BTreeSet::new();
    let mut roles: BTreeMap<String, RoleKind> = BTreeMap::new();
    let mut constraints = BTreeSet::new();
    let mut emergencies: BTreeMap<String, (i64, Vec<String>)> = BTreeMap::new();
    // which parts of an erole are already declared: (map, fallback)
    let mut erole_parts: BTreeMap<String, (bool, bool)> = BTreeMap::new();
    let mut keep = vec![true; stmts.len()];
    for (i, s) in stmts.iter().enumerate() {
        let fresh = match s {
            Stmt::Subject(id, _) => subjects.insert(id.v.clone()).then_some(()).ok_or((id, "subject")),
            Stmt::Object(id, _) => objects.insert(id.v.clone()).then_some(()).ok_or((id, "object")),
            Stmt::Role(id) => {
                if roles.contains_key(&id.v) {
                    Err((id, "role"))
                } else {
                    roles.insert(id.v.clone(), RoleKind::Normal);
                    Ok(())
                }
            }
            Stmt::Erole { id, map, fallback } => match (roles.get(&id.v), erole_parts.get(&id.v)) {
                (None, _) => {
                    roles.insert(id.v.clone(), RoleKind::Emergency);
                    erole_parts.insert(id.v.clone(), (map.is_some(), fallback.is_some()));
                    Ok(())
                }
                // a second statement may add the table the first one lacked
                (Some(RoleKind::Emergency), Some(&(m, f)))
                    if !(m && map.is_some()) && !(f && fallback.is_some()) && (map.is_some() || fallback.is_some()) =>
                {
                    erole_parts.insert(id.v.clone(), (m || map.is_some(), f || fallback.is_some()));
                    Ok(())
                }
                _ => Err((id, "role")),
            },
            Stmt::Constraint(id, _) => constraints.insert(id.v.clone()).then_some(()).ok_or((id, "constraint")),
            Stmt::Emergency { id, prio, ts, .. } => {
                if emergencies.contains_key(&id.v) {
                    Err((id, "emergency"))
                } else {
                    emergencies.insert(id.v.clone(), (*prio, ts.iter().map(|t| t.id.v.clone()).collect()));
                    Ok(())
                }
            }
            _ => Ok(()),
        };
        if let Err((id, what)) = fresh {
            r.duplicate(id, what);
            keep[i] = false;
        }
    }

    for (kind, n) in expr_refs {
        match kind {
            RefKind::Constraint if !constraints.contains(&n.v) => r.unresolved(n, "constraint"),
            RefKind::Role if !roles.contains_key(&n.v) => r.unresolved(n, "role"),
            _ => {}
        }
    }

    let is_entity = |n: &str| n == crate::model::ENV_ENTITY || subjects.contains(n) || objects.contains(n);
    let mut config_keys = BTreeSet::new();
    let mut raised = BTreeSet::new();
    let mut influence_pairs = BTreeSet::new();

    for (s, keep) in stmts.into_iter().zip(keep) {
        if !keep {
            continue;
        }
        match s {
            Stmt::Scenario(name) => {
                if sc.name.is_some() {
                    r.duplicate(&name, "scenario name");
                } else {
                    sc.name = Some(name.v);
                }
            }
            Stmt::Config(key, val) => {
                if !config_keys.insert(key.v.clone()) {
                    r.duplicate(&key, "config key");
                    continue;
                }
                if let Err(msg) = apply_config(&mut sc.config, &key.v, val) {
                    r.invalid(key.pos, msg);
                }
            }
            Stmt::Subject(id, props) => {
                let sid = Sid::new(id.v.as_str());
                let mut subject = Subject {
                    sid: sid.clone(),
                    properties: BTreeMap::new(),
                };
                let mut srt = None;
                let mut asrt = None;
                for (key, v) in props {
                    match (key.v.as_str(), v) {
                        ("roles" | "active", Prop::List(list)) => {
                            let mut set = BTreeSet::new();
                            for n in list {
                                if roles.contains_key(&n.v) {
                                    set.insert(RoleId::new(n.v));
                                } else {
                                    r.unresolved(&n, "role");
                                }
                            }
                            let slot = if key.v == "roles" { &mut srt } else { &mut asrt };
                            if slot.replace(set).is_some() {
                                r.duplicate(&key, "subject property");
                            }
                        }
                        (_, Prop::List(_)) => r.invalid(key.pos, format!("only `roles` and `active` take a list, not `{}`", key.v)),
                        ("roles" | "active", Prop::Val(_)) => r.invalid(key.pos, format!("`{}` takes a list of roles", key.v)),
                        (_, Prop::Val(v)) => {
                            if subject.properties.insert(key.v.clone(), v).is_some() {
                                r.duplicate(&key, "subject property");
                            }
                        }
                    }
                }
                let srt = srt.unwrap_or_default();
                let asrt = asrt.unwrap_or_else(|| srt.clone());
                if !srt.is_empty() {
                    sc.store.srt.insert(sid.clone(), srt);
                }
                if !asrt.is_empty() {
                    sc.store.asrt.insert(sid.clone(), asrt);
                }
                sc.store.subjects.insert(sid, subject);
            }
            Stmt::Object(id, grants) => {
                let mut o = ObjectEntry {
                    oid: Oid::new(id.v.as_str()),
                    acl: BTreeMap::new(),
                };
                for g in grants {
                    if !roles.contains_key(&g.role.v) {
                        r.unresolved(&g.role, "role");
                        continue;
                    }
                    let role = RoleId::new(g.role.v.as_str());
                    let entry = AclEntry {
                        role: role.clone(),
                        op: g.op,
                        td: g.td,
                        granted_at: None,
                        when: g.when,
                    };
                    if o.acl.insert((role, g.op), entry).is_some() {
                        r.duplicate(&g.role, "grant");
                    }
                }
                sc.store.objects.insert(o.oid.clone(), o);
            }
            Stmt::Role(id) => {
                sc.store.roles.insert(RoleId::new(id.v), RoleKind::Normal);
            }
            Stmt::Erole { id, map, fallback } => {
                let role = RoleId::new(id.v.as_str());
                sc.store.roles.insert(role.clone(), RoleKind::Emergency);
                if let Some((list, constraint)) = map {
                    let mut normal_roles = Vec::new();
                    for n in list {
                        if roles.contains_key(&n.v) {
                            normal_roles.push(RoleId::new(n.v));
                        } else {
                            r.unresolved(&n, "role");
                        }
                    }
                    sc.store.rmt.insert(
                        role.clone(),
                        RoleMapping {
                            normal_roles,
                            constraint,
                        },
                    );
                }
                if let Some(c) = fallback {
                    sc.store.rct.insert(role, c);
                }
            }
            Stmt::Constraint(id, e) => {
                sc.store.constraints.insert(id.v, e);
            }
            Stmt::Emergency {
                id,
                entity,
                prio,
                ed,
                ft,
                ts,
            } => {
                if !is_entity(&entity.v) {
                    r.unresolved(&entity, "entity");
                }
                let mut seen = BTreeSet::new();
                let mut task_sets = Vec::new();
                for t in ts {
                    if !seen.insert(t.id.v.clone()) {
                        r.duplicate(&t.id, "task-set");
                        continue;
                    }
                    let mut actions = Vec::new();
                    for (oid, op) in t.actions {
                        if objects.contains(&oid.v) {
                            actions.push((Oid::new(oid.v), op));
                        } else {
                            r.unresolved(&oid, "object");
                        }
                    }
                    task_sets.push(TaskSet {
                        tsid: TsId::new(t.id.v),
                        actions,
                        exec_time: t.time,
                        prob: t.prob,
                        resources: t.resources.into_iter().map(ResourceId::new).collect(),
                    });
                }
                sc.emergencies.push(Emergency {
                    eid: Eid::new(id.v),
                    task_sets,
                    ed,
                    prio,
                    entity: EntityId::new(entity.v),
                    ft_feasible: ft,
                });
            }
            Stmt::Tdt(a, b) => {
                let pa = emergencies.get(&a.v).map(|e| e.0);
                let pb = emergencies.get(&b.v).map(|e| e.0);
                if pa.is_none() {
                    r.unresolved(&a, "emergency");
                }
                if pb.is_none() {
                    r.unresolved(&b, "emergency");
                }
                if let (Some(pa), Some(pb)) = (pa, pb) {
                    if pa >= pb {
                        r.invalid(
                            a.pos,
                            format!(
                                "time-dependency {} -> {} must go from higher to lower priority (prio {pa} vs {pb})",
                                a.v, b.v
                            ),
                        );
                        continue;
                    }
                    if !sc.store.tdt.insert((Eid::new(a.v.as_str()), Eid::new(b.v.as_str()))) {
                        r.duplicate(&a, "time-dependency");
                    }
                }
            }
            Stmt::Edt(entity, eid) => {
                let ok_entity = subjects.contains(&entity.v) || objects.contains(&entity.v);
                if !ok_entity {
                    r.unresolved(&entity, "entity");
                }
                if !emergencies.contains_key(&eid.v) {
                    r.unresolved(&eid, "emergency");
                }
                if ok_entity
                    && emergencies.contains_key(&eid.v)
                    && !sc.store.edt.insert((EntityId::new(entity.v.as_str()), Eid::new(eid.v.as_str())))
                {
                    r.duplicate(&entity, "environment-dependency");
                }
            }
            Stmt::Influence(a, b, sigmas) => {
                let mut ok = true;
                for n in [&a, &b] {
                    if !emergencies.contains_key(&n.v) {
                        r.unresolved(n, "emergency");
                        ok = false;
                    }
                }
                if ok {
                    if !influence_pairs.insert((a.v.clone(), b.v.clone())) {
                        r.duplicate(&a, "influence pair");
                    } else {
                        sc.influence.set(&a.v, &b.v, sigmas);
                    }
                }
            }
            Stmt::Fgroup(entity, fg) => {
                if !(subjects.contains(&entity.v) || objects.contains(&entity.v)) {
                    r.unresolved(&entity, "entity");
                } else if sc.store.efgt.insert(EntityId::new(entity.v.as_str()), FgId::new(fg)).is_some() {
                    r.duplicate(&entity, "function-group entry");
                }
            }
            Stmt::At(at, ev) => {
                if at.v.is_negative() {
                    r.invalid(at.pos, format!("event time {} is negative", at.v));
                    continue;
                }
                let event = match ev {
                    EventDecl::Raise(eid) => {
                        if !emergencies.contains_key(&eid.v) {
                            r.unresolved(&eid, "emergency");
                            continue;
                        }
                        if !raised.insert(eid.v.clone()) {
                            r.duplicate(&eid, "raise of");
                            continue;
                        }
                        Event::Raise(Eid::new(eid.v))
                    }
                    EventDecl::Fail(entity) => {
                        if !(subjects.contains(&entity.v) || objects.contains(&entity.v)) {
                            r.unresolved(&entity, "entity");
                            continue;
                        }
                        Event::Fail(EntityId::new(entity.v))
                    }
                    EventDecl::Force(eid, ts, success) => {
                        let Some((_, tss)) = emergencies.get(&eid.v) else {
                            r.unresolved(&eid, "emergency");
                            continue;
                        };
                        if !tss.contains(&ts.v) {
                            r.unresolved(&ts, "task-set");
                            continue;
                        }
                        Event::Force {
                            eid: Eid::new(eid.v),
                            tsid: TsId::new(ts.v),
                            success,
                        }
                    }
                    EventDecl::Request(sid, oid, op) => {
                        let mut ok = true;
                        if !subjects.contains(&sid.v) {
                            r.unresolved(&sid, "subject");
                            ok = false;
                        }
                        if !objects.contains(&oid.v) {
                            r.unresolved(&oid, "object");
                            ok = false;
                        }
                        if !ok {
                            continue;
                        }
                        Event::Request {
                            sid: Sid::new(sid.v),
                            oid: Oid::new(oid.v),
                            op,
                        }
                    }
                };
                sc.events.push(TimedEvent { at: at.v, event });
            }
        }
    }
    sc.events.sort_by(|a, b| a.at.cmp(&b.at));
    sc
}

fn apply_config(cfg: &mut ScenarioConfig, key: &str, val: ConfigVal) -> Result<(), String> {
    let num = |v: &ConfigVal| -> Result<Exact, String> {
        match v {
            ConfigVal::Num(s) => s.parse().map_err(|_| format!("malformed number `{s}`")),
            _ => Err(format!("`{key}` takes a number")),
        }
    };
    match key {
        "tp" => {
            let tp = num(&val)?;
            if !tp.is_positive() {
                return Err("`tp` must be positive".into());
            }
            cfg.tp = tp;
        }
        "alpha" | "beta" => {
            let x = num(&val)?;
            if x.is_negative() || (key == "beta" && x > Exact::one()) {
                return Err(format!("`{key}` out of range"));
            }
            if key == "alpha" {
                cfg.alpha = x;
            } else {
                cfg.beta = x;
            }
        }
        "k" | "seed" => {
            let ConfigVal::Num(s) = &val else {
                return Err(format!("`{key}` takes an integer"));
            };
            let n: u64 = s.parse().map_err(|_| format!("`{key}` takes a non-negative integer"))?;
            if key == "k" {
                if n == 0 {
                    return Err("`k` must be at least 1".into());
                }
                cfg.k = n as usize;
            } else {
                cfg.seed = n;
            }
        }
        "fallback" => {
            let ConfigVal::Ident(s) = &val else {
                return Err("`fallback` takes `probability_first` or `time_first`".into());
            };
            cfg.fallback = s.parse()?;
        }
        "blocked" => {
            let ConfigVal::List(items) = val else {
                return Err("`blocked` takes a list of resources".into());
            };
            cfg.blocked = items.into_iter().map(ResourceId::new).collect();
        }
        other => return Err(format!("unknown config key `{other}`")),
    }
    Ok(())
}
