//! Name resolution and static checks.

use std::collections::{BTreeMap, BTreeSet};

use super::ast::*;
use super::diag::{Diagnostic, Diagnostics, Span};
use super::script::{Block, Expr, Stmt, BUILTINS, CONSTANTS};
use crate::value::ValueKind;

/// A program that passed validation, ready for elaboration.
#[derive(Debug, Clone)]
pub struct CheckedModel {
    pub program: Program,
    main: usize,
}

impl CheckedModel {
    pub fn main(&self) -> &ReactorDef {
        &self.program.reactors[self.main]
    }

    pub fn reactor(&self, name: &str) -> Option<&ReactorDef> {
        self.program.reactors.iter().find(|r| r.main == MainKind::None && r.name.name == name)
    }

    /// Non-main reactor definitions.
    pub fn definitions(&self) -> impl Iterator<Item = &ReactorDef> {
        self.program.reactors.iter().filter(|r| r.main == MainKind::None)
    }

    pub fn is_federated(&self) -> bool {
        self.main().main == MainKind::Federated
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Sym {
    Param(TypeName),
    Input(TypeName),
    Output(TypeName),
    Timer,
    Action(ActionOrigin, TypeName),
    State(TypeName),
    Instance(String),
}

impl Sym {
    fn describe(&self) -> &'static str {
        match self {
            Sym::Param(_) => "parameter",
            Sym::Input(_) => "input",
            Sym::Output(_) => "output",
            Sym::Timer => "timer",
            Sym::Action(..) => "action",
            Sym::State(_) => "state variable",
            Sym::Instance(_) => "instance",
        }
    }
}

pub(crate) type SymTable = BTreeMap<String, Sym>;

pub(crate) fn symbols(def: &ReactorDef) -> SymTable {
    let mut table = SymTable::new();
    for p in &def.params {
        table.entry(p.name.name.clone()).or_insert(Sym::Param(p.ty));
    }
    for m in &def.members {
        let (name, sym) = match m {
            Member::Input(p) => (&p.name, Sym::Input(p.ty)),
            Member::Output(p) => (&p.name, Sym::Output(p.ty)),
            Member::Timer(t) => (&t.name, Sym::Timer),
            Member::Action(a) => (&a.name, Sym::Action(a.origin, a.ty)),
            Member::State(s) => (&s.name, Sym::State(s.ty)),
            Member::Instance(i) => (&i.name, Sym::Instance(i.class.name.clone())),
            Member::Connection(_) | Member::Reaction(_) => continue,
        };
        table.entry(name.name.clone()).or_insert(sym);
    }
    table
}

/// Checks a parsed program; every problem found is reported.
pub fn validate(program: Program) -> Result<CheckedModel, Diagnostics> {
    let mut v = Validator { program: &program, diags: Vec::new(), tables: BTreeMap::new() };
    let main = v.run();
    if v.diags.is_empty() {
        Ok(CheckedModel { main: main.expect("main checked"), program })
    } else {
        let mut diags = v.diags;
        diags.sort_by_key(|d| (d.span.line, d.span.col));
        Err(Diagnostics(diags))
    }
}

struct Validator<'a> {
    program: &'a Program,
    diags: Vec<Diagnostic>,
    tables: BTreeMap<String, SymTable>,
}

/// How a port reference resolves inside a reactor body.
#[derive(Debug, Clone, Copy, PartialEq)]
enum PortRole {
    OwnInput(TypeName),
    OwnOutput(TypeName),
    ChildInput(TypeName),
    ChildOutput(TypeName),
    Timer,
    Action(ActionOrigin, TypeName),
}

impl<'a> Validator<'a> {
    fn err(&mut self, span: Span, msg: impl Into<String>) {
        self.diags.push(Diagnostic::error(span, msg));
    }

    fn run(&mut self) -> Option<usize> {
        let mut seen = BTreeSet::new();
        for r in &self.program.reactors {
            if r.main == MainKind::None && !seen.insert(r.name.name.clone()) {
                self.err(r.name.span, format!("duplicate definition of reactor `{}`", r.name.name));
            }
            if r.main == MainKind::None {
                self.tables.insert(r.name.name.clone(), symbols(r));
            }
        }
        let mains: Vec<usize> =
            self.program.reactors.iter().enumerate().filter(|(_, r)| r.main != MainKind::None).map(|(i, _)| i).collect();
        match mains.len() {
            0 => self.err(Span::start(), "program has no main reactor"),
            1 => {}
            _ => {
                for &i in &mains[1..] {
                    self.err(self.program.reactors[i].span, "more than one main reactor");
                }
            }
        }
        for r in &self.program.reactors {
            self.reactor(r);
        }
        mains.first().copied()
    }

    fn reactor(&mut self, def: &ReactorDef) {
        let mut names: BTreeMap<&str, Span> = BTreeMap::new();
        let declared = def.params.iter().map(|p| &p.name).chain(def.members.iter().filter_map(|m| match m {
            Member::Input(p) | Member::Output(p) => Some(&p.name),
            Member::Timer(t) => Some(&t.name),
            Member::Action(a) => Some(&a.name),
            Member::State(s) => Some(&s.name),
            Member::Instance(i) => Some(&i.name),
            Member::Connection(_) | Member::Reaction(_) => None,
        }));
        for name in declared {
            if names.insert(&name.name, name.span).is_some() {
                self.err(name.span, format!("duplicate definition of `{}` in reactor `{}`", name.name, def.name.name));
            } else if ["startup", "shutdown"].contains(&name.name.as_str()) {
                self.err(name.span, format!("`{}` is reserved", name.name));
            }
        }
        let table = symbols(def);
        for p in &def.params {
            self.literal_matches(&p.default, p.ty, p.name.span, &format!("parameter `{}`", p.name.name));
        }
        if def.main == MainKind::Federated {
            for m in &def.members {
                if !matches!(m, Member::Instance(_) | Member::Connection(_)) {
                    let span = match m {
                        Member::Reaction(r) => r.span,
                        Member::Input(p) | Member::Output(p) => p.name.span,
                        Member::Timer(t) => t.name.span,
                        Member::Action(a) => a.name.span,
                        Member::State(s) => s.name.span,
                        _ => def.span,
                    };
                    self.err(span, "a federated reactor may only contain instances and connections");
                }
            }
        }
        let mut writers: BTreeMap<String, usize> = BTreeMap::new();
        for m in &def.members {
            match m {
                Member::Timer(t) => {
                    self.time_expr(&t.offset, &table, true);
                    self.time_expr(&t.period, &table, true);
                }
                Member::Action(a) => {
                    if let Some(d) = &a.min_delay {
                        self.time_expr(d, &table, true);
                    }
                }
                Member::State(s) => {
                    self.literal_matches(&s.init, s.ty, s.name.span, &format!("state `{}`", s.name.name));
                }
                Member::Instance(inst) => self.instance(def, inst),
                Member::Connection(c) => {
                    if let Some(key) = self.connection(def, &table, c) {
                        *writers.entry(key).or_default() += 1;
                    }
                }
                Member::Input(_) | Member::Output(_) | Member::Reaction(_) => {}
            }
        }
        let mut index = 0;
        for m in &def.members {
            if let Member::Reaction(r) = m {
                index += 1;
                self.reaction(def, &table, r, index, &mut writers);
            }
        }
        for m in &def.members {
            if let Member::Connection(c) = m {
                let key = c.to.dotted();
                if writers.get(&key).copied().unwrap_or(0) > 1 && matches!(self.role(&table, &c.to), Some(PortRole::ChildInput(_)) | Some(PortRole::OwnOutput(_))) {
                    self.err(c.to.span(), format!("multiple writers to `{key}`"));
                    writers.insert(key, 0);
                }
            }
        }
    }

    fn literal_matches(&mut self, lit: &Literal, ty: TypeName, span: Span, what: &str) {
        let ok = match (lit, ty) {
            (Literal::Time(_), TypeName::Time) => true,
            (Literal::Value(crate::value::Value::Int(0)), TypeName::Time) => true,
            (Literal::Time(_), _) | (_, TypeName::Time) => false,
            (Literal::Value(v), ty) => v.kind() == ty.value_kind() || (ty == TypeName::Float && v.kind() == ValueKind::Int),
        };
        if !ok {
            self.err(span, format!("{what} has type {} but its value is not of that type", ty.keyword()));
        }
    }

    fn time_expr(&mut self, t: &TimeExpr, table: &SymTable, allow_zero: bool) -> bool {
        match t {
            TimeExpr::Literal(v) => {
                if !allow_zero && !v.is_positive() {
                    return false;
                }
                true
            }
            TimeExpr::Param(p) => match table.get(&p.name) {
                Some(Sym::Param(TypeName::Time)) => true,
                Some(Sym::Param(_)) => {
                    self.err(p.span, format!("parameter `{}` is not of type time", p.name));
                    true
                }
                _ => {
                    self.err(p.span, format!("unresolved time parameter `{}`", p.name));
                    true
                }
            },
        }
    }

    fn instance(&mut self, parent: &ReactorDef, inst: &InstanceDecl) {
        let class = &inst.class.name;
        if self.program.reactors.iter().any(|r| r.main != MainKind::None && r.name.name == *class && r.named) {
            self.err(inst.class.span, format!("cannot instantiate main reactor `{class}`"));
            return;
        }
        let Some(def) = self.program.reactors.iter().find(|r| r.main == MainKind::None && r.name.name == *class) else {
            self.err(inst.class.span, format!("unresolved reactor class `{class}`"));
            return;
        };
        if parent.main != MainKind::None && parent.named && inst.name.name == parent.name.name {
            self.err(inst.name.span, format!("instance `{}` shadows the main reactor name", inst.name.name));
        }
        let mut given = BTreeSet::new();
        for (arg, lit) in &inst.args {
            if !given.insert(arg.name.clone()) {
                self.err(arg.span, format!("duplicate argument `{}`", arg.name));
                continue;
            }
            match def.params.iter().find(|p| p.name.name == arg.name) {
                Some(p) => self.literal_matches(lit, p.ty, arg.span, &format!("argument `{}`", arg.name)),
                None => self.err(arg.span, format!("reactor `{class}` has no parameter `{}`", arg.name)),
            }
        }
    }

    fn role(&self, table: &SymTable, r: &PortRef) -> Option<PortRole> {
        match &r.container {
            None => match table.get(&r.port.name)? {
                Sym::Input(t) => Some(PortRole::OwnInput(*t)),
                Sym::Output(t) => Some(PortRole::OwnOutput(*t)),
                Sym::Timer => Some(PortRole::Timer),
                Sym::Action(o, t) => Some(PortRole::Action(*o, *t)),
                _ => None,
            },
            Some(c) => {
                let Sym::Instance(class) = table.get(&c.name)? else { return None };
                match self.tables.get(class)?.get(&r.port.name)? {
                    Sym::Input(t) => Some(PortRole::ChildInput(*t)),
                    Sym::Output(t) => Some(PortRole::ChildOutput(*t)),
                    _ => None,
                }
            }
        }
    }

    /// Returns the destination key when the connection is well formed.
    fn connection(&mut self, def: &ReactorDef, table: &SymTable, c: &ConnectionDecl) -> Option<String> {
        let from = self.role(table, &c.from);
        let to = self.role(table, &c.to);
        let mut ok = true;
        let from_ty = match from {
            Some(PortRole::OwnInput(t)) | Some(PortRole::ChildOutput(t)) => Some(t),
            Some(_) => {
                self.err(c.from.span(), format!("direction violation: `{}` cannot be a connection source", c.from.dotted()));
                ok = false;
                None
            }
            None => {
                self.err(c.from.span(), format!("unresolved port `{}` in reactor `{}`", c.from.dotted(), def.name.name));
                ok = false;
                None
            }
        };
        let to_ty = match to {
            Some(PortRole::ChildInput(t)) | Some(PortRole::OwnOutput(t)) => Some(t),
            Some(_) => {
                self.err(c.to.span(), format!("direction violation: `{}` cannot be a connection destination", c.to.dotted()));
                ok = false;
                None
            }
            None => {
                self.err(c.to.span(), format!("unresolved port `{}` in reactor `{}`", c.to.dotted(), def.name.name));
                ok = false;
                None
            }
        };
        if let (Some(a), Some(b)) = (from_ty, to_ty) {
            if a.value_kind() != b.value_kind() {
                self.err(
                    c.to.span(),
                    format!("type mismatch: `{}` is {} but `{}` is {}", c.from.dotted(), a.keyword(), c.to.dotted(), b.keyword()),
                );
            }
        }
        if let Some(d) = &c.delay {
            self.time_expr(d, table, true);
        }
        if let Some(s) = &c.stp {
            if !self.time_expr(s, table, false) {
                self.err(c.to.span(), "stp bound must be positive");
            }
        }
        ok.then(|| c.to.dotted())
    }

    fn reaction(&mut self, def: &ReactorDef, table: &SymTable, r: &ReactionDecl, index: usize, writers: &mut BTreeMap<String, usize>) {
        let what = format!("{}.reaction{index}", def.name.name);
        let mut readable: BTreeSet<String> = BTreeSet::new();
        if r.triggers.is_empty() {
            self.err(r.span, format!("{what} has no triggers"));
        }
        for t in &r.triggers {
            let TriggerRef::Port(p) = t else { continue };
            match self.role(table, p) {
                None => self.err(p.span(), format!("unresolved trigger `{}`", p.dotted())),
                Some(PortRole::OwnOutput(_)) | Some(PortRole::ChildInput(_)) => self.err(
                    p.span(),
                    format!("direction violation: {what} is triggered by `{}`, which it can only write", p.dotted()),
                ),
                Some(_) => {
                    readable.insert(p.dotted());
                }
            }
        }
        for s in &r.sources {
            match self.role(table, s) {
                None => self.err(s.span(), format!("unresolved source `{}`", s.dotted())),
                Some(PortRole::OwnInput(_)) | Some(PortRole::ChildOutput(_)) | Some(PortRole::Action(..)) | Some(PortRole::Timer) => {
                    readable.insert(s.dotted());
                }
                Some(_) => self.err(s.span(), format!("direction violation: {what} cannot read `{}`", s.dotted())),
            }
        }
        let mut ports = BTreeSet::new();
        let mut actions = BTreeSet::new();
        for e in &r.effects {
            match self.role(table, e) {
                None => self.err(e.span(), format!("unresolved effect `{}`", e.dotted())),
                Some(PortRole::OwnOutput(_)) | Some(PortRole::ChildInput(_)) => {
                    if readable.contains(&e.dotted()) {
                        self.err(e.span(), format!("{what} both reads and writes `{}`", e.dotted()));
                    }
                    if matches!(self.role(table, e), Some(PortRole::ChildInput(_))) {
                        *writers.entry(e.dotted()).or_default() += 1;
                    }
                    ports.insert(e.dotted());
                }
                Some(PortRole::Action(..)) => {
                    actions.insert(e.port.name.clone());
                }
                Some(PortRole::OwnInput(_)) | Some(PortRole::ChildOutput(_)) => {
                    self.err(e.span(), format!("direction violation: {what} writes to `{}`, which it can only read", e.dotted()))
                }
                Some(PortRole::Timer) => self.err(e.span(), format!("{what} cannot write timer `{}`", e.dotted())),
            }
        }
        let scope = BodyScope { table, readable: &readable, ports: &ports, actions: &actions };
        self.body(&r.body, &scope);
        if let Some((bound, body)) = &r.deadline {
            if !self.time_expr(bound, table, false) {
                self.err(r.span, format!("deadline of {what} must be positive"));
            }
            self.body(body, &scope);
        }
        if let Some((bound, body)) = &r.stp {
            if let Some(b) = bound {
                if !self.time_expr(b, table, false) {
                    self.err(r.span, format!("stp bound of {what} must be positive"));
                }
            }
            self.body(body, &scope);
        }
    }

    fn body(&mut self, body: &BodyDecl, scope: &BodyScope<'_>) {
        match body {
            BodyDecl::Extern(name) if name.is_empty() => self.err(Span::start(), "extern body name is empty"),
            BodyDecl::Extern(_) => {}
            BodyDecl::Script(block) => {
                let mut locals = vec![BTreeSet::new()];
                self.block(block, scope, &mut locals);
            }
        }
    }

    fn block(&mut self, block: &Block, scope: &BodyScope<'_>, locals: &mut Vec<BTreeSet<String>>) {
        locals.push(BTreeSet::new());
        for stmt in &block.0 {
            match stmt {
                Stmt::Let(name, e) => {
                    self.expr(e, scope, locals);
                    locals.last_mut().unwrap().insert(name.name.clone());
                }
                Stmt::Assign(name, e) => {
                    self.expr(e, scope, locals);
                    let is_local = locals.iter().any(|s| s.contains(&name.name));
                    let is_state = matches!(scope.table.get(&name.name), Some(Sym::State(_)));
                    if !is_local && !is_state {
                        self.err(name.span, format!("cannot assign to `{}`: not a local or state variable", name.name));
                    }
                }
                Stmt::Set(port, e) => {
                    if let Some(e) = e {
                        self.expr(e, scope, locals);
                    }
                    if !scope.ports.contains(&port.dotted()) {
                        self.err(port.span(), format!("`{}` is not a declared port effect of this reaction", port.dotted()));
                    }
                }
                Stmt::Schedule { action, delay, value } => {
                    for e in [delay, value].into_iter().flatten() {
                        self.expr(e, scope, locals);
                    }
                    if !scope.actions.contains(&action.name) {
                        self.err(action.span, format!("`{}` is not a declared action effect of this reaction", action.name));
                    }
                }
                Stmt::Log(e) => self.expr(e, scope, locals),
                Stmt::RequestStop => {}
                Stmt::If(c, then, otherwise) => {
                    self.expr(c, scope, locals);
                    self.block(then, scope, locals);
                    if let Some(b) = otherwise {
                        self.block(b, scope, locals);
                    }
                }
            }
        }
        locals.pop();
    }

    fn expr(&mut self, e: &Expr, scope: &BodyScope<'_>, locals: &[BTreeSet<String>]) {
        match e {
            Expr::Lit(_) => {}
            Expr::Name(r) => {
                let name = r.dotted();
                let known = scope.readable.contains(&name)
                    || (r.container.is_none()
                        && (locals.iter().any(|s| s.contains(&name))
                            || matches!(scope.table.get(&name), Some(Sym::State(_)) | Some(Sym::Param(_)))
                            || CONSTANTS.iter().any(|(c, _)| *c == name)));
                if !known {
                    match scope.table.get(&name) {
                        Some(sym) => self.err(
                            r.span(),
                            format!("{} `{name}` is not among the reaction's triggers or sources", sym.describe()),
                        ),
                        None => self.err(r.span(), format!("unresolved name `{name}`")),
                    }
                }
            }
            Expr::Unary(_, a) => self.expr(a, scope, locals),
            Expr::Binary(_, a, b) => {
                self.expr(a, scope, locals);
                self.expr(b, scope, locals);
            }
            Expr::Call(f, args) => {
                match BUILTINS.iter().find(|(n, _)| *n == f.name) {
                    None => self.err(f.span, format!("unknown function `{}`", f.name)),
                    Some((_, arity)) if *arity != args.len() => {
                        self.err(f.span, format!("`{}` takes {arity} argument(s), got {}", f.name, args.len()))
                    }
                    Some(_) => {}
                }
                if f.name == "present" {
                    if let Some(Expr::Name(r)) = args.first() {
                        if !scope.readable.contains(&r.dotted()) {
                            self.err(r.span(), format!("`present` needs a trigger or source, `{}` is neither", r.dotted()));
                        }
                        return;
                    }
                    self.err(f.span, "`present` needs a trigger or source name");
                    return;
                }
                for a in args {
                    self.expr(a, scope, locals);
                }
            }
        }
    }
}

struct BodyScope<'a> {
    table: &'a SymTable,
    readable: &'a BTreeSet<String>,
    ports: &'a BTreeSet<String>,
    actions: &'a BTreeSet<String>,
}
