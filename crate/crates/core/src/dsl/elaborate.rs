//! Flattens the reactor hierarchy into an [`InstanceGraph`].

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use super::ast::*;
use super::diag::{Diagnostic, Diagnostics, Span};
use super::validate::CheckedModel;
use crate::instance::*;
use crate::time::TimeValue;
use crate::value::{Value, ValueKind};

/// A connection edge as declared, between port instances.
#[derive(Debug, Clone, Copy)]
struct Edge {
    to: TriggerId,
    delay: Option<TimeValue>,
    stp: Option<TimeValue>,
}

struct Elaborator<'a> {
    model: &'a CheckedModel,
    graph: InstanceGraph,
    edges: BTreeMap<TriggerId, Vec<Edge>>,
    incoming: BTreeSet<TriggerId>,
    diags: Vec<Diagnostic>,
}

/// Members of one reactor instance, by local name.
#[derive(Default)]
struct Scope {
    triggers: BTreeMap<String, TriggerId>,
    children: BTreeMap<String, Scope>,
}

impl Scope {
    fn resolve(&self, r: &PortRef) -> Option<TriggerId> {
        match &r.container {
            None => self.triggers.get(&r.port.name).copied(),
            Some(c) => self.children.get(&c.name)?.triggers.get(&r.port.name).copied(),
        }
    }
}

pub fn elaborate(model: &CheckedModel) -> Result<InstanceGraph, Diagnostics> {
    let main = model.main();
    let mut e = Elaborator {
        model,
        graph: InstanceGraph::new(main.name.name.clone(), model.is_federated()),
        edges: BTreeMap::new(),
        incoming: BTreeSet::new(),
        diags: Vec::new(),
    };
    let mut stack = Vec::new();
    e.instantiate(main, main.name.name.clone(), None, &[], &mut stack);
    if e.diags.is_empty() {
        e.resolve_connections();
    }
    if e.diags.is_empty() {
        e.check_federation();
    }
    if !e.diags.is_empty() {
        return Err(Diagnostics(e.diags));
    }
    e.graph.index();
    Ok(e.graph)
}

impl<'a> Elaborator<'a> {
    fn instantiate(
        &mut self,
        def: &'a ReactorDef,
        name: String,
        parent: Option<ReactorId>,
        args: &[(Ident, Literal)],
        stack: &mut Vec<String>,
    ) -> Option<Scope> {
        if stack.contains(&def.name.name) {
            let mut cycle = stack.clone();
            cycle.push(def.name.name.clone());
            self.diags.push(Diagnostic::error(def.span, format!("instantiation cycle: {}", cycle.join(" -> "))));
            return None;
        }
        stack.push(def.name.name.clone());
        let id = self.graph.reactors.len();
        let mut params = BTreeMap::new();
        for p in &def.params {
            let lit = args.iter().find(|(n, _)| n.name == p.name.name).map(|(_, l)| l).unwrap_or(&p.default);
            params.insert(p.name.name.clone(), coerce(lit.to_value(), p.ty.value_kind()));
        }
        let federate = match parent {
            Some(p) if self.graph.reactors[p].parent.is_none() && self.graph.federated => {
                let index = self.graph.federates.len();
                self.graph.federates.push(FederateRoot { index, name: name.clone(), reactor: id });
                Some(index)
            }
            Some(p) => self.graph.reactors[p].federate,
            None => None,
        };
        let state = def
            .members
            .iter()
            .filter_map(|m| match m {
                Member::State(s) => Some((s.name.name.clone(), coerce(s.init.to_value(), s.ty.value_kind()))),
                _ => None,
            })
            .collect();
        self.graph.reactors.push(ReactorInstance { name: name.clone(), class: def.name.name.clone(), parent, federate, params, state });
        let qualified = |member: &str| format!("{name}.{member}");
        let time = |t: &TimeExpr, graph: &InstanceGraph| -> TimeValue {
            match t {
                TimeExpr::Literal(v) => *v,
                TimeExpr::Param(p) => {
                    TimeValue::from_nanos(graph.reactors[id].params.get(&p.name).and_then(Value::as_int).unwrap_or(0))
                }
            }
        };
        let mut scope = Scope::default();
        for m in &def.members {
            let (member, kind) = match m {
                Member::Input(p) => (&p.name, TriggerKind::Input(p.ty.value_kind())),
                Member::Output(p) => (&p.name, TriggerKind::Output(p.ty.value_kind())),
                Member::Timer(t) => {
                    (&t.name, TriggerKind::Timer { offset: time(&t.offset, &self.graph), period: time(&t.period, &self.graph) })
                }
                Member::Action(a) => (
                    &a.name,
                    TriggerKind::Action {
                        origin: a.origin,
                        min_delay: a.min_delay.as_ref().map(|d| time(d, &self.graph)).unwrap_or(TimeValue::ZERO),
                        kind: a.ty.value_kind(),
                    },
                ),
                _ => continue,
            };
            let tid = self.graph.triggers.len();
            self.graph.triggers.push(TriggerInstance { name: qualified(&member.name), reactor: Some(id), kind });
            scope.triggers.insert(member.name.clone(), tid);
        }
        for m in &def.members {
            if let Member::Instance(inst) = m {
                let class = self.model.reactor(&inst.class.name).expect("validated class");
                let child_name = if parent.is_none() { inst.name.name.clone() } else { qualified(&inst.name.name) };
                if let Some(child) = self.instantiate(class, child_name, Some(id), &inst.args, stack) {
                    scope.children.insert(inst.name.name.clone(), child);
                }
            }
        }
        stack.pop();
        if !self.diags.is_empty() {
            return None;
        }
        for m in &def.members {
            if let Member::Connection(c) = m {
                let (Some(from), Some(to)) = (scope.resolve(&c.from), scope.resolve(&c.to)) else { continue };
                let delay = c.delay.as_ref().map(|d| time(d, &self.graph));
                let stp = c.stp.as_ref().map(|d| time(d, &self.graph));
                self.edges.entry(from).or_default().push(Edge { to, delay, stp });
                self.incoming.insert(to);
            }
        }
        let mut index = 0;
        for m in &def.members {
            let Member::Reaction(r) = m else { continue };
            index += 1;
            let mut triggers = Vec::new();
            let mut reads = Vec::new();
            for t in &r.triggers {
                let tid = match t {
                    TriggerRef::Startup => STARTUP,
                    TriggerRef::Shutdown => SHUTDOWN,
                    TriggerRef::Port(p) => {
                        let tid = scope.resolve(p).expect("validated trigger");
                        reads.push(Binding { local: p.dotted(), trigger: tid });
                        tid
                    }
                };
                if !triggers.contains(&tid) {
                    triggers.push(tid);
                }
            }
            let mut sources = Vec::new();
            for s in &r.sources {
                let tid = scope.resolve(s).expect("validated source");
                if !sources.contains(&tid) && !triggers.contains(&tid) {
                    sources.push(tid);
                }
                reads.push(Binding { local: s.dotted(), trigger: tid });
            }
            let mut effects = Vec::new();
            let mut writes = Vec::new();
            for e in &r.effects {
                let tid = scope.resolve(e).expect("validated effect");
                if !effects.contains(&tid) {
                    effects.push(tid);
                }
                writes.push(Binding { local: e.dotted(), trigger: tid });
            }
            let body = |b: &BodyDecl| match b {
                BodyDecl::Extern(n) => Body::Extern(n.clone()),
                BodyDecl::Script(s) => Body::Script(Arc::new(s.clone())),
            };
            let deadline = r.deadline.as_ref().map(|(d, b)| (time(d, &self.graph), body(b)));
            let stp = r.stp.as_ref().map(|(d, b)| (d.as_ref().map(|d| time(d, &self.graph)), body(b)));
            self.graph.reactions.push(ReactionInstance {
                name: qualified(&format!("reaction{index}")),
                reactor: id,
                index,
                triggers,
                sources,
                effects,
                reads,
                writes,
                body: body(&r.body),
                deadline,
                stp,
            });
        }
        Some(scope)
    }

    /// Follows port-to-port edges from every origin port and records one
    /// connection per reachable port that some reaction reads.
    fn resolve_connections(&mut self) {
        let mut readers = vec![false; self.graph.triggers.len()];
        for r in &self.graph.reactions {
            for &t in r.triggers.iter().chain(&r.sources) {
                readers[t] = true;
            }
        }
        let origins: Vec<TriggerId> = self.edges.keys().copied().filter(|t| !self.incoming.contains(t)).collect();
        for origin in origins {
            let mut stack = vec![(origin, None::<TimeValue>, None::<TimeValue>)];
            let mut seen = BTreeSet::new();
            while let Some((port, delay, stp)) = stack.pop() {
                for edge in self.edges.get(&port).cloned().unwrap_or_default() {
                    if !seen.insert(edge.to) {
                        continue;
                    }
                    let delay = match (delay, edge.delay) {
                        (None, d) | (d, None) => d,
                        (Some(a), Some(b)) => Some(a.checked_add(b).unwrap_or(TimeValue::MAX)),
                    };
                    let stp = edge.stp.or(stp);
                    if readers[edge.to] || !self.edges.contains_key(&edge.to) {
                        let id = format!("{}->{}", self.graph.triggers[origin].name, self.graph.triggers[edge.to].name);
                        self.graph.connections.push(Connection { id, from: origin, to: edge.to, delay, stp });
                    }
                    stack.push((edge.to, delay, stp));
                }
            }
        }
        self.graph.connections.sort_by(|a, b| a.id.cmp(&b.id));
        // a connection without its own bound inherits the receiving reactions' stp clause
        for c in &mut self.graph.connections {
            if c.stp.is_none() {
                c.stp = self
                    .graph
                    .reactions
                    .iter()
                    .filter(|r| r.triggers.contains(&c.to))
                    .filter_map(|r| r.stp.as_ref().and_then(|(b, _)| *b))
                    .min();
            }
        }
    }

    fn check_federation(&mut self) {
        if !self.graph.federated {
            return;
        }
        for c in &self.graph.connections {
            let a = self.graph.federate_of_trigger(c.from);
            let b = self.graph.federate_of_trigger(c.to);
            if a != b && !c.delay.is_some_and(TimeValue::is_positive) {
                self.diags.push(Diagnostic::error(
                    Span::start(),
                    format!("cross-federate connection `{}` needs a positive `after` delay", c.id),
                ));
            }
        }
    }
}

fn coerce(v: Value, kind: ValueKind) -> Value {
    match (v, kind) {
        (Value::Int(i), ValueKind::Float) => Value::Float(i as f64),
        (v, _) => v,
    }
}
