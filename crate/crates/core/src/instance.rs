//! The flattened instance graph produced by elaboration.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::dsl::ast::ActionOrigin;
use crate::dsl::pretty;
use crate::dsl::script::Block;
use crate::time::TimeValue;
use crate::value::{Value, ValueKind};

pub type ReactorId = usize;
pub type TriggerId = usize;
pub type ReactionId = usize;
pub type ConnectionId = usize;

/// The built-in `startup` trigger.
pub const STARTUP: TriggerId = 0;
/// The built-in `shutdown` trigger.
pub const SHUTDOWN: TriggerId = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ReactorInstance {
    /// Dotted hierarchical name; top-level children carry no prefix.
    pub name: String,
    pub class: String,
    pub parent: Option<ReactorId>,
    /// Index of the owning federate in a federated program.
    pub federate: Option<usize>,
    pub params: BTreeMap<String, Value>,
    pub state: Vec<(String, Value)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TriggerKind {
    Startup,
    Shutdown,
    /// A zero period means the timer fires once.
    Timer { offset: TimeValue, period: TimeValue },
    Action { origin: ActionOrigin, min_delay: TimeValue, kind: ValueKind },
    Input(ValueKind),
    Output(ValueKind),
}

impl TriggerKind {
    pub fn is_port(&self) -> bool {
        matches!(self, TriggerKind::Input(_) | TriggerKind::Output(_))
    }

    pub fn value_kind(&self) -> ValueKind {
        match self {
            TriggerKind::Action { kind, .. } | TriggerKind::Input(kind) | TriggerKind::Output(kind) => *kind,
            _ => ValueKind::Void,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriggerInstance {
    pub name: String,
    pub reactor: Option<ReactorId>,
    pub kind: TriggerKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Body {
    /// Resolved at run time against host-registered callbacks.
    Extern(String),
    Script(Arc<Block>),
}

impl Body {
    fn canonical(&self) -> String {
        match self {
            Body::Extern(n) => format!("extern {n:?}"),
            Body::Script(b) => format!("{{= {} =}}", pretty::block_inline(b)),
        }
    }
}

/// A name visible inside a reaction body and the trigger it denotes.
#[derive(Debug, Clone, PartialEq)]
pub struct Binding {
    pub local: String,
    pub trigger: TriggerId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReactionInstance {
    /// `instance.reactionN`, N counted from 1 in declaration order.
    pub name: String,
    pub reactor: ReactorId,
    pub index: usize,
    pub triggers: Vec<TriggerId>,
    pub sources: Vec<TriggerId>,
    pub effects: Vec<TriggerId>,
    /// Readable names (triggers and sources).
    pub reads: Vec<Binding>,
    /// Writable names (ports and actions).
    pub writes: Vec<Binding>,
    pub body: Body,
    pub deadline: Option<(TimeValue, Body)>,
    pub stp: Option<(Option<TimeValue>, Body)>,
}

impl ReactionInstance {
    pub fn read(&self, local: &str) -> Option<TriggerId> {
        self.reads.iter().find(|b| b.local == local).map(|b| b.trigger)
    }

    pub fn write(&self, local: &str) -> Option<TriggerId> {
        self.writes.iter().find(|b| b.local == local).map(|b| b.trigger)
    }
}

/// A resolved connection between two leaf ports.
#[derive(Debug, Clone, PartialEq)]
pub struct Connection {
    /// `source->destination` with qualified port names.
    pub id: String,
    pub from: TriggerId,
    pub to: TriggerId,
    pub delay: Option<TimeValue>,
    pub stp: Option<TimeValue>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FederateRoot {
    pub index: usize,
    pub name: String,
    pub reactor: ReactorId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceGraph {
    pub main: String,
    pub federated: bool,
    pub reactors: Vec<ReactorInstance>,
    pub triggers: Vec<TriggerInstance>,
    pub reactions: Vec<ReactionInstance>,
    pub connections: Vec<Connection>,
    pub federates: Vec<FederateRoot>,
    /// Per trigger, the reactions it triggers.
    pub triggered: Vec<Vec<ReactionId>>,
    /// Per trigger, the reactions reading it as trigger or source.
    pub readers: Vec<Vec<ReactionId>>,
    /// Per trigger, the outgoing connections.
    pub outgoing: Vec<Vec<ConnectionId>>,
}

impl InstanceGraph {
    pub(crate) fn new(main: String, federated: bool) -> Self {
        let mut g = InstanceGraph {
            main,
            federated,
            reactors: Vec::new(),
            triggers: Vec::new(),
            reactions: Vec::new(),
            connections: Vec::new(),
            federates: Vec::new(),
            triggered: Vec::new(),
            readers: Vec::new(),
            outgoing: Vec::new(),
        };
        g.triggers.push(TriggerInstance { name: "startup".into(), reactor: None, kind: TriggerKind::Startup });
        g.triggers.push(TriggerInstance { name: "shutdown".into(), reactor: None, kind: TriggerKind::Shutdown });
        g
    }

    /// Fills the per-trigger indexes; call after the vectors are final.
    pub(crate) fn index(&mut self) {
        let n = self.triggers.len();
        self.triggered = vec![Vec::new(); n];
        self.readers = vec![Vec::new(); n];
        self.outgoing = vec![Vec::new(); n];
        for (id, r) in self.reactions.iter().enumerate() {
            for &t in &r.triggers {
                self.triggered[t].push(id);
                self.readers[t].push(id);
            }
            for &s in &r.sources {
                if !self.readers[s].contains(&id) {
                    self.readers[s].push(id);
                }
            }
        }
        for (id, c) in self.connections.iter().enumerate() {
            self.outgoing[c.from].push(id);
        }
    }

    pub fn trigger_by_name(&self, name: &str) -> Option<TriggerId> {
        self.triggers.iter().position(|t| t.name == name)
    }

    pub fn reaction_by_name(&self, name: &str) -> Option<ReactionId> {
        self.reactions.iter().position(|r| r.name == name)
    }

    pub fn connection_by_id(&self, id: &str) -> Option<ConnectionId> {
        self.connections.iter().position(|c| c.id == id)
    }

    /// Federate owning a trigger, if the program is federated.
    pub fn federate_of_trigger(&self, t: TriggerId) -> Option<usize> {
        self.triggers[t].reactor.and_then(|r| self.reactors[r].federate)
    }

    pub fn federate_of_reaction(&self, r: ReactionId) -> Option<usize> {
        self.reactors[self.reactions[r].reactor].federate
    }

    /// Canonical text of the whole graph; independent of source layout.
    pub fn canonical_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "main {} federated={}", self.main, self.federated);
        for r in &self.reactors {
            let _ = writeln!(s, "reactor {} : {} params={:?} state={:?}", r.name, r.class, r.params, r.state);
        }
        for t in &self.triggers {
            let _ = writeln!(s, "trigger {} {:?}", t.name, t.kind);
        }
        for r in &self.reactions {
            let names = |ids: &[TriggerId]| ids.iter().map(|&t| self.triggers[t].name.as_str()).collect::<Vec<_>>().join(",");
            let _ = write!(
                s,
                "reaction {} triggers=[{}] sources=[{}] effects=[{}] body={}",
                r.name,
                names(&r.triggers),
                names(&r.sources),
                names(&r.effects),
                r.body.canonical()
            );
            if let Some((d, b)) = &r.deadline {
                let _ = write!(s, " deadline({}) {}", d.as_nanos(), b.canonical());
            }
            if let Some((d, b)) = &r.stp {
                let _ = write!(s, " stp({:?}) {}", d.map(TimeValue::as_nanos), b.canonical());
            }
            s.push('\n');
        }
        for c in &self.connections {
            let _ = writeln!(s, "connection {} delay={:?} stp={:?}", c.id, c.delay.map(TimeValue::as_nanos), c.stp.map(TimeValue::as_nanos));
        }
        for f in &self.federates {
            let _ = writeln!(s, "federate {} {}", f.index, f.name);
        }
        s
    }

    /// SHA-256 of [`canonical_text`](Self::canonical_text), hex encoded.
    pub fn program_hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_text().as_bytes()))
    }
}
