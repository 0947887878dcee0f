//! Behavior trees with dataflow ports.
//!
//! Trees are reactive: every tick restarts at the root. A sequence returns
//! the first child status that is not success, a fallback the first that is
//! not failure; empty sequences succeed and empty fallbacks fail.

pub mod compile;
pub mod equivalence;

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::dsl::ast::{BehaviorDef, BtNodeDecl, CompositeKind, LeafKind, PortDirection};
use crate::value::{Value, ValueKind};

pub use compile::{lower_behavior, lower_program};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Status {
    Success,
    Failure,
    Running,
}

impl Status {
    pub const ALL: [Status; 3] = [Status::Success, Status::Failure, Status::Running];

    /// Integer encoding used on `status` ports.
    pub fn code(self) -> i64 {
        match self {
            Status::Success => 0,
            Status::Failure => 1,
            Status::Running => 2,
        }
    }

    pub fn from_code(code: i64) -> Option<Status> {
        Status::ALL.into_iter().find(|s| s.code() == code)
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Success => "success",
            Status::Failure => "failure",
            Status::Running => "running",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BtNode {
    Composite { kind: CompositeKind, name: String, children: Vec<BtNode> },
    Leaf { kind: LeafKind, name: String, inputs: Vec<(String, ValueKind)>, outputs: Vec<(String, ValueKind)> },
}

impl BtNode {
    pub fn name(&self) -> &str {
        match self {
            BtNode::Composite { name, .. } | BtNode::Leaf { name, .. } => name,
        }
    }

    pub fn leaves(&self) -> Vec<&str> {
        let mut out = Vec::new();
        fn walk<'a>(n: &'a BtNode, out: &mut Vec<&'a str>) {
            match n {
                BtNode::Composite { children, .. } => children.iter().for_each(|c| walk(c, out)),
                BtNode::Leaf { name, .. } => out.push(name),
            }
        }
        walk(self, &mut out);
        out
    }

    /// Builds the node tree of a parsed behavior, naming composites the same
    /// way the lowering does.
    pub fn from_decl(b: &BehaviorDef) -> BtNode {
        let names = compile::node_names(&b.root);
        let mut index = 0;
        fn conv(n: &BtNodeDecl, names: &[String], index: &mut usize) -> BtNode {
            let name = names[*index].clone();
            *index += 1;
            match n {
                BtNodeDecl::Composite { kind, children, .. } => {
                    BtNode::Composite { kind: *kind, name, children: children.iter().map(|c| conv(c, names, index)).collect() }
                }
                BtNodeDecl::Leaf { kind, ports, .. } => {
                    let pick = |d: PortDirection| {
                        ports.iter().filter(|p| p.direction == d).map(|p| (p.name.name.clone(), p.ty.value_kind())).collect()
                    };
                    BtNode::Leaf { kind: *kind, name, inputs: pick(PortDirection::In), outputs: pick(PortDirection::Out) }
                }
            }
        }
        conv(&b.root, &names, &mut index)
    }
}

/// `from_leaf.port -> to_leaf.port`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Wire {
    pub from: (String, String),
    pub to: (String, String),
}

impl Wire {
    pub fn from_decl(b: &BehaviorDef) -> Vec<Wire> {
        b.wires
            .iter()
            .map(|w| {
                let side = |r: &crate::dsl::ast::PortRef| {
                    (r.container.as_ref().map(|c| c.name.clone()).unwrap_or_default(), r.port.name.clone())
                };
                Wire { from: side(&w.from), to: side(&w.to) }
            })
            .collect()
    }
}

/// What one leaf does when ticked: its status and the values it writes.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafResult {
    pub status: Status,
    pub outputs: BTreeMap<String, Value>,
}

impl From<Status> for LeafResult {
    fn from(status: Status) -> Self {
        LeafResult { status, outputs: BTreeMap::new() }
    }
}

/// Observable outcome of one tick.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TickResult {
    pub status: Status,
    pub activated: Vec<String>,
    /// `leaf.port` → value for every port written or received during the tick.
    pub ports: BTreeMap<String, Value>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("no outcome defined for leaf `{0}`")]
    UndefinedOutcome(String),
}

/// Reference tick semantics, evaluated directly on the tree.
///
/// `leaf` receives the leaf name and the values present on its input ports.
pub fn bt_tick_oracle(
    tree: &BtNode,
    wires: &[Wire],
    leaf: &mut dyn FnMut(&str, &BTreeMap<String, Value>) -> Option<LeafResult>,
) -> Result<TickResult, OracleError> {
    struct Env<'a> {
        wires: &'a [Wire],
        activated: Vec<String>,
        ports: BTreeMap<String, Value>,
    }
    fn tick(
        n: &BtNode,
        env: &mut Env<'_>,
        leaf: &mut dyn FnMut(&str, &BTreeMap<String, Value>) -> Option<LeafResult>,
    ) -> Result<Status, OracleError> {
        match n {
            BtNode::Composite { kind, children, .. } => {
                let proceed = match kind {
                    CompositeKind::Sequence => Status::Success,
                    CompositeKind::Fallback => Status::Failure,
                };
                for c in children {
                    let s = tick(c, env, leaf)?;
                    if s != proceed {
                        return Ok(s);
                    }
                }
                Ok(proceed)
            }
            BtNode::Leaf { name, inputs, .. } => {
                env.activated.push(name.clone());
                let mut present = BTreeMap::new();
                for (port, _) in inputs {
                    let key = format!("{name}.{port}");
                    if let Some(v) = env.ports.get(&key) {
                        present.insert(port.clone(), v.clone());
                    }
                }
                let result = leaf(name, &present).ok_or_else(|| OracleError::UndefinedOutcome(name.clone()))?;
                for (port, v) in result.outputs {
                    let key = format!("{name}.{port}");
                    for w in env.wires.iter().filter(|w| w.from.0 == *name && w.from.1 == port) {
                        env.ports.insert(format!("{}.{}", w.to.0, w.to.1), v.clone());
                    }
                    env.ports.insert(key, v);
                }
                Ok(result.status)
            }
        }
    }
    let mut env = Env { wires, activated: Vec::new(), ports: BTreeMap::new() };
    let status = tick(tree, &mut env, leaf)?;
    Ok(TickResult { status, activated: env.activated, ports: env.ports })
}
