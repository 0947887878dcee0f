//! Syntax tree of the reactor language.

use super::diag::Span;
use super::script::Block;
use crate::time::TimeValue;
use crate::value::{Value, ValueKind};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ident {
    pub name: String,
    pub span: Span,
}

impl Ident {
    pub fn new(name: impl Into<String>) -> Ident {
        Ident { name: name.into(), span: Span::default() }
    }

    pub fn as_str(&self) -> &str {
        &self.name
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Program {
    pub target: Option<Ident>,
    pub reactors: Vec<ReactorDef>,
    pub behaviors: Vec<BehaviorDef>,
}

impl Program {
    pub fn main(&self) -> Option<&ReactorDef> {
        self.reactors.iter().find(|r| r.main != MainKind::None)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MainKind {
    None,
    Main,
    Federated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReactorDef {
    pub name: Ident,
    /// Main reactors may be anonymous; `named` records whether the source gave a name.
    pub named: bool,
    pub main: MainKind,
    pub params: Vec<ParamDecl>,
    pub members: Vec<Member>,
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TypeName {
    Void,
    Bool,
    Int,
    Float,
    String,
    Bytes,
    /// Integer nanoseconds, written with time literals.
    Time,
}

impl TypeName {
    pub fn value_kind(self) -> ValueKind {
        match self {
            TypeName::Void => ValueKind::Void,
            TypeName::Bool => ValueKind::Bool,
            TypeName::Int | TypeName::Time => ValueKind::Int,
            TypeName::Float => ValueKind::Float,
            TypeName::String => ValueKind::Text,
            TypeName::Bytes => ValueKind::Bytes,
        }
    }

    pub fn keyword(self) -> &'static str {
        match self {
            TypeName::Void => "void",
            TypeName::Bool => "bool",
            TypeName::Int => "int",
            TypeName::Float => "float",
            TypeName::String => "string",
            TypeName::Bytes => "bytes",
            TypeName::Time => "time",
        }
    }

    pub fn from_keyword(s: &str) -> Option<TypeName> {
        Some(match s {
            "void" => TypeName::Void,
            "bool" => TypeName::Bool,
            "int" => TypeName::Int,
            "float" => TypeName::Float,
            "string" => TypeName::String,
            "bytes" => TypeName::Bytes,
            "time" => TypeName::Time,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Value(Value),
    Time(TimeValue),
}

impl Literal {
    pub fn to_value(&self) -> Value {
        match self {
            Literal::Value(v) => v.clone(),
            Literal::Time(t) => Value::Int(t.as_nanos()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamDecl {
    pub name: Ident,
    pub ty: TypeName,
    pub default: Literal,
}

/// A time given either literally or by naming a `time` parameter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TimeExpr {
    Literal(TimeValue),
    Param(Ident),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Member {
    Input(PortDecl),
    Output(PortDecl),
    Timer(TimerDecl),
    Action(ActionDecl),
    State(StateDecl),
    Instance(InstanceDecl),
    Connection(ConnectionDecl),
    Reaction(ReactionDecl),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PortDecl {
    pub name: Ident,
    pub ty: TypeName,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimerDecl {
    pub name: Ident,
    pub offset: TimeExpr,
    pub period: TimeExpr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionOrigin {
    Logical,
    Physical,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionDecl {
    pub name: Ident,
    pub origin: ActionOrigin,
    pub min_delay: Option<TimeExpr>,
    pub ty: TypeName,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateDecl {
    pub name: Ident,
    pub ty: TypeName,
    pub init: Literal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceDecl {
    pub name: Ident,
    pub class: Ident,
    pub args: Vec<(Ident, Literal)>,
}

/// `port` or `container.port`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PortRef {
    pub container: Option<Ident>,
    pub port: Ident,
}

impl PortRef {
    pub fn local(name: impl Into<String>) -> PortRef {
        PortRef { container: None, port: Ident::new(name) }
    }

    pub fn child(container: impl Into<String>, port: impl Into<String>) -> PortRef {
        PortRef { container: Some(Ident::new(container)), port: Ident::new(port) }
    }

    pub fn span(&self) -> Span {
        self.container.as_ref().map(|c| c.span).unwrap_or(self.port.span)
    }

    pub fn dotted(&self) -> String {
        match &self.container {
            Some(c) => format!("{}.{}", c.name, self.port.name),
            None => self.port.name.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConnectionDecl {
    pub from: PortRef,
    pub to: PortRef,
    pub delay: Option<TimeExpr>,
    pub stp: Option<TimeExpr>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TriggerRef {
    Startup,
    Shutdown,
    Port(PortRef),
}

#[derive(Debug, Clone, PartialEq)]
pub enum BodyDecl {
    Extern(String),
    Script(Block),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReactionDecl {
    pub triggers: Vec<TriggerRef>,
    pub sources: Vec<PortRef>,
    pub effects: Vec<PortRef>,
    pub body: BodyDecl,
    pub deadline: Option<(TimeExpr, BodyDecl)>,
    pub stp: Option<(Option<TimeExpr>, BodyDecl)>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorDef {
    pub name: Ident,
    pub root: BtNodeDecl,
    pub wires: Vec<WireDecl>,
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompositeKind {
    Sequence,
    Fallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeafKind {
    Action,
    Condition,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PortDirection {
    In,
    Out,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BtPortDecl {
    pub direction: PortDirection,
    pub name: Ident,
    pub ty: TypeName,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BtNodeDecl {
    Composite { kind: CompositeKind, name: Option<Ident>, children: Vec<BtNodeDecl>, span: Span },
    Leaf { kind: LeafKind, name: Ident, ports: Vec<BtPortDecl>, body: BodyDecl },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireDecl {
    pub from: PortRef,
    pub to: PortRef,
}
