//! Lowering of `behavior` blocks to reactor definitions.
//!
//! Every node becomes one child instance of a reactor named after the
//! behavior. Nodes have a `start` input and an integer `status` output;
//! composites own one `cK_start` output and one `cK_status` input per child
//! and forward the start signal to the next child only when the previous
//! child's status lets the composite continue. The whole tree therefore
//! evaluates at one tag over delay-free connections.

use super::Status;
use crate::dsl::ast::*;
use crate::dsl::diag::{Diagnostic, Diagnostics, Span};
use crate::dsl::script::{BinaryOp, Block, Expr, Stmt};
use crate::value::Value;

/// Name of the generated reactor class for a node.
pub fn node_class(behavior: &str, node: &str) -> String {
    format!("{behavior}__{node}")
}

/// Instance names of the tree's nodes in preorder; composites without a
/// name are called `sequenceK` / `fallbackK` with K their preorder index.
pub fn node_names(root: &BtNodeDecl) -> Vec<String> {
    let mut out = Vec::new();
    fn walk(n: &BtNodeDecl, out: &mut Vec<String>) {
        let index = out.len() + 1;
        match n {
            BtNodeDecl::Composite { kind, name, children, .. } => {
                out.push(match name {
                    Some(n) => n.name.clone(),
                    None => match kind {
                        CompositeKind::Sequence => format!("sequence{index}"),
                        CompositeKind::Fallback => format!("fallback{index}"),
                    },
                });
                for c in children {
                    walk(c, out);
                }
            }
            BtNodeDecl::Leaf { name, .. } => out.push(name.name.clone()),
        }
    }
    walk(root, &mut out);
    out
}

/// Replaces every behavior block with its generated reactor definitions.
pub fn lower_program(mut program: Program) -> Result<Program, Diagnostics> {
    let behaviors = std::mem::take(&mut program.behaviors);
    for b in &behaviors {
        program.reactors.extend(lower_behavior(b)?);
    }
    Ok(program)
}

/// Lowers one behavior; the first definition returned is the behavior
/// reactor itself, with input `tick` and output `status`.
pub fn lower_behavior(b: &BehaviorDef) -> Result<Vec<ReactorDef>, Diagnostics> {
    let names = node_names(&b.root);
    let mut seen = std::collections::BTreeSet::new();
    for n in &names {
        if !seen.insert(n) || n == "tick" || n == "status" {
            return Err(Diagnostics::single(Diagnostic::error(
                b.name.span,
                format!("behavior `{}` has more than one node named `{n}`", b.name.name),
            )));
        }
    }
    let mut defs = Vec::new();
    let mut members = vec![
        Member::Input(PortDecl { name: Ident::new("tick"), ty: TypeName::Void }),
        Member::Output(PortDecl { name: Ident::new("status"), ty: TypeName::Int }),
    ];
    let mut index = 0;
    lower_node(&b.name.name, &b.root, &names, &mut index, &mut defs, &mut members);
    members.push(conn(PortRef::local("tick"), PortRef::child(&names[0], "start")));
    members.push(conn(PortRef::child(&names[0], "status"), PortRef::local("status")));
    for w in &b.wires {
        members.push(Member::Connection(ConnectionDecl { from: w.from.clone(), to: w.to.clone(), delay: None, stp: None }));
    }
    let top = ReactorDef { name: b.name.clone(), named: true, main: MainKind::None, params: vec![], members, span: b.span };
    defs.insert(0, top);
    Ok(defs)
}

fn conn(from: PortRef, to: PortRef) -> Member {
    Member::Connection(ConnectionDecl { from, to, delay: None, stp: None })
}

fn lower_node(
    behavior: &str,
    node: &BtNodeDecl,
    names: &[String],
    index: &mut usize,
    defs: &mut Vec<ReactorDef>,
    top: &mut Vec<Member>,
) {
    let name = names[*index].clone();
    *index += 1;
    let class = Ident::new(node_class(behavior, &name));
    top.push(Member::Instance(InstanceDecl { name: Ident::new(&name), class: class.clone(), args: vec![] }));
    let mut members = vec![
        Member::Input(PortDecl { name: Ident::new("start"), ty: TypeName::Void }),
        Member::Output(PortDecl { name: Ident::new("status"), ty: TypeName::Int }),
    ];
    match node {
        BtNodeDecl::Leaf { ports, body, .. } => {
            let mut sources = Vec::new();
            let mut effects = vec![PortRef::local("status")];
            for p in ports {
                let decl = PortDecl { name: p.name.clone(), ty: p.ty };
                match p.direction {
                    PortDirection::In => {
                        members.push(Member::Input(decl));
                        sources.push(PortRef { container: None, port: p.name.clone() });
                    }
                    PortDirection::Out => {
                        members.push(Member::Output(decl));
                        effects.push(PortRef { container: None, port: p.name.clone() });
                    }
                }
            }
            members.push(Member::Reaction(ReactionDecl {
                triggers: vec![TriggerRef::Port(PortRef::local("start"))],
                sources,
                effects,
                body: body.clone(),
                deadline: None,
                stp: None,
                span: Span::default(),
            }));
        }
        BtNodeDecl::Composite { kind, children, .. } => {
            // the status that lets a composite move on to its next child
            let proceed = match kind {
                CompositeKind::Sequence => Status::Success,
                CompositeKind::Fallback => Status::Failure,
            };
            let n = children.len();
            for k in 1..=n {
                members.push(Member::Input(PortDecl { name: Ident::new(format!("c{k}_status")), ty: TypeName::Int }));
                members.push(Member::Output(PortDecl { name: Ident::new(format!("c{k}_start")), ty: TypeName::Void }));
            }
            let start_body = if n == 0 {
                (PortRef::local("status"), Block(vec![set("status", Some(int(proceed.code())))]))
            } else {
                (PortRef::local("c1_start"), Block(vec![set("c1_start", None)]))
            };
            members.push(reaction("start", vec![start_body.0], start_body.1));
            for k in 1..=n {
                let st = format!("c{k}_status");
                let forward = set("status", Some(Expr::Name(PortRef::local(&st))));
                if k < n {
                    let next = format!("c{}_start", k + 1);
                    let cond = Expr::Binary(BinaryOp::Eq, Box::new(Expr::Name(PortRef::local(&st))), Box::new(int(proceed.code())));
                    let body = Block(vec![Stmt::If(cond, Block(vec![set(&next, None)]), Some(Block(vec![forward])))]);
                    members.push(reaction(&st, vec![PortRef::local(&next), PortRef::local("status")], body));
                } else {
                    members.push(reaction(&st, vec![PortRef::local("status")], Block(vec![forward])));
                }
            }
            for (k, c) in children.iter().enumerate() {
                let child_name = names[*index].clone();
                top.push(conn(PortRef::child(&name, format!("c{}_start", k + 1)), PortRef::child(&child_name, "start")));
                top.push(conn(PortRef::child(&child_name, "status"), PortRef::child(&name, format!("c{}_status", k + 1))));
                lower_node(behavior, c, names, index, defs, top);
            }
        }
    }
    defs.push(ReactorDef { name: class, named: true, main: MainKind::None, params: vec![], members, span: Span::default() });
}

fn set(port: &str, value: Option<Expr>) -> Stmt {
    Stmt::Set(PortRef::local(port), value)
}

fn int(i: i64) -> Expr {
    Expr::Lit(Value::Int(i))
}

fn reaction(trigger: &str, effects: Vec<PortRef>, body: Block) -> Member {
    Member::Reaction(ReactionDecl {
        triggers: vec![TriggerRef::Port(PortRef::local(trigger))],
        sources: vec![],
        effects,
        body: BodyDecl::Script(body),
        deadline: None,
        stp: None,
        span: Span::default(),
    })
}
