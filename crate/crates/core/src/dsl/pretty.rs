//! Source printer. `parse(print(p)) == p` for every parsed program.

use std::fmt::Write;

use super::ast::*;
use super::script::{Block, Expr, Stmt, UnaryOp};
use crate::time::TimeValue;
use crate::value::Value;

pub fn print(program: &Program) -> String {
    let mut out = String::new();
    if let Some(t) = &program.target {
        let _ = writeln!(out, "target {}", t.name);
    }
    for r in &program.reactors {
        out.push('\n');
        reactor(&mut out, r);
    }
    for b in &program.behaviors {
        out.push('\n');
        behavior(&mut out, b);
    }
    out
}

fn reactor(out: &mut String, r: &ReactorDef) {
    match r.main {
        MainKind::None => out.push_str("reactor "),
        MainKind::Main => out.push_str("main reactor "),
        MainKind::Federated => out.push_str("federated reactor "),
    }
    if r.named {
        out.push_str(&r.name.name);
    }
    if !r.params.is_empty() {
        let params: Vec<String> =
            r.params.iter().map(|p| format!("{}: {} = {}", p.name.name, p.ty.keyword(), literal(&p.default))).collect();
        let _ = write!(out, "({})", params.join(", "));
    }
    out.push_str(" {\n");
    for m in &r.members {
        out.push_str("  ");
        member(out, m);
        out.push('\n');
    }
    out.push_str("}\n");
}

fn member(out: &mut String, m: &Member) {
    match m {
        Member::Input(p) => {
            let _ = write!(out, "input {}: {}", p.name.name, p.ty.keyword());
        }
        Member::Output(p) => {
            let _ = write!(out, "output {}: {}", p.name.name, p.ty.keyword());
        }
        Member::Timer(t) => {
            let _ = write!(out, "timer {}({}, {})", t.name.name, time_expr(&t.offset), time_expr(&t.period));
        }
        Member::Action(a) => {
            out.push_str(match a.origin {
                ActionOrigin::Logical => "logical action ",
                ActionOrigin::Physical => "physical action ",
            });
            out.push_str(&a.name.name);
            if let Some(d) = &a.min_delay {
                let _ = write!(out, "({})", time_expr(d));
            }
            let _ = write!(out, ": {}", a.ty.keyword());
        }
        Member::State(s) => {
            let _ = write!(out, "state {}: {} = {}", s.name.name, s.ty.keyword(), literal(&s.init));
        }
        Member::Instance(i) => {
            let args: Vec<String> = i.args.iter().map(|(n, l)| format!("{} = {}", n.name, literal(l))).collect();
            let _ = write!(out, "{} = new {}({})", i.name.name, i.class.name, args.join(", "));
        }
        Member::Connection(c) => {
            let _ = write!(out, "{} -> {}", c.from.dotted(), c.to.dotted());
            if let Some(d) = &c.delay {
                let _ = write!(out, " after {}", time_expr(d));
            }
            if let Some(s) = &c.stp {
                let _ = write!(out, " stp({})", time_expr(s));
            }
        }
        Member::Reaction(r) => reaction(out, r),
    }
}

fn reaction(out: &mut String, r: &ReactionDecl) {
    let triggers: Vec<String> = r
        .triggers
        .iter()
        .map(|t| match t {
            TriggerRef::Startup => "startup".to_string(),
            TriggerRef::Shutdown => "shutdown".to_string(),
            TriggerRef::Port(p) => p.dotted(),
        })
        .collect();
    let _ = write!(out, "reaction({})", triggers.join(", "));
    if !r.sources.is_empty() {
        let sources: Vec<String> = r.sources.iter().map(PortRef::dotted).collect();
        let _ = write!(out, " {}", sources.join(", "));
    }
    if !r.effects.is_empty() {
        let effects: Vec<String> = r.effects.iter().map(PortRef::dotted).collect();
        let _ = write!(out, " -> {}", effects.join(", "));
    }
    out.push(' ');
    out.push_str(&body(&r.body, 2));
    if let Some((bound, b)) = &r.deadline {
        let _ = write!(out, " deadline({}) {}", time_expr(bound), body(b, 2));
    }
    if let Some((bound, b)) = &r.stp {
        out.push_str(" stp");
        if let Some(bound) = bound {
            let _ = write!(out, "({})", time_expr(bound));
        }
        let _ = write!(out, " {}", body(b, 2));
    }
}

/// Source text of a reaction body at the given indentation.
pub fn body(b: &BodyDecl, indent: usize) -> String {
    match b {
        BodyDecl::Extern(name) => format!("extern {}", quote(name)),
        BodyDecl::Script(block) if block.0.is_empty() => "{= =}".to_string(),
        BodyDecl::Script(block) => {
            let mut s = String::from("{=\n");
            stmts(&mut s, block, indent + 2);
            s.push_str(&" ".repeat(indent));
            s.push_str("=}");
            s
        }
    }
}

/// Canonical single-line text of a script block.
pub fn block_inline(block: &Block) -> String {
    let mut s = String::new();
    stmts(&mut s, block, 0);
    s.split('\n').map(str::trim).filter(|l| !l.is_empty()).collect::<Vec<_>>().join(" ")
}

fn stmts(out: &mut String, block: &Block, indent: usize) {
    for s in &block.0 {
        out.push_str(&" ".repeat(indent));
        stmt(out, s, indent);
        out.push('\n');
    }
}

fn stmt(out: &mut String, s: &Stmt, indent: usize) {
    match s {
        Stmt::Let(n, e) => {
            let _ = write!(out, "let {} = {};", n.name, expr(e));
        }
        Stmt::Assign(n, e) => {
            let _ = write!(out, "{} = {};", n.name, expr(e));
        }
        Stmt::Set(p, None) => {
            let _ = write!(out, "set({});", p.dotted());
        }
        Stmt::Set(p, Some(e)) => {
            let _ = write!(out, "set({}, {});", p.dotted(), expr(e));
        }
        Stmt::Schedule { action, delay, value } => {
            let _ = write!(out, "schedule({}", action.name);
            for e in [delay, value].into_iter().flatten() {
                let _ = write!(out, ", {}", expr(e));
            }
            out.push_str(");");
        }
        Stmt::Log(e) => {
            let _ = write!(out, "log({});", expr(e));
        }
        Stmt::RequestStop => out.push_str("request_stop();"),
        Stmt::If(c, then, otherwise) => {
            let _ = writeln!(out, "if {} {{", expr(c));
            stmts(out, then, indent + 2);
            out.push_str(&" ".repeat(indent));
            out.push('}');
            if let Some(b) = otherwise {
                out.push_str(" else {\n");
                stmts(out, b, indent + 2);
                out.push_str(&" ".repeat(indent));
                out.push('}');
            }
        }
    }
}

pub fn expr(e: &Expr) -> String {
    match e {
        Expr::Lit(v) => value(v),
        Expr::Name(p) => p.dotted(),
        Expr::Unary(UnaryOp::Neg, a) => format!("-{}", operand(a)),
        Expr::Unary(UnaryOp::Not, a) => format!("!{}", operand(a)),
        Expr::Binary(op, a, b) => format!("({} {} {})", expr(a), op.symbol(), expr(b)),
        Expr::Call(f, args) => {
            let args: Vec<String> = args.iter().map(expr).collect();
            format!("{}({})", f.name, args.join(", "))
        }
    }
}

/// Operands of unary operators: negative literals need parentheses so
/// that `-(-1)` does not print as `--1` and re-fold differently.
fn operand(e: &Expr) -> String {
    match e {
        Expr::Lit(Value::Int(i)) if *i < 0 => format!("({i})"),
        Expr::Lit(Value::Float(x)) if x.is_sign_negative() => format!("({x:?})"),
        Expr::Lit(_) => format!("({})", expr(e)),
        _ => expr(e),
    }
}

fn value(v: &Value) -> String {
    match v {
        Value::Unit => "()".into(),
        Value::Bool(b) => b.to_string(),
        Value::Int(i) => i.to_string(),
        Value::Float(x) => format!("{x:?}"),
        Value::Text(s) => quote(s),
        Value::Bytes(b) => format!("\"{}\"", hex::encode(b)),
    }
}

fn literal(l: &Literal) -> String {
    match l {
        Literal::Value(v) => value(v),
        Literal::Time(t) => time_literal(*t),
    }
}

fn time_literal(t: TimeValue) -> String {
    if t == TimeValue::ZERO {
        "0 ns".into()
    } else {
        t.to_string()
    }
}

fn time_expr(t: &TimeExpr) -> String {
    match t {
        TimeExpr::Literal(v) => v.to_string(),
        TimeExpr::Param(p) => p.name.clone(),
    }
}

fn quote(s: &str) -> String {
    let mut q = String::from("\"");
    for c in s.chars() {
        match c {
            '"' => q.push_str("\\\""),
            '\\' => q.push_str("\\\\"),
            '\n' => q.push_str("\\n"),
            '\t' => q.push_str("\\t"),
            c => q.push(c),
        }
    }
    q.push('"');
    q
}

fn behavior(out: &mut String, b: &BehaviorDef) {
    let _ = writeln!(out, "behavior {} {{", b.name.name);
    bt_node(out, &b.root, 2);
    for w in &b.wires {
        let _ = writeln!(out, "  wire {} -> {}", w.from.dotted(), w.to.dotted());
    }
    out.push_str("}\n");
}

fn bt_node(out: &mut String, n: &BtNodeDecl, indent: usize) {
    let pad = " ".repeat(indent);
    match n {
        BtNodeDecl::Composite { kind, name, children, .. } => {
            out.push_str(&pad);
            out.push_str(match kind {
                CompositeKind::Sequence => "sequence",
                CompositeKind::Fallback => "fallback",
            });
            if let Some(name) = name {
                let _ = write!(out, " {}", name.name);
            }
            out.push_str(" {\n");
            for c in children {
                bt_node(out, c, indent + 2);
            }
            out.push_str(&pad);
            out.push_str("}\n");
        }
        BtNodeDecl::Leaf { kind, name, ports, body: b } => {
            let ports: Vec<String> = ports
                .iter()
                .map(|p| {
                    let dir = match p.direction {
                        PortDirection::In => "in",
                        PortDirection::Out => "out",
                    };
                    format!("{dir} {}: {}", p.name.name, p.ty.keyword())
                })
                .collect();
            let kw = match kind {
                LeafKind::Action => "action",
                LeafKind::Condition => "condition",
            };
            let _ = writeln!(out, "{pad}{kw} {}({}) = {}", name.name, ports.join(", "), body(b, indent));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parser::parse;

    fn round_trip(src: &str) {
        let a = parse(src).unwrap();
        let printed = print(&a);
        let b = parse(&printed).unwrap_or_else(|e| panic!("{e}\n{printed}"));
        assert_eq!(a, b, "{printed}");
    }

    #[test]
    fn reactor_round_trip() {
        round_trip(
            "target C
             reactor A(n: int = 3, d: time = 5 ms, z: time = 0, f: float = -1.5) {
               input i: int; output o; timer t(0, d); physical action p(1 us): string
               logical action l; state s: float = 0.25
               reaction(i, t) p -> o, l {= let x = -(i + 1) * 2 % 7; if !(x >= 1) && true { set(o, -x); } else { schedule(l, 1 ms, \"a\\\"b\"); } =}
                 deadline(3 ms) extern \"late\" stp {= log(lag()); request_stop(); =}
             }
             federated reactor { a = new A(n = -2, d = 10 ms) b = new A(); a.o -> b.i after 10 ms stp(2 ms) }",
        );
    }

    #[test]
    fn behavior_round_trip() {
        round_trip(
            "behavior Pick { sequence root { condition Seen(out pos: int) = extern \"seen\"
               fallback { action Grab(in pos: int) = {= set(status, SUCCESS); =} } }
               wire Seen.pos -> Grab.pos }",
        );
    }

    #[test]
    fn negation_forms() {
        round_trip("main reactor { reaction(startup) {= let a = - -1; let b = -(-2.5); let c = -(3 - 4); log(!(!true)); =} }");
    }
}
