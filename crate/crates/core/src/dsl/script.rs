//! Built-in reaction body language.
//!
//! Bodies written between `{=` and `=}` are parsed into this small
//! statement language: locals, state assignment, arithmetic, comparisons,
//! conditionals, `set(port, expr)`, `schedule(action, delay, expr)`,
//! `log(expr)` and `request_stop()`.

use std::collections::BTreeSet;

use super::ast::{Ident, PortRef};
use crate::value::Value;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Block(pub Vec<Stmt>);

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    Let(Ident, Expr),
    Assign(Ident, Expr),
    /// `set(port)` writes the unit value.
    Set(PortRef, Option<Expr>),
    Schedule { action: Ident, delay: Option<Expr>, value: Option<Expr> },
    Log(Expr),
    RequestStop,
    If(Expr, Block, Option<Block>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Or,
    And,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Add,
    Sub,
    Mul,
    Div,
    Rem,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Or => "||",
            BinaryOp::And => "&&",
            BinaryOp::Eq => "==",
            BinaryOp::Ne => "!=",
            BinaryOp::Lt => "<",
            BinaryOp::Le => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::Ge => ">=",
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Rem => "%",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Lit(Value),
    /// A local, trigger, source, state variable, parameter or constant.
    Name(PortRef),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    Call(Ident, Vec<Expr>),
}

/// Builtin functions callable from expressions, with their arity.
pub const BUILTINS: &[(&str, usize)] = &[
    ("present", 1),
    ("abs", 1),
    ("min", 2),
    ("max", 2),
    ("float", 1),
    ("int", 1),
    ("time", 0),
    ("microstep", 0),
    ("lag", 0),
];

/// Named constants available to every body (behavior-tree status codes).
pub const CONSTANTS: &[(&str, i64)] = &[("SUCCESS", 0), ("FAILURE", 1), ("RUNNING", 2)];

impl Block {
    /// Every local name introduced with `let`, anywhere in the block.
    pub fn let_names(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.visit_stmts(&mut |s| {
            if let Stmt::Let(name, _) = s {
                out.insert(name.name.clone());
            }
        });
        out
    }

    pub fn visit_stmts(&self, f: &mut impl FnMut(&Stmt)) {
        for stmt in &self.0 {
            f(stmt);
            if let Stmt::If(_, then, otherwise) = stmt {
                then.visit_stmts(f);
                if let Some(b) = otherwise {
                    b.visit_stmts(f);
                }
            }
        }
    }

    pub fn visit_exprs(&self, f: &mut impl FnMut(&Expr)) {
        self.visit_stmts(&mut |s| match s {
            Stmt::Let(_, e) | Stmt::Assign(_, e) | Stmt::Log(e) | Stmt::If(e, _, _) => e.visit(f),
            Stmt::Set(_, e) => {
                if let Some(e) = e {
                    e.visit(f);
                }
            }
            Stmt::Schedule { delay, value, .. } => {
                for e in [delay, value].into_iter().flatten() {
                    e.visit(f);
                }
            }
            Stmt::RequestStop => {}
        });
    }
}

impl Expr {
    pub fn visit(&self, f: &mut impl FnMut(&Expr)) {
        f(self);
        match self {
            Expr::Lit(_) | Expr::Name(_) => {}
            Expr::Unary(_, e) => e.visit(f),
            Expr::Binary(_, a, b) => {
                a.visit(f);
                b.visit(f);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.visit(f)),
        }
    }
}
