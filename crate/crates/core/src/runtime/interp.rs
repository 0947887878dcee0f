//! Interpreter for built-in reaction bodies.

use super::context::ReactionCtx;
use crate::dsl::ast::PortRef;
use crate::dsl::script::{BinaryOp, Block, Expr, Stmt, UnaryOp, CONSTANTS};
use crate::time::TimeValue;
use crate::value::Value;

type R<T> = Result<T, String>;

pub fn exec(block: &Block, ctx: &mut ReactionCtx<'_>) -> R<()> {
    let mut locals = Vec::new();
    run_block(block, ctx, &mut locals)
}

fn run_block(block: &Block, ctx: &mut ReactionCtx<'_>, locals: &mut Vec<(String, Value)>) -> R<()> {
    let mark = locals.len();
    for stmt in &block.0 {
        match stmt {
            Stmt::Let(name, e) => {
                let v = eval(e, ctx, locals)?;
                locals.push((name.name.clone(), v));
            }
            Stmt::Assign(name, e) => {
                let v = eval(e, ctx, locals)?;
                if let Some(slot) = locals.iter_mut().rev().find(|(n, _)| *n == name.name) {
                    slot.1 = v;
                } else {
                    ctx.set_state(&name.name, v)?;
                }
            }
            Stmt::Set(port, e) => {
                let v = match e {
                    Some(e) => eval(e, ctx, locals)?,
                    None => Value::Unit,
                };
                ctx.set(&port.dotted(), v)?;
            }
            Stmt::Schedule { action, delay, value } => {
                let delay = match delay {
                    Some(e) => match eval(e, ctx, locals)? {
                        Value::Int(ns) => TimeValue::from_nanos(ns),
                        other => return Err(format!("schedule delay must be a time, got {}", other.kind())),
                    },
                    None => TimeValue::ZERO,
                };
                let value = match value {
                    Some(e) => eval(e, ctx, locals)?,
                    None => Value::Unit,
                };
                ctx.schedule(&action.name, delay, value)?;
            }
            Stmt::Log(e) => {
                let v = eval(e, ctx, locals)?;
                ctx.log(v.to_string());
            }
            Stmt::RequestStop => ctx.request_stop(),
            Stmt::If(c, then, otherwise) => match eval(c, ctx, locals)? {
                Value::Bool(true) => run_block(then, ctx, locals)?,
                Value::Bool(false) => {
                    if let Some(b) = otherwise {
                        run_block(b, ctx, locals)?;
                    }
                }
                other => return Err(format!("condition must be bool, got {}", other.kind())),
            },
        }
    }
    locals.truncate(mark);
    Ok(())
}

fn lookup(r: &PortRef, ctx: &ReactionCtx<'_>, locals: &[(String, Value)]) -> R<Value> {
    let name = r.dotted();
    if r.container.is_none() {
        if let Some((_, v)) = locals.iter().rev().find(|(n, _)| *n == name) {
            return Ok(v.clone());
        }
    }
    if let Some(v) = ctx.read_binding(&name) {
        return v.cloned().ok_or_else(|| format!("`{name}` is absent"));
    }
    if let Some(v) = ctx.state(&name).or_else(|| ctx.param(&name)) {
        return Ok(v.clone());
    }
    if let Some((_, c)) = CONSTANTS.iter().find(|(c, _)| *c == name) {
        return Ok(Value::Int(*c));
    }
    Err(format!("unknown name `{name}`"))
}

fn eval(e: &Expr, ctx: &ReactionCtx<'_>, locals: &[(String, Value)]) -> R<Value> {
    match e {
        Expr::Lit(v) => Ok(v.clone()),
        Expr::Name(r) => lookup(r, ctx, locals),
        Expr::Unary(op, a) => {
            let a = eval(a, ctx, locals)?;
            match (op, a) {
                (UnaryOp::Neg, Value::Int(i)) => i.checked_neg().map(Value::Int).ok_or_else(|| "integer overflow".into()),
                (UnaryOp::Neg, Value::Float(x)) => Ok(Value::Float(-x)),
                (UnaryOp::Not, Value::Bool(b)) => Ok(Value::Bool(!b)),
                (op, a) => Err(format!("cannot apply `{}` to {}", if *op == UnaryOp::Neg { "-" } else { "!" }, a.kind())),
            }
        }
        Expr::Binary(BinaryOp::And, a, b) => match eval(a, ctx, locals)? {
            Value::Bool(false) => Ok(Value::Bool(false)),
            Value::Bool(true) => expect_bool(eval(b, ctx, locals)?),
            other => Err(format!("`&&` needs bool operands, got {}", other.kind())),
        },
        Expr::Binary(BinaryOp::Or, a, b) => match eval(a, ctx, locals)? {
            Value::Bool(true) => Ok(Value::Bool(true)),
            Value::Bool(false) => expect_bool(eval(b, ctx, locals)?),
            other => Err(format!("`||` needs bool operands, got {}", other.kind())),
        },
        Expr::Binary(op, a, b) => binary(*op, eval(a, ctx, locals)?, eval(b, ctx, locals)?),
        Expr::Call(f, args) => {
            if f.name == "present" {
                let Some(Expr::Name(r)) = args.first() else { return Err("`present` needs a name".into()) };
                return Ok(Value::Bool(matches!(ctx.read_binding(&r.dotted()), Some(Some(_)))));
            }
            let args = args.iter().map(|a| eval(a, ctx, locals)).collect::<R<Vec<_>>>()?;
            call(&f.name, args, ctx)
        }
    }
}

fn expect_bool(v: Value) -> R<Value> {
    match v {
        Value::Bool(_) => Ok(v),
        other => Err(format!("expected bool, got {}", other.kind())),
    }
}

fn binary(op: BinaryOp, a: Value, b: Value) -> R<Value> {
    use BinaryOp::*;
    let sym = op.symbol();
    let overflow = || format!("integer overflow in `{sym}`");
    match (op, &a, &b) {
        (Eq, _, _) => return Ok(Value::Bool(loose_eq(&a, &b))),
        (Ne, _, _) => return Ok(Value::Bool(!loose_eq(&a, &b))),
        (Add, Value::Text(x), Value::Text(y)) => return Ok(Value::Text(format!("{x}{y}"))),
        (Lt | Le | Gt | Ge, Value::Text(x), Value::Text(y)) => return Ok(Value::Bool(compare(op, x.cmp(y)))),
        _ => {}
    }
    match (&a, &b) {
        (Value::Int(x), Value::Int(y)) => {
            let (x, y) = (*x, *y);
            Ok(match op {
                Add => Value::Int(x.checked_add(y).ok_or_else(overflow)?),
                Sub => Value::Int(x.checked_sub(y).ok_or_else(overflow)?),
                Mul => Value::Int(x.checked_mul(y).ok_or_else(overflow)?),
                Div if y == 0 => return Err("division by zero".into()),
                Rem if y == 0 => return Err("division by zero".into()),
                Div => Value::Int(x.checked_div(y).ok_or_else(overflow)?),
                Rem => Value::Int(x.checked_rem(y).ok_or_else(overflow)?),
                Lt | Le | Gt | Ge => Value::Bool(compare(op, x.cmp(&y))),
                Eq | Ne | And | Or => unreachable!("handled above"),
            })
        }
        (Value::Int(_) | Value::Float(_), Value::Int(_) | Value::Float(_)) => {
            let (x, y) = (as_f64(&a), as_f64(&b));
            Ok(match op {
                Add => Value::Float(x + y),
                Sub => Value::Float(x - y),
                Mul => Value::Float(x * y),
                Div => Value::Float(x / y),
                Rem => Value::Float(x % y),
                Lt => Value::Bool(x < y),
                Le => Value::Bool(x <= y),
                Gt => Value::Bool(x > y),
                Ge => Value::Bool(x >= y),
                Eq | Ne | And | Or => unreachable!("handled above"),
            })
        }
        _ => Err(format!("cannot apply `{sym}` to {} and {}", a.kind(), b.kind())),
    }
}

fn compare(op: BinaryOp, ord: std::cmp::Ordering) -> bool {
    use std::cmp::Ordering::*;
    match op {
        BinaryOp::Lt => ord == Less,
        BinaryOp::Le => ord != Greater,
        BinaryOp::Gt => ord == Greater,
        BinaryOp::Ge => ord != Less,
        _ => false,
    }
}

fn as_f64(v: &Value) -> f64 {
    match v {
        Value::Int(i) => *i as f64,
        Value::Float(x) => *x,
        _ => f64::NAN,
    }
}

fn loose_eq(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Int(x), Value::Float(y)) | (Value::Float(y), Value::Int(x)) => (*x as f64) == *y,
        (Value::Float(x), Value::Float(y)) => x == y,
        _ => a == b,
    }
}

fn call(name: &str, args: Vec<Value>, ctx: &ReactionCtx<'_>) -> R<Value> {
    let numeric = |v: &Value| matches!(v, Value::Int(_) | Value::Float(_));
    match (name, args.as_slice()) {
        ("abs", [Value::Int(i)]) => i.checked_abs().map(Value::Int).ok_or_else(|| "integer overflow in `abs`".into()),
        ("abs", [Value::Float(x)]) => Ok(Value::Float(x.abs())),
        ("min" | "max", [Value::Int(x), Value::Int(y)]) => Ok(Value::Int(if name == "min" { *x.min(y) } else { *x.max(y) })),
        ("min" | "max", [a, b]) if numeric(a) && numeric(b) => {
            let (x, y) = (as_f64(a), as_f64(b));
            Ok(Value::Float(if name == "min" { x.min(y) } else { x.max(y) }))
        }
        ("float", [a]) if numeric(a) => Ok(Value::Float(as_f64(a))),
        ("int", [Value::Int(i)]) => Ok(Value::Int(*i)),
        ("int", [Value::Float(x)]) if x.is_finite() && x.abs() < 9.2e18 => Ok(Value::Int(x.trunc() as i64)),
        ("int", [Value::Bool(b)]) => Ok(Value::Int(*b as i64)),
        ("time", []) => Ok(Value::Int(ctx.tag().time.as_nanos())),
        ("microstep", []) => Ok(Value::Int(ctx.tag().microstep as i64)),
        ("lag", []) => Ok(Value::Int(ctx.lag().as_nanos())),
        (name, args) => {
            let kinds: Vec<String> = args.iter().map(|a| a.kind().to_string()).collect();
            Err(format!("cannot call `{name}` with ({})", kinds.join(", ")))
        }
    }
}
