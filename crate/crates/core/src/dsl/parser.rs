//! Recursive-descent parser for reactor programs and body scripts.

use std::collections::BTreeSet;

use super::ast::*;
use super::diag::{Diagnostic, Diagnostics, Span};
use super::lexer::{tokenize, Token, TokenKind};
use super::script::{BinaryOp, Block, Expr, Stmt, UnaryOp};
use crate::time::{TimeUnit, TimeValue};
use crate::value::Value;

/// Parses a whole source file.
pub fn parse(source: &str) -> Result<Program, Diagnostics> {
    let tokens = tokenize(source, Span::start()).map_err(|e| Diagnostics::single(Diagnostic::error(e.span, e.message)))?;
    let mut p = Parser::new(tokens);
    p.program().map_err(Diagnostics::single)
}

/// Parses a standalone body script (the text between `{=` and `=}`).
pub fn parse_script(source: &str, origin: Span) -> Result<Block, Diagnostic> {
    let tokens = tokenize(source, origin).map_err(|e| Diagnostic::error(e.span, e.message))?;
    let mut p = Parser::new(tokens);
    let block = p.stmts_until_eof()?;
    Ok(block)
}

type PResult<T> = Result<T, Diagnostic>;

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    /// Alternatives tried at the current position, reported on failure.
    expected: BTreeSet<String>,
}

impl Parser {
    fn new(tokens: Vec<Token>) -> Self {
        Parser { tokens, pos: 0, expected: BTreeSet::new() }
    }

    fn peek(&self) -> &TokenKind {
        &self.tokens[self.pos].kind
    }

    fn peek_at(&self, n: usize) -> &TokenKind {
        let i = (self.pos + n).min(self.tokens.len() - 1);
        &self.tokens[i].kind
    }

    fn span(&self) -> Span {
        self.tokens[self.pos].span
    }

    fn advance(&mut self) -> Token {
        let tok = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        self.expected.clear();
        tok
    }

    fn check(&mut self, kind: &TokenKind) -> bool {
        if self.peek() == kind {
            true
        } else {
            self.expected.insert(format!("`{kind}`"));
            false
        }
    }

    fn eat(&mut self, kind: &TokenKind) -> bool {
        if self.check(kind) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn check_kw(&mut self, kw: &str) -> bool {
        if matches!(self.peek(), TokenKind::Ident(s) if s == kw) {
            true
        } else {
            self.expected.insert(format!("`{kw}`"));
            false
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.check_kw(kw) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn error(&self) -> Diagnostic {
        let found = self.peek().describe();
        let expected: Vec<_> = self.expected.iter().cloned().collect();
        let message = match expected.len() {
            0 => format!("unexpected {found}"),
            1 => format!("expected {}, found {found}", expected[0]),
            _ => format!("expected one of {}, found {found}", expected.join(", ")),
        };
        Diagnostic::error(self.span(), message)
    }

    fn expect(&mut self, kind: &TokenKind) -> PResult<Span> {
        let span = self.span();
        if self.eat(kind) {
            Ok(span)
        } else {
            Err(self.error())
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.error())
        }
    }

    fn ident(&mut self) -> PResult<Ident> {
        if let TokenKind::Ident(name) = self.peek() {
            let name = name.clone();
            let span = self.advance().span;
            Ok(Ident { name, span })
        } else {
            self.expected.insert("identifier".into());
            Err(self.error())
        }
    }

    fn skip_semis(&mut self) {
        while self.eat(&TokenKind::Semi) {}
    }

    // ---- program structure -------------------------------------------------

    fn program(&mut self) -> PResult<Program> {
        let mut program = Program::default();
        loop {
            self.skip_semis();
            if self.check(&TokenKind::Eof) {
                return Ok(program);
            }
            if self.eat_kw("target") {
                program.target = Some(self.ident()?);
            } else if self.check_kw("reactor") || self.check_kw("main") || self.check_kw("federated") {
                program.reactors.push(self.reactor_def()?);
            } else if self.check_kw("behavior") {
                program.behaviors.push(self.behavior_def()?);
            } else {
                return Err(self.error());
            }
        }
    }

    fn reactor_def(&mut self) -> PResult<ReactorDef> {
        let span = self.span();
        let main = if self.eat_kw("main") {
            MainKind::Main
        } else if self.eat_kw("federated") {
            MainKind::Federated
        } else {
            MainKind::None
        };
        self.expect_kw("reactor")?;
        let (name, named) = match (main, self.peek()) {
            (MainKind::None, _) => (self.ident()?, true),
            (_, TokenKind::Ident(_)) => (self.ident()?, true),
            _ => (Ident { name: "main".into(), span }, false),
        };
        let params = if self.check(&TokenKind::LParen) { self.param_list()? } else { Vec::new() };
        self.expect(&TokenKind::LBrace)?;
        let mut members = Vec::new();
        loop {
            self.skip_semis();
            if self.eat(&TokenKind::RBrace) {
                break;
            }
            members.push(self.member()?);
        }
        Ok(ReactorDef { name, named, main, params, members, span })
    }

    fn param_list(&mut self) -> PResult<Vec<ParamDecl>> {
        self.expect(&TokenKind::LParen)?;
        let mut params = Vec::new();
        if !self.eat(&TokenKind::RParen) {
            loop {
                let name = self.ident()?;
                self.expect(&TokenKind::Colon)?;
                let ty = self.type_name()?;
                self.expect(&TokenKind::Assign)?;
                let default = self.literal()?;
                params.push(ParamDecl { name, ty, default });
                if self.eat(&TokenKind::RParen) {
                    break;
                }
                self.expect(&TokenKind::Comma)?;
            }
        }
        Ok(params)
    }

    fn type_name(&mut self) -> PResult<TypeName> {
        if let TokenKind::Ident(s) = self.peek() {
            if let Some(t) = TypeName::from_keyword(s) {
                self.advance();
                return Ok(t);
            }
        }
        self.expected.insert("type".into());
        Err(self.error())
    }

    fn opt_type(&mut self) -> PResult<TypeName> {
        if self.eat(&TokenKind::Colon) {
            self.type_name()
        } else {
            Ok(TypeName::Void)
        }
    }

    fn member(&mut self) -> PResult<Member> {
        if self.eat_kw("input") {
            let name = self.ident()?;
            let ty = self.opt_type()?;
            return Ok(Member::Input(PortDecl { name, ty }));
        }
        if self.eat_kw("output") {
            let name = self.ident()?;
            let ty = self.opt_type()?;
            return Ok(Member::Output(PortDecl { name, ty }));
        }
        if self.eat_kw("timer") {
            let name = self.ident()?;
            let (mut offset, mut period) = (TimeExpr::Literal(TimeValue::ZERO), TimeExpr::Literal(TimeValue::ZERO));
            if self.eat(&TokenKind::LParen) {
                offset = self.time_expr()?;
                if self.eat(&TokenKind::Comma) {
                    period = self.time_expr()?;
                }
                self.expect(&TokenKind::RParen)?;
            }
            return Ok(Member::Timer(TimerDecl { name, offset, period }));
        }
        if self.check_kw("logical") || self.check_kw("physical") || self.check_kw("action") {
            let origin = if self.eat_kw("physical") {
                ActionOrigin::Physical
            } else {
                self.eat_kw("logical");
                ActionOrigin::Logical
            };
            self.expect_kw("action")?;
            let name = self.ident()?;
            let min_delay = if self.eat(&TokenKind::LParen) {
                let t = self.time_expr()?;
                self.expect(&TokenKind::RParen)?;
                Some(t)
            } else {
                None
            };
            let ty = self.opt_type()?;
            return Ok(Member::Action(ActionDecl { name, origin, min_delay, ty }));
        }
        if self.eat_kw("state") {
            let name = self.ident()?;
            self.expect(&TokenKind::Colon)?;
            let ty = self.type_name()?;
            self.expect(&TokenKind::Assign)?;
            let init = self.literal()?;
            return Ok(Member::State(StateDecl { name, ty, init }));
        }
        if self.check_kw("reaction") {
            return Ok(Member::Reaction(self.reaction()?));
        }
        // instance or connection, both start with an identifier
        if matches!(self.peek(), TokenKind::Ident(_)) && *self.peek_at(1) == TokenKind::Assign {
            let name = self.ident()?;
            self.expect(&TokenKind::Assign)?;
            self.expect_kw("new")?;
            let class = self.ident()?;
            self.expect(&TokenKind::LParen)?;
            let mut args = Vec::new();
            if !self.eat(&TokenKind::RParen) {
                loop {
                    let arg = self.ident()?;
                    self.expect(&TokenKind::Assign)?;
                    let lit = self.literal()?;
                    args.push((arg, lit));
                    if self.eat(&TokenKind::RParen) {
                        break;
                    }
                    self.expect(&TokenKind::Comma)?;
                }
            }
            return Ok(Member::Instance(InstanceDecl { name, class, args }));
        }
        if matches!(self.peek(), TokenKind::Ident(_)) {
            let from = self.port_ref()?;
            self.expect(&TokenKind::Arrow)?;
            let to = self.port_ref()?;
            let delay = if self.eat_kw("after") { Some(self.time_expr()?) } else { None };
            let stp = if self.eat_kw("stp") {
                self.expect(&TokenKind::LParen)?;
                let t = self.time_expr()?;
                self.expect(&TokenKind::RParen)?;
                Some(t)
            } else {
                None
            };
            return Ok(Member::Connection(ConnectionDecl { from, to, delay, stp }));
        }
        for kw in ["input", "output", "timer", "action", "state", "reaction"] {
            self.expected.insert(format!("`{kw}`"));
        }
        self.expected.insert("instance or connection".into());
        Err(self.error())
    }

    fn port_ref(&mut self) -> PResult<PortRef> {
        let first = self.ident()?;
        if self.eat(&TokenKind::Dot) {
            let port = self.ident()?;
            Ok(PortRef { container: Some(first), port })
        } else {
            Ok(PortRef { container: None, port: first })
        }
    }

    fn reaction(&mut self) -> PResult<ReactionDecl> {
        let span = self.span();
        self.expect_kw("reaction")?;
        self.expect(&TokenKind::LParen)?;
        let mut triggers = Vec::new();
        if !self.eat(&TokenKind::RParen) {
            loop {
                triggers.push(if self.eat_kw("startup") {
                    TriggerRef::Startup
                } else if self.eat_kw("shutdown") {
                    TriggerRef::Shutdown
                } else {
                    TriggerRef::Port(self.port_ref()?)
                });
                if self.eat(&TokenKind::RParen) {
                    break;
                }
                self.expect(&TokenKind::Comma)?;
            }
        }
        let mut sources = Vec::new();
        if matches!(self.peek(), TokenKind::Ident(s) if s != "extern") {
            loop {
                sources.push(self.port_ref()?);
                if !self.eat(&TokenKind::Comma) {
                    break;
                }
            }
        }
        let mut effects = Vec::new();
        if self.eat(&TokenKind::Arrow) {
            loop {
                effects.push(self.port_ref()?);
                if !self.eat(&TokenKind::Comma) {
                    break;
                }
            }
        }
        let body = self.body()?;
        let deadline = if self.eat_kw("deadline") {
            self.expect(&TokenKind::LParen)?;
            let bound = self.time_expr()?;
            self.expect(&TokenKind::RParen)?;
            Some((bound, self.body()?))
        } else {
            None
        };
        let stp = if self.eat_kw("stp") {
            let bound = if self.eat(&TokenKind::LParen) {
                let t = self.time_expr()?;
                self.expect(&TokenKind::RParen)?;
                Some(t)
            } else {
                None
            };
            Some((bound, self.body()?))
        } else {
            None
        };
        Ok(ReactionDecl { triggers, sources, effects, body, deadline, stp, span })
    }

    fn body(&mut self) -> PResult<BodyDecl> {
        if self.eat_kw("extern") {
            if let TokenKind::Str(s) = self.peek() {
                let s = s.clone();
                self.advance();
                return Ok(BodyDecl::Extern(s));
            }
            self.expected.insert("string literal".into());
            return Err(self.error());
        }
        if let TokenKind::Code(text, origin) = self.peek() {
            let (text, origin) = (text.clone(), *origin);
            self.advance();
            return Ok(BodyDecl::Script(parse_script(&text, origin)?));
        }
        self.expected.insert("`{=`".into());
        Err(self.error())
    }

    fn time_expr(&mut self) -> PResult<TimeExpr> {
        if let TokenKind::Ident(_) = self.peek() {
            return Ok(TimeExpr::Param(self.ident()?));
        }
        Ok(TimeExpr::Literal(self.time_literal()?))
    }

    fn time_literal(&mut self) -> PResult<TimeValue> {
        let span = self.span();
        let TokenKind::Int(count) = *self.peek() else {
            self.expected.insert("time literal".into());
            return Err(self.error());
        };
        self.advance();
        if let Some(unit) = self.time_unit() {
            return unit.scale(count).map_err(|e| Diagnostic::error(span, e.to_string()));
        }
        if count == 0 {
            return Ok(TimeValue::ZERO);
        }
        self.expected.insert("time unit".into());
        Err(self.error())
    }

    fn time_unit(&mut self) -> Option<TimeUnit> {
        if let TokenKind::Ident(s) = self.peek() {
            if let Ok(unit) = s.parse::<TimeUnit>() {
                self.advance();
                return Some(unit);
            }
        }
        None
    }

    fn literal(&mut self) -> PResult<Literal> {
        let negative = self.eat(&TokenKind::Minus);
        match self.peek().clone() {
            TokenKind::Int(i) => {
                self.advance();
                if let Some(unit) = self.time_unit() {
                    if negative {
                        return Err(Diagnostic::error(self.span(), "negative time literal"));
                    }
                    return unit.scale(i).map(Literal::Time).map_err(|e| Diagnostic::error(self.span(), e.to_string()));
                }
                Ok(Literal::Value(Value::Int(if negative { -i } else { i })))
            }
            TokenKind::Float(x) => {
                self.advance();
                Ok(Literal::Value(Value::Float(if negative { -x } else { x })))
            }
            TokenKind::Str(s) if !negative => {
                self.advance();
                Ok(Literal::Value(Value::Text(s)))
            }
            TokenKind::Ident(s) if !negative && (s == "true" || s == "false") => {
                self.advance();
                Ok(Literal::Value(Value::Bool(s == "true")))
            }
            _ => {
                self.expected.insert("literal".into());
                Err(self.error())
            }
        }
    }

    // ---- behavior trees ----------------------------------------------------

    fn behavior_def(&mut self) -> PResult<BehaviorDef> {
        let span = self.span();
        self.expect_kw("behavior")?;
        let name = self.ident()?;
        self.expect(&TokenKind::LBrace)?;
        self.skip_semis();
        let root = self.bt_node()?;
        let mut wires = Vec::new();
        loop {
            self.skip_semis();
            if self.eat(&TokenKind::RBrace) {
                break;
            }
            self.expect_kw("wire")?;
            let from = self.port_ref()?;
            self.expect(&TokenKind::Arrow)?;
            let to = self.port_ref()?;
            wires.push(WireDecl { from, to });
        }
        Ok(BehaviorDef { name, root, wires, span })
    }

    fn bt_node(&mut self) -> PResult<BtNodeDecl> {
        let span = self.span();
        let composite = if self.eat_kw("sequence") {
            Some(CompositeKind::Sequence)
        } else if self.eat_kw("fallback") {
            Some(CompositeKind::Fallback)
        } else {
            None
        };
        if let Some(kind) = composite {
            let name = if matches!(self.peek(), TokenKind::Ident(_)) { Some(self.ident()?) } else { None };
            self.expect(&TokenKind::LBrace)?;
            let mut children = Vec::new();
            loop {
                self.skip_semis();
                if self.eat(&TokenKind::RBrace) {
                    break;
                }
                children.push(self.bt_node()?);
            }
            return Ok(BtNodeDecl::Composite { kind, name, children, span });
        }
        let kind = if self.eat_kw("action") {
            LeafKind::Action
        } else if self.eat_kw("condition") {
            LeafKind::Condition
        } else {
            self.expected.insert("`sequence`".into());
            self.expected.insert("`fallback`".into());
            return Err(self.error());
        };
        let name = self.ident()?;
        self.expect(&TokenKind::LParen)?;
        let mut ports = Vec::new();
        if !self.eat(&TokenKind::RParen) {
            loop {
                let direction = if self.eat_kw("in") {
                    PortDirection::In
                } else if self.eat_kw("out") {
                    PortDirection::Out
                } else {
                    return Err(self.error());
                };
                let pname = self.ident()?;
                self.expect(&TokenKind::Colon)?;
                let ty = self.type_name()?;
                ports.push(BtPortDecl { direction, name: pname, ty });
                if self.eat(&TokenKind::RParen) {
                    break;
                }
                self.expect(&TokenKind::Comma)?;
            }
        }
        self.expect(&TokenKind::Assign)?;
        let body = self.body()?;
        Ok(BtNodeDecl::Leaf { kind, name, ports, body })
    }

    // ---- scripts -----------------------------------------------------------

    fn stmts_until_eof(&mut self) -> PResult<Block> {
        let mut stmts = Vec::new();
        loop {
            self.skip_semis();
            if self.check(&TokenKind::Eof) {
                return Ok(Block(stmts));
            }
            stmts.push(self.stmt()?);
        }
    }

    fn braced_block(&mut self) -> PResult<Block> {
        self.expect(&TokenKind::LBrace)?;
        let mut stmts = Vec::new();
        loop {
            self.skip_semis();
            if self.eat(&TokenKind::RBrace) {
                return Ok(Block(stmts));
            }
            stmts.push(self.stmt()?);
        }
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        if self.eat_kw("if") {
            return self.if_rest();
        }
        let stmt = if self.eat_kw("let") {
            let name = self.ident()?;
            self.expect(&TokenKind::Assign)?;
            Stmt::Let(name, self.expr()?)
        } else if self.check_kw("set") && *self.peek_at(1) == TokenKind::LParen {
            self.advance();
            self.advance();
            let port = self.port_ref()?;
            let value = if self.eat(&TokenKind::Comma) { Some(self.expr()?) } else { None };
            self.expect(&TokenKind::RParen)?;
            Stmt::Set(port, value)
        } else if self.check_kw("schedule") && *self.peek_at(1) == TokenKind::LParen {
            self.advance();
            self.advance();
            let action = self.ident()?;
            let mut delay = None;
            let mut value = None;
            if self.eat(&TokenKind::Comma) {
                delay = Some(self.expr()?);
                if self.eat(&TokenKind::Comma) {
                    value = Some(self.expr()?);
                }
            }
            self.expect(&TokenKind::RParen)?;
            Stmt::Schedule { action, delay, value }
        } else if self.check_kw("log") && *self.peek_at(1) == TokenKind::LParen {
            self.advance();
            self.advance();
            let e = self.expr()?;
            self.expect(&TokenKind::RParen)?;
            Stmt::Log(e)
        } else if self.check_kw("request_stop") && *self.peek_at(1) == TokenKind::LParen {
            self.advance();
            self.advance();
            self.expect(&TokenKind::RParen)?;
            Stmt::RequestStop
        } else if matches!(self.peek(), TokenKind::Ident(_)) && *self.peek_at(1) == TokenKind::Assign {
            let name = self.ident()?;
            self.expect(&TokenKind::Assign)?;
            Stmt::Assign(name, self.expr()?)
        } else {
            for kw in ["let", "set", "schedule", "log", "request_stop", "if"] {
                self.expected.insert(format!("`{kw}`"));
            }
            self.expected.insert("assignment".into());
            return Err(self.error());
        };
        if !self.check(&TokenKind::RBrace) && !self.check(&TokenKind::Eof) {
            self.expect(&TokenKind::Semi)?;
        }
        Ok(stmt)
    }

    fn if_rest(&mut self) -> PResult<Stmt> {
        let cond = self.expr()?;
        let then = self.braced_block()?;
        let otherwise = if self.eat_kw("else") {
            if self.eat_kw("if") {
                Some(Block(vec![self.if_rest()?]))
            } else {
                Some(self.braced_block()?)
            }
        } else {
            None
        };
        Ok(Stmt::If(cond, then, otherwise))
    }

    fn expr(&mut self) -> PResult<Expr> {
        self.binary_level(0)
    }

    fn binary_level(&mut self, level: usize) -> PResult<Expr> {
        const LEVELS: &[&[(TokenKind, BinaryOp)]] = &[
            &[(TokenKind::OrOr, BinaryOp::Or)],
            &[(TokenKind::AndAnd, BinaryOp::And)],
            &[
                (TokenKind::EqEq, BinaryOp::Eq),
                (TokenKind::NotEq, BinaryOp::Ne),
                (TokenKind::Le, BinaryOp::Le),
                (TokenKind::Ge, BinaryOp::Ge),
                (TokenKind::Lt, BinaryOp::Lt),
                (TokenKind::Gt, BinaryOp::Gt),
            ],
            &[(TokenKind::Plus, BinaryOp::Add), (TokenKind::Minus, BinaryOp::Sub)],
            &[(TokenKind::Star, BinaryOp::Mul), (TokenKind::Slash, BinaryOp::Div), (TokenKind::Percent, BinaryOp::Rem)],
        ];
        if level == LEVELS.len() {
            return self.unary();
        }
        let mut lhs = self.binary_level(level + 1)?;
        // comparisons do not chain
        let chains = level != 2;
        loop {
            let op = LEVELS[level].iter().find(|(tok, _)| self.check(tok)).map(|(_, op)| *op);
            let Some(op) = op else { return Ok(lhs) };
            self.advance();
            let rhs = self.binary_level(level + 1)?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
            if !chains {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> PResult<Expr> {
        if self.eat(&TokenKind::Minus) {
            let inner = self.unary()?;
            return Ok(match inner {
                Expr::Lit(Value::Int(i)) => Expr::Lit(Value::Int(i.wrapping_neg())),
                Expr::Lit(Value::Float(x)) => Expr::Lit(Value::Float(-x)),
                other => Expr::Unary(UnaryOp::Neg, Box::new(other)),
            });
        }
        if self.eat(&TokenKind::Bang) {
            return Ok(Expr::Unary(UnaryOp::Not, Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> PResult<Expr> {
        match self.peek().clone() {
            TokenKind::Int(i) => {
                let span = self.span();
                self.advance();
                if let Some(unit) = self.time_unit() {
                    let t = unit.scale(i).map_err(|e| Diagnostic::error(span, e.to_string()))?;
                    return Ok(Expr::Lit(Value::Int(t.as_nanos())));
                }
                Ok(Expr::Lit(Value::Int(i)))
            }
            TokenKind::Float(x) => {
                self.advance();
                Ok(Expr::Lit(Value::Float(x)))
            }
            TokenKind::Str(s) => {
                self.advance();
                Ok(Expr::Lit(Value::Text(s)))
            }
            TokenKind::LParen => {
                self.advance();
                let e = self.expr()?;
                self.expect(&TokenKind::RParen)?;
                Ok(e)
            }
            TokenKind::Ident(s) if s == "true" || s == "false" => {
                self.advance();
                Ok(Expr::Lit(Value::Bool(s == "true")))
            }
            TokenKind::Ident(_) => {
                let name = self.ident()?;
                if self.eat(&TokenKind::LParen) {
                    let mut args = Vec::new();
                    if !self.eat(&TokenKind::RParen) {
                        loop {
                            args.push(self.expr()?);
                            if self.eat(&TokenKind::RParen) {
                                break;
                            }
                            self.expect(&TokenKind::Comma)?;
                        }
                    }
                    return Ok(Expr::Call(name, args));
                }
                if self.eat(&TokenKind::Dot) {
                    let port = self.ident()?;
                    return Ok(Expr::Name(PortRef { container: Some(name), port }));
                }
                Ok(Expr::Name(PortRef { container: None, port: name }))
            }
            _ => {
                self.expected.insert("expression".into());
                Err(self.error())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_reactor(src: &str) -> ReactorDef {
        let p = parse(src).unwrap();
        p.reactors.into_iter().next().unwrap()
    }

    #[test]
    fn timer_declaration() {
        let r = single_reactor("reactor Camera { timer t(0, 30 ms) }");
        let Member::Timer(t) = &r.members[0] else { panic!() };
        assert_eq!(t.offset, TimeExpr::Literal(TimeValue::ZERO));
        assert_eq!(t.period, TimeExpr::Literal(TimeValue::from_millis(30)));
    }

    #[test]
    fn delayed_connection() {
        let r = single_reactor("main reactor { a.y -> b.x after 10 ms }");
        let Member::Connection(c) = &r.members[0] else { panic!() };
        assert_eq!(c.from.dotted(), "a.y");
        assert_eq!(c.to.dotted(), "b.x");
        assert_eq!(c.delay, Some(TimeExpr::Literal(TimeValue::from_millis(10))));
    }

    #[test]
    fn empty_reactor() {
        let r = single_reactor("reactor R {}");
        assert_eq!(r.name.name, "R");
        assert!(r.members.is_empty());
    }

    #[test]
    fn reaction_with_deadline_and_stp() {
        let r = single_reactor(
            "reactor Arm { input human: void
               reaction(human) {= log(\"ok\"); =} deadline(10 ms) {= =} stp(10 ms) extern \"late\" }",
        );
        let Member::Reaction(re) = &r.members[1] else { panic!() };
        assert_eq!(re.triggers, vec![TriggerRef::Port(PortRef::local("human"))]);
        assert_eq!(re.deadline.as_ref().unwrap().0, TimeExpr::Literal(TimeValue::from_millis(10)));
        let (bound, body) = re.stp.as_ref().unwrap();
        assert_eq!(bound, &Some(TimeExpr::Literal(TimeValue::from_millis(10))));
        assert_eq!(body, &BodyDecl::Extern("late".into()));
    }

    #[test]
    fn script_statements() {
        let b = parse_script(
            "let x = 1 + 2 * 3; if x > 5 { set(out, x); } else if x == 0 { log(\"zero\") } else { request_stop(); }
             schedule(a, 5 ms, -x); count = count + 1;",
            Span::start(),
        )
        .unwrap();
        assert_eq!(b.0.len(), 4);
        let Stmt::Let(_, Expr::Binary(BinaryOp::Add, _, rhs)) = &b.0[0] else { panic!("{:?}", b.0[0]) };
        assert!(matches!(**rhs, Expr::Binary(BinaryOp::Mul, _, _)));
        let Stmt::Schedule { delay: Some(Expr::Lit(Value::Int(ns))), .. } = &b.0[2] else { panic!() };
        assert_eq!(*ns, 5_000_000);
    }

    #[test]
    fn syntax_error_lists_expectations() {
        let err = parse("reactor R {\n  timer t(0, 30 ms\n}").unwrap_err();
        let d = &err.0[0];
        assert_eq!((d.span.line, d.span.col), (3, 1));
        assert!(d.message.contains("`)`"), "{}", d.message);
        assert!(d.message.contains("found `}`"), "{}", d.message);
    }

    #[test]
    fn script_errors_point_into_file() {
        let err = parse("reactor R {\n  reaction(startup) {=\n    set(;\n  =}\n}").unwrap_err();
        let d = &err.0[0];
        assert_eq!((d.span.line, d.span.col), (3, 9));
    }
}
