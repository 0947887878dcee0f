use std::fmt;

use super::diag::Span;

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    Ident(String),
    Int(i64),
    Float(f64),
    Str(String),
    /// Raw contents of a `{= ... =}` block and the position of its first byte.
    Code(String, Span),
    LBrace,
    RBrace,
    LParen,
    RParen,
    Comma,
    Semi,
    Colon,
    Dot,
    Arrow,
    Assign,
    EqEq,
    NotEq,
    Lt,
    Le,
    Gt,
    Ge,
    Plus,
    Minus,
    Star,
    Slash,
    Percent,
    Bang,
    AndAnd,
    OrOr,
    Eof,
}

impl TokenKind {
    pub fn describe(&self) -> String {
        match self {
            TokenKind::Ident(s) => format!("`{s}`"),
            TokenKind::Int(i) => format!("integer `{i}`"),
            TokenKind::Float(x) => format!("number `{x}`"),
            TokenKind::Str(_) => "string literal".into(),
            TokenKind::Code(..) => "code block".into(),
            TokenKind::Eof => "end of input".into(),
            other => format!("`{other}`"),
        }
    }
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TokenKind::Ident(s) => return f.write_str(s),
            TokenKind::Int(i) => return write!(f, "{i}"),
            TokenKind::Float(x) => return write!(f, "{x:?}"),
            TokenKind::Str(s) => return write!(f, "{s:?}"),
            TokenKind::Code(..) => "{= =}",
            TokenKind::LBrace => "{",
            TokenKind::RBrace => "}",
            TokenKind::LParen => "(",
            TokenKind::RParen => ")",
            TokenKind::Comma => ",",
            TokenKind::Semi => ";",
            TokenKind::Colon => ":",
            TokenKind::Dot => ".",
            TokenKind::Arrow => "->",
            TokenKind::Assign => "=",
            TokenKind::EqEq => "==",
            TokenKind::NotEq => "!=",
            TokenKind::Lt => "<",
            TokenKind::Le => "<=",
            TokenKind::Gt => ">",
            TokenKind::Ge => ">=",
            TokenKind::Plus => "+",
            TokenKind::Minus => "-",
            TokenKind::Star => "*",
            TokenKind::Slash => "/",
            TokenKind::Percent => "%",
            TokenKind::Bang => "!",
            TokenKind::AndAnd => "&&",
            TokenKind::OrOr => "||",
            TokenKind::Eof => "<eof>",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
pub struct Token {
    pub kind: TokenKind,
    pub span: Span,
}

#[derive(Debug, Clone)]
pub struct LexError {
    pub span: Span,
    pub message: String,
}

struct Cursor<'a> {
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
    src: &'a str,
    line: u32,
    col: u32,
}

impl<'a> Cursor<'a> {
    fn pos(&mut self) -> Span {
        let offset = self.chars.peek().map(|(i, _)| *i).unwrap_or(self.src.len());
        Span { line: self.line, col: self.col, offset }
    }

    fn peek(&mut self) -> Option<char> {
        self.chars.peek().map(|(_, c)| *c)
    }

    fn peek2(&self) -> Option<char> {
        let mut it = self.chars.clone();
        it.next();
        it.next().map(|(_, c)| c)
    }

    fn bump(&mut self) -> Option<char> {
        let (_, c) = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }
}

/// Tokenizes `src`; `origin` is the position of its first character, which
/// lets embedded code blocks report positions in the enclosing file.
pub fn tokenize(src: &str, origin: Span) -> Result<Vec<Token>, LexError> {
    let mut cur = Cursor { chars: src.char_indices().peekable(), src, line: origin.line, col: origin.col };
    let mut out = Vec::new();
    loop {
        skip_trivia(&mut cur)?;
        let start = cur.pos();
        let Some(c) = cur.peek() else {
            out.push(Token { kind: TokenKind::Eof, span: start });
            return Ok(out);
        };
        let kind = if c.is_ascii_alphabetic() || c == '_' {
            let mut s = String::new();
            while let Some(c) = cur.peek().filter(|c| c.is_ascii_alphanumeric() || *c == '_') {
                s.push(c);
                cur.bump();
            }
            TokenKind::Ident(s)
        } else if c.is_ascii_digit() {
            lex_number(&mut cur, start)?
        } else if c == '"' {
            lex_string(&mut cur, start)?
        } else if c == '{' && cur.peek2() == Some('=') {
            cur.bump();
            cur.bump();
            let body_start = cur.pos();
            let begin = body_start.offset;
            loop {
                match cur.peek() {
                    None => return Err(LexError { span: start, message: "unterminated code block".into() }),
                    Some('=') if cur.peek2() == Some('}') => {
                        let end = cur.pos().offset;
                        cur.bump();
                        cur.bump();
                        break TokenKind::Code(src[begin..end].to_string(), body_start);
                    }
                    Some(_) => {
                        cur.bump();
                    }
                }
            }
        } else {
            cur.bump();
            let next = cur.peek();
            let mut two = |k: TokenKind| {
                cur.bump();
                k
            };
            match (c, next) {
                ('-', Some('>')) => two(TokenKind::Arrow),
                ('=', Some('=')) => two(TokenKind::EqEq),
                ('!', Some('=')) => two(TokenKind::NotEq),
                ('<', Some('=')) => two(TokenKind::Le),
                ('>', Some('=')) => two(TokenKind::Ge),
                ('&', Some('&')) => two(TokenKind::AndAnd),
                ('|', Some('|')) => two(TokenKind::OrOr),
                ('{', _) => TokenKind::LBrace,
                ('}', _) => TokenKind::RBrace,
                ('(', _) => TokenKind::LParen,
                (')', _) => TokenKind::RParen,
                (',', _) => TokenKind::Comma,
                (';', _) => TokenKind::Semi,
                (':', _) => TokenKind::Colon,
                ('.', _) => TokenKind::Dot,
                ('=', _) => TokenKind::Assign,
                ('<', _) => TokenKind::Lt,
                ('>', _) => TokenKind::Gt,
                ('+', _) => TokenKind::Plus,
                ('-', _) => TokenKind::Minus,
                ('*', _) => TokenKind::Star,
                ('/', _) => TokenKind::Slash,
                ('%', _) => TokenKind::Percent,
                ('!', _) => TokenKind::Bang,
                _ => return Err(LexError { span: start, message: format!("unexpected character `{c}`") }),
            }
        };
        out.push(Token { kind, span: start });
    }
}

fn skip_trivia(cur: &mut Cursor<'_>) -> Result<(), LexError> {
    loop {
        match cur.peek() {
            Some(c) if c.is_whitespace() => {
                cur.bump();
            }
            Some('/') if cur.peek2() == Some('/') => {
                while cur.peek().is_some_and(|c| c != '\n') {
                    cur.bump();
                }
            }
            Some('#') => {
                while cur.peek().is_some_and(|c| c != '\n') {
                    cur.bump();
                }
            }
            Some('/') if cur.peek2() == Some('*') => {
                let start = cur.pos();
                cur.bump();
                cur.bump();
                loop {
                    match cur.bump() {
                        None => return Err(LexError { span: start, message: "unterminated comment".into() }),
                        Some('*') if cur.peek() == Some('/') => {
                            cur.bump();
                            break;
                        }
                        Some(_) => {}
                    }
                }
            }
            _ => return Ok(()),
        }
    }
}

fn lex_number(cur: &mut Cursor<'_>, start: Span) -> Result<TokenKind, LexError> {
    let mut s = String::new();
    let mut float = false;
    while let Some(c) = cur.peek().filter(char::is_ascii_digit) {
        s.push(c);
        cur.bump();
    }
    if cur.peek() == Some('.') && cur.peek2().is_some_and(|c| c.is_ascii_digit()) {
        float = true;
        s.push('.');
        cur.bump();
        while let Some(c) = cur.peek().filter(char::is_ascii_digit) {
            s.push(c);
            cur.bump();
        }
    }
    if matches!(cur.peek(), Some('e') | Some('E')) {
        let after = cur.peek2();
        let exponent_follows = after.is_some_and(|c| c.is_ascii_digit())
            || (matches!(after, Some('+') | Some('-')) && {
                let mut it = cur.chars.clone();
                it.next();
                it.next();
                it.next().is_some_and(|(_, c)| c.is_ascii_digit())
            });
        if exponent_follows {
            float = true;
            s.push('e');
            cur.bump();
            if let Some(sign) = cur.peek().filter(|c| *c == '+' || *c == '-') {
                s.push(sign);
                cur.bump();
            }
            while let Some(c) = cur.peek().filter(char::is_ascii_digit) {
                s.push(c);
                cur.bump();
            }
        }
    }
    if float {
        s.parse().map(TokenKind::Float).map_err(|_| LexError { span: start, message: format!("bad number `{s}`") })
    } else {
        s.parse().map(TokenKind::Int).map_err(|_| LexError { span: start, message: format!("integer `{s}` out of range") })
    }
}

fn lex_string(cur: &mut Cursor<'_>, start: Span) -> Result<TokenKind, LexError> {
    cur.bump();
    let mut s = String::new();
    loop {
        match cur.bump() {
            None | Some('\n') => return Err(LexError { span: start, message: "unterminated string".into() }),
            Some('"') => return Ok(TokenKind::Str(s)),
            Some('\\') => {
                let esc = cur.bump();
                s.push(match esc {
                    Some('n') => '\n',
                    Some('t') => '\t',
                    Some('"') => '"',
                    Some('\\') => '\\',
                    _ => return Err(LexError { span: start, message: "bad escape in string".into() }),
                });
            }
            Some(c) => s.push(c),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<TokenKind> {
        tokenize(src, Span::start()).unwrap().into_iter().map(|t| t.kind).collect()
    }

    #[test]
    fn punctuation_and_numbers() {
        assert_eq!(
            kinds("a.y -> b.x after 10 ms;"),
            vec![
                TokenKind::Ident("a".into()),
                TokenKind::Dot,
                TokenKind::Ident("y".into()),
                TokenKind::Arrow,
                TokenKind::Ident("b".into()),
                TokenKind::Dot,
                TokenKind::Ident("x".into()),
                TokenKind::Ident("after".into()),
                TokenKind::Int(10),
                TokenKind::Ident("ms".into()),
                TokenKind::Semi,
                TokenKind::Eof,
            ]
        );
        assert_eq!(kinds("1.5 2e3 1e-7")[..3], [TokenKind::Float(1.5), TokenKind::Float(2000.0), TokenKind::Float(1e-7)]);
    }

    #[test]
    fn code_block_keeps_position() {
        let toks = tokenize("reaction(t) {=\n  set(x, 1);\n=}", Span::start()).unwrap();
        let TokenKind::Code(body, at) = &toks[4].kind else { panic!("{:?}", toks[4]) };
        assert_eq!(body, "\n  set(x, 1);\n");
        assert_eq!((at.line, at.col), (1, 15));
    }

    #[test]
    fn comments_are_skipped() {
        assert_eq!(kinds("// a\n# b\n/* c */ x"), vec![TokenKind::Ident("x".into()), TokenKind::Eof]);
    }

    #[test]
    fn errors_carry_position() {
        let err = tokenize("a\n  @", Span::start()).unwrap_err();
        assert_eq!((err.span.line, err.span.col), (2, 3));
        assert!(tokenize("\"abc", Span::start()).is_err());
        assert!(tokenize("{= never closed", Span::start()).is_err());
    }
}
