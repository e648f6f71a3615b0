//! Recursive-descent parser for the `.fpdsl` grammar.
//!
//! ```text
//! file    :=  { decl }
//! decl    :=  "func" ident "(" params ")" "=" expr
//! params  :=  param { "," param }
//! param   :=  ident [ "in" interval ]
//! interval:=  ("[" | "(") bound "," bound ("]" | ")")
//! bound   :=  ["-"] (number | "inf")
//! expr    :=  term  { ("+" | "-") term }          (left-assoc)
//! term    :=  factor { ("*" | "/") factor }       (left-assoc)
//! factor  :=  "-" factor | power
//! power   :=  atom [ "^" factor ]                 (right-assoc, tighter than unary minus)
//! atom    :=  number | ident | ident "(" expr { "," expr } ")" | "(" expr ")"
//! ```
//!
//! `#` starts a comment that runs to end of line.

use super::{BinaryOp, Domain, Expr, FunctionDef, ParamDecl, UnaryOp};
use thiserror::Error;

/// Syntax or semantic error, with 1-based source position.
#[derive(Debug, Clone, Error)]
#[error("{line}:{col}: {msg}")]
pub struct ParseError {
    pub line: u32,
    pub col: u32,
    pub msg: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(String, f64),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Equals,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Number(s, _) => format!("number `{s}`"),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Caret => "`^`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Equals => "`=`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: u32,
    col: u32,
}

type Spanned = (Tok, u32, u32);

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Lexer<'a> {
        Lexer {
            src: src.as_bytes(),
            pos: 0,
            line: 1,
            col: 1,
        }
    }

    fn err(&self, msg: impl Into<String>) -> ParseError {
        ParseError {
            line: self.line,
            col: self.col,
            msg: msg.into(),
        }
    }

    fn bump(&mut self) -> u8 {
        let c = self.src[self.pos];
        self.pos += 1;
        if c == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        c
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn next_token(&mut self) -> Result<Spanned, ParseError> {
        loop {
            match self.peek() {
                Some(c) if c.is_ascii_whitespace() => {
                    self.bump();
                }
                Some(b'#') => {
                    while let Some(c) = self.peek() {
                        if c == b'\n' {
                            break;
                        }
                        self.bump();
                    }
                }
                _ => break,
            }
        }
        let (line, col) = (self.line, self.col);
        let Some(c) = self.peek() else {
            return Ok((Tok::Eof, line, col));
        };
        let tok = match c {
            b'+' => {
                self.bump();
                Tok::Plus
            }
            b'-' => {
                self.bump();
                Tok::Minus
            }
            b'*' => {
                self.bump();
                Tok::Star
            }
            b'/' => {
                self.bump();
                Tok::Slash
            }
            b'^' => {
                self.bump();
                Tok::Caret
            }
            b'(' => {
                self.bump();
                Tok::LParen
            }
            b')' => {
                self.bump();
                Tok::RParen
            }
            b'[' => {
                self.bump();
                Tok::LBracket
            }
            b']' => {
                self.bump();
                Tok::RBracket
            }
            b',' => {
                self.bump();
                Tok::Comma
            }
            b'=' => {
                self.bump();
                Tok::Equals
            }
            c if c.is_ascii_digit() || c == b'.' => self.lex_number()?,
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let start = self.pos;
                while let Some(c) = self.peek() {
                    if c.is_ascii_alphanumeric() || c == b'_' {
                        self.bump();
                    } else {
                        break;
                    }
                }
                let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                Tok::Ident(text.to_string())
            }
            other => {
                return Err(self.err(format!("unexpected character `{}`", other as char)));
            }
        };
        Ok((tok, line, col))
    }

    fn lex_number(&mut self) -> Result<Tok, ParseError> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.bump();
        }
        if self.peek() == Some(b'.') {
            self.bump();
            while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                self.bump();
            }
        }
        if matches!(self.peek(), Some(b'e' | b'E')) {
            let mark = (self.pos, self.line, self.col);
            self.bump();
            if matches!(self.peek(), Some(b'+' | b'-')) {
                self.bump();
            }
            if matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                    self.bump();
                }
            } else {
                // Not an exponent after all (e.g. `2e` followed by an ident
                // char); rewind to before the `e`.
                self.pos = mark.0;
                self.line = mark.1;
                self.col = mark.2;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        let value: f64 = text
            .parse()
            .map_err(|_| self.err(format!("malformed number `{text}`")))?;
        Ok(Tok::Number(text.to_string(), value))
    }
}

fn tokenize(src: &str) -> Result<Vec<Spanned>, ParseError> {
    let mut lx = Lexer::new(src);
    let mut out = Vec::new();
    loop {
        let t = lx.next_token()?;
        let done = t.0 == Tok::Eof;
        out.push(t);
        if done {
            return Ok(out);
        }
    }
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    params: Vec<ParamDecl>,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn peek2(&self) -> &Tok {
        // The token stream always ends with Eof, so looking one past a
        // non-Eof position stays in bounds.
        &self.toks[(self.pos + 1).min(self.toks.len() - 1)].0
    }

    fn span(&self) -> (u32, u32) {
        (self.toks[self.pos].1, self.toks[self.pos].2)
    }

    fn err_here(&self, msg: impl Into<String>) -> ParseError {
        let (line, col) = self.span();
        ParseError {
            line,
            col,
            msg: msg.into(),
        }
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: &Tok) -> Result<(), ParseError> {
        if self.peek() == want {
            self.bump();
            Ok(())
        } else {
            Err(self.err_here(format!(
                "expected {}, found {}",
                want.describe(),
                self.peek().describe()
            )))
        }
    }

    fn expect_ident(&mut self) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            other => Err(self.err_here(format!("expected identifier, found {}", other.describe()))),
        }
    }

    fn parse_decl(&mut self) -> Result<FunctionDef, ParseError> {
        let kw = self.expect_ident()?;
        if kw != "func" {
            return Err(self.err_here(format!("expected `func`, found `{kw}`")));
        }
        let name = self.expect_ident()?;
        self.expect(&Tok::LParen)?;
        self.params.clear();
        loop {
            let pname = self.expect_ident()?;
            if self.params.iter().any(|p| p.name == pname) {
                return Err(self.err_here(format!("duplicate parameter name `{pname}`")));
            }
            let domain = if matches!(self.peek(), Tok::Ident(s) if s == "in") {
                self.bump();
                self.parse_interval()?
            } else {
                Domain::unbounded()
            };
            self.params.push(ParamDecl {
                name: pname,
                domain,
            });
            match self.bump() {
                Tok::Comma => continue,
                Tok::RParen => break,
                other => {
                    return Err(self.err_here(format!(
                        "expected `,` or `)` in parameter list, found {}",
                        other.describe()
                    )))
                }
            }
        }
        self.expect(&Tok::Equals)?;
        let body = self.parse_expr()?;
        let params = std::mem::take(&mut self.params);
        FunctionDef::new(&name, params, body).map_err(|msg| self.err_here(msg))
    }

    fn parse_interval(&mut self) -> Result<Domain, ParseError> {
        let lo_inclusive = match self.bump() {
            Tok::LBracket => true,
            Tok::LParen => false,
            other => {
                return Err(self.err_here(format!(
                    "expected `[` or `(` to open an interval, found {}",
                    other.describe()
                )))
            }
        };
        let lo = self.parse_bound()?;
        self.expect(&Tok::Comma)?;
        let hi = self.parse_bound()?;
        let hi_inclusive = match self.bump() {
            Tok::RBracket => true,
            Tok::RParen => false,
            other => {
                return Err(self.err_here(format!(
                    "expected `]` or `)` to close an interval, found {}",
                    other.describe()
                )))
            }
        };
        if !(lo <= hi) {
            return Err(self.err_here(format!("malformed interval: lower bound {lo} > upper bound {hi}")));
        }
        Ok(Domain {
            lo,
            hi,
            // An infinite endpoint can never be attained.
            lo_inclusive: lo_inclusive && lo.is_finite(),
            hi_inclusive: hi_inclusive && hi.is_finite(),
        })
    }

    fn parse_bound(&mut self) -> Result<f64, ParseError> {
        let negate = if *self.peek() == Tok::Minus {
            self.bump();
            true
        } else {
            false
        };
        let v = match self.bump() {
            Tok::Number(_, v) => v,
            Tok::Ident(s) if s == "inf" => f64::INFINITY,
            other => {
                return Err(self.err_here(format!(
                    "expected a number or `inf` as interval bound, found {}",
                    other.describe()
                )))
            }
        };
        Ok(if negate { -v } else { v })
    }

    fn parse_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.parse_term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinaryOp::Add,
                Tok::Minus => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.parse_term()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn parse_term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.parse_factor()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinaryOp::Mul,
                Tok::Slash => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.parse_factor()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn parse_factor(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Minus {
            self.bump();
            // A minus directly on a numeric literal folds into the literal,
            // so printed negative constants re-parse to the same node. The
            // fold must not steal the base of a power: `-2^2` is -(2^2).
            if let Tok::Number(text, value) = self.peek().clone() {
                if *self.peek2() != Tok::Caret {
                    self.bump();
                    return Ok(Expr::Const {
                        text: Some(format!("-{text}").into_boxed_str()),
                        value: -value,
                    });
                }
            }
            let inner = self.parse_factor()?;
            return Ok(Expr::neg(inner));
        }
        self.parse_power()
    }

    fn parse_power(&mut self) -> Result<Expr, ParseError> {
        let base = self.parse_atom()?;
        if *self.peek() == Tok::Caret {
            self.bump();
            // Right-associative; the exponent may carry a unary minus.
            let exponent = self.parse_factor()?;
            return Ok(Expr::pow(base, exponent));
        }
        Ok(base)
    }

    fn parse_atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek().clone() {
            Tok::Number(text, value) => {
                self.bump();
                Ok(Expr::Const {
                    text: Some(text.into_boxed_str()),
                    value,
                })
            }
            Tok::LParen => {
                self.bump();
                let inner = self.parse_expr()?;
                self.expect(&Tok::RParen)?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                let at = self.span();
                self.bump();
                if *self.peek() == Tok::LParen {
                    self.bump();
                    let mut args = vec![self.parse_expr()?];
                    while *self.peek() == Tok::Comma {
                        self.bump();
                        args.push(self.parse_expr()?);
                    }
                    self.expect(&Tok::RParen)?;
                    let Some(op) = UnaryOp::from_name(&name) else {
                        return Err(ParseError {
                            line: at.0,
                            col: at.1,
                            msg: format!("unknown function `{name}`"),
                        });
                    };
                    if args.len() != 1 {
                        return Err(ParseError {
                            line: at.0,
                            col: at.1,
                            msg: format!(
                                "`{name}` takes 1 argument, found {}",
                                args.len()
                            ),
                        });
                    }
                    Ok(Expr::unary(op, args.pop().unwrap()))
                } else {
                    match self.params.iter().position(|p| p.name == name) {
                        Some(i) => Ok(Expr::Param(i)),
                        None => Err(ParseError {
                            line: at.0,
                            col: at.1,
                            msg: format!("unknown identifier `{name}`"),
                        }),
                    }
                }
            }
            other => Err(self.err_here(format!("expected an expression, found {}", other.describe()))),
        }
    }
}

/// Parse a single `func` declaration.
pub fn parse(text: &str) -> Result<FunctionDef, ParseError> {
    let toks = tokenize(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        params: Vec::new(),
    };
    let f = p.parse_decl()?;
    if *p.peek() != Tok::Eof {
        return Err(p.err_here(format!(
            "unexpected {} after function body",
            p.peek().describe()
        )));
    }
    Ok(f)
}

/// Parse a whole `.fpdsl` file: one or more declarations.
pub fn parse_file(text: &str) -> Result<Vec<FunctionDef>, ParseError> {
    let toks = tokenize(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        params: Vec::new(),
    };
    let mut out = Vec::new();
    while *p.peek() != Tok::Eof {
        out.push(p.parse_decl()?);
    }
    if out.is_empty() {
        return Err(ParseError {
            line: 1,
            col: 1,
            msg: "no `func` declarations found".to_string(),
        });
    }
    Ok(out)
}
