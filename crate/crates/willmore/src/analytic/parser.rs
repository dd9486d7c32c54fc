//! Recursive-descent parser for the expression language.
//!
//! ```text
//! expr    = term { ("+" | "-") term } ;
//! term    = unary { ("*" | "/") unary } ;
//! unary   = ("-" | "+") unary | power ;
//! power   = primary [ "^" unary ] ;
//! primary = number | ident | ident "(" expr ")" | "(" expr ")" ;
//! ```

use num_complex::Complex64;

use super::{Expr, Func, ParseError, ParseErrorKind};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    End,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn err(&self, offset: usize, msg: impl Into<String>) -> ParseError {
        ParseError { offset, kind: ParseErrorKind::Syntax(msg.into()) }
    }

    fn tokens(mut self) -> Result<Vec<(usize, Tok)>, ParseError> {
        let mut out = Vec::new();
        let bytes = self.src.as_bytes();
        loop {
            while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            let start = self.pos;
            if self.pos >= bytes.len() {
                out.push((start, Tok::End));
                return Ok(out);
            }
            let c = self.src[self.pos..].chars().next().unwrap();
            match c {
                '0'..='9' | '.' => {
                    let mut end = self.pos;
                    while end < bytes.len() && (bytes[end].is_ascii_digit() || bytes[end] == b'.') {
                        end += 1;
                    }
                    // Scientific exponent only when a digit follows the sign.
                    if end < bytes.len() && (bytes[end] == b'e' || bytes[end] == b'E') {
                        let mut k = end + 1;
                        if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                            k += 1;
                        }
                        if k < bytes.len() && bytes[k].is_ascii_digit() {
                            while k < bytes.len() && bytes[k].is_ascii_digit() {
                                k += 1;
                            }
                            end = k;
                        }
                    }
                    let text = &self.src[self.pos..end];
                    let v: f64 = text.parse().map_err(|_| self.err(start, format!("malformed number '{text}'")))?;
                    out.push((start, Tok::Num(v)));
                    self.pos = end;
                }
                '+' | '-' | '*' | '/' | '^' => {
                    out.push((start, Tok::Op(c)));
                    self.pos += 1;
                }
                '(' => {
                    out.push((start, Tok::LParen));
                    self.pos += 1;
                }
                ')' => {
                    out.push((start, Tok::RParen));
                    self.pos += 1;
                }
                'π' => {
                    out.push((start, Tok::Ident("pi".into())));
                    self.pos += c.len_utf8();
                }
                c if c.is_ascii_alphabetic() || c == '_' => {
                    let mut end = self.pos;
                    while end < bytes.len() && (bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_') {
                        end += 1;
                    }
                    out.push((start, Tok::Ident(self.src[self.pos..end].to_string())));
                    self.pos = end;
                }
                other => return Err(self.err(start, format!("unexpected character '{other}'"))),
            }
        }
    }
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].1
    }

    fn offset(&self) -> usize {
        self.toks[self.at].0
    }

    fn bump(&mut self) -> (usize, Tok) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn syntax(&self, msg: impl Into<String>) -> ParseError {
        ParseError { offset: self.offset(), kind: ParseErrorKind::Syntax(msg.into()) }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        while let Tok::Op(c @ ('+' | '-')) = *self.peek() {
            self.bump();
            let rhs = self.term()?;
            lhs = if c == '+' { Expr::Add(Box::new(lhs), Box::new(rhs)) } else { Expr::Sub(Box::new(lhs), Box::new(rhs)) };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while let Tok::Op(c @ ('*' | '/')) = *self.peek() {
            self.bump();
            let rhs = self.unary()?;
            lhs = if c == '*' { Expr::Mul(Box::new(lhs), Box::new(rhs)) } else { Expr::Div(Box::new(lhs), Box::new(rhs)) };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        match *self.peek() {
            Tok::Op('-') => {
                self.bump();
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Tok::Op('+') => {
                self.bump();
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if *self.peek() != Tok::Op('^') {
            return Ok(base);
        }
        let at = self.offset();
        self.bump();
        let exp = self.unary()?;
        if base == Expr::Const(Complex64::new(std::f64::consts::E, 0.0)) {
            return Ok(Expr::Func(Func::Exp, Box::new(exp)));
        }
        match exp.constant_value() {
            Some(c) if c.im == 0.0 && c.re.fract() == 0.0 && c.re.abs() < 1e9 => Ok(Expr::Pow(Box::new(base), c.re as i32)),
            Some(c) if c.im == 0.0 => Ok(Expr::PowReal(Box::new(base), c.re)),
            _ => Err(ParseError {
                offset: at,
                kind: ParseErrorKind::Syntax("exponent must be a real constant unless the base is e".into()),
            }),
        }
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let (at, tok) = self.bump();
        let e = match tok {
            Tok::Num(v) => Expr::Const(Complex64::new(v, 0.0)),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect_rparen()?;
                e
            }
            Tok::Ident(name) => {
                if let Some(f) = Func::from_name(&name) {
                    if *self.peek() != Tok::LParen {
                        return Err(self.syntax(format!("expected '(' after function '{name}'")));
                    }
                    self.bump();
                    let arg = self.expr()?;
                    self.expect_rparen()?;
                    Expr::Func(f, Box::new(arg))
                } else {
                    match name.as_str() {
                        "u" | "z" => Expr::Var,
                        "i" => Expr::Const(Complex64::new(0.0, 1.0)),
                        "e" => Expr::Const(Complex64::new(std::f64::consts::E, 0.0)),
                        "pi" => Expr::Const(Complex64::new(std::f64::consts::PI, 0.0)),
                        _ => return Err(ParseError { offset: at, kind: ParseErrorKind::UnknownIdentifier(name) }),
                    }
                }
            }
            Tok::End => return Err(ParseError { offset: at, kind: ParseErrorKind::Syntax("unexpected end of input".into()) }),
            other => return Err(ParseError { offset: at, kind: ParseErrorKind::Syntax(format!("unexpected token {other:?}")) }),
        };
        match self.peek() {
            Tok::Num(_) | Tok::Ident(_) | Tok::LParen => Err(self.syntax("juxtaposition is not allowed; use '*'")),
            _ => Ok(e),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ParseError> {
        if *self.peek() == Tok::RParen {
            self.bump();
            Ok(())
        } else {
            Err(self.syntax("expected ')'"))
        }
    }
}

pub(super) fn parse(text: &str) -> Result<Expr, ParseError> {
    let toks = Lexer { src: text, pos: 0 }.tokens()?;
    let mut p = Parser { toks, at: 0 };
    let e = p.expr()?;
    match p.peek() {
        Tok::End => Ok(e),
        Tok::RParen => Err(p.syntax("unbalanced ')'")),
        _ => Err(p.syntax("unexpected trailing input")),
    }
}
