//! Arithmetic expressions attached to `COMPUTE` effects.

use std::collections::BTreeSet;
use std::fmt;

use super::lexer::{tokenize, Spanned, Token};
use super::ExprError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArithExpr {
    Number(f64),
    Symbol(String),
    Neg(Box<ArithExpr>),
    Binary(BinaryOp, Box<ArithExpr>, Box<ArithExpr>),
}

impl ArithExpr {
    pub fn symbols(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        self.collect(&mut out);
        out
    }

    fn collect<'a>(&'a self, out: &mut BTreeSet<&'a str>) {
        match self {
            ArithExpr::Number(_) => {}
            ArithExpr::Symbol(s) => {
                out.insert(s.as_str());
            }
            ArithExpr::Neg(e) => e.collect(out),
            ArithExpr::Binary(_, a, b) => {
                a.collect(out);
                b.collect(out);
            }
        }
    }

    /// Evaluates with `lookup` resolving symbols. Division by an exact zero is
    /// an error rather than an infinity.
    pub fn evaluate<L>(&self, lookup: &L) -> Result<f64, ExprError>
    where
        L: Fn(&str) -> Option<f64> + ?Sized,
    {
        match self {
            ArithExpr::Number(n) => Ok(*n),
            ArithExpr::Symbol(s) => lookup(s).ok_or_else(|| ExprError::UnboundSymbol(s.clone())),
            ArithExpr::Neg(e) => Ok(-e.evaluate(lookup)?),
            ArithExpr::Binary(op, a, b) => {
                let lhs = a.evaluate(lookup)?;
                let rhs = b.evaluate(lookup)?;
                Ok(match op {
                    BinaryOp::Add => lhs + rhs,
                    BinaryOp::Sub => lhs - rhs,
                    BinaryOp::Mul => lhs * rhs,
                    BinaryOp::Div => {
                        if rhs == 0.0 {
                            return Err(ExprError::DivisionByZero);
                        }
                        lhs / rhs
                    }
                })
            }
        }
    }
}

impl fmt::Display for ArithExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArithExpr::Number(n) => write!(f, "{n}"),
            ArithExpr::Symbol(s) => write!(f, "{s}"),
            ArithExpr::Neg(e) => write!(f, "-({e})"),
            ArithExpr::Binary(op, a, b) => {
                let sym = match op {
                    BinaryOp::Add => "+",
                    BinaryOp::Sub => "-",
                    BinaryOp::Mul => "*",
                    BinaryOp::Div => "/",
                };
                write!(f, "({a} {sym} {b})")
            }
        }
    }
}

pub fn parse_equation(text: &str) -> Result<ArithExpr, ExprError> {
    let tokens = tokenize(text)?;
    if tokens.is_empty() {
        return Err(ExprError::Empty);
    }
    let mut p = Parser {
        tokens: &tokens,
        at: 0,
        end: text.chars().count(),
    };
    let expr = p.sum()?;
    if let Some(t) = p.tokens.get(p.at) {
        return Err(ExprError::Syntax {
            pos: t.pos,
            message: format!("expected operator or end of expression, found {}", t.token.describe()),
        });
    }
    Ok(expr)
}

struct Parser<'a> {
    tokens: &'a [Spanned],
    at: usize,
    end: usize,
}

impl<'a> Parser<'a> {
    fn peek_token(&self) -> Option<&'a Token> {
        self.tokens.get(self.at).map(|t| &t.token)
    }

    fn sum(&mut self) -> Result<ArithExpr, ExprError> {
        let mut lhs = self.product()?;
        loop {
            let op = match self.peek_token() {
                Some(Token::Plus) => BinaryOp::Add,
                Some(Token::Minus) => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.at += 1;
            let rhs = self.product()?;
            lhs = ArithExpr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn product(&mut self) -> Result<ArithExpr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek_token() {
                Some(Token::Star) => BinaryOp::Mul,
                Some(Token::Slash) => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.at += 1;
            let rhs = self.unary()?;
            lhs = ArithExpr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<ArithExpr, ExprError> {
        match self.peek_token() {
            Some(Token::Minus) => {
                self.at += 1;
                Ok(ArithExpr::Neg(Box::new(self.unary()?)))
            }
            Some(Token::Plus) => {
                self.at += 1;
                self.unary()
            }
            _ => self.atom(),
        }
    }

    fn atom(&mut self) -> Result<ArithExpr, ExprError> {
        let tok = self.tokens.get(self.at);
        self.at += 1;
        match tok.map(|t| &t.token) {
            Some(Token::Number(n)) => Ok(ArithExpr::Number(*n)),
            Some(Token::Ident(s)) => Ok(ArithExpr::Symbol(s.clone())),
            Some(Token::LParen) => {
                let inner = self.sum()?;
                match self.tokens.get(self.at) {
                    Some(Spanned { token: Token::RParen, .. }) => {
                        self.at += 1;
                        Ok(inner)
                    }
                    Some(t) => Err(ExprError::Syntax {
                        pos: t.pos,
                        message: format!("expected `)`, found {}", t.token.describe()),
                    }),
                    None => Err(ExprError::Syntax {
                        pos: self.end,
                        message: "expected `)`, found end of expression".into(),
                    }),
                }
            }
            Some(other) => Err(ExprError::Syntax {
                pos: tok.map(|t| t.pos).unwrap_or(self.end),
                message: format!("expected number, symbol or `(`, found {}", other.describe()),
            }),
            None => Err(ExprError::Syntax {
                pos: self.end,
                message: "expected number, symbol or `(`, found end of expression".into(),
            }),
        }
    }
}
