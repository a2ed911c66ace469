//! Boolean rule expressions that identify a state from observed feature values,
//! e.g. `SystolicBloodPressure >= 140 AND DiastolicBloodPressure >= 80`.
//!
//! Grammar:
//!
//! ```text
//! rule       := conj (OR conj)*
//! conj       := primary (AND primary)*
//! primary    := '(' rule ')' | comparison
//! comparison := IDENT op constant
//! op         := == | != | < | <= | > | >=     (also = ≥ ≤ ≠)
//! constant   := ['-'] NUMBER | 'text' | "text" | true | false
//! ```
//!
//! `AND` may also be written `and`, `&&`, `⊓` or `∧`; `OR` as `or`, `||`, `⊔` or `∨`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::lexer::{tokenize, CmpOp, Spanned, Token};
use super::ExprError;

/// An observed feature value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Number(f64),
    Text(String),
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Number(n) => Some(*n),
            Value::Text(_) => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Number(n) => write!(f, "{n}"),
            Value::Text(s) => write!(f, "{s}"),
        }
    }
}

/// Anything that can answer "what is the current value of feature `name`".
pub trait FeatureLookup {
    fn feature(&self, name: &str) -> Option<&Value>;
}

impl FeatureLookup for BTreeMap<String, Value> {
    fn feature(&self, name: &str) -> Option<&Value> {
        self.get(name)
    }
}

impl FeatureLookup for HashMap<String, Value> {
    fn feature(&self, name: &str) -> Option<&Value> {
        self.get(name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Constant {
    Number(f64),
    Text(String),
}

impl fmt::Display for Constant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Constant::Number(n) => write!(f, "{n}"),
            Constant::Text(s) => write!(f, "'{}'", s.replace('\\', "\\\\").replace('\'', "\\'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RuleExpr {
    Compare {
        feature: String,
        op: CmpOp,
        value: Constant,
    },
    And(Box<RuleExpr>, Box<RuleExpr>),
    Or(Box<RuleExpr>, Box<RuleExpr>),
}

impl RuleExpr {
    /// Names of every feature the expression reads.
    pub fn features(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        self.collect_features(&mut out);
        out
    }

    fn collect_features<'a>(&'a self, out: &mut BTreeSet<&'a str>) {
        match self {
            RuleExpr::Compare { feature, .. } => {
                out.insert(feature.as_str());
            }
            RuleExpr::And(a, b) | RuleExpr::Or(a, b) => {
                a.collect_features(out);
                b.collect_features(out);
            }
        }
    }

    /// Evaluates the rule. Comparisons between a number and a text value are
    /// unequal; ordering between mismatched kinds is false.
    pub fn evaluate<F: FeatureLookup + ?Sized>(&self, features: &F) -> Result<bool, ExprError> {
        match self {
            RuleExpr::Compare { feature, op, value } => {
                let actual = features
                    .feature(feature)
                    .ok_or_else(|| ExprError::UnboundSymbol(feature.clone()))?;
                Ok(compare(actual, *op, value))
            }
            RuleExpr::And(a, b) => Ok(a.evaluate(features)? && b.evaluate(features)?),
            RuleExpr::Or(a, b) => Ok(a.evaluate(features)? || b.evaluate(features)?),
        }
    }
}

fn compare(actual: &Value, op: CmpOp, expected: &Constant) -> bool {
    use std::cmp::Ordering;
    let ord = match (actual, expected) {
        (Value::Number(a), Constant::Number(b)) => a.partial_cmp(b),
        (Value::Text(a), Constant::Text(b)) => Some(a.as_str().cmp(b.as_str())),
        _ => return op == CmpOp::Ne,
    };
    let Some(ord) = ord else {
        return op == CmpOp::Ne;
    };
    match op {
        CmpOp::Eq => ord == Ordering::Equal,
        CmpOp::Ne => ord != Ordering::Equal,
        CmpOp::Lt => ord == Ordering::Less,
        CmpOp::Le => ord != Ordering::Greater,
        CmpOp::Gt => ord == Ordering::Greater,
        CmpOp::Ge => ord != Ordering::Less,
    }
}

impl fmt::Display for RuleExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RuleExpr::Compare { feature, op, value } => write!(f, "{feature} {} {value}", op.symbol()),
            RuleExpr::And(a, b) => {
                fmt_operand(f, a, false)?;
                write!(f, " AND ")?;
                fmt_operand(f, b, false)
            }
            RuleExpr::Or(a, b) => {
                fmt_operand(f, a, true)?;
                write!(f, " OR ")?;
                fmt_operand(f, b, true)
            }
        }
    }
}

fn fmt_operand(f: &mut fmt::Formatter<'_>, e: &RuleExpr, in_or: bool) -> fmt::Result {
    let needs_parens = matches!((e, in_or), (RuleExpr::Or(..), false));
    if needs_parens {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

pub fn parse_rule(text: &str) -> Result<RuleExpr, ExprError> {
    let tokens = tokenize(text)?;
    if tokens.is_empty() {
        return Err(ExprError::Empty);
    }
    let mut p = Parser {
        tokens: &tokens,
        at: 0,
        end: text.chars().count(),
    };
    let expr = p.disjunction()?;
    if let Some(t) = p.peek() {
        return Err(ExprError::Syntax {
            pos: t.pos,
            message: format!("expected `AND`, `OR` or end of expression, found {}", t.token.describe()),
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
    fn peek(&self) -> Option<&'a Spanned> {
        self.tokens.get(self.at)
    }

    fn next(&mut self) -> Option<&'a Spanned> {
        let t = self.tokens.get(self.at);
        self.at += 1;
        t
    }

    fn unexpected(&self, tok: Option<&Spanned>, expected: &str) -> ExprError {
        match tok {
            Some(t) => ExprError::Syntax {
                pos: t.pos,
                message: format!("expected {expected}, found {}", t.token.describe()),
            },
            None => ExprError::Syntax {
                pos: self.end,
                message: format!("expected {expected}, found end of expression"),
            },
        }
    }

    fn disjunction(&mut self) -> Result<RuleExpr, ExprError> {
        let mut lhs = self.conjunction()?;
        while matches!(self.peek(), Some(Spanned { token: Token::Or, .. })) {
            self.at += 1;
            let rhs = self.conjunction()?;
            lhs = RuleExpr::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn conjunction(&mut self) -> Result<RuleExpr, ExprError> {
        let mut lhs = self.primary()?;
        while matches!(self.peek(), Some(Spanned { token: Token::And, .. })) {
            self.at += 1;
            let rhs = self.primary()?;
            lhs = RuleExpr::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn primary(&mut self) -> Result<RuleExpr, ExprError> {
        let tok = self.next();
        match tok.map(|t| &t.token) {
            Some(Token::LParen) => {
                let inner = self.disjunction()?;
                match self.next() {
                    Some(Spanned { token: Token::RParen, .. }) => Ok(inner),
                    other => Err(self.unexpected(other, "`)`")),
                }
            }
            Some(Token::Ident(name)) => {
                let op = match self.next() {
                    Some(Spanned { token: Token::Cmp(op), .. }) => *op,
                    other => return Err(self.unexpected(other, "comparison operator")),
                };
                let value = self.constant()?;
                Ok(RuleExpr::Compare {
                    feature: name.clone(),
                    op,
                    value,
                })
            }
            _ => Err(self.unexpected(tok, "feature name or `(`")),
        }
    }

    fn constant(&mut self) -> Result<Constant, ExprError> {
        let tok = self.next();
        match tok.map(|t| &t.token) {
            Some(Token::Number(n)) => Ok(Constant::Number(*n)),
            Some(Token::Minus) => match self.next() {
                Some(Spanned { token: Token::Number(n), .. }) => Ok(Constant::Number(-*n)),
                other => Err(self.unexpected(other, "number")),
            },
            Some(Token::Plus) => match self.next() {
                Some(Spanned { token: Token::Number(n), .. }) => Ok(Constant::Number(*n)),
                other => Err(self.unexpected(other, "number")),
            },
            Some(Token::Str(s)) => Ok(Constant::Text(s.clone())),
            Some(Token::Ident(w)) if w == "true" => Ok(Constant::Number(1.0)),
            Some(Token::Ident(w)) if w == "false" => Ok(Constant::Number(0.0)),
            _ => Err(self.unexpected(tok, "constant")),
        }
    }
}
