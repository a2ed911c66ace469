//! Tokenizer shared by the rule-expression and equation grammars.

use super::ExprError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Token {
    Ident(String),
    Number(f64),
    Str(String),
    Cmp(CmpOp),
    And,
    Or,
    Plus,
    Minus,
    Star,
    Slash,
    LParen,
    RParen,
}

impl Token {
    pub fn describe(&self) -> String {
        match self {
            Token::Ident(s) => format!("identifier `{s}`"),
            Token::Number(n) => format!("number `{n}`"),
            Token::Str(s) => format!("string '{s}'"),
            Token::Cmp(op) => format!("`{}`", op.symbol()),
            Token::And => "`AND`".into(),
            Token::Or => "`OR`".into(),
            Token::Plus => "`+`".into(),
            Token::Minus => "`-`".into(),
            Token::Star => "`*`".into(),
            Token::Slash => "`/`".into(),
            Token::LParen => "`(`".into(),
            Token::RParen => "`)`".into(),
        }
    }
}

/// A token with its character offset in the source text.
#[derive(Debug, Clone, PartialEq)]
pub struct Spanned {
    pub token: Token,
    pub pos: usize,
}

fn is_ident_start(c: char) -> bool {
    c.is_alphabetic() || c == '_'
}

fn is_ident_continue(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '.'
}

pub fn tokenize(text: &str) -> Result<Vec<Spanned>, ExprError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let start = i;
        let two = |next: char| chars.get(i + 1) == Some(&next);
        let token = match c {
            c if c.is_whitespace() => {
                i += 1;
                continue;
            }
            '(' => {
                i += 1;
                Token::LParen
            }
            ')' => {
                i += 1;
                Token::RParen
            }
            '+' => {
                i += 1;
                Token::Plus
            }
            '-' | '\u{2212}' => {
                i += 1;
                Token::Minus
            }
            '*' | '\u{00d7}' => {
                i += 1;
                Token::Star
            }
            '/' | '\u{00f7}' => {
                i += 1;
                Token::Slash
            }
            '\u{2293}' | '\u{2227}' => {
                i += 1;
                Token::And
            }
            '\u{2294}' | '\u{2228}' => {
                i += 1;
                Token::Or
            }
            '\u{2265}' => {
                i += 1;
                Token::Cmp(CmpOp::Ge)
            }
            '\u{2264}' => {
                i += 1;
                Token::Cmp(CmpOp::Le)
            }
            '\u{2260}' => {
                i += 1;
                Token::Cmp(CmpOp::Ne)
            }
            '&' if two('&') => {
                i += 2;
                Token::And
            }
            '|' if two('|') => {
                i += 2;
                Token::Or
            }
            '=' => {
                i += if two('=') { 2 } else { 1 };
                Token::Cmp(CmpOp::Eq)
            }
            '!' if two('=') => {
                i += 2;
                Token::Cmp(CmpOp::Ne)
            }
            '<' => {
                if two('=') {
                    i += 2;
                    Token::Cmp(CmpOp::Le)
                } else {
                    i += 1;
                    Token::Cmp(CmpOp::Lt)
                }
            }
            '>' => {
                if two('=') {
                    i += 2;
                    Token::Cmp(CmpOp::Ge)
                } else {
                    i += 1;
                    Token::Cmp(CmpOp::Gt)
                }
            }
            '\'' | '"' => {
                let quote = c;
                i += 1;
                let mut s = String::new();
                loop {
                    match chars.get(i) {
                        None => {
                            return Err(ExprError::Syntax {
                                pos: start,
                                message: "unterminated string constant".into(),
                            })
                        }
                        Some(&q) if q == quote => {
                            i += 1;
                            break;
                        }
                        Some('\\') if i + 1 < chars.len() => {
                            s.push(chars[i + 1]);
                            i += 2;
                        }
                        Some(&ch) => {
                            s.push(ch);
                            i += 1;
                        }
                    }
                }
                Token::Str(s)
            }
            c if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) => {
                let mut j = i;
                while j < chars.len() && (chars[j].is_ascii_digit() || chars[j] == '.') {
                    j += 1;
                }
                if j < chars.len() && (chars[j] == 'e' || chars[j] == 'E') {
                    let mut k = j + 1;
                    if k < chars.len() && (chars[k] == '+' || chars[k] == '-') {
                        k += 1;
                    }
                    if k < chars.len() && chars[k].is_ascii_digit() {
                        while k < chars.len() && chars[k].is_ascii_digit() {
                            k += 1;
                        }
                        j = k;
                    }
                }
                let lexeme: String = chars[i..j].iter().collect();
                let value = lexeme.parse::<f64>().map_err(|_| ExprError::Syntax {
                    pos: start,
                    message: format!("malformed number `{lexeme}`"),
                })?;
                i = j;
                Token::Number(value)
            }
            c if is_ident_start(c) => {
                let mut j = i + 1;
                while j < chars.len() && is_ident_continue(chars[j]) {
                    j += 1;
                }
                let word: String = chars[i..j].iter().collect();
                i = j;
                match word.as_str() {
                    "AND" | "and" => Token::And,
                    "OR" | "or" => Token::Or,
                    _ => Token::Ident(word),
                }
            }
            other => {
                return Err(ExprError::Syntax {
                    pos: start,
                    message: format!("unexpected character `{other}`"),
                })
            }
        };
        out.push(Spanned { token, pos: start });
    }
    Ok(out)
}
