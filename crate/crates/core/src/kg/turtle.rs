//! Reader and writer for the Turtle subset used by activity graphs:
//! `@prefix`, the `a` keyword, `;`/`,` continuation and typed literals.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{
    Concept, Datatype, KgError, KnowledgeGraph, Literal, Term, Triple, CONCEPT_NS, ENTITY_NS, PROPERTY_NS, RDF_NS,
    TYPE_PREDICATE, XSD_NS,
};

pub fn parse_turtle(text: &str) -> Result<KnowledgeGraph, KgError> {
    KnowledgeGraph::from_triples(parse_triples(text)?)
}

/// Parses the statements of a document without validating them.
pub fn parse_triples(text: &str) -> Result<Vec<Triple>, KgError> {
    let mut p = Parser::new(text);
    let mut out = Vec::new();
    loop {
        p.skip_ws();
        if p.at_end() {
            break;
        }
        if p.eat_keyword("@prefix") {
            p.prefix_decl(true)?;
        } else if p.eat_keyword_ci("PREFIX") {
            p.prefix_decl(false)?;
        } else {
            p.triples(&mut out)?;
        }
    }
    Ok(out)
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    prefixes: BTreeMap<String, String>,
}

enum Node {
    Iri { iri: String, line: usize },
    Literal(Literal),
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Parser {
            src,
            pos: 0,
            prefixes: BTreeMap::new(),
        }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn line_col(&self, pos: usize) -> (usize, usize) {
        let before = &self.src[..pos];
        let line = before.matches('\n').count() + 1;
        let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
        (line, col)
    }

    fn line(&self) -> usize {
        self.line_col(self.pos).0
    }

    fn error(&self, expected: &str) -> KgError {
        let (line, col) = self.line_col(self.pos);
        let found = match self.rest().split_whitespace().next() {
            Some(tok) => format!("`{}`", tok.chars().take(24).collect::<String>()),
            None => "end of input".to_string(),
        };
        KgError::Syntax {
            line,
            col,
            expected: expected.to_string(),
            found,
        }
    }

    fn skip_ws(&mut self) {
        loop {
            let r = self.rest();
            let trimmed = r.trim_start();
            self.pos += r.len() - trimmed.len();
            if trimmed.starts_with('#') {
                self.pos += trimmed.find('\n').unwrap_or(trimmed.len());
            } else {
                break;
            }
        }
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), KgError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error(&format!("`{c}`")))
        }
    }

    fn followed_by_delimiter(&self, len: usize) -> bool {
        self.rest()[len..]
            .chars()
            .next()
            .is_none_or(|c| c.is_whitespace() || c == '<' || c == '#')
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.rest().starts_with(kw) && self.followed_by_delimiter(kw.len()) {
            self.pos += kw.len();
            true
        } else {
            false
        }
    }

    fn eat_keyword_ci(&mut self, kw: &str) -> bool {
        let r = self.rest();
        if r.len() >= kw.len() && r[..kw.len()].eq_ignore_ascii_case(kw) && self.followed_by_delimiter(kw.len()) {
            self.pos += kw.len();
            true
        } else {
            false
        }
    }

    fn prefix_decl(&mut self, dotted: bool) -> Result<(), KgError> {
        self.skip_ws();
        let start = self.pos;
        let name_len = self
            .rest()
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_' || c == '-'))
            .unwrap_or(self.rest().len());
        let name = self.rest()[..name_len].to_string();
        self.pos += name_len;
        if self.peek() != Some(':') {
            self.pos = start;
            return Err(self.error("a prefix name followed by `:`"));
        }
        self.pos += 1;
        self.skip_ws();
        let iri = self.iri_ref()?;
        if dotted {
            self.expect('.')?;
        }
        self.prefixes.insert(name, iri);
        Ok(())
    }

    fn iri_ref(&mut self) -> Result<String, KgError> {
        if self.peek() != Some('<') {
            return Err(self.error("an IRI in angle brackets"));
        }
        let end = match self.rest().find('>') {
            Some(e) => e,
            None => return Err(self.error("`>` closing the IRI")),
        };
        let iri = &self.rest()[1..end];
        if iri.contains(char::is_whitespace) {
            return Err(self.error("an IRI without whitespace"));
        }
        let iri = iri.to_string();
        self.pos += end + 1;
        Ok(iri)
    }

    fn triples(&mut self, out: &mut Vec<Triple>) -> Result<(), KgError> {
        let subject = match self.node()? {
            Node::Iri { iri, line } => entity_name(&iri, line)?,
            Node::Literal(_) => return Err(self.error("a subject entity")),
        };
        loop {
            let predicate = self.predicate()?;
            loop {
                let object = self.object(&predicate)?;
                out.push(Triple::new(subject.clone(), predicate.clone(), object));
                if !self.eat(',') {
                    break;
                }
            }
            if self.eat(';') {
                // a trailing `;` before `.` is permitted
                while self.eat(';') {}
                if self.eat('.') {
                    return Ok(());
                }
                continue;
            }
            self.expect('.')?;
            return Ok(());
        }
    }

    fn predicate(&mut self) -> Result<String, KgError> {
        self.skip_ws();
        if self.eat_keyword("a") {
            return Ok(TYPE_PREDICATE.to_string());
        }
        let line = self.line();
        match self.node()? {
            Node::Iri { iri, .. } => {
                if let Some(local) = iri.strip_prefix(PROPERTY_NS) {
                    Ok(local.to_string())
                } else if iri == format!("{RDF_NS}type") {
                    Ok(TYPE_PREDICATE.to_string())
                } else {
                    Err(KgError::UnsupportedNamespace { iri, line })
                }
            }
            Node::Literal(_) => Err(self.error("a predicate")),
        }
    }

    fn object(&mut self, predicate: &str) -> Result<Term, KgError> {
        self.skip_ws();
        let start = self.pos;
        match self.node()? {
            Node::Literal(l) => Ok(Term::Literal(l)),
            Node::Iri { iri, line } => {
                if predicate == TYPE_PREDICATE {
                    if let Some(local) = iri.strip_prefix(CONCEPT_NS) {
                        return Concept::parse(local).map(Term::Concept).ok_or_else(|| {
                            let (line, col) = self.line_col(start);
                            KgError::Syntax {
                                line,
                                col,
                                expected: "a known concept".into(),
                                found: format!("concept:{local}"),
                            }
                        });
                    }
                }
                entity_name(&iri, line).map(Term::Entity)
            }
        }
    }

    fn node(&mut self) -> Result<Node, KgError> {
        self.skip_ws();
        let line = self.line();
        match self.peek() {
            None => Err(self.error("a term")),
            Some('<') => Ok(Node::Iri {
                iri: self.iri_ref()?,
                line,
            }),
            Some('"') | Some('\'') => self.literal(),
            Some(c) if c.is_ascii_digit() || c == '+' || c == '-' || c == '.' => self.bare_number(),
            Some(_) => {
                if self.eat_keyword("true") {
                    return Ok(Node::Literal(Literal::boolean(true)));
                }
                if self.eat_keyword("false") {
                    return Ok(Node::Literal(Literal::boolean(false)));
                }
                let (prefix, local) = self.prefixed_name()?;
                Ok(Node::Iri {
                    iri: self.expand(&prefix, &local, line)?,
                    line,
                })
            }
        }
    }

    fn expand(&self, prefix: &str, local: &str, line: usize) -> Result<String, KgError> {
        match self.prefixes.get(prefix) {
            Some(ns) => Ok(format!("{ns}{local}")),
            None => Err(KgError::UnknownPrefix {
                prefix: prefix.to_string(),
                line,
            }),
        }
    }

    fn prefixed_name(&mut self) -> Result<(String, String), KgError> {
        let r = self.rest();
        let plen = r
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_' || c == '-'))
            .unwrap_or(r.len());
        if !r[plen..].starts_with(':') {
            return Err(self.error("a prefixed name, IRI or literal"));
        }
        let prefix = r[..plen].to_string();
        let after = &r[plen + 1..];
        let mut llen = after
            .find(|c: char| !(c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.')))
            .unwrap_or(after.len());
        // a local name never ends with `.`; it terminates the statement
        while llen > 0 && after[..llen].ends_with('.') {
            llen -= 1;
        }
        let local = after[..llen].to_string();
        self.pos += plen + 1 + llen;
        Ok((prefix, local))
    }

    fn literal(&mut self) -> Result<Node, KgError> {
        let quote = self.peek().unwrap_or('"');
        self.pos += 1;
        let mut value = String::new();
        loop {
            let Some(c) = self.peek() else {
                return Err(self.error("closing quote"));
            };
            self.pos += c.len_utf8();
            match c {
                '\\' => {
                    let Some(e) = self.peek() else {
                        return Err(self.error("an escape sequence"));
                    };
                    self.pos += e.len_utf8();
                    value.push(match e {
                        'n' => '\n',
                        't' => '\t',
                        'r' => '\r',
                        'b' => '\u{8}',
                        'f' => '\u{c}',
                        '"' | '\'' | '\\' => e,
                        'u' | 'U' => {
                            let n = if e == 'u' { 4 } else { 8 };
                            let hex = self.rest().get(..n).unwrap_or("");
                            let code = u32::from_str_radix(hex, 16).ok().and_then(char::from_u32);
                            match code {
                                Some(ch) => {
                                    self.pos += n;
                                    ch
                                }
                                None => return Err(self.error("a unicode escape")),
                            }
                        }
                        _ => return Err(self.error("a valid escape sequence")),
                    });
                }
                '\n' => return Err(self.error("closing quote before end of line")),
                c if c == quote => break,
                c => value.push(c),
            }
        }
        let datatype = if self.rest().starts_with("^^") {
            self.pos += 2;
            let line = self.line();
            let iri = if self.peek() == Some('<') {
                self.iri_ref()?
            } else {
                let (prefix, local) = self.prefixed_name()?;
                self.expand(&prefix, &local, line)?
            };
            match iri.strip_prefix(XSD_NS).and_then(Datatype::from_xsd) {
                Some(dt) => dt,
                None => return Err(KgError::UnsupportedNamespace { iri, line }),
            }
        } else {
            if self.rest().starts_with('@') {
                // language tags carry no meaning in the ontology
                let n = self.rest()[1..]
                    .find(|c: char| !(c.is_ascii_alphanumeric() || c == '-'))
                    .unwrap_or(self.rest().len() - 1);
                self.pos += 1 + n;
            }
            Datatype::String
        };
        Literal::parse(&value, datatype)
            .map(Node::Literal)
            .map_err(|m| self.error(&m))
    }

    fn bare_number(&mut self) -> Result<Node, KgError> {
        let r = self.rest();
        let mut len = r
            .find(|c: char| !(c.is_ascii_digit() || matches!(c, '+' | '-' | '.' | 'e' | 'E')))
            .unwrap_or(r.len());
        while len > 0 && r[..len].ends_with('.') {
            len -= 1;
        }
        let text = &r[..len];
        let lit = if text.contains(['.', 'e', 'E']) {
            Literal::parse(text, Datatype::Double)
        } else {
            Literal::parse(text, Datatype::Integer)
        };
        match lit {
            Ok(l) => {
                self.pos += len;
                Ok(Node::Literal(l))
            }
            Err(_) => Err(self.error("a number")),
        }
    }
}

fn entity_name(iri: &str, line: usize) -> Result<String, KgError> {
    match iri.strip_prefix(ENTITY_NS) {
        Some(local) if !local.is_empty() => Ok(local.to_string()),
        _ => Err(KgError::UnsupportedNamespace {
            iri: iri.to_string(),
            line,
        }),
    }
}

const PREFIX_BLOCK: &str = concat!(
    "@prefix entity: <http://example.org/Entity/> .\n",
    "@prefix property: <http://example.org/Property/> .\n",
    "@prefix concept: <http://example.org/Concept/> .\n",
    "@prefix xsd: <http://www.w3.org/2001/XMLSchema#> .\n",
);

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out
}

fn write_term(out: &mut String, t: &Term) {
    match t {
        Term::Entity(e) => {
            if super::is_valid_local_name(e) {
                let _ = write!(out, "entity:{e}");
            } else {
                let _ = write!(out, "<{ENTITY_NS}{e}>");
            }
        }
        Term::Concept(c) => {
            let _ = write!(out, "concept:{c}");
        }
        Term::Literal(l) => {
            let _ = write!(out, "\"{}\"^^xsd:{}", escape(l.lexical()), l.datatype().xsd_name());
        }
    }
}

fn write_predicate(out: &mut String, p: &str) {
    if super::is_valid_local_name(p) {
        let _ = write!(out, "property:{p}");
    } else {
        let _ = write!(out, "<{PROPERTY_NS}{p}>");
    }
}

/// Serialises `g`: the prefix block, then one block per entity grouped by
/// concept, each block listing its properties in schema order.
pub fn write_turtle(g: &KnowledgeGraph) -> String {
    let mut out = String::from(PREFIX_BLOCK);
    for (concept, name) in g.entity_names() {
        out.push('\n');
        write_term(&mut out, &Term::entity(name));
        let _ = write!(out, " a concept:{concept}");
        for (p, o) in g.statements_of(name) {
            out.push_str(";\n    ");
            write_predicate(&mut out, p);
            out.push(' ');
            write_term(&mut out, o);
        }
        out.push_str(" .\n");
    }
    out
}
