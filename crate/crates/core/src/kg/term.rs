use std::fmt;

use serde::{Deserialize, Serialize};

/// Predicate used for `a` / `rdf:type` statements.
pub const TYPE_PREDICATE: &str = "type";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Concept {
    Activity,
    State,
    ObservationFeature,
    Action,
    Transition,
    Effect,
    Equation,
    Parameter,
}

impl Concept {
    pub const ALL: [Concept; 8] = [
        Concept::Activity,
        Concept::State,
        Concept::ObservationFeature,
        Concept::Action,
        Concept::Transition,
        Concept::Effect,
        Concept::Equation,
        Concept::Parameter,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Concept::Activity => "Activity",
            Concept::State => "State",
            Concept::ObservationFeature => "ObservationFeature",
            Concept::Action => "Action",
            Concept::Transition => "Transition",
            Concept::Effect => "Effect",
            Concept::Equation => "Equation",
            Concept::Parameter => "Parameter",
        }
    }

    pub fn parse(name: &str) -> Option<Concept> {
        Concept::ALL.into_iter().find(|c| c.as_str() == name)
    }
}

impl fmt::Display for Concept {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Datatype {
    Boolean,
    Integer,
    Double,
    String,
}

impl Datatype {
    pub fn xsd_name(self) -> &'static str {
        match self {
            Datatype::Boolean => "boolean",
            Datatype::Integer => "integer",
            Datatype::Double => "double",
            Datatype::String => "string",
        }
    }

    pub fn from_xsd(local: &str) -> Option<Datatype> {
        Some(match local {
            "boolean" => Datatype::Boolean,
            "integer" | "int" | "long" | "nonNegativeInteger" | "positiveInteger" => Datatype::Integer,
            "double" | "float" | "decimal" => Datatype::Double,
            "string" => Datatype::String,
            _ => return None,
        })
    }
}

/// A typed literal in canonical lexical form, so that two literals denoting
/// the same value compare equal.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Literal {
    datatype: Datatype,
    lexical: String,
}

impl Literal {
    pub fn boolean(b: bool) -> Self {
        Literal {
            datatype: Datatype::Boolean,
            lexical: b.to_string(),
        }
    }

    pub fn integer(i: i64) -> Self {
        Literal {
            datatype: Datatype::Integer,
            lexical: i.to_string(),
        }
    }

    /// Non-finite doubles are not representable in the graph formats.
    pub fn double(v: f64) -> Self {
        Literal {
            datatype: Datatype::Double,
            lexical: format_double(v),
        }
    }

    pub fn string(s: impl Into<String>) -> Self {
        Literal {
            datatype: Datatype::String,
            lexical: s.into(),
        }
    }

    /// Parses a lexical form under `datatype`, canonicalising it.
    pub fn parse(lexical: &str, datatype: Datatype) -> Result<Self, String> {
        match datatype {
            Datatype::Boolean => match lexical.trim() {
                "true" | "1" => Ok(Literal::boolean(true)),
                "false" | "0" => Ok(Literal::boolean(false)),
                other => Err(format!("`{other}` is not an xsd:boolean")),
            },
            Datatype::Integer => lexical
                .trim()
                .parse::<i64>()
                .map(Literal::integer)
                .map_err(|_| format!("`{lexical}` is not an xsd:integer")),
            Datatype::Double => match lexical.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(Literal::double(v)),
                _ => Err(format!("`{lexical}` is not a finite xsd:double")),
            },
            Datatype::String => Ok(Literal::string(lexical)),
        }
    }

    pub fn datatype(&self) -> Datatype {
        self.datatype
    }

    pub fn lexical(&self) -> &str {
        &self.lexical
    }

    pub fn as_bool(&self) -> Option<bool> {
        (self.datatype == Datatype::Boolean).then(|| self.lexical == "true")
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self.datatype {
            Datatype::Integer => self.lexical.parse().ok(),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self.datatype {
            Datatype::Double | Datatype::Integer => self.lexical.parse().ok(),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        (self.datatype == Datatype::String).then_some(self.lexical.as_str())
    }

    /// Reinterprets a numeric literal under another numeric datatype when that
    /// is lossless (`"1"^^xsd:integer` as a double, `"2.0"^^xsd:double` as an integer).
    pub fn coerce(&self, target: Datatype) -> Option<Literal> {
        if self.datatype == target {
            return Some(self.clone());
        }
        match (self.datatype, target) {
            (Datatype::Integer, Datatype::Double) => self.as_f64().map(Literal::double),
            (Datatype::Double, Datatype::Integer) => {
                let v = self.as_f64()?;
                (v.fract() == 0.0 && v.abs() < 9.0e15).then(|| Literal::integer(v as i64))
            }
            _ => None,
        }
    }
}

/// Shortest round-tripping decimal text, without exponent for ordinary magnitudes.
pub fn format_double(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 {
        "0".to_string()
    } else if (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Entity(String),
    Concept(Concept),
    Literal(Literal),
}

impl Term {
    pub fn entity(name: impl Into<String>) -> Self {
        Term::Entity(name.into())
    }

    pub fn as_entity(&self) -> Option<&str> {
        match self {
            Term::Entity(e) => Some(e),
            _ => None,
        }
    }

    pub fn as_literal(&self) -> Option<&Literal> {
        match self {
            Term::Literal(l) => Some(l),
            _ => None,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Entity(e) => write!(f, "entity:{e}"),
            Term::Concept(c) => write!(f, "concept:{c}"),
            Term::Literal(l) => write!(f, "\"{}\"^^xsd:{}", l.lexical, l.datatype.xsd_name()),
        }
    }
}

/// One statement. Subjects and entity objects are local entity names;
/// predicates are local property names (or [`TYPE_PREDICATE`]).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triple {
    pub subject: String,
    pub predicate: String,
    pub object: Term,
}

impl Triple {
    pub fn new(subject: impl Into<String>, predicate: impl Into<String>, object: Term) -> Self {
        Triple {
            subject: subject.into(),
            predicate: predicate.into(),
            object,
        }
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "entity:{} property:{} {}", self.subject, self.predicate, self.object)
    }
}

/// Whether `name` can be written as a prefixed-name local part.
pub fn is_valid_local_name(name: &str) -> bool {
    !name.is_empty()
        && !name.starts_with(['.', '-'])
        && !name.ends_with('.')
        && name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn double_literals_are_canonical() {
        assert_eq!(Literal::parse("1", Datatype::Double).unwrap().lexical(), "1");
        assert_eq!(Literal::parse("1.50", Datatype::Double).unwrap(), Literal::double(1.5));
        assert_eq!(Literal::double(1e-20).lexical(), "1e-20");
        assert_eq!(Literal::parse("1e-20", Datatype::Double).unwrap().as_f64(), Some(1e-20));
        assert!(Literal::parse("NaN", Datatype::Double).is_err());
    }

    #[test]
    fn numeric_coercion() {
        assert_eq!(Literal::integer(2).coerce(Datatype::Double), Some(Literal::double(2.0)));
        assert_eq!(Literal::double(2.5).coerce(Datatype::Integer), None);
        assert_eq!(Literal::string("x").coerce(Datatype::Double), None);
    }

    #[test]
    fn local_names() {
        assert!(is_valid_local_name("Walk_living_room_1_Done"));
        assert!(is_valid_local_name("bec16c1e-b08e-496b-ba10-95e85be65fb9"));
        assert!(!is_valid_local_name("a b"));
        assert!(!is_valid_local_name("trailing."));
    }
}
