//! The MDP ontology, an in-memory triple store and its Turtle/JSON formats.

mod entities;
mod graph;
pub mod json;
pub mod schema;
mod term;
pub mod turtle;

use std::fmt;

use thiserror::Error;

pub use entities::*;
pub use graph::{KnowledgeGraph, TriplePattern, NORMALIZATION_TOLERANCE};
pub use term::{format_double, is_valid_local_name, Concept, Datatype, Literal, Term, Triple, TYPE_PREDICATE};

/// One validation problem found while loading a graph.
#[derive(Debug, Clone, PartialEq)]
pub enum Issue {
    MissingConcept {
        entity: String,
    },
    ConflictingConcepts {
        entity: String,
        concepts: Vec<String>,
    },
    UnknownConcept {
        entity: String,
        concept: String,
    },
    InvalidName {
        entity: String,
    },
    Cardinality {
        entity: String,
        property: String,
        message: String,
    },
    DanglingReference {
        entity: String,
        property: String,
        target: String,
    },
    WrongTargetConcept {
        entity: String,
        property: String,
        target: String,
        expected: String,
        found: String,
    },
    LiteralType {
        entity: String,
        property: String,
        message: String,
    },
    OutOfRange {
        entity: String,
        property: String,
        message: String,
    },
    Expression {
        entity: String,
        property: String,
        message: String,
    },
    ActivityStates {
        entity: String,
        message: String,
    },
    Normalization {
        state: String,
        action: String,
        sum: f64,
    },
}

impl Issue {
    /// The entity the issue is reported against.
    pub fn entity(&self) -> &str {
        match self {
            Issue::MissingConcept { entity }
            | Issue::ConflictingConcepts { entity, .. }
            | Issue::UnknownConcept { entity, .. }
            | Issue::InvalidName { entity }
            | Issue::Cardinality { entity, .. }
            | Issue::DanglingReference { entity, .. }
            | Issue::WrongTargetConcept { entity, .. }
            | Issue::LiteralType { entity, .. }
            | Issue::OutOfRange { entity, .. }
            | Issue::Expression { entity, .. }
            | Issue::ActivityStates { entity, .. } => entity,
            Issue::Normalization { state, .. } => state,
        }
    }

    /// The property involved, if any.
    pub fn property(&self) -> Option<&str> {
        match self {
            Issue::Cardinality { property, .. }
            | Issue::DanglingReference { property, .. }
            | Issue::WrongTargetConcept { property, .. }
            | Issue::LiteralType { property, .. }
            | Issue::OutOfRange { property, .. }
            | Issue::Expression { property, .. } => Some(property),
            Issue::Normalization { .. } => Some("hasTransitionProbability"),
            _ => None,
        }
    }
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Issue::MissingConcept { entity } => write!(f, "{entity}: no concept type declared"),
            Issue::ConflictingConcepts { entity, concepts } => {
                write!(f, "{entity}: conflicting concept types {}", concepts.join(", "))
            }
            Issue::UnknownConcept { entity, concept } => write!(f, "{entity}: unknown concept {concept}"),
            Issue::InvalidName { entity } => write!(f, "`{entity}` is not a valid entity name"),
            Issue::Cardinality {
                entity,
                property,
                message,
            }
            | Issue::LiteralType {
                entity,
                property,
                message,
            }
            | Issue::OutOfRange {
                entity,
                property,
                message,
            }
            | Issue::Expression {
                entity,
                property,
                message,
            } => write!(f, "{entity}.{property}: {message}"),
            Issue::DanglingReference {
                entity,
                property,
                target,
            } => write!(f, "{entity}.{property}: reference to undefined entity `{target}`"),
            Issue::WrongTargetConcept {
                entity,
                property,
                target,
                expected,
                found,
            } => write!(f, "{entity}.{property}: `{target}` is a {found}, expected a {expected}"),
            Issue::ActivityStates { entity, message } => write!(f, "{entity}: {message}"),
            Issue::Normalization { state, action, sum } => write!(
                f,
                "transitions from {state} under {action} have total probability {sum}, expected 1"
            ),
        }
    }
}

#[derive(Debug, Error)]
pub enum KgError {
    #[error("syntax error at line {line}, column {col}: expected {expected}, found {found}")]
    Syntax {
        line: usize,
        col: usize,
        expected: String,
        found: String,
    },
    #[error("undeclared prefix `{prefix}:` at line {line}")]
    UnknownPrefix { prefix: String, line: usize },
    #[error("IRI <{iri}> at line {line} is outside the supported namespaces")]
    UnsupportedNamespace { iri: String, line: usize },
    #[error("malformed JSON: {0}")]
    Json(String),
    #[error("schema violation in {entity}: {message}")]
    Schema { entity: String, message: String },
    #[error("invalid graph: {}", join_issues(.0))]
    Invalid(Vec<Issue>),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn join_issues(issues: &[Issue]) -> String {
    issues.iter().map(Issue::to_string).collect::<Vec<_>>().join("; ")
}

impl KgError {
    /// Validation issues carried by the error (empty for syntax and I/O errors).
    pub fn issues(&self) -> &[Issue] {
        match self {
            KgError::Invalid(v) => v,
            _ => &[],
        }
    }
}

pub const ENTITY_NS: &str = "http://example.org/Entity/";
pub const PROPERTY_NS: &str = "http://example.org/Property/";
pub const CONCEPT_NS: &str = "http://example.org/Concept/";
pub const XSD_NS: &str = "http://www.w3.org/2001/XMLSchema#";
pub const RDF_NS: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#";
pub const RDFS_NS: &str = "http://www.w3.org/2000/01/rdf-schema#";
