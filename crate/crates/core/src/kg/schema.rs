//! Per-concept property tables: ranges and cardinalities of the MDP ontology.

use super::term::{Concept, Datatype};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Range {
    Ref(Concept),
    Literal(Datatype),
}

#[derive(Debug, Clone, Copy)]
pub struct PropertySpec {
    pub name: &'static str,
    pub range: Range,
    pub min: usize,
    /// `None` means unbounded.
    pub max: Option<usize>,
}

impl PropertySpec {
    pub fn is_multi(&self) -> bool {
        self.max != Some(1)
    }

    pub fn is_mandatory(&self) -> bool {
        self.min > 0
    }
}

const fn one(name: &'static str, range: Range) -> PropertySpec {
    PropertySpec {
        name,
        range,
        min: 1,
        max: Some(1),
    }
}

const fn opt(name: &'static str, range: Range) -> PropertySpec {
    PropertySpec {
        name,
        range,
        min: 0,
        max: Some(1),
    }
}

const fn many(name: &'static str, range: Range, min: usize) -> PropertySpec {
    PropertySpec {
        name,
        range,
        min,
        max: None,
    }
}

use Concept as C;
use Datatype as D;
use Range::{Literal as L, Ref as R};

const ACTIVITY: &[PropertySpec] = &[
    one("isSequential", L(D::Boolean)),
    one("hasNumberOfActors", L(D::Integer)),
    one("hasCommunicationType", L(D::String)),
    many("hasState", R(C::State), 1),
    many("hasObservationFeature", R(C::ObservationFeature), 1),
    many("hasAction", R(C::Action), 1),
];

const STATE: &[PropertySpec] = &[
    one("isGoal", L(D::Boolean)),
    one("isFinalState", L(D::Boolean)),
    one("isInitialState", L(D::Boolean)),
    one("hasExpression", L(D::String)),
    one("hasReward", L(D::Double)),
    many("hasObservationFeature", R(C::ObservationFeature), 1),
    many("hasAction", R(C::Action), 0),
];

const OBSERVATION_FEATURE: &[PropertySpec] = &[
    one("hasRangeStart", L(D::Double)),
    one("hasRangeEnd", L(D::Double)),
    one("hasFeatureType", L(D::String)),
    opt("hasUnit", L(D::String)),
    opt("hasProbabilityDistribution", L(D::String)),
    opt("hasLambda", L(D::Double)),
    opt("hasMeanValue", L(D::Double)),
    opt("hasStandardDeviation", L(D::Double)),
    opt("hasVariance", L(D::Double)),
    opt("hasMedian", L(D::Double)),
    opt("hasModeValue", L(D::Double)),
    opt("hasNumberExperiments", L(D::Integer)),
    opt("hasNumberSuccesses", L(D::Integer)),
    opt("hasSuccessRate", L(D::Double)),
    opt("hasFailureRate", L(D::Double)),
];

const ACTION: &[PropertySpec] = &[
    many("hasTransition", R(C::Transition), 0),
    many("hasEffect", R(C::Effect), 1),
    opt("hasDuration", L(D::Double)),
    opt("hasFrequency", L(D::Integer)),
];

const TRANSITION: &[PropertySpec] = &[
    one("hasPreviousState", R(C::State)),
    one("hasNextState", R(C::State)),
    one("hasAction", R(C::Action)),
    one("hasTransitionProbability", L(D::Double)),
];

const EFFECT: &[PropertySpec] = &[
    one("hasImpactType", L(D::String)),
    many("hasObservationFeature", R(C::ObservationFeature), 1),
    opt("hasEquation", R(C::Equation)),
];

const EQUATION: &[PropertySpec] = &[one("hasExpression", L(D::String)), many("hasParameter", R(C::Parameter), 1)];

const PARAMETER: &[PropertySpec] = &[one("hasName", L(D::String)), one("hasValue", L(D::Double))];

/// Properties of `concept`, in the order they are written out.
pub fn properties(concept: Concept) -> &'static [PropertySpec] {
    match concept {
        Concept::Activity => ACTIVITY,
        Concept::State => STATE,
        Concept::ObservationFeature => OBSERVATION_FEATURE,
        Concept::Action => ACTION,
        Concept::Transition => TRANSITION,
        Concept::Effect => EFFECT,
        Concept::Equation => EQUATION,
        Concept::Parameter => PARAMETER,
    }
}

/// Finds the property spec for `predicate`, ignoring ASCII case
/// (published data mixes `HasTransition` and `hasTransition`).
pub fn lookup(concept: Concept, predicate: &str) -> Option<&'static PropertySpec> {
    properties(concept)
        .iter()
        .find(|p| p.name.eq_ignore_ascii_case(predicate))
}
