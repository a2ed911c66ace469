//! Typed views of the ontology concepts.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::term::{Literal, Term};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CommunicationType {
    Asynchronous,
    Synchronous,
}

impl CommunicationType {
    /// Written form, as used in the published activity descriptions.
    pub fn as_str(self) -> &'static str {
        match self {
            CommunicationType::Asynchronous => "Asynchronised",
            CommunicationType::Synchronous => "Synchronised",
        }
    }
}

impl FromStr for CommunicationType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "asynchronous" | "asynchronised" | "asynchronized" => Ok(CommunicationType::Asynchronous),
            "synchronous" | "synchronised" | "synchronized" => Ok(CommunicationType::Synchronous),
            _ => Err(format!("unknown communication type `{s}`")),
        }
    }
}

macro_rules! keyword_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                $(if s.eq_ignore_ascii_case($text) {
                    return Ok($name::$variant);
                })+
                Err(format!(concat!("unknown ", stringify!($name), " `{}`"), s))
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

keyword_enum!(FeatureType {
    Nominal => "NOMINAL",
    Numerical => "NUMERICAL",
    Ordinal => "ORDINAL",
});

keyword_enum!(Distribution {
    None => "NONE",
    Gaussian => "GAUSSIAN",
    Exponential => "EXPONENTIAL",
    Binomial => "BINOMIAL",
    Poisson => "POISSON",
    Uniform => "UNIFORM",
});

keyword_enum!(ImpactType {
    Increase => "INCREASE",
    Decrease => "DECREASE",
    Convert => "CONVERT",
    On => "ON",
    Off => "OFF",
    Constant => "CONSTANT",
    Compute => "COMPUTE",
});

#[derive(Debug, Clone, PartialEq)]
pub struct Activity {
    pub name: String,
    pub is_sequential: bool,
    pub number_of_actors: u32,
    pub communication_type: CommunicationType,
    pub states: Vec<String>,
    pub actions: Vec<String>,
    pub observation_features: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub name: String,
    pub is_initial: bool,
    pub is_final: bool,
    pub is_goal: bool,
    pub reward: f64,
    pub expression: String,
    pub observation_features: Vec<String>,
    pub actions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureStats {
    pub lambda: Option<f64>,
    pub mean: Option<f64>,
    pub standard_deviation: Option<f64>,
    pub variance: Option<f64>,
    pub median: Option<f64>,
    pub mode: Option<f64>,
    pub number_experiments: Option<i64>,
    pub number_successes: Option<i64>,
    pub success_rate: Option<f64>,
    pub failure_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationFeature {
    pub name: String,
    pub range_start: f64,
    pub range_end: f64,
    pub feature_type: FeatureType,
    pub unit: Option<String>,
    pub distribution: Option<Distribution>,
    pub stats: FeatureStats,
}

impl ObservationFeature {
    /// A binary on/off feature over `[0, 1]`.
    pub fn nominal_flag(name: impl Into<String>) -> Self {
        ObservationFeature {
            name: name.into(),
            range_start: 0.0,
            range_end: 1.0,
            feature_type: FeatureType::Nominal,
            unit: Some(String::new()),
            distribution: None,
            stats: FeatureStats::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub name: String,
    pub previous_state: String,
    pub next_state: String,
    pub action: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Action {
    pub name: String,
    pub effects: Vec<String>,
    pub transitions: Vec<String>,
    pub duration: Option<f64>,
    pub frequency: Option<i64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Effect {
    pub name: String,
    pub target_features: Vec<String>,
    pub impact_type: ImpactType,
    pub equation: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equation {
    pub name: String,
    pub expression: String,
    pub parameters: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    /// The symbol bound in equations (`hasName`).
    pub symbol: String,
    pub value: f64,
}

/// Any typed entity, used when building graphs programmatically.
#[derive(Debug, Clone, PartialEq)]
pub enum Entity {
    Activity(Activity),
    State(State),
    ObservationFeature(ObservationFeature),
    Action(Action),
    Transition(Transition),
    Effect(Effect),
    Equation(Equation),
    Parameter(Parameter),
}

macro_rules! entity_from {
    ($($t:ident),+) => {
        $(impl From<$t> for Entity {
            fn from(v: $t) -> Self {
                Entity::$t(v)
            }
        })+
    };
}

entity_from!(Activity, State, ObservationFeature, Action, Transition, Effect, Equation, Parameter);

fn refs(out: &mut Vec<(String, Term)>, predicate: &str, names: &[String]) {
    out.extend(names.iter().map(|n| (predicate.to_string(), Term::entity(n.clone()))));
}

fn lit(out: &mut Vec<(String, Term)>, predicate: &str, l: Literal) {
    out.push((predicate.to_string(), Term::Literal(l)));
}

fn opt_double(out: &mut Vec<(String, Term)>, predicate: &str, v: Option<f64>) {
    if let Some(v) = v {
        lit(out, predicate, Literal::double(v));
    }
}

fn opt_integer(out: &mut Vec<(String, Term)>, predicate: &str, v: Option<i64>) {
    if let Some(v) = v {
        lit(out, predicate, Literal::integer(v));
    }
}

impl Entity {
    pub fn name(&self) -> &str {
        match self {
            Entity::Activity(e) => &e.name,
            Entity::State(e) => &e.name,
            Entity::ObservationFeature(e) => &e.name,
            Entity::Action(e) => &e.name,
            Entity::Transition(e) => &e.name,
            Entity::Effect(e) => &e.name,
            Entity::Equation(e) => &e.name,
            Entity::Parameter(e) => &e.name,
        }
    }

    pub fn concept(&self) -> super::Concept {
        use super::Concept as C;
        match self {
            Entity::Activity(_) => C::Activity,
            Entity::State(_) => C::State,
            Entity::ObservationFeature(_) => C::ObservationFeature,
            Entity::Action(_) => C::Action,
            Entity::Transition(_) => C::Transition,
            Entity::Effect(_) => C::Effect,
            Entity::Equation(_) => C::Equation,
            Entity::Parameter(_) => C::Parameter,
        }
    }

    /// Canonical statements (excluding the type statement) in schema order.
    pub fn statements(&self) -> Vec<(String, Term)> {
        let mut out = Vec::new();
        match self {
            Entity::Activity(a) => {
                lit(&mut out, "isSequential", Literal::boolean(a.is_sequential));
                lit(&mut out, "hasNumberOfActors", Literal::integer(a.number_of_actors as i64));
                lit(&mut out, "hasCommunicationType", Literal::string(a.communication_type.as_str()));
                refs(&mut out, "hasState", &a.states);
                refs(&mut out, "hasObservationFeature", &a.observation_features);
                refs(&mut out, "hasAction", &a.actions);
            }
            Entity::State(s) => {
                lit(&mut out, "isGoal", Literal::boolean(s.is_goal));
                lit(&mut out, "isFinalState", Literal::boolean(s.is_final));
                lit(&mut out, "isInitialState", Literal::boolean(s.is_initial));
                lit(&mut out, "hasExpression", Literal::string(s.expression.clone()));
                lit(&mut out, "hasReward", Literal::double(s.reward));
                refs(&mut out, "hasObservationFeature", &s.observation_features);
                refs(&mut out, "hasAction", &s.actions);
            }
            Entity::ObservationFeature(f) => {
                lit(&mut out, "hasRangeStart", Literal::double(f.range_start));
                lit(&mut out, "hasRangeEnd", Literal::double(f.range_end));
                lit(&mut out, "hasFeatureType", Literal::string(f.feature_type.as_str()));
                if let Some(u) = &f.unit {
                    lit(&mut out, "hasUnit", Literal::string(u.clone()));
                }
                if let Some(d) = f.distribution {
                    lit(&mut out, "hasProbabilityDistribution", Literal::string(d.as_str()));
                }
                let s = &f.stats;
                opt_double(&mut out, "hasLambda", s.lambda);
                opt_double(&mut out, "hasMeanValue", s.mean);
                opt_double(&mut out, "hasStandardDeviation", s.standard_deviation);
                opt_double(&mut out, "hasVariance", s.variance);
                opt_double(&mut out, "hasMedian", s.median);
                opt_double(&mut out, "hasModeValue", s.mode);
                opt_integer(&mut out, "hasNumberExperiments", s.number_experiments);
                opt_integer(&mut out, "hasNumberSuccesses", s.number_successes);
                opt_double(&mut out, "hasSuccessRate", s.success_rate);
                opt_double(&mut out, "hasFailureRate", s.failure_rate);
            }
            Entity::Action(a) => {
                refs(&mut out, "hasTransition", &a.transitions);
                refs(&mut out, "hasEffect", &a.effects);
                opt_double(&mut out, "hasDuration", a.duration);
                opt_integer(&mut out, "hasFrequency", a.frequency);
            }
            Entity::Transition(t) => {
                out.push(("hasPreviousState".into(), Term::entity(t.previous_state.clone())));
                out.push(("hasNextState".into(), Term::entity(t.next_state.clone())));
                out.push(("hasAction".into(), Term::entity(t.action.clone())));
                lit(&mut out, "hasTransitionProbability", Literal::double(t.probability));
            }
            Entity::Effect(e) => {
                lit(&mut out, "hasImpactType", Literal::string(e.impact_type.as_str()));
                refs(&mut out, "hasObservationFeature", &e.target_features);
                if let Some(eq) = &e.equation {
                    out.push(("hasEquation".into(), Term::entity(eq.clone())));
                }
            }
            Entity::Equation(e) => {
                lit(&mut out, "hasExpression", Literal::string(e.expression.clone()));
                refs(&mut out, "hasParameter", &e.parameters);
            }
            Entity::Parameter(p) => {
                lit(&mut out, "hasName", Literal::string(p.symbol.clone()));
                lit(&mut out, "hasValue", Literal::double(p.value));
            }
        }
        out
    }
}
