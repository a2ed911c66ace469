use std::collections::{BTreeMap, BTreeSet};

use super::entities::*;
use super::schema::{self, PropertySpec, Range};
use super::term::{is_valid_local_name, Concept, Literal, Term, Triple, TYPE_PREDICATE};
use super::{Issue, KgError};
use crate::expr::{parse_equation, parse_rule};

/// Tolerance on the per-(state, action) sum of transition probabilities.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone)]
struct Record {
    concept: Concept,
    /// Canonical statements, schema properties first, then opaque ones.
    statements: Vec<(String, Term)>,
}

/// A validated, immutable MDP knowledge graph.
#[derive(Debug, Clone, Default)]
pub struct KnowledgeGraph {
    records: BTreeMap<String, Record>,
    activities: BTreeMap<String, Activity>,
    states: BTreeMap<String, State>,
    features: BTreeMap<String, ObservationFeature>,
    actions: BTreeMap<String, Action>,
    transitions: BTreeMap<String, Transition>,
    effects: BTreeMap<String, Effect>,
    equations: BTreeMap<String, Equation>,
    parameters: BTreeMap<String, Parameter>,
    triples: BTreeSet<Triple>,
    by_state_action: BTreeMap<(String, String), Vec<String>>,
}

/// A triple pattern; `None` is a wildcard.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriplePattern<'a> {
    pub subject: Option<&'a str>,
    pub predicate: Option<&'a str>,
    pub object: Option<&'a Term>,
}

impl KnowledgeGraph {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a graph from typed entities plus opaque statements.
    pub fn from_entities<I>(entities: I, extra: &[Triple]) -> Result<Self, KgError>
    where
        I: IntoIterator<Item = Entity>,
    {
        let mut triples = Vec::new();
        for e in entities {
            let name = e.name().to_string();
            triples.push(Triple::new(name.clone(), TYPE_PREDICATE, Term::Concept(e.concept())));
            for (p, o) in e.statements() {
                triples.push(Triple::new(name.clone(), p, o));
            }
        }
        triples.extend(extra.iter().cloned());
        Self::from_triples(triples)
    }

    /// Validates a statement list and builds the graph. All validation
    /// problems are reported together.
    pub fn from_triples<I>(triples: I) -> Result<Self, KgError>
    where
        I: IntoIterator<Item = Triple>,
    {
        let mut issues = Vec::new();
        let mut subjects: BTreeMap<String, (Vec<Concept>, Vec<(String, Term)>)> = BTreeMap::new();
        let mut order: Vec<String> = Vec::new();
        let mut seen = BTreeSet::new();
        for t in triples {
            if !seen.insert(t.clone()) {
                continue;
            }
            let entry = subjects.entry(t.subject.clone()).or_insert_with(|| {
                order.push(t.subject.clone());
                (Vec::new(), Vec::new())
            });
            if t.predicate == TYPE_PREDICATE {
                match t.object {
                    Term::Concept(c) => {
                        if !entry.0.contains(&c) {
                            entry.0.push(c)
                        }
                    }
                    other => issues.push(Issue::UnknownConcept {
                        entity: t.subject.clone(),
                        concept: other.to_string(),
                    }),
                }
            } else {
                entry.1.push((t.predicate, t.object));
            }
        }

        let mut concept_of = BTreeMap::new();
        for (name, (concepts, _)) in &subjects {
            if !is_valid_local_name(name) {
                issues.push(Issue::InvalidName { entity: name.clone() });
            }
            match concepts.as_slice() {
                [c] => {
                    concept_of.insert(name.clone(), *c);
                }
                [] => issues.push(Issue::MissingConcept { entity: name.clone() }),
                many => issues.push(Issue::ConflictingConcepts {
                    entity: name.clone(),
                    concepts: many.iter().map(|c| c.to_string()).collect(),
                }),
            }
        }

        let mut g = KnowledgeGraph::default();
        for name in &order {
            let Some(&concept) = concept_of.get(name) else { continue };
            let statements = &subjects[name].1;
            let props = Props::collect(name, concept, statements, &concept_of, &mut issues);
            let entity = props.build(name, concept, &mut issues);
            let mut canonical = entity.statements();
            canonical.extend(props.opaque.iter().cloned());
            g.records.insert(
                name.clone(),
                Record {
                    concept,
                    statements: canonical,
                },
            );
            g.insert_typed(entity);
        }

        g.check_semantics(&mut issues);
        if !issues.is_empty() {
            return Err(KgError::Invalid(issues));
        }

        for (name, rec) in &g.records {
            g.triples
                .insert(Triple::new(name.clone(), TYPE_PREDICATE, Term::Concept(rec.concept)));
            for (p, o) in &rec.statements {
                g.triples.insert(Triple::new(name.clone(), p.clone(), o.clone()));
            }
        }
        for t in g.transitions.values() {
            g.by_state_action
                .entry((t.previous_state.clone(), t.action.clone()))
                .or_default()
                .push(t.name.clone());
        }
        Ok(g)
    }

    fn insert_typed(&mut self, e: Entity) {
        match e {
            Entity::Activity(v) => {
                self.activities.insert(v.name.clone(), v);
            }
            Entity::State(v) => {
                self.states.insert(v.name.clone(), v);
            }
            Entity::ObservationFeature(v) => {
                self.features.insert(v.name.clone(), v);
            }
            Entity::Action(v) => {
                self.actions.insert(v.name.clone(), v);
            }
            Entity::Transition(v) => {
                self.transitions.insert(v.name.clone(), v);
            }
            Entity::Effect(v) => {
                self.effects.insert(v.name.clone(), v);
            }
            Entity::Equation(v) => {
                self.equations.insert(v.name.clone(), v);
            }
            Entity::Parameter(v) => {
                self.parameters.insert(v.name.clone(), v);
            }
        }
    }

    fn check_semantics(&self, issues: &mut Vec<Issue>) {
        for a in self.activities.values() {
            if a.number_of_actors == 0 {
                issues.push(Issue::OutOfRange {
                    entity: a.name.clone(),
                    property: "hasNumberOfActors".into(),
                    message: "must be a positive integer".into(),
                });
            }
            let states: Vec<&State> = a.states.iter().filter_map(|s| self.states.get(s)).collect();
            let initial = states.iter().filter(|s| s.is_initial).count();
            if initial != 1 {
                issues.push(Issue::ActivityStates {
                    entity: a.name.clone(),
                    message: format!("expected exactly one initial state, found {initial}"),
                });
            }
            if !states.iter().any(|s| s.is_final) {
                issues.push(Issue::ActivityStates {
                    entity: a.name.clone(),
                    message: "expected at least one final state".into(),
                });
            }
        }

        for s in self.states.values() {
            match parse_rule(&s.expression) {
                Ok(rule) => {
                    for f in rule.features() {
                        if !s.observation_features.iter().any(|o| o == f) {
                            issues.push(Issue::Expression {
                                entity: s.name.clone(),
                                property: "hasExpression".into(),
                                message: format!("feature `{f}` is not listed in hasObservationFeature"),
                            });
                        }
                    }
                }
                Err(e) => issues.push(Issue::Expression {
                    entity: s.name.clone(),
                    property: "hasExpression".into(),
                    message: e.to_string(),
                }),
            }
        }

        for f in self.features.values() {
            let out_of_range = |property: &str, message: &str| Issue::OutOfRange {
                entity: f.name.clone(),
                property: property.into(),
                message: message.into(),
            };
            if f.range_start > f.range_end {
                issues.push(out_of_range("hasRangeStart", "rangeStart exceeds rangeEnd"));
            }
            match f.distribution {
                Some(Distribution::Gaussian) => {
                    if f.stats.mean.is_none() {
                        issues.push(out_of_range("hasMeanValue", "GAUSSIAN requires a mean"));
                    }
                    match f.stats.standard_deviation {
                        None => issues.push(out_of_range(
                            "hasStandardDeviation",
                            "GAUSSIAN requires a standard deviation",
                        )),
                        Some(sd) if sd < 0.0 => {
                            issues.push(out_of_range("hasStandardDeviation", "must be non-negative"))
                        }
                        _ => {}
                    }
                }
                Some(Distribution::Poisson) => {
                    if !f.stats.lambda.is_some_and(|l| l > 0.0) {
                        issues.push(out_of_range("hasLambda", "POISSON requires lambda > 0"));
                    }
                }
                Some(Distribution::Binomial) => {
                    if !f.stats.success_rate.is_some_and(|p| (0.0..=1.0).contains(&p)) {
                        issues.push(out_of_range("hasSuccessRate", "BINOMIAL requires a success rate in [0, 1]"));
                    }
                }
                _ => {}
            }
        }

        let mut sums: BTreeMap<(&str, &str), f64> = BTreeMap::new();
        for t in self.transitions.values() {
            if !(0.0..=1.0).contains(&t.probability) {
                issues.push(Issue::OutOfRange {
                    entity: t.name.clone(),
                    property: "hasTransitionProbability".into(),
                    message: format!("probability {} is outside [0, 1]", t.probability),
                });
            }
            *sums.entry((&t.previous_state, &t.action)).or_default() += t.probability;
        }
        for ((state, action), sum) in sums {
            if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
                issues.push(Issue::Normalization {
                    state: state.to_string(),
                    action: action.to_string(),
                    sum,
                });
            }
        }

        for e in self.effects.values() {
            if e.impact_type == ImpactType::Compute && e.equation.is_none() {
                issues.push(Issue::Cardinality {
                    entity: e.name.clone(),
                    property: "hasEquation".into(),
                    message: "COMPUTE effects require an equation".into(),
                });
            }
        }

        for eq in self.equations.values() {
            match parse_equation(&eq.expression) {
                Ok(expr) => {
                    let params: BTreeSet<&str> = eq
                        .parameters
                        .iter()
                        .filter_map(|p| self.parameters.get(p))
                        .map(|p| p.symbol.as_str())
                        .collect();
                    for sym in expr.symbols() {
                        if !params.contains(sym) && !self.features.contains_key(sym) {
                            issues.push(Issue::Expression {
                                entity: eq.name.clone(),
                                property: "hasExpression".into(),
                                message: format!("symbol `{sym}` is neither a feature nor a declared parameter"),
                            });
                        }
                    }
                }
                Err(e) => issues.push(Issue::Expression {
                    entity: eq.name.clone(),
                    property: "hasExpression".into(),
                    message: e.to_string(),
                }),
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn entity_count(&self) -> usize {
        self.records.len()
    }

    pub fn triple_count(&self) -> usize {
        self.triples.len()
    }

    /// All statements in (subject, predicate, object) order.
    pub fn triples(&self) -> impl Iterator<Item = &Triple> {
        self.triples.iter()
    }

    pub fn triple_set(&self) -> &BTreeSet<Triple> {
        &self.triples
    }

    /// Every statement unifying with `pattern`, in (subject, predicate, object) order.
    pub fn match_triples(&self, pattern: &TriplePattern<'_>) -> Vec<&Triple> {
        let matches = |t: &&Triple| {
            pattern.predicate.is_none_or(|p| t.predicate == p) && pattern.object.is_none_or(|o| &t.object == o)
        };
        match pattern.subject {
            Some(s) => {
                if !self.records.contains_key(s) {
                    return Vec::new();
                }
                let lo = Triple::new(s, "", Term::Entity(String::new()));
                self.triples
                    .range(lo..)
                    .take_while(|t| t.subject == s)
                    .filter(matches)
                    .collect()
            }
            None => self.triples.iter().filter(matches).collect(),
        }
    }

    pub fn concept_of(&self, name: &str) -> Option<Concept> {
        self.records.get(name).map(|r| r.concept)
    }

    /// Entity names grouped by concept (in [`Concept::ALL`] order), then by name.
    pub fn entity_names(&self) -> Vec<(Concept, &str)> {
        let mut out: Vec<(Concept, &str)> = self.records.iter().map(|(n, r)| (r.concept, n.as_str())).collect();
        out.sort();
        out
    }

    /// Canonical statements of one entity, excluding its type.
    pub fn statements_of(&self, name: &str) -> &[(String, Term)] {
        self.records.get(name).map(|r| r.statements.as_slice()).unwrap_or(&[])
    }

    pub fn activities(&self) -> impl Iterator<Item = &Activity> {
        self.activities.values()
    }

    pub fn activity(&self, name: &str) -> Option<&Activity> {
        self.activities.get(name)
    }

    pub fn states(&self) -> impl Iterator<Item = &State> {
        self.states.values()
    }

    pub fn state(&self, name: &str) -> Option<&State> {
        self.states.get(name)
    }

    pub fn features(&self) -> impl Iterator<Item = &ObservationFeature> {
        self.features.values()
    }

    pub fn feature(&self, name: &str) -> Option<&ObservationFeature> {
        self.features.get(name)
    }

    pub fn actions(&self) -> impl Iterator<Item = &Action> {
        self.actions.values()
    }

    pub fn action(&self, name: &str) -> Option<&Action> {
        self.actions.get(name)
    }

    pub fn transitions(&self) -> impl Iterator<Item = &Transition> {
        self.transitions.values()
    }

    pub fn transition(&self, name: &str) -> Option<&Transition> {
        self.transitions.get(name)
    }

    /// Transitions leaving `state` under `action`, ordered by transition name.
    pub fn transitions_from<'a>(&'a self, state: &str, action: &str) -> impl Iterator<Item = &'a Transition> + 'a {
        self.by_state_action
            .get(&(state.to_string(), action.to_string()))
            .into_iter()
            .flatten()
            .filter_map(|n| self.transitions.get(n))
    }

    pub fn effect(&self, name: &str) -> Option<&Effect> {
        self.effects.get(name)
    }

    pub fn effects(&self) -> impl Iterator<Item = &Effect> {
        self.effects.values()
    }

    pub fn equation(&self, name: &str) -> Option<&Equation> {
        self.equations.get(name)
    }

    pub fn equations(&self) -> impl Iterator<Item = &Equation> {
        self.equations.values()
    }

    pub fn parameter(&self, name: &str) -> Option<&Parameter> {
        self.parameters.get(name)
    }

    pub fn parameters(&self) -> impl Iterator<Item = &Parameter> {
        self.parameters.values()
    }

    /// Typed copies of every entity, in [`Self::entity_names`] order.
    pub fn entities(&self) -> Vec<Entity> {
        self.entity_names()
            .into_iter()
            .filter_map(|(c, n)| {
                Some(match c {
                    Concept::Activity => Entity::Activity(self.activities.get(n)?.clone()),
                    Concept::State => Entity::State(self.states.get(n)?.clone()),
                    Concept::ObservationFeature => Entity::ObservationFeature(self.features.get(n)?.clone()),
                    Concept::Action => Entity::Action(self.actions.get(n)?.clone()),
                    Concept::Transition => Entity::Transition(self.transitions.get(n)?.clone()),
                    Concept::Effect => Entity::Effect(self.effects.get(n)?.clone()),
                    Concept::Equation => Entity::Equation(self.equations.get(n)?.clone()),
                    Concept::Parameter => Entity::Parameter(self.parameters.get(n)?.clone()),
                })
            })
            .collect()
    }

    /// Statements whose predicate is not part of the ontology schema.
    pub fn opaque_triples(&self) -> Vec<Triple> {
        let mut out = Vec::new();
        for (name, rec) in &self.records {
            for (p, o) in &rec.statements {
                if schema::lookup(rec.concept, p).is_none() {
                    out.push(Triple::new(name.clone(), p.clone(), o.clone()));
                }
            }
        }
        out
    }
}

/// Schema-checked property values of one entity.
struct Props {
    known: BTreeMap<&'static str, Vec<Term>>,
    opaque: Vec<(String, Term)>,
}

impl Props {
    fn collect(
        name: &str,
        concept: Concept,
        statements: &[(String, Term)],
        concept_of: &BTreeMap<String, Concept>,
        issues: &mut Vec<Issue>,
    ) -> Props {
        let mut known: BTreeMap<&'static str, Vec<Term>> = BTreeMap::new();
        let mut opaque = Vec::new();
        for (pred, obj) in statements {
            let Some(spec) = schema::lookup(concept, pred) else {
                if matches!(obj, Term::Concept(_)) {
                    issues.push(Issue::LiteralType {
                        entity: name.into(),
                        property: pred.clone(),
                        message: "concept terms may only appear as types".into(),
                    });
                } else {
                    opaque.push((pred.clone(), obj.clone()));
                }
                continue;
            };
            if let Some(value) = check_value(name, spec, obj, concept_of, issues) {
                let values = known.entry(spec.name).or_default();
                if !values.contains(&value) {
                    values.push(value);
                }
            }
        }
        for spec in schema::properties(concept) {
            let n = known.get(spec.name).map_or(0, Vec::len);
            let too_many = spec.max.is_some_and(|m| n > m);
            if n < spec.min || too_many {
                let expected = match spec.max {
                    Some(m) if m == spec.min => format!("exactly {m}"),
                    Some(m) => format!("{}..{m}", spec.min),
                    None => format!("at least {}", spec.min),
                };
                issues.push(Issue::Cardinality {
                    entity: name.into(),
                    property: spec.name.into(),
                    message: format!("expected {expected} value(s), found {n}"),
                });
            }
        }
        Props { known, opaque }
    }

    fn values(&self, p: &str) -> &[Term] {
        self.known.get(p).map(Vec::as_slice).unwrap_or(&[])
    }

    fn refs(&self, p: &str) -> Vec<String> {
        self.values(p).iter().filter_map(|t| t.as_entity().map(str::to_string)).collect()
    }

    fn first_ref(&self, p: &str) -> Option<String> {
        self.refs(p).into_iter().next()
    }

    fn literal(&self, p: &str) -> Option<&Literal> {
        self.values(p).first().and_then(Term::as_literal)
    }

    fn f64(&self, p: &str) -> Option<f64> {
        self.literal(p).and_then(Literal::as_f64)
    }

    fn i64(&self, p: &str) -> Option<i64> {
        self.literal(p).and_then(Literal::as_i64)
    }

    fn bool(&self, p: &str) -> bool {
        self.literal(p).and_then(Literal::as_bool).unwrap_or(false)
    }

    fn string(&self, p: &str) -> Option<String> {
        self.literal(p).and_then(|l| l.as_str().map(str::to_string))
    }

    fn keyword<T: std::str::FromStr<Err = String>>(
        &self,
        entity: &str,
        p: &str,
        issues: &mut Vec<Issue>,
    ) -> Option<T> {
        let raw = self.string(p)?;
        match raw.parse() {
            Ok(v) => Some(v),
            Err(message) => {
                issues.push(Issue::OutOfRange {
                    entity: entity.into(),
                    property: p.into(),
                    message,
                });
                None
            }
        }
    }

    fn build(&self, name: &str, concept: Concept, issues: &mut Vec<Issue>) -> Entity {
        let name = name.to_string();
        match concept {
            Concept::Activity => {
                let actors = self.i64("hasNumberOfActors").unwrap_or(1);
                if !(0..=u32::MAX as i64).contains(&actors) {
                    issues.push(Issue::OutOfRange {
                        entity: name.clone(),
                        property: "hasNumberOfActors".into(),
                        message: format!("{actors} is not a valid actor count"),
                    });
                }
                Entity::Activity(Activity {
                    is_sequential: self.bool("isSequential"),
                    number_of_actors: actors.clamp(0, u32::MAX as i64) as u32,
                    communication_type: self
                        .keyword(&name, "hasCommunicationType", issues)
                        .unwrap_or(CommunicationType::Asynchronous),
                    states: self.refs("hasState"),
                    actions: self.refs("hasAction"),
                    observation_features: self.refs("hasObservationFeature"),
                    name,
                })
            }
            Concept::State => Entity::State(State {
                is_initial: self.bool("isInitialState"),
                is_final: self.bool("isFinalState"),
                is_goal: self.bool("isGoal"),
                reward: self.f64("hasReward").unwrap_or(0.0),
                expression: self.string("hasExpression").unwrap_or_default(),
                observation_features: self.refs("hasObservationFeature"),
                actions: self.refs("hasAction"),
                name,
            }),
            Concept::ObservationFeature => Entity::ObservationFeature(ObservationFeature {
                range_start: self.f64("hasRangeStart").unwrap_or(0.0),
                range_end: self.f64("hasRangeEnd").unwrap_or(0.0),
                feature_type: self
                    .keyword(&name, "hasFeatureType", issues)
                    .unwrap_or(FeatureType::Nominal),
                unit: self.string("hasUnit"),
                distribution: self.keyword(&name, "hasProbabilityDistribution", issues),
                stats: FeatureStats {
                    lambda: self.f64("hasLambda"),
                    mean: self.f64("hasMeanValue"),
                    standard_deviation: self.f64("hasStandardDeviation"),
                    variance: self.f64("hasVariance"),
                    median: self.f64("hasMedian"),
                    mode: self.f64("hasModeValue"),
                    number_experiments: self.i64("hasNumberExperiments"),
                    number_successes: self.i64("hasNumberSuccesses"),
                    success_rate: self.f64("hasSuccessRate"),
                    failure_rate: self.f64("hasFailureRate"),
                },
                name,
            }),
            Concept::Action => Entity::Action(Action {
                effects: self.refs("hasEffect"),
                transitions: self.refs("hasTransition"),
                duration: self.f64("hasDuration"),
                frequency: self.i64("hasFrequency"),
                name,
            }),
            Concept::Transition => Entity::Transition(Transition {
                previous_state: self.first_ref("hasPreviousState").unwrap_or_default(),
                next_state: self.first_ref("hasNextState").unwrap_or_default(),
                action: self.first_ref("hasAction").unwrap_or_default(),
                probability: self.f64("hasTransitionProbability").unwrap_or(0.0),
                name,
            }),
            Concept::Effect => Entity::Effect(Effect {
                target_features: self.refs("hasObservationFeature"),
                impact_type: self.keyword(&name, "hasImpactType", issues).unwrap_or(ImpactType::Constant),
                equation: self.first_ref("hasEquation"),
                name,
            }),
            Concept::Equation => Entity::Equation(Equation {
                expression: self.string("hasExpression").unwrap_or_default(),
                parameters: self.refs("hasParameter"),
                name,
            }),
            Concept::Parameter => Entity::Parameter(Parameter {
                symbol: self.string("hasName").unwrap_or_default(),
                value: self.f64("hasValue").unwrap_or(0.0),
                name,
            }),
        }
    }
}

fn check_value(
    entity: &str,
    spec: &PropertySpec,
    obj: &Term,
    concept_of: &BTreeMap<String, Concept>,
    issues: &mut Vec<Issue>,
) -> Option<Term> {
    match (spec.range, obj) {
        (Range::Ref(expected), Term::Entity(target)) => match concept_of.get(target) {
            Some(c) if *c == expected => Some(obj.clone()),
            Some(c) => {
                issues.push(Issue::WrongTargetConcept {
                    entity: entity.into(),
                    property: spec.name.into(),
                    target: target.clone(),
                    expected: expected.to_string(),
                    found: c.to_string(),
                });
                None
            }
            None => {
                issues.push(Issue::DanglingReference {
                    entity: entity.into(),
                    property: spec.name.into(),
                    target: target.clone(),
                });
                None
            }
        },
        (Range::Literal(dt), Term::Literal(l)) => match l.coerce(dt) {
            Some(l) => Some(Term::Literal(l)),
            None => {
                issues.push(Issue::LiteralType {
                    entity: entity.into(),
                    property: spec.name.into(),
                    message: format!(
                        "expected xsd:{}, found \"{}\"^^xsd:{}",
                        dt.xsd_name(),
                        l.lexical(),
                        l.datatype().xsd_name()
                    ),
                });
                None
            }
        },
        (Range::Ref(expected), _) => {
            issues.push(Issue::LiteralType {
                entity: entity.into(),
                property: spec.name.into(),
                message: format!("expected a reference to a {expected}"),
            });
            None
        }
        (Range::Literal(dt), _) => {
            issues.push(Issue::LiteralType {
                entity: entity.into(),
                property: spec.name.into(),
                message: format!("expected an xsd:{} literal", dt.xsd_name()),
            });
            None
        }
    }
}
