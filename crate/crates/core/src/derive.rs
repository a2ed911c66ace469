//! Fitting a labelled-state hidden Markov model to recorded agent logs and
//! turning it into an activity graph.
//!
//! Log files are CSV with the header `state,action,reward,next_state,<features...>`;
//! feature cells that parse as numbers are numeric, anything else is a category,
//! and empty cells are treated as not observed.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::Read;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::expr::Value;
use crate::kg::{
    Activity, CommunicationType, Distribution, Effect, Entity, FeatureStats, FeatureType, ImpactType, KgError,
    KnowledgeGraph, Literal, ObservationFeature, State, Term, Transition, Triple,
};
use crate::kg;
use crate::vh::sanitize;

const FIXED_COLUMNS: [&str; 4] = ["state", "action", "reward", "next_state"];

#[derive(Debug, Error)]
pub enum DeriveError {
    #[error("log is empty")]
    Empty,
    #[error("log has no feature columns")]
    NoFeatures,
    #[error("log header lacks column `{0}`")]
    MissingColumn(String),
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
    #[error("feature `{0}` mixes numeric and categorical values")]
    MixedFeature(String),
    #[error("unknown situation: ({state}, {action}) never observed")]
    UnknownSituation { state: String, action: String },
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("feature `{feature}` expects a {expected} value")]
    FeatureType { feature: String, expected: &'static str },
    #[error("observation sequence has zero likelihood under the model")]
    ZeroLikelihood,
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Graph(#[from] KgError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub state: String,
    pub action: String,
    pub reward: f64,
    pub next_state: String,
    pub observations: BTreeMap<String, Value>,
}

/// Reads log rows from CSV text.
pub fn parse_log<R: Read>(reader: R) -> Result<Vec<LogRow>, DeriveError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| DeriveError::Row {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let column = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DeriveError::MissingColumn(name.to_string()))
    };
    let fixed = [column("state")?, column("action")?, column("reward")?, column("next_state")?];
    let features: Vec<(usize, String)> = header
        .iter()
        .enumerate()
        .filter(|(_, h)| !FIXED_COLUMNS.contains(h))
        .map(|(i, h)| (i, h.to_string()))
        .collect();

    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| DeriveError::Row {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize, name: &str| match record.get(i) {
            Some(v) if !v.is_empty() => Ok(v.to_string()),
            _ => Err(DeriveError::Row {
                line,
                message: format!("empty `{name}`"),
            }),
        };
        let reward = field(fixed[2], "reward")?;
        let reward = reward.parse::<f64>().ok().filter(|r| r.is_finite()).ok_or_else(|| DeriveError::Row {
            line,
            message: format!("reward `{reward}` is not a finite number"),
        })?;
        let mut observations = BTreeMap::new();
        for (i, name) in &features {
            let Some(cell) = record.get(*i).filter(|c| !c.is_empty()) else { continue };
            let value = match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => Value::Number(v),
                _ => Value::Text(cell.to_string()),
            };
            observations.insert(name.clone(), value);
        }
        rows.push(LogRow {
            state: field(fixed[0], "state")?,
            action: field(fixed[1], "action")?,
            reward,
            next_state: field(fixed[3], "next_state")?,
            observations,
        });
    }
    Ok(rows)
}

pub fn read_log(path: &Path) -> Result<Vec<LogRow>, DeriveError> {
    let file = std::fs::File::open(path).map_err(|source| DeriveError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_log(file)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FeatureKind {
    Numeric,
    Categorical,
}

/// Per-state distribution of one feature.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Emission {
    Categorical(BTreeMap<String, f64>),
    Gaussian {
        mean: f64,
        std_dev: f64,
        min: f64,
        max: f64,
    },
}

impl Emission {
    /// Log-likelihood of `value`. A zero-deviation Gaussian is a point mass.
    pub fn log_likelihood(&self, value: &Value) -> Option<f64> {
        match (self, value) {
            (Emission::Categorical(pmf), Value::Text(t)) => Some(pmf.get(t).map_or(f64::NEG_INFINITY, |p| p.ln())),
            (Emission::Gaussian { mean, std_dev, .. }, Value::Number(x)) => Some(if *std_dev == 0.0 {
                if x == mean {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            } else {
                let z = (x - mean) / std_dev;
                -0.5 * z * z - std_dev.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
            }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RewardStats {
    pub mean: f64,
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HmmModel {
    pub states: BTreeSet<String>,
    pub actions: BTreeSet<String>,
    pub features: BTreeMap<String, FeatureKind>,
    /// P(next | state, action).
    pub transition_prob: BTreeMap<(String, String), BTreeMap<String, f64>>,
    /// P(action | state).
    pub action_prob: BTreeMap<String, BTreeMap<String, f64>>,
    /// P(next | state), marginalised over actions.
    pub next_prob: BTreeMap<String, BTreeMap<String, f64>>,
    /// P(feature | state), only for states observed as a row's current state.
    pub observation_prob: BTreeMap<(String, String), Emission>,
    /// Distribution of each feature over all rows.
    pub pooled: BTreeMap<String, Emission>,
    pub state_reward: BTreeMap<String, RewardStats>,
    /// Rows per current state.
    pub state_visits: BTreeMap<String, usize>,
}

fn frequencies<K: Ord + Clone>(counts: &BTreeMap<K, usize>) -> BTreeMap<K, f64> {
    let total: usize = counts.values().sum();
    counts.iter().map(|(k, c)| (k.clone(), *c as f64 / total as f64)).collect()
}

/// Sorting first makes the sums independent of row order.
fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

fn mean(sorted: &[f64]) -> f64 {
    sorted.iter().sum::<f64>() / sorted.len() as f64
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Sample standard deviation (n − 1 denominator); 0 for a single value.
fn std_dev(sorted: &[f64], mean: f64) -> f64 {
    if sorted.len() < 2 {
        return 0.0;
    }
    let mut sq: Vec<f64> = sorted.iter().map(|x| (x - mean) * (x - mean)).collect();
    sq.sort_by(f64::total_cmp);
    (sq.iter().sum::<f64>() / (sorted.len() - 1) as f64).sqrt()
}

fn gaussian(values: Vec<f64>) -> Emission {
    let v = sorted(values);
    let m = mean(&v);
    Emission::Gaussian {
        mean: m,
        std_dev: std_dev(&v, m),
        min: v[0],
        max: v[v.len() - 1],
    }
}

fn categorical(values: Vec<String>) -> Emission {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for v in values {
        *counts.entry(v).or_default() += 1;
    }
    Emission::Categorical(frequencies(&counts))
}

fn emission(kind: FeatureKind, values: Vec<&Value>) -> Emission {
    match kind {
        FeatureKind::Numeric => gaussian(values.iter().filter_map(|v| v.as_f64()).collect()),
        FeatureKind::Categorical => categorical(
            values
                .iter()
                .filter_map(|v| match v {
                    Value::Text(t) => Some(t.clone()),
                    Value::Number(_) => None,
                })
                .collect(),
        ),
    }
}

/// Empirical frequencies and moment-fitted Gaussians; no smoothing.
pub fn fit_hmm(rows: &[LogRow]) -> Result<HmmModel, DeriveError> {
    if rows.is_empty() {
        return Err(DeriveError::Empty);
    }
    let mut features: BTreeMap<String, FeatureKind> = BTreeMap::new();
    for r in rows {
        for (f, v) in &r.observations {
            let kind = match v {
                Value::Number(_) => FeatureKind::Numeric,
                Value::Text(_) => FeatureKind::Categorical,
            };
            if *features.entry(f.clone()).or_insert(kind) != kind {
                return Err(DeriveError::MixedFeature(f.clone()));
            }
        }
    }
    if features.is_empty() {
        return Err(DeriveError::NoFeatures);
    }

    let mut states = BTreeSet::new();
    let mut actions = BTreeSet::new();
    let mut trans: BTreeMap<(String, String), BTreeMap<String, usize>> = BTreeMap::new();
    let mut acts: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    let mut next: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    let mut rewards: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut observed: BTreeMap<(String, String), Vec<&Value>> = BTreeMap::new();
    let mut pooled: BTreeMap<String, Vec<&Value>> = BTreeMap::new();
    for r in rows {
        states.insert(r.state.clone());
        states.insert(r.next_state.clone());
        actions.insert(r.action.clone());
        *trans
            .entry((r.state.clone(), r.action.clone()))
            .or_default()
            .entry(r.next_state.clone())
            .or_default() += 1;
        *acts.entry(r.state.clone()).or_default().entry(r.action.clone()).or_default() += 1;
        *next.entry(r.state.clone()).or_default().entry(r.next_state.clone()).or_default() += 1;
        rewards.entry(r.state.clone()).or_default().push(r.reward);
        for (f, v) in &r.observations {
            observed.entry((r.state.clone(), f.clone())).or_default().push(v);
            pooled.entry(f.clone()).or_default().push(v);
        }
    }

    Ok(HmmModel {
        state_visits: acts.iter().map(|(s, c)| (s.clone(), c.values().sum())).collect(),
        transition_prob: trans.iter().map(|(k, c)| (k.clone(), frequencies(c))).collect(),
        action_prob: acts.iter().map(|(k, c)| (k.clone(), frequencies(c))).collect(),
        next_prob: next.iter().map(|(k, c)| (k.clone(), frequencies(c))).collect(),
        observation_prob: observed
            .into_iter()
            .map(|((s, f), v)| {
                let e = emission(features[&f], v);
                ((s, f), e)
            })
            .collect(),
        pooled: pooled.into_iter().map(|(f, v)| (f.clone(), emission(features[&f], v))).collect(),
        state_reward: rewards
            .into_iter()
            .map(|(s, v)| {
                let v = sorted(v);
                (
                    s,
                    RewardStats {
                        mean: mean(&v),
                        median: median(&v),
                    },
                )
            })
            .collect(),
        states,
        actions,
        features,
    })
}

impl HmmModel {
    /// The most probable successor; ties go to the smallest state name.
    pub fn most_likely_next(&self, state: &str, action: &str) -> Result<(String, f64), DeriveError> {
        let dist = self
            .transition_prob
            .get(&(state.to_string(), action.to_string()))
            .ok_or_else(|| DeriveError::UnknownSituation {
                state: state.to_string(),
                action: action.to_string(),
            })?;
        let mut best: Option<(&String, f64)> = None;
        for (s, p) in dist {
            if best.is_none_or(|(_, bp)| *p > bp) {
                best = Some((s, *p));
            }
        }
        let (s, p) = best.expect("observed pairs have a successor");
        Ok((s.clone(), p))
    }

    /// log P(observation | state), summed over the observed features.
    pub fn log_emission(&self, state: &str, observation: &BTreeMap<String, Value>) -> Result<f64, DeriveError> {
        let mut total = 0.0;
        for (f, v) in observation {
            let kind = self.features.get(f).ok_or_else(|| DeriveError::UnknownFeature(f.clone()))?;
            let Some(e) = self.observation_prob.get(&(state.to_string(), f.clone())) else {
                total = f64::NEG_INFINITY;
                continue;
            };
            total += e.log_likelihood(v).ok_or_else(|| DeriveError::FeatureType {
                feature: f.clone(),
                expected: match kind {
                    FeatureKind::Numeric => "numeric",
                    FeatureKind::Categorical => "categorical",
                },
            })?;
        }
        Ok(total)
    }

    /// log P(next | state) marginalised over actions.
    pub fn log_next(&self, state: &str, next: &str) -> f64 {
        self.next_prob
            .get(state)
            .and_then(|d| d.get(next))
            .map_or(f64::NEG_INFINITY, |p| p.ln())
    }

    /// Most probable state sequence for `observations`, with a uniform prior
    /// over states. Ties go to the smaller state name.
    pub fn viterbi_path(&self, observations: &[BTreeMap<String, Value>]) -> Result<Vec<String>, DeriveError> {
        if observations.is_empty() {
            return Ok(Vec::new());
        }
        let states: Vec<&String> = self.states.iter().collect();
        let n = states.len();
        let emissions = |o: &BTreeMap<String, Value>| -> Result<Vec<f64>, DeriveError> {
            states.iter().map(|s| self.log_emission(s, o)).collect()
        };
        let prior = -(n as f64).ln();
        let mut score: Vec<f64> = emissions(&observations[0])?.into_iter().map(|e| prior + e).collect();
        let mut back: Vec<Vec<usize>> = Vec::with_capacity(observations.len());
        let log_next: Vec<Vec<f64>> = states
            .iter()
            .map(|a| states.iter().map(|b| self.log_next(a, b)).collect())
            .collect();
        for o in &observations[1..] {
            let em = emissions(o)?;
            let mut next = vec![f64::NEG_INFINITY; n];
            let mut ptr = vec![0; n];
            for j in 0..n {
                for i in 0..n {
                    let cand = score[i] + log_next[i][j];
                    if cand > next[j] {
                        next[j] = cand;
                        ptr[j] = i;
                    }
                }
                next[j] += em[j];
            }
            back.push(ptr);
            score = next;
        }
        let mut last = 0;
        for j in 1..n {
            if score[j] > score[last] {
                last = j;
            }
        }
        if score[last] == f64::NEG_INFINITY {
            return Err(DeriveError::ZeroLikelihood);
        }
        let mut path = vec![last];
        for ptr in back.iter().rev() {
            last = ptr[last];
            path.push(last);
        }
        path.reverse();
        Ok(path.into_iter().map(|i| states[i].clone()).collect())
    }
}

/// Unique, valid entity names for log labels.
struct Namer {
    used: HashSet<String>,
}

impl Namer {
    fn name(&mut self, label: &str) -> String {
        let mut base = sanitize(label);
        if base.is_empty() || !base.starts_with(|c: char| c.is_ascii_alphabetic() || c == '_') {
            base = format!("_{base}");
        }
        let mut name = base.clone();
        let mut k = 2;
        while !self.used.insert(name.clone()) {
            name = format!("{base}_{k}");
            k += 1;
        }
        name
    }
}

fn quote(text: &str) -> String {
    if text.contains('\'') {
        format!("\"{}\"", text.replace('"', ""))
    } else {
        format!("'{text}'")
    }
}

/// Builds one activity from a fitted model.
///
/// Final states are those without outgoing transitions, or the best-rewarded
/// states if every state has one. The initial state is the first state never
/// reached by a transition or, failing that, the most visited non-final state. Numeric features carry the pooled Gaussian; categorical
/// ones store the index of the most frequent category in the sorted category
/// list. A state's expression bounds the values observed in it.
pub fn hmm_to_kg(m: &HmmModel, activity: &str) -> Result<KnowledgeGraph, DeriveError> {
    let mut namer = Namer { used: HashSet::new() };
    let activity_name = namer.name(activity);
    let feature_names: BTreeMap<&String, String> = m.features.keys().map(|f| (f, namer.name(f))).collect();
    let state_names: BTreeMap<&String, String> = m.states.iter().map(|s| (s, namer.name(s))).collect();
    let action_names: BTreeMap<&String, String> = m.actions.iter().map(|a| (a, namer.name(a))).collect();

    let reward = |s: &String| m.state_reward.get(s).map_or(0.0, |r| r.mean);
    let mut finals: BTreeSet<&String> = m.states.iter().filter(|s| !m.next_prob.contains_key(*s)).collect();
    if finals.is_empty() {
        let best = m.states.iter().map(reward).fold(f64::NEG_INFINITY, f64::max);
        finals = m.states.iter().filter(|s| reward(s) == best).collect();
    }
    let reached: BTreeSet<&String> = m.next_prob.values().flat_map(|d| d.keys()).collect();
    let visits = |s: &String| m.state_visits.get(s).copied().unwrap_or(0);
    let initial = m
        .states
        .iter()
        .find(|s| !reached.contains(s))
        .or_else(|| {
            m.states
                .iter()
                .filter(|s| !finals.contains(s))
                .max_by(|a, b| visits(a).cmp(&visits(b)).then_with(|| b.cmp(a)))
        })
        .or_else(|| m.states.iter().next())
        .expect("a fitted model has states");

    let mut entities: Vec<Entity> = Vec::new();
    let mut extra = Vec::new();
    for f in m.features.keys() {
        let name = feature_names[f].clone();
        let feature = match &m.pooled[f] {
            Emission::Gaussian { mean, std_dev, min, max } => ObservationFeature {
                name,
                range_start: *min,
                range_end: *max,
                feature_type: FeatureType::Numerical,
                unit: None,
                distribution: Some(Distribution::Gaussian),
                stats: FeatureStats {
                    mean: Some(*mean),
                    standard_deviation: Some(*std_dev),
                    variance: Some(std_dev * std_dev),
                    ..FeatureStats::default()
                },
            },
            Emission::Categorical(pmf) => {
                let probs: Vec<f64> = pmf.values().copied().collect();
                let mode = (0..probs.len()).fold(0, |best, i| if probs[i] > probs[best] { i } else { best });
                for c in pmf.keys() {
                    extra.push(Triple::new(name.clone(), "hasCategory", Term::Literal(Literal::string(c))));
                }
                ObservationFeature {
                    name,
                    range_start: 0.0,
                    range_end: (pmf.len() - 1) as f64,
                    feature_type: FeatureType::Nominal,
                    unit: None,
                    distribution: Some(Distribution::None),
                    stats: FeatureStats {
                        mode: Some(mode as f64),
                        ..FeatureStats::default()
                    },
                }
            }
        };
        entities.push(Entity::ObservationFeature(feature));
    }

    let all_features: Vec<String> = feature_names.values().cloned().collect();
    for s in &m.states {
        let mut clauses = Vec::new();
        let mut used = Vec::new();
        for f in m.features.keys() {
            let fname = &feature_names[f];
            match m.observation_prob.get(&(s.clone(), f.clone())) {
                Some(Emission::Gaussian { min, max, .. }) => {
                    clauses.push(format!("{fname} >= {min} AND {fname} <= {max}"));
                    used.push(fname.clone());
                }
                Some(Emission::Categorical(pmf)) => {
                    let options: Vec<String> = pmf.keys().map(|c| format!("{fname} == {}", quote(c))).collect();
                    clauses.push(if options.len() == 1 {
                        options[0].clone()
                    } else {
                        format!("({})", options.join(" OR "))
                    });
                    used.push(fname.clone());
                }
                None => {}
            }
        }
        if clauses.is_empty() {
            // never observed as a current state: accept any value of the first feature
            let f = m.features.keys().next().expect("fit rejects logs without features");
            let fname = &feature_names[f];
            clauses.push(match &m.pooled[f] {
                Emission::Gaussian { min, .. } => format!("{fname} >= {min}"),
                Emission::Categorical(_) => format!("{fname} != ''"),
            });
            used.push(fname.clone());
        }
        let name = state_names[s].clone();
        if let Some(r) = m.state_reward.get(s) {
            extra.push(Triple::new(name.clone(), "hasMedianReward", Term::Literal(Literal::double(r.median))));
        }
        let is_final = finals.contains(s);
        entities.push(Entity::State(State {
            is_initial: s == initial,
            is_final,
            is_goal: is_final,
            reward: reward(s),
            expression: clauses.join(" AND "),
            observation_features: used,
            actions: m
                .action_prob
                .get(s)
                .map(|d| d.keys().map(|a| action_names[a].clone()).collect())
                .unwrap_or_default(),
            name,
        }));
    }

    let mut action_transitions: BTreeMap<&String, Vec<String>> = BTreeMap::new();
    let mut k = 0;
    for ((s, a), dist) in &m.transition_prob {
        for (n, p) in dist {
            k += 1;
            let name = namer.name(&format!("{activity_name}_transition_{k}"));
            action_transitions.entry(a).or_default().push(name.clone());
            entities.push(Entity::Transition(Transition {
                name,
                previous_state: state_names[s].clone(),
                next_state: state_names[n].clone(),
                action: action_names[a].clone(),
                probability: *p,
            }));
        }
    }
    for a in &m.actions {
        let effect = namer.name(&format!("{}_effect", action_names[a]));
        entities.push(Entity::Effect(Effect {
            name: effect.clone(),
            target_features: all_features.clone(),
            impact_type: ImpactType::Constant,
            equation: None,
        }));
        entities.push(Entity::Action(kg::Action {
            name: action_names[a].clone(),
            effects: vec![effect],
            transitions: action_transitions.remove(a).unwrap_or_default(),
            duration: None,
            frequency: None,
        }));
    }
    entities.push(Entity::Activity(Activity {
        name: activity_name,
        is_sequential: false,
        number_of_actors: 1,
        communication_type: CommunicationType::Asynchronous,
        states: state_names.values().cloned().collect(),
        actions: action_names.values().cloned().collect(),
        observation_features: all_features,
    }));
    Ok(KnowledgeGraph::from_entities(entities, &extra)?)
}
