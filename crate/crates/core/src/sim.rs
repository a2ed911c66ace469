//! Per-agent activity simulation: a stateful step function over an immutable
//! activity model.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::expr::{parse_equation, parse_rule, ArithExpr, ExprError, FeatureLookup, RuleExpr, Value};
use crate::kg::{ImpactType, KnowledgeGraph, ObservationFeature};

/// Label used when no state expression matches the current features.
pub const UNKNOWN_STATE: &str = "UNKNOWN";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("unknown situation: {0}")]
    UnknownSituation(String),
    #[error("unknown activity `{0}`")]
    UnknownActivity(String),
    #[error("unknown action `{0}`")]
    UnknownAction(String),
    #[error("activity terminated")]
    Terminated,
    #[error("step limit of {0} exceeded")]
    MaxSteps(usize),
    #[error("{context}: {source}")]
    Expression {
        context: String,
        #[source]
        source: ExprError,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub reward_increment: f64,
    /// Sample the next state from the transition distribution instead of
    /// taking the most likely one.
    pub stochastic: bool,
    pub seed: u64,
    /// Defaults to 50 × number of states when `None`.
    pub max_steps: Option<usize>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            reward_increment: 0.25,
            stochastic: false,
            seed: 0,
            max_steps: None,
        }
    }
}

/// Snapshot of one simulated agent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimState {
    pub features: BTreeMap<String, Value>,
    pub label: String,
    pub reward: f64,
    pub is_goal: bool,
    pub is_final: bool,
    pub step_index: usize,
}

#[derive(Debug)]
struct ModelState {
    name: String,
    rule: RuleExpr,
    is_initial: bool,
    is_final: bool,
    is_goal: bool,
    reward: f64,
}

#[derive(Debug)]
enum EffectKind {
    Set(f64),
    Convert,
    Shift(f64),
    Constant,
    Compute {
        expr: ArithExpr,
        params: BTreeMap<String, f64>,
        name: String,
    },
}

#[derive(Debug)]
struct ModelEffect {
    targets: Vec<String>,
    kind: EffectKind,
}

/// One activity of a graph, compiled for repeated simulation.
#[derive(Debug)]
pub struct ActivityModel {
    name: String,
    sequential: bool,
    states: Vec<ModelState>,
    state_index: HashMap<String, usize>,
    features: BTreeMap<String, ObservationFeature>,
    actions: BTreeSet<String>,
    effects: HashMap<String, Vec<ModelEffect>>,
    /// (state, action) -> [(next state, probability)], next states sorted by name
    transitions: HashMap<(String, String), Vec<(String, f64)>>,
    successors: HashMap<String, BTreeSet<String>>,
}

/// Evaluates an equation with parameters bound before features.
pub fn evaluate_equation<F: FeatureLookup + ?Sized>(
    expression: &str,
    features: &F,
    params: &BTreeMap<String, f64>,
) -> Result<f64, ExprError> {
    let expr = parse_equation(expression)?;
    eval_compiled(&expr, features, params)
}

fn eval_compiled<F: FeatureLookup + ?Sized>(
    expr: &ArithExpr,
    features: &F,
    params: &BTreeMap<String, f64>,
) -> Result<f64, ExprError> {
    expr.evaluate(&|s: &str| params.get(s).copied().or_else(|| features.feature(s).and_then(Value::as_f64)))
}

impl ActivityModel {
    /// Compiles `activity` of `graph`. Expressions were validated on load, so
    /// compilation only fails for an unknown activity.
    pub fn new(graph: &KnowledgeGraph, activity: &str) -> Result<Self, SimError> {
        let act = graph
            .activity(activity)
            .ok_or_else(|| SimError::UnknownActivity(activity.to_string()))?;
        let compile_err = |context: String| move |source| SimError::Expression { context, source };

        let mut states = Vec::new();
        for name in act.states.iter().collect::<BTreeSet<_>>() {
            let Some(s) = graph.state(name) else { continue };
            states.push(ModelState {
                name: s.name.clone(),
                rule: parse_rule(&s.expression).map_err(compile_err(s.name.clone()))?,
                is_initial: s.is_initial,
                is_final: s.is_final,
                is_goal: s.is_goal,
                reward: s.reward,
            });
        }
        let state_index: HashMap<String, usize> = states.iter().enumerate().map(|(i, s)| (s.name.clone(), i)).collect();

        let mut features = BTreeMap::new();
        let mut feature_names: BTreeSet<&String> = act.observation_features.iter().collect();
        for s in &act.states {
            if let Some(s) = graph.state(s) {
                feature_names.extend(s.observation_features.iter());
            }
        }

        let mut actions: BTreeSet<String> = act.actions.iter().cloned().collect();
        let mut transitions: HashMap<(String, String), Vec<(String, f64)>> = HashMap::new();
        let mut successors: HashMap<String, BTreeSet<String>> = HashMap::new();
        for t in graph.transitions() {
            if !state_index.contains_key(&t.previous_state) || !state_index.contains_key(&t.next_state) {
                continue;
            }
            actions.insert(t.action.clone());
            transitions
                .entry((t.previous_state.clone(), t.action.clone()))
                .or_default()
                .push((t.next_state.clone(), t.probability));
            successors
                .entry(t.previous_state.clone())
                .or_default()
                .insert(t.next_state.clone());
        }
        for v in transitions.values_mut() {
            v.sort_by(|a, b| a.0.cmp(&b.0));
        }

        let mut effects = HashMap::new();
        for a in &actions {
            let Some(action) = graph.action(a) else { continue };
            let mut compiled = Vec::new();
            for e in action.effects.iter().filter_map(|e| graph.effect(e)) {
                feature_names.extend(e.target_features.iter());
                let kind = match e.impact_type {
                    ImpactType::On => EffectKind::Set(1.0),
                    ImpactType::Off => EffectKind::Set(0.0),
                    ImpactType::Convert => EffectKind::Convert,
                    ImpactType::Increase => EffectKind::Shift(1.0),
                    ImpactType::Decrease => EffectKind::Shift(-1.0),
                    ImpactType::Constant => EffectKind::Constant,
                    ImpactType::Compute => {
                        let eq = e
                            .equation
                            .as_deref()
                            .and_then(|n| graph.equation(n))
                            .ok_or_else(|| SimError::Expression {
                                context: e.name.clone(),
                                source: ExprError::Empty,
                            })?;
                        let params = eq
                            .parameters
                            .iter()
                            .filter_map(|p| graph.parameter(p))
                            .map(|p| (p.symbol.clone(), p.value))
                            .collect();
                        EffectKind::Compute {
                            expr: parse_equation(&eq.expression).map_err(compile_err(eq.name.clone()))?,
                            params,
                            name: eq.name.clone(),
                        }
                    }
                };
                compiled.push(ModelEffect {
                    targets: e.target_features.clone(),
                    kind,
                });
            }
            effects.insert(a.clone(), compiled);
        }
        for f in feature_names {
            if let Some(f) = graph.feature(f) {
                features.insert(f.name.clone(), f.clone());
            }
        }

        Ok(ActivityModel {
            name: act.name.clone(),
            sequential: act.is_sequential,
            states,
            state_index,
            features,
            actions,
            effects,
            transitions,
            successors,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn is_sequential(&self) -> bool {
        self.sequential
    }

    pub fn state_names(&self) -> impl Iterator<Item = &str> {
        self.states.iter().map(|s| s.name.as_str())
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn initial_state(&self) -> Option<&str> {
        self.states.iter().find(|s| s.is_initial).map(|s| s.name.as_str())
    }

    pub fn is_final_state(&self, name: &str) -> bool {
        self.state_index.get(name).is_some_and(|&i| self.states[i].is_final)
    }

    pub fn has_state(&self, name: &str) -> bool {
        self.state_index.contains_key(name)
    }

    pub fn actions(&self) -> impl Iterator<Item = &str> {
        self.actions.iter().map(String::as_str)
    }

    pub fn has_action(&self, action: &str) -> bool {
        self.actions.contains(action)
    }

    pub fn feature_names(&self) -> impl Iterator<Item = &str> {
        self.features.keys().map(String::as_str)
    }

    /// Next states reachable from `state` under `action`, sorted by name.
    pub fn transitions_from(&self, state: &str, action: &str) -> &[(String, f64)] {
        self.transitions
            .get(&(state.to_string(), action.to_string()))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Every feature at the start of its range.
    pub fn default_features(&self) -> BTreeMap<String, Value> {
        self.features
            .values()
            .map(|f| (f.name.clone(), Value::Number(f.range_start)))
            .collect()
    }

    fn holds(&self, state: usize, features: &BTreeMap<String, Value>) -> bool {
        self.states[state].rule.evaluate(features).unwrap_or(false)
    }

    /// The state whose expression holds on `features`. When several hold,
    /// states with a matching direct successor are skipped (the successor
    /// is the more advanced description), then the smallest name wins.
    pub fn identify(&self, features: &BTreeMap<String, Value>) -> Option<&str> {
        let matching: Vec<usize> = (0..self.states.len()).filter(|&i| self.holds(i, features)).collect();
        if matching.is_empty() {
            return None;
        }
        let names: HashSet<&str> = matching.iter().map(|&i| self.states[i].name.as_str()).collect();
        let frontier: Vec<usize> = matching
            .iter()
            .copied()
            .filter(|&i| {
                let succ = self.successors.get(&self.states[i].name);
                !succ.is_some_and(|s| s.iter().any(|n| n != &self.states[i].name && names.contains(n.as_str())))
            })
            .collect();
        let pick = if frontier.is_empty() { &matching } else { &frontier };
        pick.first().map(|&i| self.states[i].name.as_str())
    }

    /// Shortest action sequence leading from the initial state to `target`.
    pub fn path_to(&self, target: &str) -> Option<Vec<String>> {
        let start = self.initial_state()?.to_string();
        let mut prev: HashMap<String, (String, String)> = HashMap::new();
        let mut queue = VecDeque::from([start.clone()]);
        let mut seen = HashSet::from([start.clone()]);
        let mut keys: Vec<&(String, String)> = self.transitions.keys().collect();
        keys.sort();
        while let Some(s) = queue.pop_front() {
            if s == target {
                let mut path = Vec::new();
                let mut cur = s;
                while let Some((p, a)) = prev.get(&cur) {
                    path.push(a.clone());
                    cur = p.clone();
                }
                path.reverse();
                return Some(path);
            }
            for (from, action) in keys.iter().filter(|(f, _)| *f == s) {
                for (next, p) in &self.transitions[&(from.clone(), action.clone())] {
                    if *p > 0.0 && seen.insert(next.clone()) {
                        prev.insert(next.clone(), (s.clone(), action.clone()));
                        queue.push_back(next.clone());
                    }
                }
            }
        }
        None
    }

    fn apply_effects(&self, action: &str, features: &mut BTreeMap<String, Value>) -> Result<(), SimError> {
        let Some(effects) = self.effects.get(action) else {
            return Ok(());
        };
        for e in effects {
            for target in &e.targets {
                let current = features.get(target).and_then(Value::as_f64);
                let (lo, hi) = self
                    .features
                    .get(target)
                    .map_or((f64::NEG_INFINITY, f64::INFINITY), |f| (f.range_start, f.range_end));
                let new = match &e.kind {
                    EffectKind::Set(v) => *v,
                    EffectKind::Convert => 1.0 - current.unwrap_or(lo.max(0.0)),
                    EffectKind::Shift(sign) => {
                        let step = if lo.is_finite() && hi.is_finite() { (hi - lo) / 10.0 } else { 1.0 };
                        (current.unwrap_or(lo) + sign * step).clamp(lo, hi)
                    }
                    EffectKind::Constant => continue,
                    EffectKind::Compute { expr, params, name } => {
                        eval_compiled(expr, features, params).map_err(|source| SimError::Expression {
                            context: name.clone(),
                            source,
                        })?
                    }
                };
                features.insert(target.clone(), Value::Number(new));
            }
        }
        Ok(())
    }
}

/// A simulated agent: the model it runs on plus its own mutable state.
#[derive(Debug, Clone)]
pub struct Simulation {
    model: Arc<ActivityModel>,
    state: SimState,
    cfg: SimConfig,
    max_steps: usize,
    rng: ChaCha8Rng,
}

impl Simulation {
    /// Starts from observed feature values; features not given start at the
    /// beginning of their range.
    pub fn new(model: Arc<ActivityModel>, features: BTreeMap<String, Value>, cfg: SimConfig) -> Result<Self, SimError> {
        let mut all = model.default_features();
        all.extend(features);
        let label = model
            .identify(&all)
            .ok_or_else(|| SimError::UnknownSituation("no state expression matches the observed features".into()))?
            .to_string();
        let s = &model.states[model.state_index[&label]];
        let state = SimState {
            features: all,
            reward: s.reward,
            is_goal: s.is_goal,
            is_final: s.is_final,
            label,
            step_index: 0,
        };
        Ok(Self::from_state(model, state, cfg))
    }

    /// Starts at the activity's initial state.
    pub fn at_initial(model: Arc<ActivityModel>, cfg: SimConfig) -> Result<Self, SimError> {
        let initial = model
            .initial_state()
            .ok_or_else(|| SimError::UnknownSituation(format!("activity {} has no initial state", model.name)))?
            .to_string();
        Self::at_state(model, &initial, cfg)
    }

    /// Starts at a named state, reconstructing its feature values by replaying
    /// the shortest transition path from the initial state.
    pub fn at_state(model: Arc<ActivityModel>, state: &str, cfg: SimConfig) -> Result<Self, SimError> {
        if !model.has_state(state) {
            return Err(SimError::UnknownSituation(format!("unknown state `{state}`")));
        }
        let path = model
            .path_to(state)
            .ok_or_else(|| SimError::UnknownSituation(format!("state `{state}` is unreachable")))?;
        let mut features = model.default_features();
        for a in &path {
            model.apply_effects(a, &mut features)?;
        }
        if model.identify(&features) != Some(state) {
            return Err(SimError::UnknownSituation(format!(
                "features of state `{state}` cannot be reconstructed"
            )));
        }
        let s = &model.states[model.state_index[state]];
        let st = SimState {
            features,
            label: state.to_string(),
            reward: s.reward,
            is_goal: s.is_goal,
            is_final: s.is_final,
            step_index: 0,
        };
        Ok(Self::from_state(model, st, cfg))
    }

    /// Resumes from an existing snapshot.
    pub fn from_state(model: Arc<ActivityModel>, state: SimState, cfg: SimConfig) -> Self {
        let max_steps = cfg.max_steps.unwrap_or(50 * model.state_count().max(1));
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Simulation {
            model,
            state,
            cfg,
            max_steps,
            rng,
        }
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn model(&self) -> &Arc<ActivityModel> {
        &self.model
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    fn precheck(&self) -> Result<(), SimError> {
        if self.state.is_final {
            return Err(SimError::Terminated);
        }
        if self.state.step_index >= self.max_steps {
            return Err(SimError::MaxSteps(self.max_steps));
        }
        Ok(())
    }

    /// Records a rejected action: state unchanged, reward lowered.
    pub fn penalize(&mut self) -> Result<SimState, SimError> {
        self.precheck()?;
        self.state.reward -= self.cfg.reward_increment;
        self.state.step_index += 1;
        Ok(self.state.clone())
    }

    /// Performs `action` and returns the resulting snapshot.
    pub fn step(&mut self, action: &str) -> Result<SimState, SimError> {
        self.precheck()?;
        if !self.model.has_action(action) {
            return Err(SimError::UnknownAction(action.to_string()));
        }
        let candidates = self.model.transitions_from(&self.state.label, action);
        if candidates.is_empty() {
            return self.penalize();
        }
        let target = if self.cfg.stochastic {
            let total: f64 = candidates.iter().map(|c| c.1).sum();
            let mut u = self.rng.gen::<f64>() * total;
            let mut pick = &candidates[candidates.len() - 1].0;
            for (name, p) in candidates {
                if u < *p {
                    pick = name;
                    break;
                }
                u -= p;
            }
            pick.clone()
        } else {
            let mut best = &candidates[0];
            for c in &candidates[1..] {
                if c.1 > best.1 {
                    best = c;
                }
            }
            best.0.clone()
        };

        let model = Arc::clone(&self.model);
        let mut features = self.state.features.clone();
        model.apply_effects(action, &mut features)?;

        let label = match model.state_index.get(&target) {
            Some(&ti) if model.holds(ti, &features) => {
                let mut label = target;
                let mut visited = HashSet::from([label.clone()]);
                loop {
                    let next = model
                        .transitions_from(&label, action)
                        .iter()
                        .filter(|(n, p)| *p > 0.0 && !visited.contains(n))
                        .find(|(n, _)| model.holds(model.state_index[n], &features));
                    match next {
                        Some((n, _)) => {
                            visited.insert(n.clone());
                            label = n.clone();
                        }
                        None => break,
                    }
                }
                label
            }
            _ => model
                .identify(&features)
                .map_or_else(|| UNKNOWN_STATE.to_string(), str::to_string),
        };

        let reached = model.state_index.get(&label).map(|&i| &model.states[i]);
        self.state.reward = match reached {
            Some(s) if !model.sequential => s.reward,
            _ => self.state.reward + self.cfg.reward_increment,
        };
        self.state.is_goal = reached.is_some_and(|s| s.is_goal);
        self.state.is_final = reached.is_some_and(|s| s.is_final);
        self.state.features = features;
        self.state.label = label;
        self.state.step_index += 1;
        Ok(self.state.clone())
    }
}

/// Wraps a simulation as a step closure. The state label is re-derived from
/// the snapshot's features; reward and step index are kept.
pub fn make_simulation(
    model: Arc<ActivityModel>,
    initial: SimState,
    cfg: SimConfig,
) -> Result<impl FnMut(&str) -> Result<SimState, SimError> + Send, SimError> {
    let SimState {
        features,
        reward,
        step_index,
        ..
    } = initial;
    let mut sim = Simulation::new(model, features, cfg)?;
    sim.state.reward = reward;
    sim.state.step_index = step_index;
    Ok(move |action: &str| sim.step(action))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{Action, Activity, CommunicationType, Effect, Entity, State, Transition};

    fn flag_state(name: &str, expr: &str, feature: &str, initial: bool, fin: bool) -> Entity {
        State {
            name: name.into(),
            is_initial: initial,
            is_final: fin,
            is_goal: fin,
            reward: 0.0,
            expression: expr.into(),
            observation_features: vec![feature.into()],
            actions: vec![],
        }
        .into()
    }

    /// A -go-> {B 0.7, C 0.3}; both B and C are final.
    fn branching() -> KnowledgeGraph {
        let mut e: Vec<Entity> = vec![
            Activity {
                name: "Branch".into(),
                is_sequential: false,
                number_of_actors: 1,
                communication_type: CommunicationType::Asynchronous,
                states: vec!["A".into(), "B".into(), "C".into()],
                actions: vec!["go".into()],
                observation_features: vec!["x".into()],
            }
            .into(),
            flag_state("A", "x == 0", "x", true, false),
            flag_state("B", "x == 1", "x", false, true),
            flag_state("C", "x == 1", "x", false, true),
            crate::kg::ObservationFeature::nominal_flag("x").into(),
            Effect {
                name: "setX".into(),
                target_features: vec!["x".into()],
                impact_type: ImpactType::On,
                equation: None,
            }
            .into(),
            Action {
                name: "go".into(),
                effects: vec!["setX".into()],
                transitions: vec![],
                duration: None,
                frequency: None,
            }
            .into(),
        ];
        for (n, next, p) in [("t1", "B", 0.7), ("t2", "C", 0.3)] {
            e.push(
                Transition {
                    name: n.into(),
                    previous_state: "A".into(),
                    next_state: next.into(),
                    action: "go".into(),
                    probability: p,
                }
                .into(),
            );
        }
        KnowledgeGraph::from_entities(e, &[]).unwrap()
    }

    #[test]
    fn deterministic_mode_takes_most_likely_transition() {
        let model = Arc::new(ActivityModel::new(&branching(), "Branch").unwrap());
        let mut sim = Simulation::at_initial(model, SimConfig::default()).unwrap();
        let s = sim.step("go").unwrap();
        assert_eq!(s.label, "B");
        assert!(s.is_final);
        assert_eq!(sim.step("go"), Err(SimError::Terminated));
    }

    #[test]
    fn stochastic_frequencies() {
        let model = Arc::new(ActivityModel::new(&branching(), "Branch").unwrap());
        let cfg = SimConfig {
            stochastic: true,
            seed: 7,
            ..SimConfig::default()
        };
        let base = Simulation::at_initial(model, cfg).unwrap();
        let mut sim = base.clone();
        let mut b = 0;
        let n = 10_000;
        for _ in 0..n {
            let mut agent = Simulation::from_state(Arc::clone(sim.model()), base.state().clone(), sim.config().clone());
            agent.rng = sim.rng.clone();
            if agent.step("go").unwrap().label == "B" {
                b += 1;
            }
            sim.rng = agent.rng;
        }
        let freq = b as f64 / n as f64;
        assert!((freq - 0.7).abs() < 0.02, "{freq}");
    }

    #[test]
    fn unknown_action_is_an_error() {
        let model = Arc::new(ActivityModel::new(&branching(), "Branch").unwrap());
        let mut sim = Simulation::at_initial(model, SimConfig::default()).unwrap();
        assert_eq!(sim.step("fly"), Err(SimError::UnknownAction("fly".into())));
    }

    #[test]
    fn contradictory_features_are_rejected() {
        let model = Arc::new(ActivityModel::new(&branching(), "Branch").unwrap());
        let features = BTreeMap::from([("x".to_string(), Value::Number(0.5))]);
        assert!(matches!(
            Simulation::new(model, features, SimConfig::default()),
            Err(SimError::UnknownSituation(_))
        ));
    }

    #[test]
    fn equations_bind_parameters_before_features() {
        let features = BTreeMap::from([("x".to_string(), Value::Number(3.0))]);
        let params = BTreeMap::from([("a".to_string(), 2.0)]);
        assert_eq!(evaluate_equation("a * x", &features, &params), Ok(6.0));
        assert_eq!(evaluate_equation("x + 0", &features, &params), Ok(3.0));
        assert_eq!(
            evaluate_equation("y", &features, &params),
            Err(ExprError::UnboundSymbol("y".into()))
        );
    }
}
