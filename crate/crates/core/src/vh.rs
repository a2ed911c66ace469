//! Virtual-Home style activity scripts and their MDP graphs.
//!
//! A script is a name line, one or more description lines, a blank line and
//! then one `[Verb] <object> (index)` line per step.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::kg::{
    Action, Activity, CommunicationType, Effect, Entity, ImpactType, KgError, KnowledgeGraph, ObservationFeature,
    State, Transition,
};

#[derive(Debug, Error)]
pub enum VhError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("script has no steps")]
    NoSteps,
    #[error("script is empty")]
    Empty,
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Graph(#[from] KgError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub verb: String,
    pub object: String,
    pub index: u32,
}

impl Step {
    pub fn new(verb: impl Into<String>, object: impl Into<String>, index: u32) -> Self {
        Step {
            verb: verb.into(),
            object: object.into(),
            index,
        }
    }

    /// `Verb_object_index`, the base action name for this step.
    pub fn action_name(&self) -> String {
        format!("{}_{}_{}", sanitize(&self.verb), sanitize(&self.object), self.index)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VhScript {
    pub name: String,
    pub description: String,
    pub steps: Vec<Step>,
}

/// Replaces every character that cannot appear in an entity name with `_`.
pub fn sanitize(text: &str) -> String {
    text.trim()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' })
        .collect()
}

impl VhScript {
    /// The activity identifier (`Watch TV` becomes `Watch_TV`).
    pub fn activity_name(&self) -> String {
        sanitize(&self.name)
    }

    /// Action names in step order; repeated steps get `_2`, `_3`, ... suffixes.
    pub fn action_names(&self) -> Vec<String> {
        let mut seen: HashMap<String, usize> = HashMap::new();
        let mut taken: HashSet<String> = HashSet::new();
        let mut out = Vec::with_capacity(self.steps.len());
        for step in &self.steps {
            let base = step.action_name();
            let count = seen.entry(base.clone()).or_insert(0);
            *count += 1;
            let mut k = *count;
            let mut name = if k == 1 { base.clone() } else { format!("{base}_{k}") };
            while taken.contains(&name) {
                k += 1;
                name = format!("{base}_{k}");
            }
            *count = k;
            taken.insert(name.clone());
            out.push(name);
        }
        out
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

fn parse_step(line: &str, line_no: usize) -> Result<Step, VhError> {
    let err = |message: &str| VhError::Syntax {
        line: line_no,
        message: format!("{message} in step `{line}`"),
    };
    let rest = line.trim();
    let rest = rest.strip_prefix('[').ok_or_else(|| err("expected `[Verb]`"))?;
    let close = rest.find(']').ok_or_else(|| err("missing `]` after verb"))?;
    let verb = rest[..close].trim();
    if verb.is_empty() {
        return Err(err("empty verb"));
    }
    let rest = rest[close + 1..].trim_start();
    let rest = rest.strip_prefix('<').ok_or_else(|| err("expected `<object>`"))?;
    let close = rest.find('>').ok_or_else(|| err("missing `>` after object"))?;
    let object = rest[..close].trim();
    if object.is_empty() {
        return Err(err("empty object"));
    }
    let rest = rest[close + 1..].trim_start();
    let rest = rest.strip_prefix('(').ok_or_else(|| err("expected `(index)`"))?;
    let close = rest.find(')').ok_or_else(|| err("missing `)` after index"))?;
    let index: u32 = rest[..close]
        .trim()
        .parse()
        .map_err(|_| err("index is not a positive integer"))?;
    if index == 0 {
        return Err(err("index must be positive"));
    }
    if !rest[close + 1..].trim().is_empty() {
        return Err(err("unexpected text after index"));
    }
    Ok(Step::new(verb, object, index))
}

pub fn parse_script(text: &str) -> Result<VhScript, VhError> {
    let lines: Vec<(usize, &str)> = text.lines().enumerate().map(|(i, l)| (i + 1, l)).collect();
    let mut it = lines.iter().skip_while(|(_, l)| l.trim().is_empty()).peekable();
    let name = match it.next() {
        Some((_, l)) => l.trim().to_string(),
        None => return Err(VhError::Empty),
    };
    let mut description = Vec::new();
    while let Some((_, l)) = it.peek() {
        let t = l.trim();
        if t.is_empty() || t.starts_with('[') {
            break;
        }
        description.push(t);
        it.next();
    }
    let mut steps = Vec::new();
    for (no, l) in it {
        if l.trim().is_empty() {
            continue;
        }
        steps.push(parse_step(l, *no)?);
    }
    if steps.is_empty() {
        return Err(VhError::NoSteps);
    }
    Ok(VhScript {
        name,
        description: description.join(" "),
        steps,
    })
}

pub fn initial_state_name(activity: &str) -> String {
    format!("InitialState_{activity}")
}

pub fn final_state_name(activity: &str) -> String {
    format!("FinalState_{activity}")
}

pub fn done_state_name(action: &str) -> String {
    format!("{action}_Done")
}

pub fn feature_name(action: &str) -> String {
    format!("Is{action}")
}

/// Builds the sequential activity graph: a chain
/// `Initial -a1-> a1_Done -a2-> ... -an-> an_Done -an-> Final`.
pub fn script_to_kg(script: &VhScript) -> Result<KnowledgeGraph, VhError> {
    if script.steps.is_empty() {
        return Err(VhError::NoSteps);
    }
    let activity = script.activity_name();
    let actions = script.action_names();
    let n = actions.len();
    let initial = initial_state_name(&activity);
    let final_state = final_state_name(&activity);
    let done: Vec<String> = actions.iter().map(|a| done_state_name(a)).collect();
    let features: Vec<String> = actions.iter().map(|a| feature_name(a)).collect();

    // (previous, action index, next)
    let mut chain: Vec<(String, usize, String)> = Vec::with_capacity(n + 1);
    chain.push((initial.clone(), 0, done[0].clone()));
    for k in 1..n {
        chain.push((done[k - 1].clone(), k, done[k].clone()));
    }
    chain.push((done[n - 1].clone(), n - 1, final_state.clone()));
    let transition_names: Vec<String> = (0..chain.len()).map(|k| format!("{activity}_transition_{k}")).collect();

    let mut entities: Vec<Entity> = Vec::new();
    let mut states = done.clone();
    states.push(initial.clone());
    states.push(final_state.clone());
    entities.push(
        Activity {
            name: activity.clone(),
            is_sequential: true,
            number_of_actors: 1,
            communication_type: CommunicationType::Asynchronous,
            states,
            actions: actions.clone(),
            observation_features: features.clone(),
        }
        .into(),
    );
    for k in 0..n {
        entities.push(
            State {
                name: done[k].clone(),
                is_initial: false,
                is_final: false,
                is_goal: false,
                reward: 0.0,
                expression: format!("{} == 1", features[k]),
                observation_features: vec![features[k].clone()],
                actions: vec![actions[k].clone()],
            }
            .into(),
        );
        entities.push(ObservationFeature::nominal_flag(features[k].clone()).into());
        entities.push(
            Effect {
                name: format!("Set{}", actions[k]),
                target_features: vec![features[k].clone()],
                impact_type: ImpactType::On,
                equation: None,
            }
            .into(),
        );
        let transitions = chain
            .iter()
            .zip(&transition_names)
            .filter(|((_, a, _), _)| *a == k)
            .map(|(_, t)| t.clone())
            .collect();
        entities.push(
            Action {
                name: actions[k].clone(),
                effects: vec![format!("Set{}", actions[k])],
                transitions,
                duration: None,
                frequency: None,
            }
            .into(),
        );
    }
    entities.push(
        State {
            name: initial,
            is_initial: true,
            is_final: false,
            is_goal: false,
            reward: 0.0,
            expression: format!("{} == 0", features[0]),
            observation_features: vec![features[0].clone()],
            actions: Vec::new(),
        }
        .into(),
    );
    entities.push(
        State {
            name: final_state,
            is_initial: false,
            is_final: true,
            is_goal: true,
            reward: 0.0,
            expression: format!("{} == 1", features[n - 1]),
            observation_features: vec![features[n - 1].clone()],
            actions: vec![actions[n - 1].clone()],
        }
        .into(),
    );
    for ((prev, a, next), name) in chain.into_iter().zip(transition_names) {
        entities.push(
            Transition {
                name,
                previous_state: prev,
                next_state: next,
                action: actions[a].clone(),
                probability: 1.0,
            }
            .into(),
        );
    }
    Ok(KnowledgeGraph::from_entities(entities, &[])?)
}

#[derive(Debug, Clone, Default)]
pub struct VhCorpus {
    /// Scripts in file-name order, renamed so activity names are unique.
    pub scripts: Vec<VhScript>,
    /// Source file of each script.
    pub sources: Vec<PathBuf>,
    /// Files that could not be read or parsed.
    pub skipped: Vec<(PathBuf, String)>,
}

impl VhCorpus {
    /// Builds a corpus from already parsed scripts, de-duplicating names.
    pub fn from_scripts(scripts: Vec<VhScript>) -> Self {
        let sources = vec![PathBuf::new(); scripts.len()];
        let mut c = VhCorpus {
            scripts,
            sources,
            skipped: Vec::new(),
        };
        c.deduplicate_names();
        c
    }

    /// Repeated activity names become `Name_1`, `Name_2`, ... in corpus order.
    fn deduplicate_names(&mut self) {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for s in &self.scripts {
            *counts.entry(s.activity_name()).or_default() += 1;
        }
        let mut used: HashSet<String> = counts.iter().filter(|(_, c)| **c == 1).map(|(n, _)| n.clone()).collect();
        let mut next: HashMap<String, usize> = HashMap::new();
        for s in &mut self.scripts {
            let base = s.activity_name();
            if counts[&base] == 1 {
                s.name = base;
                continue;
            }
            let k = next.entry(base.clone()).or_insert(0);
            loop {
                *k += 1;
                let candidate = format!("{base}_{k}");
                if used.insert(candidate.clone()) {
                    s.name = candidate;
                    break;
                }
            }
        }
    }

    pub fn len(&self) -> usize {
        self.scripts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scripts.is_empty()
    }

    /// Number of scripts per sequence length.
    pub fn length_histogram(&self) -> BTreeMap<usize, usize> {
        let mut h = BTreeMap::new();
        for s in &self.scripts {
            *h.entry(s.len()).or_default() += 1;
        }
        h
    }

    pub fn graphs(&self) -> Result<Vec<KnowledgeGraph>, VhError> {
        self.scripts.par_iter().map(script_to_kg).collect()
    }
}

/// Loads every regular file of `dir` (sorted by file name) as a script.
/// Files that cannot be read or parsed are skipped with a warning.
pub fn load_corpus(dir: &Path) -> Result<VhCorpus, VhError> {
    let io = |source| VhError::Io {
        path: dir.display().to_string(),
        source,
    };
    let mut paths = Vec::new();
    for entry in fs::read_dir(dir).map_err(io)? {
        let entry = entry.map_err(io)?;
        if entry.file_type().map_err(io)?.is_file() {
            paths.push(entry.path());
        }
    }
    paths.sort();
    let parsed: Vec<Result<VhScript, String>> = paths
        .par_iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(|e| e.to_string())?;
            parse_script(&text).map_err(|e| e.to_string())
        })
        .collect();
    let mut corpus = VhCorpus::default();
    for (path, r) in paths.into_iter().zip(parsed) {
        match r {
            Ok(s) => {
                corpus.scripts.push(s);
                corpus.sources.push(path);
            }
            Err(e) => {
                log::warn!("skipping {}: {e}", path.display());
                corpus.skipped.push((path, e));
            }
        }
    }
    corpus.deduplicate_names();
    Ok(corpus)
}
