use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::kg::KnowledgeGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum EntityKind {
    Activity,
    State,
    Action,
}

impl EntityKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EntityKind::Activity => "ACTIVITY",
            EntityKind::State => "STATE",
            EntityKind::Action => "ACTION",
        }
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntityKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ACTIVITY" => Ok(EntityKind::Activity),
            "STATE" => Ok(EntityKind::State),
            "ACTION" => Ok(EntityKind::Action),
            other => Err(format!("unknown entity kind `{other}`")),
        }
    }
}

/// Dense, 0-based indices for every activity, state and action.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Vocabulary {
    names: Vec<String>,
    kinds: Vec<EntityKind>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `name` unless already present; returns its index.
    pub fn insert(&mut self, name: &str, kind: EntityKind) -> usize {
        if let Some(&i) = self.index.get(name) {
            if self.kinds[i] != kind {
                log::warn!("`{name}` is both {} and {kind}; keeping {}", self.kinds[i], self.kinds[i]);
            }
            return i;
        }
        let i = self.names.len();
        self.names.push(name.to_string());
        self.kinds.push(kind);
        self.index.insert(name.to_string(), i);
        i
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn kind(&self, i: usize) -> EntityKind {
        self.kinds[i]
    }

    pub fn kind_of(&self, name: &str) -> Option<EntityKind> {
        self.index_of(name).map(|i| self.kinds[i])
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn indices_of_kind(&self, kind: EntityKind) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.kinds[i] == kind).collect()
    }
}

/// Indexes graphs in order: per activity (by name) the activity, its states
/// and its actions, then any remaining states and actions by name.
pub fn build_vocabulary(graphs: &[KnowledgeGraph]) -> Vocabulary {
    let mut v = Vocabulary::new();
    for g in graphs {
        for a in g.activities() {
            v.insert(&a.name, EntityKind::Activity);
            for s in &a.states {
                v.insert(s, EntityKind::State);
            }
            for x in &a.actions {
                v.insert(x, EntityKind::Action);
            }
        }
        let states: BTreeSet<&str> = g.states().map(|s| s.name.as_str()).collect();
        for s in states {
            v.insert(s, EntityKind::State);
        }
        let actions: BTreeSet<&str> = g.actions().map(|a| a.name.as_str()).collect();
        for a in actions {
            v.insert(a, EntityKind::Action);
        }
    }
    v
}
