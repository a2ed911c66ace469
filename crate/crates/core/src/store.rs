//! A directory of activity graphs (`.ttl` or `.json`, one file per graph)
//! with compiled simulation models.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use crate::expr::Value;
use crate::kg::{json, turtle, KgError, KnowledgeGraph};
use crate::sim::{ActivityModel, SimConfig, SimError, Simulation};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Graph {
        path: String,
        #[source]
        source: KgError,
    },
    #[error("store {0} contains no activities")]
    Empty(String),
    #[error("activity `{0}` is defined more than once")]
    DuplicateActivity(String),
    #[error("unknown activity `{0}`")]
    UnknownActivity(String),
    #[error("unknown state `{0}`")]
    UnknownState(String),
    #[error(transparent)]
    Simulation(#[from] SimError),
}

impl StoreError {
    pub fn is_unknown_situation(&self) -> bool {
        matches!(
            self,
            StoreError::UnknownState(_) | StoreError::Simulation(SimError::UnknownSituation(_))
        )
    }
}

#[derive(Debug, Clone)]
pub struct GraphStore {
    graphs: Vec<KnowledgeGraph>,
    models: BTreeMap<String, Arc<ActivityModel>>,
}

impl GraphStore {
    pub fn new(graphs: Vec<KnowledgeGraph>) -> Result<Self, StoreError> {
        let mut models = BTreeMap::new();
        for g in &graphs {
            for a in g.activities() {
                let model = Arc::new(ActivityModel::new(g, &a.name)?);
                if models.insert(a.name.clone(), model).is_some() {
                    return Err(StoreError::DuplicateActivity(a.name.clone()));
                }
            }
        }
        Ok(GraphStore { graphs, models })
    }

    /// Loads every `.ttl` and `.json` file of `dir` in file-name order.
    pub fn load(dir: &Path) -> Result<Self, StoreError> {
        let io = |path: &Path| {
            let path = path.display().to_string();
            move |source| StoreError::Io { path, source }
        };
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(io(dir))?
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.is_file() && matches!(p.extension().and_then(|e| e.to_str()), Some("ttl" | "json")))
            .collect();
        paths.sort();
        let mut graphs = Vec::with_capacity(paths.len());
        for p in &paths {
            let text = fs::read_to_string(p).map_err(io(p))?;
            let parsed = if p.extension().is_some_and(|e| e == "json") {
                json::from_json(&text)
            } else {
                turtle::parse_turtle(&text)
            };
            graphs.push(parsed.map_err(|source| StoreError::Graph {
                path: p.display().to_string(),
                source,
            })?);
        }
        let store = Self::new(graphs)?;
        if store.models.is_empty() {
            return Err(StoreError::Empty(dir.display().to_string()));
        }
        Ok(store)
    }

    /// Writes each graph as `<first activity>.ttl`; returns the paths written.
    pub fn save(dir: &Path, graphs: &[KnowledgeGraph]) -> Result<Vec<PathBuf>, StoreError> {
        let io = |path: &Path| {
            let path = path.display().to_string();
            move |source| StoreError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;
        let mut written = Vec::with_capacity(graphs.len());
        for (i, g) in graphs.iter().enumerate() {
            let stem = g.activities().next().map_or_else(|| format!("graph_{i}"), |a| a.name.clone());
            let path = dir.join(format!("{stem}.ttl"));
            fs::write(&path, turtle::write_turtle(g)).map_err(io(&path))?;
            written.push(path);
        }
        Ok(written)
    }

    pub fn graphs(&self) -> &[KnowledgeGraph] {
        &self.graphs
    }

    pub fn activity_names(&self) -> impl Iterator<Item = &str> {
        self.models.keys().map(String::as_str)
    }

    pub fn models(&self) -> impl Iterator<Item = &Arc<ActivityModel>> {
        self.models.values()
    }

    pub fn model(&self, activity: &str) -> Result<&Arc<ActivityModel>, StoreError> {
        self.models
            .get(activity)
            .ok_or_else(|| StoreError::UnknownActivity(activity.to_string()))
    }

    /// A simulation positioned at `state`, in `activity` if given or else in
    /// the first activity (by name) that has the state.
    pub fn simulation_at_state(
        &self,
        state: &str,
        activity: Option<&str>,
        cfg: SimConfig,
    ) -> Result<Simulation, StoreError> {
        let model = match activity {
            Some(a) => self.model(a)?,
            None => self
                .models
                .values()
                .find(|m| m.has_state(state))
                .ok_or_else(|| StoreError::UnknownState(state.to_string()))?,
        };
        if !model.has_state(state) {
            return Err(StoreError::UnknownState(state.to_string()));
        }
        Ok(Simulation::at_state(Arc::clone(model), state, cfg)?)
    }

    /// A simulation in the state identified by `features`. Without an explicit
    /// activity, activities whose features equal the request's are tried
    /// before those that merely include them; the first that identifies a
    /// state wins.
    pub fn simulation_from_features(
        &self,
        features: &BTreeMap<String, Value>,
        activity: Option<&str>,
        cfg: SimConfig,
    ) -> Result<Simulation, StoreError> {
        if let Some(a) = activity {
            return Ok(Simulation::new(Arc::clone(self.model(a)?), features.clone(), cfg)?);
        }
        let requested: BTreeSet<&str> = features.keys().map(String::as_str).collect();
        let mut exact = Vec::new();
        let mut covering = Vec::new();
        for m in self.models.values() {
            let own: BTreeSet<&str> = m.feature_names().collect();
            if own == requested {
                exact.push(m);
            } else if requested.is_subset(&own) {
                covering.push(m);
            }
        }
        for m in exact.into_iter().chain(covering) {
            match Simulation::new(Arc::clone(m), features.clone(), cfg.clone()) {
                Ok(sim) => return Ok(sim),
                Err(SimError::UnknownSituation(_)) => continue,
                Err(e) => return Err(e.into()),
            }
        }
        Err(StoreError::UnknownState("no activity identifies a state from these features".into()))
    }
}
