//! Ensemble policy composition: from the current state, try every action
//! near it in embedding space in parallel, keep the most rewarding outcome,
//! and widen the search radius when nothing improves.

use std::cmp::Ordering;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::{EmbedError, EmbeddingSpace};
use crate::sim::{ActivityModel, SimError, SimState, Simulation};

#[derive(Debug, Error)]
pub enum ComposeError {
    #[error("unknown situation: {0}")]
    UnknownSituation(String),
    #[error("no reward-improving action from `{state}` within radius {radius_cap}")]
    RadiusCapExceeded { state: String, radius_cap: f64 },
    #[error("step budget of {0} exhausted")]
    BudgetExhausted(usize),
    #[error("state `{0}` is final but not a goal")]
    DeadEnd(String),
    #[error(transparent)]
    Embedding(EmbedError),
    #[error(transparent)]
    Simulation(#[from] SimError),
}

impl ComposeError {
    /// Whether the request was rejected because the situation is not known
    /// to the model (as opposed to a search failure).
    pub fn is_unknown_situation(&self) -> bool {
        matches!(
            self,
            ComposeError::UnknownSituation(_) | ComposeError::Simulation(SimError::UnknownSituation(_))
        )
    }
}

impl From<EmbedError> for ComposeError {
    fn from(e: EmbedError) -> Self {
        match e {
            EmbedError::UnknownSituation(s) => ComposeError::UnknownSituation(format!("no embedding for state `{s}`")),
            other => ComposeError::Embedding(other),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComposerConfig {
    /// Initial search radius.
    pub max_distance: f64,
    pub radius_step: f64,
    pub radius_cap: f64,
    /// Composition iterations allowed; defaults to 50 × number of states.
    pub step_budget: Option<usize>,
}

impl Default for ComposerConfig {
    fn default() -> Self {
        ComposerConfig {
            max_distance: 0.25,
            radius_step: 0.25,
            radius_cap: 2.0,
            step_budget: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRow {
    pub rank: usize,
    pub actions: Vec<String>,
    pub rewards: Vec<f64>,
    pub cumulative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyTable {
    pub policies: Vec<PolicyRow>,
}

impl PolicyTable {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("policy tables always serialise")
    }

    pub fn best(&self) -> Option<&PolicyRow> {
        self.policies.first()
    }
}

/// What one ensemble agent produced.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentOutcome {
    pub action: String,
    pub distance: f64,
    /// `None` when the agent could not act (e.g. the step limit was hit).
    pub reward: Option<f64>,
    pub state: Option<String>,
    pub is_goal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceStep {
    pub radius: f64,
    pub from_state: String,
    pub outcomes: Vec<AgentOutcome>,
    pub chosen: Option<String>,
    pub committed: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct CompositionTrace {
    pub steps: Vec<TraceStep>,
    /// Agent actions, over all iterations, that lowered the reward.
    pub wrong_decisions: usize,
    pub cumulative_reward: f64,
}

impl CompositionTrace {
    /// Composition iterations, including the ones that only widened the radius.
    pub fn step_count(&self) -> usize {
        self.steps.len()
    }

    /// Radii at which an action was committed.
    pub fn commit_radii(&self) -> Vec<f64> {
        self.steps.iter().filter(|s| s.committed).map(|s| s.radius).collect()
    }

    /// Every radius tried, in order.
    pub fn radii(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.radius).collect()
    }
}

/// Highest reward first, then smallest distance, then smallest action name.
fn outcome_order(a: &AgentOutcome, b: &AgentOutcome) -> Ordering {
    let ra = a.reward.unwrap_or(f64::NEG_INFINITY);
    let rb = b.reward.unwrap_or(f64::NEG_INFINITY);
    rb.total_cmp(&ra)
        .then_with(|| a.distance.total_cmp(&b.distance))
        .then_with(|| a.action.cmp(&b.action))
}

/// The best outcome among those that produced a reward.
pub fn select_best(outcomes: &[AgentOutcome]) -> Option<&AgentOutcome> {
    outcomes
        .iter()
        .filter(|o| o.reward.is_some())
        .min_by(|a, b| outcome_order(a, b))
}

/// Composes a policy starting from `start`.
pub fn compose(
    start: &Simulation,
    space: &EmbeddingSpace,
    cfg: &ComposerConfig,
) -> Result<(PolicyTable, CompositionTrace), ComposeError> {
    let model: &Arc<ActivityModel> = start.model();
    let budget = cfg.step_budget.unwrap_or(50 * model.state_count().max(1));
    let mut current = start.clone();
    let mut expansions = 0usize;
    let mut actions = Vec::new();
    let mut rewards = Vec::new();
    let mut alternatives: Vec<(Vec<String>, Vec<f64>)> = Vec::new();
    let mut trace = CompositionTrace::default();

    while !current.state().is_goal {
        if current.state().is_final {
            return Err(ComposeError::DeadEnd(current.state().label.clone()));
        }
        if trace.steps.len() >= budget {
            return Err(ComposeError::BudgetExhausted(budget));
        }
        let radius = cfg.max_distance + expansions as f64 * cfg.radius_step;
        let here = current.state().clone();
        let candidates = space.find_closest_actions(&here.label, radius)?;

        let agents: Vec<(AgentOutcome, Option<Simulation>)> = candidates
            .par_iter()
            .map(|(action, distance)| run_agent(&current, action, *distance))
            .collect();
        let outcomes: Vec<AgentOutcome> = agents.iter().map(|(o, _)| o.clone()).collect();
        let best = select_best(&outcomes).cloned();
        let improved = best
            .as_ref()
            .and_then(|b| b.reward)
            .is_some_and(|r| r > here.reward);

        trace.wrong_decisions += outcomes
            .iter()
            .filter(|o| o.reward.is_some_and(|r| r < here.reward))
            .count();
        let mut step = TraceStep {
            radius,
            from_state: here.label.clone(),
            outcomes,
            chosen: best.as_ref().map(|b| b.action.clone()),
            committed: improved,
        };
        if !improved {
            trace.steps.push(step);
            expansions += 1;
            if cfg.max_distance + expansions as f64 * cfg.radius_step > cfg.radius_cap + 1e-9 {
                return Err(ComposeError::RadiusCapExceeded {
                    state: here.label,
                    radius_cap: cfg.radius_cap,
                });
            }
            continue;
        }

        let best = best.expect("an improving outcome exists");
        for (o, _) in &agents {
            if o.action != best.action && o.is_goal && o.reward.is_some_and(|r| r > here.reward) {
                let mut a = actions.clone();
                a.push(o.action.clone());
                let mut r = rewards.clone();
                r.push(o.reward.unwrap_or_default());
                alternatives.push((a, r));
            }
        }
        let next = agents
            .into_iter()
            .find(|(o, _)| o.action == best.action)
            .and_then(|(_, sim)| sim)
            .expect("the chosen agent has a simulation");
        let reward = next.state().reward;
        actions.push(best.action.clone());
        rewards.push(reward);
        trace.cumulative_reward += reward;
        step.committed = true;
        trace.steps.push(step);
        current = next;
        expansions = 0;
    }

    let mut rows = vec![(actions, rewards)];
    rows.extend(alternatives);
    let mut rows: Vec<PolicyRow> = rows
        .into_iter()
        .map(|(actions, rewards)| PolicyRow {
            rank: 0,
            cumulative: rewards.iter().sum(),
            actions,
            rewards,
        })
        .collect();
    // stable sort keeps the greedy path ahead of equally rewarding alternatives
    rows.sort_by(|a, b| b.cumulative.total_cmp(&a.cumulative));
    for (i, r) in rows.iter_mut().enumerate() {
        r.rank = i + 1;
    }
    Ok((PolicyTable { policies: rows }, trace))
}

fn run_agent(current: &Simulation, action: &str, distance: f64) -> (AgentOutcome, Option<Simulation>) {
    let mut agent = current.clone();
    let result = if agent.model().has_action(action) {
        agent.step(action)
    } else {
        // actions of other activities cannot succeed here
        agent.penalize()
    };
    match result {
        Ok(s) => (outcome(action, distance, Some(&s)), Some(agent)),
        Err(e) => {
            log::debug!("agent for {action} failed: {e}");
            (outcome(action, distance, None), None)
        }
    }
}

fn outcome(action: &str, distance: f64, s: Option<&SimState>) -> AgentOutcome {
    AgentOutcome {
        action: action.to_string(),
        distance,
        reward: s.map(|s| s.reward),
        state: s.map(|s| s.label.clone()),
        is_goal: s.is_some_and(|s| s.is_goal),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcome(action: &str, reward: f64, distance: f64) -> AgentOutcome {
        AgentOutcome {
            action: action.into(),
            distance,
            reward: Some(reward),
            state: None,
            is_goal: false,
        }
    }

    #[test]
    fn best_by_reward() {
        let v = vec![outcome("a", 0.25, 0.1), outcome("b", -0.25, 0.1), outcome("c", 0.5, 0.9)];
        assert_eq!(select_best(&v).unwrap().action, "c");
    }

    #[test]
    fn ties_by_distance_then_name() {
        let v = vec![outcome("a", 0.5, 0.4), outcome("b", 0.5, 0.3)];
        assert_eq!(select_best(&v).unwrap().action, "b");
        let v = vec![outcome("b", 0.5, 0.3), outcome("a", 0.5, 0.3)];
        assert_eq!(select_best(&v).unwrap().action, "a");
    }

    #[test]
    fn empty_input_has_no_best() {
        assert!(select_best(&[]).is_none());
    }
}
