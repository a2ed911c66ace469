//! Deep Q-network baseline with experience replay, trained per activity.

use std::collections::{HashMap, HashSet, VecDeque};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::sim::{ActivityModel, SimConfig, SimError, Simulation, UNKNOWN_STATE};

#[derive(Debug, Error)]
pub enum DqnError {
    #[error("activity has no states or no actions")]
    EmptyActivity,
    #[error("no final state is reachable from the initial state")]
    Unreachable,
    #[error("training diverged at step {0}")]
    Diverged(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Simulation(#[from] SimError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DqnConfig {
    pub learning_rate: f64,
    /// Probability of a uniformly random action during training.
    pub epsilon: f64,
    pub gamma: f64,
    pub episode_cap: usize,
    pub hidden_units: usize,
    pub replay_capacity: usize,
    pub replay_batch: usize,
    /// Defaults to 50 × the optimal sequence length.
    pub max_steps_per_episode: Option<usize>,
    /// Stop as soon as a greedy evaluation succeeds.
    pub stop_on_success: bool,
    pub seed: u64,
}

impl Default for DqnConfig {
    fn default() -> Self {
        DqnConfig {
            learning_rate: 0.05,
            epsilon: 0.9,
            gamma: 0.9,
            episode_cap: 100,
            hidden_units: 100,
            replay_capacity: 5000,
            replay_batch: 64,
            max_steps_per_episode: None,
            stop_on_success: true,
            seed: 0,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<(), DqnError> {
        let bad = |m: &str| Err(DqnError::Config(m.into()));
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad("epsilon must lie in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1)");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning rate must be positive");
        }
        if self.hidden_units == 0 || self.replay_capacity == 0 || self.replay_batch == 0 {
            return bad("hidden units, replay capacity and replay batch must be positive");
        }
        Ok(())
    }
}

/// Fixed-capacity ring buffer; once full, new items overwrite the oldest.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    items: Vec<T>,
    next: usize,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
        }
    }

    pub fn push(&mut self, item: T) {
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[self.next] = item;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Index of a uniformly drawn stored item.
    pub fn sample_index(&self, rng: &mut impl Rng) -> usize {
        rng.gen_range(0..self.items.len())
    }

    pub fn get(&self, i: usize) -> &T {
        &self.items[i]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Experience {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
    pub done: bool,
}

/// One-hidden-layer tanh network mapping a one-hot state to one Q-value
/// per action. All parameters live in one flat vector:
/// `w1 (hidden × inputs) | b1 | w2 (actions × hidden) | b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    inputs: usize,
    hidden: usize,
    outputs: usize,
    params: Vec<f64>,
}

impl QNetwork {
    pub fn zeros(inputs: usize, hidden: usize, outputs: usize) -> Self {
        QNetwork {
            inputs,
            hidden,
            outputs,
            params: vec![0.0; hidden * inputs + hidden + outputs * hidden + outputs],
        }
    }

    /// Weights uniform in ±1/sqrt(fan-in), biases zero.
    pub fn random(inputs: usize, hidden: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let mut net = Self::zeros(inputs, hidden, outputs);
        let a1 = 1.0 / (inputs as f64).sqrt();
        let a2 = 1.0 / (hidden as f64).sqrt();
        let (w1, w2) = (net.w1_range(), net.w2_range());
        for p in &mut net.params[w1] {
            *p = rng.gen_range(-a1..=a1);
        }
        for p in &mut net.params[w2] {
            *p = rng.gen_range(-a2..=a2);
        }
        net
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn w1_range(&self) -> std::ops::Range<usize> {
        0..self.hidden * self.inputs
    }

    fn b1_offset(&self) -> usize {
        self.hidden * self.inputs
    }

    fn w2_range(&self) -> std::ops::Range<usize> {
        let start = self.b1_offset() + self.hidden;
        start..start + self.outputs * self.hidden
    }

    fn b2_offset(&self) -> usize {
        self.w2_range().end
    }

    /// Index of `w1[h][input]`.
    pub fn w1_index(&self, h: usize, input: usize) -> usize {
        h * self.inputs + input
    }

    pub fn b1_index(&self, h: usize) -> usize {
        self.b1_offset() + h
    }

    /// Index of `w2[action][h]`.
    pub fn w2_index(&self, action: usize, h: usize) -> usize {
        self.w2_range().start + action * self.hidden + h
    }

    pub fn b2_index(&self, action: usize) -> usize {
        self.b2_offset() + action
    }

    fn hidden_activations(&self, state: usize) -> Vec<f64> {
        (0..self.hidden)
            .map(|h| (self.params[self.w1_index(h, state)] + self.params[self.b1_index(h)]).tanh())
            .collect()
    }

    fn q_from_hidden(&self, h: &[f64]) -> Vec<f64> {
        (0..self.outputs)
            .map(|a| {
                let row = &self.params[self.w2_index(a, 0)..self.w2_index(a, 0) + self.hidden];
                row.iter().zip(h).map(|(w, x)| w * x).sum::<f64>() + self.params[self.b2_index(a)]
            })
            .collect()
    }

    /// Q-values of every action in one-hot `state`.
    pub fn q_values(&self, state: usize) -> Vec<f64> {
        self.q_from_hidden(&self.hidden_activations(state))
    }

    /// Action with the largest Q-value; ties go to the lowest index.
    pub fn greedy_action(&self, state: usize) -> usize {
        argmax(&self.q_values(state))
    }

    /// `r` for terminal experiences, else `r + γ·max_a' Q(s', a')`.
    pub fn td_targets(&self, batch: &[Experience], gamma: f64) -> Vec<f64> {
        let mut cache: HashMap<usize, f64> = HashMap::new();
        batch
            .iter()
            .map(|e| {
                if e.done {
                    e.reward
                } else {
                    let best = *cache.entry(e.next_state).or_insert_with(|| {
                        self.q_values(e.next_state).into_iter().fold(f64::NEG_INFINITY, f64::max)
                    });
                    e.reward + gamma * best
                }
            })
            .collect()
    }

    /// `½·mean (Q(s,a) − target)²` for fixed targets.
    pub fn loss_with_targets(&self, batch: &[Experience], targets: &[f64]) -> f64 {
        let mut cache: HashMap<usize, Vec<f64>> = HashMap::new();
        let sum: f64 = batch
            .iter()
            .zip(targets)
            .map(|(e, t)| {
                let q = cache.entry(e.state).or_insert_with(|| self.q_values(e.state))[e.action];
                0.5 * (q - t) * (q - t)
            })
            .sum();
        sum / batch.len().max(1) as f64
    }

    /// Loss and its gradient with respect to every parameter, targets held fixed.
    pub fn gradient_with_targets(&self, batch: &[Experience], targets: &[f64]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.params.len()];
        if batch.is_empty() {
            return (0.0, grad);
        }
        let n = batch.len() as f64;
        let mut hidden: HashMap<usize, (Vec<f64>, Vec<f64>)> = HashMap::new();
        let mut loss = 0.0;
        for (e, t) in batch.iter().zip(targets) {
            let (h, q) = hidden.entry(e.state).or_insert_with(|| {
                let h = self.hidden_activations(e.state);
                let q = self.q_from_hidden(&h);
                (h, q)
            });
            let err = q[e.action] - t;
            loss += 0.5 * err * err;
            let dq = err / n;
            grad[self.b2_index(e.action)] += dq;
            for k in 0..self.hidden {
                grad[self.w2_index(e.action, k)] += dq * h[k];
                let dpre = dq * self.params[self.w2_index(e.action, k)] * (1.0 - h[k] * h[k]);
                grad[self.w1_index(k, e.state)] += dpre;
                grad[self.b1_index(k)] += dpre;
            }
        }
        (loss / n, grad)
    }

    /// One SGD step toward the TD targets of `batch`; returns the loss.
    pub fn td_update(&mut self, batch: &[Experience], gamma: f64, lr: f64) -> f64 {
        let targets = self.td_targets(batch, gamma);
        let (loss, grad) = self.gradient_with_targets(batch, &targets);
        for (p, g) in self.params.iter_mut().zip(&grad) {
            *p -= lr * g;
        }
        loss
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// The state/action indexing used by the network for one activity.
#[derive(Debug, Clone)]
pub struct Environment {
    model: Arc<ActivityModel>,
    states: Vec<String>,
    state_index: HashMap<String, usize>,
    actions: Vec<String>,
    sequence_length: usize,
}

impl Environment {
    pub fn new(model: Arc<ActivityModel>) -> Result<Self, DqnError> {
        let mut states: Vec<String> = model.state_names().map(str::to_string).collect();
        let actions: Vec<String> = model.actions().map(str::to_string).collect();
        if states.is_empty() || actions.is_empty() {
            return Err(DqnError::EmptyActivity);
        }
        let sequence_length = shortest_solution(&model, &actions).ok_or(DqnError::Unreachable)?;
        states.push(UNKNOWN_STATE.to_string());
        let state_index = states.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Ok(Environment {
            model,
            states,
            state_index,
            actions,
            sequence_length,
        })
    }

    pub fn model(&self) -> &Arc<ActivityModel> {
        &self.model
    }

    /// Length of the shortest action sequence reaching a final state.
    pub fn sequence_length(&self) -> usize {
        self.sequence_length
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn state_index(&self, label: &str) -> usize {
        self.state_index
            .get(label)
            .copied()
            .unwrap_or(self.states.len() - 1)
    }

    pub fn actions(&self) -> &[String] {
        &self.actions
    }

    fn start(&self, max_steps: usize) -> Result<Simulation, DqnError> {
        let cfg = SimConfig {
            max_steps: Some(max_steps),
            ..SimConfig::default()
        };
        Ok(Simulation::at_initial(Arc::clone(&self.model), cfg)?)
    }
}

/// Fewest simulator steps from the initial state to a final state,
/// searched breadth-first over state labels.
fn shortest_solution(model: &Arc<ActivityModel>, actions: &[String]) -> Option<usize> {
    let start = Simulation::at_initial(Arc::clone(model), SimConfig::default()).ok()?;
    if start.state().is_final {
        return Some(0);
    }
    let mut seen = HashSet::from([start.state().label.clone()]);
    let mut queue = VecDeque::from([(start, 0usize)]);
    while let Some((sim, depth)) = queue.pop_front() {
        for a in actions {
            let mut next = sim.clone();
            let Ok(s) = next.step(a) else { continue };
            if s.is_final {
                return Some(depth + 1);
            }
            if s.label != UNKNOWN_STATE && seen.insert(s.label) {
                queue.push_back((next, depth + 1));
            }
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpisodeRecord {
    pub steps: usize,
    pub wrong_decisions: usize,
    /// Sum of the running reward after every step of the episode.
    pub cumulative_reward: f64,
    pub reached_final: bool,
    /// Whether the greedy evaluation after this episode succeeded.
    pub greedy_success: bool,
    pub greedy_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DqnRun {
    pub episodes: Vec<EpisodeRecord>,
    pub sequence_length: usize,
}

impl DqnRun {
    /// Metrics as they would be with training limited to `cap` episodes.
    pub fn summary(&self, cap: usize) -> DqnSummary {
        let mut s = DqnSummary::default();
        for e in self.episodes.iter().take(cap) {
            s.episodes_used += 1;
            s.training_steps += e.steps;
            s.steps += e.steps + e.greedy_steps;
            s.wrong_decisions += e.wrong_decisions;
            s.cumulative_reward += e.cumulative_reward;
            if e.greedy_success {
                s.success = true;
                break;
            }
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct DqnSummary {
    pub episodes_used: usize,
    pub training_steps: usize,
    /// Training steps plus greedy evaluation steps.
    pub steps: usize,
    pub wrong_decisions: usize,
    pub cumulative_reward: f64,
    pub success: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GreedyResult {
    pub success: bool,
    pub steps: usize,
}

/// Runs one episode with ε = 0. Success means reaching a final state in
/// exactly the optimal number of steps; the run stops as soon as that is no
/// longer possible.
pub fn evaluate_greedy(net: &QNetwork, env: &Environment) -> GreedyResult {
    let limit = env.sequence_length();
    let Ok(mut sim) = env.start(limit.max(1)) else {
        return GreedyResult {
            success: false,
            steps: 0,
        };
    };
    let mut steps = 0;
    while steps < limit {
        let s = env.state_index(&sim.state().label);
        let a = net.greedy_action(s);
        steps += 1;
        match sim.step(&env.actions[a]) {
            Ok(st) if st.is_final => {
                return GreedyResult {
                    success: steps == limit,
                    steps,
                }
            }
            Ok(_) => {}
            Err(_) => break,
        }
    }
    GreedyResult { success: false, steps }
}

/// Trains until the greedy policy succeeds or `cfg.episode_cap` episodes ran.
pub fn train_dqn(env: &Environment, cfg: &DqnConfig) -> Result<(QNetwork, DqnRun), DqnError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_actions = env.actions.len();
    let mut net = QNetwork::random(env.state_count(), cfg.hidden_units, n_actions, &mut rng);
    let mut replay = ReplayBuffer::new(cfg.replay_capacity);
    let max_steps = cfg.max_steps_per_episode.unwrap_or(50 * env.sequence_length());
    let mut run = DqnRun {
        episodes: Vec::new(),
        sequence_length: env.sequence_length(),
    };
    let mut total_steps = 0;
    for _ in 0..cfg.episode_cap {
        let mut sim = env.start(max_steps)?;
        let mut rec = EpisodeRecord {
            steps: 0,
            wrong_decisions: 0,
            cumulative_reward: 0.0,
            reached_final: false,
            greedy_success: false,
            greedy_steps: 0,
        };
        while rec.steps < max_steps && !sim.state().is_final {
            let s = env.state_index(&sim.state().label);
            let a = if rng.gen::<f64>() < cfg.epsilon {
                rng.gen_range(0..n_actions)
            } else {
                net.greedy_action(s)
            };
            let before = sim.state().reward;
            let after = sim.step(&env.actions[a])?;
            let r = after.reward - before;
            rec.steps += 1;
            total_steps += 1;
            if r < 0.0 {
                rec.wrong_decisions += 1;
            }
            rec.cumulative_reward += after.reward;
            replay.push(Experience {
                state: s,
                action: a,
                reward: r,
                next_state: env.state_index(&after.label),
                done: after.is_final,
            });
            let batch: Vec<Experience> = (0..cfg.replay_batch.min(replay.len()))
                .map(|_| *replay.get(replay.sample_index(&mut rng)))
                .collect();
            let loss = net.td_update(&batch, cfg.gamma, cfg.learning_rate);
            if !loss.is_finite() || !net.params.iter().all(|p| p.is_finite()) {
                return Err(DqnError::Diverged(total_steps));
            }
        }
        rec.reached_final = sim.state().is_final;
        let g = evaluate_greedy(&net, env);
        rec.greedy_success = g.success;
        rec.greedy_steps = g.steps;
        run.episodes.push(rec);
        if g.success && cfg.stop_on_success {
            break;
        }
    }
    Ok((net, run))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring_buffer_overwrites_oldest() {
        let mut b = ReplayBuffer::new(3);
        for i in 0..5 {
            b.push(i);
        }
        assert_eq!(b.len(), 3);
        let mut v: Vec<i32> = (0..3).map(|i| *b.get(i)).collect();
        v.sort();
        assert_eq!(v, vec![2, 3, 4]);
    }

    #[test]
    fn zero_network_prefers_first_action() {
        let net = QNetwork::zeros(3, 4, 2);
        assert_eq!(net.greedy_action(1), 0);
    }

    #[test]
    fn terminal_targets_ignore_the_future() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = QNetwork::random(3, 5, 2, &mut rng);
        let e = Experience {
            state: 0,
            action: 1,
            reward: 0.25,
            next_state: 2,
            done: true,
        };
        assert_eq!(net.td_targets(&[e], 0.9), vec![0.25]);
        let e = Experience { done: false, ..e };
        let max = net.q_values(2).into_iter().fold(f64::NEG_INFINITY, f64::max);
        assert!((net.td_targets(&[e], 0.9)[0] - (0.25 + 0.9 * max)).abs() < 1e-15);
    }
}
