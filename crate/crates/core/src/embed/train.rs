use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::vocab::{EntityKind, Vocabulary};
use super::EmbedError;
use crate::kg::KnowledgeGraph;

/// Which co-occurrence relation a sample is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PairType {
    ActivityAction,
    ActivityState,
    ActionState,
}

impl PairType {
    pub const ALL: [PairType; 3] = [PairType::ActivityAction, PairType::ActivityState, PairType::ActionState];

    pub fn kinds(self) -> (EntityKind, EntityKind) {
        match self {
            PairType::ActivityAction => (EntityKind::Activity, EntityKind::Action),
            PairType::ActivityState => (EntityKind::Activity, EntityKind::State),
            PairType::ActionState => (EntityKind::Action, EntityKind::State),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSample {
    pub left: usize,
    pub right: usize,
    pub pair_type: PairType,
    /// 1.0 for a co-occurring pair, 0.0 otherwise.
    pub label: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub dimension: usize,
    pub iterations: usize,
    pub epochs_per_iteration: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dimension: 50,
            iterations: 1000,
            epochs_per_iteration: 15,
            batch_size: 1024,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Reduced budget for quick local runs: 200 iterations of 5 epochs on
    /// batches of 256.
    pub fn desk() -> Self {
        TrainConfig {
            iterations: 200,
            epochs_per_iteration: 5,
            batch_size: 256,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), EmbedError> {
        let bad = |m: &str| Err(EmbedError::Config(m.to_string()));
        if self.dimension == 0 {
            return bad("dimension must be positive");
        }
        if self.epochs_per_iteration == 0 {
            return bad("epochs_per_iteration must be positive");
        }
        if self.batch_size < 2 || self.batch_size % 2 != 0 {
            return bad("batch_size must be a positive even number");
        }
        if !(self.learning_rate > 0.0) || !(self.epsilon > 0.0) {
            return bad("learning_rate and epsilon must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1 and beta2 must lie in [0, 1)");
        }
        Ok(())
    }

    /// Reads `key = value` lines; `#` starts a comment. Unset keys keep their
    /// defaults.
    pub fn from_kv(text: &str) -> Result<Self, EmbedError> {
        let mut cfg = TrainConfig::default();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |m: String| EmbedError::Config(format!("line {}: {m}", no + 1));
            let (k, v) = line.split_once('=').ok_or_else(|| err("expected key = value".into()))?;
            let (k, v) = (k.trim(), v.trim());
            let int = || v.parse::<usize>().map_err(|_| err(format!("`{v}` is not an integer")));
            let real = || v.parse::<f64>().map_err(|_| err(format!("`{v}` is not a number")));
            match k {
                "dimension" | "dim" => cfg.dimension = int()?,
                "iterations" => cfg.iterations = int()?,
                "epochs_per_iteration" | "epochs" => cfg.epochs_per_iteration = int()?,
                "batch_size" | "batch" => cfg.batch_size = int()?,
                "learning_rate" | "lr" => cfg.learning_rate = real()?,
                "beta1" => cfg.beta1 = real()?,
                "beta2" => cfg.beta2 = real()?,
                "epsilon" => cfg.epsilon = real()?,
                "seed" => cfg.seed = v.parse().map_err(|_| err(format!("`{v}` is not a seed")))?,
                other => return Err(err(format!("unknown key `{other}`"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One row of `dim` reals per vocabulary entry.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    rows: usize,
    dim: usize,
    data: Vec<f64>,
}

impl EmbeddingTable {
    pub fn zeros(rows: usize, dim: usize) -> Self {
        EmbeddingTable {
            rows,
            dim,
            data: vec![0.0; rows * dim],
        }
    }

    /// Uniform values in `[-0.05, 0.05]`.
    pub fn random(rows: usize, dim: usize, rng: &mut impl Rng) -> Self {
        let data = (0..rows * dim).map(|_| rng.gen_range(-0.05..=0.05)).collect();
        EmbeddingTable { rows, dim, data }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, EmbedError> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(EmbedError::Config("rows differ in length".into()));
        }
        Ok(EmbeddingTable {
            rows: rows.len(),
            dim,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// σ(e_left · e_right): the predicted co-occurrence probability.
pub fn forward(table: &EmbeddingTable, s: &TrainSample) -> f64 {
    sigmoid(dot(table.row(s.left), table.row(s.right)))
}

/// Binary cross-entropy of a logit `z` against label `y`, computed without
/// forming `log(σ(z))` directly.
fn bce_from_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - y * z + (-z.abs()).exp().ln_1p()
}

/// Mean binary cross-entropy over `batch` and its gradient with respect to
/// every table entry.
pub fn loss_and_gradient(table: &EmbeddingTable, batch: &[TrainSample]) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; table.data.len()];
    if batch.is_empty() {
        return (0.0, grad);
    }
    let n = batch.len() as f64;
    let d = table.dim;
    let mut loss = 0.0;
    for s in batch {
        let (l, r) = (table.row(s.left), table.row(s.right));
        let z = dot(l, r);
        loss += bce_from_logit(z, s.label);
        let dz = (sigmoid(z) - s.label) / n;
        for k in 0..d {
            grad[s.left * d + k] += dz * r[k];
            grad[s.right * d + k] += dz * l[k];
        }
    }
    (loss / n, grad)
}

pub fn batch_loss(table: &EmbeddingTable, batch: &[TrainSample]) -> f64 {
    if batch.is_empty() {
        return 0.0;
    }
    batch
        .iter()
        .map(|s| bce_from_logit(dot(table.row(s.left), table.row(s.right)), s.label))
        .sum::<f64>()
        / batch.len() as f64
}

/// Dense Adam state for one parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(len: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam {
            lr,
            beta1,
            beta2,
            eps,
            t: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Retries allowed per negative sample before a relation is given up.
pub const NEGATIVE_RETRIES: usize = 100;

/// Positive pairs per relation and the sampler state derived from them.
#[derive(Debug, Clone)]
pub struct PairSampler {
    positives: Vec<(PairType, Vec<(usize, usize)>)>,
    known: HashSet<(usize, usize)>,
    candidates: Vec<(Vec<usize>, Vec<usize>)>,
    active: Vec<usize>,
}

impl PairSampler {
    pub fn new(graphs: &[KnowledgeGraph], vocab: &Vocabulary) -> Self {
        let mut sets: Vec<BTreeSet<(usize, usize)>> = vec![BTreeSet::new(); 3];
        let idx = |n: &str| vocab.index_of(n);
        for g in graphs {
            for a in g.activities() {
                let Some(ai) = idx(&a.name) else { continue };
                for x in &a.actions {
                    if let Some(xi) = idx(x) {
                        sets[0].insert((ai, xi));
                    }
                }
                for s in &a.states {
                    if let Some(si) = idx(s) {
                        sets[1].insert((ai, si));
                    }
                }
            }
            for t in g.transitions() {
                if let (Some(x), Some(s)) = (idx(&t.action), idx(&t.next_state)) {
                    sets[2].insert((x, s));
                }
            }
        }
        let mut positives = Vec::new();
        let mut candidates = Vec::new();
        let mut known = HashSet::new();
        let mut active = Vec::new();
        for (k, (pt, set)) in PairType::ALL.into_iter().zip(sets).enumerate() {
            let (lk, rk) = pt.kinds();
            known.extend(set.iter().copied());
            if set.is_empty() {
                log::warn!("no co-occurring pairs for {pt:?}; relation skipped");
            } else {
                active.push(k);
            }
            positives.push((pt, set.into_iter().collect()));
            candidates.push((vocab.indices_of_kind(lk), vocab.indices_of_kind(rk)));
        }
        PairSampler {
            positives,
            known,
            candidates,
            active,
        }
    }

    pub fn positives(&self, pt: PairType) -> &[(usize, usize)] {
        self.positives
            .iter()
            .find(|(p, _)| *p == pt)
            .map(|(_, v)| v.as_slice())
            .unwrap_or(&[])
    }

    pub fn is_positive(&self, left: usize, right: usize) -> bool {
        self.known.contains(&(left, right))
    }

    pub fn active_relations(&self) -> Vec<PairType> {
        self.active.iter().map(|&k| self.positives[k].0).collect()
    }

    fn negative(&self, k: usize, rng: &mut impl Rng) -> Option<(usize, usize)> {
        let (ls, rs) = &self.candidates[k];
        for _ in 0..NEGATIVE_RETRIES {
            let l = *ls.choose(rng)?;
            let r = *rs.choose(rng)?;
            if l != r && !self.known.contains(&(l, r)) {
                return Some((l, r));
            }
        }
        None
    }

    /// `batch_size / 2` positives and as many negatives, relations taken in
    /// round-robin order. A relation whose negatives cannot be found within
    /// the retry budget is dropped for good and the batch is redrawn.
    pub fn generate_batch(&mut self, batch_size: usize, rng: &mut impl Rng) -> Vec<TrainSample> {
        let half = batch_size / 2;
        'outer: loop {
            if self.active.is_empty() {
                return Vec::new();
            }
            let mut batch = Vec::with_capacity(2 * half);
            for i in 0..half {
                let k = self.active[i % self.active.len()];
                let (pt, pos) = &self.positives[k];
                let &(l, r) = pos.choose(rng).expect("active relations have positives");
                batch.push(TrainSample {
                    left: l,
                    right: r,
                    pair_type: *pt,
                    label: 1.0,
                });
            }
            for i in 0..half {
                let k = self.active[i % self.active.len()];
                match self.negative(k, rng) {
                    Some((l, r)) => batch.push(TrainSample {
                        left: l,
                        right: r,
                        pair_type: self.positives[k].0,
                        label: 0.0,
                    }),
                    None => {
                        log::warn!(
                            "no negative pair found for {:?} after {NEGATIVE_RETRIES} draws; relation skipped",
                            self.positives[k].0
                        );
                        self.active.retain(|&a| a != k);
                        continue 'outer;
                    }
                }
            }
            return batch;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean loss of each iteration (averaged over its epochs).
    pub losses: Vec<f64>,
}

/// Trains one shared table over all three relations.
pub fn train(
    graphs: &[KnowledgeGraph],
    vocab: &Vocabulary,
    cfg: &TrainConfig,
) -> Result<(EmbeddingTable, TrainReport), EmbedError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut table = EmbeddingTable::random(vocab.len(), cfg.dimension, &mut rng);
    let mut sampler = PairSampler::new(graphs, vocab);
    let mut adam = Adam::new(table.data.len(), cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);
    let mut losses = Vec::with_capacity(cfg.iterations);
    for it in 0..cfg.iterations {
        let batch = sampler.generate_batch(cfg.batch_size, &mut rng);
        if batch.is_empty() {
            log::warn!("no trainable relations remain; stopping at iteration {it}");
            break;
        }
        let mut total = 0.0;
        for _ in 0..cfg.epochs_per_iteration {
            let (loss, grad) = loss_and_gradient(&table, &batch);
            if !loss.is_finite() {
                return Err(EmbedError::Diverged { iteration: it });
            }
            total += loss;
            adam.step(&mut table.data, &grad);
        }
        let mean = total / cfg.epochs_per_iteration as f64;
        log::debug!("iteration {it}: mean loss {mean:.6}");
        losses.push(mean);
    }
    if !table.is_finite() {
        return Err(EmbedError::Diverged {
            iteration: cfg.iterations,
        });
    }
    Ok((table, TrainReport { losses }))
}

/// Writes the vectors file (one tab-separated row per entity) and the
/// metadata file (`name\tindex\tconcept`, same row order).
pub fn export_tsv(
    table: &EmbeddingTable,
    vocab: &Vocabulary,
    vectors: &Path,
    metadata: &Path,
) -> Result<(), EmbedError> {
    if table.rows != vocab.len() {
        return Err(EmbedError::Mismatch {
            vectors: table.rows,
            metadata: vocab.len(),
        });
    }
    if !table.is_finite() {
        return Err(EmbedError::Config("table contains non-finite values".into()));
    }
    let mut v = String::new();
    let mut m = String::from("name\tindex\tconcept\n");
    for i in 0..table.rows {
        let row: Vec<String> = table.row(i).iter().map(|x| format!("{x:e}")).collect();
        v.push_str(&row.join("\t"));
        v.push('\n');
        let _ = writeln!(m, "{}\t{}\t{}", vocab.name(i), i, vocab.kind(i));
    }
    let io = |p: &Path| {
        let path = p.display().to_string();
        move |source| EmbedError::Io { path, source }
    };
    fs::write(vectors, v).map_err(io(vectors))?;
    fs::write(metadata, m).map_err(io(metadata))?;
    Ok(())
}
