//! Benchmark runs comparing ensemble composition with the DQN baseline.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::compose::{compose, ComposerConfig};
use crate::dqn::{train_dqn, DqnConfig, Environment};
use crate::embed::EmbeddingSpace;
use crate::sim::{ActivityModel, SimConfig, Simulation};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Ensemble,
    Dqn,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Ensemble => "ENSEMBLE",
            Method::Dqn => "DQN",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetrics {
    pub activity: String,
    pub method: Method,
    pub episode_cap: usize,
    pub seed: u64,
    pub sequence_length: usize,
    pub episodes_used: usize,
    pub steps_until_success: usize,
    pub wrong_decisions: usize,
    pub cumulative_reward: f64,
    pub success: bool,
    /// Why the run failed outright, if it did.
    pub error: Option<String>,
}

/// Picks up to `per_category` items uniformly without replacement from every
/// length category. The result is ordered by length, then by input position.
pub fn stratified_sample<T: Clone>(items: &[T], length: impl Fn(&T) -> usize, per_category: usize, seed: u64) -> Vec<T> {
    let mut categories: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, item) in items.iter().enumerate() {
        categories.entry(length(item)).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = Vec::new();
    for members in categories.values() {
        let mut chosen: Vec<usize> = members.choose_multiple(&mut rng, per_category).copied().collect();
        chosen.sort_unstable();
        picked.extend(chosen);
    }
    picked.into_iter().map(|i| items[i].clone()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub caps: Vec<usize>,
    pub seeds: Vec<u64>,
    pub dqn: DqnConfig,
    pub composer: ComposerConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            caps: vec![1, 10, 100],
            seeds: (0..5).collect(),
            dqn: DqnConfig::default(),
            composer: ComposerConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommitRadius {
    pub activity: String,
    pub step: usize,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BenchReport {
    pub rows: Vec<RunMetrics>,
    pub radii: Vec<CommitRadius>,
}

impl BenchReport {
    /// Mean radius at which the composer committed an action.
    pub fn mean_commit_radius(&self) -> Option<f64> {
        if self.radii.is_empty() {
            return None;
        }
        Some(self.radii.iter().map(|r| r.radius).sum::<f64>() / self.radii.len() as f64)
    }

    pub fn rows_for(&self, method: Method) -> impl Iterator<Item = &RunMetrics> {
        self.rows.iter().filter(move |r| r.method == method)
    }
}

/// Stable per-activity seed so results do not depend on scheduling.
fn activity_seed(activity: &str, seed: u64) -> u64 {
    // FNV-1a
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in activity.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

fn ensemble_row(model: &Arc<ActivityModel>, space: &EmbeddingSpace, cfg: &ComposerConfig, seq: usize) -> (RunMetrics, Vec<CommitRadius>) {
    let mut row = RunMetrics {
        activity: model.name().to_string(),
        method: Method::Ensemble,
        episode_cap: 1,
        seed: 0,
        sequence_length: seq,
        episodes_used: 1,
        steps_until_success: 0,
        wrong_decisions: 0,
        cumulative_reward: 0.0,
        success: false,
        error: None,
    };
    let start = match Simulation::at_initial(Arc::clone(model), SimConfig::default()) {
        Ok(s) => s,
        Err(e) => {
            row.error = Some(e.to_string());
            return (row, Vec::new());
        }
    };
    match compose(&start, space, cfg) {
        Ok((_, trace)) => {
            row.steps_until_success = trace.step_count();
            row.wrong_decisions = trace.wrong_decisions;
            row.cumulative_reward = trace.cumulative_reward;
            row.success = true;
            let radii = trace
                .commit_radii()
                .into_iter()
                .enumerate()
                .map(|(step, radius)| CommitRadius {
                    activity: model.name().to_string(),
                    step: step + 1,
                    radius,
                })
                .collect();
            (row, radii)
        }
        Err(e) => {
            row.error = Some(e.to_string());
            (row, Vec::new())
        }
    }
}

fn dqn_rows(env: &Environment, cfg: &BenchConfig, seed: u64) -> Vec<RunMetrics> {
    let name = env.model().name().to_string();
    let max_cap = cfg.caps.iter().copied().max().unwrap_or(0);
    let dqn = DqnConfig {
        episode_cap: max_cap,
        seed: activity_seed(&name, seed),
        ..cfg.dqn.clone()
    };
    // smaller caps are prefixes of the longest run
    let run = train_dqn(env, &dqn);
    cfg.caps
        .iter()
        .map(|&cap| {
            let mut row = RunMetrics {
                activity: name.clone(),
                method: Method::Dqn,
                episode_cap: cap,
                seed,
                sequence_length: env.sequence_length(),
                episodes_used: 0,
                steps_until_success: 0,
                wrong_decisions: 0,
                cumulative_reward: 0.0,
                success: false,
                error: None,
            };
            match &run {
                Ok((_, run)) => {
                    let s = run.summary(cap);
                    row.episodes_used = s.episodes_used;
                    row.steps_until_success = s.steps;
                    row.wrong_decisions = s.wrong_decisions;
                    row.cumulative_reward = s.cumulative_reward;
                    row.success = s.success;
                }
                Err(e) => row.error = Some(e.to_string()),
            }
            row
        })
        .collect()
}

/// Runs the composer once per activity and the DQN baseline once per
/// (activity, seed), reporting every cap in `cfg.caps`. Failures are recorded
/// in the rows. Output order is fixed: activities in input order, the
/// ensemble row first, then DQN rows by seed and cap.
pub fn run_benchmark(models: &[Arc<ActivityModel>], space: &EmbeddingSpace, cfg: &BenchConfig) -> BenchReport {
    let per_activity: Vec<(Vec<RunMetrics>, Vec<CommitRadius>)> = models
        .par_iter()
        .map(|model| {
            let env = Environment::new(Arc::clone(model));
            let seq = env.as_ref().map_or(0, |e| e.sequence_length());
            let (ensemble, radii) = ensemble_row(model, space, &cfg.composer, seq);
            let mut rows = vec![ensemble];
            match &env {
                Ok(env) => {
                    let dqn: Vec<Vec<RunMetrics>> = cfg.seeds.par_iter().map(|&s| dqn_rows(env, cfg, s)).collect();
                    rows.extend(dqn.into_iter().flatten());
                }
                Err(e) => {
                    for &seed in &cfg.seeds {
                        for &cap in &cfg.caps {
                            rows.push(RunMetrics {
                                activity: model.name().to_string(),
                                method: Method::Dqn,
                                episode_cap: cap,
                                seed,
                                sequence_length: 0,
                                episodes_used: 0,
                                steps_until_success: 0,
                                wrong_decisions: 0,
                                cumulative_reward: 0.0,
                                success: false,
                                error: Some(e.to_string()),
                            });
                        }
                    }
                }
            }
            (rows, radii)
        })
        .collect();
    let mut report = BenchReport::default();
    for (rows, radii) in per_activity {
        report.rows.extend(rows);
        report.radii.extend(radii);
    }
    report
}

#[derive(Serialize)]
struct SuccessByLength {
    method: Method,
    episode_cap: usize,
    sequence_length: usize,
    runs: usize,
    successes: usize,
    success_rate: f64,
}

#[derive(Serialize)]
struct RewardRow<'a> {
    activity: &'a str,
    method: Method,
    episode_cap: usize,
    seed: u64,
    sequence_length: usize,
    cumulative_reward: f64,
}

#[derive(Serialize)]
struct StepsRow<'a> {
    activity: &'a str,
    method: Method,
    episode_cap: usize,
    seed: u64,
    sequence_length: usize,
    episodes_used: usize,
    steps_until_success: usize,
    success: bool,
}

#[derive(Serialize)]
struct WrongRow<'a> {
    activity: &'a str,
    method: Method,
    episode_cap: usize,
    seed: u64,
    sequence_length: usize,
    wrong_decisions: usize,
}

pub const CSV_FILES: [&str; 6] = [
    "runs.csv",
    "success_by_length.csv",
    "cumulative_reward.csv",
    "steps.csv",
    "wrong_decisions.csv",
    "radius_density.csv",
];

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), BenchError> {
    let err = |source| BenchError::Csv {
        path: path.display().to_string(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    for r in rows {
        w.serialize(r).map_err(err)?;
    }
    w.flush().map_err(|source| BenchError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes the report's CSV files into `dir`; returns their paths.
pub fn write_report(report: &BenchReport, dir: &Path) -> Result<Vec<PathBuf>, BenchError> {
    fs::create_dir_all(dir).map_err(|source| BenchError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let path = |name: &str| dir.join(name);
    write_csv(&path("runs.csv"), &report.rows)?;

    let mut groups: BTreeMap<(Method, usize, usize), (usize, usize)> = BTreeMap::new();
    for r in &report.rows {
        let g = groups.entry((r.method, r.episode_cap, r.sequence_length)).or_default();
        g.0 += 1;
        g.1 += r.success as usize;
    }
    write_csv(
        &path("success_by_length.csv"),
        groups.into_iter().map(|((method, episode_cap, sequence_length), (runs, successes))| SuccessByLength {
            method,
            episode_cap,
            sequence_length,
            runs,
            successes,
            success_rate: successes as f64 / runs as f64,
        }),
    )?;
    write_csv(
        &path("cumulative_reward.csv"),
        report.rows.iter().map(|r| RewardRow {
            activity: &r.activity,
            method: r.method,
            episode_cap: r.episode_cap,
            seed: r.seed,
            sequence_length: r.sequence_length,
            cumulative_reward: r.cumulative_reward,
        }),
    )?;
    write_csv(
        &path("steps.csv"),
        report.rows.iter().map(|r| StepsRow {
            activity: &r.activity,
            method: r.method,
            episode_cap: r.episode_cap,
            seed: r.seed,
            sequence_length: r.sequence_length,
            episodes_used: r.episodes_used,
            steps_until_success: r.steps_until_success,
            success: r.success,
        }),
    )?;
    write_csv(
        &path("wrong_decisions.csv"),
        report.rows.iter().map(|r| WrongRow {
            activity: &r.activity,
            method: r.method,
            episode_cap: r.episode_cap,
            seed: r.seed,
            sequence_length: r.sequence_length,
            wrong_decisions: r.wrong_decisions,
        }),
    )?;
    write_csv(&path("radius_density.csv"), &report.radii)?;
    Ok(CSV_FILES.iter().map(|f| path(f)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_takes_one_per_length() {
        let items = vec![("a", 2), ("b", 2), ("c", 5)];
        let s = stratified_sample(&items, |i| i.1, 1, 7);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].1, 2);
        assert_eq!(s[1], ("c", 5));
    }

    #[test]
    fn oversized_category_is_taken_whole() {
        let items = vec![1, 1, 1];
        assert_eq!(stratified_sample(&items, |_| 3, 10, 0).len(), 3);
        assert!(stratified_sample::<u8>(&[], |_| 0, 1, 0).is_empty());
    }
}
