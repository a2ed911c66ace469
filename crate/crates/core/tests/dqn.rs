use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use kgpolicy_core::dqn::{evaluate_greedy, train_dqn, DqnConfig, Environment, Experience, QNetwork, ReplayBuffer};
use kgpolicy_core::sim::{ActivityModel, SimConfig, Simulation};
use kgpolicy_core::vh::{parse_script, script_to_kg};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn env_for(script: &str) -> Environment {
    let s = parse_script(script).unwrap();
    let g = script_to_kg(&s).unwrap();
    Environment::new(Arc::new(ActivityModel::new(&g, &s.activity_name()).unwrap())).unwrap()
}

fn two_step() -> Environment {
    env_for("Open door\n\n[Walk] <door> (1)\n[Open] <door> (1)\n")
}

fn five_step() -> Environment {
    env_for("Tidy desk\n\n[Walk] <desk> (1)\n[Grab] <pen> (1)\n[Put] <pen> (1)\n[Grab] <book> (1)\n[Put] <book> (1)\n")
}

/// Exact Q-values of the deterministic environment by value iteration,
/// using the simulator only as a one-step transition oracle.
fn value_iteration(env: &Environment, gamma: f64) -> BTreeMap<(String, usize), f64> {
    let model = env.model();
    let start = model.initial_state().unwrap().to_string();
    let mut edges: BTreeMap<(String, usize), (f64, String, bool)> = BTreeMap::new();
    let mut seen = BTreeSet::from([start.clone()]);
    let mut queue = VecDeque::from([start]);
    while let Some(s) = queue.pop_front() {
        for (a, name) in env.actions().iter().enumerate() {
            let mut sim = Simulation::at_state(Arc::clone(model), &s, SimConfig::default()).unwrap();
            let before = sim.state().reward;
            let next = sim.step(name).unwrap();
            edges.insert((s.clone(), a), (next.reward - before, next.label.clone(), next.is_final));
            if !next.is_final && seen.insert(next.label.clone()) {
                queue.push_back(next.label);
            }
        }
    }
    let mut q: BTreeMap<(String, usize), f64> = edges.keys().map(|k| (k.clone(), 0.0)).collect();
    for _ in 0..1000 {
        let prev = q.clone();
        for (k, (r, next, done)) in &edges {
            let future = if *done {
                0.0
            } else {
                (0..env.actions().len())
                    .map(|a| prev[&(next.clone(), a)])
                    .fold(f64::NEG_INFINITY, f64::max)
            };
            q.insert(k.clone(), r + gamma * future);
        }
    }
    q
}

#[test]
fn value_iteration_oracle_on_two_step_chain() {
    let env = two_step();
    let q = value_iteration(&env, 0.9);
    let init = env.model().initial_state().unwrap().to_string();
    let a = env.actions().iter().position(|a| a == "Walk_door_1").unwrap();
    let b = 1 - a;
    assert!((q[&(init.clone(), a)] - 0.475).abs() < 1e-12);
    assert!((q[&(init, b)] - 0.1775).abs() < 1e-12);
    assert!((q[&("Walk_door_1_Done".to_string(), b)] - 0.25).abs() < 1e-12);
    assert!((q[&("Walk_door_1_Done".to_string(), a)] + 0.025).abs() < 1e-12);
}

#[test]
fn q_learning_converges_to_value_iteration() {
    let env = two_step();
    let cfg = DqnConfig {
        episode_cap: 500,
        stop_on_success: false,
        seed: 3,
        ..DqnConfig::default()
    };
    let (net, run) = train_dqn(&env, &cfg).unwrap();
    assert_eq!(run.episodes.len(), 500);
    for ((state, action), exact) in value_iteration(&env, cfg.gamma) {
        let learned = net.q_values(env.state_index(&state))[action];
        assert!((learned - exact).abs() < 0.05, "Q({state}, {action}) = {learned}, expected {exact}");
    }
}

#[test]
fn td_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let h = 1e-6;
    for _ in 0..10 {
        let net = QNetwork::random(5, 8, 3, &mut rng);
        let batch: Vec<Experience> = (0..6)
            .map(|_| Experience {
                state: rng.gen_range(0..5),
                action: rng.gen_range(0..3),
                reward: if rng.gen() { 0.25 } else { -0.25 },
                next_state: rng.gen_range(0..5),
                done: rng.gen_bool(0.3),
            })
            .collect();
        let targets = net.td_targets(&batch, 0.9);
        let (_, grad) = net.gradient_with_targets(&batch, &targets);
        for i in 0..net.params().len() {
            let mut plus = net.clone();
            plus.params_mut()[i] += h;
            let mut minus = net.clone();
            minus.params_mut()[i] -= h;
            let numeric =
                (plus.loss_with_targets(&batch, &targets) - minus.loss_with_targets(&batch, &targets)) / (2.0 * h);
            let scale = grad[i].abs().max(numeric.abs());
            if scale > 1e-8 {
                assert!((grad[i] - numeric).abs() / scale < 1e-4, "param {i}: {} vs {numeric}", grad[i]);
            } else {
                assert!((grad[i] - numeric).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn zero_cap_leaves_initialisation_untouched() {
    let env = two_step();
    let cfg = DqnConfig {
        episode_cap: 0,
        seed: 9,
        ..DqnConfig::default()
    };
    let (net, run) = train_dqn(&env, &cfg).unwrap();
    assert!(run.episodes.is_empty());
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let init = QNetwork::random(env.state_count(), cfg.hidden_units, env.actions().len(), &mut rng);
    assert_eq!(net, init);
}

#[test]
fn two_step_activity_is_usually_learned() {
    let env = two_step();
    let wins = (0..20)
        .filter(|&seed| {
            let cfg = DqnConfig {
                seed,
                ..DqnConfig::default()
            };
            let (_, run) = train_dqn(&env, &cfg).unwrap();
            assert!(!run.episodes.is_empty());
            run.summary(100).success
        })
        .count();
    assert!(wins > 10, "{wins}/20");
}

#[test]
fn handcrafted_network_follows_the_chain() {
    let env = five_step();
    let chain = ["Walk_desk_1", "Grab_pen_1", "Put_pen_1", "Grab_book_1", "Put_book_1"];
    let model = env.model();
    let mut net = QNetwork::zeros(env.state_count(), env.state_count(), env.actions().len());
    let mut sim = Simulation::at_initial(Arc::clone(model), SimConfig::default()).unwrap();
    for name in chain {
        let s = env.state_index(&sim.state().label);
        let a = env.actions().iter().position(|x| x == name).unwrap();
        let (w1, w2) = (net.w1_index(s, s), net.w2_index(a, s));
        net.params_mut()[w1] = 1.0;
        net.params_mut()[w2] = 5.0;
        sim.step(name).unwrap();
    }
    let r = evaluate_greedy(&net, &env);
    assert!(r.success);
    assert_eq!(r.steps, 5);
    assert_eq!(evaluate_greedy(&net, &env), r);
}

#[test]
fn zero_network_succeeds_only_when_first_action_is_right() {
    // actions sort as [Open_door_1, Walk_door_1]; the chain starts with Walk
    let env = two_step();
    let net = QNetwork::zeros(env.state_count(), 4, 2);
    assert!(!evaluate_greedy(&net, &env).success);
    // one action repeated twice: the lowest index is always right
    let env = env_for("Knock\n\n[Knock] <door> (1)\n");
    let net = QNetwork::zeros(env.state_count(), 4, env.actions().len());
    assert!(evaluate_greedy(&net, &env).success);
}

#[test]
fn untrained_network_evaluates_without_error() {
    let env = five_step();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let net = QNetwork::random(env.state_count(), 100, env.actions().len(), &mut rng);
    let r = evaluate_greedy(&net, &env);
    assert!(r.steps <= env.sequence_length());
}

#[test]
fn replay_sampling_is_uniform() {
    let mut buf = ReplayBuffer::new(50);
    for i in 0..80 {
        buf.push(i);
        assert!(buf.len() <= 50);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut counts = [0usize; 50];
    let draws = 10_000;
    for _ in 0..draws {
        counts[buf.sample_index(&mut rng)] += 1;
    }
    let expected = draws as f64 / 50.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 0.999 quantile of chi-square with 49 degrees of freedom
    assert!(chi2 < 85.3506, "chi2 = {chi2}");
}

#[test]
fn summaries_are_prefixes_of_one_run() {
    let env = five_step();
    let cfg = DqnConfig {
        seed: 1,
        ..DqnConfig::default()
    };
    let (_, run) = train_dqn(&env, &cfg).unwrap();
    let one = run.summary(1);
    assert_eq!(one.episodes_used, 1);
    let short = DqnConfig { episode_cap: 1, ..cfg };
    let (_, run1) = train_dqn(&env, &short).unwrap();
    assert_eq!(run1.summary(1), one);
    let ten = run.summary(10);
    assert!(ten.steps >= one.steps);
}
