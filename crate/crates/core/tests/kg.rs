use kgpolicy_core::kg::json::{from_json, to_json};
use kgpolicy_core::kg::schema::properties;
use kgpolicy_core::kg::turtle::{parse_turtle, write_turtle};
use kgpolicy_core::kg::{
    Action, Activity, CommunicationType, Distribution, Effect, Entity, Equation, FeatureStats, FeatureType,
    ImpactType, Issue, KgError, KnowledgeGraph, Literal, ObservationFeature, Parameter, State, Term, Transition,
    Triple, TriplePattern,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn awkward_double(rng: &mut ChaCha8Rng) -> f64 {
    match rng.gen_range(0..6) {
        0 => rng.gen_range(-1e6..1e6),
        1 => 0.1 + 0.2,
        2 => rng.gen_range(-1.0..1.0) * 1e-9,
        3 => rng.gen_range(-1.0..1.0) * 1e20,
        4 => f64::from(rng.gen_range(-5i32..5)),
        _ => rng.gen::<f64>(),
    }
}

fn awkward_string(rng: &mut ChaCha8Rng) -> String {
    const PIECES: [&str; 9] = ["plain", "with space", "quote\"d", "back\\slash", "new\nline", "tab\t", "é✓", "'single'", ""];
    (0..rng.gen_range(1..4)).map(|_| *PIECES.choose(rng).unwrap()).collect()
}

/// A random valid single-activity graph with opaque extras.
fn random_graph(seed: u64) -> KnowledgeGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nf = rng.gen_range(1..4);
    let ns = rng.gen_range(2..6);
    let na = rng.gen_range(1..4);
    let features: Vec<String> = (0..nf).map(|i| format!("f{i}")).collect();
    let states: Vec<String> = (0..ns).map(|i| format!("S{seed}_{i}")).collect();
    let actions: Vec<String> = (0..na).map(|i| format!("A{i}")).collect();
    let mut entities: Vec<Entity> = Vec::new();

    for f in &features {
        let lo = awkward_double(&mut rng);
        let hi = lo + rng.gen_range(0.0..100.0);
        let (distribution, stats) = match rng.gen_range(0..3) {
            0 => (None, FeatureStats::default()),
            1 => (
                Some(Distribution::Gaussian),
                FeatureStats {
                    mean: Some(awkward_double(&mut rng)),
                    standard_deviation: Some(rng.gen_range(0.0..3.0)),
                    ..FeatureStats::default()
                },
            ),
            _ => (
                Some(Distribution::Binomial),
                FeatureStats {
                    success_rate: Some(rng.gen()),
                    number_experiments: Some(rng.gen_range(0..1000)),
                    ..FeatureStats::default()
                },
            ),
        };
        entities.push(
            ObservationFeature {
                name: f.clone(),
                range_start: lo,
                range_end: hi,
                feature_type: *[FeatureType::Nominal, FeatureType::Numerical, FeatureType::Ordinal]
                    .choose(&mut rng)
                    .unwrap(),
                unit: rng.gen_bool(0.5).then(|| awkward_string(&mut rng)),
                distribution,
                stats,
            }
            .into(),
        );
    }

    for (i, s) in states.iter().enumerate() {
        let f = features.choose(&mut rng).unwrap();
        let expression = match rng.gen_range(0..3) {
            0 => format!("{f} == {i}"),
            1 => format!("{f} >= {} AND {f} < {}", i, i + 1),
            _ => format!("{f} == 'v {i}' OR {f} != {}", awkward_double(&mut rng).abs()),
        };
        entities.push(
            State {
                name: s.clone(),
                is_initial: i == 0,
                is_final: i == ns - 1,
                is_goal: rng.gen_bool(0.5),
                reward: awkward_double(&mut rng),
                expression,
                observation_features: vec![f.clone()],
                actions: actions.iter().filter(|_| rng.gen_bool(0.5)).cloned().collect(),
            }
            .into(),
        );
    }

    let mut transitions_of: Vec<Vec<String>> = vec![Vec::new(); na];
    let mut k = 0;
    for s in &states {
        for (ai, a) in actions.iter().enumerate() {
            if !rng.gen_bool(0.6) {
                continue;
            }
            let fanout = rng.gen_range(1..4);
            let weights: Vec<f64> = (0..fanout).map(|_| rng.gen_range(0.01..1.0)).collect();
            let total: f64 = weights.iter().sum();
            for w in weights {
                let name = format!("T{k}");
                k += 1;
                transitions_of[ai].push(name.clone());
                entities.push(
                    Transition {
                        name,
                        previous_state: s.clone(),
                        next_state: states.choose(&mut rng).unwrap().clone(),
                        action: a.clone(),
                        probability: w / total,
                    }
                    .into(),
                );
            }
        }
    }

    for (ai, a) in actions.iter().enumerate() {
        let effect = format!("{a}_effect");
        let impact = *[
            ImpactType::On,
            ImpactType::Off,
            ImpactType::Convert,
            ImpactType::Increase,
            ImpactType::Constant,
            ImpactType::Compute,
        ]
        .choose(&mut rng)
        .unwrap();
        let equation = (impact == ImpactType::Compute).then(|| {
            let eq = format!("{a}_eq");
            let p = format!("{a}_rate");
            entities.push(
                Parameter {
                    name: p.clone(),
                    symbol: "rate".into(),
                    value: awkward_double(&mut rng),
                }
                .into(),
            );
            entities.push(
                Equation {
                    name: eq.clone(),
                    expression: format!("rate * {} - (1 / 2)", features[0]),
                    parameters: vec![p],
                }
                .into(),
            );
            eq
        });
        entities.push(
            Effect {
                name: effect.clone(),
                target_features: features.iter().filter(|_| rng.gen_bool(0.7)).cloned().collect::<Vec<_>>(),
                impact_type: impact,
                equation,
            }
            .into(),
        );
        entities.push(
            Action {
                name: a.clone(),
                effects: vec![effect],
                transitions: transitions_of[ai].clone(),
                duration: rng.gen_bool(0.5).then(|| rng.gen_range(0.0..60.0)),
                frequency: rng.gen_bool(0.5).then(|| rng.gen_range(-3..100)),
            }
            .into(),
        );
    }
    // effects need at least one target
    for e in &mut entities {
        if let Entity::Effect(e) = e {
            if e.target_features.is_empty() {
                e.target_features.push(features[0].clone());
            }
        }
    }

    entities.push(
        Activity {
            name: format!("Act{seed}"),
            is_sequential: rng.gen(),
            number_of_actors: rng.gen_range(1..4),
            communication_type: if rng.gen() {
                CommunicationType::Synchronous
            } else {
                CommunicationType::Asynchronous
            },
            states: states.clone(),
            actions: actions.clone(),
            observation_features: features.clone(),
        }
        .into(),
    );

    let mut extra = Vec::new();
    for _ in 0..rng.gen_range(0..4) {
        let subject = states.choose(&mut rng).unwrap().clone();
        let object = match rng.gen_range(0..5) {
            0 => Term::Literal(Literal::string(awkward_string(&mut rng))),
            1 => Term::Literal(Literal::double(awkward_double(&mut rng))),
            2 => Term::Literal(Literal::integer(rng.gen_range(-1000..1000))),
            3 => Term::Literal(Literal::boolean(rng.gen())),
            _ => Term::entity(actions.choose(&mut rng).unwrap().clone()),
        };
        extra.push(Triple::new(subject, "hasNote", object));
    }

    KnowledgeGraph::from_entities(entities, &extra).unwrap()
}

fn assert_isomorphic(a: &KnowledgeGraph, b: &KnowledgeGraph) {
    assert_eq!(a.triple_set(), b.triple_set());
    assert_eq!(a.entities(), b.entities());
    assert_eq!(to_json(a), to_json(b));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn turtle_round_trip(seed in any::<u64>()) {
        let g = random_graph(seed);
        let text = write_turtle(&g);
        let back = parse_turtle(&text).unwrap();
        assert_isomorphic(&g, &back);
        prop_assert_eq!(write_turtle(&back), text);
    }

    #[test]
    fn json_round_trip(seed in any::<u64>()) {
        let g = random_graph(seed);
        let text = to_json(&g);
        let back = from_json(&text).unwrap();
        assert_isomorphic(&g, &back);
        prop_assert_eq!(to_json(&back), text);
    }

    #[test]
    fn wildcard_match_returns_everything(seed in any::<u64>()) {
        let g = random_graph(seed);
        prop_assert_eq!(g.match_triples(&TriplePattern::default()).len(), g.triple_count());
    }

    #[test]
    fn dropping_a_mandatory_property_is_rejected(seed in any::<u64>(), pick in any::<prop::sample::Index>()) {
        let g = random_graph(seed);
        let mut candidates = Vec::new();
        for (concept, name) in g.entity_names() {
            for p in properties(concept).iter().filter(|p| p.is_mandatory()) {
                candidates.push((name.to_string(), p.name));
            }
        }
        let (entity, property) = pick.get(&candidates).clone();

        let triples: Vec<Triple> = g
            .triples()
            .filter(|t| !(t.subject == entity && t.predicate == property))
            .cloned()
            .collect();
        let err = KnowledgeGraph::from_triples(triples).unwrap_err();
        prop_assert!(
            err.issues().iter().any(|i| matches!(i, Issue::Cardinality { .. })
                && i.entity() == entity
                && i.property() == Some(property)),
            "{err}"
        );

        let mut doc: serde_json::Value = serde_json::from_str(&to_json(&g)).unwrap();
        for e in doc["entities"].as_array_mut().unwrap() {
            if e["name"] == entity.as_str() {
                e["properties"].as_object_mut().unwrap().remove(property);
            }
        }
        let err = from_json(&doc.to_string()).unwrap_err().to_string();
        prop_assert!(err.contains(&entity) && err.contains(property), "{err}");
    }
}

/// Two states and two actions; every (state, action) pair gets a random
/// group of outgoing transitions.
fn transition_groups(rng: &mut ChaCha8Rng) -> Vec<Transition> {
    let mut out = Vec::new();
    for s in ["s0", "s1"] {
        for a in ["a0", "a1"] {
            let n = rng.gen_range(1..6);
            let w: Vec<f64> = (0..n)
                .map(|_| if rng.gen_bool(0.2) { rng.gen_range(1e-12..1e-6) } else { rng.gen::<f64>() + 1e-3 })
                .collect();
            let total: f64 = w.iter().sum();
            for x in w {
                out.push(Transition {
                    name: format!("t{}", out.len()),
                    previous_state: s.into(),
                    next_state: if rng.gen() { "s0".into() } else { "s1".into() },
                    action: a.into(),
                    probability: x / total,
                });
            }
        }
    }
    out
}

fn with_transitions(ts: &[Transition]) -> Result<KnowledgeGraph, KgError> {
    let mut entities: Vec<Entity> = vec![
        ObservationFeature::nominal_flag("x").into(),
        Activity {
            name: "Act".into(),
            is_sequential: false,
            number_of_actors: 1,
            communication_type: CommunicationType::Asynchronous,
            states: vec!["s0".into(), "s1".into()],
            actions: vec!["a0".into(), "a1".into()],
            observation_features: vec!["x".into()],
        }
        .into(),
    ];
    for (i, s) in ["s0", "s1"].iter().enumerate() {
        entities.push(
            State {
                name: s.to_string(),
                is_initial: i == 0,
                is_final: i == 1,
                is_goal: i == 1,
                reward: 0.0,
                expression: format!("x == {i}"),
                observation_features: vec!["x".into()],
                actions: vec![],
            }
            .into(),
        );
    }
    for a in ["a0", "a1"] {
        entities.push(
            Effect {
                name: format!("{a}_effect"),
                target_features: vec!["x".into()],
                impact_type: ImpactType::Constant,
                equation: None,
            }
            .into(),
        );
        entities.push(
            Action {
                name: a.into(),
                effects: vec![format!("{a}_effect")],
                transitions: ts.iter().filter(|t| t.action == a).map(|t| t.name.clone()).collect(),
                duration: None,
                frequency: None,
            }
            .into(),
        );
    }
    entities.extend(ts.iter().cloned().map(Entity::from));
    KnowledgeGraph::from_entities(entities, &[])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn transition_groups_normalize(seed in any::<u64>(), bump in 1e-6f64..0.5, which in any::<prop::sample::Index>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ts = transition_groups(&mut rng);
        let g = with_transitions(&ts).unwrap();
        for s in ["s0", "s1"] {
            for a in ["a0", "a1"] {
                let sum: f64 = g.transitions_from(s, a).map(|t| t.probability).sum();
                prop_assert!((sum - 1.0).abs() <= 1e-9, "{s}/{a}: {sum}");
            }
        }
        // Moving one probability off the simplex must be caught.
        let i = which.index(ts.len());
        let lowered = ts[i].probability - bump;
        ts[i].probability = if lowered >= 0.0 { lowered } else { ts[i].probability + bump };
        let (state, action) = (ts[i].previous_state.clone(), ts[i].action.clone());
        let err = with_transitions(&ts).unwrap_err();
        prop_assert!(
            err.issues().iter().any(|issue| match issue {
                Issue::Normalization { state: s, action: a, .. } => *s == state && *a == action,
                Issue::OutOfRange { entity, .. } => *entity == ts[i].name,
                _ => false,
            }),
            "{err}"
        );
    }
}

#[test]
fn probability_above_one_names_the_transition() {
    let ts = vec![
        Transition {
            name: "too_likely".into(),
            previous_state: "s0".into(),
            next_state: "s1".into(),
            action: "a0".into(),
            probability: 1.5,
        },
        Transition {
            name: "other".into(),
            previous_state: "s0".into(),
            next_state: "s1".into(),
            action: "a1".into(),
            probability: 1.0,
        },
    ];
    let err = with_transitions(&ts).unwrap_err();
    assert!(err.issues().iter().any(|i| matches!(i, Issue::OutOfRange { entity, property, .. }
        if entity == "too_likely" && property == "hasTransitionProbability")));
    assert!(err.to_string().contains("too_likely"));
}

#[test]
fn json_without_expression_names_the_field() {
    let text = r#"{"entities":[
        {"name":"x","concept":"ObservationFeature","properties":{"hasRangeStart":0,"hasRangeEnd":1,"hasFeatureType":"NOMINAL"}},
        {"name":"s","concept":"State","properties":{"isGoal":false,"isFinalState":true,"isInitialState":true,
            "hasReward":0,"hasObservationFeature":{"@id":"x"}}}]}"#;
    let err = from_json(text).unwrap_err();
    assert!(err.to_string().contains("hasExpression"), "{err}");
    assert!(err
        .issues()
        .iter()
        .any(|i| i.entity() == "s" && i.property() == Some("hasExpression")));
}

#[test]
fn empty_graph_formats() {
    let g = KnowledgeGraph::empty();
    assert_eq!(to_json(&g), "{\"entities\":[]}");
    assert!(parse_turtle(&write_turtle(&g)).unwrap().is_empty());
}
