use std::collections::BTreeMap;
use std::path::PathBuf;

use kgpolicy_core::expr::Value;
use kgpolicy_core::kg::json::to_json;
use kgpolicy_core::kg::turtle::parse_turtle;
use kgpolicy_core::kg::KnowledgeGraph;
use kgpolicy_core::sim::SimConfig;
use kgpolicy_core::store::{GraphStore, StoreError};
use kgpolicy_core::vh::load_corpus;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn watch_tv() -> KnowledgeGraph {
    parse_turtle(&std::fs::read_to_string(fixtures().join("watch_tv_49.ttl")).unwrap()).unwrap()
}

fn corpus_graphs() -> Vec<KnowledgeGraph> {
    load_corpus(&fixtures().join("scripts")).unwrap().graphs().unwrap()
}

#[test]
fn save_and_load_round_trip() {
    let mut graphs = corpus_graphs();
    graphs.push(watch_tv());
    let dir = tempfile::tempdir().unwrap();
    let written = GraphStore::save(dir.path(), &graphs).unwrap();
    assert_eq!(written.len(), graphs.len());
    assert!(written.iter().any(|p| p.ends_with("Watch_TV_49.ttl")));

    let store = GraphStore::load(dir.path()).unwrap();
    assert_eq!(store.activity_names().count(), graphs.len());
    let loaded = store.graphs().iter().find(|g| g.activity("Watch_TV_49").is_some()).unwrap();
    assert_eq!(loaded.triple_set(), watch_tv().triple_set());
}

#[test]
fn json_files_are_loaded_too() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tv.json"), to_json(&watch_tv())).unwrap();
    std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
    let store = GraphStore::load(dir.path()).unwrap();
    assert_eq!(store.activity_names().collect::<Vec<_>>(), ["Watch_TV_49"]);
}

#[test]
fn load_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(GraphStore::load(dir.path()), Err(StoreError::Empty(_))));

    std::fs::write(dir.path().join("a.ttl"), "@prefix : <http://x/> .\nthis is not turtle").unwrap();
    assert!(matches!(GraphStore::load(dir.path()), Err(StoreError::Graph { .. })));

    assert!(matches!(
        GraphStore::new(vec![watch_tv(), watch_tv()]),
        Err(StoreError::DuplicateActivity(a)) if a == "Watch_TV_49"
    ));
}

#[test]
fn simulation_by_state_name() {
    let store = GraphStore::new(vec![watch_tv()]).unwrap();
    let sim = store
        .simulation_at_state("Walk_living_room_1_Done", None, SimConfig::default())
        .unwrap();
    assert_eq!(sim.state().label, "Walk_living_room_1_Done");
    assert_eq!(sim.model().name(), "Watch_TV_49");

    let err = store.simulation_at_state("Nowhere", None, SimConfig::default()).unwrap_err();
    assert!(err.is_unknown_situation());
    let err = store
        .simulation_at_state("InitialState_Watch_TV_49", Some("Other"), SimConfig::default())
        .unwrap_err();
    assert!(matches!(err, StoreError::UnknownActivity(_)));
}

#[test]
fn simulation_by_features() {
    let mut graphs = corpus_graphs();
    graphs.push(watch_tv());
    let store = GraphStore::new(graphs).unwrap();
    let tv = store.model("Watch_TV_49").unwrap();
    let features = tv.default_features();
    let sim = store.simulation_from_features(&features, None, SimConfig::default()).unwrap();
    assert_eq!(sim.model().name(), "Watch_TV_49");
    assert_eq!(sim.state().label, tv.initial_state().unwrap());

    let nonsense: BTreeMap<String, Value> = [("NoSuchFeature".to_string(), Value::Number(1.0))].into();
    let err = store.simulation_from_features(&nonsense, None, SimConfig::default()).unwrap_err();
    assert!(err.is_unknown_situation(), "{err}");
}
