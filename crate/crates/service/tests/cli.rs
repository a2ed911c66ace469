mod common;

use std::process::Command;

fn kgpolicy() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kgpolicy"))
}

#[test]
fn no_arguments_prints_usage() {
    let out = kgpolicy().output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn ingest_train_and_compose() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store");
    let out = kgpolicy()
        .arg("ingest")
        .arg(common::fixtures().join("scripts"))
        .arg("--out")
        .arg(&store)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    std::fs::copy(common::fixtures().join("watch_tv_49.ttl"), store.join("Watch_TV_49.ttl")).unwrap();

    // zero iterations exports the initial table
    let prefix = dir.path().join("emb0");
    let status = kgpolicy()
        .args(["train", "--iterations", "0", "--store"])
        .arg(&store)
        .arg("--out")
        .arg(&prefix)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(dir.path().join("emb0_vectors.tsv").exists());
    assert!(dir.path().join("emb0_metadata.tsv").exists());

    let (_, prefix) = common::write_artifacts(dir.path());
    let out = kgpolicy()
        .args(["compose", "--state", r#"{"stateName":"InitialState_Watch_TV_49"}"#, "--store"])
        .arg(&store)
        .arg("--embeddings")
        .arg(&prefix)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let best = &v["policies"][0];
    assert_eq!(best["actions"].as_array().unwrap().len(), 7);
    assert_eq!(best["actions"][0], "Walk_living_room_1");

    let out = kgpolicy()
        .args(["compose", "--state", r#"{"stateName":"Nowhere"}"#, "--store"])
        .arg(&store)
        .arg("--embeddings")
        .arg(&prefix)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn derive_writes_a_loadable_graph() {
    let dir = tempfile::tempdir().unwrap();
    let out = kgpolicy()
        .arg("derive")
        .arg(common::fixtures().join("logs/hypertension.csv"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let store = kgpolicy_core::store::GraphStore::load(dir.path()).unwrap();
    assert_eq!(store.activity_names().collect::<Vec<_>>(), ["hypertension"]);
}

#[test]
fn bench_writes_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let (store, prefix) = common::write_artifacts(dir.path());
    let results = dir.path().join("results");
    let out = kgpolicy()
        .args(["bench", "--caps", "1,10", "--seeds", "1", "--per-category", "1", "--store"])
        .arg(&store)
        .arg("--embeddings")
        .arg(&prefix)
        .arg("--out")
        .arg(&results)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in kgpolicy_core::bench::CSV_FILES {
        assert!(results.join(f).exists(), "{f}");
    }
}
