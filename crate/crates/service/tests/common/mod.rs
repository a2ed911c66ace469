#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use kgpolicy_core::compose::ComposerConfig;
use kgpolicy_core::embed::{build_vocabulary, export_tsv, train, EmbeddingSpace, TrainConfig};
use kgpolicy_core::kg::turtle::parse_turtle;
use kgpolicy_core::kg::KnowledgeGraph;
use kgpolicy_core::store::GraphStore;
use kgpolicy_core::vh::load_corpus;
use kgpolicy_service::{embedding_paths, Engine};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

/// The Watch_TV_49 listing plus the bundled scripts.
pub fn mini_corpus() -> Vec<KnowledgeGraph> {
    let mut graphs = load_corpus(&fixtures().join("scripts")).unwrap().graphs().unwrap();
    let tv = std::fs::read_to_string(fixtures().join("watch_tv_49.ttl")).unwrap();
    graphs.push(parse_turtle(&tv).unwrap());
    graphs
}

pub struct Trained {
    pub graphs: Vec<KnowledgeGraph>,
    pub space: EmbeddingSpace,
}

/// Desk-scale embeddings over the mini-corpus, trained once per test binary.
pub fn trained() -> &'static Trained {
    static CELL: OnceLock<Trained> = OnceLock::new();
    CELL.get_or_init(|| {
        let graphs = mini_corpus();
        let vocab = build_vocabulary(&graphs);
        let (table, _) = train(&graphs, &vocab, &TrainConfig::desk()).unwrap();
        Trained {
            space: EmbeddingSpace::new(vocab, table).unwrap(),
            graphs,
        }
    })
}

pub fn engine() -> Engine {
    let t = trained();
    Engine {
        store: GraphStore::new(t.graphs.clone()).unwrap(),
        space: t.space.clone(),
        composer: ComposerConfig::default(),
    }
}

/// Writes the store and embeddings to disk; returns (store dir, embeddings prefix).
pub fn write_artifacts(dir: &Path) -> (PathBuf, PathBuf) {
    let t = trained();
    let store = dir.join("store");
    GraphStore::save(&store, &t.graphs).unwrap();
    let prefix = dir.join("emb");
    let (v, m) = embedding_paths(&prefix);
    export_tsv(t.space.table(), t.space.vocabulary(), &v, &m).unwrap();
    (store, prefix)
}
