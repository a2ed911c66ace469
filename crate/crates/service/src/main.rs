use std::error::Error;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use kgpolicy_core::bench::{run_benchmark, stratified_sample, write_report, BenchConfig};
use kgpolicy_core::compose::ComposerConfig;
use kgpolicy_core::derive::{fit_hmm, hmm_to_kg, read_log};
use kgpolicy_core::dqn::Environment;
use kgpolicy_core::embed::{build_vocabulary, export_tsv, train, TrainConfig};
use kgpolicy_core::store::GraphStore;
use kgpolicy_core::vh::load_corpus;
use kgpolicy_service::{embedding_paths, parse_request, serve, Engine, BIND_ENV, DEFAULT_BIND};

#[derive(Parser)]
#[command(name = "kgpolicy", version, about = "Compose agent policies from MDP knowledge graphs")]
#[command(arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a directory of activity scripts into a graph store
    Ingest {
        dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a model to a CSV log and add it to a graph store
    Derive {
        csv: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Activity name; defaults to the file stem
        #[arg(long)]
        activity: Option<String>,
    },
    /// Train entity embeddings and export `<out>_vectors.tsv` / `<out>_metadata.tsv`
    Train {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        learning_rate: Option<f64>,
    },
    /// Compose policies for one request and print them as JSON
    Compose {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        /// Request JSON: {"stateName": ...} or {"featureValues": {...}}, optionally with "activity"
        #[arg(long)]
        state: String,
        #[arg(long, default_value_t = 0.25)]
        max_distance: f64,
        #[arg(long, default_value_t = 2.0)]
        radius_cap: f64,
    },
    /// Run the ensemble/DQN comparison and write CSV results
    Bench {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,10,100")]
        caps: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        /// Sample this many activities per sequence length (all if omitted)
        #[arg(long)]
        per_category: Option<usize>,
        #[arg(long, default_value_t = 0)]
        sample_seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve POST /policies and GET /health
    Serve {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long, env = BIND_ENV, default_value = DEFAULT_BIND)]
        bind: String,
        #[arg(long, default_value_t = 0.25)]
        max_distance: f64,
        #[arg(long, default_value_t = 2.0)]
        radius_cap: f64,
    },
}

fn composer(max_distance: f64, radius_cap: f64) -> Result<ComposerConfig, Box<dyn Error>> {
    if !(max_distance > 0.0 && max_distance <= radius_cap) {
        return Err("--max-distance must be positive and at most --radius-cap".into());
    }
    Ok(ComposerConfig {
        max_distance,
        radius_cap,
        ..ComposerConfig::default()
    })
}

fn run(cli: Cli) -> Result<(), Box<dyn Error>> {
    match cli.command {
        Command::Ingest { dir, out } => {
            let corpus = load_corpus(&dir)?;
            for (path, why) in &corpus.skipped {
                eprintln!("skipped {}: {why}", path.display());
            }
            let graphs = corpus.graphs()?;
            let written = GraphStore::save(&out, &graphs)?;
            eprintln!("wrote {} activities to {}", written.len(), out.display());
        }
        Command::Derive { csv, out, activity } => {
            let name = activity.unwrap_or_else(|| {
                csv.file_stem()
                    .map_or_else(|| "Derived".to_string(), |s| s.to_string_lossy().into_owned())
            });
            let model = fit_hmm(&read_log(&csv)?)?;
            let graph = hmm_to_kg(&model, &name)?;
            let written = GraphStore::save(&out, std::slice::from_ref(&graph))?;
            eprintln!("wrote {}", written[0].display());
        }
        Command::Train {
            store,
            out,
            iterations,
            epochs,
            batch,
            dim,
            seed,
            learning_rate,
        } => {
            let store = GraphStore::load(&store)?;
            let mut cfg = TrainConfig::default();
            cfg.iterations = iterations.unwrap_or(cfg.iterations);
            cfg.epochs_per_iteration = epochs.unwrap_or(cfg.epochs_per_iteration);
            cfg.batch_size = batch.unwrap_or(cfg.batch_size);
            cfg.dimension = dim.unwrap_or(cfg.dimension);
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.learning_rate = learning_rate.unwrap_or(cfg.learning_rate);
            let vocab = build_vocabulary(store.graphs());
            let (table, report) = train(store.graphs(), &vocab, &cfg)?;
            let (vectors, metadata) = embedding_paths(&out);
            export_tsv(&table, &vocab, &vectors, &metadata)?;
            if let Some(loss) = report.losses.last() {
                eprintln!("final loss {loss:.6}");
            }
            eprintln!("wrote {} and {}", vectors.display(), metadata.display());
        }
        Command::Compose {
            store,
            embeddings,
            state,
            max_distance,
            radius_cap,
        } => {
            let req = parse_request(state.as_bytes())?;
            let engine = Engine::load(&store, &embeddings, composer(max_distance, radius_cap)?)?;
            println!("{}", engine.policies(&req)?.to_json());
        }
        Command::Bench {
            store,
            embeddings,
            caps,
            seeds,
            per_category,
            sample_seed,
            out,
        } => {
            let engine = Engine::load(&store, &embeddings, ComposerConfig::default())?;
            let mut models: Vec<_> = engine.store.models().cloned().collect();
            if let Some(n) = per_category {
                let length = |m: &Arc<_>| Environment::new(Arc::clone(m)).map_or(0, |e| e.sequence_length());
                models = stratified_sample(&models, length, n, sample_seed);
            }
            let cfg = BenchConfig {
                caps,
                seeds: (0..seeds).collect(),
                ..BenchConfig::default()
            };
            let report = run_benchmark(&models, &engine.space, &cfg);
            write_report(&report, &out)?;
            let failed = report.rows.iter().filter(|r| r.error.is_some()).count();
            eprintln!("{} rows ({failed} failed) written to {}", report.rows.len(), out.display());
            if let Some(r) = report.mean_commit_radius() {
                eprintln!("mean commit radius {r:.4}");
            }
        }
        Command::Serve {
            store,
            embeddings,
            bind,
            max_distance,
            radius_cap,
        } => {
            let engine = Arc::new(Engine::load(&store, &embeddings, composer(max_distance, radius_cap)?)?);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(serve(engine, &bind))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
