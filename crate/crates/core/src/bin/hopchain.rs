use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hopchain::config::PipelineConfig;
use hopchain::corpus::{Corpus, CorpusBuilder, IngestOptions, UnknownEntityPolicy};
use hopchain::eval::{read_evidence_jsonl, BucketRule};
use hopchain::graph::build_graph;
use hopchain::mining::mine_with_redemption;
use hopchain::pipeline::{evaluate_run, read_pairs_jsonl, run_retrieve, write_atomic, Retriever};
use hopchain::scoring::{ScorerKind, ServiceConfig};
use hopchain::train::{augment_training_set, export_training_jsonl, samples_from_evidence};
use hopchain::Error;

/// Overrides the embedding service endpoint. A configured service gets the
/// new endpoint; without any embedding source, a service is created.
const ENDPOINT_ENV: &str = "HOPCHAIN_EMBED_ENDPOINT";

#[derive(Parser)]
#[command(
    name = "hopchain",
    version,
    about = "Multi-hop evidence path retrieval over an entity-annotated corpus"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate corpus JSONL files and write a store directory.
    Ingest {
        #[command(flatten)]
        common: CommonArgs,
        /// Corpus JSONL file; repeatable.
        #[arg(long = "corpus")]
        corpus: Vec<PathBuf>,
        /// Entity vocabulary JSONL.
        #[arg(long)]
        entities: Option<PathBuf>,
        /// Fail on mentions of entities missing from the vocabulary.
        #[arg(long)]
        reject_unknown_entities: bool,
        /// Replace an existing store.
        #[arg(long)]
        force: bool,
    },
    /// Mine, rank, and prepare evidence for every pair in a pairs file.
    Retrieve {
        #[command(flatten)]
        common: CommonArgs,
        /// JSONL of {"head": ..., "tail": ...}.
        #[arg(long)]
        pairs: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute path- and passage-level recall of a retrieve run.
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        /// Output directory of a retrieve run.
        #[arg(long)]
        run: PathBuf,
        /// Gold evidence JSONL.
        #[arg(long)]
        gold: PathBuf,
        /// Where to write the JSON report.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Build contrastive training samples from gold evidence and write JSONL.
    ExportTraining {
        #[command(flatten)]
        common: CommonArgs,
        /// Gold evidence JSONL.
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the passage graph of one pair as tab-separated edges.
    DumpGraph {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        head: String,
        #[arg(long)]
        tail: String,
        /// Print mined paths as JSONL instead of edges.
        #[arg(long)]
        paths: bool,
    },
}

#[derive(Args)]
struct CommonArgs {
    /// JSON configuration file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Store directory.
    #[arg(long)]
    store: Option<PathBuf>,
    #[arg(long)]
    max_hops: Option<usize>,
    #[arg(long)]
    top_k: Option<usize>,
    /// Token budget of prepared contexts.
    #[arg(long)]
    budget: Option<usize>,
    /// Documents kept per entity when building a graph.
    #[arg(long)]
    doc_cap: Option<usize>,
    /// bm25, dense_pair, dense_sequential, or random.
    #[arg(long)]
    scorer: Option<ScorerKind>,
    #[arg(long)]
    bm25_k1: Option<f64>,
    #[arg(long)]
    bm25_b: Option<f64>,
    /// Embedding file.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Embedding service endpoint.
    #[arg(long)]
    embed_endpoint: Option<String>,
    #[arg(long)]
    embed_timeout_ms: Option<u64>,
    #[arg(long)]
    embed_max_attempts: Option<u32>,
    #[arg(long)]
    embed_batch_size: Option<usize>,
    /// lt (hops < boundary is short) or le (hops <= boundary is short).
    #[arg(long)]
    bucket_rule: Option<BucketRule>,
    #[arg(long)]
    bucket_boundary: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    workers: Option<usize>,
}

impl CommonArgs {
    fn resolve(&self) -> Result<PipelineConfig, Error> {
        let mut c = match &self.config {
            Some(path) => PipelineConfig::from_file(path)?,
            None => PipelineConfig::default(),
        };
        macro_rules! set {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$flag.clone() { c.$($field).+ = v; })*
            };
        }
        set!(
            max_hops => max_hops,
            top_k => top_k,
            budget => budget,
            doc_cap => doc_cap,
            scorer => scorer,
            bm25_k1 => bm25.k1,
            bm25_b => bm25.b,
            bucket_rule => bucket_rule,
            bucket_boundary => bucket_boundary,
            seed => seed,
            workers => workers,
        );
        if let Some(store) = &self.store {
            c.store = Some(store.clone());
        }
        if let Some(file) = &self.embeddings {
            c.embeddings.file = Some(file.clone());
            c.embeddings.service = None;
        }
        let endpoint = self.embed_endpoint.clone().or_else(|| {
            std::env::var(ENDPOINT_ENV)
                .ok()
                .filter(|v| !v.is_empty())
                .filter(|_| c.embeddings.file.is_none() || c.embeddings.service.is_some())
        });
        if let Some(endpoint) = endpoint {
            c.embeddings.file = None;
            match c.embeddings.service.as_mut() {
                Some(s) => s.endpoint = endpoint,
                None => c.embeddings.service = Some(ServiceConfig::new(endpoint)),
            }
        }
        if let Some(s) = c.embeddings.service.as_mut() {
            if let Some(v) = self.embed_timeout_ms {
                s.timeout_ms = v;
            }
            if let Some(v) = self.embed_max_attempts {
                s.max_attempts = v;
            }
            if let Some(v) = self.embed_batch_size {
                s.batch_size = v;
            }
        }
        c.validate()?;
        Ok(c)
    }
}

fn open(path: &Path) -> Result<BufReader<File>, Error> {
    File::open(path).map(BufReader::new).map_err(|e| Error::Io {
        context: path.display().to_string(),
        source: e,
    })
}

fn load_store(config: &PipelineConfig) -> Result<Corpus, Error> {
    Corpus::load(config.store_dir()?)
}

/// Failure of a command: the message and the process exit status.
struct Failure(String, u8);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if matches!(e, Error::Config(_)) { 2 } else { 1 };
        Failure(e.to_string(), code)
    }
}

fn with_file(path: &Path, e: Error) -> Failure {
    Failure(format!("{}: {e}", path.display()), 1)
}

fn ingest(
    common: &CommonArgs,
    corpus: &[PathBuf],
    entities: Option<&PathBuf>,
    reject_unknown: bool,
    force: bool,
) -> Result<(), Failure> {
    let mut config = common.resolve()?;
    if !corpus.is_empty() {
        config.corpus = corpus.to_vec();
    }
    if let Some(e) = entities {
        config.entities = Some(e.clone());
    }
    config.reject_unknown_entities |= reject_unknown;
    let store = config.store_dir()?.to_path_buf();
    if config.corpus.is_empty() {
        return Err(Error::Config(vec!["no corpus files given (corpus / --corpus)".into()]).into());
    }
    let manifest = store.join("manifest.json");
    if manifest.exists() {
        if !force {
            return Err(Failure(
                format!("{} already holds a store; pass --force to replace it", store.display()),
                1,
            ));
        }
        let docs = store.join("docs");
        if docs.exists() {
            std::fs::remove_dir_all(&docs).map_err(|e| Failure(format!("{}: {e}", docs.display()), 1))?;
        }
    }

    let policy = if config.reject_unknown_entities {
        UnknownEntityPolicy::Reject
    } else {
        UnknownEntityPolicy::AutoRegister
    };
    let mut builder = CorpusBuilder::new(IngestOptions {
        unknown_entities: policy,
    });
    if let Some(path) = &config.entities {
        builder.read_entities(open(path)?).map_err(|e| with_file(path, e))?;
    }
    for path in &config.corpus {
        builder.read_documents(open(path)?).map_err(|e| with_file(path, e))?;
    }
    let corpus = builder.finish();
    corpus.save(&store)?;
    let n = corpus.counts();
    println!(
        "documents\t{}\npassages\t{}\nmentions\t{}\nentities\t{}",
        n.documents, n.passages, n.mentions, n.entities
    );
    Ok(())
}

fn retrieve(common: &CommonArgs, pairs: &Path, out: &Path) -> Result<(), Failure> {
    let config = common.resolve()?;
    let corpus = load_store(&config)?;
    let pairs = read_pairs_jsonl(open(pairs)?).map_err(|e| with_file(pairs, e))?;
    let retriever = Retriever::new(&corpus, &config)?;
    let outcome = run_retrieve(&retriever, &pairs, out)?;
    let failed = outcome.failed();
    println!("pairs\t{}\nfailed\t{failed}", outcome.entries.len());
    for e in outcome.entries.iter().filter(|e| e.error.is_some()) {
        eprintln!(
            "pair {} ({} -> {}): {}",
            e.key,
            e.head,
            e.tail,
            e.error.as_deref().unwrap_or("")
        );
    }
    if failed > 0 {
        return Err(Failure(format!("{failed} pair(s) failed"), 1));
    }
    Ok(())
}

fn evaluate(common: &CommonArgs, run: &Path, gold: &Path, report: Option<&PathBuf>) -> Result<(), Failure> {
    let config = common.resolve()?;
    if !run.is_dir() {
        return Err(Failure(format!("{}: run directory not found", run.display()), 1));
    }
    let gold_records = read_evidence_jsonl(open(gold)?).map_err(|e| with_file(gold, e))?;
    let result = evaluate_run(run, &gold_records, &config)?;
    print!("{}", result.render_table());
    if let Some(path) = report {
        let mut bytes = serde_json::to_vec_pretty(&result).map_err(Error::from)?;
        bytes.push(b'\n');
        write_atomic(path, &bytes)?;
    }
    Ok(())
}

fn export_training(common: &CommonArgs, gold: &Path, out: &Path) -> Result<(), Failure> {
    let config = common.resolve()?;
    let corpus = load_store(&config)?;
    let records = read_evidence_jsonl(open(gold)?).map_err(|e| with_file(gold, e))?;
    let samples = samples_from_evidence(&corpus, &records)?;
    let augmented = augment_training_set(&samples, |id| corpus.passage(id).map(|p| p.text()))?;
    let n = export_training_jsonl(&augmented, out)?;
    println!("samples\t{}\nrecords\t{n}", samples.len());
    Ok(())
}

fn dump_graph(common: &CommonArgs, head: &str, tail: &str, paths: bool) -> Result<(), Failure> {
    let config = common.resolve()?;
    let corpus = load_store(&config)?;
    let graph = build_graph(&corpus, head, tail, config.doc_cap)?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let written = if paths {
        let report = mine_with_redemption(&graph, config.max_hops);
        report.paths.iter().try_for_each(|p| {
            let line = serde_json::to_string(&p.to_record()).expect("path record serializes");
            writeln!(out, "{line}")
        })
    } else {
        out.write_all(graph.dump_edges().as_bytes())
    };
    match written {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Failure(format!("writing output: {e}"), 1)),
        _ => Ok(()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Ingest {
            common,
            corpus,
            entities,
            reject_unknown_entities,
            force,
        } => ingest(common, corpus, entities.as_ref(), *reject_unknown_entities, *force),
        Command::Retrieve { common, pairs, out } => retrieve(common, pairs, out),
        Command::Evaluate {
            common,
            run,
            gold,
            report,
        } => evaluate(common, run, gold, report.as_ref()),
        Command::ExportTraining { common, gold, out } => export_training(common, gold, out),
        Command::DumpGraph {
            common,
            head,
            tail,
            paths,
        } => dump_graph(common, head, tail, *paths),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(message, code)) => {
            eprintln!("error: {message}");
            ExitCode::from(code)
        }
    }
}
