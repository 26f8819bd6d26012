use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;
use walkdir::WalkDir;

use cedgsearch::cedg::{build_cedg, serialize, to_dot};
use cedgsearch::encoder::{CodeSearchModel, EmbeddingProvider, EncoderError, ProcessProvider};
use cedgsearch::frontend::{deduplicate, extract_functions, read_corpus, write_corpus, FunctionUnit};
use cedgsearch::harness::{cross_validate, evaluate, generate_synthetic_corpus, EvalOptions};
use cedgsearch::index::SearchIndex;
use cedgsearch::nnkernel::{Modalities, ModelConfig};
use cedgsearch::trainer::{kfold_split, pairs_from_units, train, write_loss_csv, TrainConfig};

/// Semantic code search over Solidity functions.
#[derive(Parser)]
#[command(name = "cedgsearch", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract function units from every .sol file under a directory.
    Ingest(IngestArgs),
    /// Print the dependency graph of one unit.
    Graph(GraphArgs),
    /// Train a model on the documented units of a corpus.
    Train(TrainArgs),
    /// Encode every unit of a corpus into a search index.
    Index(IndexArgs),
    /// Answer a natural-language query from an index.
    Search(SearchArgs),
    /// Evaluate a trained model fold by fold.
    Eval(EvalArgs),
    /// Write a synthetic corpus.
    Synth(SynthArgs),
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    src: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Drop units whose normalized source repeats an earlier unit.
    #[arg(long)]
    dedup: bool,
}

#[derive(Args)]
struct GraphArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    id: String,
    /// Graphviz output instead of JSON.
    #[arg(long)]
    dot: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long, default_value_t = 64)]
    out_dim: usize,
    #[arg(long, default_value_t = 8)]
    heads: usize,
    #[arg(long, default_value_t = 8)]
    graph_heads: usize,
    #[arg(long, default_value_t = 0.05)]
    margin: f64,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Cross-validate with this many folds before training the final model.
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long, default_value_t = Modalities::ALL)]
    modalities: Modalities,
    /// Rounds of graph attention.
    #[arg(long, default_value_t = 1)]
    hops: usize,
    /// Node slots in the graph readout.
    #[arg(long, default_value_t = 32)]
    max_nodes: usize,
    /// Words seen fewer times map to the unknown word.
    #[arg(long, default_value_t = 2)]
    min_count: usize,
    /// Loss log CSV; defaults to `<out>.loss.csv`.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Cross-validation report JSON; defaults to `<out>.cv.json`.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct IndexArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    query: String,
    #[arg(short = 'k', long = "k", default_value_t = 10)]
    k: usize,
    /// Shell command of an external embedding provider.
    #[arg(long)]
    provider: Option<String>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, value_delimiter = ',', default_value = "1,5,10")]
    ks: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    mrr_cutoff: usize,
    /// Seed of the fold split.
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn load_corpus(path: &Path) -> Result<Vec<FunctionUnit>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    read_corpus(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_model(path: &Path) -> Result<CodeSearchModel> {
    CodeSearchModel::load(path).with_context(|| format!("loading model {}", path.display()))
}

fn ingest(args: IngestArgs) -> Result<()> {
    let mut files: Vec<PathBuf> = WalkDir::new(&args.src)
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .filter(|e| e.file_type().is_file() && e.path().extension().is_some_and(|x| x == "sol"))
        .map(|e| e.into_path())
        .collect();
    files.sort();
    let mut units = Vec::new();
    for file in &files {
        let source = fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?;
        let rel = file.strip_prefix(&args.src).unwrap_or(file).to_string_lossy().replace('\\', "/");
        match extract_functions(&source, &rel) {
            Ok(found) => units.extend(found),
            Err(e) => log::warn!("skipping {}: {e}", file.display()),
        }
    }
    let total = units.len();
    if args.dedup {
        units = deduplicate(units);
    }
    fs::write(&args.out, write_corpus(&units)).with_context(|| format!("writing {}", args.out.display()))?;
    eprintln!("{} files, {} units ({} after deduplication) -> {}", files.len(), total, units.len(), args.out.display());
    Ok(())
}

fn graph(args: GraphArgs) -> Result<()> {
    let units = load_corpus(&args.corpus)?;
    let Some(unit) = units.iter().find(|u| u.id == args.id) else {
        bail!("no unit with id {}", args.id);
    };
    let g = build_cedg(unit, &units);
    if args.dot {
        print!("{}", to_dot(&g));
    } else {
        println!("{}", serialize(&g)?);
    }
    Ok(())
}

fn train_command(args: TrainArgs) -> Result<()> {
    let mut model = ModelConfig::with_dims(args.dim, args.out_dim, args.heads, args.graph_heads)?;
    model.margin = args.margin;
    model.modalities = args.modalities;
    model.hops = args.hops;
    model.max_nodes = args.max_nodes;
    let cfg = TrainConfig {
        model,
        epochs: args.epochs,
        batch_size: args.batch,
        learning_rate: args.lr,
        seed: args.seed,
        folds: args.folds,
        min_count: args.min_count,
    };
    cfg.validate()?;
    let units = load_corpus(&args.corpus)?;
    let pairs = pairs_from_units(&units, &cfg.model);
    eprintln!("{} units, {} with docstrings", units.len(), pairs.len());

    if let Some(folds) = cfg.folds {
        let result = cross_validate(&pairs, &cfg, folds, &EvalOptions::default())?;
        let path = args.report.unwrap_or_else(|| with_suffix(&args.out, ".cv.json"));
        fs::write(&path, serde_json::to_string_pretty(&result)?)?;
        eprintln!("cross-validated MRR@10 {:.4} -> {}", result.mean.mrr, path.display());
    }

    let outcome = train(&pairs, &cfg)?;
    outcome.model.save(&args.out)?;
    let log_path = args.log.unwrap_or_else(|| with_suffix(&args.out, ".loss.csv"));
    let mut w = BufWriter::new(fs::File::create(&log_path)?);
    write_loss_csv(&outcome.log, &mut w)?;
    w.flush()?;
    if let Some(last) = outcome.log.last() {
        eprintln!("final mean loss {:.6}", last.mean_loss);
    }
    eprintln!("model -> {}, loss log -> {}", args.out.display(), log_path.display());
    Ok(())
}

fn index_command(args: IndexArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let units = load_corpus(&args.corpus)?;
    let mut index = SearchIndex::new(model.config.out_dim);
    let mut skipped = 0;
    for unit in &units {
        let input = model.prepare_unit(unit, &units);
        let vector = match model.encode_code(&input) {
            Ok(v) => v,
            Err(EncoderError::EmptyCodeUnit) => {
                log::warn!("skipping empty unit {}", unit.id);
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e).with_context(|| format!("encoding {}", unit.id)),
        };
        let meta = json!({
            "path": unit.path,
            "contract": unit.contract,
            "name": unit.name,
            "span": unit.span,
            "docstring": unit.docstring,
            "code": unit.source,
        });
        index.add(&unit.id, vector, Some(meta))?;
    }
    index.save(&args.out)?;
    eprintln!("{} units indexed ({} skipped) -> {}", index.len(), skipped, args.out.display());
    Ok(())
}

fn search(args: SearchArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let index = SearchIndex::load(&args.index).with_context(|| format!("loading index {}", args.index.display()))?;
    if index.dim() != model.config.out_dim {
        bail!("index width {} does not match model width {}", index.dim(), model.config.out_dim);
    }
    let mut provider = args.provider.as_deref().map(ProcessProvider::spawn).transpose()?;
    let query = model.encode_query_with(&args.query, provider.as_mut().map(|p| p as &mut dyn EmbeddingProvider))?;
    let hits = index.search(&query, args.k)?;
    let mut out = std::io::stdout().lock();
    for (rank, hit) in hits.iter().enumerate() {
        let meta = index.metadata(&hit.id);
        let line = json!({
            "rank": rank + 1,
            "id": hit.id,
            "score": hit.score,
            "path": meta.map(|m| &m["path"]),
            "name": meta.map(|m| &m["name"]),
        });
        writeln!(out, "{line}")?;
    }
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let units = load_corpus(&args.corpus)?;
    let pairs = pairs_from_units(&units, &model.config);
    let folds = kfold_split(pairs.len(), args.folds, args.seed)?;
    let opts = EvalOptions { ks: args.ks, mrr_cutoff: args.mrr_cutoff };
    let result = evaluate(&model, &pairs, &folds, &opts)?;
    println!("{}", serde_json::to_string_pretty(&result)?);
    Ok(())
}

fn synth(args: SynthArgs) -> Result<()> {
    let text = generate_synthetic_corpus(args.n, args.seed)?;
    fs::write(&args.out, text).with_context(|| format!("writing {}", args.out.display()))?;
    eprintln!("{} units -> {}", args.n, args.out.display());
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Ingest(a) => ingest(a),
        Command::Graph(a) => graph(a),
        Command::Train(a) => train_command(a),
        Command::Index(a) => index_command(a),
        Command::Search(a) => search(a),
        Command::Eval(a) => eval(a),
        Command::Synth(a) => synth(a),
    }
}
