//! Command-line interface: full experiments, single-sequence reranking,
//! metric scoring of ranked files, exemplar selection, and cache GC.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use harmrank::domain::{ContentItem, ContentSequence};
use harmrank::harness::configfile::ConfigBuilder;
use harmrank::harness::{
    build_rankers, emit_report, load_dataset, run_experiment, AggregateRow, Credentials,
    MetricsReport, ReportFormat,
};
use harmrank::llm::DiskCache;
use harmrank::metrics::compute_all;
use harmrank::prompts::cluster::{select_exemplars, EmbeddingSet};

#[derive(Parser)]
#[command(
    name = "harmrank",
    version,
    about = "Re-rank content sequences to push harmful items to the end, and measure exposure"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a full experiment: sample sequences, apply every configured
    /// ranker, and write aggregate/per-sequence reports.
    Run(RunArgs),
    /// Re-rank one sequence (a dataset file in its current order) and
    /// write the re-ordered JSONL.
    Rerank(RerankArgs),
    /// Score an already-ordered labeled file with TP-k, PP-k, and EWN.
    Metrics(MetricsArgs),
    /// Select representative harmful exemplars via embedding clustering.
    SelectExemplars(SelectExemplarsArgs),
    /// Evict least-recently-used cache entries down to a byte budget.
    CacheGc(CacheGcArgs),
}

/// Flags shared by run/rerank that mirror configuration-file keys.
#[derive(Args)]
struct SharedConfig {
    /// Key-value configuration file; flags given here override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset JSONL: {"id", "text", "label": 0|1, "categories"?}.
    #[arg(long)]
    dataset: Option<String>,
    /// Sequence length.
    #[arg(long)]
    n: Option<usize>,
    /// Sequences per harm fraction.
    #[arg(long)]
    m: Option<usize>,
    /// Harm fraction in (0,1); repeat for a sweep.
    #[arg(long = "harm")]
    harm: Vec<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Ranker: original | oracle | noisy:<acc> | moderation | perspective
    /// | llm | llm:<strategy>. Repeatable.
    #[arg(long = "ranker")]
    rankers: Vec<String>,
    /// Default strategy for bare `llm` rankers: zero-shot | zero-shot-pe
    /// | few-shot-icl.
    #[arg(long)]
    strategy: Option<String>,
    /// Chat model name.
    #[arg(long)]
    model: Option<String>,
    /// Exemplar count for few-shot-icl.
    #[arg(long)]
    exemplars: Option<usize>,
    /// Embeddings JSONL: {"id", "vector"} per line.
    #[arg(long)]
    embeddings: Option<String>,
    /// Output directory (run) or file (rerank).
    #[arg(long)]
    out: Option<String>,
    #[arg(long = "cache-dir")]
    cache_dir: Option<String>,
    #[arg(long = "max-in-flight")]
    max_in_flight: Option<usize>,
    /// Requests-per-minute budget for remote backends.
    #[arg(long)]
    rpm: Option<u32>,
}

impl SharedConfig {
    fn builder(&self) -> Result<ConfigBuilder> {
        let mut builder = match &self.config {
            Some(path) => ConfigBuilder::from_file(path)?,
            None => ConfigBuilder::default(),
        };
        if let Some(dataset) = &self.dataset {
            builder.set("dataset", dataset)?;
        }
        if let Some(n) = self.n {
            builder.set("n", &n.to_string())?;
        }
        if let Some(m) = self.m {
            builder.set("m", &m.to_string())?;
        }
        for fraction in &self.harm {
            builder.set("harm", &fraction.to_string())?;
        }
        if let Some(seed) = self.seed {
            builder.set("seed", &seed.to_string())?;
        }
        if let Some(strategy) = &self.strategy {
            builder.set("strategy", strategy)?;
        }
        for ranker in &self.rankers {
            builder.set("ranker", ranker)?;
        }
        if let Some(model) = &self.model {
            builder.set("model", model)?;
        }
        if let Some(exemplars) = self.exemplars {
            builder.set("exemplars", &exemplars.to_string())?;
        }
        if let Some(embeddings) = &self.embeddings {
            builder.set("embeddings", embeddings)?;
        }
        if let Some(out) = &self.out {
            builder.set("out", out)?;
        }
        if let Some(cache_dir) = &self.cache_dir {
            builder.set("cache-dir", cache_dir)?;
        }
        if let Some(max_in_flight) = self.max_in_flight {
            builder.set("max-in-flight", &max_in_flight.to_string())?;
        }
        if let Some(rpm) = self.rpm {
            builder.set("rpm", &rpm.to_string())?;
        }
        Ok(builder)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    shared: SharedConfig,
}

#[derive(Args)]
struct RerankArgs {
    #[command(flatten)]
    shared: SharedConfig,
}

#[derive(Args)]
struct MetricsArgs {
    /// Ordered, labeled JSONL file to score as-is.
    #[arg(long)]
    dataset: PathBuf,
    /// Comma-separated TP-k cutoffs.
    #[arg(long = "k-tp", default_value = "5,10")]
    k_tp: String,
    /// Comma-separated PP-k cutoffs.
    #[arg(long = "k-pp", default_value = "1,2,3")]
    k_pp: String,
    /// Optional JSON output path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SelectExemplarsArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    /// Number of exemplars (clusters).
    #[arg(long, default_value_t = 4)]
    exemplars: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Optional JSONL output path (defaults to stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CacheGcArgs {
    #[arg(long = "cache-dir")]
    cache_dir: PathBuf,
    /// Byte budget to shrink the cache to.
    #[arg(long = "max-bytes")]
    max_bytes: u64,
}

fn parse_k_list(raw: &str) -> Result<Vec<usize>> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<usize>().context("k values must be integers"))
        .collect()
}

fn print_aggregate_table(rows: &[AggregateRow], k_tp: &[usize], k_pp: &[usize]) {
    let mut header = format!("{:<16} {:>8}", "config", "harm_pct");
    for k in k_tp {
        header.push_str(&format!(" {:>8}", format!("tp{k}")));
    }
    for k in k_pp {
        header.push_str(&format!(" {:>8}", format!("pp{k}")));
    }
    header.push_str(&format!(" {:>8}", "ewn"));
    println!("{header}");
    for row in rows {
        let mut line = format!("{:<16} {:>8}", row.config_id, row.harm_pct);
        for k in k_tp {
            let cell = row.tp.get(k).and_then(|c| c.mean);
            line.push_str(&format!(
                " {:>8}",
                cell.map_or("-".to_string(), |v| format!("{v:.3}"))
            ));
        }
        for k in k_pp {
            let cell = row.pp.get(k).and_then(|c| c.mean);
            line.push_str(&format!(
                " {:>8}",
                cell.map_or("-".to_string(), |v| format!("{v:.3}"))
            ));
        }
        line.push_str(&format!(
            " {:>8}",
            row.ewn.mean.map_or("-".to_string(), |v| format!("{v:.3}"))
        ));
        println!("{line}");
    }
}

async fn cmd_run(args: RunArgs) -> Result<()> {
    let config = args.shared.builder()?.build()?;
    for warning in config.validate()? {
        eprintln!("warning: {warning}");
    }
    let report: MetricsReport = run_experiment(&config).await?;
    print_aggregate_table(&report.aggregates, &config.k_tp, &config.k_pp);

    let out_dir = config
        .out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("harmrank-out"));
    let written = emit_report(
        &report,
        &out_dir,
        &[
            ReportFormat::Json,
            ReportFormat::AggregateCsv,
            ReportFormat::PlotCsv,
        ],
    )?;
    for path in written {
        eprintln!("wrote {}", path.display());
    }
    if let Some(stats) = &report.client_stats {
        eprintln!(
            "backend: {} network calls, {} cache hits, {} retries",
            stats.network_calls, stats.cache_hits, stats.retries
        );
    }
    Ok(())
}

async fn cmd_rerank(args: RerankArgs) -> Result<()> {
    let config = args.shared.builder()?.build()?;
    if config.rankers.len() != 1 {
        bail!("rerank needs exactly one --ranker");
    }
    let items = load_dataset(&config.dataset)?;
    let sequence = ContentSequence::new(items).context("dataset is not a valid sequence")?;
    let credentials = Credentials::from_env();
    let built = build_rankers(&config, &credentials, sequence.items())?;
    let ranker = &built.rankers[0];
    let (ranked, telemetry) = ranker.apply(&sequence).await?;

    let mut lines = String::new();
    for (item, score) in ranked.items().iter().zip(ranked.scores()) {
        let mut record = serde_json::json!({
            "id": item.id().as_str(),
            "text": item.text(),
            "score": score,
        });
        if let Some(label) = item.label() {
            record["label"] = serde_json::json!(u8::from(label));
        }
        if !item.categories().is_empty() {
            record["categories"] = serde_json::json!(item.categories());
        }
        lines.push_str(&record.to_string());
        lines.push('\n');
    }
    match &config.out_dir {
        Some(path) => {
            fs::write(path, lines).with_context(|| format!("writing {}", path.display()))?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{lines}"),
    }
    eprintln!(
        "ranker {}: {} judgments, {} parse failures, {} substituted failures",
        ranker.id, telemetry.judgments, telemetry.parse_failures, telemetry.substituted_failures
    );
    if let Some(client) = &built.chat_client {
        client.flush_cache()?;
    }
    Ok(())
}

fn cmd_metrics(args: MetricsArgs) -> Result<()> {
    let items = load_dataset(&args.dataset)?;
    let labels: Vec<_> = items
        .iter()
        .map(|i: &ContentItem| i.require_label())
        .collect::<Result<_, _>>()
        .context("metrics needs a fully labeled file")?;
    let k_tp = parse_k_list(&args.k_tp)?;
    let k_pp = parse_k_list(&args.k_pp)?;
    let row = compute_all(&labels, &k_tp, &k_pp)?;

    let mut line = String::new();
    for (k, value) in &row.tp {
        line.push_str(&format!("tp{k}={value} "));
    }
    for (k, value) in &row.pp {
        line.push_str(&format!("pp{k}={value} "));
    }
    line.push_str(&format!("ewn={}", row.ewn));
    if row.ewn_degenerate {
        line.push_str(" (degenerate: single-class sequence)");
    }
    println!("{line}");

    if let Some(path) = &args.out {
        let body = serde_json::to_vec_pretty(&row)?;
        fs::write(path, body).with_context(|| format!("writing {}", path.display()))?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_select_exemplars(args: SelectExemplarsArgs) -> Result<()> {
    let items = load_dataset(&args.dataset)?;
    let harmful: Vec<ContentItem> = items
        .into_iter()
        .filter(|i| i.label().is_some_and(|l| l.is_harmful()))
        .collect();
    let embeddings = EmbeddingSet::load_jsonl(&args.embeddings)?;
    let selected = select_exemplars(&harmful, &embeddings, args.exemplars, args.seed)?;

    let mut out: Box<dyn Write> = match &args.out {
        Some(path) => Box::new(
            fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
        ),
        None => Box::new(std::io::stdout()),
    };
    for exemplar in &selected {
        let record = serde_json::json!({
            "id": exemplar.id.as_str(),
            "text": exemplar.text,
        });
        writeln!(out, "{record}")?;
    }
    if let Some(path) = &args.out {
        eprintln!("wrote {} exemplars to {}", selected.len(), path.display());
    }
    Ok(())
}

fn cmd_cache_gc(args: CacheGcArgs) -> Result<()> {
    let cache = DiskCache::open(&args.cache_dir)?;
    let reclaimed = cache.gc(args.max_bytes)?;
    println!(
        "reclaimed {reclaimed} bytes; {} entries remain ({} bytes)",
        cache.len(),
        cache.total_bytes()
    );
    Ok(())
}

#[tokio::main]
async fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => cmd_run(args).await,
        Command::Rerank(args) => cmd_rerank(args).await,
        Command::Metrics(args) => cmd_metrics(args),
        Command::SelectExemplars(args) => cmd_select_exemplars(args),
        Command::CacheGc(args) => cmd_cache_gc(args),
    }
}
