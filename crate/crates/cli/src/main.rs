use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use blogrank::eval::{evaluate, read_click_log, t_test};
use blogrank::synth::{self, SynthConfig};
use blogrank::{overlap_at_k, rank_news_influence, top_k, GraphConfig, Method, RankVector, SearchIndex, WeblogGraph};
use blogrank_service::{Service, ServiceConfig, ServiceError};
use clap::{Args, CommandFactory, Parser, Subcommand};

mod config;
mod pipeline;
mod stages;

/// Weblog ranking: corpus ingest, graph construction, PageRank/XRank/BlogRank,
/// ranked search and click-log evaluation.
#[derive(Debug, Parser)]
#[command(name = "blogrank", version)]
struct Cli {
    /// TOML file of flag values (key = flag name); command-line flags win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse a JSONL post file into a normalized corpus snapshot.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        /// Glob patterns for multi-weblog hosts, one per line.
        #[arg(long)]
        host_patterns: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the weblog graph with implicit similarity edges.
    BuildGraph(BuildGraphArgs),
    /// Build the full-text index used by `search` and `serve`.
    Index {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute a rank vector over a graph snapshot.
    Rank(RankArgs),
    /// Print the k highest-ranked weblogs.
    Top {
        #[arg(long)]
        ranks: PathBuf,
        #[arg(short, long, default_value_t = 10)]
        k: usize,
    },
    /// Count weblogs shared by the top k of two rankings.
    Overlap {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(short, long, default_value_t = 1000)]
        k: usize,
    },
    /// Rank news URLs by the summed score of the weblogs citing them.
    NewsInfluence {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        ranks: PathBuf,
        /// Print only the first k URLs.
        #[arg(short, long)]
        k: Option<usize>,
    },
    /// Run a ranked keyword search.
    Search {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        ranks: PathBuf,
        #[arg(long)]
        query: String,
        #[arg(long, default_value_t = blogrank::search::DEFAULT_LIMIT)]
        limit: usize,
    },
    /// Evaluate click logs.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Serve the blind search API and the static UI bundle.
    Serve(ServeArgs),
    /// Generate a synthetic corpus.
    Gen(GenArgs),
    /// Build every artifact listed in a manifest, skipping unchanged stages.
    Pipeline {
        #[arg(long)]
        manifest: PathBuf,
        /// Rebuild every stage.
        #[arg(long)]
        force: bool,
    },
}

#[derive(Debug, Args)]
struct BuildGraphArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Glob patterns used to resolve link targets outside the corpus.
    #[arg(long)]
    host_patterns: Option<PathBuf>,
    #[arg(long, default_value_t = GraphConfig::default().min_tags)]
    min_tags: u32,
    #[arg(long, default_value_t = GraphConfig::default().min_authors)]
    min_authors: u32,
    #[arg(long, default_value_t = GraphConfig::default().min_coupling)]
    min_coupling: u32,
    #[arg(long, default_value_t = GraphConfig::default().tag_df_min)]
    tag_df_min: usize,
    #[arg(long, default_value_t = GraphConfig::default().tag_df_max_fraction)]
    tag_df_max_fraction: f64,
    /// Extra author names to ignore, one per line.
    #[arg(long)]
    stoplist: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RankArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long, default_value_t = Method::BlogRank)]
    method: Method,
    /// Tag weight (blogrank only).
    #[arg(long)]
    wt: Option<f64>,
    /// Author weight (blogrank only).
    #[arg(long)]
    wu: Option<f64>,
    /// News weight (blogrank only).
    #[arg(long)]
    wn: Option<f64>,
    #[arg(long)]
    damping: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum EvalCommand {
    /// Per-method Success Index with pairwise t-tests, as JSON.
    Si {
        #[arg(long)]
        clicks: PathBuf,
    },
    /// Welch's t-test between two method groups.
    Ttest {
        #[arg(long)]
        clicks: PathBuf,
        #[arg(long)]
        a: Method,
        #[arg(long)]
        b: Method,
    },
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long)]
    index: Option<PathBuf>,
    #[arg(long)]
    ranks_pagerank: Option<PathBuf>,
    #[arg(long)]
    ranks_xrank: Option<PathBuf>,
    #[arg(long)]
    ranks_blogrank: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Seed for method assignment; default resumes the logged seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    log: PathBuf,
    /// Directory holding the web UI bundle.
    #[arg(long)]
    static_dir: Option<PathBuf>,
    #[arg(long, default_value_t = blogrank::search::DEFAULT_LIMIT)]
    limit: usize,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long, default_value_t = SynthConfig::default().seed)]
    seed: u64,
    #[arg(long, default_value_t = SynthConfig::default().weblogs)]
    weblogs: usize,
    #[arg(long, default_value_t = SynthConfig::default().posts)]
    posts: usize,
    #[arg(long, default_value_t = SynthConfig::default().link_density)]
    link_density: f64,
    #[arg(long, default_value_t = SynthConfig::default().tag_density)]
    tag_density: f64,
    #[arg(long, default_value_t = SynthConfig::default().author_density)]
    author_density: f64,
    #[arg(long, default_value_t = SynthConfig::default().news_density)]
    news_density: f64,
    #[arg(long)]
    out: PathBuf,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .with_context(|| format!("cannot create {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    let mut stdout = std::io::stdout().lock();
    match cli.command {
        Command::Ingest { input, host_patterns, out } => {
            let report = stages::ingest(&input, host_patterns.as_deref(), &out)?;
            for d in &report.diagnostics {
                eprintln!("warning: {d}");
            }
            eprintln!("{}", stages::describe_ingest(&report));
        }
        Command::BuildGraph(args) => {
            let cfg = pipeline::graph_config(&pipeline::GraphSection {
                min_tags: Some(args.min_tags),
                min_authors: Some(args.min_authors),
                min_coupling: Some(args.min_coupling),
                tag_df_min: Some(args.tag_df_min),
                tag_df_max_fraction: Some(args.tag_df_max_fraction),
                stoplist: args.stoplist.clone(),
            })?;
            let stats = stages::build_graph(&args.corpus, args.host_patterns.as_deref(), &cfg, &args.out)?;
            writeln!(stdout, "graph\tnodes\tedges\tedges_per_node\tmean_in_degree\tmean_out_degree")?;
            for (name, s) in [("hyperlink", stats.hyperlink), ("enhanced", stats.enhanced)] {
                writeln!(
                    stdout,
                    "{name}\t{}\t{}\t{:.4}\t{:.4}\t{:.4}",
                    s.nodes, s.edges, s.edges_per_node, s.mean_in_degree, s.mean_out_degree
                )?;
            }
        }
        Command::Index { corpus, out } => {
            eprintln!("{} posts indexed", stages::index(&corpus, &out)?);
        }
        Command::Rank(args) => {
            if args.method != Method::BlogRank && (args.wt.is_some() || args.wu.is_some() || args.wn.is_some()) {
                eprintln!("warning: feature weights are ignored by {}", args.method);
            }
            let cfg = pipeline::rank_config(
                args.method,
                &pipeline::RankSection {
                    wt: args.wt,
                    wu: args.wu,
                    wn: args.wn,
                    damping: args.damping,
                    epsilon: args.epsilon,
                    max_iters: args.max_iters,
                },
            );
            let v = stages::rank(&args.graph, &cfg, &args.out)?;
            if !v.converged {
                eprintln!("warning: stopped after {} iterations without reaching epsilon {}", v.iterations, cfg.epsilon);
            }
            eprintln!("{}: {}", args.method, stages::describe_rank(&v));
        }
        Command::Top { ranks, k } => {
            for (i, (id, score)) in top_k(&RankVector::load(&ranks)?, k)?.into_iter().enumerate() {
                writeln!(stdout, "{}\t{id}\t{score}", i + 1)?;
            }
        }
        Command::Overlap { a, b, k } => {
            let o = overlap_at_k(&RankVector::load(&a)?, &RankVector::load(&b)?, k)?;
            writeln!(stdout, "common\tk\tfraction\n{}\t{k}\t{}", o.common, o.fraction)?;
        }
        Command::NewsInfluence { graph, ranks, k } => {
            let influence = rank_news_influence(&WeblogGraph::load(&graph)?, &RankVector::load(&ranks)?);
            for (url, score) in influence.into_iter().take(k.unwrap_or(usize::MAX)) {
                writeln!(stdout, "{url}\t{score}")?;
            }
        }
        Command::Search { index, ranks, query, limit } => {
            let results = SearchIndex::load(&index)?.search(&query, &RankVector::load(&ranks)?, limit)?;
            for r in results {
                let ts = r.published_at.map(|t| t.to_rfc3339()).unwrap_or_default();
                writeln!(stdout, "{}\t{}\t{}\t{ts}\t{}", r.position, r.weblog_score, r.weblog_id, r.permalink)?;
            }
        }
        Command::Eval(EvalCommand::Si { clicks }) => {
            let sessions = read_click_log(BufReader::new(
                File::open(&clicks).with_context(|| format!("cannot open {}", clicks.display()))?,
            ))?;
            serde_json::to_writer_pretty(&mut stdout, &evaluate(&sessions))?;
            writeln!(stdout)?;
        }
        Command::Eval(EvalCommand::Ttest { clicks, a, b }) => {
            let sessions = read_click_log(BufReader::new(
                File::open(&clicks).with_context(|| format!("cannot open {}", clicks.display()))?,
            ))?;
            let report = evaluate(&sessions);
            let (ga, gb) = (&report.si.groups[&a], &report.si.groups[&b]);
            let test = t_test(&ga.values, &gb.values)?;
            let out = serde_json::json!({
                "a": { "method": a, "count": ga.count, "mean": ga.mean },
                "b": { "method": b, "count": gb.count, "mean": gb.mean },
                "t": test.t,
                "df": test.df,
                "p_two_tailed": test.p_two_tailed,
                "p_one_tailed": test.p_one_tailed,
            });
            serde_json::to_writer_pretty(&mut stdout, &out)?;
            writeln!(stdout)?;
        }
        Command::Serve(args) => serve(args)?,
        Command::Gen(args) => {
            let cfg = SynthConfig {
                seed: args.seed,
                weblogs: args.weblogs,
                posts: args.posts,
                link_density: args.link_density,
                tag_density: args.tag_density,
                author_density: args.author_density,
                news_density: args.news_density,
            };
            let records = synth::generate(&cfg)?;
            synth::write_jsonl(&records, create(&args.out)?)
                .with_context(|| format!("cannot write {}", args.out.display()))?;
            eprintln!("{} posts written", records.len());
        }
        Command::Pipeline { manifest, force } => {
            pipeline::run(&manifest, force)?;
        }
    }
    Ok(())
}

fn serve(args: ServeArgs) -> Result<()> {
    let mut ranks = BTreeMap::new();
    for (method, path) in [
        (Method::PageRank, &args.ranks_pagerank),
        (Method::XRank, &args.ranks_xrank),
        (Method::BlogRank, &args.ranks_blogrank),
    ] {
        if let Some(p) = path {
            ranks.insert(method, RankVector::load(p)?);
        }
    }
    if ranks.is_empty() {
        bail!(blogrank::Error::InvalidConfig("serve needs at least one --ranks-<method> file".into()));
    }
    let index = args.index.as_deref().map(SearchIndex::load).transpose()?;
    if index.is_none() {
        eprintln!("warning: no --index given; searches will return 503");
    }
    let config = ServiceConfig { log_path: args.log, seed: args.seed, result_limit: args.limit };
    let service = Arc::new(Service::open(index, ranks, config)?);
    let addr: SocketAddr = format!("{}:{}", args.host, args.port)
        .parse()
        .map_err(|e| blogrank::Error::InvalidConfig(format!("bad address: {e}")))?;
    let runtime = tokio::runtime::Runtime::new().context("cannot start async runtime")?;
    runtime.block_on(blogrank_service::serve(service, args.static_dir, addr))?;
    Ok(())
}

/// Exit status by failure class.
mod exit {
    pub const FAILURE: u8 = 1;
    pub const USAGE: u8 = 2;
    pub const INPUT: u8 = 3;
    pub const IO: u8 = 4;
    pub const CONFIG: u8 = 5;
    pub const SERVICE: u8 = 6;
}

fn core_class(e: &blogrank::Error) -> u8 {
    use blogrank::Error::*;
    match e {
        Io { .. } => exit::IO,
        MalformedUrl { .. } | CorruptInput { .. } | Parse { .. } => exit::INPUT,
        InvalidConfig(_) | MismatchedNodeSets | InsufficientData(_) | EmptyQuery => exit::CONFIG,
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<blogrank::Error>() {
            return core_class(e);
        }
        if let Some(e) = cause.downcast_ref::<ServiceError>() {
            return match e {
                ServiceError::Core(inner) => core_class(inner),
                ServiceError::Log { .. } => exit::IO,
                _ => exit::SERVICE,
            };
        }
        if cause.is::<toml::de::Error>() || cause.is::<serde_json::Error>() {
            return exit::INPUT;
        }
        if cause.is::<std::io::Error>() {
            return exit::IO;
        }
    }
    exit::FAILURE
}

fn parse_args() -> Result<Cli, clap::Error> {
    let args: Vec<OsString> = std::env::args_os().collect();
    let Some(path) = config::config_path(&args) else {
        return Cli::try_parse_from(args);
    };
    let merged = config::load(Path::new(&path)).and_then(|table| config::merge(&Cli::command(), args, &table));
    match merged {
        Ok(args) => Cli::try_parse_from(args),
        Err(e) => Err(Cli::command().error(clap::error::ErrorKind::InvalidValue, format!("{e:#}"))),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();

    let cli = match parse_args() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
