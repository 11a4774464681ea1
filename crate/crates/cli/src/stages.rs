//! Stage operations shared by the individual subcommands and the pipeline.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use anyhow::{Context, Result};
use blogrank::graph::GraphStats;
use blogrank::ingest::{default_host_patterns, IngestReport};
use blogrank::{
    aggregate, build_index, compute_similarity, graph_stats, load_corpus, GraphConfig, HostPatterns, RankConfig,
    RankVector, WeblogGraph,
};

pub fn host_patterns(path: Option<&Path>) -> Result<HostPatterns> {
    match path {
        Some(p) => Ok(HostPatterns::load(p)?),
        None => Ok(default_host_patterns()),
    }
}

pub fn ingest(input: &Path, patterns: Option<&Path>, out: &Path) -> Result<IngestReport> {
    let (corpus, report) = load_corpus(input, host_patterns(patterns)?)?;
    let file = File::create(out).with_context(|| format!("cannot create {}", out.display()))?;
    corpus
        .write_snapshot(BufWriter::new(file))
        .with_context(|| format!("cannot write {}", out.display()))?;
    Ok(report)
}

pub fn build_graph(corpus: &Path, patterns: Option<&Path>, cfg: &GraphConfig, out: &Path) -> Result<GraphStats> {
    cfg.validate()?;
    let (corpus, _) = load_corpus(corpus, host_patterns(patterns)?)?;
    let graph = compute_similarity(aggregate(&corpus), &corpus, cfg)?;
    graph.save(out)?;
    Ok(graph_stats(&graph))
}

pub fn rank(graph: &Path, cfg: &RankConfig, out: &Path) -> Result<RankVector> {
    cfg.validate()?;
    let graph = WeblogGraph::load(graph)?;
    let vector = blogrank::rank(&graph, cfg)?;
    vector.save(out)?;
    Ok(vector)
}

pub fn index(corpus: &Path, out: &Path) -> Result<usize> {
    let (corpus, _) = load_corpus(corpus, HostPatterns::empty())?;
    let index = build_index(&corpus);
    index.save(out)?;
    Ok(index.doc_count())
}

pub fn describe_ingest(report: &IngestReport) -> String {
    format!(
        "kept {} of {} records ({} malformed, {} duplicates, {} links dropped)",
        report.kept, report.records_read, report.malformed, report.duplicates, report.dropped_links
    )
}

pub fn describe_rank(v: &RankVector) -> String {
    format!(
        "{} weblogs, {} iterations, residual {:.3e}{}",
        v.len(),
        v.iterations,
        v.residual,
        if v.converged { "" } else { " (not converged)" }
    )
}
