//! Manifest-driven pipeline: ingest, build-graph, rank (one stage per
//! method) and index, in dependency order.
//!
//! The manifest is TOML. Paths are relative to the manifest's directory;
//! artifact paths default to files under `out-dir`. A state file in
//! `out-dir` records, per stage, a SHA-256 over the stage's configuration
//! and input bytes. A stage whose hash is unchanged and whose outputs exist
//! is skipped.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use blogrank::graph::{news_path, nodes_path};
use blogrank::{GraphConfig, Method, RankConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::stages;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct GraphSection {
    pub min_tags: Option<u32>,
    pub min_authors: Option<u32>,
    pub min_coupling: Option<u32>,
    pub tag_df_min: Option<usize>,
    pub tag_df_max_fraction: Option<f64>,
    pub stoplist: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct RankSection {
    pub wt: Option<f64>,
    pub wu: Option<f64>,
    pub wn: Option<f64>,
    pub damping: Option<f64>,
    pub epsilon: Option<f64>,
    pub max_iters: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Manifest {
    pub input: PathBuf,
    pub host_patterns: Option<PathBuf>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    pub corpus: Option<PathBuf>,
    pub graph: Option<PathBuf>,
    pub index: Option<PathBuf>,
    /// Click log location, recorded for the serve and eval steps.
    pub clicks: Option<PathBuf>,
    #[serde(default)]
    pub ranks: BTreeMap<Method, PathBuf>,
    #[serde(default)]
    pub build_graph: GraphSection,
    #[serde(default)]
    pub rank: RankSection,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("artifacts")
}

/// Manifest with every path resolved.
#[derive(Debug, Clone, Serialize)]
pub struct Artifacts {
    pub input: PathBuf,
    pub host_patterns: Option<PathBuf>,
    pub stoplist: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub corpus: PathBuf,
    pub graph: PathBuf,
    pub index: PathBuf,
    pub clicks: PathBuf,
    pub ranks: BTreeMap<Method, PathBuf>,
    pub state: PathBuf,
}

pub fn graph_config(section: &GraphSection) -> Result<GraphConfig> {
    let d = GraphConfig::default();
    let mut cfg = GraphConfig {
        min_tags: section.min_tags.unwrap_or(d.min_tags),
        min_authors: section.min_authors.unwrap_or(d.min_authors),
        min_coupling: section.min_coupling.unwrap_or(d.min_coupling),
        tag_df_min: section.tag_df_min.unwrap_or(d.tag_df_min),
        tag_df_max_fraction: section.tag_df_max_fraction.unwrap_or(d.tag_df_max_fraction),
        author_stoplist: d.author_stoplist,
    };
    if let Some(path) = &section.stoplist {
        cfg.extend_stoplist_from(path)?;
    }
    Ok(cfg)
}

/// The method's preset with the section's overrides applied. Feature
/// weights only matter for methods that include implicit edges.
pub fn rank_config(method: Method, section: &RankSection) -> RankConfig {
    let p = RankConfig::preset(method);
    RankConfig {
        tag_weight: section.wt.unwrap_or(p.tag_weight),
        author_weight: section.wu.unwrap_or(p.author_weight),
        news_weight: section.wn.unwrap_or(p.news_weight),
        damping: section.damping.unwrap_or(p.damping),
        epsilon: section.epsilon.unwrap_or(p.epsilon),
        max_iters: section.max_iters.unwrap_or(p.max_iters),
        ..p
    }
}

impl Manifest {
    pub fn load(path: &Path) -> Result<(Self, Artifacts)> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read manifest {}", path.display()))?;
        let manifest: Manifest =
            toml::from_str(&text).with_context(|| format!("invalid manifest {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let at = |p: &Path| base.join(p);
        let out_dir = at(&manifest.out_dir);
        let artifact = |p: &Option<PathBuf>, default: &str| p.as_ref().map(|p| at(p)).unwrap_or_else(|| out_dir.join(default));
        let ranks = Method::ALL
            .iter()
            .map(|&m| {
                let path = manifest.ranks.get(&m).map(|p| at(p)).unwrap_or_else(|| out_dir.join(format!("ranks.{m}.tsv")));
                (m, path)
            })
            .collect();
        let artifacts = Artifacts {
            input: at(&manifest.input),
            host_patterns: manifest.host_patterns.as_deref().map(at),
            stoplist: manifest.build_graph.stoplist.as_deref().map(at),
            corpus: artifact(&manifest.corpus, "corpus.jsonl"),
            graph: artifact(&manifest.graph, "graph.tsv"),
            index: artifact(&manifest.index, "index.json"),
            clicks: artifact(&manifest.clicks, "clicks.jsonl"),
            ranks,
            state: out_dir.join("pipeline-state.json"),
            out_dir,
        };
        Ok((manifest, artifacts))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    /// SHA-256 over stage name, configuration and input bytes.
    pub input_hash: String,
    pub outputs: Vec<PathBuf>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PipelineState {
    pub stages: BTreeMap<String, StageRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Built,
    Skipped,
}

fn hash_inputs(stage: &str, config: &impl Serialize, inputs: &[&Path]) -> Result<String> {
    let mut hasher = Sha256::new();
    hasher.update(stage.as_bytes());
    hasher.update(serde_json::to_vec(config)?);
    let mut buf = vec![0u8; 1 << 16];
    for path in inputs {
        hasher.update(path.to_string_lossy().as_bytes());
        match File::open(path) {
            Ok(mut f) => loop {
                let n = f.read(&mut buf).with_context(|| format!("cannot read {}", path.display()))?;
                if n == 0 {
                    break;
                }
                hasher.update(&buf[..n]);
            },
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => hasher.update(b"\0missing"),
            Err(e) => return Err(e).with_context(|| format!("cannot read {}", path.display())),
        }
    }
    let digest = hasher.finalize();
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

struct Runner {
    state: PipelineState,
    state_path: PathBuf,
    force: bool,
    log: Vec<(String, Outcome)>,
}

impl Runner {
    fn stage(
        &mut self,
        name: &str,
        config: &impl Serialize,
        inputs: &[&Path],
        outputs: Vec<PathBuf>,
        run: impl FnOnce() -> Result<String>,
    ) -> Result<()> {
        let input_hash = hash_inputs(name, config, inputs).with_context(|| format!("stage {name} failed"))?;
        let fresh = self
            .state
            .stages
            .get(name)
            .is_some_and(|r| r.input_hash == input_hash && r.outputs.iter().all(|p| p.exists()));
        if fresh && !self.force {
            eprintln!("{name}: up to date");
            self.log.push((name.to_string(), Outcome::Skipped));
            return Ok(());
        }
        let summary = run().with_context(|| format!("stage {name} failed"))?;
        eprintln!("{name}: {summary}");
        self.state.stages.insert(name.to_string(), StageRecord { input_hash, outputs });
        let json = serde_json::to_vec_pretty(&self.state)?;
        std::fs::write(&self.state_path, json).with_context(|| format!("cannot write {}", self.state_path.display()))?;
        self.log.push((name.to_string(), Outcome::Built));
        Ok(())
    }
}

/// Runs every stage whose inputs changed. Returns each stage's outcome in
/// execution order.
pub fn run(manifest_path: &Path, force: bool) -> Result<Vec<(String, Outcome)>> {
    let (manifest, a) = Manifest::load(manifest_path)?;
    std::fs::create_dir_all(&a.out_dir).with_context(|| format!("cannot create {}", a.out_dir.display()))?;
    let state = match std::fs::read(&a.state) {
        Ok(bytes) => serde_json::from_slice(&bytes).unwrap_or_else(|e| {
            eprintln!("ignoring unreadable state file {}: {e}", a.state.display());
            PipelineState::default()
        }),
        Err(_) => PipelineState::default(),
    };
    let mut runner = Runner { state, state_path: a.state.clone(), force, log: Vec::new() };
    let patterns = a.host_patterns.as_deref();
    let pattern_inputs: Vec<&Path> = patterns.into_iter().collect();

    let mut ingest_inputs = vec![a.input.as_path()];
    ingest_inputs.extend(&pattern_inputs);
    runner.stage("ingest", &(), &ingest_inputs, vec![a.corpus.clone()], || {
        Ok(stages::describe_ingest(&stages::ingest(&a.input, patterns, &a.corpus)?))
    })?;

    let graph_cfg = graph_config(&GraphSection { stoplist: a.stoplist.clone(), ..manifest.build_graph.clone() })?;
    let mut graph_inputs = vec![a.corpus.as_path()];
    graph_inputs.extend(&pattern_inputs);
    let graph_outputs = vec![a.graph.clone(), nodes_path(&a.graph), news_path(&a.graph)];
    runner.stage("build-graph", &graph_cfg, &graph_inputs, graph_outputs, || {
        let stats = stages::build_graph(&a.corpus, patterns, &graph_cfg, &a.graph)?;
        Ok(format!(
            "{} weblogs, {} hyperlink edges, {} edges with implicit links",
            stats.enhanced.nodes, stats.hyperlink.edges, stats.enhanced.edges
        ))
    })?;

    let (nodes, news) = (nodes_path(&a.graph), news_path(&a.graph));
    for (method, out) in &a.ranks {
        let cfg = rank_config(*method, &manifest.rank);
        runner.stage(&format!("rank-{method}"), &cfg, &[&a.graph, &nodes, &news], vec![out.clone()], || {
            Ok(stages::describe_rank(&stages::rank(&a.graph, &cfg, out)?))
        })?;
    }

    runner.stage("index", &(), &[&a.corpus], vec![a.index.clone()], || {
        Ok(format!("{} posts indexed", stages::index(&a.corpus, &a.index)?))
    })?;
    Ok(runner.log)
}
