//! Feature-weighted PageRank over the weblog graph.
//!
//! Every edge gets a weight `F = L + w_T*T + w_U*U + w_N*N`; a node's
//! outgoing transition probabilities are its edge weights divided by their
//! sum. Scores are the fixed point of
//!
//! ```text
//! B(A) = (1 - E) + E * (sum over U->A of p(U->A) * B(U) + dangling / n)
//! ```
//!
//! where `dangling` is the total score held by nodes without outgoing
//! weight. Scores average 1 and sum to the node count. PageRank, XRank and
//! BlogRank are presets of [`RankConfig`].

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EdgeBundle, NodeId, WeblogGraph};

/// Below this many nodes the per-iteration update runs sequentially.
const PARALLEL_THRESHOLD: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkMode {
    /// Any number of hyperlinks counts as one.
    Binary,
    /// Hyperlink multiplicity is the link term.
    Count,
}

/// The three ranking methods compared in blind evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Rank1: single link per weblog pair, no implicit edges.
    #[serde(alias = "rank1")]
    PageRank,
    /// Rank2: hyperlink multiplicity, no implicit edges.
    #[serde(alias = "rank2")]
    XRank,
    /// Rank3: multiplicity plus weighted tag/author/news similarity.
    #[serde(alias = "rank3")]
    BlogRank,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::PageRank, Method::XRank, Method::BlogRank];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::PageRank => "pagerank",
            Method::XRank => "xrank",
            Method::BlogRank => "blogrank",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pagerank" | "rank1" => Ok(Method::PageRank),
            "xrank" | "rank2" => Ok(Method::XRank),
            "blogrank" | "rank3" => Ok(Method::BlogRank),
            other => Err(Error::InvalidConfig(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankConfig {
    /// Probability of following a link rather than teleporting.
    pub damping: f64,
    pub tag_weight: f64,
    pub author_weight: f64,
    pub news_weight: f64,
    /// Multiplier on the hyperlink term; 1 in all presets.
    pub link_weight: f64,
    pub link_mode: LinkMode,
    pub include_implicit: bool,
    /// L1 residual below which iteration stops.
    pub epsilon: f64,
    pub max_iters: usize,
}

impl Default for RankConfig {
    fn default() -> Self {
        RankConfig::blogrank()
    }
}

impl RankConfig {
    pub fn pagerank() -> Self {
        RankConfig {
            damping: 0.85,
            tag_weight: 0.0,
            author_weight: 0.0,
            news_weight: 0.0,
            link_weight: 1.0,
            link_mode: LinkMode::Binary,
            include_implicit: false,
            epsilon: 1e-8,
            max_iters: 200,
        }
    }

    pub fn xrank() -> Self {
        RankConfig {
            link_mode: LinkMode::Count,
            ..RankConfig::pagerank()
        }
    }

    pub fn blogrank() -> Self {
        RankConfig {
            tag_weight: 2.0,
            author_weight: 1.0,
            news_weight: 3.0,
            link_mode: LinkMode::Count,
            include_implicit: true,
            ..RankConfig::pagerank()
        }
    }

    pub fn preset(method: Method) -> Self {
        match method {
            Method::PageRank => RankConfig::pagerank(),
            Method::XRank => RankConfig::xrank(),
            Method::BlogRank => RankConfig::blogrank(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping < 1.0) {
            return Err(Error::InvalidConfig(format!("damping must be in (0, 1), got {}", self.damping)));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::InvalidConfig(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        let weights = [self.tag_weight, self.author_weight, self.news_weight, self.link_weight];
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidConfig("weights must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Edge weight `F` of one bundle under a configuration.
pub fn edge_weight(bundle: &EdgeBundle, cfg: &RankConfig) -> f64 {
    let links = match cfg.link_mode {
        LinkMode::Binary => bundle.links.min(1),
        LinkMode::Count => bundle.links,
    };
    let mut f = cfg.link_weight * f64::from(links);
    if cfg.include_implicit {
        f += cfg.tag_weight * f64::from(bundle.tags)
            + cfg.author_weight * f64::from(bundle.authors)
            + cfg.news_weight * f64::from(bundle.news);
    }
    f
}

/// Outgoing transition probabilities of one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionRow<'a> {
    pub src: NodeId,
    pub targets: &'a [NodeId],
    pub probs: &'a [f64],
}

impl TransitionRow<'_> {
    pub fn sum(&self) -> f64 {
        self.probs.iter().sum()
    }
}

/// Row-compressed transition probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Transitions {
    node_count: usize,
    offsets: Vec<usize>,
    targets: Vec<NodeId>,
    probs: Vec<f64>,
    dangling: Vec<NodeId>,
}

impl Transitions {
    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// Row of `src`; empty for dangling nodes.
    pub fn row(&self, src: NodeId) -> TransitionRow<'_> {
        let (a, b) = (self.offsets[src.index()], self.offsets[src.index() + 1]);
        TransitionRow {
            src,
            targets: &self.targets[a..b],
            probs: &self.probs[a..b],
        }
    }

    /// Non-empty rows in node order.
    pub fn rows(&self) -> impl Iterator<Item = TransitionRow<'_>> {
        (0..self.node_count)
            .map(|i| self.row(NodeId(i as u32)))
            .filter(|r| !r.targets.is_empty())
    }

    /// Nodes whose outgoing weight is zero.
    pub fn dangling(&self) -> &[NodeId] {
        &self.dangling
    }

    /// Incoming view: for each destination, sources and probabilities in
    /// ascending source order.
    fn transpose(&self) -> (Vec<usize>, Vec<u32>, Vec<f64>) {
        let n = self.node_count;
        let mut offsets = vec![0usize; n + 1];
        for t in &self.targets {
            offsets[t.index() + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let mut cursor = offsets[..n].to_vec();
        let mut srcs = vec![0u32; self.targets.len()];
        let mut probs = vec![0.0f64; self.targets.len()];
        for src in 0..n {
            for k in self.offsets[src]..self.offsets[src + 1] {
                let slot = &mut cursor[self.targets[k].index()];
                srcs[*slot] = src as u32;
                probs[*slot] = self.probs[k];
                *slot += 1;
            }
        }
        (offsets, srcs, probs)
    }
}

pub fn build_transitions(graph: &WeblogGraph, cfg: &RankConfig) -> Transitions {
    let n = graph.node_count();
    let mut offsets = Vec::with_capacity(n + 1);
    let mut targets = Vec::with_capacity(graph.edge_count());
    let mut probs = Vec::with_capacity(graph.edge_count());
    let mut dangling = Vec::new();
    offsets.push(0);

    // Edges are sorted by source, so each node's out-edges are one run.
    let mut rest = graph.edges();
    for i in 0..n {
        let src = NodeId(i as u32);
        let len = rest.iter().position(|e| e.src != src).unwrap_or(rest.len());
        let (out, tail) = rest.split_at(len);
        rest = tail;
        let row_start = targets.len();
        let mut total = 0.0;
        for e in out {
            let f = edge_weight(&e.bundle, cfg);
            if f > 0.0 {
                targets.push(e.dst);
                probs.push(f);
                total += f;
            }
        }
        if total > 0.0 {
            for p in &mut probs[row_start..] {
                *p /= total;
            }
        } else {
            dangling.push(src);
        }
        offsets.push(targets.len());
    }
    Transitions {
        node_count: n,
        offsets,
        targets,
        probs,
        dangling,
    }
}

/// Scores for every node, keyed by weblog id (sorted ascending).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankVector {
    ids: Vec<String>,
    scores: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    /// L1 residual after each iteration.
    pub residual_history: Vec<f64>,
}

impl RankVector {
    /// Builds a vector from `(weblog_id, score)` pairs, e.g. a ranks file.
    pub fn from_scores(pairs: impl IntoIterator<Item = (String, f64)>) -> Result<Self> {
        let mut pairs: Vec<(String, f64)> = pairs.into_iter().collect();
        pairs.sort_by(|a, b| a.0.cmp(&b.0));
        if let Some(w) = pairs.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidConfig(format!("duplicate weblog {}", w[0].0)));
        }
        let (ids, scores) = pairs.into_iter().unzip();
        Ok(RankVector {
            ids,
            scores,
            iterations: 0,
            residual: 0.0,
            converged: true,
            residual_history: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn score(&self, weblog_id: &str) -> Option<f64> {
        self.ids
            .binary_search_by(|id| id.as_str().cmp(weblog_id))
            .ok()
            .map(|i| self.scores[i])
    }

    /// Scores in node order (ascending weblog id).
    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.ids.iter().map(String::as_str).zip(self.scores.iter().copied())
    }

    pub fn total(&self) -> f64 {
        self.scores.iter().sum()
    }

    /// All entries, descending by score then ascending by id.
    pub fn ranked(&self) -> Vec<(String, f64)> {
        let mut order: Vec<usize> = (0..self.ids.len()).collect();
        order.sort_by(|&a, &b| by_score_then_id((&self.ids[a], self.scores[a]), (&self.ids[b], self.scores[b])));
        order.into_iter().map(|i| (self.ids[i].clone(), self.scores[i])).collect()
    }

    /// Writes `weblog_id<TAB>score` lines in ranked order. Scores use the
    /// shortest representation that round-trips exactly.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (id, score) in self.ranked() {
            writeln!(out, "{id}\t{score}")?;
        }
        out.flush()
    }

    pub fn read_tsv<R: BufRead>(reader: R) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::parse("ranks", i + 1, e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let (id, score) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse("ranks", i + 1, "expected weblog_id<TAB>score"))?;
            let score: f64 = score
                .trim()
                .parse()
                .map_err(|e| Error::parse("ranks", i + 1, format!("score {score:?}: {e}")))?;
            pairs.push((id.to_string(), score));
        }
        Self::from_scores(pairs)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_tsv(BufWriter::new(file)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_tsv(BufReader::new(file))
    }
}

fn by_score_then_id(a: (&str, f64), b: (&str, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0))
}

/// Power iteration from `B ≡ 1`. A run that hits `max_iters` is returned
/// with `converged == false`.
pub fn rank(graph: &WeblogGraph, cfg: &RankConfig) -> Result<RankVector> {
    cfg.validate()?;
    let transitions = build_transitions(graph, cfg);
    Ok(rank_transitions(graph, &transitions, cfg))
}

/// Iterates over already built transitions.
pub fn rank_transitions(graph: &WeblogGraph, transitions: &Transitions, cfg: &RankConfig) -> RankVector {
    let n = transitions.node_count();
    let ids: Vec<String> = graph.nodes().iter().map(|n| n.weblog_id.clone()).collect();
    if n == 0 {
        return RankVector {
            ids,
            scores: Vec::new(),
            iterations: 0,
            residual: 0.0,
            converged: true,
            residual_history: Vec::new(),
        };
    }

    let (in_offsets, in_srcs, in_probs) = transitions.transpose();
    let e = cfg.damping;
    let mut current = vec![1.0f64; n];
    let mut next = vec![0.0f64; n];
    let mut history = Vec::new();
    let mut residual = f64::INFINITY;
    let mut converged = false;

    while history.len() < cfg.max_iters {
        let dangling_mass: f64 = transitions.dangling().iter().map(|d| current[d.index()]).sum();
        let base = (1.0 - e) + e * dangling_mass / n as f64;
        let update = |(dst, slot): (usize, &mut f64)| {
            let range = in_offsets[dst]..in_offsets[dst + 1];
            let inflow: f64 = in_srcs[range.clone()]
                .iter()
                .zip(&in_probs[range])
                .map(|(&src, &p)| p * current[src as usize])
                .sum();
            *slot = base + e * inflow;
        };
        if n >= PARALLEL_THRESHOLD {
            next.par_iter_mut().enumerate().for_each(update);
        } else {
            next.iter_mut().enumerate().for_each(update);
        }
        residual = current.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        history.push(residual);
        std::mem::swap(&mut current, &mut next);
        if residual < cfg.epsilon {
            converged = true;
            break;
        }
    }

    RankVector {
        ids,
        scores: current,
        iterations: history.len(),
        residual,
        converged,
        residual_history: history,
    }
}

/// The `k` best entries, descending by score with ascending-id tie-break.
pub fn top_k(vector: &RankVector, k: usize) -> Result<Vec<(String, f64)>> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be >= 1".into()));
    }
    let mut ranked = vector.ranked();
    ranked.truncate(k);
    Ok(ranked)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Overlap {
    pub common: usize,
    /// `common / k`.
    pub fraction: f64,
}

/// Number of weblogs present in both top-k lists.
pub fn overlap_at_k(a: &RankVector, b: &RankVector, k: usize) -> Result<Overlap> {
    if a.ids != b.ids {
        return Err(Error::MismatchedNodeSets);
    }
    let top_a: HashSet<String> = top_k(a, k)?.into_iter().map(|(id, _)| id).collect();
    let common = top_k(b, k)?.iter().filter(|(id, _)| top_a.contains(id)).count();
    Ok(Overlap {
        common,
        fraction: common as f64 / k as f64,
    })
}

/// Influence of every news URL: the summed scores of the weblogs that link
/// to it, descending with ascending-URL tie-break.
pub fn rank_news_influence(graph: &WeblogGraph, vector: &RankVector) -> Vec<(String, f64)> {
    let mut influence: BTreeMap<&str, f64> = BTreeMap::new();
    for node in graph.nodes() {
        let score = vector.score(&node.weblog_id).unwrap_or(0.0);
        for url in &node.news {
            *influence.entry(url.as_str()).or_default() += score;
        }
    }
    let mut out: Vec<(String, f64)> = influence.into_iter().map(|(u, s)| (u.to_string(), s)).collect();
    out.sort_by(|a, b| by_score_then_id((&a.0, a.1), (&b.0, b.1)));
    out
}
