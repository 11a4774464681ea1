//! Weblog graph: post-level hyperlinks aggregated per weblog pair, enhanced
//! with implicit similarity edges from shared tags, shared authors and
//! news coupling.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ingest::Corpus;

/// Dense node index; nodes are stored sorted by weblog id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WeblogNode {
    pub weblog_id: String,
    pub post_count: usize,
    pub authors: BTreeSet<String>,
    pub tags: BTreeSet<String>,
    pub news: BTreeSet<String>,
    pub out_degree: usize,
}

impl WeblogNode {
    pub fn new(weblog_id: impl Into<String>, post_count: usize) -> Self {
        WeblogNode {
            weblog_id: weblog_id.into(),
            post_count,
            ..Default::default()
        }
    }
}

/// Feature counts carried by one directed weblog pair.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct EdgeBundle {
    /// Post-level hyperlinks from source to target weblog.
    pub links: u32,
    /// Distinct shared tags.
    pub tags: u32,
    /// Distinct shared authors.
    pub authors: u32,
    /// Distinct shared news URLs (coupling count).
    pub news: u32,
}

impl EdgeBundle {
    pub fn hyperlinks(links: u32) -> Self {
        EdgeBundle {
            links,
            ..Default::default()
        }
    }

    pub fn new(links: u32, tags: u32, authors: u32, news: u32) -> Self {
        EdgeBundle {
            links,
            tags,
            authors,
            news,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub src: NodeId,
    pub dst: NodeId,
    pub bundle: EdgeBundle,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphConfig {
    pub min_tags: u32,
    pub min_authors: u32,
    pub min_coupling: u32,
    /// Tags used by fewer weblogs than this are ignored.
    pub tag_df_min: usize,
    /// Tags used by more than this fraction of weblogs are ignored.
    pub tag_df_max_fraction: f64,
    /// Lowercase author names that never count as shared.
    pub author_stoplist: BTreeSet<String>,
}

pub const DEFAULT_AUTHOR_STOPLIST: [&str; 4] = ["admin", "webmaster", "john", "anonymous"];

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            min_tags: 3,
            min_authors: 2,
            min_coupling: 2,
            tag_df_min: 1,
            tag_df_max_fraction: 1.0,
            author_stoplist: DEFAULT_AUTHOR_STOPLIST.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl GraphConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_tags == 0 || self.min_authors == 0 || self.min_coupling == 0 {
            return Err(Error::InvalidConfig("similarity thresholds must be >= 1".into()));
        }
        if !(self.tag_df_max_fraction > 0.0 && self.tag_df_max_fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "tag_df_max_fraction must be in (0, 1], got {}",
                self.tag_df_max_fraction
            )));
        }
        Ok(())
    }

    /// Adds stoplist entries from a file, one name per line.
    pub fn extend_stoplist_from(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.author_stoplist.extend(
            text.lines()
                .map(|l| l.trim().to_lowercase())
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        );
        Ok(())
    }

    fn is_implicit(&self, b: &EdgeBundle) -> bool {
        b.tags >= self.min_tags || b.authors >= self.min_authors || b.news >= self.min_coupling
    }
}

/// Directed weblog graph. Edges are kept sorted by `(src, dst)`.
#[derive(Debug, Clone, Default)]
pub struct WeblogGraph {
    nodes: Vec<WeblogNode>,
    index: HashMap<String, NodeId>,
    edges: Vec<Edge>,
}

impl WeblogGraph {
    /// Builds a graph from nodes and edges whose endpoints index into
    /// `nodes`. Nodes are re-sorted by id; self-loops are dropped and
    /// duplicate pairs rejected.
    pub fn from_parts(
        nodes: Vec<WeblogNode>,
        edges: impl IntoIterator<Item = (usize, usize, EdgeBundle)>,
    ) -> Result<Self> {
        let mut order: Vec<usize> = (0..nodes.len()).collect();
        order.sort_by(|&a, &b| nodes[a].weblog_id.cmp(&nodes[b].weblog_id));
        let mut remap = vec![0u32; nodes.len()];
        for (new, &old) in order.iter().enumerate() {
            remap[old] = new as u32;
        }
        let mut slots: Vec<Option<WeblogNode>> = nodes.into_iter().map(Some).collect();
        let sorted: Vec<WeblogNode> = order.iter().map(|&i| slots[i].take().unwrap()).collect();
        let mut index = HashMap::with_capacity(sorted.len());
        for (i, node) in sorted.iter().enumerate() {
            if index.insert(node.weblog_id.clone(), NodeId(i as u32)).is_some() {
                return Err(Error::InvalidConfig(format!("duplicate node {}", node.weblog_id)));
            }
        }

        let n = sorted.len();
        let mut out = Vec::new();
        for (src, dst, bundle) in edges {
            if src >= n || dst >= n {
                return Err(Error::InvalidConfig(format!("edge ({src}, {dst}) out of range")));
            }
            if src == dst {
                continue;
            }
            out.push(Edge {
                src: NodeId(remap[src]),
                dst: NodeId(remap[dst]),
                bundle,
            });
        }
        out.sort_unstable_by_key(|e| (e.src, e.dst));
        if let Some(w) = out.windows(2).find(|w| (w[0].src, w[0].dst) == (w[1].src, w[1].dst)) {
            return Err(Error::InvalidConfig(format!(
                "duplicate edge {} -> {}",
                sorted[w[0].src.index()].weblog_id,
                sorted[w[0].dst.index()].weblog_id
            )));
        }

        let mut graph = WeblogGraph {
            nodes: sorted,
            index,
            edges: out,
        };
        graph.refresh_out_degrees();
        Ok(graph)
    }

    fn refresh_out_degrees(&mut self) {
        for node in &mut self.nodes {
            node.out_degree = 0;
        }
        for e in &self.edges {
            self.nodes[e.src.index()].out_degree += 1;
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> &[WeblogNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &WeblogNode {
        &self.nodes[id.index()]
    }

    pub fn node_id(&self, weblog_id: &str) -> Option<NodeId> {
        self.index.get(weblog_id).copied()
    }

    /// All edges sorted by `(src, dst)`.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, src: NodeId, dst: NodeId) -> Option<&EdgeBundle> {
        self.edges
            .binary_search_by_key(&(src, dst), |e| (e.src, e.dst))
            .ok()
            .map(|i| &self.edges[i].bundle)
    }

    /// Bundle for a pair given by weblog ids.
    pub fn bundle(&self, src: &str, dst: &str) -> Option<&EdgeBundle> {
        self.edge(self.node_id(src)?, self.node_id(dst)?)
    }

    /// Outgoing edges of one node.
    pub fn out_edges(&self, src: NodeId) -> &[Edge] {
        let start = self.edges.partition_point(|e| e.src < src);
        let end = self.edges.partition_point(|e| e.src <= src);
        &self.edges[start..end]
    }
}

/// Collapses the post graph into the weblog graph (hyperlink edges only).
///
/// Link targets whose permalink is not in the corpus still get a node, with
/// `post_count` 0 and empty feature sets.
pub fn aggregate(corpus: &Corpus) -> WeblogGraph {
    let mut nodes: BTreeMap<String, WeblogNode> = BTreeMap::new();
    for (weblog_id, post_ids) in corpus.weblog_index() {
        let mut node = WeblogNode::new(weblog_id.clone(), post_ids.len());
        for &i in post_ids {
            let post = &corpus.posts()[i];
            node.tags.extend(post.tags.iter().cloned());
            node.authors.extend(post.author.iter().map(|a| a.to_lowercase()));
            node.news.extend(post.news_links.iter().cloned());
        }
        nodes.insert(weblog_id.clone(), node);
    }

    let mut links: BTreeMap<(String, String), u32> = BTreeMap::new();
    for post in corpus.posts() {
        for target in &post.post_links {
            let dst = corpus.weblog_of(target);
            if dst == post.weblog_id {
                continue;
            }
            nodes
                .entry(dst.clone())
                .or_insert_with(|| WeblogNode::new(dst.clone(), 0));
            *links.entry((post.weblog_id.clone(), dst)).or_default() += 1;
        }
    }

    let ids: HashMap<&str, usize> = nodes.keys().enumerate().map(|(i, k)| (k.as_str(), i)).collect();
    let edges: Vec<(usize, usize, EdgeBundle)> = links
        .iter()
        .map(|((s, d), &l)| (ids[s.as_str()], ids[d.as_str()], EdgeBundle::hyperlinks(l)))
        .collect();
    drop(ids);
    WeblogGraph::from_parts(nodes.into_values().collect(), edges)
        .expect("aggregated edges reference known, distinct nodes")
}

/// Per unordered pair `(a, b)` with `a < b`: shared tag, author and news counts.
fn shared_feature_counts(graph: &WeblogGraph) -> HashMap<(u32, u32), [u32; 3]> {
    let mut counts: HashMap<(u32, u32), [u32; 3]> = HashMap::new();
    let feature_sets: [fn(&WeblogNode) -> &BTreeSet<String>; 3] =
        [|n| &n.tags, |n| &n.authors, |n| &n.news];
    for (slot, features) in feature_sets.iter().enumerate() {
        let mut inverted: HashMap<&str, Vec<u32>> = HashMap::new();
        for (i, node) in graph.nodes.iter().enumerate() {
            for f in features(node) {
                inverted.entry(f.as_str()).or_default().push(i as u32);
            }
        }
        for holders in inverted.values() {
            for (k, &a) in holders.iter().enumerate() {
                for &b in &holders[k + 1..] {
                    counts.entry((a, b)).or_default()[slot] += 1;
                }
            }
        }
    }
    counts
}

/// Adds shared-feature counts to every edge and creates bidirectional
/// implicit edges for pairs that reach any similarity threshold.
///
/// Node tag sets are first restricted to the document-frequency band and
/// author sets stripped of stoplisted names.
pub fn compute_similarity(mut graph: WeblogGraph, corpus: &Corpus, cfg: &GraphConfig) -> Result<WeblogGraph> {
    cfg.validate()?;
    let weblogs = corpus.weblog_count() as f64;
    let df = corpus.tag_df();
    for node in &mut graph.nodes {
        node.tags.retain(|t| {
            let d = df.get(t).copied().unwrap_or(0);
            d >= cfg.tag_df_min && d as f64 <= cfg.tag_df_max_fraction * weblogs
        });
        node.authors.retain(|a| !cfg.author_stoplist.contains(&a.to_lowercase()));
    }

    for e in &mut graph.edges {
        e.bundle.tags = 0;
        e.bundle.authors = 0;
        e.bundle.news = 0;
    }
    let counts = shared_feature_counts(&graph);
    let mut pairs: Vec<_> = counts.into_iter().collect();
    pairs.sort_unstable_by_key(|&(k, _)| k);

    let mut added = Vec::new();
    for ((a, b), [t, u, n]) in pairs {
        let features = EdgeBundle::new(0, t, u, n);
        let implicit = cfg.is_implicit(&features);
        for (src, dst) in [(NodeId(a), NodeId(b)), (NodeId(b), NodeId(a))] {
            match graph.edges.binary_search_by_key(&(src, dst), |e| (e.src, e.dst)) {
                Ok(i) => {
                    let bundle = &mut graph.edges[i].bundle;
                    bundle.tags = t;
                    bundle.authors = u;
                    bundle.news = n;
                }
                Err(_) if implicit => added.push(Edge {
                    src,
                    dst,
                    bundle: features,
                }),
                Err(_) => {}
            }
        }
    }
    graph.edges.extend(added);
    graph.edges.sort_unstable_by_key(|e| (e.src, e.dst));
    graph.refresh_out_degrees();
    Ok(graph)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct DegreeStats {
    pub nodes: usize,
    pub edges: usize,
    pub edges_per_node: f64,
    /// Edges divided by the number of nodes with at least one in-edge.
    pub mean_in_degree: f64,
    /// Edges divided by the number of nodes with at least one out-edge.
    pub mean_out_degree: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct GraphStats {
    /// Edges carrying at least one hyperlink.
    pub hyperlink: DegreeStats,
    /// All edges, implicit ones included.
    pub enhanced: DegreeStats,
}

fn degree_stats<'a>(nodes: usize, edges: impl Iterator<Item = &'a Edge>) -> DegreeStats {
    let mut has_in = vec![false; nodes];
    let mut has_out = vec![false; nodes];
    let mut count = 0usize;
    for e in edges {
        count += 1;
        has_in[e.dst.index()] = true;
        has_out[e.src.index()] = true;
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    DegreeStats {
        nodes,
        edges: count,
        edges_per_node: ratio(count, nodes),
        mean_in_degree: ratio(count, has_in.iter().filter(|&&b| b).count()),
        mean_out_degree: ratio(count, has_out.iter().filter(|&&b| b).count()),
    }
}

pub fn graph_stats(graph: &WeblogGraph) -> GraphStats {
    let n = graph.node_count();
    GraphStats {
        hyperlink: degree_stats(n, graph.edges.iter().filter(|e| e.bundle.links > 0)),
        enhanced: degree_stats(n, graph.edges.iter()),
    }
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Node sidecar path for a graph snapshot (`<graph>.nodes`).
pub fn nodes_path(graph_path: &Path) -> PathBuf {
    sidecar(graph_path, ".nodes")
}

/// News sidecar path for a graph snapshot (`<graph>.news`).
pub fn news_path(graph_path: &Path) -> PathBuf {
    sidecar(graph_path, ".news")
}

impl WeblogGraph {
    /// Writes `src dst L T U N` lines, one per directed edge.
    pub fn write_edges<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for e in &self.edges {
            let b = e.bundle;
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                self.nodes[e.src.index()].weblog_id,
                self.nodes[e.dst.index()].weblog_id,
                b.links,
                b.tags,
                b.authors,
                b.news
            )?;
        }
        out.flush()
    }

    /// Writes `weblog_id post_count out_degree` lines.
    pub fn write_nodes<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for n in &self.nodes {
            writeln!(out, "{}\t{}\t{}", n.weblog_id, n.post_count, n.out_degree)?;
        }
        out.flush()
    }

    /// Writes `weblog_id news_url` lines.
    pub fn write_news<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for n in &self.nodes {
            for url in &n.news {
                writeln!(out, "{}\t{}", n.weblog_id, url)?;
            }
        }
        out.flush()
    }

    /// Writes the edge file plus the `.nodes` and `.news` sidecars.
    pub fn save(&self, path: &Path) -> Result<()> {
        let create = |p: &Path| File::create(p).map(BufWriter::new).map_err(|e| Error::io(p, e));
        self.write_edges(create(path)?).map_err(|e| Error::io(path, e))?;
        let np = nodes_path(path);
        self.write_nodes(create(&np)?).map_err(|e| Error::io(&np, e))?;
        let wp = news_path(path);
        self.write_news(create(&wp)?).map_err(|e| Error::io(&wp, e))?;
        Ok(())
    }

    /// Parses a snapshot from its three line sources. `news` may be absent.
    pub fn read_snapshot<E: BufRead, N: BufRead, W: BufRead>(
        edges: E,
        nodes: N,
        news: Option<W>,
    ) -> Result<Self> {
        let mut node_list = Vec::new();
        let mut ids: HashMap<String, usize> = HashMap::new();
        for (i, line) in nodes.lines().enumerate() {
            let line = line.map_err(|e| Error::parse("nodes", i + 1, e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(Error::parse("nodes", i + 1, format!("expected 3 columns, got {}", cols.len())));
            }
            let post_count = cols[1]
                .parse()
                .map_err(|e| Error::parse("nodes", i + 1, format!("post_count: {e}")))?;
            cols[2]
                .parse::<usize>()
                .map_err(|e| Error::parse("nodes", i + 1, format!("out_degree: {e}")))?;
            if ids.insert(cols[0].to_string(), node_list.len()).is_some() {
                return Err(Error::parse("nodes", i + 1, format!("duplicate node {}", cols[0])));
            }
            node_list.push(WeblogNode::new(cols[0], post_count));
        }

        if let Some(news) = news {
            for (i, line) in news.lines().enumerate() {
                let line = line.map_err(|e| Error::parse("news", i + 1, e.to_string()))?;
                if line.trim().is_empty() {
                    continue;
                }
                let (weblog, url) = line
                    .split_once('\t')
                    .ok_or_else(|| Error::parse("news", i + 1, "expected 2 columns"))?;
                let &idx = ids
                    .get(weblog)
                    .ok_or_else(|| Error::parse("news", i + 1, format!("unknown node {weblog}")))?;
                node_list[idx].news.insert(url.to_string());
            }
        }

        let mut edge_list = Vec::new();
        for (i, line) in edges.lines().enumerate() {
            let line = line.map_err(|e| Error::parse("edges", i + 1, e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 6 {
                return Err(Error::parse("edges", i + 1, format!("expected 6 columns, got {}", cols.len())));
            }
            let endpoint = |name: &str| {
                ids.get(name)
                    .copied()
                    .ok_or_else(|| Error::parse("edges", i + 1, format!("unknown node {name}")))
            };
            let (src, dst) = (endpoint(cols[0])?, endpoint(cols[1])?);
            if src == dst {
                return Err(Error::parse("edges", i + 1, "self-loop"));
            }
            let mut counts = [0u32; 4];
            for (slot, raw) in counts.iter_mut().zip(&cols[2..]) {
                *slot = raw
                    .parse()
                    .map_err(|e| Error::parse("edges", i + 1, format!("count {raw:?}: {e}")))?;
            }
            edge_list.push((src, dst, EdgeBundle::new(counts[0], counts[1], counts[2], counts[3])));
        }
        WeblogGraph::from_parts(node_list, edge_list).map_err(|e| match e {
            Error::InvalidConfig(msg) => Error::parse("edges", 0, msg),
            other => other,
        })
    }

    /// Loads a snapshot written by [`WeblogGraph::save`]. A missing `.news`
    /// sidecar yields nodes with empty news sets.
    pub fn load(path: &Path) -> Result<Self> {
        let open = |p: &Path| File::open(p).map(BufReader::new).map_err(|e| Error::io(p, e));
        let wp = news_path(path);
        let news = if wp.exists() { Some(open(&wp)?) } else { None };
        let source = path.display().to_string();
        Self::read_snapshot(open(path)?, open(&nodes_path(path))?, news).map_err(|e| match e {
            Error::Parse { source_name, line, message } => Error::Parse {
                source_name: format!("{source} ({source_name})"),
                line,
                message,
            },
            other => other,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{default_host_patterns, parse_corpus};

    fn corpus(lines: &[&str]) -> Corpus {
        parse_corpus(lines.join("\n").as_bytes(), default_host_patterns()).unwrap().0
    }

    fn node(id: &str, tags: &[&str], authors: &[&str], news: &[&str]) -> WeblogNode {
        let set = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        WeblogNode {
            weblog_id: id.to_string(),
            post_count: 1,
            tags: set(tags),
            authors: set(authors),
            news: set(news),
            out_degree: 0,
        }
    }

    #[test]
    fn self_links_are_dropped() {
        let c = corpus(&[
            r#"{"permalink":"http://solo.example/1","post_links":["http://solo.example/2"]}"#,
            r#"{"permalink":"http://solo.example/2","post_links":["http://solo.example/1"]}"#,
        ]);
        let g = aggregate(&c);
        assert_eq!(g.node_count(), 1);
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn unknown_link_targets_become_empty_nodes() {
        let c = corpus(&[r#"{"permalink":"http://a.example/1","post_links":["http://www.livejournal.com/users/x/9.html"]}"#]);
        let g = aggregate(&c);
        let target = g.node_id("www.livejournal.com/users/x").unwrap();
        assert_eq!(g.node(target).post_count, 0);
        assert_eq!(g.bundle("a.example", "www.livejournal.com/users/x").unwrap().links, 1);
    }

    #[test]
    fn three_shared_tags_create_bidirectional_edges() {
        let g = WeblogGraph::from_parts(
            vec![node("a", &["x", "y", "z"], &[], &[]), node("b", &["x", "y", "z", "w"], &[], &[])],
            vec![],
        )
        .unwrap();
        let c = corpus(&[]);
        let g = compute_similarity(g, &c, &GraphConfig { tag_df_min: 0, ..Default::default() }).unwrap();
        assert_eq!(g.edge_count(), 2);
        assert_eq!(*g.bundle("a", "b").unwrap(), EdgeBundle::new(0, 3, 0, 0));
        assert_eq!(*g.bundle("b", "a").unwrap(), EdgeBundle::new(0, 3, 0, 0));
        assert!(g.nodes().iter().all(|n| n.out_degree == 1));
    }

    #[test]
    fn two_shared_tags_create_nothing() {
        let g = WeblogGraph::from_parts(vec![node("a", &["x", "y"], &[], &[]), node("b", &["x", "y"], &[], &[])], vec![])
            .unwrap();
        let g = compute_similarity(g, &corpus(&[]), &GraphConfig { tag_df_min: 0, ..Default::default() }).unwrap();
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn sub_threshold_features_land_on_hyperlink_edges_only() {
        let g = WeblogGraph::from_parts(
            vec![node("a", &["x"], &["ann"], &["n1"]), node("b", &["x"], &["ann"], &["n1"])],
            vec![(0, 1, EdgeBundle::hyperlinks(3))],
        )
        .unwrap();
        let g = compute_similarity(g, &corpus(&[]), &GraphConfig { tag_df_min: 0, ..Default::default() }).unwrap();
        assert_eq!(*g.bundle("a", "b").unwrap(), EdgeBundle::new(3, 1, 1, 1));
        assert!(g.bundle("b", "a").is_none());
    }

    #[test]
    fn stoplisted_authors_and_df_filtered_tags_are_removed() {
        let c = corpus(&[
            r#"{"permalink":"http://a.example/1","author":"Admin","tags":["common","rare"]}"#,
            r#"{"permalink":"http://b.example/1","author":"WEBMASTER","tags":["common"]}"#,
            r#"{"permalink":"http://c.example/1","author":"carol","tags":["common"]}"#,
        ]);
        let cfg = GraphConfig { tag_df_min: 2, ..Default::default() };
        let g = compute_similarity(aggregate(&c), &c, &cfg).unwrap();
        let a = g.node(g.node_id("a.example").unwrap());
        assert!(a.authors.is_empty());
        assert_eq!(a.tags.iter().collect::<Vec<_>>(), ["common"]);
        assert_eq!(g.node(g.node_id("c.example").unwrap()).authors.len(), 1);

        let cfg = GraphConfig { tag_df_max_fraction: 0.5, ..Default::default() };
        let g = compute_similarity(aggregate(&c), &c, &cfg).unwrap();
        assert_eq!(g.node(g.node_id("a.example").unwrap()).tags.iter().collect::<Vec<_>>(), ["rare"]);
    }

    #[test]
    fn stats_of_empty_graph_and_cycle() {
        let empty = WeblogGraph::default();
        assert_eq!(graph_stats(&empty), GraphStats::default());

        let nodes = vec![node("a", &[], &[], &[]), node("b", &[], &[], &[]), node("c", &[], &[], &[])];
        let edges = (0..3).map(|i| (i, (i + 1) % 3, EdgeBundle::hyperlinks(1)));
        let stats = graph_stats(&WeblogGraph::from_parts(nodes, edges).unwrap());
        assert_eq!(stats.enhanced.edges_per_node, 1.0);
        assert_eq!(stats.hyperlink, stats.enhanced);
        assert_eq!(stats.enhanced.mean_in_degree, 1.0);
    }

    #[test]
    fn rejects_bad_config_and_duplicates() {
        assert!(GraphConfig { min_tags: 0, ..Default::default() }.validate().is_err());
        assert!(GraphConfig { tag_df_max_fraction: 0.0, ..Default::default() }.validate().is_err());
        let dup = WeblogGraph::from_parts(
            vec![node("a", &[], &[], &[]), node("b", &[], &[], &[])],
            vec![(0, 1, EdgeBundle::hyperlinks(1)), (0, 1, EdgeBundle::hyperlinks(2))],
        );
        assert!(dup.is_err());
    }

    #[test]
    fn snapshot_parse_errors_carry_line_numbers() {
        let nodes = "a\t1\t1\nb\t1\t0\n";
        let bad = "a\tb\t1\t0\t0\t0\na\tb\tx\t0\t0\t0\n";
        match WeblogGraph::read_snapshot(bad.as_bytes(), nodes.as_bytes(), None::<&[u8]>) {
            Err(Error::Parse { line: 2, .. }) => {}
            other => panic!("expected parse error, got {other:?}"),
        }
        let unknown = "a\tzz\t1\t0\t0\t0\n";
        assert!(WeblogGraph::read_snapshot(unknown.as_bytes(), nodes.as_bytes(), None::<&[u8]>).is_err());
    }
}
