//! Weblog ranking from connectivity and similarity features.
//!
//! The pipeline runs [`ingest`] (posts to a [`Corpus`]), [`graph`]
//! (aggregation into a weblog graph plus implicit similarity edges),
//! [`rank`] (PageRank, XRank and BlogRank by power iteration), [`search`]
//! (rank-ordered retrieval) and [`eval`] (Success Index and t-tests over
//! click logs). [`synth`] generates seeded corpora for tests and demos.

pub mod error;
pub mod eval;
pub mod graph;
pub mod ingest;
pub mod rank;
pub mod search;
pub mod synth;

pub use error::{Error, Result};
pub use graph::{aggregate, compute_similarity, graph_stats, EdgeBundle, GraphConfig, NodeId, WeblogGraph, WeblogNode};
pub use ingest::{derive_weblog_id, load_corpus, normalize_url, Corpus, HostPatterns, Post};
pub use rank::{
    build_transitions, edge_weight, overlap_at_k, rank, rank_news_influence, top_k, LinkMode, Method, RankConfig,
    RankVector,
};
pub use search::{build_index, SearchIndex, SearchResult};
