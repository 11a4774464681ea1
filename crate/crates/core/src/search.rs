//! Keyword retrieval over posts, ordered by the score of each post's weblog.
//!
//! Matching is AND over case-folded tokens. Candidates are capped at
//! `limit` after a pre-ordering by term frequency then recency; the cut is
//! then ordered by weblog score (desc), publication time (desc) and
//! permalink (asc).

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Corpus;
use crate::rank::RankVector;

pub const DEFAULT_LIMIT: usize = 1000;
const SNIPPET_CHARS: usize = 200;
const SNIPPET_LEAD: usize = 40;

/// Lowercased alphanumeric runs.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct IndexedPost {
    permalink: String,
    weblog_id: String,
    published_at: DateTime<Utc>,
    /// Content, or the space-joined tags when the post has none.
    text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct Posting {
    doc: u32,
    tf: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchIndex {
    docs: Vec<IndexedPost>,
    postings: BTreeMap<String, Vec<Posting>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    /// 1-based.
    pub position: usize,
    pub permalink: String,
    pub weblog_id: String,
    pub weblog_score: f64,
    /// `None` for posts without a timestamp.
    pub published_at: Option<DateTime<Utc>>,
    pub snippet: String,
}

pub fn build_index(corpus: &Corpus) -> SearchIndex {
    let mut index = SearchIndex::default();
    for post in corpus.posts() {
        let text = match &post.content {
            Some(c) if !c.trim().is_empty() => c.clone(),
            _ => post.tags.iter().cloned().collect::<Vec<_>>().join(" "),
        };
        let doc = index.docs.len() as u32;
        let mut tf: BTreeMap<String, u32> = BTreeMap::new();
        for token in tokenize(&text) {
            *tf.entry(token).or_default() += 1;
        }
        for (term, count) in tf {
            index.postings.entry(term).or_default().push(Posting { doc, tf: count });
        }
        index.docs.push(IndexedPost {
            permalink: post.permalink.clone(),
            weblog_id: post.weblog_id.clone(),
            published_at: post.published_at,
            text,
        });
    }
    index
}

/// Distinct query terms in first-occurrence order.
pub fn query_terms(query: &str) -> Vec<String> {
    let mut seen = BTreeSet::new();
    tokenize(query).filter(|t| seen.insert(t.clone())).collect()
}

fn snippet(text: &str, terms: &[String]) -> String {
    let lower = text.to_lowercase();
    // Lowercasing can change byte lengths; fall back to the start when the
    // offsets no longer line up.
    let hit_char = terms
        .iter()
        .filter_map(|t| lower.find(t.as_str()))
        .min()
        .filter(|_| lower.len() == text.len())
        .map(|byte| text[..byte].chars().count())
        .unwrap_or(0);
    let start = hit_char.saturating_sub(SNIPPET_LEAD);
    text.chars().skip(start).take(SNIPPET_CHARS).collect()
}

fn by_relevance(a: (u32, &IndexedPost), b: (u32, &IndexedPost)) -> Ordering {
    b.0.cmp(&a.0)
        .then_with(|| b.1.published_at.cmp(&a.1.published_at))
        .then_with(|| a.1.permalink.cmp(&b.1.permalink))
}

/// Presentation order: weblog score desc, recency desc, permalink asc.
pub fn result_order(a: (f64, DateTime<Utc>, &str), b: (f64, DateTime<Utc>, &str)) -> Ordering {
    b.0.total_cmp(&a.0)
        .then_with(|| b.1.cmp(&a.1))
        .then_with(|| a.2.cmp(b.2))
}

impl SearchIndex {
    pub fn doc_count(&self) -> usize {
        self.docs.len()
    }

    pub fn term_count(&self) -> usize {
        self.postings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// Permalinks of posts containing `term`, in corpus order.
    pub fn posts_with_term(&self, term: &str) -> Vec<&str> {
        self.postings
            .get(term)
            .map(|ps| ps.iter().map(|p| self.docs[p.doc as usize].permalink.as_str()).collect())
            .unwrap_or_default()
    }

    /// Weblogs with missing scores rank as 0.
    pub fn search(&self, query: &str, ranks: &RankVector, limit: usize) -> Result<Vec<SearchResult>> {
        let terms = query_terms(query);
        if terms.is_empty() {
            return Err(Error::EmptyQuery);
        }
        if limit == 0 {
            return Err(Error::InvalidConfig("limit must be >= 1".into()));
        }

        let mut lists: Vec<&Vec<Posting>> = Vec::with_capacity(terms.len());
        for t in &terms {
            match self.postings.get(t) {
                Some(list) => lists.push(list),
                None => return Ok(Vec::new()),
            }
        }
        lists.sort_by_key(|l| l.len());

        // Postings are sorted by doc, so intersect by merging against the
        // shortest list.
        let mut candidates: Vec<(u32, u32)> = lists[0].iter().map(|p| (p.doc, p.tf)).collect();
        for list in &lists[1..] {
            let mut j = 0;
            candidates.retain_mut(|(doc, tf)| {
                while j < list.len() && list[j].doc < *doc {
                    j += 1;
                }
                if j < list.len() && list[j].doc == *doc {
                    *tf += list[j].tf;
                    true
                } else {
                    false
                }
            });
        }

        candidates.sort_by(|a, b| by_relevance((a.1, &self.docs[a.0 as usize]), (b.1, &self.docs[b.0 as usize])));
        candidates.truncate(limit);

        let mut hits: Vec<(f64, &IndexedPost)> = candidates
            .iter()
            .map(|&(doc, _)| {
                let post = &self.docs[doc as usize];
                (ranks.score(&post.weblog_id).unwrap_or(0.0), post)
            })
            .collect();
        hits.sort_by(|a, b| {
            result_order(
                (a.0, a.1.published_at, &a.1.permalink),
                (b.0, b.1.published_at, &b.1.permalink),
            )
        });

        Ok(hits
            .into_iter()
            .enumerate()
            .map(|(i, (score, post))| SearchResult {
                position: i + 1,
                permalink: post.permalink.clone(),
                weblog_id: post.weblog_id.clone(),
                weblog_score: score,
                published_at: (post.published_at != DateTime::<Utc>::MIN_UTC).then_some(post.published_at),
                snippet: snippet(&post.text, &terms),
            })
            .collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(BufWriter::new(file), self)
            .map_err(|e| Error::io(path, std::io::Error::other(e)))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::parse(path.display().to_string(), e.line(), e.to_string()))
    }
}
