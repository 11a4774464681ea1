//! Post-level corpus loading.
//!
//! The input is line-delimited JSON, one post per line. Every URL is
//! normalized on the way in and each post is assigned to a weblog, either
//! from the explicit `weblog` key or by deriving it from the permalink with
//! a [`HostPatterns`] table for multi-user hosts.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime, SecondsFormat, Utc};
use glob::{MatchOptions, Pattern};
use serde::{Deserialize, Serialize};
use url::Url;

use crate::error::{Error, Result};

/// Cap on diagnostics kept in an [`IngestReport`]; the counters stay exact.
const MAX_DIAGNOSTICS: usize = 64;

/// Canonicalizes a URL: lowercase scheme and host, no default port, no
/// trailing slash, no fragment, query kept, percent escapes in uppercase hex.
pub fn normalize_url(raw: &str) -> Result<String> {
    let trimmed = raw.trim();
    let malformed = |reason: &str| Error::MalformedUrl {
        url: raw.to_string(),
        reason: reason.to_string(),
    };
    if trimmed.is_empty() {
        return Err(malformed("empty"));
    }
    let url = Url::parse(trimmed).map_err(|e| malformed(&e.to_string()))?;
    let host = url.host_str().ok_or_else(|| malformed("no host"))?;
    if host.is_empty() {
        return Err(malformed("no host"));
    }

    let mut out = String::with_capacity(trimmed.len());
    out.push_str(url.scheme());
    out.push_str("://");
    out.push_str(host);
    if let Some(port) = url.port() {
        out.push(':');
        out.push_str(&port.to_string());
    }
    let path = uppercase_escapes(url.path());
    out.push_str(path.trim_end_matches('/'));
    if let Some(query) = url.query() {
        out.push('?');
        out.push_str(&uppercase_escapes(query));
    }
    Ok(out)
}

fn uppercase_escapes(s: &str) -> String {
    let bytes = s.as_bytes();
    let mut out = String::with_capacity(s.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%'
            && i + 2 < bytes.len()
            && bytes[i + 1].is_ascii_hexdigit()
            && bytes[i + 2].is_ascii_hexdigit()
        {
            out.push('%');
            out.push(bytes[i + 1].to_ascii_uppercase() as char);
            out.push(bytes[i + 2].to_ascii_uppercase() as char);
            i += 3;
        } else {
            // `Url` serializations are ASCII, so byte-wise copying is safe.
            out.push(bytes[i] as char);
            i += 1;
        }
    }
    out
}

/// Strips the scheme from a normalized URL: `http://a.b/c` -> `a.b/c`.
fn strip_scheme(normalized: &str) -> &str {
    normalized
        .split_once("://")
        .map_or(normalized, |(_, rest)| rest)
}

#[derive(Debug, Clone)]
struct HostPattern {
    pattern: Pattern,
    /// Number of path segments that belong to the weblog identity.
    segments: usize,
}

/// Table of multi-user hosts, one glob per entry such as
/// `www.livejournal.com/users/*`. A permalink whose host plus leading path
/// segments match an entry keeps that many segments in its weblog id.
#[derive(Debug, Clone, Default)]
pub struct HostPatterns {
    patterns: Vec<HostPattern>,
}

impl HostPatterns {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn new<I, S>(lines: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut patterns = Vec::new();
        for (idx, line) in lines.into_iter().enumerate() {
            let line = line.as_ref().trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let body = strip_scheme(line).trim_end_matches('/').to_ascii_lowercase();
            let segments = body.split('/').count() - 1;
            let pattern = Pattern::new(&body).map_err(|e| {
                Error::parse("host patterns", idx + 1, format!("bad glob {line:?}: {e}"))
            })?;
            patterns.push(HostPattern { pattern, segments });
        }
        Ok(Self { patterns })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::new(text.lines())
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    fn matching_segments(&self, host: &str, path_segments: &[&str]) -> Option<usize> {
        let opts = MatchOptions {
            case_sensitive: false,
            require_literal_separator: true,
            require_literal_leading_dot: false,
        };
        self.patterns.iter().find_map(|p| {
            if p.segments > path_segments.len() {
                return None;
            }
            let mut candidate = host.to_string();
            for seg in &path_segments[..p.segments] {
                candidate.push('/');
                candidate.push_str(seg);
            }
            p.pattern.matches_with(&candidate, opts).then_some(p.segments)
        })
    }
}

/// Built-in multi-user host table used when no pattern file is supplied.
pub fn default_host_patterns() -> HostPatterns {
    HostPatterns::new([
        "www.livejournal.com/users/*",
        "livejournal.com/users/*",
        "www.livejournal.com/community/*",
    ])
    .expect("built-in host patterns are valid globs")
}

/// Maps a normalized permalink to its weblog id (scheme dropped).
pub fn derive_weblog_id(permalink: &str, patterns: &HostPatterns) -> String {
    let Ok(url) = Url::parse(permalink) else {
        return strip_scheme(permalink)
            .split('/')
            .next()
            .unwrap_or_default()
            .to_string();
    };
    let mut host = url.host_str().unwrap_or_default().to_string();
    if let Some(port) = url.port() {
        host.push(':');
        host.push_str(&port.to_string());
    }
    let segments: Vec<&str> = url
        .path_segments()
        .map(|s| s.filter(|seg| !seg.is_empty()).collect())
        .unwrap_or_default();
    match patterns.matching_segments(&host, &segments) {
        Some(n) if n > 0 => {
            let mut id = host;
            for seg in &segments[..n] {
                id.push('/');
                id.push_str(seg);
            }
            id
        }
        _ => host,
    }
}

fn normalize_weblog_override(raw: &str) -> Result<String> {
    let raw = raw.trim();
    let normalized = if raw.contains("://") {
        normalize_url(raw)?
    } else {
        normalize_url(&format!("http://{raw}"))?
    };
    Ok(strip_scheme(&normalized).to_string())
}

/// One weblog entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Post {
    pub permalink: String,
    pub weblog_id: String,
    pub author: Option<String>,
    /// `DateTime::<Utc>::MIN_UTC` when the input carried no timestamp.
    pub published_at: DateTime<Utc>,
    pub tags: BTreeSet<String>,
    pub post_links: BTreeSet<String>,
    pub news_links: BTreeSet<String>,
    pub content: Option<String>,
}

impl Post {
    pub fn has_timestamp(&self) -> bool {
        self.published_at != DateTime::<Utc>::MIN_UTC
    }
}

/// Wire format of one input line.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PostRecord {
    pub permalink: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weblog: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub author: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ts: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tags: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub post_links: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub news_links: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content: Option<String>,
}

fn parse_timestamp(raw: &str) -> Option<DateTime<Utc>> {
    let raw = raw.trim();
    let parsed = DateTime::parse_from_rfc3339(raw)
        .map(|dt| dt.with_timezone(&Utc))
        .ok()
        .or_else(|| {
            ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M"]
                .iter()
                .find_map(|fmt| NaiveDateTime::parse_from_str(raw, fmt).ok())
                .map(|naive| naive.and_utc())
        })
        .or_else(|| {
            NaiveDate::parse_from_str(raw, "%Y-%m-%d")
                .ok()
                .and_then(|d| d.and_hms_opt(0, 0, 0))
                .map(|naive| naive.and_utc())
        })?;
    DateTime::from_timestamp(parsed.timestamp(), 0)
}

impl PostRecord {
    /// Validates and canonicalizes one record. Unparseable outlinks are
    /// dropped and reported through `dropped_links`.
    pub fn into_post(self, patterns: &HostPatterns, dropped_links: &mut usize) -> Result<Post> {
        let permalink = normalize_url(&self.permalink)?;
        let weblog_id = match self.weblog.as_deref().filter(|w| !w.trim().is_empty()) {
            Some(w) => normalize_weblog_override(w)?,
            None => derive_weblog_id(&permalink, patterns),
        };
        let author = self
            .author
            .map(|a| a.trim().to_string())
            .filter(|a| !a.is_empty());
        let published_at = match self.ts.as_deref().map(str::trim).filter(|t| !t.is_empty()) {
            Some(ts) => parse_timestamp(ts).ok_or_else(|| Error::InvalidConfig(format!("unparseable timestamp {ts:?}")))?,
            None => DateTime::<Utc>::MIN_UTC,
        };
        let tags = self
            .tags
            .iter()
            .map(|t| t.trim().to_lowercase())
            .filter(|t| !t.is_empty())
            .collect();
        let mut normalize_all = |links: Vec<String>| -> BTreeSet<String> {
            links
                .iter()
                .filter_map(|l| match normalize_url(l) {
                    Ok(u) => Some(u),
                    Err(_) => {
                        *dropped_links += 1;
                        None
                    }
                })
                .collect()
        };
        let post_links = normalize_all(self.post_links);
        let mut news_links = normalize_all(self.news_links);
        news_links.retain(|u| !post_links.contains(u));
        Ok(Post {
            permalink,
            weblog_id,
            author,
            published_at,
            tags,
            post_links,
            news_links,
            content: self.content,
        })
    }

    pub fn from_post(post: &Post) -> Self {
        PostRecord {
            permalink: post.permalink.clone(),
            weblog: Some(post.weblog_id.clone()),
            author: post.author.clone(),
            ts: post
                .has_timestamp()
                .then(|| post.published_at.to_rfc3339_opts(SecondsFormat::Secs, true)),
            tags: post.tags.iter().cloned().collect(),
            post_links: post.post_links.iter().cloned().collect(),
            news_links: post.news_links.iter().cloned().collect(),
            content: post.content.clone(),
        }
    }
}

/// Counters from one load. `skipped` = `malformed` + `duplicates`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub records_read: usize,
    pub kept: usize,
    pub skipped: usize,
    pub malformed: usize,
    pub duplicates: usize,
    pub dropped_links: usize,
    pub diagnostics: Vec<String>,
}

/// An immutable, indexed set of posts.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    posts: Vec<Post>,
    weblog_index: BTreeMap<String, Vec<usize>>,
    tag_df: BTreeMap<String, usize>,
    permalink_index: std::collections::HashMap<String, usize>,
    host_patterns: HostPatterns,
}

impl Corpus {
    /// Builds a corpus from already-canonical posts, keeping the first post
    /// for each permalink.
    pub fn from_posts(posts: impl IntoIterator<Item = Post>, host_patterns: HostPatterns) -> Self {
        let mut corpus = Corpus {
            host_patterns,
            ..Default::default()
        };
        for post in posts {
            corpus.push(post);
        }
        corpus.rebuild_tag_df();
        corpus
    }

    /// Returns false when the permalink is already present.
    fn push(&mut self, post: Post) -> bool {
        if self.permalink_index.contains_key(&post.permalink) {
            return false;
        }
        let idx = self.posts.len();
        self.permalink_index.insert(post.permalink.clone(), idx);
        self.weblog_index
            .entry(post.weblog_id.clone())
            .or_default()
            .push(idx);
        self.posts.push(post);
        true
    }

    fn rebuild_tag_df(&mut self) {
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for post_ids in self.weblog_index.values() {
            let tags: HashSet<&str> = post_ids
                .iter()
                .flat_map(|&i| self.posts[i].tags.iter().map(String::as_str))
                .collect();
            for tag in tags {
                *df.entry(tag.to_string()).or_default() += 1;
            }
        }
        self.tag_df = df;
    }

    pub fn posts(&self) -> &[Post] {
        &self.posts
    }

    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }

    /// Weblog id -> indices into [`Corpus::posts`].
    pub fn weblog_index(&self) -> &BTreeMap<String, Vec<usize>> {
        &self.weblog_index
    }

    pub fn weblog_count(&self) -> usize {
        self.weblog_index.len()
    }

    /// Tag -> number of distinct weblogs using it.
    pub fn tag_df(&self) -> &BTreeMap<String, usize> {
        &self.tag_df
    }

    pub fn post_by_permalink(&self, permalink: &str) -> Option<&Post> {
        self.permalink_index.get(permalink).map(|&i| &self.posts[i])
    }

    pub fn host_patterns(&self) -> &HostPatterns {
        &self.host_patterns
    }

    /// Weblog of a URL: the owning post's weblog when the URL is a known
    /// permalink, otherwise the derived id.
    pub fn weblog_of(&self, url: &str) -> String {
        match self.post_by_permalink(url) {
            Some(p) => p.weblog_id.clone(),
            None => derive_weblog_id(url, &self.host_patterns),
        }
    }

    /// Writes the corpus in the ingest line format with explicit weblog ids,
    /// so that reloading it reproduces the same corpus.
    pub fn write_snapshot<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for post in &self.posts {
            serde_json::to_writer(&mut out, &PostRecord::from_post(post))?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }
}

/// Parses line-delimited post records. Fails when more than half of the
/// non-blank lines are malformed.
pub fn parse_corpus<R: BufRead>(reader: R, host_patterns: HostPatterns) -> Result<(Corpus, IngestReport)> {
    let mut report = IngestReport::default();
    let mut corpus = Corpus {
        host_patterns,
        ..Default::default()
    };
    let note = |report: &mut IngestReport, msg: String| {
        if report.diagnostics.len() < MAX_DIAGNOSTICS {
            report.diagnostics.push(msg);
        }
    };

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::parse("corpus", line_no, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        report.records_read += 1;
        let parsed = serde_json::from_str::<PostRecord>(&line)
            .map_err(|e| Error::parse("corpus", line_no, e.to_string()))
            .and_then(|rec| rec.into_post(&corpus.host_patterns, &mut report.dropped_links));
        match parsed {
            Ok(post) => {
                let permalink = post.permalink.clone();
                if corpus.push(post) {
                    report.kept += 1;
                } else {
                    report.duplicates += 1;
                    note(&mut report, format!("line {line_no}: duplicate permalink {permalink}"));
                }
            }
            Err(e) => {
                report.malformed += 1;
                note(&mut report, format!("line {line_no}: {e}"));
            }
        }
    }
    report.skipped = report.malformed + report.duplicates;
    if report.malformed * 2 > report.records_read {
        return Err(Error::CorruptInput {
            malformed: report.malformed,
            read: report.records_read,
        });
    }
    corpus.rebuild_tag_df();
    Ok((corpus, report))
}

/// Loads a corpus file (or a snapshot written by [`Corpus::write_snapshot`]).
pub fn load_corpus(path: &Path, host_patterns: HostPatterns) -> Result<(Corpus, IngestReport)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(BufReader::new(file), host_patterns)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<(Corpus, IngestReport)> {
        parse_corpus(text.as_bytes(), default_host_patterns())
    }

    #[test]
    fn normalizes_case_port_and_trailing_slash() {
        assert_eq!(normalize_url("HTTP://Example.com:80/a/").unwrap(), "http://example.com/a");
        assert_eq!(normalize_url("https://Example.com:443/").unwrap(), "https://example.com");
        assert_eq!(normalize_url("http://example.com:8080/x").unwrap(), "http://example.com:8080/x");
    }

    #[test]
    fn strips_fragment_keeps_query() {
        assert_eq!(normalize_url("http://example.com/a#sec").unwrap(), "http://example.com/a");
        assert_eq!(
            normalize_url("http://example.com/a/?q=%3a1#f").unwrap(),
            "http://example.com/a?q=%3A1"
        );
    }

    #[test]
    fn uppercases_percent_escapes() {
        assert_eq!(normalize_url("http://example.com/%2fx").unwrap(), "http://example.com/%2Fx");
    }

    #[test]
    fn rejects_malformed_urls() {
        assert!(normalize_url("").is_err());
        assert!(normalize_url("not a url").is_err());
        assert!(normalize_url("/relative/path").is_err());
        assert!(normalize_url("mailto:someone@example.com").is_err());
    }

    #[test]
    fn derives_weblog_ids() {
        let pats = default_host_patterns();
        let id = |u: &str| derive_weblog_id(&normalize_url(u).unwrap(), &pats);
        assert_eq!(
            id("http://www.livejournal.com/users/grahame/123.html"),
            "www.livejournal.com/users/grahame"
        );
        assert_eq!(id("http://www.boingboing.net/2005/01/x.html"), "www.boingboing.net");
        assert_eq!(id("http://a.example/"), "a.example");
        // Too few segments for the pattern: host fallback.
        assert_eq!(id("http://www.livejournal.com/users"), "www.livejournal.com");
    }

    #[test]
    fn custom_patterns_take_their_segment_count() {
        let pats = HostPatterns::new(["# comment", "", "*.example.org/*"]).unwrap();
        assert_eq!(pats.len(), 1);
        assert_eq!(
            derive_weblog_id("http://blogs.example.org/alice/2006/p.html", &pats),
            "blogs.example.org/alice"
        );
        assert_eq!(derive_weblog_id("http://example.org/alice/p", &pats), "example.org");
    }

    #[test]
    fn empty_input_gives_empty_corpus() {
        let (corpus, report) = parse("").unwrap();
        assert!(corpus.is_empty());
        assert_eq!((report.records_read, report.kept, report.skipped), (0, 0, 0));
    }

    #[test]
    fn duplicate_permalinks_keep_first() {
        let text = concat!(
            r#"{"permalink":"http://a.example/p1","author":"first"}"#,
            "\n",
            r#"{"permalink":"HTTP://A.example/p1/","author":"second"}"#,
            "\n"
        );
        let (corpus, report) = parse(text).unwrap();
        assert_eq!(corpus.len(), 1);
        assert_eq!(corpus.posts()[0].author.as_deref(), Some("first"));
        assert_eq!((report.records_read, report.kept, report.skipped), (2, 1, 1));
        assert_eq!(report.duplicates, 1);
    }

    #[test]
    fn canonicalizes_fields() {
        let text = r#"{"permalink":"http://a.example/p","weblog":"HTTP://Blog.Example/","author":"  ","ts":"2005-07-01T10:20:30.750+02:00","tags":[" Rust ","rust","",  "Graphs"],"post_links":["http://b.example/x","::bad"],"news_links":["http://b.example/x","http://news.example/n"]}"#;
        let (corpus, report) = parse(text).unwrap();
        let post = &corpus.posts()[0];
        assert_eq!(post.weblog_id, "blog.example");
        assert_eq!(post.author, None);
        assert_eq!(post.published_at.to_rfc3339(), "2005-07-01T08:20:30+00:00");
        assert_eq!(post.tags.iter().collect::<Vec<_>>(), ["graphs", "rust"]);
        assert_eq!(post.post_links.len(), 1);
        assert_eq!(post.news_links.iter().collect::<Vec<_>>(), ["http://news.example/n"]);
        assert_eq!(report.dropped_links, 1);
    }

    #[test]
    fn missing_timestamp_gets_sentinel() {
        let (corpus, _) = parse(r#"{"permalink":"http://a.example/p"}"#).unwrap();
        assert!(!corpus.posts()[0].has_timestamp());
        assert_eq!(corpus.posts()[0].published_at, DateTime::<Utc>::MIN_UTC);
    }

    #[test]
    fn too_many_malformed_lines_is_fatal() {
        let text = "{\"permalink\":\"http://a.example/p\"}\nnot json\n{}\n";
        match parse(text) {
            Err(Error::CorruptInput { malformed: 2, read: 3 }) => {}
            other => panic!("expected corrupt input, got {other:?}"),
        }
        // Exactly half is tolerated.
        let (corpus, report) = parse("{\"permalink\":\"http://a.example/p\"}\nnot json\n").unwrap();
        assert_eq!(corpus.len(), 1);
        assert_eq!(report.malformed, 1);
    }

    #[test]
    fn tag_df_counts_weblogs_not_posts() {
        let text = concat!(
            r#"{"permalink":"http://a.example/1","tags":["x"]}"#, "\n",
            r#"{"permalink":"http://a.example/2","tags":["x","y"]}"#, "\n",
            r#"{"permalink":"http://b.example/1","tags":["X"]}"#, "\n",
        );
        let (corpus, _) = parse(text).unwrap();
        assert_eq!(corpus.tag_df()["x"], 2);
        assert_eq!(corpus.tag_df()["y"], 1);
        assert_eq!(corpus.weblog_count(), 2);
    }

    #[test]
    fn snapshot_reloads_identically() {
        let text = concat!(
            r#"{"permalink":"http://www.livejournal.com/users/bob/1.html","author":"bob","ts":"2006-01-02","tags":["a"],"post_links":["http://c.example/p"],"content":"hello"}"#, "\n",
            r#"{"permalink":"http://c.example/p","news_links":["http://news.example/1"]}"#, "\n",
        );
        let (corpus, _) = parse(text).unwrap();
        let mut buf = Vec::new();
        corpus.write_snapshot(&mut buf).unwrap();
        let (reloaded, report) = parse_corpus(buf.as_slice(), HostPatterns::empty()).unwrap();
        assert_eq!(report.kept, 2);
        assert_eq!(reloaded.posts(), corpus.posts());
    }
}
