//! Method assignment, search dispatch and the durable click log.
//!
//! Every search draws a ranking method uniformly at random, records the draw
//! in an assignment sidecar (`<log>.assignments`) and appends a session
//! skeleton to the click log before results go back to the caller. Clicks
//! are appended to the same log. On start-up both files are replayed, so
//! sessions survive restarts and a seeded method sequence continues where
//! it stopped.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use blogrank::eval::{evaluate, read_click_log, write_log_entry, Click, ClickLogEntry, Evaluation};
use blogrank::search::query_terms;
use blogrank::{Method, RankVector, SearchIndex};
use chrono::{DateTime, SecondsFormat, Utc};
use parking_lot::Mutex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;

type Result<T, E = ServiceError> = std::result::Result<T, E>;

/// Hidden per-query method choice, stored only in the sidecar and the log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodAssignment {
    pub query_id: String,
    pub method: Method,
    pub created_at: DateTime<Utc>,
    /// Seed of the generator that made the draw.
    pub seed: u64,
    /// Zero-based index of the draw within that seed's sequence.
    pub draw: u64,
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub log_path: PathBuf,
    /// Fixed generator seed; `None` continues the recorded seed, or draws a
    /// fresh one from the OS.
    pub seed: Option<u64>,
    pub result_limit: usize,
}

impl ServiceConfig {
    pub fn new(log_path: impl Into<PathBuf>) -> Self {
        ServiceConfig {
            log_path: log_path.into(),
            seed: None,
            result_limit: blogrank::search::DEFAULT_LIMIT,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }
}

/// One row of a search response. Deliberately carries no score and no
/// method label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultItem {
    pub position: usize,
    pub permalink: String,
    pub weblog: String,
    pub snippet: String,
    pub ts: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResponse {
    pub query_id: String,
    pub results: Vec<ResultItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClickRequest {
    pub query_id: String,
    pub position: u32,
    #[serde(default)]
    pub permalink: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClickAck {
    pub query_id: String,
    /// False when the position was already clicked in this session.
    pub recorded: bool,
    /// Click order assigned to a recorded click.
    pub order: Option<u32>,
}

#[derive(Debug)]
struct LiveSession {
    user: String,
    method: Method,
    presented: usize,
    clicked: Vec<u32>,
}

#[derive(Debug)]
struct State {
    method_rng: ChaCha8Rng,
    id_rng: ChaCha8Rng,
    draws: u64,
    known_ids: HashSet<String>,
    sessions: HashMap<String, LiveSession>,
    log: File,
    assignments: File,
}

#[derive(Debug)]
pub struct Service {
    index: Option<SearchIndex>,
    ranks: BTreeMap<Method, RankVector>,
    methods: Vec<Method>,
    log_path: PathBuf,
    assignments_path: PathBuf,
    seed: u64,
    limit: usize,
    state: Mutex<State>,
}

pub fn assignments_path(log_path: &Path) -> PathBuf {
    let mut name = log_path.as_os_str().to_owned();
    name.push(".assignments");
    PathBuf::from(name)
}

/// The method sequence a generator seeded with `seed` produces.
pub fn replay_methods(seed: u64, methods: &[Method], count: usize) -> Vec<Method> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| methods[rng.random_range(0..methods.len())]).collect()
}

fn id_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

fn open_append(path: &Path) -> Result<File> {
    OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|source| ServiceError::Log { path: path.to_path_buf(), source })
}

/// Writes one line and waits for it to reach the disk.
fn append_durable(file: &mut File, path: &Path, line: &[u8]) -> Result<()> {
    file.write_all(line)
        .and_then(|_| file.sync_data())
        .map_err(|source| ServiceError::Log { path: path.to_path_buf(), source })
}

fn read_assignments(path: &Path) -> Result<Vec<MethodAssignment>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(source) => return Err(ServiceError::Log { path: path.to_path_buf(), source }),
    };
    let restore_err = |line: usize, message: String| ServiceError::Restore {
        path: path.to_path_buf(),
        message: format!("line {line}: {message}"),
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| restore_err(i + 1, e.to_string()))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line).map_err(|e| restore_err(i + 1, e.to_string()))?);
        }
    }
    Ok(out)
}

impl Service {
    /// Opens (or creates) the click log and restores any recorded sessions.
    /// `ranks` must hold at least one method; `index` may be absent, in
    /// which case searches fail with [`ServiceError::IndexUnavailable`].
    pub fn open(index: Option<SearchIndex>, ranks: BTreeMap<Method, RankVector>, config: ServiceConfig) -> Result<Self> {
        let methods: Vec<Method> = ranks.keys().copied().collect();
        if methods.is_empty() {
            return Err(blogrank::Error::InvalidConfig("at least one rank vector is required".into()).into());
        }
        if config.result_limit == 0 {
            return Err(blogrank::Error::InvalidConfig("result limit must be >= 1".into()).into());
        }
        let log_path = config.log_path.clone();
        let assignments_path = assignments_path(&log_path);

        let recorded = read_assignments(&assignments_path)?;
        let seed = config
            .seed
            .or_else(|| recorded.last().map(|a| a.seed))
            .unwrap_or_else(|| rand::rng().random());
        let draws = recorded.iter().filter(|a| a.seed == seed).count() as u64;
        let mut method_rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ids = id_rng(seed);
        for _ in 0..draws {
            method_rng.random_range(0..methods.len());
            ids.random::<u64>();
        }

        let mut sessions = HashMap::new();
        if log_path.exists() {
            let file = File::open(&log_path).map_err(|source| ServiceError::Log { path: log_path.clone(), source })?;
            let restored = read_click_log(BufReader::new(file)).map_err(|e| ServiceError::Restore {
                path: log_path.clone(),
                message: e.to_string(),
            })?;
            for s in restored {
                let clicked = s.positions();
                sessions.insert(
                    s.query_id,
                    LiveSession {
                        user: s.user,
                        method: s.method,
                        presented: s.presented.unwrap_or(usize::MAX),
                        clicked,
                    },
                );
            }
        }
        let mut known_ids: HashSet<String> = recorded.into_iter().map(|a| a.query_id).collect();
        known_ids.extend(sessions.keys().cloned());

        let state = State {
            method_rng,
            id_rng: ids,
            draws,
            known_ids,
            sessions,
            log: open_append(&log_path)?,
            assignments: open_append(&assignments_path)?,
        };
        tracing::info!(seed, restored_draws = draws, "service state ready");
        Ok(Service {
            index,
            ranks,
            methods,
            log_path,
            assignments_path,
            seed,
            limit: config.result_limit,
            state: Mutex::new(state),
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn methods(&self) -> &[Method] {
        &self.methods
    }

    pub fn log_path(&self) -> &Path {
        &self.log_path
    }

    pub fn assignments_path(&self) -> &Path {
        &self.assignments_path
    }

    pub fn has_index(&self) -> bool {
        self.index.is_some()
    }

    fn assign(&self) -> Result<MethodAssignment> {
        let mut state = self.state.lock();
        let method = self.methods[state.method_rng.random_range(0..self.methods.len())];
        let query_id = loop {
            let id = format!("q{:016x}", state.id_rng.random::<u64>());
            if state.known_ids.insert(id.clone()) {
                break id;
            }
        };
        let assignment = MethodAssignment {
            query_id,
            method,
            created_at: Utc::now(),
            seed: self.seed,
            draw: state.draws,
        };
        state.draws += 1;
        let mut line = serde_json::to_vec(&assignment).expect("assignment serializes");
        line.push(b'\n');
        let path = self.assignments_path.clone();
        append_durable(&mut state.assignments, &path, &line)?;
        Ok(assignment)
    }

    pub fn search(&self, query: &str, user: &str) -> Result<SearchResponse> {
        let index = self.index.as_ref().ok_or(ServiceError::IndexUnavailable)?;
        if query_terms(query).is_empty() {
            return Err(ServiceError::EmptyQuery);
        }
        let assignment = self.assign()?;
        let hits = index.search(query, &self.ranks[&assignment.method], self.limit)?;

        let entry = ClickLogEntry {
            query_id: assignment.query_id.clone(),
            user: user.to_string(),
            method: assignment.method,
            ts: assignment.created_at.to_rfc3339_opts(SecondsFormat::Secs, true),
            query: Some(query.to_string()),
            presented: Some(hits.len()),
            clicks: Vec::new(),
        };
        let mut line = Vec::new();
        write_log_entry(&mut line, &entry).expect("writing to a Vec cannot fail");
        {
            let mut state = self.state.lock();
            append_durable(&mut state.log, &self.log_path, &line)?;
            state.sessions.insert(
                assignment.query_id.clone(),
                LiveSession {
                    user: entry.user,
                    method: assignment.method,
                    presented: hits.len(),
                    clicked: Vec::new(),
                },
            );
        }

        let results = hits
            .into_iter()
            .map(|r| ResultItem {
                position: r.position,
                permalink: r.permalink,
                weblog: r.weblog_id,
                snippet: r.snippet,
                ts: r.published_at.map(|t| t.to_rfc3339_opts(SecondsFormat::Secs, true)),
            })
            .collect();
        Ok(SearchResponse { query_id: assignment.query_id, results })
    }

    /// Records a click. Repeat clicks on a position are acknowledged but not
    /// logged; a recorded click is on disk before this returns.
    pub fn click(&self, req: &ClickRequest) -> Result<ClickAck> {
        let mut state = self.state.lock();
        let session = state
            .sessions
            .get(&req.query_id)
            .ok_or_else(|| ServiceError::UnknownQuery(req.query_id.clone()))?;
        if req.position == 0 || req.position as usize > session.presented {
            return Err(ServiceError::PositionOutOfRange { position: req.position, presented: session.presented });
        }
        if session.clicked.contains(&req.position) {
            return Ok(ClickAck { query_id: req.query_id.clone(), recorded: false, order: None });
        }
        let order = session.clicked.len() as u32 + 1;
        let entry = ClickLogEntry {
            query_id: req.query_id.clone(),
            user: session.user.clone(),
            method: session.method,
            ts: Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true),
            query: None,
            presented: None,
            clicks: vec![Click { order, position: req.position, permalink: req.permalink.clone() }],
        };
        let mut line = Vec::new();
        write_log_entry(&mut line, &entry).expect("writing to a Vec cannot fail");
        append_durable(&mut state.log, &self.log_path, &line)?;
        state
            .sessions
            .get_mut(&req.query_id)
            .expect("session checked above")
            .clicked
            .push(req.position);
        Ok(ClickAck { query_id: req.query_id.clone(), recorded: true, order: Some(order) })
    }

    /// Per-method SI report computed from the log on disk, the same way the
    /// offline evaluation reads it.
    pub fn metrics(&self) -> Result<Evaluation> {
        let _writer = self.state.lock();
        let file = File::open(&self.log_path).map_err(|source| ServiceError::Log { path: self.log_path.clone(), source })?;
        let sessions = read_click_log(BufReader::new(file))?;
        Ok(evaluate(&sessions))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    use blogrank::ingest::{parse_corpus, HostPatterns};

    fn fixture(dir: &Path, seed: u64) -> Service {
        let jsonl = concat!(
            r#"{"permalink":"http://a.example/1","ts":"2005-07-01T10:00:00Z","content":"london news today"}"#,
            "\n",
            r#"{"permalink":"http://b.example/1","ts":"2005-07-02T10:00:00Z","content":"more london news"}"#,
            "\n",
            r#"{"permalink":"http://c.example/1","ts":"2005-07-03T10:00:00Z","content":"london again"}"#,
            "\n",
        );
        let corpus = parse_corpus(jsonl.as_bytes(), HostPatterns::empty()).unwrap().0;
        let index = blogrank::build_index(&corpus);
        let ranks = Method::ALL
            .iter()
            .enumerate()
            .map(|(i, &m)| {
                let v = RankVector::from_scores(
                    ["a.example", "b.example", "c.example"].iter().enumerate().map(|(j, w)| (w.to_string(), ((i + j) % 3) as f64)),
                )
                .unwrap();
                (m, v)
            })
            .collect();
        Service::open(Some(index), ranks, ServiceConfig::new(dir.join("clicks.jsonl")).with_seed(seed)).unwrap()
    }

    #[test]
    fn first_click_gets_order_one() {
        let dir = tempfile::tempdir().unwrap();
        let svc = fixture(dir.path(), 1);
        let resp = svc.search("london", "u1").unwrap();
        assert_eq!(resp.results.len(), 3);
        let ack = svc.click(&ClickRequest { query_id: resp.query_id.clone(), position: 3, permalink: String::new() }).unwrap();
        assert_eq!((ack.recorded, ack.order), (true, Some(1)));
        let dup = svc.click(&ClickRequest { query_id: resp.query_id, position: 3, permalink: String::new() }).unwrap();
        assert_eq!((dup.recorded, dup.order), (false, None));
    }

    #[test]
    fn click_errors() {
        let dir = tempfile::tempdir().unwrap();
        let svc = fixture(dir.path(), 1);
        let resp = svc.search("london", "u1").unwrap();
        let bad = |id: &str, position| svc.click(&ClickRequest { query_id: id.into(), position, permalink: String::new() });
        assert!(matches!(bad("nope", 1), Err(ServiceError::UnknownQuery(_))));
        assert!(matches!(bad(&resp.query_id, 4), Err(ServiceError::PositionOutOfRange { .. })));
        assert!(matches!(bad(&resp.query_id, 0), Err(ServiceError::PositionOutOfRange { .. })));
    }

    #[test]
    fn zero_match_query_still_gets_an_id() {
        let dir = tempfile::tempdir().unwrap();
        let svc = fixture(dir.path(), 1);
        let resp = svc.search("zebra", "u1").unwrap();
        assert!(resp.results.is_empty());
        assert!(resp.query_id.starts_with('q'));
        assert!(matches!(svc.search("  ", "u1"), Err(ServiceError::EmptyQuery)));
    }

    #[test]
    fn same_query_twice_gets_distinct_ids() {
        let dir = tempfile::tempdir().unwrap();
        let svc = fixture(dir.path(), 5);
        let a = svc.search("london", "u").unwrap();
        let b = svc.search("london", "u").unwrap();
        assert_ne!(a.query_id, b.query_id);
    }

    #[test]
    fn sidecar_records_seeded_sequence() {
        let dir = tempfile::tempdir().unwrap();
        let svc = fixture(dir.path(), 77);
        for _ in 0..10 {
            svc.search("news", "u").unwrap();
        }
        let recorded = read_assignments(svc.assignments_path()).unwrap();
        let methods: Vec<Method> = recorded.iter().map(|a| a.method).collect();
        assert_eq!(methods, replay_methods(77, svc.methods(), 10));
        assert!(recorded.iter().enumerate().all(|(i, a)| a.draw == i as u64 && a.seed == 77));
    }

    #[test]
    fn three_clicks_reproduce_si() {
        let dir = tempfile::tempdir().unwrap();
        let svc = fixture(dir.path(), 3);
        let resp = svc.search("london", "u").unwrap();
        for p in [2, 1, 3] {
            svc.click(&ClickRequest { query_id: resp.query_id.clone(), position: p, permalink: String::new() }).unwrap();
        }
        let report = svc.metrics().unwrap();
        let group = report.si.groups.values().find(|g| g.count == 1).unwrap();
        // (3/2 + 2/1 + 1/3) / 9
        assert!((group.mean - 23.0 / 54.0).abs() < 1e-12);
    }
}
