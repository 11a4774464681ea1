//! Click-log evaluation: Success Index per query, per-method aggregation
//! and Welch's t-test between method groups.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::rank::Method;

/// Success Index of one query: `SI = 1/n * Σ_t (n - t + 1) / (d_t * n)`,
/// where `d_t` is the list position of the t-th click.
pub fn success_index(positions: &[u32]) -> Result<f64> {
    if positions.is_empty() {
        return Err(Error::InsufficientData("success index of a query without clicks".into()));
    }
    if positions.contains(&0) {
        return Err(Error::InvalidConfig("click positions are 1-based".into()));
    }
    let n = positions.len() as f64;
    let sum: f64 = positions
        .iter()
        .enumerate()
        .map(|(i, &d)| (n - i as f64) / (f64::from(d) * n))
        .sum();
    Ok(sum / n)
}

/// Drops repeated positions, keeping the first click on each.
pub fn dedup_positions(positions: &[u32]) -> Vec<u32> {
    let mut seen = HashSet::new();
    positions.iter().copied().filter(|p| seen.insert(*p)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Click {
    /// 1-based click sequence number within the query.
    pub order: u32,
    /// 1-based position of the clicked post in the presented list.
    pub position: u32,
    #[serde(default)]
    pub permalink: String,
}

/// One line of the click log. The service writes a skeleton entry (no
/// clicks) when a query is answered and one entry per accepted click;
/// entries sharing a `query_id` merge into one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClickLogEntry {
    pub query_id: String,
    #[serde(default)]
    pub user: String,
    pub method: Method,
    #[serde(default)]
    pub ts: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub presented: Option<usize>,
    #[serde(default)]
    pub clicks: Vec<Click>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuerySession {
    pub query_id: String,
    pub user: String,
    pub method: Method,
    pub query: Option<String>,
    pub presented: Option<usize>,
    /// Clicks in click order, duplicates positions removed.
    pub clicks: Vec<Click>,
}

impl QuerySession {
    pub fn positions(&self) -> Vec<u32> {
        self.clicks.iter().map(|c| c.position).collect()
    }

    /// `None` when the session has no clicks.
    pub fn success_index(&self) -> Option<f64> {
        success_index(&self.positions()).ok()
    }
}

/// Merges log entries into sessions in order of first appearance. Clicks
/// are sorted by `order`, repeated positions dropped and orders renumbered.
pub fn sessions_from_entries(entries: impl IntoIterator<Item = ClickLogEntry>) -> Result<Vec<QuerySession>> {
    let mut sessions: Vec<QuerySession> = Vec::new();
    let mut by_id: HashMap<String, usize> = HashMap::new();
    for entry in entries {
        let idx = match by_id.get(&entry.query_id) {
            Some(&i) => {
                if sessions[i].method != entry.method {
                    return Err(Error::InvalidConfig(format!(
                        "query {} logged under two methods",
                        entry.query_id
                    )));
                }
                i
            }
            None => {
                by_id.insert(entry.query_id.clone(), sessions.len());
                sessions.push(QuerySession {
                    query_id: entry.query_id.clone(),
                    user: entry.user.clone(),
                    method: entry.method,
                    query: None,
                    presented: None,
                    clicks: Vec::new(),
                });
                sessions.len() - 1
            }
        };
        let s = &mut sessions[idx];
        if s.query.is_none() {
            s.query = entry.query;
        }
        if s.presented.is_none() {
            s.presented = entry.presented;
        }
        s.clicks.extend(entry.clicks);
    }
    for s in &mut sessions {
        s.clicks.sort_by_key(|c| c.order);
        let mut seen = HashSet::new();
        s.clicks.retain(|c| seen.insert(c.position));
        for (i, c) in s.clicks.iter_mut().enumerate() {
            c.order = i as u32 + 1;
        }
    }
    Ok(sessions)
}

pub fn read_click_log<R: BufRead>(reader: R) -> Result<Vec<QuerySession>> {
    let mut entries = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::parse("click log", i + 1, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: ClickLogEntry =
            serde_json::from_str(&line).map_err(|e| Error::parse("click log", i + 1, e.to_string()))?;
        if entry.clicks.iter().any(|c| c.position == 0 || c.order == 0) {
            return Err(Error::parse("click log", i + 1, "click order and position are 1-based"));
        }
        entries.push(entry);
    }
    sessions_from_entries(entries)
}

pub fn write_log_entry<W: Write>(mut out: W, entry: &ClickLogEntry) -> std::io::Result<()> {
    serde_json::to_writer(&mut out, entry)?;
    out.write_all(b"\n")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation; `None` for a single query.
    pub std_dev: Option<f64>,
    /// Per-query SI values in session order.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SiReport {
    pub groups: BTreeMap<Method, GroupStats>,
    /// Sessions without clicks, left out of every group.
    pub excluded: usize,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn aggregate_si<'a>(sessions: impl IntoIterator<Item = &'a QuerySession>) -> SiReport {
    let mut values: BTreeMap<Method, Vec<f64>> = BTreeMap::new();
    let mut excluded = 0;
    for s in sessions {
        match s.success_index() {
            Some(si) => values.entry(s.method).or_default().push(si),
            None => excluded += 1,
        }
    }
    let groups = values
        .into_iter()
        .map(|(method, vals)| {
            let stats = GroupStats {
                count: vals.len(),
                mean: mean(&vals),
                std_dev: (vals.len() > 1).then(|| sample_variance(&vals).sqrt()),
                values: vals,
            };
            (method, stats)
        })
        .collect();
    SiReport { groups, excluded }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    /// Welch–Satterthwaite degrees of freedom.
    pub df: f64,
    pub p_two_tailed: f64,
    /// Half the two-tailed value: the one-sided p in the observed direction.
    pub p_one_tailed: f64,
}

/// Welch's unequal-variance two-sample t-test.
pub fn t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "t-test needs at least 2 values per group, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (sample_variance(a) / na, sample_variance(b) / nb);
    let diff = mean(a) - mean(b);
    let se2 = va + vb;

    if se2 == 0.0 {
        let df = na + nb - 2.0;
        return Ok(if diff == 0.0 {
            TTest { t: 0.0, df, p_two_tailed: 1.0, p_one_tailed: 0.5 }
        } else {
            TTest { t: diff.signum() * f64::INFINITY, df, p_two_tailed: 0.0, p_one_tailed: 0.0 }
        });
    }

    let t = diff / se2.sqrt();
    let df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::InsufficientData(e.to_string()))?;
    let p_two_tailed = if t == 0.0 { 1.0 } else { (2.0 * dist.sf(t.abs())).min(1.0) };
    Ok(TTest {
        t,
        df,
        p_two_tailed,
        p_one_tailed: p_two_tailed / 2.0,
    })
}

/// One pairwise comparison between method groups. `test` is absent when a
/// group has too few clicked queries, with the reason in `note`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodComparison {
    pub a: Method,
    pub b: Method,
    pub test: Option<TTest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// SI groups for every method (empty groups report zero counts) plus all
/// pairwise t-tests.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    #[serde(flatten)]
    pub si: SiReport,
    pub comparisons: Vec<MethodComparison>,
}

pub fn evaluate<'a>(sessions: impl IntoIterator<Item = &'a QuerySession>) -> Evaluation {
    let mut si = aggregate_si(sessions);
    for method in Method::ALL {
        si.groups.entry(method).or_insert(GroupStats {
            count: 0,
            mean: 0.0,
            std_dev: None,
            values: Vec::new(),
        });
    }
    let mut comparisons = Vec::new();
    for (i, &a) in Method::ALL.iter().enumerate() {
        for &b in &Method::ALL[i + 1..] {
            let result = t_test(&si.groups[&a].values, &si.groups[&b].values);
            comparisons.push(MethodComparison {
                a,
                b,
                note: result.as_ref().err().map(ToString::to_string),
                test: result.ok(),
            });
        }
    }
    Evaluation { si, comparisons }
}
