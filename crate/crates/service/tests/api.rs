use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{HeaderMap, Request, StatusCode};
use axum::Router;
use blogrank::eval::{evaluate, read_click_log};
use blogrank::ingest::{parse_corpus, PostRecord};
use blogrank::{build_index, HostPatterns, Method, RankVector, SearchIndex};
use blogrank_service::{replay_methods, router, MethodAssignment, Service, ServiceConfig};
use http_body_util::BodyExt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tower::ServiceExt;

const WORDS: [&str; 8] = ["london", "news", "music", "photo", "iraq", "people", "world", "today"];

fn index_and_ranks() -> (SearchIndex, BTreeMap<Method, RankVector>) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let records: Vec<PostRecord> = (0..120)
        .map(|i| PostRecord {
            permalink: format!("http://blog{}.example/post{i}", i % 12),
            ts: Some(format!("2005-07-{:02}T12:00:00Z", 1 + i % 28)),
            content: Some((0..6).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")),
            ..Default::default()
        })
        .collect();
    let jsonl: String = records.iter().map(|r| serde_json::to_string(r).unwrap() + "\n").collect();
    let corpus = parse_corpus(jsonl.as_bytes(), HostPatterns::empty()).unwrap().0;
    let ranks = Method::ALL
        .iter()
        .map(|&m| {
            let scores = corpus.weblog_index().keys().map(|w| (w.clone(), rng.random_range(0.15..3.0)));
            (m, RankVector::from_scores(scores).unwrap())
        })
        .collect();
    (build_index(&corpus), ranks)
}

fn open(dir: &Path, seed: Option<u64>, with_index: bool) -> Arc<Service> {
    let (index, ranks) = index_and_ranks();
    let mut config = ServiceConfig::new(dir.join("clicks.jsonl"));
    config.seed = seed;
    Arc::new(Service::open(with_index.then_some(index), ranks, config).unwrap())
}

async fn send(app: &Router, req: Request<Body>) -> (StatusCode, HeaderMap, Value) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let body = serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()));
    (status, headers, body)
}

fn get(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).unwrap()
}

fn click_req(query_id: &str, position: u64) -> Request<Body> {
    Request::post("/api/click")
        .header("content-type", "application/json")
        .body(Body::from(json!({"query_id": query_id, "position": position, "permalink": "x"}).to_string()))
        .unwrap()
}

fn recorded_methods(service: &Service) -> Vec<Method> {
    let text = std::fs::read_to_string(service.assignments_path()).unwrap();
    text.lines().map(|l| serde_json::from_str::<MethodAssignment>(l).unwrap().method).collect()
}

fn offline(service: &Service) -> Value {
    let sessions = read_click_log(BufReader::new(File::open(service.log_path()).unwrap())).unwrap();
    serde_json::to_value(evaluate(&sessions)).unwrap()
}

#[tokio::test]
async fn search_responses_never_reveal_the_method() {
    let dir = tempfile::tempdir().unwrap();
    let service = open(dir.path(), Some(3), true);
    let app = router(service.clone(), None);
    let labels = ["pagerank", "xrank", "blogrank", "rank1", "rank2", "rank3", "method"];
    for i in 0..60 {
        let q = format!("{} {}", WORDS[i % WORDS.len()], WORDS[(i * 3) % WORDS.len()]);
        let (status, headers, body) = send(&app, get(&format!("/api/search?q={}&user=u{i}", q.replace(' ', "+")))).await;
        assert_eq!(status, StatusCode::OK);
        let mut text = body.to_string().to_ascii_lowercase();
        for (name, value) in &headers {
            text.push_str(&format!("{name}: {}", value.to_str().unwrap_or_default()).to_ascii_lowercase());
        }
        for label in labels {
            assert!(!text.contains(label), "response leaks {label}: {text}");
        }
        let results = body["results"].as_array().unwrap();
        for (j, r) in results.iter().enumerate() {
            assert_eq!(r["position"], j + 1);
            let keys: Vec<&str> = r.as_object().unwrap().keys().map(String::as_str).collect();
            assert_eq!(keys, ["permalink", "position", "snippet", "ts", "weblog"]);
        }
    }
    // Every method was actually used behind the scenes.
    let used: std::collections::BTreeSet<Method> = recorded_methods(&service).into_iter().collect();
    assert_eq!(used.len(), 3);
}

#[tokio::test]
async fn assignment_is_uniform_over_three_thousand_queries() {
    let dir = tempfile::tempdir().unwrap();
    let service = open(dir.path(), Some(2006), true);
    let app = router(service.clone(), None);
    let m = 3000;
    for i in 0..m {
        let (status, _, _) = send(&app, get(&format!("/api/search?q={}", WORDS[i % WORDS.len()]))).await;
        assert_eq!(status, StatusCode::OK);
    }
    let methods = recorded_methods(&service);
    assert_eq!(methods.len(), m);
    let bound = 4.0 * (m as f64).sqrt();
    for method in Method::ALL {
        let count = methods.iter().filter(|&&x| x == method).count() as f64;
        assert!((count - m as f64 / 3.0).abs() <= bound, "{method}: {count}");
    }
}

#[tokio::test]
async fn seeded_sequence_is_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let sa = open(a.path(), Some(99), true);
    let sb = open(b.path(), Some(99), true);
    let (appa, appb) = (router(sa.clone(), None), router(sb.clone(), None));
    for _ in 0..10 {
        let (_, _, ra) = send(&appa, get("/api/search?q=news")).await;
        let (_, _, rb) = send(&appb, get("/api/search?q=news")).await;
        assert_eq!(ra, rb);
    }
    assert_eq!(recorded_methods(&sa), recorded_methods(&sb));
    assert_eq!(recorded_methods(&sa), replay_methods(99, sa.methods(), 10));
}

#[tokio::test]
async fn acknowledged_clicks_survive_restart() {
    let dir = tempfile::tempdir().unwrap();
    let first = open(dir.path(), Some(7), true);
    let app = router(first.clone(), None);
    let (_, _, body) = send(&app, get("/api/search?q=london&user=alice")).await;
    let qid = body["query_id"].as_str().unwrap().to_string();
    assert!(body["results"].as_array().unwrap().len() >= 3);
    for p in [3, 1] {
        let (status, _, ack) = send(&app, click_req(&qid, p)).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(ack["recorded"], true);
    }
    let before = send(&app, get("/api/metrics")).await.2;
    drop(app);
    drop(first);

    // No seed on restart: the recorded one is resumed.
    let second = open(dir.path(), None, true);
    assert_eq!(second.seed(), 7);
    let app = router(second.clone(), None);
    assert_eq!(send(&app, get("/api/metrics")).await.2, before);
    let (status, _, ack) = send(&app, click_req(&qid, 3)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(ack["recorded"], false);
    let (_, _, ack) = send(&app, click_req(&qid, 2)).await;
    assert_eq!(ack["order"], 3);

    for _ in 0..4 {
        send(&app, get("/api/search?q=news")).await;
    }
    assert_eq!(recorded_methods(&second), replay_methods(7, second.methods(), 5));

    let metrics = send(&app, get("/api/metrics")).await.2;
    let group_means: Vec<f64> = metrics["groups"]
        .as_object()
        .unwrap()
        .values()
        .filter(|g| g["count"] == 1)
        .map(|g| g["mean"].as_f64().unwrap())
        .collect();
    // Positions (3, 1, 2): (3/9 + 2/3 + 1/6) / 3 = 7/18
    assert_eq!(group_means.len(), 1);
    assert!((group_means[0] - 7.0 / 18.0).abs() < 1e-12);
}

#[tokio::test]
async fn metrics_equal_offline_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let service = open(dir.path(), Some(60), true);
    let app = router(service.clone(), None);
    let mut rng = ChaCha8Rng::seed_from_u64(60);

    let empty = send(&app, get("/api/metrics")).await.2;
    assert_eq!(empty["excluded"], 0);
    assert!(empty["groups"].as_object().unwrap().values().all(|g| g["count"] == 0));

    for s in 0..60 {
        let (_, _, body) = send(&app, get(&format!("/api/search?q={}&user=u{}", WORDS[s % 8], s % 7))).await;
        let qid = body["query_id"].as_str().unwrap().to_string();
        let n = body["results"].as_array().unwrap().len() as u64;
        for _ in 0..rng.random_range(0..5) {
            let (status, _, _) = send(&app, click_req(&qid, rng.random_range(1..=n))).await;
            assert_eq!(status, StatusCode::OK);
        }
    }
    let online = send(&app, get("/api/metrics")).await.2;
    assert_eq!(online, offline(&service));
    let counted: u64 = online["groups"].as_object().unwrap().values().map(|g| g["count"].as_u64().unwrap()).sum();
    assert_eq!(counted + online["excluded"].as_u64().unwrap(), 60);
    assert_eq!(online["comparisons"].as_array().unwrap().len(), 3);
}

#[tokio::test]
async fn error_statuses() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(open(dir.path(), Some(1), true), None);
    assert_eq!(send(&app, get("/api/search?q=")).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(send(&app, get("/api/search?q=%21%21")).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(send(&app, click_req("q-missing", 1)).await.0, StatusCode::NOT_FOUND);

    let (_, _, body) = send(&app, get("/api/search?q=london")).await;
    let qid = body["query_id"].as_str().unwrap().to_string();
    let n = body["results"].as_array().unwrap().len() as u64;
    assert_eq!(send(&app, click_req(&qid, n + 1)).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(send(&app, click_req(&qid, 0)).await.0, StatusCode::BAD_REQUEST);

    let (_, _, body) = send(&app, get("/api/search?q=zebra")).await;
    assert!(body["results"].as_array().unwrap().is_empty());
    assert!(body["query_id"].is_string());

    let dir = tempfile::tempdir().unwrap();
    let no_index = router(open(dir.path(), Some(1), false), None);
    assert_eq!(send(&no_index, get("/api/search?q=london")).await.0, StatusCode::SERVICE_UNAVAILABLE);
}

#[tokio::test]
async fn serves_static_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let www = dir.path().join("www");
    std::fs::create_dir(&www).unwrap();
    std::fs::write(www.join("index.html"), "<html>ui</html>").unwrap();
    let app = router(open(dir.path(), Some(1), true), Some(www));
    let (status, _, body) = send(&app, get("/")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, Value::String("<html>ui</html>".into()));
    assert_eq!(send(&app, get("/api/metrics")).await.0, StatusCode::OK);
}
