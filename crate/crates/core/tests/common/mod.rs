//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use blogrank::{EdgeBundle, WeblogGraph, WeblogNode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn node_name(i: usize) -> String {
    format!("w{i:06}")
}

/// Random graph with random feature bundles. With `dangling_free`, every
/// node gets at least one hyperlink edge.
pub fn random_graph(seed: u64, max_nodes: usize, dangling_free: bool) -> WeblogGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=max_nodes);
    let density = rng.random_range(0.02..0.4);
    let nodes = (0..n).map(|i| WeblogNode::new(node_name(i), 1)).collect();
    let mut edges = Vec::new();
    for s in 0..n {
        let mut has_link = false;
        for d in 0..n {
            if s == d || !rng.random_bool(density) {
                continue;
            }
            let links = if rng.random_bool(0.6) { rng.random_range(1..6) } else { 0 };
            has_link |= links > 0;
            edges.push((s, d, random_features(&mut rng, links)));
        }
        if dangling_free && !has_link {
            let mut d = rng.random_range(0..n - 1);
            if d >= s {
                d += 1;
            }
            match edges.iter_mut().find(|(es, ed, _)| *es == s && *ed == d) {
                Some(e) => e.2.links = 1,
                None => edges.push((s, d, random_features(&mut rng, 1))),
            }
        }
    }
    WeblogGraph::from_parts(nodes, edges).unwrap()
}

fn random_features(rng: &mut ChaCha8Rng, links: u32) -> EdgeBundle {
    let mut b = EdgeBundle::new(links, rng.random_range(0..6), rng.random_range(0..4), rng.random_range(0..5));
    if links == 0 && b.tags + b.authors + b.news == 0 {
        b.tags = 3;
    }
    b
}

/// Dense-matrix power iteration of unnormalized PageRank: teleport
/// `(1 - damping)`, uniform split over distinct hyperlink targets. Assumes
/// every node has at least one hyperlink.
pub fn dense_pagerank(graph: &WeblogGraph, damping: f64, iters: usize) -> Vec<f64> {
    let n = graph.node_count();
    let mut m = vec![vec![0.0f64; n]; n];
    for e in graph.edges() {
        if e.bundle.links > 0 {
            m[e.src.index()][e.dst.index()] = 1.0;
        }
    }
    for row in &mut m {
        let out: f64 = row.iter().sum();
        assert!(out > 0.0, "oracle requires dangling-free graphs");
        for x in row.iter_mut() {
            *x /= out;
        }
    }
    let mut b = vec![1.0f64; n];
    for _ in 0..iters {
        let mut next = vec![1.0 - damping; n];
        for (j, slot) in next.iter_mut().enumerate() {
            let mut acc = 0.0;
            for i in 0..n {
                acc += m[i][j] * b[i];
            }
            *slot += damping * acc;
        }
        b = next;
    }
    b
}
