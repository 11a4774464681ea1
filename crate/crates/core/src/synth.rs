//! Seeded synthetic corpora in the ingest line format.
//!
//! Weblogs belong to topics; tags and news stories are drawn mostly from
//! the weblog's topic, and a pool of community authors posts across
//! weblogs of the same topic. This produces the tag, author and news
//! overlap the similarity edges feed on, over a sparse hyperlink layer.

use std::io::Write;

use chrono::{DateTime, Duration, SecondsFormat, Utc};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Poisson;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::PostRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub weblogs: usize,
    pub posts: usize,
    /// Mean post-to-post hyperlinks per post.
    pub link_density: f64,
    /// Mean tags per post.
    pub tag_density: f64,
    /// Probability that a post is written by a shared community author.
    pub author_density: f64,
    /// Mean news links per post.
    pub news_density: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 42,
            weblogs: 200,
            posts: 2000,
            link_density: 0.27,
            tag_density: 1.5,
            author_density: 0.2,
            news_density: 0.6,
        }
    }
}

const WORDS: [&str; 24] = [
    "news", "today", "think", "people", "world", "story", "great", "music", "photo", "politics", "game",
    "movie", "weekend", "read", "write", "code", "election", "iraq", "london", "podcast", "review",
    "friend", "book", "travel",
];

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|d| d.sample(rng) as usize).unwrap_or(0)
}

pub fn generate(cfg: &SynthConfig) -> Result<Vec<PostRecord>> {
    if cfg.weblogs == 0 || cfg.posts == 0 {
        return Err(Error::InvalidConfig("weblog and post counts must be positive".into()));
    }
    let densities = [cfg.link_density, cfg.tag_density, cfg.author_density, cfg.news_density];
    if densities.iter().any(|d| !(d.is_finite() && *d >= 0.0)) || cfg.author_density > 1.0 {
        return Err(Error::InvalidConfig("densities must be non-negative (author density <= 1)".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let topics = (cfg.weblogs / 20).max(1);
    let weblogs: Vec<(String, usize)> = (0..cfg.weblogs)
        .map(|i| {
            let url = if i % 5 == 4 {
                format!("http://www.livejournal.com/users/user{i}")
            } else {
                format!("http://blog{i}.example.com")
            };
            (url, rng.random_range(0..topics))
        })
        .collect();

    // Heavy-tailed activity and popularity.
    let activity: Vec<f64> = (0..cfg.weblogs).map(|i| 1.0 / ((i % 97) as f64 + 1.0).powf(0.7)).collect();
    let pick_weblog = WeightedIndex::new(&activity).expect("positive weights");
    let news_per_topic = 40;
    let news_weights: Vec<f64> = (0..news_per_topic).map(|i| 1.0 / (i as f64 + 1.0)).collect();
    let pick_news = WeightedIndex::new(&news_weights).expect("positive weights");
    let tags_per_topic = 12;

    let start: DateTime<Utc> = DateTime::from_timestamp(1_119_571_200, 0).expect("valid epoch"); // 2005-06-24
    let mut counters = vec![0usize; cfg.weblogs];
    let mut posts: Vec<(usize, String)> = Vec::with_capacity(cfg.posts);
    for _ in 0..cfg.posts {
        let w = pick_weblog.sample(&mut rng);
        counters[w] += 1;
        posts.push((w, format!("{}/2005/{:05}.html", weblogs[w].0, counters[w])));
    }

    let mut first_post: Vec<Option<usize>> = vec![None; cfg.weblogs];
    for (i, (w, _)) in posts.iter().enumerate() {
        first_post[*w].get_or_insert(i);
    }

    let mut out = Vec::with_capacity(cfg.posts);
    for (w, permalink) in &posts {
        let topic = weblogs[*w].1;
        let author = if rng.random_bool(cfg.author_density) {
            Some(format!("member{}-{}", topic, rng.random_range(0..6)))
        } else if rng.random_bool(0.05) {
            None
        } else if rng.random_bool(0.02) {
            Some("admin".to_string())
        } else {
            Some(format!("owner{w}"))
        };

        let tags: Vec<String> = (0..poisson(&mut rng, cfg.tag_density))
            .map(|_| {
                if rng.random_bool(0.85) {
                    format!("t{}-{}", topic, rng.random_range(0..tags_per_topic))
                } else {
                    WORDS[rng.random_range(0..WORDS.len())].to_string()
                }
            })
            .collect();

        let post_links: Vec<String> = (0..poisson(&mut rng, cfg.link_density))
            .map(|_| {
                // Half the links go to a popular weblog's post.
                let target = if rng.random_bool(0.5) {
                    first_post[pick_weblog.sample(&mut rng)].map(|i| posts[i].1.clone())
                } else {
                    None
                };
                target.unwrap_or_else(|| posts[rng.random_range(0..posts.len())].1.clone())
            })
            .filter(|p| p != permalink)
            .collect();

        let news_links: Vec<String> = (0..poisson(&mut rng, cfg.news_density))
            .map(|_| {
                let news_topic = if rng.random_bool(0.8) { topic } else { rng.random_range(0..topics) };
                format!("http://news{}.example.org/story/{}", news_topic % 7, news_topic * 1000 + pick_news.sample(&mut rng))
            })
            .collect();

        let words: Vec<&str> = (0..rng.random_range(5..25))
            .map(|_| WORDS[rng.random_range(0..WORDS.len())])
            .collect();
        let mut content = words.join(" ");
        for t in &tags {
            content.push(' ');
            content.push_str(t);
        }
        let ts = start + Duration::seconds(rng.random_range(0..(38 * 86_400)));

        out.push(PostRecord {
            permalink: permalink.clone(),
            weblog: None,
            author,
            ts: Some(ts.to_rfc3339_opts(SecondsFormat::Secs, true)),
            tags,
            post_links,
            news_links,
            content: Some(content),
        });
    }
    Ok(out)
}

pub fn write_jsonl<W: Write>(records: &[PostRecord], mut out: W) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}
