//! Seeded toy review corpora with planted structure, for tests, benchmarks
//! and smoke runs when no real dataset is at hand.
//!
//! Each user and item gets a mixture over `topics`. A rating is driven by
//! the affinity of the two mixtures plus noise; review text mixes words of
//! the item's topics, the writer's topics, sentiment words that follow the
//! rating, and filler. Item popularity is Zipf-like, so a few items collect
//! most ratings as in real review dumps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::ReviewRecord;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub n_ratings: usize,
    pub topics: usize,
    pub words_per_topic: usize,
    pub words_per_review: usize,
    /// Standard deviation of the rating noise, in stars.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_users: 200,
            n_items: 40,
            n_ratings: 1000,
            topics: 6,
            words_per_topic: 12,
            words_per_review: 20,
            noise: 0.4,
            seed: 0,
        }
    }
}

const POSITIVE: [&str; 6] = [
    "great",
    "loved",
    "excellent",
    "wonderful",
    "superb",
    "enjoyable",
];
const NEGATIVE: [&str; 6] = [
    "awful",
    "boring",
    "terrible",
    "dull",
    "waste",
    "disappointing",
];
const FILLER: [&str; 8] = ["the", "movie", "and", "it", "was", "this", "watch", "story"];

fn mixture(rng: &mut impl Rng, topics: usize) -> Vec<f64> {
    // two dominant topics on a small uniform floor
    let mut w = vec![0.05; topics];
    w[rng.random_range(0..topics)] += 1.0;
    w[rng.random_range(0..topics)] += 0.5;
    let s: f64 = w.iter().sum();
    w.iter().map(|x| x / s).collect()
}

fn pick(rng: &mut impl Rng, weights: &[f64]) -> usize {
    let mut x = rng.random::<f64>() * weights.iter().sum::<f64>();
    for (i, w) in weights.iter().enumerate() {
        if x < *w {
            return i;
        }
        x -= w;
    }
    weights.len() - 1
}

/// Approximately standard normal (sum of 12 uniforms).
fn normal(rng: &mut impl Rng) -> f64 {
    (0..12).map(|_| rng.random::<f64>()).sum::<f64>() - 6.0
}

/// `n_ratings` records in a deterministic order. Every user and item key
/// that appears is of the form `U00042` / `I0007`.
pub fn generate(cfg: &SyntheticConfig) -> Vec<ReviewRecord> {
    assert!(
        cfg.n_users > 0 && cfg.n_items > 0 && cfg.topics > 0,
        "empty synthetic config"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let users: Vec<Vec<f64>> = (0..cfg.n_users)
        .map(|_| mixture(&mut rng, cfg.topics))
        .collect();
    let items: Vec<Vec<f64>> = (0..cfg.n_items)
        .map(|_| mixture(&mut rng, cfg.topics))
        .collect();
    let bias: Vec<f64> = (0..cfg.n_items).map(|_| 0.6 * normal(&mut rng)).collect();
    let popularity: Vec<f64> = (0..cfg.n_items).map(|j| 1.0 / (j as f64 + 1.0)).collect();

    // affinity ranges over about [0.03, 0.6]; centre it so that matched
    // tastes land near 5 stars and mismatched near 2
    let word = |t: usize, w: usize| format!("t{t}w{w}");
    (0..cfg.n_ratings)
        .map(|_| {
            let i = rng.random_range(0..cfg.n_users);
            let j = pick(&mut rng, &popularity);
            let affinity: f64 = users[i].iter().zip(&items[j]).map(|(a, b)| a * b).sum();
            let raw = 2.0 + 6.0 * affinity + bias[j] + cfg.noise * normal(&mut rng);
            let rating = raw.round().clamp(1.0, 5.0);

            let mut text = Vec::with_capacity(cfg.words_per_review);
            for _ in 0..cfg.words_per_review {
                let roll = rng.random::<f64>();
                let token = if roll < 0.35 {
                    word(
                        pick(&mut rng, &items[j]),
                        rng.random_range(0..cfg.words_per_topic),
                    )
                } else if roll < 0.6 {
                    word(
                        pick(&mut rng, &users[i]),
                        rng.random_range(0..cfg.words_per_topic),
                    )
                } else if roll < 0.8 {
                    let pool = if rng.random::<f64>() * 4.0 < rating - 1.0 {
                        POSITIVE
                    } else {
                        NEGATIVE
                    };
                    pool[rng.random_range(0..pool.len())].to_string()
                } else {
                    FILLER[rng.random_range(0..FILLER.len())].to_string()
                };
                text.push(token);
            }
            ReviewRecord {
                user_id: format!("U{i:05}"),
                item_id: format!("I{j:04}"),
                rating,
                review_text: text.join(" "),
            }
        })
        .collect()
}

/// The records as Amazon-style JSON lines.
pub fn to_json_lines(records: &[ReviewRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let line = serde_json::json!({
            "reviewerID": r.user_id,
            "asin": r.item_id,
            "overall": r.rating,
            "reviewText": r.review_text,
        });
        out.push_str(&line.to_string());
        out.push('\n');
    }
    out
}
