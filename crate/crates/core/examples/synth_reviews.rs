//! Writes a synthetic review file in the Amazon JSON-lines layout.
//!
//! cargo run --release -p biconvmf --example synth_reviews -- 4000 reviews.json

use biconvmf::synthetic::{generate, to_json_lines, SyntheticConfig};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n_ratings = args.first().and_then(|s| s.parse().ok()).unwrap_or(4000);
    let path = args.get(1).map_or("reviews.json", String::as_str);
    let cfg = SyntheticConfig {
        n_users: n_ratings / 2,
        n_items: (n_ratings / 40).max(10),
        n_ratings,
        ..Default::default()
    };
    std::fs::write(path, to_json_lines(&generate(&cfg))).expect("write review file");
    eprintln!("{n_ratings} reviews written to {path}");
}
