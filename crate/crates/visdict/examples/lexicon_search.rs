//! Fuzzy dictionary lookup: build the metric index over a synthetic lexicon
//! and retrieve nearest words for a few garbled queries, checking the result
//! against the brute-force scan.
//!
//!     cargo run --release --example lexicon_search

use std::time::Instant;

use visdict::index::{top_n_by_scan, MetricIndex};
use visdict::lexicon::{levenshtein, Lexicon};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let lexicon = Lexicon::synthetic(20_000, 42)?;
    println!(
        "lexicon: {} words, digest {}",
        lexicon.len(),
        &lexicon.digest_hex()[..16]
    );

    let started = Instant::now();
    let index = MetricIndex::build(lexicon.clone());
    println!("index built in {:.0?}", started.elapsed());

    // Garbled strings of the kind a noisy recognizer emits: these are
    // usually not lexicon words themselves.
    for query in ["ngee", "tsc", "hovse", "xylophon", "q"] {
        let started = Instant::now();
        let hits = index.top_n(query, 5);
        let took = started.elapsed();
        let scan = top_n_by_scan(&lexicon, query, 5);
        assert_eq!(hits, scan, "index must agree with the brute-force oracle");
        let rendered: Vec<String> = hits
            .iter()
            .map(|h| format!("{}({})", h.word, h.distance))
            .collect();
        println!("{query:>10} -> {} [{took:.0?}]", rendered.join(" "));
    }

    // The ranking key is (distance, word): verify on one query by hand.
    let hits = index.top_n("hovse", 5);
    for pair in hits.windows(2) {
        let a = (pair[0].distance, pair[0].word.as_str());
        let b = (pair[1].distance, pair[1].word.as_str());
        assert!(a <= b, "ranking is ordered by (distance, word)");
    }
    let d = levenshtein("hovse", hits[0].word.as_str());
    assert_eq!(d, hits[0].distance);
    println!("ranking verified: ordered by (edit distance, word)");
    Ok(())
}
