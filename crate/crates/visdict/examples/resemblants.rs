//! Resemblant words: hard negatives one confusable substitution away from a
//! label, the training signal that teaches the matcher to look past the
//! dominant glyph channel.
//!
//!     cargo run --release --example resemblants

use visdict::glyph::ConfusionTable;
use visdict::lexicon::{levenshtein, Word};
use visdict::resemblant::{generate_resemblants, max_resemblants, ResemblantSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let table = ConfusionTable::default_v1();

    for (label, count) in [("ox", 3), ("hour", 7), ("tiredness", 15)] {
        let label = Word::new(label)?;
        let spec = ResemblantSpec { count, seed: 5 };
        let words = generate_resemblants(&label, table, &spec)?;
        println!(
            "{} ({} possible, drew {}):",
            label.as_str(),
            max_resemblants(&label),
            words.len()
        );
        for w in &words {
            assert_eq!(levenshtein(label.as_str(), w.as_str()), 1);
            assert_ne!(w, &label);
            println!("  {}", w.as_str());
        }
    }

    // Same seed, same draw; new seed, usually a different one.
    let label = Word::new("hour")?;
    let a = generate_resemblants(&label, table, &ResemblantSpec { count: 4, seed: 9 })?;
    let b = generate_resemblants(&label, table, &ResemblantSpec { count: 4, seed: 9 })?;
    assert_eq!(a, b);
    println!("\ndraws are deterministic in the seed");

    // Requests beyond the label's variant budget are refused, not truncated.
    let err = generate_resemblants(&label, table, &ResemblantSpec { count: 999, seed: 0 });
    println!("asking for 999: {}", err.unwrap_err());
    Ok(())
}
