//! The synthetic glyph world: render a word onto the 25-cell grid, corrupt
//! it with confusable-character noise, and generate a labeled dataset with
//! an out-of-lexicon share.
//!
//!     cargo run --release --example glyph_dataset

use visdict::alphabet::char_of;
use visdict::glyph::{generate_dataset, perturb, render, ConfusionTable, DatasetSpec};
use visdict::lexicon::{Lexicon, Word};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let table = ConfusionTable::default_v1();
    let word = Word::new("output")?;

    // A clean rendering is one-hot per cell; noise moves mass to confusable
    // neighbors ("0" for "o", "1" for "l", ...) and smears the rest of the
    // confusion row.
    let clean = render(&word);
    let noisy = perturb(&clean, table, 0.5, 0.5, 7);
    println!("label: {}", word.as_str());
    println!("confusion row of 'o': {:?}", row_chars(table, b'o'));
    println!("\nper-cell argmax after heavy noise (rate 0.5, smear 0.5):");
    let classes = noisy.argmax_classes();
    let read: String = classes[..word.len()]
        .iter()
        .map(|&c| char_of(c) as char)
        .collect();
    println!("  read back: {read:?}");

    println!("\ntop of each corrupted cell:");
    for (i, row) in noisy.cells().rows().into_iter().enumerate().take(word.len()) {
        let mut pairs: Vec<(usize, f64)> =
            row.iter().copied().enumerate().filter(|&(_, v)| v > 0.0).collect();
        pairs.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let shown: Vec<String> = pairs
            .iter()
            .take(3)
            .map(|&(c, v)| format!("{}:{v:.2}", char_of(c) as char))
            .collect();
        println!("  cell {i} ({}): {}", word.as_bytes()[i] as char, shown.join(" "));
    }

    // Dataset generation draws labels from a lexicon and mutates a share of
    // them into strings the lexicon does not contain.
    let lexicon = Lexicon::synthetic(500, 3)?;
    let spec = DatasetSpec {
        size: 1000,
        noise_rate: 0.06,
        smear: 0.5,
        out_of_lexicon_fraction: 0.2,
        seed: 99,
    };
    let data = generate_dataset(&lexicon, table, &spec)?;
    let ool = data
        .samples
        .iter()
        .filter(|s| !lexicon.contains(s.label.as_str()))
        .count();
    println!(
        "\ndataset: {} samples, {} with out-of-lexicon labels, digest {}",
        data.len(),
        ool,
        &data.digest_hex()[..16]
    );
    for sample in &data.samples[..5] {
        let read: String = sample.image.argmax_classes()[..sample.label.len()]
            .iter()
            .map(|&c| char_of(c) as char)
            .collect();
        let marker = if lexicon.contains(sample.label.as_str()) { "   " } else { "OOL" };
        println!("  {marker} label {:<12} argmax read {read:?}", sample.label.as_str());
    }
    Ok(())
}

fn row_chars(table: &ConfusionTable, ch: u8) -> Vec<char> {
    table.confusable_chars(ch).iter().map(|&c| c as char).collect()
}
