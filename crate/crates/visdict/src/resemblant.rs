//! Resemblant hard negatives: words that differ from a label by exactly one
//! confusable-character substitution. These are the texts a matching network
//! must learn to rank below the true label, which is precisely the judgment
//! it is asked to make at inference time when a visual prediction and its
//! near-neighbors disagree by one character.
//!
//! For a label of length n there are exactly 5n distinct variants (five
//! confusables per position; different positions can never collide), sampled
//! here without replacement.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::alphabet;
use crate::error::{Error, Result};
use crate::glyph::{ConfusionTable, ROW_LEN};
use crate::lexicon::Word;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ResemblantSpec {
    /// How many variants to draw (may be zero).
    pub count: usize,
    pub seed: u64,
}

/// Maximum number of distinct resemblants a label admits.
pub fn max_resemblants(label: &Word) -> usize {
    ROW_LEN * label.len()
}

/// Sample `spec.count` distinct single-substitution variants of `label`,
/// uniformly without replacement, deterministically in `spec.seed`.
pub fn generate_resemblants(
    label: &Word,
    table: &ConfusionTable,
    spec: &ResemblantSpec,
) -> Result<Vec<Word>> {
    let total = max_resemblants(label);
    if spec.count > total {
        return Err(Error::InfeasibleCount {
            label: label.as_str().to_string(),
            requested: spec.count,
            available: total,
        });
    }
    let mut slots: Vec<u32> = (0..total as u32).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    // Partial Fisher-Yates: after i steps the first i slots are a uniform
    // draw without replacement.
    for i in 0..spec.count {
        let j = rng.gen_range(i..total);
        slots.swap(i, j);
    }
    let bytes = label.as_bytes();
    Ok(slots[..spec.count]
        .iter()
        .map(|&slot| {
            let pos = slot as usize / ROW_LEN;
            let pick = slot as usize % ROW_LEN;
            let class = alphabet::class_of(bytes[pos]).expect("label is normalized");
            let mut out = bytes.to_vec();
            out[pos] = alphabet::char_of(table.row(class)[pick]);
            Word::new(std::str::from_utf8(&out).expect("ascii"))
                .expect("substitution preserves validity")
        })
        .collect())
}
