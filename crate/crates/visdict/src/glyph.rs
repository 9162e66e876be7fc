//! The synthetic glyph world.
//!
//! A word is rendered onto a fixed grid of [`GRID_WIDTH`] cells; each cell is
//! a probability distribution over the 37 glyph classes (36 characters plus
//! blank). Rendering is one-hot; [`perturb`] then simulates a noisy reading:
//! with probability `noise_rate` a cell's mass is swapped onto a confusable
//! neighbor, and a `smear` fraction of every non-blank cell's mass is spread
//! uniformly over the rendered character's five confusable channels.
//!
//! Smearing always uses the *rendered* character's confusion row, even after
//! a swap. A swapped cell therefore keeps an s/5-level signature of the
//! original character's row, distinct from a genuine rendering of the
//! swapped-in character (whose smear lands on its own row). That residue is
//! what a matching network can exploit while a plain per-cell argmax reader
//! cannot see past the dominant channel.

use std::path::Path;
use std::sync::LazyLock;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::alphabet::{self, CLASS_COUNT, EOS_CLASS};
use crate::error::{Error, Result};
use crate::lexicon::{Lexicon, Word};
use crate::store::{sha256, Reader, Writer};

/// Number of glyph cells in an image; equals the maximum word length.
pub const GRID_WIDTH: usize = 25;

/// Confusable neighbors per character.
pub const ROW_LEN: usize = 5;

/// Upper bound on `smear`: beyond 5/6 the smeared mass would overtake the
/// dominant channel and argmax changes would stop being confusion-row moves.
pub const MAX_SMEAR: f64 = 5.0 / 6.0;

const DATASET_MAGIC: &str = "VDDS";
const DATASET_VERSION: u32 = 1;

const IMAGE_MAGIC: &str = "VDGI";
const IMAGE_VERSION: u32 = 1;

/// Q0.63 fixed point: cell values are probabilities in [0, 1], stored as
/// `round(p * 2^63)`. Round-trip error is ~5e-20 per channel, far inside the
/// 1e-9 simplex tolerance.
const Q63: f64 = 9_223_372_036_854_775_808.0;

/// Per-character confusability: each of the 36 characters maps to exactly
/// five distinct other characters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionTable {
    /// Indexed by class; each row holds class indices in canonical order.
    rows: [[u8; ROW_LEN]; alphabet::ALPHABET_LEN],
}

static DEFAULT_TABLE: LazyLock<ConfusionTable> = LazyLock::new(|| {
    ConfusionTable::parse(include_str!("../data/confusion_v1.txt"))
        .expect("bundled confusion table is valid")
});

impl ConfusionTable {
    /// The bundled v1 table. Symmetric by construction: x confusable with y
    /// implies y confusable with x, which keeps the smear signature readable
    /// in both directions.
    pub fn default_v1() -> &'static ConfusionTable {
        &DEFAULT_TABLE
    }

    /// Parse the on-disk format: exactly 36 lines of `key:c1c2c3c4c5`, one
    /// line per character, values distinct and never the key itself.
    pub fn parse(text: &str) -> Result<ConfusionTable> {
        let mut rows = [[u8::MAX; ROW_LEN]; alphabet::ALPHABET_LEN];
        let mut seen = [false; alphabet::ALPHABET_LEN];
        let mut count = 0usize;
        for (lineno, line) in text.lines().enumerate() {
            let bad = |what: &str| {
                Error::CorruptFile(format!("confusion table line {}: {what}", lineno + 1))
            };
            let bytes = line.as_bytes();
            if bytes.len() != 2 + ROW_LEN || bytes[1] != b':' {
                return Err(bad("expected `key:c1c2c3c4c5`"));
            }
            let key = alphabet::class_of(bytes[0])
                .ok_or_else(|| bad("key is not in the alphabet"))?;
            if seen[key] {
                return Err(bad("duplicate key"));
            }
            seen[key] = true;
            let mut row = [u8::MAX; ROW_LEN];
            for (i, &ch) in bytes[2..].iter().enumerate() {
                let class = alphabet::class_of(ch)
                    .ok_or_else(|| bad("value is not in the alphabet"))?;
                if class == key {
                    return Err(bad("a character cannot be confusable with itself"));
                }
                if row[..i].contains(&(class as u8)) {
                    return Err(bad("duplicate value in row"));
                }
                row[i] = class as u8;
            }
            rows[key] = row;
            count += 1;
        }
        if count != alphabet::ALPHABET_LEN {
            return Err(Error::CorruptFile(format!(
                "confusion table has {count} rows, expected {}",
                alphabet::ALPHABET_LEN
            )));
        }
        Ok(ConfusionTable { rows })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ConfusionTable> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ConfusionTable::parse(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.canonical_text()).map_err(|e| Error::io(path, e))
    }

    /// The table in its text form, rows in class order. Parsing this back
    /// reproduces the table exactly.
    pub fn canonical_text(&self) -> String {
        let mut out = String::with_capacity(alphabet::ALPHABET_LEN * (ROW_LEN + 3));
        for (key, row) in self.rows.iter().enumerate() {
            out.push(alphabet::char_of(key) as char);
            out.push(':');
            for &c in row {
                out.push(alphabet::char_of(c as usize) as char);
            }
            out.push('\n');
        }
        out
    }

    /// SHA-256 of the canonical text, for manifests.
    pub fn digest_hex(&self) -> String {
        crate::lexicon::hex(&crate::store::sha256(self.canonical_text().as_bytes()))
    }

    /// Confusable class indices for a character class in `0..36`.
    pub fn row(&self, class: usize) -> [usize; ROW_LEN] {
        self.rows[class].map(|c| c as usize)
    }

    /// Confusable characters for a character.
    pub fn confusable_chars(&self, ch: u8) -> [u8; ROW_LEN] {
        let class = alphabet::class_of(ch).expect("character in alphabet");
        self.rows[class].map(|c| alphabet::char_of(c as usize))
    }

    pub fn is_confusable(&self, a: u8, b: u8) -> bool {
        match alphabet::class_of(a) {
            Some(class) => self.confusable_chars(alphabet::char_of(class)).contains(&b),
            None => false,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        (0..alphabet::ALPHABET_LEN).all(|key| {
            self.row(key)
                .iter()
                .all(|&v| self.row(v).contains(&key))
        })
    }
}

/// One rendered (and possibly perturbed) word image: `GRID_WIDTH` cells, each
/// a probability simplex over the 37 glyph classes. Cells at positions
/// `>= label_len` hold the blank one-hot and are never touched by noise.
#[derive(Debug, Clone, PartialEq)]
pub struct GlyphImage {
    cells: Array2<f64>,
    label_len: usize,
}

impl GlyphImage {
    pub fn cells(&self) -> &Array2<f64> {
        &self.cells
    }

    pub fn label_len(&self) -> usize {
        self.label_len
    }

    /// Per-cell argmax class (first index wins ties).
    pub fn argmax_classes(&self) -> Vec<usize> {
        self.cells
            .rows()
            .into_iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold((0usize, f64::MIN), |best, (i, &v)| {
                        if v > best.1 {
                            (i, v)
                        } else {
                            best
                        }
                    })
                    .0
            })
            .collect()
    }

    /// Assemble an image from raw cells, enforcing [`GlyphImage::validate`].
    pub fn from_cells(cells: Array2<f64>, label_len: usize) -> Result<GlyphImage> {
        let image = GlyphImage { cells, label_len };
        image.validate()?;
        Ok(image)
    }

    /// Serialized "VDGI" envelope: label length, then the Q0.63 fixed-point
    /// cell grid. One image per file; datasets have their own format.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = Writer::new(IMAGE_MAGIC, IMAGE_VERSION);
        w.put_u8(self.label_len as u8);
        for &v in self.cells.iter() {
            w.put_u64((v * Q63).round() as u64);
        }
        w.finish_to(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<GlyphImage> {
        let mut r = Reader::open(path, IMAGE_MAGIC, IMAGE_VERSION)?;
        let label_len = r.take_u8()? as usize;
        let mut cells = Array2::zeros((GRID_WIDTH, CLASS_COUNT));
        for v in cells.iter_mut() {
            *v = r.take_u64()? as f64 / Q63;
        }
        r.expect_end()?;
        GlyphImage::from_cells(cells, label_len)
            .map_err(|e| Error::CorruptFile(format!("bad glyph image: {e}")))
    }

    /// Check the structural invariants: shape, non-negative entries, per-cell
    /// sums within 1e-9 of one, and exact blank one-hots beyond the label.
    pub fn validate(&self) -> Result<()> {
        if self.cells.dim() != (GRID_WIDTH, CLASS_COUNT) {
            return Err(Error::InvalidConfig(format!(
                "glyph image has shape {:?}",
                self.cells.dim()
            )));
        }
        for (i, row) in self.cells.rows().into_iter().enumerate() {
            let mut sum = 0.0;
            for &v in row {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::NonFiniteParams);
                }
                sum += v;
            }
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidConfig(format!(
                    "cell {i} sums to {sum}, not a probability simplex"
                )));
            }
            if i >= self.label_len {
                let blank = row[EOS_CLASS] == 1.0
                    && row.iter().take(EOS_CLASS).all(|&v| v == 0.0);
                if !blank {
                    return Err(Error::InvalidConfig(format!(
                        "cell {i} is past the label but not blank"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One-hot rendering: cell i holds the class of `word[i]`, trailing cells are
/// blank.
pub fn render(word: &Word) -> GlyphImage {
    let mut cells = Array2::zeros((GRID_WIDTH, CLASS_COUNT));
    for (i, mut row) in cells.rows_mut().into_iter().enumerate() {
        let class = word
            .as_bytes()
            .get(i)
            .map(|&ch| alphabet::class_of(ch).expect("word is normalized"))
            .unwrap_or(EOS_CLASS);
        row[class] = 1.0;
    }
    GlyphImage {
        cells,
        label_len: word.len(),
    }
}

/// Apply reading noise to a rendered image. Pure: the same arguments always
/// produce the same output. Only non-blank cells are touched.
pub fn perturb(
    image: &GlyphImage,
    table: &ConfusionTable,
    noise_rate: f64,
    smear: f64,
    rng_seed: u64,
) -> GlyphImage {
    if let Err(e) = validate_noise_params(noise_rate, smear) {
        panic!("perturb precondition violated: {e}");
    }
    let mut out = image.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    for i in 0..image.label_len {
        let mut row = out.cells.row_mut(i);
        // The rendered character: dominant channel before any noise.
        let rendered = row
            .iter()
            .enumerate()
            .fold((0usize, f64::MIN), |best, (c, &v)| if v > best.1 { (c, v) } else { best })
            .0;
        debug_assert!(rendered < alphabet::ALPHABET_LEN, "blank cell inside label");
        let confusables = table.row(rendered);

        if noise_rate > 0.0 && rng.gen_bool(noise_rate) {
            let target = confusables[rng.gen_range(0..ROW_LEN)];
            let mass = row[rendered];
            row[rendered] = 0.0;
            row[target] += mass;
        }
        if smear > 0.0 {
            for v in row.iter_mut() {
                *v *= 1.0 - smear;
            }
            for &c in &confusables {
                row[c] += smear / ROW_LEN as f64;
            }
            let sum: f64 = row.iter().sum();
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
    }
    out
}

fn validate_noise_params(noise_rate: f64, smear: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&noise_rate) {
        return Err(Error::InvalidConfig(format!(
            "noise_rate {noise_rate} outside [0, 1]"
        )));
    }
    if !(0.0..MAX_SMEAR).contains(&smear) {
        return Err(Error::InvalidConfig(format!(
            "smear {smear} outside [0, {MAX_SMEAR})"
        )));
    }
    Ok(())
}

/// Everything needed to regenerate a dataset byte-for-byte.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DatasetSpec {
    pub size: usize,
    pub noise_rate: f64,
    pub smear: f64,
    /// Fraction of labels mutated into strings absent from the lexicon
    /// (rounded to a whole sample count). Evaluation sets use this to probe
    /// words the dictionary can't supply; training sets benefit from a
    /// matching share, otherwise the matcher learns that non-lexicon
    /// strings are always wrong and never preserves a correct raw read.
    pub out_of_lexicon_fraction: f64,
    pub seed: u64,
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.size == 0 {
            return Err(Error::InvalidConfig("dataset size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.out_of_lexicon_fraction) {
            return Err(Error::InvalidConfig(format!(
                "out_of_lexicon_fraction {} outside [0, 1]",
                self.out_of_lexicon_fraction
            )));
        }
        validate_noise_params(self.noise_rate, self.smear)
    }
}

/// A labeled glyph image.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub label: Word,
    pub image: GlyphImage,
}

/// A generated corpus plus the `DatasetSpec` that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub spec: DatasetSpec,
    pub samples: Vec<Sample>,
}

/// Draw labels from the lexicon, mutate the out-of-lexicon share, render and
/// perturb. Deterministic in `spec.seed`; sample images are rendered in
/// parallel from per-sample seeds drawn up front.
pub fn generate_dataset(
    lexicon: &Lexicon,
    table: &ConfusionTable,
    spec: &DatasetSpec,
) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let words = lexicon.words();
    if words.is_empty() {
        return Err(Error::EmptyLexicon);
    }

    let mut labels: Vec<Word> = (0..spec.size)
        .map(|_| words[rng.gen_range(0..words.len())].clone())
        .collect();

    let ool_count = (spec.out_of_lexicon_fraction * spec.size as f64).round() as usize;
    if ool_count > 0 {
        let mut order: Vec<usize> = (0..spec.size).collect();
        shuffle(&mut order, &mut rng);
        for &i in order.iter().take(ool_count) {
            labels[i] = mutate_out_of_lexicon(&labels[i], lexicon, table, &mut rng)?;
        }
    }

    let jobs: Vec<(Word, u64)> = labels
        .into_iter()
        .map(|label| (label, rng.gen::<u64>()))
        .collect();
    let samples: Vec<Sample> = jobs
        .into_par_iter()
        .map(|(label, seed)| {
            let image = perturb(&render(&label), table, spec.noise_rate, spec.smear, seed);
            Sample { label, image }
        })
        .collect();

    Ok(Dataset {
        spec: spec.clone(),
        samples,
    })
}

/// Fisher-Yates with the caller's stream, so the whole generation pipeline
/// consumes one deterministic sequence.
pub(crate) fn shuffle<T>(items: &mut [T], rng: &mut ChaCha8Rng) {
    for i in (1..items.len()).rev() {
        items.swap(i, rng.gen_range(0..=i));
    }
}

/// Replace one character with a confusable neighbor such that the result is
/// not a lexicon word. Falls back to exhaustive single then double
/// substitution for pathologically dense lexicons.
fn mutate_out_of_lexicon(
    label: &Word,
    lexicon: &Lexicon,
    table: &ConfusionTable,
    rng: &mut ChaCha8Rng,
) -> Result<Word> {
    let bytes = label.as_bytes();
    for _ in 0..64 {
        let pos = rng.gen_range(0..bytes.len());
        let swap = table.confusable_chars(bytes[pos])[rng.gen_range(0..ROW_LEN)];
        let cand = substitute(bytes, pos, swap);
        if !lexicon.contains(&cand) {
            return Word::new(&cand);
        }
    }
    // Exhaustive single substitutions, then doubles, in deterministic order.
    let singles: Vec<String> = (0..bytes.len())
        .flat_map(|pos| {
            table
                .confusable_chars(bytes[pos])
                .into_iter()
                .map(move |swap| (pos, swap))
        })
        .map(|(pos, swap)| substitute(bytes, pos, swap))
        .collect();
    if let Some(cand) = singles.iter().find(|c| !lexicon.contains(c)) {
        return Word::new(cand);
    }
    for first in &singles {
        let fb = first.as_bytes();
        for pos in 0..fb.len() {
            for swap in table.confusable_chars(fb[pos]) {
                let cand = substitute(fb, pos, swap);
                if !lexicon.contains(&cand) && cand.as_bytes() != bytes {
                    return Word::new(&cand);
                }
            }
        }
    }
    Err(Error::InvalidConfig(format!(
        "cannot mutate {label:?} out of the lexicon: its whole confusable \
         neighborhood is present"
    )))
}

fn substitute(bytes: &[u8], pos: usize, swap: u8) -> String {
    let mut out = bytes.to_vec();
    out[pos] = swap;
    String::from_utf8(out).expect("alphabet bytes are ASCII")
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Serialized "VDDS" envelope: spec header, then per-sample label and
    /// Q0.63 fixed-point cell grid.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(DATASET_MAGIC, DATASET_VERSION);
        w.put_u64(self.spec.size as u64);
        w.put_f64(self.spec.noise_rate);
        w.put_f64(self.spec.smear);
        w.put_f64(self.spec.out_of_lexicon_fraction);
        w.put_u64(self.spec.seed);
        w.put_u64(self.samples.len() as u64);
        for sample in &self.samples {
            w.put_str(sample.label.as_str());
            for &v in sample.image.cells.iter() {
                w.put_u64((v * Q63).round() as u64);
            }
        }
        w.finish()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Dataset> {
        let mut r = Reader::open(path, DATASET_MAGIC, DATASET_VERSION)?;
        let spec = DatasetSpec {
            size: r.take_u64()? as usize,
            noise_rate: r.take_f64()?,
            smear: r.take_f64()?,
            out_of_lexicon_fraction: r.take_f64()?,
            seed: r.take_u64()?,
        };
        let count = r.take_u64()? as usize;
        let mut samples = Vec::with_capacity(count);
        for _ in 0..count {
            let label = Word::new(&r.take_str()?)
                .map_err(|e| Error::CorruptFile(format!("bad label in dataset: {e}")))?;
            let mut cells = Array2::zeros((GRID_WIDTH, CLASS_COUNT));
            for v in cells.iter_mut() {
                *v = r.take_u64()? as f64 / Q63;
            }
            let image = GlyphImage {
                cells,
                label_len: label.len(),
            };
            image
                .validate()
                .map_err(|e| Error::CorruptFile(format!("bad glyph image in dataset: {e}")))?;
            samples.push(Sample { label, image });
        }
        r.expect_end()?;
        Ok(Dataset { spec, samples })
    }

    /// SHA-256 over the serialized envelope; recorded in run manifests so a
    /// report pins the exact data it was computed from.
    pub fn digest_hex(&self) -> String {
        crate::lexicon::hex(&sha256(&self.to_bytes()))
    }
}
