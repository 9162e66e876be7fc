//! Words and lexicons.
//!
//! A [`Word`] is a normalized string over `[a-z0-9]` of length 1..=25; the
//! upper bound matches the glyph grid width so every word has a rendering.
//! A [`Lexicon`] is a sorted, deduplicated set of words with a content digest
//! that downstream caches bind to.

use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::alphabet;
use crate::error::{Error, Result};

/// Maximum word length; equal to the glyph grid width.
pub const MAX_WORD_LEN: usize = 25;

/// A normalized dictionary word: lowercase `[a-z0-9]`, 1..=25 characters.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Word(String);

impl Word {
    /// Normalize a raw string into a word: surrounding whitespace is trimmed,
    /// ASCII uppercase is lowered, anything else must already be `[a-z0-9]`.
    pub fn new(raw: &str) -> Result<Word> {
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            return Err(Error::EmptyWord);
        }
        let mut out = String::with_capacity(trimmed.len());
        for ch in trimmed.chars() {
            let lowered = ch.to_ascii_lowercase();
            if !lowered.is_ascii() || alphabet::class_of(lowered as u8).is_none() {
                return Err(Error::InvalidCharacter {
                    word: trimmed.to_string(),
                    ch,
                });
            }
            out.push(lowered);
        }
        if out.len() > MAX_WORD_LEN {
            return Err(Error::TooLong {
                word: out.clone(),
                len: out.len(),
                max: MAX_WORD_LEN,
            });
        }
        Ok(Word(out))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn as_bytes(&self) -> &[u8] {
        self.0.as_bytes()
    }

    // No `is_empty`: words are never empty by construction.
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for Word {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl serde::Serialize for Word {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> serde::Deserialize<'de> for Word {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Word, D::Error> {
        let raw = String::deserialize(d)?;
        Word::new(&raw).map_err(serde::de::Error::custom)
    }
}

/// Unit-cost edit distance (insert, delete, substitute) over raw bytes.
/// Both arguments may be empty; all words here are ASCII so bytes == chars.
pub fn levenshtein(a: &str, b: &str) -> u32 {
    let (a, b) = (a.as_bytes(), b.as_bytes());
    if a.is_empty() {
        return b.len() as u32;
    }
    if b.is_empty() {
        return a.len() as u32;
    }
    // Two-row dynamic program; `prev[j]` is the distance between a[..i] and b[..j].
    let mut prev: Vec<u32> = (0..=b.len() as u32).collect();
    let mut cur = vec![0u32; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i as u32 + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + u32::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// A sorted set of distinct normalized words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    words: Vec<Word>,
}

impl Lexicon {
    /// Build from raw strings: each is normalized, duplicates (after
    /// normalization) collapse, and the result is sorted. Invalid entries make
    /// the whole construction fail rather than being dropped.
    pub fn from_words<I, S>(raw: I) -> Result<Lexicon>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut words = Vec::new();
        for item in raw {
            words.push(Word::new(item.as_ref())?);
        }
        if words.is_empty() {
            return Err(Error::EmptyLexicon);
        }
        words.sort_unstable();
        words.dedup();
        Ok(Lexicon { words })
    }

    /// Load from a text file: UTF-8, one word per line, `#` starts a comment
    /// line, blank lines are skipped. Any invalid word aborts the load.
    pub fn load(path: impl AsRef<Path>) -> Result<Lexicon> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        Lexicon::from_words(lines)
    }

    /// Write one word per line in sorted order.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.canonical_bytes()).map_err(|e| Error::io(path, e))
    }

    /// Deterministic synthetic lexicon for demos and tests: `size` distinct
    /// words of length 3..=10, mostly letters with occasional digits.
    pub fn synthetic(size: usize, seed: u64) -> Result<Lexicon> {
        if size == 0 {
            return Err(Error::EmptyLexicon);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut words = std::collections::BTreeSet::new();
        while words.len() < size {
            let len = rng.gen_range(3..=10usize);
            let mut w = String::with_capacity(len);
            for _ in 0..len {
                let class = if rng.gen_bool(0.9) {
                    rng.gen_range(0..26usize)
                } else {
                    rng.gen_range(26..alphabet::ALPHABET_LEN)
                };
                w.push(alphabet::char_of(class) as char);
            }
            words.insert(Word(w));
        }
        Ok(Lexicon {
            words: words.into_iter().collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[Word] {
        &self.words
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words
            .binary_search_by(|w| w.as_str().cmp(word))
            .is_ok()
    }

    /// The exact bytes `save` writes; also the digest preimage.
    fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for w in &self.words {
            out.extend_from_slice(w.as_bytes());
            out.push(b'\n');
        }
        out
    }

    /// SHA-256 of the canonical word list; caches derived from this lexicon
    /// store it and refuse to load against different content.
    pub fn digest(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update(self.canonical_bytes());
        hasher.finalize().into()
    }

    pub fn digest_hex(&self) -> String {
        hex(&self.digest())
    }
}

/// Lowercase hex rendering used for digests throughout the crate.
pub(crate) fn hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}
