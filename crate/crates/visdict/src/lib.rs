//! Dictionary-guided text correction over a synthetic glyph world.
//!
//! A noisy visual recognizer reads a word image and emits its best-guess
//! string. The conventional fix snaps that string to the nearest dictionary
//! word by edit distance, which repairs misreadings but destroys correct
//! readings of words the dictionary lacks. This crate implements the
//! two-forward alternative: retrieve the top-N nearest dictionary words as
//! candidates, keep the raw reading among them, and let a contrastively
//! trained image-text matcher pick the candidate the image actually
//! supports.
//!
//! Everything runs at desk scale on a synthetic world: word images are
//! 25-cell grids of per-character class distributions, corrupted by a
//! confusable-character noise model (`0` for `o`, `1` for `l`, ...). The
//! matcher is trained against *resemblant* hard negatives, words one
//! confusable substitution away from the label, which force it to read the
//! faint residue a corrupted cell leaves behind rather than trusting the
//! dominant channel.
//!
//! # Module map
//!
//! - [`lexicon`]: normalized words, edit distance, word lists.
//! - [`index`]: exact top-N retrieval under (distance, word) order, with a
//!   brute-force oracle it must match.
//! - [`glyph`]: the image world: rendering, confusion noise, datasets.
//! - [`resemblant`]: hard-negative sampling.
//! - [`nn`]: the model, its losses, and hand-derived gradients.
//! - [`check`]: finite-difference verification of those gradients.
//! - [`train`]: the two-stage schedule (recognition, then matching).
//! - [`pipeline`]: the three correction modes at inference time.
//! - [`eval`]: mode-by-mode evaluation, reports, ablation sweeps.
//! - [`manifest`], [`presets`]: reproducible run descriptions.
//!
//! # Where to start
//!
//! Each major capability has a runnable example:
//!
//! ```text
//! cargo run --release --example lexicon_search   # fuzzy retrieval + oracle
//! cargo run --release --example glyph_dataset    # the image world
//! cargo run --release --example resemblants      # hard negatives
//! cargo run --release --example gradient_check   # analytic vs numeric
//! cargo run --release --example correct_word     # the two-forward pipeline
//! cargo run --release --example evaluate_modes   # reports and digests
//! cargo run --release --example ablations        # the two sweeps
//! cargo run --release --example standard_run     # the calibrated headline run
//! ```
//!
//! The same functionality is scriptable through the `visdict` binary; see
//! `visdict --help` and `docs/file-formats.md`.

pub mod alphabet;
pub mod check;
pub mod error;
pub mod eval;
pub mod glyph;
pub mod index;
pub mod lexicon;
pub mod manifest;
pub mod nn;
pub mod pipeline;
pub mod presets;
pub mod resemblant;
pub mod train;
mod store;

pub use error::{Error, Result};
