//! The two-forward correction pipeline: read the glyphs, retrieve nearby
//! lexicon words, and let the matching head pick the candidate whose text
//! embedding best explains the image.

use std::collections::HashMap;

use ndarray::Array1;

use crate::error::{Error, Result};
use crate::glyph::GlyphImage;
use crate::index::MetricIndex;
use crate::lexicon::levenshtein;
use crate::nn::encoder::{argmax, project_pool, recognize, text_encode};
use crate::nn::matching::{cosine_similarity, tempered_softmax};
use crate::nn::ModelParams;

/// How the final word is chosen from the visual prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Keep the visual prediction as is.
    Baseline,
    /// Replace it with the distance-minimal lexicon word.
    Ordinary,
    /// Score retrieved candidates against the image and take the best match.
    Proposed,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Baseline, Mode::Ordinary, Mode::Proposed];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Ordinary => "ordinary",
            Mode::Proposed => "proposed",
        }
    }
}

/// One retrieved candidate with its edit distance from the prediction.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Candidate {
    pub word: String,
    pub distance: u32,
}

/// The candidate pool for one prediction: the top-n lexicon words by edit
/// distance, plus the raw prediction itself appended at the end when it is
/// not already among them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSet {
    pub prediction: String,
    pub entries: Vec<Candidate>,
}

impl CandidateSet {
    /// Index of the raw prediction inside `entries`.
    pub fn prediction_index(&self) -> usize {
        self.entries
            .iter()
            .position(|c| c.word == self.prediction)
            .expect("construction guarantees the prediction is present")
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|c| c.word.as_str())
    }
}

/// Retrieve the n nearest lexicon words and append the prediction itself.
/// The prediction may be any string over the alphabet, including empty; it
/// is the one entry allowed to be outside the lexicon.
pub fn build_candidate_set(
    index: &MetricIndex,
    prediction: &str,
    n: usize,
) -> Result<CandidateSet> {
    if n == 0 {
        return Err(Error::InvalidConfig(
            "candidate retrieval needs n >= 1".into(),
        ));
    }
    let ranked = index.top_n(prediction, n);
    Ok(candidate_set_from_ranked(prediction, &ranked))
}

/// Assemble the pool from an already-ranked retrieval. Top-n retrievals are
/// prefix-consistent, so ablation sweeps retrieve once at the widest n and
/// slice.
pub fn candidate_set_from_ranked(
    prediction: &str,
    ranked: &[crate::index::RankedCandidate],
) -> CandidateSet {
    let mut entries: Vec<Candidate> = ranked
        .iter()
        .map(|r| Candidate {
            word: r.word.as_str().to_string(),
            distance: r.distance,
        })
        .collect();
    if !entries.iter().any(|c| c.word == prediction) {
        entries.push(Candidate {
            word: prediction.to_string(),
            distance: 0,
        });
    }
    CandidateSet {
        prediction: prediction.to_string(),
        entries,
    }
}

/// The conventional fix: the lexicon word at minimal edit distance from the
/// prediction, ties broken lexicographically.
pub fn ordinary_correct(index: &MetricIndex, prediction: &str) -> Result<String> {
    let top = index.top_n(prediction, 1);
    top.into_iter()
        .next()
        .map(|r| r.word.into_string())
        .ok_or(Error::EmptyLexicon)
}

/// Everything one correction produced, whatever the mode.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct InferenceResult {
    pub mode: Mode,
    /// Greedy decode of the first forward pass; possibly empty, possibly
    /// out-of-lexicon.
    pub visual_prediction: String,
    /// Candidate words in pool order.
    pub candidates: Vec<Candidate>,
    /// One score per candidate; always a probability simplex. For the two
    /// non-matching modes this is a one-hot at the chosen entry, so every
    /// mode reports through the same shape.
    pub scores: Vec<f64>,
    /// The chosen word.
    pub selected: String,
}

/// Cache of text embeddings keyed by exact string, for evaluation loops
/// where the same lexicon words are scored against many images.
#[derive(Default)]
pub struct TextEmbeddingCache {
    map: HashMap<String, Array1<f64>>,
}

impl TextEmbeddingCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    fn embed(&mut self, params: &ModelParams, text: &str) -> Result<Array1<f64>> {
        if let Some(e) = self.map.get(text) {
            return Ok(e.clone());
        }
        let fwd = text_encode(params, text)?;
        let (emb, _) = project_pool(&fwd.out, &params.proj_text, fwd.valid);
        self.map.insert(text.to_string(), emb.clone());
        Ok(emb)
    }
}

/// Run one correction. `n` is the retrieval width, `tau` the matching
/// temperature (only used by [`Mode::Proposed`]).
pub fn infer(
    params: &ModelParams,
    index: &MetricIndex,
    image: &GlyphImage,
    mode: Mode,
    n: usize,
    tau: f64,
) -> Result<InferenceResult> {
    let mut cache = TextEmbeddingCache::new();
    infer_cached(params, index, image, mode, n, tau, &mut cache)
}

/// [`infer`] with a caller-owned text-embedding cache.
pub fn infer_cached(
    params: &ModelParams,
    index: &MetricIndex,
    image: &GlyphImage,
    mode: Mode,
    n: usize,
    tau: f64,
    cache: &mut TextEmbeddingCache,
) -> Result<InferenceResult> {
    let rec = recognize(params, image)?;
    let set = build_candidate_set(index, &rec.prediction, n)?;
    let (scores, selected) = select(params, &rec, &set, mode, tau, cache)?;
    Ok(InferenceResult {
        mode,
        visual_prediction: set.prediction.clone(),
        candidates: set.entries,
        scores,
        selected,
    })
}

/// The mode-specific decision, given a recognition and a candidate pool.
/// Evaluation calls this directly so all three modes consume the exact same
/// first forward pass.
pub fn select(
    params: &ModelParams,
    rec: &crate::nn::encoder::Recognition,
    set: &CandidateSet,
    mode: Mode,
    tau: f64,
    cache: &mut TextEmbeddingCache,
) -> Result<(Vec<f64>, String)> {
    Ok(match mode {
        Mode::Baseline => (
            one_hot(set.entries.len(), set.prediction_index()),
            set.prediction.clone(),
        ),
        Mode::Ordinary => {
            // Entry 0 is the retrieval front-runner: minimal distance, ties
            // broken lexicographically by the index.
            (one_hot(set.entries.len(), 0), set.entries[0].word.clone())
        }
        Mode::Proposed => {
            let (u, _) = project_pool(&rec.forward.out, &params.proj_image, rec.forward.valid);
            let mut sims = Vec::with_capacity(set.entries.len());
            for cand in &set.entries {
                let v = cache.embed(params, &cand.word)?;
                sims.push(cosine_similarity(u.view(), v.view())?);
            }
            let scores = tempered_softmax(&sims, tau)?;
            let pick = argmax(scores.iter().cloned());
            (scores, set.entries[pick].word.clone())
        }
    })
}

fn one_hot(len: usize, at: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    v[at] = 1.0;
    v
}

/// Edit distance between a correction and the ground truth; the evaluation
/// counts exact matches but reports this for error inspection.
pub fn correction_distance(selected: &str, truth: &str) -> u32 {
    levenshtein(selected, truth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glyph::render;
    use crate::lexicon::{Lexicon, Word};
    use crate::nn::{ModelDims, ModelParams};

    fn small_index(words: &[&str]) -> MetricIndex {
        let lex = Lexicon::from_words(words.iter().map(|s| s.to_string())).unwrap();
        MetricIndex::build(lex)
    }

    #[test]
    fn ordinary_correct_matches_the_reference_tie_break() {
        let index = small_index(&["pour", "hour", "tour"]);
        assert_eq!(ordinary_correct(&index, "your").unwrap(), "hour");
    }

    #[test]
    fn candidate_set_appends_the_prediction_exactly_once() {
        let index = small_index(&["tireless", "tiredness", "tries", "tired"]);
        let set = build_candidate_set(&index, "tirelness", 2).unwrap();
        let words: Vec<&str> = set.words().collect();
        assert_eq!(words, vec!["tiredness", "tireless", "tirelness"]);
        assert_eq!(set.prediction_index(), 2);
        assert_eq!(set.entries.len(), 3);

        // In-lexicon prediction: no duplicate appended.
        let set = build_candidate_set(&index, "tired", 2).unwrap();
        assert_eq!(set.words().filter(|w| *w == "tired").count(), 1);
        assert!(set.entries.len() <= 3);
    }

    #[test]
    fn candidate_set_handles_the_empty_prediction() {
        let index = small_index(&["ab", "cd"]);
        let set = build_candidate_set(&index, "", 1).unwrap();
        assert!(set.words().any(|w| w.is_empty()));
        assert_eq!(set.prediction_index(), set.entries.len() - 1);
    }

    #[test]
    fn zero_retrieval_width_is_rejected() {
        let index = small_index(&["ab"]);
        assert!(matches!(
            build_candidate_set(&index, "ab", 0),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn modes_agree_on_shape_and_simplex_scores() {
        let dims = ModelDims::default();
        let params = ModelParams::init(dims, 42).unwrap();
        let index = small_index(&["alpha", "beta", "gamma", "delta"]);
        let img = render(&Word::new("beta").unwrap());
        for mode in Mode::ALL {
            let r = infer(&params, &index, &img, mode, 3, 0.07).unwrap();
            assert_eq!(r.scores.len(), r.candidates.len());
            let s: f64 = r.scores.iter().sum();
            assert!((s - 1.0).abs() < 1e-9, "{mode:?} scores sum {s}");
            assert!(r.candidates.iter().any(|c| c.word == r.selected));
            assert!(r.candidates.iter().any(|c| c.word == r.visual_prediction));
        }
    }

    #[test]
    fn baseline_keeps_the_raw_prediction_and_ordinary_goes_to_the_lexicon() {
        let dims = ModelDims::default();
        let params = ModelParams::init(dims, 7).unwrap();
        let index = small_index(&["alpha", "beta"]);
        let img = render(&Word::new("alpha").unwrap());
        let base = infer(&params, &index, &img, Mode::Baseline, 2, 0.07).unwrap();
        assert_eq!(base.selected, base.visual_prediction);
        let ord = infer(&params, &index, &img, Mode::Ordinary, 2, 0.07).unwrap();
        assert!(index.lexicon().contains(&ord.selected));
    }

    #[test]
    fn proposed_picks_the_argmax_of_its_scores() {
        let params = ModelParams::init(ModelDims::default(), 3).unwrap();
        let index = small_index(&["one", "two", "three", "four"]);
        let img = render(&Word::new("two").unwrap());
        let r = infer(&params, &index, &img, Mode::Proposed, 4, 0.07).unwrap();
        let best = r
            .scores
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(r.selected, r.candidates[best].word);
    }

    #[test]
    fn cache_is_reused_across_calls() {
        let params = ModelParams::init(ModelDims::default(), 5).unwrap();
        let index = small_index(&["aa", "bb", "cc"]);
        let img = render(&Word::new("aa").unwrap());
        let mut cache = TextEmbeddingCache::new();
        infer_cached(&params, &index, &img, Mode::Proposed, 3, 0.07, &mut cache).unwrap();
        let after_first = cache.len();
        assert!(after_first >= 3);
        infer_cached(&params, &index, &img, Mode::Proposed, 3, 0.07, &mut cache).unwrap();
        assert_eq!(cache.len(), after_first);
    }
}
