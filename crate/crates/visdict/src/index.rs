//! Edit-distance retrieval over a lexicon.
//!
//! [`MetricIndex`] is a BK-tree keyed by Levenshtein distance. Queries return
//! the exact top-n words under the total order (distance ascending, then
//! lexicographic ascending), so results are deterministic and the top-n list
//! for n is always a prefix of the list for n+1.
//!
//! The index can be cached on disk ("VDIX" envelope). A cache stores the
//! digest of the lexicon it was built from and refuses to load against any
//! other content, so a stale cache can never silently serve wrong neighbors.

use std::collections::BinaryHeap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::lexicon::{levenshtein, Lexicon, Word};
use crate::store::{Reader, Writer};

const MAGIC: &str = "VDIX";
const VERSION: u32 = 1;

/// One retrieval hit: a lexicon word and its distance to the query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankedCandidate {
    pub word: Word,
    pub distance: u32,
}

#[derive(Debug, Clone)]
struct Node {
    /// Index into the lexicon's sorted word list. Because the list is sorted,
    /// comparing word indices is the same as comparing words lexicographically.
    word: u32,
    /// (edge distance, child node index), in insertion order.
    children: Vec<(u32, u32)>,
}

/// BK-tree over a lexicon. Owns the lexicon it indexes.
#[derive(Debug, Clone)]
pub struct MetricIndex {
    lexicon: Lexicon,
    nodes: Vec<Node>,
}

impl MetricIndex {
    /// Build by inserting words in sorted order; the same lexicon always
    /// produces the same tree and therefore the same serialized bytes.
    pub fn build(lexicon: Lexicon) -> MetricIndex {
        let mut nodes: Vec<Node> = Vec::with_capacity(lexicon.len());
        for (i, word) in lexicon.words().iter().enumerate() {
            if nodes.is_empty() {
                nodes.push(Node {
                    word: i as u32,
                    children: Vec::new(),
                });
                continue;
            }
            let mut at = 0usize;
            loop {
                let d = levenshtein(word.as_str(), lexicon.words()[nodes[at].word as usize].as_str());
                // Distance 0 cannot happen: the lexicon is deduplicated.
                debug_assert!(d > 0);
                match nodes[at].children.iter().find(|(e, _)| *e == d) {
                    Some(&(_, child)) => at = child as usize,
                    None => {
                        let child = nodes.len() as u32;
                        nodes.push(Node {
                            word: i as u32,
                            children: Vec::new(),
                        });
                        nodes[at].children.push((d, child));
                        break;
                    }
                }
            }
        }
        MetricIndex { lexicon, nodes }
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    /// Exact top-n neighbors of `query` under (distance, word) ordering.
    /// `query` may be any normalized string, including the empty string.
    ///
    /// Subtrees are pruned with the triangle-inequality bound: a child hanging
    /// off edge e under a node at distance d holds only words at distance
    /// >= |d - e|, so once n hits are held, any subtree whose bound exceeds
    /// the current worst kept distance is skipped. Ties at the cutoff are kept
    /// or displaced by word order, which the (distance, index) heap encodes.
    pub fn top_n(&self, query: &str, n: usize) -> Vec<RankedCandidate> {
        if n == 0 || self.nodes.is_empty() {
            return Vec::new();
        }
        // Max-heap of (distance, word index); the root is the worst kept hit.
        let mut kept: BinaryHeap<(u32, u32)> = BinaryHeap::with_capacity(n + 1);
        let mut stack = vec![0u32];
        while let Some(at) = stack.pop() {
            let node = &self.nodes[at as usize];
            let d = levenshtein(
                query,
                self.lexicon.words()[node.word as usize].as_str(),
            );
            let cand = (d, node.word);
            if kept.len() < n {
                kept.push(cand);
            } else if cand < *kept.peek().unwrap() {
                kept.pop();
                kept.push(cand);
            }
            let bound = |e: u32| e.abs_diff(d);
            for &(e, child) in &node.children {
                if kept.len() < n || bound(e) <= kept.peek().unwrap().0 {
                    stack.push(child);
                }
            }
        }
        let mut hits = kept.into_vec();
        hits.sort_unstable();
        hits.into_iter()
            .map(|(distance, idx)| RankedCandidate {
                word: self.lexicon.words()[idx as usize].clone(),
                distance,
            })
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    /// Load a cache and bind it to `lexicon`. Fails with
    /// [`Error::DigestMismatch`] if the cache was built from different content.
    pub fn load(path: impl AsRef<Path>, lexicon: Lexicon) -> Result<MetricIndex> {
        let mut r = Reader::open(path, MAGIC, VERSION)?;
        let digest: [u8; 32] = r.take_array()?;
        if digest != lexicon.digest() {
            return Err(Error::DigestMismatch);
        }
        let word_count = r.take_u32()? as usize;
        if word_count != lexicon.len() {
            return Err(Error::CorruptFile(format!(
                "cache says {word_count} words, lexicon has {}",
                lexicon.len()
            )));
        }
        let node_count = r.take_u32()? as usize;
        if node_count != word_count {
            return Err(Error::CorruptFile(
                "node count does not match word count".into(),
            ));
        }
        let mut nodes = Vec::with_capacity(node_count);
        for i in 0..node_count {
            let word = r.take_u32()?;
            if word as usize >= word_count {
                return Err(Error::CorruptFile(format!("word index {word} out of range")));
            }
            let child_count = r.take_u32()? as usize;
            let mut children = Vec::with_capacity(child_count);
            for _ in 0..child_count {
                let edge = r.take_u32()?;
                let child = r.take_u32()?;
                // Children are always created after their parent.
                if child as usize <= i || child as usize >= node_count {
                    return Err(Error::CorruptFile(format!(
                        "child index {child} out of range for node {i}"
                    )));
                }
                children.push((edge, child));
            }
            nodes.push(Node { word, children });
        }
        r.expect_end()?;
        Ok(MetricIndex { lexicon, nodes })
    }

    /// Load the cache at `path` if it exists and matches `lexicon`; otherwise
    /// build fresh and write the cache.
    pub fn load_or_build(path: impl AsRef<Path>, lexicon: Lexicon) -> Result<MetricIndex> {
        let path = path.as_ref();
        if path.exists() {
            match MetricIndex::load(path, lexicon.clone()) {
                Ok(index) => return Ok(index),
                Err(Error::DigestMismatch) => {
                    log::info!("index cache at {} is stale, rebuilding", path.display());
                }
                Err(err) => return Err(err),
            }
        }
        let index = MetricIndex::build(lexicon);
        index.save(path)?;
        Ok(index)
    }

    /// The bytes `save` would write; used for input digests in reports.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(MAGIC, VERSION);
        w.put_bytes(&self.lexicon.digest());
        w.put_u32(self.lexicon.len() as u32);
        w.put_u32(self.nodes.len() as u32);
        for node in &self.nodes {
            w.put_u32(node.word);
            w.put_u32(node.children.len() as u32);
            for &(edge, child) in &node.children {
                w.put_u32(edge);
                w.put_u32(child);
            }
        }
        w.finish()
    }
}

/// Brute-force reference: score every word, sort by (distance, word), truncate.
/// This is the oracle the index is tested against; it is also handy as a
/// sanity check at call sites that only ever see tiny lexicons.
pub fn top_n_by_scan(lexicon: &Lexicon, query: &str, n: usize) -> Vec<RankedCandidate> {
    let mut all: Vec<(u32, &Word)> = lexicon
        .words()
        .iter()
        .map(|w| (levenshtein(query, w.as_str()), w))
        .collect();
    all.sort_unstable_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(b.1)));
    all.truncate(n);
    all.into_iter()
        .map(|(distance, word)| RankedCandidate {
            word: word.clone(),
            distance,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_index() -> MetricIndex {
        let lex = Lexicon::from_words(["tireless", "tiredness", "redness", "kindness", "sadness"])
            .unwrap();
        MetricIndex::build(lex)
    }

    fn words(hits: &[RankedCandidate]) -> Vec<(&str, u32)> {
        hits.iter().map(|h| (h.word.as_str(), h.distance)).collect()
    }

    #[test]
    fn ranked_retrieval_with_lexicographic_tie_break() {
        let index = sample_index();
        let hits = index.top_n("tirelness", 2);
        assert_eq!(words(&hits), [("tiredness", 1), ("tireless", 1)]);
    }

    #[test]
    fn distance_zero_hit_comes_first() {
        let index = sample_index();
        let hits = index.top_n("redness", 3);
        assert_eq!(hits[0].word.as_str(), "redness");
        assert_eq!(hits[0].distance, 0);
    }

    #[test]
    fn empty_query_is_legal() {
        let index = sample_index();
        let hits = index.top_n("", 1);
        assert_eq!(words(&hits), [("redness", 7)]);
    }

    #[test]
    fn n_larger_than_lexicon_returns_everything() {
        let index = sample_index();
        assert_eq!(index.top_n("sadness", 100).len(), 5);
    }

    #[test]
    fn prefix_monotonicity_on_a_random_lexicon() {
        let lex = Lexicon::synthetic(300, 3).unwrap();
        let index = MetricIndex::build(lex);
        for query in ["qzj", "hello", "aaaaaaaaaa", ""] {
            let full = index.top_n(query, 12);
            for n in 0..=12 {
                assert_eq!(index.top_n(query, n), full[..n.min(full.len())]);
            }
        }
    }

    #[test]
    fn agrees_with_brute_force_scan() {
        let lex = Lexicon::synthetic(400, 9).unwrap();
        let index = MetricIndex::build(lex.clone());
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(10);
        for _ in 0..50 {
            let len = rng.gen_range(0..12usize);
            let query: String = (0..len)
                .map(|_| crate::alphabet::char_of(rng.gen_range(0..36usize)) as char)
                .collect();
            for n in [1, 2, 5, 17] {
                assert_eq!(
                    index.top_n(&query, n),
                    top_n_by_scan(&lex, &query, n),
                    "query {query:?} n {n}"
                );
            }
        }
    }

    #[test]
    fn cache_round_trip_and_digest_binding() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lex.vdix");
        let index = sample_index();
        index.save(&path).unwrap();

        let reloaded = MetricIndex::load(&path, index.lexicon().clone()).unwrap();
        assert_eq!(reloaded.top_n("tirelness", 3), index.top_n("tirelness", 3));
        assert_eq!(reloaded.to_bytes(), index.to_bytes());

        let other = Lexicon::from_words(["apple", "grape"]).unwrap();
        assert!(matches!(
            MetricIndex::load(&path, other),
            Err(Error::DigestMismatch)
        ));
    }

    #[test]
    fn identical_lexicons_serialize_identically() {
        let a = MetricIndex::build(Lexicon::from_words(["car", "cart", "card"]).unwrap());
        let b = MetricIndex::build(Lexicon::from_words(["card", "car", "cart"]).unwrap());
        assert_eq!(a.to_bytes(), b.to_bytes());
    }

    #[test]
    fn load_or_build_rebuilds_stale_cache() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.vdix");
        let old = Lexicon::from_words(["apple", "grape"]).unwrap();
        MetricIndex::build(old).save(&path).unwrap();

        let new_lex = Lexicon::from_words(["pear", "peach"]).unwrap();
        let rebuilt = MetricIndex::load_or_build(&path, new_lex.clone()).unwrap();
        assert_eq!(rebuilt.lexicon(), &new_lex);
        // The cache on disk was replaced and now loads cleanly.
        assert!(MetricIndex::load(&path, new_lex).is_ok());
    }
}
