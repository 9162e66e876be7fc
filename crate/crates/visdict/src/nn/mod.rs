//! The matching network and recognizer: parameter storage, initialization,
//! and the "VDMP" model file.
//!
//! Everything is plain `f64` tensors with hand-written forward and backward
//! passes (see [`encoder`], [`loss`]); there is no autodiff. Keeping the
//! gradients analytic and double-precision is what makes the finite-difference
//! check in [`crate::check`] a meaningful oracle rather than a tautology.

pub mod encoder;
pub mod loss;
pub mod matching;

use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::alphabet::CLASS_COUNT;
use crate::error::{Error, Result};
use crate::glyph::GRID_WIDTH;
use crate::store::{Reader, Writer};

const MAGIC: &str = "VDMP";
const VERSION: u32 = 1;

/// Number of self-attention blocks in the text encoder.
pub const TEXT_BLOCKS: usize = 2;

/// Model dimensions. `classes` covers the 36 characters plus blank and is
/// shared with the text vocabulary (`vocab`), where the same index doubles as
/// EOS and padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ModelDims {
    /// Feature sequence length L: one query per output position.
    pub seq_len: usize,
    /// Channel width C of every internal feature.
    pub channels: usize,
    /// Width D of the joint matching space.
    pub proj_dim: usize,
    /// Glyph classes K (37).
    pub classes: usize,
    /// Text vocabulary size (37).
    pub vocab: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims {
            seq_len: 25,
            channels: 32,
            proj_dim: 32,
            classes: CLASS_COUNT,
            vocab: CLASS_COUNT,
        }
    }
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        let err = |what: String| Err(Error::VersionMismatch(what));
        if self.seq_len == 0 || self.seq_len > 4096 {
            return err(format!("seq_len {} out of range", self.seq_len));
        }
        if self.channels == 0 || self.proj_dim == 0 {
            return err("zero channel or projection width".into());
        }
        if self.classes != CLASS_COUNT || self.vocab != CLASS_COUNT {
            return err(format!(
                "classes {} / vocab {} (this world has exactly {CLASS_COUNT})",
                self.classes, self.vocab
            ));
        }
        Ok(())
    }

    /// Hidden width of the text blocks' feed-forward layers, fixed at 2C so
    /// it never needs its own header field.
    pub fn ff_hidden(&self) -> usize {
        2 * self.channels
    }
}

/// One text-encoder block: single-head self-attention plus a feed-forward
/// layer, both with residual connections.
#[derive(Debug, Clone, PartialEq)]
pub struct TextBlock {
    pub wq: Array2<f64>,
    pub wk: Array2<f64>,
    pub wv: Array2<f64>,
    pub wo: Array2<f64>,
    pub ff_w1: Array2<f64>,
    /// Bias rows are stored 1 x n so every parameter is an `Array2`.
    pub ff_b1: Array2<f64>,
    pub ff_w2: Array2<f64>,
    pub ff_b2: Array2<f64>,
}

/// All trainable tensors. The image backbone (`glyph_embed`,
/// `image_pos_embed`, `attn_*`) is stored once and used by both the
/// recognizer and the matching head; sharing is structural, not a copy.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub dims: ModelDims,
    /// K x C: per-channel glyph embedding applied to each cell distribution.
    pub glyph_embed: Array2<f64>,
    /// W x C: grid position embedding.
    pub image_pos_embed: Array2<f64>,
    /// L x C: learned queries of the parallel attention head.
    pub attn_query: Array2<f64>,
    /// C x C key map.
    pub attn_key: Array2<f64>,
    /// C x C value map.
    pub attn_value: Array2<f64>,
    /// vocab x C token embedding (row 36 doubles as EOS and pad).
    pub text_embed: Array2<f64>,
    /// L x C text position embedding.
    pub text_pos_embed: Array2<f64>,
    pub text_blocks: Vec<TextBlock>,
    /// C x D image-side projection into the matching space (no bias, so zero
    /// features map to the zero embedding).
    pub proj_image: Array2<f64>,
    /// C x D text-side projection.
    pub proj_text: Array2<f64>,
    /// C x K recognizer head.
    pub recog_w: Array2<f64>,
    /// 1 x K recognizer bias.
    pub recog_b: Array2<f64>,
}

fn xavier(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    let r = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-r..r))
}

/// Row i is `scale * e_(i mod cols)`.
fn basis_rows(rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |(i, j)| {
        if i % cols == j {
            scale
        } else {
            0.0
        }
    })
}

impl ModelParams {
    /// Deterministic seeded initialization. Most tensors are Xavier-uniform
    /// from one ChaCha8 stream consumed in registry order. Three are
    /// structured instead of random: position embeddings and attention
    /// queries start as scaled unit-basis rows and the key map starts as the
    /// identity, so the parallel attention begins roughly aligned
    /// (query l already prefers cell l) and training refines rather than
    /// discovers the alignment. Purely an optimization-speed choice; nothing
    /// downstream depends on it.
    pub fn init(dims: ModelDims, seed: u64) -> Result<ModelParams> {
        dims.validate()?;
        let (c, d, k, v, l, f) = (
            dims.channels,
            dims.proj_dim,
            dims.classes,
            dims.vocab,
            dims.seq_len,
            dims.ff_hidden(),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rnd = |rows, cols| xavier(&mut rng, rows, cols);
        // Query/position scale 5 puts most of each query's initial attention
        // mass on its own cell (score 25/sqrt(C) against ~0 elsewhere), so
        // stage 1 starts as per-cell reading instead of having to discover
        // the alignment.
        let align = 5.0;
        Ok(ModelParams {
            dims,
            glyph_embed: rnd(k, c),
            image_pos_embed: basis_rows(GRID_WIDTH, c, align),
            attn_query: basis_rows(l, c, align),
            attn_key: Array2::eye(c),
            attn_value: rnd(c, c),
            text_embed: rnd(v, c),
            text_pos_embed: rnd(l, c),
            text_blocks: (0..TEXT_BLOCKS)
                .map(|_| TextBlock {
                    wq: rnd(c, c),
                    wk: rnd(c, c),
                    wv: rnd(c, c),
                    wo: rnd(c, c),
                    ff_w1: rnd(c, f),
                    ff_b1: Array2::zeros((1, f)),
                    ff_w2: rnd(f, c),
                    ff_b2: Array2::zeros((1, c)),
                })
                .collect(),
            proj_image: rnd(c, d),
            proj_text: rnd(c, d),
            recog_w: rnd(c, k),
            recog_b: Array2::zeros((1, k)),
        })
    }

    /// All-zero parameters with the same shapes; the gradient container.
    pub fn zeros(dims: ModelDims) -> Result<ModelParams> {
        dims.validate()?;
        let (c, d, k, v, l, f) = (
            dims.channels,
            dims.proj_dim,
            dims.classes,
            dims.vocab,
            dims.seq_len,
            dims.ff_hidden(),
        );
        Ok(ModelParams {
            dims,
            glyph_embed: Array2::zeros((k, c)),
            image_pos_embed: Array2::zeros((GRID_WIDTH, c)),
            attn_query: Array2::zeros((l, c)),
            attn_key: Array2::zeros((c, c)),
            attn_value: Array2::zeros((c, c)),
            text_embed: Array2::zeros((v, c)),
            text_pos_embed: Array2::zeros((l, c)),
            text_blocks: (0..TEXT_BLOCKS)
                .map(|_| TextBlock {
                    wq: Array2::zeros((c, c)),
                    wk: Array2::zeros((c, c)),
                    wv: Array2::zeros((c, c)),
                    wo: Array2::zeros((c, c)),
                    ff_w1: Array2::zeros((c, f)),
                    ff_b1: Array2::zeros((1, f)),
                    ff_w2: Array2::zeros((f, c)),
                    ff_b2: Array2::zeros((1, c)),
                })
                .collect(),
            proj_image: Array2::zeros((c, d)),
            proj_text: Array2::zeros((c, d)),
            recog_w: Array2::zeros((c, k)),
            recog_b: Array2::zeros((1, k)),
        })
    }

    /// Every tensor with its name, in a fixed order shared by serialization,
    /// the optimizer, and the gradient checker.
    pub fn tensors(&self) -> Vec<(String, &Array2<f64>)> {
        let mut out: Vec<(String, &Array2<f64>)> = vec![
            ("glyph_embed".into(), &self.glyph_embed),
            ("image_pos_embed".into(), &self.image_pos_embed),
            ("attn_query".into(), &self.attn_query),
            ("attn_key".into(), &self.attn_key),
            ("attn_value".into(), &self.attn_value),
            ("text_embed".into(), &self.text_embed),
            ("text_pos_embed".into(), &self.text_pos_embed),
        ];
        for (i, b) in self.text_blocks.iter().enumerate() {
            out.push((format!("text_block{i}_wq"), &b.wq));
            out.push((format!("text_block{i}_wk"), &b.wk));
            out.push((format!("text_block{i}_wv"), &b.wv));
            out.push((format!("text_block{i}_wo"), &b.wo));
            out.push((format!("text_block{i}_ff_w1"), &b.ff_w1));
            out.push((format!("text_block{i}_ff_b1"), &b.ff_b1));
            out.push((format!("text_block{i}_ff_w2"), &b.ff_w2));
            out.push((format!("text_block{i}_ff_b2"), &b.ff_b2));
        }
        out.push(("proj_image".into(), &self.proj_image));
        out.push(("proj_text".into(), &self.proj_text));
        out.push(("recog_w".into(), &self.recog_w));
        out.push(("recog_b".into(), &self.recog_b));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Array2<f64>)> {
        let mut out: Vec<(String, &mut Array2<f64>)> = vec![
            ("glyph_embed".into(), &mut self.glyph_embed),
            ("image_pos_embed".into(), &mut self.image_pos_embed),
            ("attn_query".into(), &mut self.attn_query),
            ("attn_key".into(), &mut self.attn_key),
            ("attn_value".into(), &mut self.attn_value),
            ("text_embed".into(), &mut self.text_embed),
            ("text_pos_embed".into(), &mut self.text_pos_embed),
        ];
        for (i, b) in self.text_blocks.iter_mut().enumerate() {
            out.push((format!("text_block{i}_wq"), &mut b.wq));
            out.push((format!("text_block{i}_wk"), &mut b.wk));
            out.push((format!("text_block{i}_wv"), &mut b.wv));
            out.push((format!("text_block{i}_wo"), &mut b.wo));
            out.push((format!("text_block{i}_ff_w1"), &mut b.ff_w1));
            out.push((format!("text_block{i}_ff_b1"), &mut b.ff_b1));
            out.push((format!("text_block{i}_ff_w2"), &mut b.ff_w2));
            out.push((format!("text_block{i}_ff_b2"), &mut b.ff_b2));
        }
        out.push(("proj_image".into(), &mut self.proj_image));
        out.push(("proj_text".into(), &mut self.proj_text));
        out.push(("recog_w".into(), &mut self.recog_w));
        out.push(("recog_b".into(), &mut self.recog_b));
        out
    }

    pub fn tensor(&self, name: &str) -> Option<&Array2<f64>> {
        self.tensors().into_iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// `self += scale * other`, tensor by tensor.
    pub fn accumulate(&mut self, other: &ModelParams, scale: f64) {
        debug_assert_eq!(self.dims, other.dims);
        for ((_, dst), (_, src)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            dst.scaled_add(scale, src);
        }
    }

    pub fn assert_finite(&self) -> Result<()> {
        for (_, t) in self.tensors() {
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteParams);
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    /// SHA-256 over the serialized form; identifies a model in reports.
    pub fn digest_hex(&self) -> String {
        crate::lexicon::hex(&crate::store::sha256(&self.to_bytes()))
    }

    /// The "VDMP" envelope: dims header, then every tensor's raw
    /// little-endian f64 payload in registry order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(MAGIC, VERSION);
        w.put_u32(self.dims.seq_len as u32);
        w.put_u32(self.dims.channels as u32);
        w.put_u32(self.dims.proj_dim as u32);
        w.put_u32(self.dims.classes as u32);
        w.put_u32(self.dims.vocab as u32);
        for (_, t) in self.tensors() {
            for &v in t.iter() {
                w.put_f64(v);
            }
        }
        w.finish()
    }

    /// Bit-exact inverse of [`ModelParams::save`]. An implausible dims header
    /// is a [`Error::VersionMismatch`]; a payload that does not match the
    /// header is [`Error::CorruptFile`].
    pub fn load(path: impl AsRef<Path>) -> Result<ModelParams> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        ModelParams::from_bytes(&bytes)
    }

    /// [`ModelParams::load`] from an in-memory envelope.
    pub fn from_bytes(bytes: &[u8]) -> Result<ModelParams> {
        let mut r = Reader::from_bytes(bytes.to_vec(), MAGIC, VERSION)?;
        let dims = ModelDims {
            seq_len: r.take_u32()? as usize,
            channels: r.take_u32()? as usize,
            proj_dim: r.take_u32()? as usize,
            classes: r.take_u32()? as usize,
            vocab: r.take_u32()? as usize,
        };
        let mut params = ModelParams::zeros(dims)?;
        for (_, t) in params.tensors_mut() {
            for v in t.iter_mut() {
                *v = r.take_f64()?;
            }
        }
        r.expect_end()?;
        params.assert_finite()?;
        Ok(params)
    }
}

/// One plain SGD step: `p -= lr * grad` for every tensor whose name the
/// `frozen` predicate rejects.
pub fn sgd_step(
    params: &mut ModelParams,
    grads: &ModelParams,
    lr: f64,
    frozen: &dyn Fn(&str) -> bool,
) {
    for ((name, p), (gname, g)) in params.tensors_mut().into_iter().zip(grads.tensors()) {
        debug_assert_eq!(name, gname);
        if !frozen(&name) {
            p.scaled_add(-lr, g);
        }
    }
}

/// Stage-1 freeze: recognition training must never move text-encoder or
/// projection parameters.
pub fn stage1_frozen(name: &str) -> bool {
    name.starts_with("text_") || name.starts_with("proj_")
}

/// Stage-2 freeze: matching training must never move the recognizer head.
/// The shared backbone is trainable by default; `train_backbone: false`
/// additionally pins it.
pub fn stage2_frozen(name: &str, train_backbone: bool) -> bool {
    if name.starts_with("recog_") {
        return true;
    }
    if !train_backbone {
        return name.starts_with("glyph_") || name.starts_with("image_") || name.starts_with("attn_");
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_dims() -> ModelDims {
        ModelDims {
            seq_len: 6,
            channels: 8,
            proj_dim: 5,
            ..ModelDims::default()
        }
    }

    #[test]
    fn init_is_deterministic_and_finite() {
        let a = ModelParams::init(ModelDims::default(), 3).unwrap();
        let b = ModelParams::init(ModelDims::default(), 3).unwrap();
        assert_eq!(a, b);
        a.assert_finite().unwrap();
        assert_ne!(a, ModelParams::init(ModelDims::default(), 4).unwrap());
    }

    #[test]
    fn registry_order_is_stable_and_complete() {
        let p = ModelParams::init(toy_dims(), 0).unwrap();
        let names: Vec<String> = p.tensors().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names.len(), 7 + 8 * TEXT_BLOCKS + 4);
        assert_eq!(names.first().unwrap(), "glyph_embed");
        assert_eq!(names.last().unwrap(), "recog_b");
        // Mutable registry agrees.
        let mut q = p.clone();
        let mut_names: Vec<String> = q.tensors_mut().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, mut_names);
    }

    #[test]
    fn dims_validation_rejects_wrong_class_count() {
        let bad = ModelDims {
            classes: 36,
            ..ModelDims::default()
        };
        assert!(matches!(bad.validate(), Err(Error::VersionMismatch(_))));
    }

    #[test]
    fn save_load_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.vdmp");
        let p = ModelParams::init(toy_dims(), 11).unwrap();
        p.save(&path).unwrap();
        let q = ModelParams::load(&path).unwrap();
        assert_eq!(p.dims, q.dims);
        for ((name, a), (_, b)) in p.tensors().into_iter().zip(q.tensors()) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert_eq!(x.to_bits(), y.to_bits(), "{name}");
            }
        }
    }

    #[test]
    fn load_rejects_bad_headers_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.vdmp");
        let p = ModelParams::init(toy_dims(), 1).unwrap();
        p.save(&path).unwrap();

        let good = std::fs::read(&path).unwrap();

        // Truncation breaks the checksum.
        std::fs::write(&path, &good[..good.len() - 100]).unwrap();
        assert!(matches!(ModelParams::load(&path), Err(Error::CorruptFile(_))));

        // A wrong dims header (checksum patched up) is a header problem.
        let mut wrong = good.clone();
        wrong[8..12].copy_from_slice(&0u32.to_le_bytes()); // seq_len = 0
        let body = wrong.len() - 32;
        let sum = crate::store::sha256(&wrong[..body]);
        wrong[body..].copy_from_slice(&sum);
        std::fs::write(&path, &wrong).unwrap();
        assert!(matches!(
            ModelParams::load(&path),
            Err(Error::VersionMismatch(_))
        ));
    }

    #[test]
    fn sgd_respects_freezing() {
        let dims = toy_dims();
        let mut p = ModelParams::init(dims, 5).unwrap();
        let before = p.clone();
        let mut g = ModelParams::zeros(dims).unwrap();
        for (_, t) in g.tensors_mut() {
            t.fill(1.0);
        }
        sgd_step(&mut p, &g, 0.5, &stage1_frozen);
        for ((name, after), (_, orig)) in p.tensors().into_iter().zip(before.tensors()) {
            let moved = after != orig;
            assert_eq!(
                moved,
                !stage1_frozen(&name),
                "{name} frozen-state mismatch"
            );
        }
    }

    #[test]
    fn stage2_freeze_covers_the_head_and_optionally_the_backbone() {
        assert!(stage2_frozen("recog_w", true));
        assert!(stage2_frozen("recog_b", false));
        assert!(!stage2_frozen("glyph_embed", true));
        assert!(stage2_frozen("glyph_embed", false));
        assert!(stage2_frozen("attn_query", false));
        assert!(!stage2_frozen("text_block0_wq", false));
        assert!(!stage2_frozen("proj_text", false));
    }

    #[test]
    fn accumulate_adds_scaled_tensors() {
        let dims = toy_dims();
        let mut acc = ModelParams::zeros(dims).unwrap();
        let p = ModelParams::init(dims, 9).unwrap();
        acc.accumulate(&p, 2.0);
        acc.accumulate(&p, -1.0);
        for ((_, a), (_, b)) in acc.tensors().into_iter().zip(p.tensors()) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert!((x - y).abs() < 1e-15);
            }
        }
    }
}
