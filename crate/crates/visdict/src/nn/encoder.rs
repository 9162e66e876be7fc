//! Image and text encoder forward passes, each with an exact hand-written
//! backward pass.
//!
//! Forward functions return a cache struct holding every intermediate the
//! backward pass needs; backwards take that cache plus the upstream gradient
//! and accumulate into a [`ModelParams`]-shaped gradient container. The
//! contract `backward(forward(x))` against finite differences is enforced by
//! [`crate::check`] and the acceptance suite.

use ndarray::{Array1, Array2, Axis};

use crate::alphabet::{class_of, EOS_CLASS};
use crate::error::{Error, Result};
use crate::glyph::GlyphImage;
use crate::nn::ModelParams;

/// Row-wise stable softmax, in place.
pub(crate) fn softmax_rows(m: &mut Array2<f64>) {
    for mut row in m.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

/// Backward through a row-wise softmax: given post-softmax values `a` and
/// upstream gradient `da`, each row maps to `a * (da - <da, a>)`.
pub(crate) fn softmax_rows_backward(a: &Array2<f64>, da: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(a.raw_dim());
    for ((mut orow, arow), darow) in out.rows_mut().into_iter().zip(a.rows()).zip(da.rows()) {
        let dot: f64 = arow.iter().zip(darow.iter()).map(|(x, y)| x * y).sum();
        for ((o, &av), &dav) in orow.iter_mut().zip(arow.iter()).zip(darow.iter()) {
            *o = av * (dav - dot);
        }
    }
    out
}

/// Intermediates of one image encoding.
pub struct ImageForward {
    /// W x C embedded cells plus position embedding.
    pub h: Array2<f64>,
    /// W x C keys.
    pub keys: Array2<f64>,
    /// W x C values.
    pub values: Array2<f64>,
    /// L x W attention rows (each sums to one).
    pub attn: Array2<f64>,
    /// L x C output features.
    pub out: Array2<f64>,
    /// Number of informative rows: the labeled cells, blank tail excluded.
    pub valid: usize,
}

/// Encode a glyph image into L feature rows with one parallel-attention
/// read per output position.
pub fn image_encode(params: &ModelParams, image: &GlyphImage) -> Result<ImageForward> {
    let c = params.dims.channels;
    let x = image.cells(); // W x K
    let h = x.dot(&params.glyph_embed) + &params.image_pos_embed;
    let keys = h.dot(&params.attn_key);
    let values = h.dot(&params.attn_value);
    let scale = 1.0 / (c as f64).sqrt();
    let mut attn = params.attn_query.dot(&keys.t());
    attn.mapv_inplace(|v| v * scale);
    softmax_rows(&mut attn);
    let out = attn.dot(&values);
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteParams);
    }
    Ok(ImageForward {
        h,
        keys,
        values,
        attn,
        out,
        valid: image.label_len(),
    })
}

/// Accumulate image-encoder parameter gradients for upstream `d_out` (L x C).
pub fn image_encode_backward(
    params: &ModelParams,
    image: &GlyphImage,
    fwd: &ImageForward,
    d_out: &Array2<f64>,
    grads: &mut ModelParams,
) {
    let scale = 1.0 / (params.dims.channels as f64).sqrt();
    let x = image.cells();

    let d_attn = d_out.dot(&fwd.values.t()); // L x W
    let d_values = fwd.attn.t().dot(d_out); // W x C
    let mut d_scores = softmax_rows_backward(&fwd.attn, &d_attn);
    d_scores.mapv_inplace(|v| v * scale);

    grads.attn_query += &d_scores.dot(&fwd.keys); // L x C
    let d_keys = d_scores.t().dot(&params.attn_query); // W x C

    grads.attn_key += &fwd.h.t().dot(&d_keys);
    grads.attn_value += &fwd.h.t().dot(&d_values);
    let d_h = d_keys.dot(&params.attn_key.t()) + d_values.dot(&params.attn_value.t());

    grads.glyph_embed += &x.t().dot(&d_h);
    grads.image_pos_embed += &d_h;
}

/// Intermediates of one text-encoder block.
pub struct BlockForward {
    pub x_in: Array2<f64>,
    pub q: Array2<f64>,
    pub k: Array2<f64>,
    pub v: Array2<f64>,
    /// L x L attention (masked columns are exactly zero).
    pub attn: Array2<f64>,
    /// attn . v
    pub ctx: Array2<f64>,
    /// x_in + ctx . wo
    pub x_mid: Array2<f64>,
    /// Pre-activation of the feed-forward layer.
    pub ff_pre: Array2<f64>,
    /// relu(ff_pre)
    pub ff_act: Array2<f64>,
}

/// Intermediates of one text encoding.
pub struct TextForward {
    /// Class index per position, padded with [`EOS_CLASS`] to length L.
    pub tokens: Vec<usize>,
    /// Number of real positions: the characters plus one EOS when it fits.
    pub valid: usize,
    pub embedded: Array2<f64>,
    pub blocks: Vec<BlockForward>,
    /// L x C output features.
    pub out: Array2<f64>,
}

/// Encode a (possibly empty) string over the 36-character alphabet. Position
/// `len` carries the EOS token when `len < L`; positions past that are pad,
/// present in the output rows but masked out of every attention read.
pub fn text_encode(params: &ModelParams, text: &str) -> Result<TextForward> {
    let l = params.dims.seq_len;
    let c = params.dims.channels;
    if text.len() > l {
        return Err(Error::TextTooLong {
            len: text.len(),
            max: l,
        });
    }
    let mut tokens = vec![EOS_CLASS; l];
    for (i, &b) in text.as_bytes().iter().enumerate() {
        tokens[i] = class_of(b).ok_or(Error::InvalidCharacter {
            word: text.to_string(),
            ch: b as char,
        })?;
    }
    let valid = (text.len() + 1).min(l);

    let mut embedded = params.text_pos_embed.clone();
    for (i, &t) in tokens.iter().enumerate() {
        let mut row = embedded.row_mut(i);
        row += &params.text_embed.row(t);
    }

    let scale = 1.0 / (c as f64).sqrt();
    let mut x = embedded.clone();
    let mut blocks = Vec::with_capacity(params.text_blocks.len());
    for blk in &params.text_blocks {
        let q = x.dot(&blk.wq);
        let k = x.dot(&blk.wk);
        let v = x.dot(&blk.wv);
        let mut attn = q.dot(&k.t());
        attn.mapv_inplace(|s| s * scale);
        // Pad keys carry no information: mask them from every query.
        for j in valid..l {
            attn.column_mut(j).fill(f64::NEG_INFINITY);
        }
        softmax_rows(&mut attn);
        let ctx = attn.dot(&v);
        let x_mid = &x + &ctx.dot(&blk.wo);
        let ff_pre = x_mid.dot(&blk.ff_w1) + &blk.ff_b1;
        let ff_act = ff_pre.mapv(|s| s.max(0.0));
        let out = &x_mid + &ff_act.dot(&blk.ff_w2) + &blk.ff_b2;
        blocks.push(BlockForward {
            x_in: x,
            q,
            k,
            v,
            attn,
            ctx,
            x_mid,
            ff_pre,
            ff_act,
        });
        x = out;
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteParams);
    }
    Ok(TextForward {
        tokens,
        valid,
        embedded,
        blocks,
        out: x,
    })
}

/// Accumulate text-encoder parameter gradients for upstream `d_out` (L x C).
pub fn text_encode_backward(
    params: &ModelParams,
    fwd: &TextForward,
    d_out: &Array2<f64>,
    grads: &mut ModelParams,
) {
    let scale = 1.0 / (params.dims.channels as f64).sqrt();
    let mut dx = d_out.clone();
    for (blk, g, cache) in blocks_rev(params, grads, &fwd.blocks) {
        // Feed-forward with residual.
        let d_ff_act = dx.dot(&blk.ff_w2.t());
        g.ff_w2 += &cache.ff_act.t().dot(&dx);
        g.ff_b2 += &dx.sum_axis(Axis(0)).insert_axis(Axis(0));
        let mut d_ff_pre = d_ff_act;
        d_ff_pre.zip_mut_with(&cache.ff_pre, |d, &p| {
            if p <= 0.0 {
                *d = 0.0;
            }
        });
        let mut d_x_mid = dx; // residual path
        d_x_mid += &d_ff_pre.dot(&blk.ff_w1.t());
        g.ff_w1 += &cache.x_mid.t().dot(&d_ff_pre);
        g.ff_b1 += &d_ff_pre.sum_axis(Axis(0)).insert_axis(Axis(0));

        // Attention with residual.
        let d_ctx = d_x_mid.dot(&blk.wo.t());
        g.wo += &cache.ctx.t().dot(&d_x_mid);
        let d_attn = d_ctx.dot(&cache.v.t());
        let d_v = cache.attn.t().dot(&d_ctx);
        // Masked columns have attn exactly zero, so their score gradient
        // vanishes here without special casing.
        let mut d_scores = softmax_rows_backward(&cache.attn, &d_attn);
        d_scores.mapv_inplace(|v| v * scale);
        let d_q = d_scores.dot(&cache.k);
        let d_k = d_scores.t().dot(&cache.q);
        g.wq += &cache.x_in.t().dot(&d_q);
        g.wk += &cache.x_in.t().dot(&d_k);
        g.wv += &cache.x_in.t().dot(&d_v);

        let mut d_x_in = d_x_mid; // residual path
        d_x_in += &d_q.dot(&blk.wq.t());
        d_x_in += &d_k.dot(&blk.wk.t());
        d_x_in += &d_v.dot(&blk.wv.t());
        dx = d_x_in;
    }
    grads.text_pos_embed += &dx;
    for (i, &t) in fwd.tokens.iter().enumerate() {
        let mut row = grads.text_embed.row_mut(t);
        row += &dx.row(i);
    }
}

/// Zip parameter blocks, gradient blocks, and caches in reverse block order.
fn blocks_rev<'a>(
    params: &'a ModelParams,
    grads: &'a mut ModelParams,
    caches: &'a [BlockForward],
) -> impl Iterator<Item = (&'a crate::nn::TextBlock, &'a mut crate::nn::TextBlock, &'a BlockForward)> {
    params
        .text_blocks
        .iter()
        .rev()
        .zip(grads.text_blocks.iter_mut().rev())
        .zip(caches.iter().rev())
        .map(|((p, g), c)| (p, g, c))
}

/// Recognition forward: encoder features through the linear head.
pub struct Recognition {
    pub forward: ImageForward,
    /// L x K per-position class distributions.
    pub dist: Array2<f64>,
    /// Greedy decode truncated at the first EOS; possibly empty.
    pub prediction: String,
}

/// Run the recognizer: encode, project each position onto class logits,
/// softmax, and greedily decode.
pub fn recognize(params: &ModelParams, image: &GlyphImage) -> Result<Recognition> {
    let forward = image_encode(params, image)?;
    let mut dist = forward.out.dot(&params.recog_w) + &params.recog_b;
    softmax_rows(&mut dist);
    let mut prediction = String::new();
    for row in dist.rows() {
        let cls = argmax(row.iter().cloned());
        if cls == EOS_CLASS {
            break;
        }
        prediction.push(crate::alphabet::char_of(cls) as char);
    }
    Ok(Recognition {
        forward,
        dist,
        prediction,
    })
}

pub(crate) fn argmax(it: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in it.enumerate() {
        if v > best_v {
            best_v = v;
            best = i;
        }
    }
    best
}

/// Mean-pool the first `rows` feature rows and project into the matching
/// space. Trailing rows (blank cells on the image side, padding on the text
/// side) stay out of the embedding so short strings aren't diluted by the
/// empty tail of the grid. Returns the pooled feature row too, since the
/// backward pass of the projection needs it.
pub fn project_pool(
    features: &Array2<f64>,
    proj: &Array2<f64>,
    rows: usize,
) -> (Array1<f64>, Array1<f64>) {
    debug_assert!(rows >= 1 && rows <= features.nrows());
    let mean = features.slice(ndarray::s![..rows, ..]).sum_axis(Axis(0)) / rows as f64;
    let emb = mean.dot(proj);
    (emb, mean)
}

/// Supervision targets for one label: the class per counted position. Words
/// shorter than L get one EOS position appended; a full-width word has no
/// room for it.
pub fn target_classes(label: &str, seq_len: usize) -> Result<Vec<usize>> {
    if label.len() > seq_len {
        return Err(Error::TextTooLong {
            len: label.len(),
            max: seq_len,
        });
    }
    let mut t = Vec::with_capacity(label.len() + 1);
    for &b in label.as_bytes() {
        t.push(class_of(b).ok_or(Error::InvalidCharacter {
            word: label.to_string(),
            ch: b as char,
        })?);
    }
    if t.len() < seq_len {
        t.push(EOS_CLASS);
    }
    Ok(t)
}
