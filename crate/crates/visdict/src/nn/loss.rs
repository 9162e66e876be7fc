//! Training losses with analytic gradients: per-position recognition NLL and
//! the bidirectional contrastive matching loss over a batch of pairs.

use ndarray::{Array2, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::glyph::GlyphImage;
use crate::nn::encoder::{
    image_encode, image_encode_backward, project_pool, softmax_rows, target_classes, text_encode,
    text_encode_backward,
};
use crate::nn::matching::{cosine_grad_wrt_u, cosine_similarity, tempered_softmax};
use crate::nn::ModelParams;

/// Probabilities are floored at this value inside every `ln`, so a collapsed
/// distribution yields a large finite loss instead of infinity. The floor is
/// a guard only; gradients are the exact unfloored expressions.
pub const LOG_FLOOR: f64 = 1e-12;

fn nll(p: f64) -> f64 {
    -p.max(LOG_FLOOR).ln()
}

/// Mean recognition NLL over a batch, with parameter gradients.
///
/// Each sample contributes the mean over its counted positions: every
/// character plus one EOS position when the word is shorter than L. The
/// batch loss is the plain mean of sample losses.
pub fn recognition_loss_and_grads(
    params: &ModelParams,
    batch: &[(&GlyphImage, &str)],
) -> Result<(f64, ModelParams)> {
    if batch.is_empty() {
        return Err(Error::InvalidConfig(
            "recognition loss needs a non-empty batch".into(),
        ));
    }
    let weight = 1.0 / batch.len() as f64;
    let per_sample: Vec<(f64, ModelParams)> = batch
        .par_iter()
        .map(|&(image, label)| recognition_sample(params, image, label, weight))
        .collect::<Result<Vec<_>>>()?;

    let mut grads = ModelParams::zeros(params.dims)?;
    let mut loss = 0.0;
    for (l, g) in &per_sample {
        loss += weight * l;
        grads.accumulate(g, 1.0);
    }
    if !loss.is_finite() {
        return Err(Error::NonFiniteParams);
    }
    Ok((loss, grads))
}

/// Loss and `weight`-scaled gradients for a single labelled image.
fn recognition_sample(
    params: &ModelParams,
    image: &GlyphImage,
    label: &str,
    weight: f64,
) -> Result<(f64, ModelParams)> {
    let targets = target_classes(label, params.dims.seq_len)?;
    let fwd = image_encode(params, image)?;
    let mut dist = fwd.out.dot(&params.recog_w) + &params.recog_b;
    softmax_rows(&mut dist);

    let n_pos = targets.len() as f64;
    let mut loss = 0.0;
    let mut d_logits = Array2::zeros(dist.raw_dim());
    for (t, &cls) in targets.iter().enumerate() {
        loss += nll(dist[[t, cls]]) / n_pos;
        let coeff = weight / n_pos;
        for k in 0..params.dims.classes {
            d_logits[[t, k]] = coeff * (dist[[t, k]] - f64::from(k == cls));
        }
    }

    let mut grads = ModelParams::zeros(params.dims)?;
    grads.recog_w += &fwd.out.t().dot(&d_logits);
    grads.recog_b += &d_logits.sum_axis(Axis(0)).insert_axis(Axis(0));
    let d_out = d_logits.dot(&params.recog_w.t());
    image_encode_backward(params, image, &fwd, &d_out, &mut grads);
    Ok((loss, grads))
}

/// One contrastive batch: N genuine image-text pairs, each optionally
/// bundled with extra hard-negative texts.
pub struct MatchBatch<'a> {
    /// Genuine pairs; both retrieval directions treat index i as the match.
    pub pairs: Vec<(&'a GlyphImage, &'a str)>,
    /// Hard negatives per pair, appended to the text pool after the genuine
    /// labels. May be empty, and counts may differ across pairs.
    pub resemblants: Vec<Vec<String>>,
}

/// Bidirectional contrastive matching loss over a batch, with gradients.
///
/// The image-to-text direction scores each image against every text in the
/// pool (all N genuine labels plus all resemblants); text-to-image scores
/// each genuine label against the N images. The loss is the mean over pairs
/// of the two cross-entropies' average.
pub fn matching_loss_and_grads(
    params: &ModelParams,
    batch: &MatchBatch,
    tau: f64,
) -> Result<(f64, ModelParams)> {
    let n = batch.pairs.len();
    if n < 2 {
        return Err(Error::InvalidConfig(format!(
            "contrastive matching needs at least 2 pairs for in-batch negatives, got {n}"
        )));
    }
    if batch.resemblants.len() != n {
        return Err(Error::InvalidConfig(format!(
            "resemblant groups ({}) must match pair count ({n})",
            batch.resemblants.len()
        )));
    }
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "temperature must be a positive finite number, got {tau}"
        )));
    }

    // Text pool: genuine labels first, then resemblants in pair order.
    let mut texts: Vec<&str> = batch.pairs.iter().map(|&(_, l)| l).collect();
    for group in &batch.resemblants {
        texts.extend(group.iter().map(String::as_str));
    }
    let t_total = texts.len();

    // Encode both sides in parallel, order preserved.
    let image_side: Vec<_> = batch
        .pairs
        .par_iter()
        .map(|&(image, _)| {
            let fwd = image_encode(params, image)?;
            let (emb, mean) = project_pool(&fwd.out, &params.proj_image, fwd.valid);
            Ok((fwd, mean, emb))
        })
        .collect::<Result<Vec<_>>>()?;
    let text_side: Vec<_> = texts
        .par_iter()
        .map(|&t| {
            let fwd = text_encode(params, t)?;
            let (emb, mean) = project_pool(&fwd.out, &params.proj_text, fwd.valid);
            Ok((fwd, mean, emb))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut sims = Array2::zeros((n, t_total));
    for i in 0..n {
        for j in 0..t_total {
            sims[[i, j]] = cosine_similarity(image_side[i].2.view(), text_side[j].2.view())?;
        }
    }

    // Cross-entropies and the gradient through the similarity matrix.
    let inv = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut d_sims = Array2::zeros((n, t_total));
    for i in 0..n {
        let row: Vec<f64> = (0..t_total).map(|j| sims[[i, j]]).collect();
        let p = tempered_softmax(&row, tau)?;
        loss += 0.5 * inv * nll(p[i]);
        for j in 0..t_total {
            d_sims[[i, j]] += 0.5 * inv * (p[j] - f64::from(j == i)) / tau;
        }
    }
    for t in 0..n {
        let col: Vec<f64> = (0..n).map(|i| sims[[i, t]]).collect();
        let q = tempered_softmax(&col, tau)?;
        loss += 0.5 * inv * nll(q[t]);
        for i in 0..n {
            d_sims[[i, t]] += 0.5 * inv * (q[i] - f64::from(i == t)) / tau;
        }
    }
    if !loss.is_finite() {
        return Err(Error::NonFiniteParams);
    }

    // Similarity gradients back onto the pooled embeddings.
    let mut grads = ModelParams::zeros(params.dims)?;

    let image_grads: Vec<ModelParams> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (fwd, mean, emb) = &image_side[i];
            let mut d_emb = ndarray::Array1::zeros(emb.len());
            for j in 0..t_total {
                let g = cosine_grad_wrt_u(emb.view(), text_side[j].2.view(), sims[[i, j]]);
                d_emb.scaled_add(d_sims[[i, j]], &g);
            }
            let mut g = ModelParams::zeros(params.dims)?;
            // emb = mean . proj_image
            g.proj_image += &outer(mean.view(), d_emb.view());
            let d_mean = params.proj_image.dot(&d_emb);
            let d_out = Array2::from_shape_fn(fwd.out.raw_dim(), |(r, c)| {
                if r < fwd.valid { d_mean[c] / fwd.valid as f64 } else { 0.0 }
            });
            image_encode_backward(params, batch.pairs[i].0, fwd, &d_out, &mut g);
            Ok(g)
        })
        .collect::<Result<Vec<_>>>()?;
    let text_grads: Vec<ModelParams> = (0..t_total)
        .into_par_iter()
        .map(|j| {
            let (fwd, mean, emb) = &text_side[j];
            let mut d_emb = ndarray::Array1::zeros(emb.len());
            for i in 0..n {
                let g = cosine_grad_wrt_u(emb.view(), image_side[i].2.view(), sims[[i, j]]);
                d_emb.scaled_add(d_sims[[i, j]], &g);
            }
            let mut g = ModelParams::zeros(params.dims)?;
            g.proj_text += &outer(mean.view(), d_emb.view());
            let d_mean = params.proj_text.dot(&d_emb);
            let d_out = Array2::from_shape_fn(fwd.out.raw_dim(), |(r, c)| {
                if r < fwd.valid { d_mean[c] / fwd.valid as f64 } else { 0.0 }
            });
            text_encode_backward(params, fwd, &d_out, &mut g);
            Ok(g)
        })
        .collect::<Result<Vec<_>>>()?;

    for g in image_grads.iter().chain(text_grads.iter()) {
        grads.accumulate(g, 1.0);
    }
    Ok((loss, grads))
}

fn outer(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> Array2<f64> {
    let a2 = a.insert_axis(Axis(1));
    let b2 = b.insert_axis(Axis(0));
    a2.dot(&b2)
}

/// Weighted combination of the two losses. Either weight may be zero, in
/// which case that loss is skipped entirely.
pub fn overall_loss_and_grads(
    params: &ModelParams,
    recog_batch: &[(&GlyphImage, &str)],
    match_batch: &MatchBatch,
    lambda_recognition: f64,
    lambda_matching: f64,
    tau: f64,
) -> Result<(f64, ModelParams)> {
    let mut loss = 0.0;
    let mut grads = ModelParams::zeros(params.dims)?;
    if lambda_recognition != 0.0 {
        let (l, g) = recognition_loss_and_grads(params, recog_batch)?;
        loss += lambda_recognition * l;
        grads.accumulate(&g, lambda_recognition);
    }
    if lambda_matching != 0.0 {
        let (l, g) = matching_loss_and_grads(params, match_batch, tau)?;
        loss += lambda_matching * l;
        grads.accumulate(&g, lambda_matching);
    }
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glyph::render;
    use crate::lexicon::Word;
    use crate::nn::{ModelDims, ModelParams};

    fn toy_dims() -> ModelDims {
        ModelDims {
            seq_len: 6,
            channels: 8,
            proj_dim: 5,
            ..ModelDims::default()
        }
    }

    #[test]
    fn uniform_predictions_cost_ln_classes() {
        // Zero parameters give uniform per-position distributions, so the
        // mean NLL is exactly ln(37) whatever the label.
        let params = ModelParams::zeros(toy_dims()).unwrap();
        let img_a = render(&Word::new("ab").unwrap());
        let img_b = render(&Word::new("cdef42").unwrap());
        let batch: Vec<(&GlyphImage, &str)> = vec![(&img_a, "ab"), (&img_b, "cdef42")];
        let (loss, _) = recognition_loss_and_grads(&params, &batch).unwrap();
        assert!((loss - (37.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn recognition_gradients_leave_text_tensors_alone() {
        let params = ModelParams::init(toy_dims(), 5).unwrap();
        let img = render(&Word::new("abc").unwrap());
        let img2 = render(&Word::new("dd").unwrap());
        let batch: Vec<(&GlyphImage, &str)> = vec![(&img, "abc"), (&img2, "dd")];
        let (_, grads) = recognition_loss_and_grads(&params, &batch).unwrap();
        for (name, g) in grads.tensors() {
            let zero = g.iter().all(|&v| v == 0.0);
            if name.starts_with("text_") || name.starts_with("proj_") {
                assert!(zero, "{name} should have zero gradient");
            }
        }
        // The head and backbone do move.
        assert!(grads.recog_w.iter().any(|&v| v != 0.0));
        assert!(grads.glyph_embed.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn matching_loss_of_indistinguishable_pairs_is_ln_2() {
        // Two identical pairs: every similarity is equal, so both retrieval
        // directions are uniform over two candidates.
        let params = ModelParams::init(toy_dims(), 9).unwrap();
        let img = render(&Word::new("same").unwrap());
        let batch = MatchBatch {
            pairs: vec![(&img, "same"), (&img, "same")],
            resemblants: vec![vec![], vec![]],
        };
        let (loss, _) = matching_loss_and_grads(&params, &batch, 0.07).unwrap();
        assert!((loss - (2.0f64).ln()).abs() < 1e-9, "loss {loss}");
    }

    #[test]
    fn matching_gradients_leave_the_recognition_head_alone() {
        let params = ModelParams::init(toy_dims(), 11).unwrap();
        let a = render(&Word::new("one").unwrap());
        let b = render(&Word::new("two").unwrap());
        let batch = MatchBatch {
            pairs: vec![(&a, "one"), (&b, "two")],
            resemblants: vec![vec!["onc".into()], vec!["twp".into(), "tw0".into()]],
        };
        let (loss, grads) = matching_loss_and_grads(&params, &batch, 0.07).unwrap();
        assert!(loss.is_finite() && loss > 0.0);
        assert!(grads.recog_w.iter().all(|&v| v == 0.0));
        assert!(grads.recog_b.iter().all(|&v| v == 0.0));
        assert!(grads.proj_text.iter().any(|&v| v != 0.0));
        assert!(grads.text_embed.iter().any(|&v| v != 0.0));
        assert!(grads.glyph_embed.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn matching_rejects_undersized_batches_and_bad_shapes() {
        let params = ModelParams::init(toy_dims(), 2).unwrap();
        let img = render(&Word::new("solo").unwrap());
        let one = MatchBatch {
            pairs: vec![(&img, "solo")],
            resemblants: vec![vec![]],
        };
        assert!(matches!(
            matching_loss_and_grads(&params, &one, 0.07),
            Err(Error::InvalidConfig(_))
        ));
        let skewed = MatchBatch {
            pairs: vec![(&img, "solo"), (&img, "solo")],
            resemblants: vec![vec![]],
        };
        assert!(matching_loss_and_grads(&params, &skewed, 0.07).is_err());
        let good = MatchBatch {
            pairs: vec![(&img, "solo"), (&img, "solo")],
            resemblants: vec![vec![], vec![]],
        };
        assert!(matching_loss_and_grads(&params, &good, -1.0).is_err());
        assert!(matching_loss_and_grads(&params, &good, 0.07).is_ok());
    }

    #[test]
    fn overall_combines_linearly() {
        let params = ModelParams::init(toy_dims(), 3).unwrap();
        let a = render(&Word::new("ax").unwrap());
        let b = render(&Word::new("by").unwrap());
        let recog: Vec<(&GlyphImage, &str)> = vec![(&a, "ax"), (&b, "by")];
        let batch = MatchBatch {
            pairs: vec![(&a, "ax"), (&b, "by")],
            resemblants: vec![vec![], vec![]],
        };
        let (lr, _) = recognition_loss_and_grads(&params, &recog).unwrap();
        let (lm, _) = matching_loss_and_grads(&params, &batch, 0.07).unwrap();
        let (lo, _) = overall_loss_and_grads(&params, &recog, &batch, 0.25, 2.0, 0.07).unwrap();
        assert!((lo - (0.25 * lr + 2.0 * lm)).abs() < 1e-12);
    }
}
