//! The similarity layer of the matching head: cosine scores between pooled
//! embeddings and the temperature-softmax distributions built from them.

use ndarray::{Array1, ArrayView1};

use crate::error::{Error, Result};

/// Smallest embedding norm the matcher will score. Anything below this is a
/// degenerate embedding and an error rather than a silent division.
pub const MIN_EMBED_NORM: f64 = 1e-12;

/// Cosine similarity. Errors with [`Error::DegenerateEmbedding`] if either
/// vector's norm falls below [`MIN_EMBED_NORM`].
pub fn cosine_similarity(u: ArrayView1<f64>, v: ArrayView1<f64>) -> Result<f64> {
    let nu = norm(u);
    let nv = norm(v);
    let min = nu.min(nv);
    if min < MIN_EMBED_NORM {
        return Err(Error::DegenerateEmbedding {
            norm: min,
            min: MIN_EMBED_NORM,
        });
    }
    Ok(u.dot(&v) / (nu * nv))
}

/// Gradient of `cosine_similarity(u, v)` with respect to `u`:
/// `(v_hat - s * u_hat) / |u|`. Swap arguments for the other side.
pub fn cosine_grad_wrt_u(u: ArrayView1<f64>, v: ArrayView1<f64>, s: f64) -> Array1<f64> {
    let nu = norm(u);
    let nv = norm(v);
    let mut g = Array1::zeros(u.len());
    for i in 0..u.len() {
        g[i] = (v[i] / nv - s * u[i] / nu) / nu;
    }
    g
}

fn norm(v: ArrayView1<f64>) -> f64 {
    v.dot(&v).sqrt()
}

/// Stable softmax of `sims / tau` over a candidate axis. `tau` must be
/// strictly positive and the slice non-empty.
pub fn tempered_softmax(sims: &[f64], tau: f64) -> Result<Vec<f64>> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "temperature must be a positive finite number, got {tau}"
        )));
    }
    if sims.is_empty() {
        return Err(Error::InvalidConfig(
            "cannot take a softmax over zero candidates".into(),
        ));
    }
    let max = sims.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = sims.iter().map(|&s| ((s - max) / tau).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    Ok(out)
}

/// Image-to-text distribution: how the matcher scores one image embedding
/// against a list of text embeddings.
pub fn i2t_distribution(
    image: ArrayView1<f64>,
    texts: &[Array1<f64>],
    tau: f64,
) -> Result<Vec<f64>> {
    let sims = texts
        .iter()
        .map(|t| cosine_similarity(image, t.view()))
        .collect::<Result<Vec<f64>>>()?;
    tempered_softmax(&sims, tau)
}

/// Text-to-image distribution, the transpose direction.
pub fn t2i_distribution(
    text: ArrayView1<f64>,
    images: &[Array1<f64>],
    tau: f64,
) -> Result<Vec<f64>> {
    let sims = images
        .iter()
        .map(|i| cosine_similarity(text, i.view()))
        .collect::<Result<Vec<f64>>>()?;
    tempered_softmax(&sims, tau)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn cosine_of_known_vectors() {
        let u = array![1.0, 0.0];
        let v = array![1.0, 1.0];
        let s = cosine_similarity(u.view(), v.view()).unwrap();
        assert!((s - 0.70710678).abs() < 1e-8);
        assert!((cosine_similarity(u.view(), u.view()).unwrap() - 1.0).abs() < 1e-12);
        let w = array![-2.0, 0.0];
        assert!((cosine_similarity(u.view(), w.view()).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_rejects_near_zero_vectors() {
        let u = array![1e-13, 0.0];
        let v = array![1.0, 1.0];
        assert!(matches!(
            cosine_similarity(u.view(), v.view()),
            Err(Error::DegenerateEmbedding { .. })
        ));
    }

    #[test]
    fn softmax_matches_hand_computed_pair() {
        let p = tempered_softmax(&[1.0, 0.0], 1.0).unwrap();
        assert!((p[0] - 0.73105858).abs() < 1e-8);
        assert!((p[1] - 0.26894142).abs() < 1e-8);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn temperature_sharpens_but_keeps_the_argmax() {
        let sims = [0.3, 0.9, 0.5];
        let warm = tempered_softmax(&sims, 1.0).unwrap();
        let cold = tempered_softmax(&sims, 0.07).unwrap();
        assert!(cold[1] > warm[1]);
        let am = |p: &[f64]| {
            p.iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0
        };
        assert_eq!(am(&warm), 1);
        assert_eq!(am(&cold), 1);
    }

    #[test]
    fn softmax_survives_large_scores() {
        let p = tempered_softmax(&[1000.0, 999.0], 0.07).unwrap();
        assert!(p.iter().all(|v| v.is_finite()));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_rejects_bad_temperature_and_empty_input() {
        assert!(tempered_softmax(&[1.0], 0.0).is_err());
        assert!(tempered_softmax(&[1.0], -1.0).is_err());
        assert!(tempered_softmax(&[1.0], f64::NAN).is_err());
        assert!(tempered_softmax(&[], 1.0).is_err());
    }

    #[test]
    fn cosine_gradient_matches_finite_differences() {
        let u = array![0.4, -1.2, 0.7];
        let v = array![1.1, 0.3, -0.5];
        let s = cosine_similarity(u.view(), v.view()).unwrap();
        let g = cosine_grad_wrt_u(u.view(), v.view(), s);
        let h = 1e-6;
        for i in 0..3 {
            let mut up = u.clone();
            up[i] += h;
            let mut dn = u.clone();
            dn[i] -= h;
            let num = (cosine_similarity(up.view(), v.view()).unwrap()
                - cosine_similarity(dn.view(), v.view()).unwrap())
                / (2.0 * h);
            assert!((g[i] - num).abs() < 1e-8, "component {i}");
        }
    }

    #[test]
    fn distributions_are_simplexes() {
        let img = array![0.5, 0.5, 0.1];
        let texts = vec![array![1.0, 0.0, 0.0], array![0.0, 1.0, 0.0], array![0.3, 0.3, 0.3]];
        let p = i2t_distribution(img.view(), &texts, 0.07).unwrap();
        assert_eq!(p.len(), 3);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let q = t2i_distribution(texts[0].view(), &[img.clone(), texts[1].clone()], 0.07).unwrap();
        assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
