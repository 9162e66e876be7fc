//! Verify every analytic gradient against central finite differences, for
//! both the recognition and the matching loss, on a small random instance.
//!
//!     cargo run --release --example gradient_check

use visdict::check::{finite_difference_check, DEFAULT_STEP};
use visdict::glyph::{perturb, render, ConfusionTable, GlyphImage};
use visdict::lexicon::Word;
use visdict::nn::loss::{matching_loss_and_grads, recognition_loss_and_grads, MatchBatch};
use visdict::nn::{ModelDims, ModelParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dims = ModelDims {
        seq_len: 6,
        channels: 6,
        proj_dim: 5,
        ..ModelDims::default()
    };
    let params = ModelParams::init(dims, 400)?;
    let table = ConfusionTable::default_v1();

    let labels = ["abc", "t1red", "zq"];
    let images: Vec<GlyphImage> = labels
        .iter()
        .enumerate()
        .map(|(i, l)| perturb(&render(&Word::new(l).unwrap()), table, 0.4, 0.5, i as u64))
        .collect();
    let pairs = || -> Vec<(&GlyphImage, &str)> {
        images.iter().zip(labels).collect()
    };

    let (loss, analytic) = recognition_loss_and_grads(&params, &pairs())?;
    let report = finite_difference_check(&params, &analytic, |p| {
        recognition_loss_and_grads(p, &pairs()).map(|(l, _)| l)
    }, DEFAULT_STEP)?;
    println!("recognition loss {loss:.4}, {} elements checked:", report.elements);
    println!("{}", report.summary());
    assert!(report.passes(1e-4));

    let resemblants = vec![
        vec!["dbc".to_string()],
        vec!["tlred".to_string(), "t1rcd".to_string()],
        vec!["2q".to_string()],
    ];
    let batch = || MatchBatch {
        pairs: pairs(),
        resemblants: resemblants.clone(),
    };
    let (loss, analytic) = matching_loss_and_grads(&params, &batch(), 0.1)?;
    let report = finite_difference_check(&params, &analytic, |p| {
        matching_loss_and_grads(p, &batch(), 0.1).map(|(l, _)| l)
    }, DEFAULT_STEP)?;
    println!("\nmatching loss {loss:.4}, {} elements checked:", report.elements);
    println!("{}", report.summary());
    assert!(report.passes(1e-4));

    println!("\nall tensors agree with finite differences to 1e-4");
    Ok(())
}
