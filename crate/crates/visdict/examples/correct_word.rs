//! The two-forward correction pipeline on single words: recognize, retrieve
//! candidates by edit distance, then let the matcher pick. Trains the
//! miniature smoke preset first (a few seconds).
//!
//!     cargo run --release --example correct_word

use visdict::glyph::perturb;
use visdict::glyph::render;
use visdict::lexicon::Word;
use visdict::pipeline::{infer, Mode};
use visdict::presets::{execute, smoke};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let preset = smoke();
    println!("training preset `{}`...", preset.name);
    let run = execute(&preset)?;
    let (n, tau) = (preset.eval.n_candidates, preset.eval.tau);

    // A corrupted image of a lexicon word: baseline emits the garbled
    // reading, ordinary snaps to the nearest word, proposed should agree
    // with ordinary here because the image's faint residue favors the
    // genuine word over the literal reading.
    let label = run.index.lexicon().words()[17].clone();
    println!("\ncorrupted image of lexicon word {:?}", label.as_str());
    let image = perturb(&render(&label), &run.table, 0.35, preset.test_spec.smear, 5);
    for mode in Mode::ALL {
        let out = infer(&run.params, &run.index, &image, mode, n, tau)?;
        println!(
            "  {:<9} read {:?} -> selected {:?}",
            mode.name(),
            out.visual_prediction,
            out.selected
        );
    }

    // A clean image of a word the lexicon does not contain: ordinary mode
    // force-corrects it away, proposed keeps it when the matcher sees the
    // image supports the literal reading.
    let ool = Word::new("vvq3x")?;
    assert!(!run.index.lexicon().contains(ool.as_str()));
    println!("\nclean image of out-of-lexicon word {:?}", ool.as_str());
    let image = render(&ool);
    for mode in Mode::ALL {
        let out = infer(&run.params, &run.index, &image, mode, n, tau)?;
        let scores: Vec<String> = out
            .candidates
            .iter()
            .zip(&out.scores)
            .map(|(c, s)| format!("{}:{s:.2}", c.word))
            .collect();
        println!(
            "  {:<9} selected {:?}  scores [{}]",
            mode.name(),
            out.selected,
            scores.join(" ")
        );
    }
    Ok(())
}
