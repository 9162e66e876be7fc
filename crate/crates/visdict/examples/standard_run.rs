//! The calibrated reference run, end to end: build the standard world,
//! train both stages, and print the headline comparison the whole crate
//! exists to demonstrate. Expect a few minutes of CPU time.
//!
//!     cargo run --release --example standard_run

use visdict::eval::rescue_stats;
use visdict::presets::{execute, standard};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let preset = standard();
    println!(
        "preset `{}`: lexicon {}, train {} / test {} samples, {} epochs + {}",
        preset.name,
        preset.lexicon_size,
        preset.train_spec.size,
        preset.test_spec.size,
        preset.train.stage1_epochs,
        preset.train.stage2_epochs,
    );
    println!("training (this is the slow part)...");
    let run = execute(&preset)?;

    print!("\n{}", run.report.render_table());
    println!(
        "train + eval wall time: {:.0}s",
        run.train_eval_wall.as_secs_f64()
    );

    // The headline ordering: the edit-distance snap beats the raw read, and
    // the matcher-guided pick beats the snap.
    let acc = |mode: usize| run.report.modes[mode].accuracy;
    let (base, ord, prop) = (acc(0), acc(1), acc(2));
    println!("\nbaseline {base:.3} < ordinary {ord:.3} < proposed {prop:.3}");
    assert!(ord >= base + 0.01 && prop >= ord + 0.01);

    // Where the difference comes from: ordinary snaps every out-of-lexicon
    // word onto some dictionary entry, so each one it had actually read
    // correctly is destroyed. Proposed keeps the raw read as a candidate
    // and lets the matcher decide.
    let rescue = rescue_stats(&run.params, &run.index, &run.test_data, &preset.eval)?;
    println!(
        "out-of-lexicon words read correctly: {} of {}; preserved by ordinary {}, by proposed {} ({:.0}%)",
        rescue.recognized,
        rescue.ool_total,
        rescue.preserved_ordinary,
        rescue.preserved_proposed,
        100.0 * rescue.preserved_proposed as f64 / rescue.recognized as f64,
    );
    Ok(())
}
