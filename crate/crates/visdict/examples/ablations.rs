//! The two ablation sweeps on the miniature preset: retrieval width n over a
//! fixed model, and resemblant count with stage 2 retrained per value from
//! one shared stage-1 checkpoint.
//!
//!     cargo run --release --example ablations
//!
//! The smoke preset is too small for the full accuracy ordering the
//! reference run exhibits; this demonstrates the mechanics and the grid
//! artifact, not headline numbers.

use visdict::eval::{ablate_candidates, ablate_resemblants};
use visdict::nn::ModelParams;
use visdict::presets::smoke;
use visdict::train::train_stage1;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let preset = smoke();
    let (index, table, train_data, test_data) = preset.build_world()?;

    // Stage 1 once; both sweeps share it.
    println!("training stage 1 of preset `{}`...", preset.name);
    let mut params = ModelParams::init(
        preset.dims,
        visdict::manifest::derive_seed(preset.train.seed, "init", &[]),
    )?;
    train_stage1(&mut params, &train_data, &preset.train)?;

    // Candidate sweep: one stage-2 training, then re-evaluate the proposed
    // mode at each retrieval width.
    let mut full = params.clone();
    let mut cfg = preset.train.clone();
    visdict::train::train_stage2(&mut full, &train_data, &table, &cfg)?;
    let grid = ablate_candidates(&full, &index, &test_data, &[1, 5, 10, 20], preset.eval.tau)?;
    println!("\nretrieval width sweep:");
    for p in &grid.points {
        println!("  n = {:>2}  proposed accuracy {:.4}", p.value, p.accuracy);
    }

    // Resemblant sweep: stage 2 retrained per count from the same
    // checkpoint. Zero means in-batch negatives only.
    cfg.stage2_epochs = preset.train.stage2_epochs;
    let grid = ablate_resemblants(
        &params,
        &train_data,
        &table,
        &index,
        &test_data,
        &[0, 3, 7],
        &cfg,
        &preset.eval,
    )?;
    println!("\nresemblant count sweep (stage 2 retrained per value):");
    for p in &grid.points {
        println!("  count = {:>2}  proposed accuracy {:.4}", p.value, p.accuracy);
    }
    println!("\ngrid JSON:\n{}", grid.to_json());
    Ok(())
}
