//! Scratch calibration sweep driven by env vars. Not part of the crate's
//! public face; removed once the standard preset is frozen.

use visdict::eval::{ablate_candidates, rescue_stats};
use visdict::nn::ModelDims;
use visdict::pipeline::{infer_cached, Mode, TextEmbeddingCache};
use visdict::presets::{execute, standard, RunArtifacts};
use visdict::train::train_stage2;

fn env_f64(key: &str, default: f64) -> f64 {
    std::env::var(key).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}
fn env_usize(key: &str, default: usize) -> usize {
    std::env::var(key).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}
fn env_set(key: &str) -> bool {
    std::env::var(key).map(|v| v == "1").unwrap_or(false)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut preset = standard();
    preset.dims = ModelDims {
        channels: env_usize("CH", preset.dims.channels),
        proj_dim: env_usize("PROJ", preset.dims.proj_dim),
        ..preset.dims
    };
    preset.train_spec.noise_rate = env_f64("TRAIN_NOISE", preset.train_spec.noise_rate);
    preset.train_spec.smear = env_f64("TRAIN_SMEAR", preset.train_spec.smear);
    preset.train_spec.out_of_lexicon_fraction =
        env_f64("TRAIN_OOL", preset.train_spec.out_of_lexicon_fraction);
    preset.test_spec.noise_rate = env_f64("TEST_NOISE", preset.test_spec.noise_rate);
    preset.test_spec.smear = env_f64("TEST_SMEAR", preset.test_spec.smear);
    preset.train.stage1_epochs = env_usize("E1", preset.train.stage1_epochs);
    preset.train.stage2_epochs = env_usize("E2", preset.train.stage2_epochs);
    preset.train.stage1_lr = env_f64("LR1", preset.train.stage1_lr);
    preset.train.stage2_lr = env_f64("LR2", preset.train.stage2_lr);
    preset.train.batch_size = env_usize("BATCH", preset.train.batch_size);
    preset.train.resemblant_count = env_usize("RES", preset.train.resemblant_count);
    preset.train.stage2_train_backbone =
        env_usize("BB", preset.train.stage2_train_backbone as usize) != 0;
    preset.train.tau = env_f64("TAU", preset.train.tau);

    let t = std::time::Instant::now();
    let run = execute(&preset)?;
    report_line(&preset, &run, t.elapsed().as_secs())?;
    if env_set("DIAG") {
        diag(&run, &preset.eval)?;
    }

    // Criterion-5 shape: the candidate-count sweep on the trained model.
    if env_set("SWEEP_N") {
        let grid = ablate_candidates(
            &run.params,
            &run.index,
            &run.test_data,
            &[1, 5, 10, 20, 150, 300],
            preset.eval.tau,
        )?;
        let pts: Vec<String> = grid
            .points
            .iter()
            .map(|p| format!("{}:{:.3}", p.value, p.accuracy))
            .collect();
        println!("  n-sweep {}", pts.join(" "));
    }

    // Criterion-6 shape: retrain stage 2 without resemblants from the same
    // stage-1 checkpoint, then report the same diagnostics for it.
    if env_set("ABLATE_RES") {
        let mut cfg = preset.train.clone();
        cfg.resemblant_count = 0;
        let mut zero = run.stage1_params.clone();
        train_stage2(&mut zero, &run.train_data, &run.table, &cfg)?;
        let zero_run = RunArtifacts {
            params: zero,
            ..run
        };
        let rep = visdict::eval::evaluate(
            &zero_run.params,
            &zero_run.index,
            &zero_run.test_data,
            &preset.eval,
            "unpinned",
        )?;
        let rescue = rescue_stats(
            &zero_run.params,
            &zero_run.index,
            &zero_run.test_data,
            &preset.eval,
        )?;
        println!(
            "  M-1=0: base {:.3} ord {:.3} prop {:.3} | rescue {}/{} = {:.2}",
            rep.accuracy(Mode::Baseline),
            rep.accuracy(Mode::Ordinary),
            rep.accuracy(Mode::Proposed),
            rescue.preserved_proposed,
            rescue.recognized,
            rescue.preserved_proposed as f64 / rescue.recognized.max(1) as f64,
        );
        if env_set("DIAG") {
            diag(&zero_run, &preset.eval)?;
        }
    }
    Ok(())
}

fn report_line(
    preset: &visdict::presets::Preset,
    run: &RunArtifacts,
    secs: u64,
) -> Result<(), Box<dyn std::error::Error>> {
    let rescue = rescue_stats(&run.params, &run.index, &run.test_data, &preset.eval)?;
    println!(
        "C={} D={} tn={} tool={} ts={} e1={} e2={} lr2={} tau={} M-1={} bb={} | base {:.3} ord {:.3} prop {:.3} | rescue {}/{} = {:.2} | s1 {:.3} s2 {:.3} | {}s",
        preset.dims.channels,
        preset.dims.proj_dim,
        preset.train_spec.noise_rate,
        preset.train_spec.out_of_lexicon_fraction,
        preset.train_spec.smear,
        preset.train.stage1_epochs,
        preset.train.stage2_epochs,
        preset.train.stage2_lr,
        preset.train.tau,
        preset.train.resemblant_count,
        preset.train.stage2_train_backbone as usize,
        run.report.accuracy(Mode::Baseline),
        run.report.accuracy(Mode::Ordinary),
        run.report.accuracy(Mode::Proposed),
        rescue.preserved_proposed,
        rescue.recognized,
        rescue.preserved_proposed as f64 / rescue.recognized.max(1) as f64,
        run.log.stage1.last().map(|e| e.mean_loss).unwrap_or(f64::NAN),
        run.log.stage2.last().map(|e| e.mean_loss).unwrap_or(f64::NAN),
        secs,
    );
    Ok(())
}

/// Error anatomy of the proposed mode over the in-lexicon test slice.
fn diag(
    run: &RunArtifacts,
    eval: &visdict::eval::EvalConfig,
) -> Result<(), Box<dyn std::error::Error>> {
    let mut cache = TextEmbeddingCache::new();
    let (mut total, mut correct, mut kept, mut wrong, mut missing) = (0, 0, 0, 0, 0);
    for s in &run.test_data.samples {
        if !run.index.lexicon().contains(s.label.as_str()) {
            continue;
        }
        total += 1;
        let r = infer_cached(
            &run.params,
            &run.index,
            &s.image,
            Mode::Proposed,
            eval.n_candidates,
            eval.tau,
            &mut cache,
        )?;
        if r.selected == s.label.as_str() {
            correct += 1;
        } else if r.selected == r.visual_prediction {
            kept += 1;
        } else if r.candidates.iter().any(|c| c.word == s.label.as_str()) {
            wrong += 1;
        } else {
            missing += 1;
        }
    }
    println!(
        "  in-lex {total}: correct {correct} kept-garbled {kept} wrong-word {wrong} label-not-retrieved {missing}"
    );
    Ok(())
}
