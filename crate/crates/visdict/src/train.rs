//! Two-stage training: recognition first, then contrastive matching on top
//! of the frozen-head backbone.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::glyph::{shuffle, ConfusionTable, Dataset, GlyphImage};
use crate::manifest::derive_seed;
use crate::nn::loss::{overall_loss_and_grads, MatchBatch};
use crate::nn::{sgd_step, stage1_frozen, stage2_frozen, ModelDims, ModelParams};
use crate::resemblant::{generate_resemblants, max_resemblants, ResemblantSpec};

/// Full training configuration. Both stages are plain SGD; the loss weights
/// are per stage and validated so a stage only ever optimizes its own loss.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    /// Master seed; every random stream in a run is derived from it.
    pub seed: u64,
    pub batch_size: usize,
    pub stage1_epochs: usize,
    pub stage2_epochs: usize,
    pub stage1_lr: f64,
    pub stage2_lr: f64,
    /// (recognition, matching) weights for stage 1; matching must be zero.
    pub stage1_lambda: (f64, f64),
    /// (recognition, matching) weights for stage 2; recognition must be zero.
    pub stage2_lambda: (f64, f64),
    /// Hard negatives sampled per pair. Short labels admit fewer variants
    /// than requested; the trainer clamps per label rather than erroring.
    pub resemblant_count: usize,
    /// When true, a label keeps one fixed resemblant set for the whole run
    /// instead of resampling every batch.
    pub fixed_resemblants: bool,
    /// Stage 2 always freezes the recognizer head; this additionally frees
    /// or pins the shared image backbone.
    pub stage2_train_backbone: bool,
    /// Matching temperature.
    pub tau: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 7,
            batch_size: 32,
            stage1_epochs: 8,
            stage2_epochs: 4,
            stage1_lr: 0.1,
            stage2_lr: 0.05,
            stage1_lambda: (1.0, 0.0),
            stage2_lambda: (0.0, 1.0),
            resemblant_count: 3,
            fixed_resemblants: false,
            stage2_train_backbone: true,
            tau: 0.07,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.batch_size < 2 {
            return bad(format!(
                "batch_size {} too small: matching needs in-batch negatives",
                self.batch_size
            ));
        }
        for (name, lr) in [("stage1_lr", self.stage1_lr), ("stage2_lr", self.stage2_lr)] {
            if !(lr > 0.0) || !lr.is_finite() {
                return bad(format!("{name} must be positive and finite, got {lr}"));
            }
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return bad(format!("tau must be positive and finite, got {}", self.tau));
        }
        if self.stage1_lambda.1 != 0.0 || !(self.stage1_lambda.0 > 0.0) {
            return bad(format!(
                "stage 1 trains recognition only: lambda must be (w, 0) with w > 0, got {:?}",
                self.stage1_lambda
            ));
        }
        if self.stage2_lambda.0 != 0.0 || !(self.stage2_lambda.1 > 0.0) {
            return bad(format!(
                "stage 2 trains matching only: lambda must be (0, w) with w > 0, got {:?}",
                self.stage2_lambda
            ));
        }
        Ok(())
    }
}

/// Mean per-sample loss of one epoch.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub batches: usize,
}

/// Per-epoch losses of both stages.
#[derive(Debug, Clone, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct TrainingLog {
    pub stage1: Vec<EpochStats>,
    pub stage2: Vec<EpochStats>,
}

fn epoch_order(len: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffle(&mut order, &mut rng);
    order
}

/// Map any numeric failure inside a batch to the training-level error.
fn batch_err(e: Error, epoch: usize, batch: usize) -> Error {
    match e {
        Error::NonFiniteParams => Error::NonFiniteLoss { epoch, batch },
        other => other,
    }
}

/// Stage 1: recognition only. Text-encoder and projection tensors are
/// frozen and receive zero gradient from this loss anyway; the freeze makes
/// the invariant structural.
pub fn train_stage1(
    params: &mut ModelParams,
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<Vec<EpochStats>> {
    cfg.validate()?;
    if data.samples.is_empty() {
        return Err(Error::InvalidConfig("training set is empty".into()));
    }
    let empty = MatchBatch {
        pairs: vec![],
        resemblants: vec![],
    };
    let mut log = Vec::with_capacity(cfg.stage1_epochs);
    for epoch in 0..cfg.stage1_epochs {
        let order = epoch_order(data.samples.len(), derive_seed(cfg.seed, "stage1-shuffle", &[epoch as u64]));
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        let mut batches = 0usize;
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<(&GlyphImage, &str)> = chunk
                .iter()
                .map(|&i| (&data.samples[i].image, data.samples[i].label.as_str()))
                .collect();
            let (loss, grads) = overall_loss_and_grads(
                params,
                &batch,
                &empty,
                cfg.stage1_lambda.0,
                0.0,
                cfg.tau,
            )
            .map_err(|e| batch_err(e, epoch, batch_idx))?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                });
            }
            sgd_step(params, &grads, cfg.stage1_lr, &stage1_frozen);
            loss_sum += loss * chunk.len() as f64;
            seen += chunk.len();
            batches += 1;
        }
        log.push(EpochStats {
            epoch,
            mean_loss: loss_sum / seen as f64,
            batches,
        });
    }
    Ok(log)
}

/// Resemblant group for one occurrence of a label. The requested count is
/// clamped to what the label admits (5 per character).
fn resemblant_group(
    label: &crate::lexicon::Word,
    table: &ConfusionTable,
    cfg: &TrainConfig,
    epoch: usize,
    batch_idx: usize,
    slot: usize,
) -> Result<Vec<String>> {
    let count = cfg.resemblant_count.min(max_resemblants(label));
    let seed = if cfg.fixed_resemblants {
        derive_seed(cfg.seed, &format!("resemblant-fixed:{}", label.as_str()), &[])
    } else {
        derive_seed(
            cfg.seed,
            "resemblant",
            &[epoch as u64, batch_idx as u64, slot as u64],
        )
    };
    let words = generate_resemblants(label, table, &ResemblantSpec { count, seed })?;
    Ok(words.into_iter().map(|w| w.into_string()).collect())
}

/// Stage 2: contrastive matching only. The recognizer head is frozen; the
/// backbone follows `cfg.stage2_train_backbone`. Trailing chunks with fewer
/// than two pairs are skipped, since they carry no in-batch negative.
pub fn train_stage2(
    params: &mut ModelParams,
    data: &Dataset,
    table: &ConfusionTable,
    cfg: &TrainConfig,
) -> Result<Vec<EpochStats>> {
    cfg.validate()?;
    if data.samples.len() < 2 {
        return Err(Error::InvalidConfig(
            "stage 2 needs at least two training samples".into(),
        ));
    }
    let frozen = |name: &str| stage2_frozen(name, cfg.stage2_train_backbone);
    let mut log = Vec::with_capacity(cfg.stage2_epochs);
    for epoch in 0..cfg.stage2_epochs {
        let order = epoch_order(data.samples.len(), derive_seed(cfg.seed, "stage2-shuffle", &[epoch as u64]));
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        let mut batches = 0usize;
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            if chunk.len() < 2 {
                continue;
            }
            let pairs: Vec<(&GlyphImage, &str)> = chunk
                .iter()
                .map(|&i| (&data.samples[i].image, data.samples[i].label.as_str()))
                .collect();
            let resemblants = chunk
                .iter()
                .enumerate()
                .map(|(slot, &i)| {
                    resemblant_group(&data.samples[i].label, table, cfg, epoch, batch_idx, slot)
                })
                .collect::<Result<Vec<_>>>()?;
            let batch = MatchBatch { pairs, resemblants };
            let (loss, grads) =
                overall_loss_and_grads(params, &[], &batch, 0.0, cfg.stage2_lambda.1, cfg.tau)
                    .map_err(|e| batch_err(e, epoch, batch_idx))?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                });
            }
            sgd_step(params, &grads, cfg.stage2_lr, &frozen);
            loss_sum += loss * chunk.len() as f64;
            seen += chunk.len();
            batches += 1;
        }
        log.push(EpochStats {
            epoch,
            mean_loss: loss_sum / seen as f64,
            batches,
        });
    }
    Ok(log)
}

/// Initialize and run both stages. The initialization seed is derived from
/// the config's master seed.
pub fn train_two_stage(
    dims: ModelDims,
    data: &Dataset,
    table: &ConfusionTable,
    cfg: &TrainConfig,
) -> Result<(ModelParams, TrainingLog)> {
    cfg.validate()?;
    let mut params = ModelParams::init(dims, derive_seed(cfg.seed, "init", &[]))?;
    let stage1 = train_stage1(&mut params, data, cfg)?;
    let stage2 = train_stage2(&mut params, data, table, cfg)?;
    Ok((params, TrainingLog { stage1, stage2 }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glyph::{generate_dataset, DatasetSpec};
    use crate::lexicon::Lexicon;

    fn tiny_world() -> (Lexicon, Dataset) {
        let lexicon =
            Lexicon::from_words(["cat", "dog", "bird", "fish", "mouse", "horse"].map(String::from))
                .unwrap();
        let spec = DatasetSpec {
            size: 48,
            noise_rate: 0.1,
            smear: 0.2,
            out_of_lexicon_fraction: 0.0,
            seed: 5,
        };
        let data = generate_dataset(&lexicon, ConfusionTable::default_v1(), &spec).unwrap();
        (lexicon, data)
    }

    fn tiny_dims() -> ModelDims {
        ModelDims {
            seq_len: 8,
            channels: 16,
            proj_dim: 8,
            ..ModelDims::default()
        }
    }

    fn tiny_config() -> TrainConfig {
        TrainConfig {
            seed: 11,
            batch_size: 16,
            stage1_epochs: 3,
            stage2_epochs: 2,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn config_validation_pins_the_stage_lambdas() {
        let mut cfg = tiny_config();
        cfg.stage1_lambda = (1.0, 0.5);
        assert!(cfg.validate().is_err());
        cfg = tiny_config();
        cfg.stage2_lambda = (0.1, 1.0);
        assert!(cfg.validate().is_err());
        cfg = tiny_config();
        cfg.stage2_lambda = (0.0, 0.0);
        assert!(cfg.validate().is_err());
        cfg = tiny_config();
        cfg.batch_size = 1;
        assert!(cfg.validate().is_err());
        assert!(tiny_config().validate().is_ok());
    }

    #[test]
    fn stage1_reduces_its_loss_and_respects_the_freeze() {
        let (_, data) = tiny_world();
        let cfg = tiny_config();
        let mut params = ModelParams::init(tiny_dims(), 1).unwrap();
        let before = params.clone();
        let log = train_stage1(&mut params, &data, &cfg).unwrap();
        assert_eq!(log.len(), 3);
        assert!(
            log.last().unwrap().mean_loss < log[0].mean_loss,
            "stage 1 loss did not fall: {log:?}"
        );
        for ((name, after), (_, orig)) in params.tensors().into_iter().zip(before.tensors()) {
            if stage1_frozen(&name) {
                assert_eq!(after, orig, "{name} moved during stage 1");
            }
        }
        assert_ne!(params.recog_w, before.recog_w);
    }

    #[test]
    fn stage2_reduces_its_loss_and_freezes_the_head() {
        let (_, data) = tiny_world();
        let cfg = tiny_config();
        let mut params = ModelParams::init(tiny_dims(), 2).unwrap();
        train_stage1(&mut params, &data, &cfg).unwrap();
        let before = params.clone();
        let log = train_stage2(&mut params, &data, ConfusionTable::default_v1(), &cfg).unwrap();
        assert_eq!(log.len(), 2);
        assert!(log.last().unwrap().mean_loss <= log[0].mean_loss * 1.05);
        assert_eq!(params.recog_w, before.recog_w);
        assert_eq!(params.recog_b, before.recog_b);
        assert_ne!(params.proj_text, before.proj_text);
    }

    #[test]
    fn frozen_backbone_stays_put_in_stage2() {
        let (_, data) = tiny_world();
        let mut cfg = tiny_config();
        cfg.stage2_train_backbone = false;
        let mut params = ModelParams::init(tiny_dims(), 3).unwrap();
        let before = params.clone();
        train_stage2(&mut params, &data, ConfusionTable::default_v1(), &cfg).unwrap();
        assert_eq!(params.glyph_embed, before.glyph_embed);
        assert_eq!(params.attn_query, before.attn_query);
        assert_ne!(params.text_embed, before.text_embed);
    }

    #[test]
    fn training_is_bit_deterministic_in_the_seed() {
        let (_, data) = tiny_world();
        let cfg = tiny_config();
        let table = ConfusionTable::default_v1();
        let (a, log_a) = train_two_stage(tiny_dims(), &data, table, &cfg).unwrap();
        let (b, log_b) = train_two_stage(tiny_dims(), &data, table, &cfg).unwrap();
        assert_eq!(log_a, log_b);
        for ((name, x), (_, y)) in a.tensors().into_iter().zip(b.tensors()) {
            for (u, v) in x.iter().zip(y.iter()) {
                assert_eq!(u.to_bits(), v.to_bits(), "{name} differs across runs");
            }
        }
        let mut other = cfg.clone();
        other.seed = 12;
        let (c, _) = train_two_stage(tiny_dims(), &data, table, &other).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn fixed_resemblants_change_the_trajectory() {
        let (_, data) = tiny_world();
        let table = ConfusionTable::default_v1();
        let cfg = tiny_config();
        let mut fixed = cfg.clone();
        fixed.fixed_resemblants = true;
        let (a, _) = train_two_stage(tiny_dims(), &data, table, &cfg).unwrap();
        let (b, _) = train_two_stage(tiny_dims(), &data, table, &fixed).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn exploding_learning_rate_reports_non_finite_loss() {
        let (_, data) = tiny_world();
        let mut cfg = tiny_config();
        cfg.stage1_lr = 1e80;
        cfg.stage1_epochs = 4;
        let mut params = ModelParams::init(tiny_dims(), 4).unwrap();
        let err = train_stage1(&mut params, &data, &cfg).unwrap_err();
        assert!(
            matches!(err, Error::NonFiniteLoss { .. }),
            "expected NonFiniteLoss, got {err:?}"
        );
    }

    #[test]
    fn resemblant_counts_are_clamped_for_short_labels() {
        // "ox" admits at most 10 variants; a request for 31 must not error.
        let lexicon = Lexicon::from_words(["ox", "ax"].map(String::from)).unwrap();
        let spec = DatasetSpec {
            size: 8,
            noise_rate: 0.1,
            smear: 0.2,
            out_of_lexicon_fraction: 0.0,
            seed: 3,
        };
        let data = generate_dataset(&lexicon, ConfusionTable::default_v1(), &spec).unwrap();
        let mut cfg = tiny_config();
        cfg.resemblant_count = 31;
        cfg.batch_size = 4;
        let mut params = ModelParams::init(tiny_dims(), 6).unwrap();
        train_stage2(&mut params, &data, ConfusionTable::default_v1(), &cfg).unwrap();
    }
}
