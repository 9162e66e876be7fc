//! Evaluation: run the three correction modes over one dataset from a single
//! shared first forward pass per image, and emit a validated, digestable
//! report. Also the two ablation sweeps.

use std::path::Path;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::glyph::{ConfusionTable, Dataset};
use crate::index::MetricIndex;
use crate::lexicon::hex;
use crate::nn::encoder::recognize;
use crate::nn::ModelParams;
use crate::pipeline::{
    build_candidate_set, candidate_set_from_ranked, select, Mode, TextEmbeddingCache,
};
use crate::store::sha256;
use crate::train::{train_stage2, TrainConfig};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Inference-time knobs for an evaluation run.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EvalConfig {
    /// Retrieval width n.
    pub n_candidates: usize,
    /// Matching temperature.
    pub tau: f64,
    /// How many error cases to keep per mode, for inspection.
    pub keep_errors: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            n_candidates: 5,
            tau: 0.07,
            keep_errors: 20,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_candidates == 0 {
            return Err(Error::InvalidConfig("n_candidates must be >= 1".into()));
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "tau must be positive and finite, got {}",
                self.tau
            )));
        }
        Ok(())
    }
}

/// One mis-correction, kept for inspection.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ErrorCase {
    pub label: String,
    pub visual_prediction: String,
    pub selected: String,
}

/// Results of one mode over the whole dataset.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModeOutcome {
    pub mode: Mode,
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub errors: Vec<ErrorCase>,
}

/// The full evaluation report. `determinism_digest` covers the canonical
/// form (timings zeroed, digest field emptied); two runs over identical
/// inputs must agree on it exactly.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub manifest_digest: String,
    pub model_digest: String,
    pub lexicon_digest: String,
    pub data_digest: String,
    pub n_candidates: usize,
    pub tau: f64,
    /// Fixed order: baseline, ordinary, proposed.
    pub modes: Vec<ModeOutcome>,
    pub timings_ms: u64,
    pub determinism_digest: String,
}

impl EvalReport {
    pub fn outcome(&self, mode: Mode) -> &ModeOutcome {
        self.modes
            .iter()
            .find(|o| o.mode == mode)
            .expect("all three modes are always present")
    }

    pub fn accuracy(&self, mode: Mode) -> f64 {
        self.outcome(mode).accuracy
    }

    /// The report with everything run-dependent but input-independent
    /// stripped: timings zeroed, digest emptied.
    fn canonical(&self) -> EvalReport {
        let mut c = self.clone();
        c.timings_ms = 0;
        c.determinism_digest = String::new();
        c
    }

    fn compute_determinism_digest(&self) -> String {
        let canonical = serde_json::to_string(&self.canonical())
            .expect("report serialization cannot fail");
        hex(&sha256(canonical.as_bytes()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    /// Parse and validate: schema version, consistent counts, accuracies in
    /// range, and a determinism digest that matches the content.
    pub fn from_json(text: &str) -> Result<EvalReport> {
        let r: EvalReport =
            serde_json::from_str(text).map_err(|e| Error::InvalidReport(e.to_string()))?;
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidReport(msg));
        if self.schema_version != REPORT_SCHEMA_VERSION {
            return bad(format!(
                "schema version {} (expected {REPORT_SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        let order: Vec<Mode> = self.modes.iter().map(|o| o.mode).collect();
        if order != Mode::ALL {
            return bad(format!("modes out of order or missing: {order:?}"));
        }
        for o in &self.modes {
            if !(0.0..=1.0).contains(&o.accuracy) {
                return bad(format!("{} accuracy {} out of range", o.mode.name(), o.accuracy));
            }
            if o.correct > o.total || o.total == 0 {
                return bad(format!(
                    "{} counts inconsistent: {}/{}",
                    o.mode.name(),
                    o.correct,
                    o.total
                ));
            }
            if (o.accuracy - o.correct as f64 / o.total as f64).abs() > 1e-9 {
                return bad(format!("{} accuracy does not match counts", o.mode.name()));
            }
        }
        if self.determinism_digest != self.compute_determinism_digest() {
            return bad("determinism digest does not match report content".into());
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<EvalReport> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        EvalReport::from_json(&text)
    }

    /// Human-oriented fixed-width table. Display only; the JSON form is the
    /// one that round-trips.
    pub fn render_table(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let _ = writeln!(out, "mode       correct   total   accuracy");
        for o in &self.modes {
            let _ = writeln!(
                out,
                "{:<10} {:>7} {:>7}   {:.4}",
                o.mode.name(),
                o.correct,
                o.total,
                o.accuracy
            );
        }
        let _ = writeln!(out, "n_candidates {}  tau {}", self.n_candidates, self.tau);
        let _ = writeln!(out, "manifest {}", self.manifest_digest);
        let _ = writeln!(out, "determinism {}", self.determinism_digest);
        let _ = writeln!(out, "wall {} ms", self.timings_ms);
        out
    }
}

/// On-disk report flavors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    /// Machine-readable; parse it back with [`EvalReport::load`].
    Json,
    /// Fixed-width summary for people.
    Table,
}

/// Write a report in the requested format.
pub fn emit_report(
    report: &EvalReport,
    path: impl AsRef<Path>,
    format: ReportFormat,
) -> Result<()> {
    let path = path.as_ref();
    let text = match format {
        ReportFormat::Json => report.to_json(),
        ReportFormat::Table => report.render_table(),
    };
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Evaluate all three modes. Every mode consumes the same recognition and
/// candidate pool per sample, so differences between modes are differences
/// in the decision rule alone.
pub fn evaluate(
    params: &ModelParams,
    index: &MetricIndex,
    data: &Dataset,
    cfg: &EvalConfig,
    manifest_digest: &str,
) -> Result<EvalReport> {
    cfg.validate()?;
    if data.samples.is_empty() {
        return Err(Error::InvalidConfig("evaluation set is empty".into()));
    }
    let started = Instant::now();
    let mut cache = TextEmbeddingCache::new();
    let mut outcomes: Vec<ModeOutcome> = Mode::ALL
        .iter()
        .map(|&mode| ModeOutcome {
            mode,
            total: data.samples.len(),
            correct: 0,
            accuracy: 0.0,
            errors: vec![],
        })
        .collect();

    for sample in &data.samples {
        let rec = recognize(params, &sample.image)?;
        let set = build_candidate_set(index, &rec.prediction, cfg.n_candidates)?;
        for outcome in &mut outcomes {
            let (_, selected) = select(params, &rec, &set, outcome.mode, cfg.tau, &mut cache)?;
            if selected == sample.label.as_str() {
                outcome.correct += 1;
            } else if outcome.errors.len() < cfg.keep_errors {
                outcome.errors.push(ErrorCase {
                    label: sample.label.as_str().to_string(),
                    visual_prediction: rec.prediction.clone(),
                    selected,
                });
            }
        }
    }
    for o in &mut outcomes {
        o.accuracy = o.correct as f64 / o.total as f64;
    }

    let mut report = EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        manifest_digest: manifest_digest.to_string(),
        model_digest: params.digest_hex(),
        lexicon_digest: index.lexicon().digest_hex(),
        data_digest: data.digest_hex(),
        n_candidates: cfg.n_candidates,
        tau: cfg.tau,
        modes: outcomes,
        timings_ms: started.elapsed().as_millis() as u64,
        determinism_digest: String::new(),
    };
    report.determinism_digest = report.compute_determinism_digest();
    Ok(report)
}

/// What happens to out-of-lexicon test words under each decision rule.
/// "Preserved" counts samples whose final output equals the (out-of-lexicon)
/// label; the interesting population is the correctly-recognized subset,
/// where a forced dictionary replacement is guaranteed to destroy a right
/// answer.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RescueStats {
    /// Out-of-lexicon samples in the dataset.
    pub ool_total: usize,
    /// ... of which the recognizer read exactly right.
    pub recognized: usize,
    /// ... of which the proposed mode kept as the final output.
    pub preserved_proposed: usize,
    /// Same for the ordinary mode (zero by construction: it always replaces
    /// with a lexicon word, and the label is not one).
    pub preserved_ordinary: usize,
}

impl RescueStats {
    /// Fraction of correctly-recognized out-of-lexicon words the proposed
    /// mode preserves.
    pub fn proposed_rescue_rate(&self) -> f64 {
        if self.recognized == 0 {
            return 0.0;
        }
        self.preserved_proposed as f64 / self.recognized as f64
    }
}

/// Measure out-of-lexicon preservation on the subset of `data` whose labels
/// fall outside the index's lexicon.
pub fn rescue_stats(
    params: &ModelParams,
    index: &MetricIndex,
    data: &Dataset,
    cfg: &EvalConfig,
) -> Result<RescueStats> {
    cfg.validate()?;
    let mut stats = RescueStats {
        ool_total: 0,
        recognized: 0,
        preserved_proposed: 0,
        preserved_ordinary: 0,
    };
    let mut cache = TextEmbeddingCache::new();
    for sample in &data.samples {
        if index.lexicon().contains(sample.label.as_str()) {
            continue;
        }
        stats.ool_total += 1;
        let rec = recognize(params, &sample.image)?;
        if rec.prediction != sample.label.as_str() {
            continue;
        }
        stats.recognized += 1;
        let set = build_candidate_set(index, &rec.prediction, cfg.n_candidates)?;
        for mode in [Mode::Ordinary, Mode::Proposed] {
            let (_, selected) = select(params, &rec, &set, mode, cfg.tau, &mut cache)?;
            if selected == sample.label.as_str() {
                match mode {
                    Mode::Ordinary => stats.preserved_ordinary += 1,
                    Mode::Proposed => stats.preserved_proposed += 1,
                    Mode::Baseline => unreachable!(),
                }
            }
        }
    }
    Ok(stats)
}

/// One point of an ablation sweep.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AblationPoint {
    pub value: usize,
    pub accuracy: f64,
}

/// Accuracy of the proposed mode as one knob varies.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AblationGrid {
    /// Which knob: "n_candidates" or "resemblant_count".
    pub axis: String,
    pub points: Vec<AblationPoint>,
}

impl AblationGrid {
    pub fn accuracy_at(&self, value: usize) -> Option<f64> {
        self.points.iter().find(|p| p.value == value).map(|p| p.accuracy)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("grid serialization cannot fail")
    }
}

fn validate_sweep(values: &[usize], allow_zero: bool) -> Result<()> {
    if values.is_empty() {
        return Err(Error::InvalidConfig("ablation needs at least one value".into()));
    }
    if !allow_zero && values[0] == 0 {
        return Err(Error::InvalidConfig("retrieval width 0 is not evaluable".into()));
    }
    if values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidConfig(format!(
            "ablation values must be strictly increasing, got {values:?}"
        )));
    }
    Ok(())
}

/// Sweep the retrieval width n over `values` (strictly increasing), scoring
/// the proposed mode only. Retrieval happens once per sample at the widest
/// width; narrower pools are prefixes.
pub fn ablate_candidates(
    params: &ModelParams,
    index: &MetricIndex,
    data: &Dataset,
    values: &[usize],
    tau: f64,
) -> Result<AblationGrid> {
    validate_sweep(values, false)?;
    if data.samples.is_empty() {
        return Err(Error::InvalidConfig("evaluation set is empty".into()));
    }
    let widest = *values.last().unwrap();
    let mut correct = vec![0usize; values.len()];
    let mut cache = TextEmbeddingCache::new();
    for sample in &data.samples {
        let rec = recognize(params, &sample.image)?;
        let ranked = index.top_n(&rec.prediction, widest);
        for (vi, &n) in values.iter().enumerate() {
            let take = n.min(ranked.len());
            let set = candidate_set_from_ranked(&rec.prediction, &ranked[..take]);
            let (_, selected) = select(params, &rec, &set, Mode::Proposed, tau, &mut cache)?;
            if selected == sample.label.as_str() {
                correct[vi] += 1;
            }
        }
    }
    Ok(AblationGrid {
        axis: "n_candidates".into(),
        points: values
            .iter()
            .zip(correct)
            .map(|(&value, c)| AblationPoint {
                value,
                accuracy: c as f64 / data.samples.len() as f64,
            })
            .collect(),
    })
}

/// Sweep the per-pair resemblant count. Each point re-runs stage 2 from the
/// given stage-1 parameters with everything else held fixed, then evaluates
/// the proposed mode.
#[allow(clippy::too_many_arguments)]
pub fn ablate_resemblants(
    stage1_params: &ModelParams,
    train_data: &Dataset,
    table: &ConfusionTable,
    index: &MetricIndex,
    test_data: &Dataset,
    values: &[usize],
    train_cfg: &TrainConfig,
    eval_cfg: &EvalConfig,
) -> Result<AblationGrid> {
    validate_sweep(values, true)?;
    eval_cfg.validate()?;
    let mut points = Vec::with_capacity(values.len());
    for &value in values {
        let mut cfg = train_cfg.clone();
        cfg.resemblant_count = value;
        let mut params = stage1_params.clone();
        train_stage2(&mut params, train_data, table, &cfg)?;
        let report = evaluate(&params, index, test_data, eval_cfg, "ablation")?;
        points.push(AblationPoint {
            value,
            accuracy: report.accuracy(Mode::Proposed),
        });
    }
    Ok(AblationGrid {
        axis: "resemblant_count".into(),
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glyph::{generate_dataset, DatasetSpec};
    use crate::lexicon::Lexicon;
    use crate::nn::ModelDims;

    fn tiny_setup() -> (ModelParams, MetricIndex, Dataset) {
        let lexicon =
            Lexicon::from_words(["cat", "dog", "bird", "fish"].map(String::from)).unwrap();
        let spec = DatasetSpec {
            size: 12,
            noise_rate: 0.1,
            smear: 0.2,
            out_of_lexicon_fraction: 0.25,
            seed: 9,
        };
        let data = generate_dataset(&lexicon, ConfusionTable::default_v1(), &spec).unwrap();
        let index = MetricIndex::build(lexicon);
        let params = ModelParams::init(
            ModelDims {
                seq_len: 6,
                channels: 8,
                proj_dim: 5,
                ..ModelDims::default()
            },
            21,
        )
        .unwrap();
        (params, index, data)
    }

    #[test]
    fn report_is_valid_and_round_trips() {
        let (params, index, data) = tiny_setup();
        let cfg = EvalConfig::default();
        let report = evaluate(&params, &index, &data, &cfg, "digest-here").unwrap();
        report.validate().unwrap();
        let back = EvalReport::from_json(&report.to_json()).unwrap();
        assert_eq!(report, back);
        assert_eq!(back.modes.len(), 3);
        assert_eq!(back.outcome(Mode::Proposed).total, 12);
    }

    #[test]
    fn write_parse_write_is_idempotent() {
        let (params, index, data) = tiny_setup();
        let report = evaluate(&params, &index, &data, &EvalConfig::default(), "m").unwrap();
        let json1 = report.to_json();
        let json2 = EvalReport::from_json(&json1).unwrap().to_json();
        assert_eq!(json1, json2);
    }

    #[test]
    fn tampered_reports_are_rejected() {
        let (params, index, data) = tiny_setup();
        let report = evaluate(&params, &index, &data, &EvalConfig::default(), "m").unwrap();
        let mut r = report.clone();
        r.modes[0].accuracy = 1.5;
        assert!(matches!(r.validate(), Err(Error::InvalidReport(_))));
        let mut r = report.clone();
        r.modes[2].correct = r.modes[2].total + 1;
        assert!(r.validate().is_err());
        // Silent edits break the determinism digest.
        let mut r = report.clone();
        r.manifest_digest = "something-else".into();
        assert!(r.validate().is_err());
        // Timing edits do not: they are outside the canonical form.
        let mut r = report;
        r.timings_ms += 1000;
        assert!(r.validate().is_ok());
    }

    #[test]
    fn determinism_digest_is_stable_across_runs() {
        let (params, index, data) = tiny_setup();
        let a = evaluate(&params, &index, &data, &EvalConfig::default(), "m").unwrap();
        let b = evaluate(&params, &index, &data, &EvalConfig::default(), "m").unwrap();
        assert_eq!(a.determinism_digest, b.determinism_digest);
    }

    #[test]
    fn candidate_sweep_validates_and_reports_per_value() {
        let (params, index, data) = tiny_setup();
        assert!(ablate_candidates(&params, &index, &data, &[], 0.07).is_err());
        assert!(ablate_candidates(&params, &index, &data, &[2, 2], 0.07).is_err());
        assert!(ablate_candidates(&params, &index, &data, &[3, 1], 0.07).is_err());
        let grid = ablate_candidates(&params, &index, &data, &[1, 2, 4], 0.07).unwrap();
        assert_eq!(grid.axis, "n_candidates");
        assert_eq!(grid.points.len(), 3);
        assert!(grid.accuracy_at(2).is_some());
        assert!(grid.points.iter().all(|p| (0.0..=1.0).contains(&p.accuracy)));
    }

    #[test]
    fn sliced_retrieval_matches_direct_retrieval() {
        // The prefix shortcut must give the same sets as retrieving at each
        // width directly.
        let (params, index, data) = tiny_setup();
        let tau = 0.07;
        let grid = ablate_candidates(&params, &index, &data, &[1, 3], tau).unwrap();
        // Direct computation at n = 1 and n = 3.
        for (vi, n) in [1usize, 3].into_iter().enumerate() {
            let mut cache = TextEmbeddingCache::new();
            let mut correct = 0;
            for sample in &data.samples {
                let rec = recognize(&params, &sample.image).unwrap();
                let set = build_candidate_set(&index, &rec.prediction, n).unwrap();
                let (_, sel) = select(&params, &rec, &set, Mode::Proposed, tau, &mut cache).unwrap();
                if sel == sample.label.as_str() {
                    correct += 1;
                }
            }
            let direct = correct as f64 / data.samples.len() as f64;
            assert_eq!(grid.points[vi].accuracy, direct, "width {n}");
        }
    }

    #[test]
    fn rescue_stats_count_out_of_lexicon_samples() {
        let (params, index, data) = tiny_setup();
        let stats = rescue_stats(&params, &index, &data, &EvalConfig::default()).unwrap();
        let ool = data
            .samples
            .iter()
            .filter(|s| !index.lexicon().contains(s.label.as_str()))
            .count();
        assert_eq!(stats.ool_total, ool);
        assert_eq!(stats.ool_total, 3); // 25% of 12
        assert_eq!(stats.preserved_ordinary, 0);
        assert!(stats.recognized <= stats.ool_total);
        assert!(stats.preserved_proposed <= stats.recognized);
        assert!((0.0..=1.0).contains(&stats.proposed_rescue_rate()));
    }

    #[test]
    fn resemblant_sweep_trains_one_stage2_per_value() {
        let (params, index, data) = tiny_setup();
        let train_cfg = TrainConfig {
            seed: 4,
            batch_size: 4,
            stage1_epochs: 0,
            stage2_epochs: 1,
            ..TrainConfig::default()
        };
        let eval_cfg = EvalConfig::default();
        let grid = ablate_resemblants(
            &params,
            &data,
            ConfusionTable::default_v1(),
            &index,
            &data,
            &[0, 2],
            &train_cfg,
            &eval_cfg,
        )
        .unwrap();
        assert_eq!(grid.axis, "resemblant_count");
        assert_eq!(grid.points.len(), 2);
    }
}
