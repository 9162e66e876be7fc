//! Run manifests: one JSON document that pins everything a run depends on,
//! plus the seed-derivation scheme that turns one master seed into the
//! independent streams used across a run.

use std::path::Path;

use crate::error::{Error, Result};
use crate::glyph::DatasetSpec;
use crate::lexicon::hex;
use crate::nn::ModelDims;
use crate::store::sha256;
use crate::train::TrainConfig;

/// Derive a child seed from a master seed, a purpose tag, and any number of
/// stream coordinates (stage, epoch, batch, ...). SHA-256 keeps distinct
/// coordinates statistically independent and is stable across platforms.
pub fn derive_seed(master: u64, tag: &str, parts: &[u64]) -> u64 {
    let mut bytes = Vec::with_capacity(8 + tag.len() + 8 * parts.len());
    bytes.extend_from_slice(&master.to_le_bytes());
    bytes.extend_from_slice(tag.as_bytes());
    for p in parts {
        bytes.extend_from_slice(&p.to_le_bytes());
    }
    let digest = sha256(&bytes);
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Everything that determines a run's outputs. Two runs with equal manifests
/// and equal input files must produce byte-identical models and reports.
///
/// The training block is optional so evaluation-only runs (a prebuilt model
/// against a dataset) can still emit an honest manifest of what they used.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub master_seed: u64,
    pub dims: ModelDims,
    pub lexicon_digest: String,
    pub confusion_digest: String,
    pub train_spec: Option<DatasetSpec>,
    pub test_spec: Option<DatasetSpec>,
    pub train_data_digest: Option<String>,
    pub test_data_digest: Option<String>,
    pub train: Option<TrainConfig>,
    /// Retrieval width used at inference time.
    pub n_candidates: usize,
    /// Matching temperature used at inference time.
    pub tau: f64,
}

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

impl RunManifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<RunManifest> {
        let m: RunManifest =
            serde_json::from_str(text).map_err(|e| Error::InvalidReport(e.to_string()))?;
        if m.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(Error::InvalidReport(format!(
                "manifest schema version {} (expected {MANIFEST_SCHEMA_VERSION})",
                m.schema_version
            )));
        }
        if !(m.tau > 0.0) || m.n_candidates == 0 {
            return Err(Error::InvalidReport(
                "manifest has non-positive tau or zero retrieval width".into(),
            ));
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<RunManifest> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunManifest::from_json(&text)
    }

    /// SHA-256 over the JSON form; what evaluation reports embed.
    pub fn digest_hex(&self) -> String {
        hex(&sha256(self.to_json().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glyph::ConfusionTable;
    use crate::lexicon::Lexicon;

    fn sample_manifest() -> RunManifest {
        let lex = Lexicon::synthetic(50, 1).unwrap();
        RunManifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            master_seed: 99,
            dims: ModelDims::default(),
            lexicon_digest: lex.digest_hex(),
            confusion_digest: ConfusionTable::default_v1().digest_hex(),
            train_spec: Some(DatasetSpec {
                size: 100,
                noise_rate: 0.1,
                smear: 0.2,
                out_of_lexicon_fraction: 0.0,
                seed: derive_seed(99, "train-data", &[]),
            }),
            test_spec: None,
            train_data_digest: Some("abc123".into()),
            test_data_digest: None,
            train: Some(TrainConfig::default()),
            n_candidates: 5,
            tau: 0.07,
        }
    }

    #[test]
    fn derive_seed_separates_tags_and_parts() {
        let a = derive_seed(7, "shuffle", &[0]);
        let b = derive_seed(7, "shuffle", &[1]);
        let c = derive_seed(7, "resemblant", &[0]);
        let d = derive_seed(8, "shuffle", &[0]);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
        assert_eq!(a, derive_seed(7, "shuffle", &[0]));
    }

    #[test]
    fn manifest_round_trips_and_digests_stably() {
        let m = sample_manifest();
        let json = m.to_json();
        let back = RunManifest::from_json(&json).unwrap();
        assert_eq!(m, back);
        assert_eq!(m.digest_hex(), back.digest_hex());
        assert_eq!(m.digest_hex().len(), 64);
    }

    #[test]
    fn manifest_rejects_wrong_schema_and_bad_values() {
        let mut m = sample_manifest();
        m.schema_version = 2;
        assert!(RunManifest::from_json(&m.to_json()).is_err());
        let mut m = sample_manifest();
        m.tau = 0.0;
        assert!(RunManifest::from_json(&m.to_json()).is_err());
        let mut m = sample_manifest();
        m.n_candidates = 0;
        assert!(RunManifest::from_json(&m.to_json()).is_err());
    }

    #[test]
    fn manifest_saves_and_loads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        let m = sample_manifest();
        m.save(&path).unwrap();
        assert_eq!(RunManifest::load(&path).unwrap(), m);
    }
}
