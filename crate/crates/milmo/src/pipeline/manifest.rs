//! The reproducibility manifest.
//!
//! Every stage records a hash of its parameters and of each output file,
//! keyed by path relative to the data root. All fields are deterministic
//! functions of the inputs and seed (the recorded epoch honors
//! `SOURCE_DATE_EPOCH` and defaults to 0), so two runs with the same seed
//! produce byte-identical manifests.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::rng::fnv1a64;

use super::PipelineError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageEntry {
    /// Position in the canonical stage order.
    pub seq: usize,
    pub params_hash: String,
    /// Output file hashes keyed by data-root-relative path.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub seed: u64,
    pub created_epoch: u64,
    pub stages: BTreeMap<String, StageEntry>,
}

fn source_date_epoch() -> u64 {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(0)
}

pub fn hash_bytes(bytes: &[u8]) -> String {
    format!("fnv64:{:016x}", fnv1a64(bytes))
}

pub fn hash_file(path: &Path) -> Result<String, PipelineError> {
    let bytes = std::fs::read(path)
        .map_err(|e| PipelineError::Data(format!("hashing {}: {e}", path.display())))?;
    Ok(hash_bytes(&bytes))
}

impl Manifest {
    pub fn new(seed: u64) -> Self {
        Manifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            created_epoch: source_date_epoch(),
            stages: BTreeMap::new(),
        }
    }

    pub fn load_or_new(data_dir: &Path, seed: u64) -> Self {
        let path = data_dir.join(MANIFEST_FILE);
        match std::fs::read_to_string(&path) {
            Ok(content) => serde_json::from_str(&content).unwrap_or_else(|_| Manifest::new(seed)),
            Err(_) => Manifest::new(seed),
        }
    }

    pub fn save(&self, data_dir: &Path) -> Result<(), PipelineError> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| PipelineError::Data(format!("serialize manifest: {e}")))?;
        std::fs::write(data_dir.join(MANIFEST_FILE), json + "\n")
            .map_err(|e| PipelineError::Data(format!("write manifest: {e}")))?;
        Ok(())
    }

    /// Record a completed stage: hash every output file.
    pub fn record(
        &mut self,
        data_dir: &Path,
        stage: &str,
        seq: usize,
        params_hash: String,
        outputs: &[String],
    ) -> Result<(), PipelineError> {
        let mut hashed = BTreeMap::new();
        for rel in outputs {
            hashed.insert(rel.clone(), hash_file(&data_dir.join(rel))?);
        }
        self.stages.insert(
            stage.to_string(),
            StageEntry {
                seq,
                params_hash,
                outputs: hashed,
            },
        );
        Ok(())
    }

    /// A stage is satisfied when it has run and its outputs still exist.
    pub fn satisfied(&self, data_dir: &Path, stage: &str) -> bool {
        match self.stages.get(stage) {
            Some(entry) => entry
                .outputs
                .keys()
                .all(|rel| data_dir.join(rel).exists()),
            None => false,
        }
    }
}

/// Hash a stage's parameters: any serializable snapshot plus the seed.
pub fn params_hash<T: Serialize>(seed: u64, params: &T) -> String {
    let json = serde_json::to_string(params).unwrap_or_default();
    hash_bytes(format!("{seed}:{json}").as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_and_satisfied() {
        let dir = std::env::temp_dir().join("milmo-manifest");
        std::fs::create_dir_all(&dir).unwrap();
        std::fs::write(dir.join("out.txt"), b"payload").unwrap();

        let mut m = Manifest::new(1);
        assert!(!m.satisfied(&dir, "clean"));
        m.record(&dir, "clean", 0, "fnv64:0".into(), &["out.txt".into()])
            .unwrap();
        assert!(m.satisfied(&dir, "clean"));

        m.save(&dir).unwrap();
        let loaded = Manifest::load_or_new(&dir, 1);
        assert_eq!(loaded, m);

        std::fs::remove_file(dir.join("out.txt")).unwrap();
        assert!(!loaded.satisfied(&dir, "clean"));
    }

    #[test]
    fn identical_content_identical_hash() {
        let dir = std::env::temp_dir().join("milmo-manifest");
        std::fs::create_dir_all(&dir).unwrap();
        std::fs::write(dir.join("a.txt"), b"same").unwrap();
        std::fs::write(dir.join("b.txt"), b"same").unwrap();
        assert_eq!(
            hash_file(&dir.join("a.txt")).unwrap(),
            hash_file(&dir.join("b.txt")).unwrap()
        );
    }

    #[test]
    fn manifest_bytes_are_deterministic() {
        let build = || {
            let mut m = Manifest::new(9);
            m.stages.insert(
                "z".into(),
                StageEntry {
                    seq: 2,
                    params_hash: "fnv64:2".into(),
                    outputs: BTreeMap::new(),
                },
            );
            m.stages.insert(
                "a".into(),
                StageEntry {
                    seq: 1,
                    params_hash: "fnv64:1".into(),
                    outputs: BTreeMap::new(),
                },
            );
            serde_json::to_string_pretty(&m).unwrap()
        };
        assert_eq!(build(), build());
    }
}
