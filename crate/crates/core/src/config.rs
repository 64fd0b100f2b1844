//! Experiment configuration, loaded from TOML. Every field has a default, so a
//! config file only needs the values it changes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::aggregate::Normalization;
use crate::error::{Error, Result};
use crate::hashing::HashingRegistry;
use crate::reconstruct::{CombineMode, CueRegistry};
use crate::sparse::LassoOptions;
use crate::synth::{SyntheticSpec, TrainingSpec};
use crate::vocab::{LeafSearch, TreeParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HashingConfig {
    pub variant: String,
    pub bits: usize,
    pub seed: u64,
}

impl Default for HashingConfig {
    fn default() -> Self {
        Self {
            variant: "joint".into(),
            bits: 128,
            seed: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorSource {
    /// Pseudo-BoW from the Hamming ranking of the query code.
    #[default]
    Binary,
    /// Pseudo-BoW from the ranking of the context-aware reconstruction.
    Reconstructed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconstructionConfig {
    pub lambda: f64,
    pub alpha: f64,
    /// Database images consulted per cue.
    pub top_r: usize,
    pub cues: Vec<String>,
    pub combine: CombineMode,
    /// Images pooled into the pseudo-BoW prior.
    pub prior_top_r: usize,
    pub prior_source: PriorSource,
    pub lasso: LassoOptions,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        Self {
            lambda: 0.02,
            alpha: 0.5,
            top_r: 10,
            cues: vec!["gps".into(), "binary".into()],
            combine: CombineMode::IntersectionElseUnion,
            prior_top_r: 5,
            prior_source: PriorSource::Binary,
            lasso: LassoOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalConfig {
    pub normalization: Normalization,
    pub leaf_search: LeafSearch,
    /// PQ sub-quantizers; must divide D·N.
    pub pq_subspaces: usize,
    pub pq_bits: u8,
    pub pq_seed: u64,
    /// Result-list cutoffs for recall.
    pub recall_at: Vec<usize>,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            normalization: Normalization::IntraThenGlobalL2,
            leaf_search: LeafSearch::ExhaustiveSubtree,
            pq_subspaces: 8,
            pq_bits: 8,
            pq_seed: 3,
            recall_at: vec![1, 5, 10],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub lambdas: Vec<f64>,
    pub queries: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            lambdas: vec![0.001, 0.005, 0.01, 0.02, 0.05, 0.1],
            queries: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// Real dataset manifest; when absent the synthetic generator is used.
    pub manifest: Option<PathBuf>,
    /// Pre-trained tree; when absent one is trained.
    pub tree: Option<PathBuf>,
    pub training: TrainingSpec,
    pub synthetic: SyntheticSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub tree: TreeParams,
    pub hashing: HashingConfig,
    pub reconstruction: ReconstructionConfig,
    pub retrieval: RetrievalConfig,
    pub sweep: SweepConfig,
    pub dataset: DatasetConfig,
    /// Report rows to produce; see [`crate::pipeline::MODES`].
    pub modes: Vec<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            tree: TreeParams::default(),
            hashing: HashingConfig::default(),
            reconstruction: ReconstructionConfig::default(),
            retrieval: RetrievalConfig::default(),
            sweep: SweepConfig::default(),
            dataset: DatasetConfig::default(),
            modes: crate::pipeline::MODES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
        Self::from_toml(&text).map_err(|e| e.in_file(path))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Hex SHA-256 of the canonical TOML serialization, truncated to 16 digits.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(digest.iter().take(8).map(|b| format!("{b:02x}")).collect())
    }

    /// Checks everything that can be checked before the data is seen.
    pub fn validate(&self) -> Result<()> {
        let cfg = |msg: String| Err(Error::Config(msg));
        let t = &self.tree;
        if t.branch < 2 || t.vlad_level >= t.levels {
            return cfg(format!(
                "tree needs branch >= 2 and vlad_level < levels (branch {}, levels {}, vlad_level {})",
                t.branch, t.levels, t.vlad_level
            ));
        }
        let n = t.branch.checked_pow(t.vlad_level as u32).unwrap_or(usize::MAX);
        HashingRegistry::default().get(&self.hashing.variant)?;
        if self.hashing.bits == 0 {
            return cfg("hashing.bits must be positive".into());
        }
        if matches!(self.hashing.variant.as_str(), "independent" | "shared") && self.hashing.bits % n != 0 {
            return cfg(format!("hashing.bits = {} must be divisible by N = {n}", self.hashing.bits));
        }
        let r = &self.reconstruction;
        if !(r.lambda.is_finite() && r.lambda >= 0.0) {
            return cfg(format!("reconstruction.lambda must be >= 0, got {}", r.lambda));
        }
        if !(r.alpha > 0.0 && r.alpha < 1.0) {
            return cfg(format!("reconstruction.alpha must lie in (0, 1), got {}", r.alpha));
        }
        if r.top_r == 0 || r.prior_top_r == 0 {
            return cfg("top_r values must be positive".into());
        }
        let cues = CueRegistry::default();
        for c in &r.cues {
            cues.get(c)?;
        }
        if !(r.lasso.tol > 0.0) || r.lasso.max_iter == 0 {
            return cfg("lasso needs tol > 0 and max_iter > 0".into());
        }
        let q = &self.retrieval;
        if q.pq_subspaces == 0 || !(1..=8).contains(&q.pq_bits) {
            return cfg("PQ needs pq_subspaces >= 1 and 1 <= pq_bits <= 8".into());
        }
        if q.recall_at.iter().any(|&k| k == 0) {
            return cfg("recall cutoffs must be positive".into());
        }
        if self.sweep.lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return cfg("sweep lambdas must be finite and >= 0".into());
        }
        for m in &self.modes {
            if !crate::pipeline::MODES.contains(&m.as_str()) {
                return cfg(format!("unknown mode '{m}' (available: {})", crate::pipeline::MODES.join(", ")));
            }
        }
        if self.dataset.manifest.is_none() {
            self.dataset.synthetic.validate()?;
        }
        Ok(())
    }
}
