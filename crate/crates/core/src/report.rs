//! Experiment report: a JSON table dump plus a plain-text summary.
//!
//! Wall-clock timings vary run to run, so they are shown in the summary but left
//! out of the JSON file, which is byte-identical for identical configs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hashing::FootprintRow;
use crate::io::write_file;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub database_images: usize,
    pub queries: usize,
    pub dim: usize,
    pub vlad_centers: usize,
    pub leaves: usize,
    pub hashing: String,
    pub bits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeRow {
    pub mode: String,
    pub map: f64,
    /// `(N, R@N)` pairs.
    pub recall: Vec<(usize, f64)>,
    pub ndcg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub visual_words: usize,
    pub mean_per_query: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionStats {
    pub lambda: f64,
    pub subtree_columns: usize,
    /// Dictionary columns solved per query without context.
    pub mean_columns_full: f64,
    /// Dictionary columns solved per query after candidate selection.
    pub mean_columns_cads: f64,
    pub unconverged_subvectors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config_hash: String,
    pub dataset: DatasetSummary,
    pub modes: Vec<ModeRow>,
    pub footprint: Vec<FootprintRow>,
    pub lambda_sweep: Vec<SweepRow>,
    pub reconstruction: ReconstructionStats,
    #[serde(skip)]
    pub timings: Vec<StageTiming>,
}

impl Report {
    pub fn mode(&self, name: &str) -> Option<&ModeRow> {
        self.modes.iter().find(|m| m.mode == name)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::invalid(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::invalid(format!("report: {e}")))
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let d = &self.dataset;
        let _ = writeln!(s, "run {}", self.config_hash);
        let _ = writeln!(
            s,
            "{} database images, {} queries, D = {}, N = {}, M = {}, {} hashing with {} bits\n",
            d.database_images, d.queries, d.dim, d.vlad_centers, d.leaves, d.hashing, d.bits
        );
        let _ = write!(s, "{:<14} {:>7} {:>7}", "mode", "MAP", "NDCG");
        if let Some(first) = self.modes.first() {
            for (n, _) in &first.recall {
                let _ = write!(s, " {:>7}", format!("R@{n}"));
            }
        }
        s.push('\n');
        for m in &self.modes {
            let _ = write!(s, "{:<14} {:>7.4} {:>7.4}", m.mode, m.map, m.ndcg);
            for (_, r) in &m.recall {
                let _ = write!(s, " {r:>7.4}");
            }
            s.push('\n');
        }
        let _ = writeln!(s, "\n{:<40} {:>14} {:>16}", "method", "transmit (B)", "memory (B)");
        for f in &self.footprint {
            let _ = writeln!(s, "{:<40} {:>14} {:>16}", f.method, f.transmission_bytes, f.memory_bytes);
        }
        let _ = writeln!(s, "\n{:>8} {:>10} {:>10}", "lambda", "VWs", "per query");
        for r in &self.lambda_sweep {
            let _ = writeln!(s, "{:>8} {:>10} {:>10.1}", r.lambda, r.visual_words, r.mean_per_query);
        }
        let r = &self.reconstruction;
        let _ = writeln!(
            s,
            "\nlambda {}: {} columns per sub-tree, {:.1} solved per query without context, {:.1} with candidate selection, {} unconverged sub-vector solves",
            r.lambda, r.subtree_columns, r.mean_columns_full, r.mean_columns_cads, r.unconverged_subvectors
        );
        if !self.timings.is_empty() {
            s.push('\n');
            for t in &self.timings {
                let _ = writeln!(s, "{:<10} {:>9.3} s", t.stage, t.seconds);
            }
        }
        s
    }

    /// Writes `report-<hash>.json` and `report-<hash>.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        let json = dir.join(format!("report-{}.json", self.config_hash));
        let txt = dir.join(format!("report-{}.txt", self.config_hash));
        write_file(&json, self.to_json()?.as_bytes())?;
        write_file(&txt, self.summary().as_bytes())?;
        Ok((json, txt))
    }
}
