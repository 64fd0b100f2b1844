use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::CandidateVWs;
use crate::aggregate::{l2, BowHistogram, VladVector};
use crate::error::{check_dim, Error, Result};
use crate::retrieval::{DatabaseIndex, Ranking};
use crate::sparse::{solve_nn_lasso, solve_tikhonov_weighted, Dictionary, LassoOptions, TikhonovWeights};
use crate::vocab::VocabularyTree;

/// Sub-vectors with a smaller norm received no features and are skipped.
pub const SKIP_NORM: f64 = 1e-8;
/// Reconstructed entries below this are dropped.
pub const DROP_BELOW: f64 = 1e-6;

pub fn build_dictionary(tree: &VocabularyTree, vlad_id: usize) -> Result<Dictionary> {
    Dictionary::from_tree(tree, vlad_id)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubvectorReport {
    pub vlad_id: usize,
    pub columns: usize,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub histogram: BowHistogram,
    /// One entry per sub-vector that was actually solved.
    pub subvectors: Vec<SubvectorReport>,
}

impl Reconstruction {
    pub fn all_converged(&self) -> bool {
        self.subvectors.iter().all(|s| s.converged)
    }
    pub fn columns(&self) -> usize {
        self.subvectors.iter().map(|s| s.columns).sum()
    }
}

fn check_shape(v: &VladVector, tree: &VocabularyTree, candidates: Option<&CandidateVWs>) -> Result<()> {
    check_dim(tree.dim(), v.dim())?;
    check_dim(tree.num_vlad(), v.num_centers())?;
    if let Some(c) = candidates {
        check_dim(tree.num_vlad(), c.num_centers())?;
    }
    Ok(())
}

fn assemble(vocab: usize, parts: Vec<(SubvectorReport, Vec<(u32, f64)>)>) -> Result<Reconstruction> {
    let mut histogram = BowHistogram::new(vocab);
    let mut subvectors = Vec::with_capacity(parts.len());
    for (report, entries) in parts {
        for (t, x) in entries {
            if x >= DROP_BELOW {
                histogram.add(t, x)?;
            }
        }
        subvectors.push(report);
    }
    Ok(Reconstruction { histogram, subvectors })
}

/// Non-negative LASSO per sub-vector, restricted to the candidate VWs when given.
///
/// `v` must be in raw residual space (unnormalized).
pub fn reconstruct_bow(
    v: &VladVector,
    tree: &VocabularyTree,
    lambda: f64,
    candidates: Option<&CandidateVWs>,
    opts: &LassoOptions,
) -> Result<Reconstruction> {
    check_shape(v, tree, candidates)?;
    let parts = (0..tree.num_vlad())
        .into_par_iter()
        .map(|i| -> Result<Option<(SubvectorReport, Vec<(u32, f64)>)>> {
            let sub = v.subvector(i);
            if l2(sub) < SKIP_NORM {
                return Ok(None);
            }
            let full = build_dictionary(tree, i)?;
            let dict = match candidates {
                Some(c) if c.get(i).is_empty() => return Ok(None),
                Some(c) => full.restricted(c.get(i)),
                None => full,
            };
            let sol = solve_nn_lasso(&dict, sub, lambda, opts)?;
            let entries = sol.nonzeros().map(|(t, x)| (dict.column_ids()[t], x)).collect();
            let report = SubvectorReport {
                vlad_id: i,
                columns: dict.width(),
                iterations: sol.iterations,
                converged: sol.converged,
            };
            Ok(Some((report, entries)))
        })
        .collect::<Result<Vec<_>>>()?;
    assemble(tree.num_leaves(), parts.into_iter().flatten().collect())
}

/// Mean of the L1-normalized stored histograms of the `top_r` first results.
pub fn pseudo_bow(index: &DatabaseIndex, ranking: &Ranking, top_r: usize) -> Result<BowHistogram> {
    let (sum, count) = top_histograms(index, ranking, top_r, true)?;
    Ok(sum.scaled(1.0 / count as f64))
}

/// Mean raw feature count of the same `top_r` results.
pub fn pseudo_bow_mass(index: &DatabaseIndex, ranking: &Ranking, top_r: usize) -> Result<f64> {
    let (sum, count) = top_histograms(index, ranking, top_r, false)?;
    Ok(sum.l1_mass() / count as f64)
}

fn top_histograms(index: &DatabaseIndex, ranking: &Ranking, top_r: usize, normalize: bool) -> Result<(BowHistogram, usize)> {
    if top_r == 0 {
        return Err(Error::invalid("top_r must be at least 1"));
    }
    if ranking.is_empty() {
        return Err(Error::EmptyInput("ranking"));
    }
    let top = ranking.top(top_r);
    let mut sum: Option<BowHistogram> = None;
    for e in top {
        let im = index
            .get(e.id)
            .ok_or_else(|| Error::Missing(format!("ranked image {} not in index", e.id)))?;
        let h = im
            .bow
            .as_ref()
            .ok_or_else(|| Error::Missing(format!("database image {} has no stored BoW", e.id)))?;
        let h = if normalize { h.l1_normalized() } else { h.clone() };
        let acc = sum.get_or_insert_with(|| BowHistogram::new(h.vocab_size()));
        for (t, x) in h.iter() {
            acc.add(t, x)?;
        }
    }
    Ok((sum.expect("ranking is nonempty"), top.len()))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PriorOptions {
    /// Feature-count estimate the output is rescaled to; `None` uses `||h0||₁`.
    pub target_mass: Option<f64>,
}

/// Rounds down, ignoring excess below this from accumulated float error.
const FLOOR_SLACK: f64 = 1e-6;

/// Tikhonov refinement toward the prior `h0`, followed by rescaling and flooring.
///
/// `h0` is first scaled to the target mass so prior and data terms share a scale.
pub fn reconstruct_bow_with_prior(
    v: &VladVector,
    tree: &VocabularyTree,
    h0: &BowHistogram,
    alpha: f64,
    candidates: Option<&CandidateVWs>,
    opts: &PriorOptions,
) -> Result<Reconstruction> {
    check_shape(v, tree, candidates)?;
    check_dim(tree.num_leaves(), h0.vocab_size())?;
    if h0.is_empty() {
        return Err(Error::invalid("prior histogram h0 is zero"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let target = opts.target_mass.unwrap_or_else(|| h0.l1_mass());
    if !(target.is_finite() && target > 0.0) {
        return Err(Error::invalid(format!("target mass must be positive, got {target}")));
    }
    let prior = h0.scaled(target / h0.l1_mass());
    let global_n2 = prior.l2_norm_squared();

    let parts = (0..tree.num_vlad())
        .into_par_iter()
        .map(|i| -> Result<Option<(SubvectorReport, Vec<(u32, f64)>)>> {
            let sub = v.subvector(i);
            let n1: f64 = sub.iter().map(|x| x * x).sum();
            if n1.sqrt() < SKIP_NORM {
                return Ok(None);
            }
            let full = build_dictionary(tree, i)?;
            let mut allowed: BTreeSet<u32> = full.column_ids().iter().copied().filter(|&t| prior.get(t) > 0.0).collect();
            match candidates {
                Some(c) => allowed.extend(c.get(i).iter().copied()),
                None => allowed.extend(full.column_ids().iter().copied()),
            }
            if allowed.is_empty() {
                return Ok(None);
            }
            let dict = full.restricted(&allowed);
            let local: Vec<f64> = dict.column_ids().iter().map(|&t| prior.get(t)).collect();
            let local_n2: f64 = local.iter().map(|x| x * x).sum();
            let n2 = if local_n2 > 0.0 { local_n2 } else { global_n2 };
            let weights = TikhonovWeights {
                data: alpha / n1,
                prior: (1.0 - alpha) / n2,
            };
            let h = solve_tikhonov_weighted(&dict, sub, &local, weights)?;
            let entries = dict
                .column_ids()
                .iter()
                .zip(h)
                .filter(|&(_, x)| x > 0.0)
                .map(|(&t, x)| (t, x))
                .collect();
            let report = SubvectorReport {
                vlad_id: i,
                columns: dict.width(),
                iterations: 1,
                converged: true,
            };
            Ok(Some((report, entries)))
        })
        .collect::<Result<Vec<_>>>()?;

    let Reconstruction { histogram, subvectors } = assemble(tree.num_leaves(), parts.into_iter().flatten().collect())?;
    let mass = histogram.l1_mass();
    let mut out = BowHistogram::new(tree.num_leaves());
    if mass > 0.0 {
        for (t, x) in histogram.iter() {
            let c = (x * target / mass + FLOOR_SLACK).floor();
            if c > 0.0 {
                out.add(t, c)?;
            }
        }
    }
    Ok(Reconstruction {
        histogram: out,
        subvectors,
    })
}
