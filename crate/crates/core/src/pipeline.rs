//! End-to-end experiment: tree, hashing, index, per-query de-hashing and ranking, metrics.

use std::collections::BTreeSet;
use std::time::Instant;

use rayon::prelude::*;

use crate::aggregate::{compute_bow, compute_vlad, BowHistogram, Normalization, VladVector};
use crate::config::{ExperimentConfig, PriorSource};
use crate::error::{Error, Result};
use crate::hashing::footprint::{bow_row, vlad_method_row};
use crate::hashing::{train_hashing, BinaryCode, FootprintRow, HashingModel, Layout};
use crate::io::{ingest_dataset, read_tree, Dataset, ManifestEntry};
use crate::reconstruct::{
    pseudo_bow, reconstruct_bow, reconstruct_bow_with_prior, CandidateVWs, ContextTag, CueRegistry, PriorOptions,
    Reconstruction,
};
use crate::report::{DatasetSummary, ModeRow, ReconstructionStats, Report, StageTiming, SweepRow};
use crate::retrieval::{
    mean_average_precision, mean_ndcg, rank_adc, rank_bow, rank_gps, rank_hamming, rank_vlad, recall_at, train_pq,
    DatabaseIndex, GeoPoint, ImageId, IndexedImage, Ranking,
};
use crate::synth::{synthesize_dataset, training_descriptors};
use crate::vocab::{train_vocabulary, DescriptorSet, LeafSearch, VocabularyTree};

/// Report rows a config may request.
pub const MODES: &[&str] = &[
    "bow",
    "vlad",
    "hamming",
    "approx-vlad",
    "adc",
    "approx-adc",
    "gps",
    "recon-vlad",
    "recon-binary",
    "recon-cads",
    "brpk",
];

/// Times each stage and tags its errors with the stage name.
#[derive(Default)]
struct Stages {
    timings: Vec<StageTiming>,
}

impl Stages {
    fn run<T>(&mut self, stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f().map_err(|e| e.in_stage(stage))?;
        self.timings.push(StageTiming {
            stage: stage.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        Ok(out)
    }
}

/// Trains on all database descriptors of a real dataset, or on the generator's
/// hierarchy for synthetic runs.
pub fn load_or_train_tree(config: &ExperimentConfig, dataset: Option<&Dataset>) -> Result<VocabularyTree> {
    if let Some(path) = &config.dataset.tree {
        return read_tree(path);
    }
    let training = match dataset {
        Some(ds) => {
            let mut pooled: Option<DescriptorSet> = None;
            for (_, set) in ds.database() {
                match &mut pooled {
                    Some(p) => p.extend(set)?,
                    None => pooled = Some(set.clone()),
                }
            }
            pooled.ok_or(Error::EmptyInput("database images"))?
        }
        None => training_descriptors(&config.dataset.training)?,
    };
    train_vocabulary(&training, config.tree)
}

/// Loads the manifest when configured, otherwise generates the synthetic benchmark.
pub fn load_dataset(config: &ExperimentConfig) -> Result<(VocabularyTree, Dataset)> {
    match &config.dataset.manifest {
        Some(path) => {
            let ds = ingest_dataset(path)?;
            let tree = load_or_train_tree(config, Some(&ds))?;
            Ok((tree, ds))
        }
        None => {
            let tree = load_or_train_tree(config, None)?;
            let ds = synthesize_dataset(&config.dataset.synthetic, &tree)?.to_dataset();
            Ok((tree, ds))
        }
    }
}

/// BoW histogram and raw VLAD of every descriptor set.
pub fn describe(tree: &VocabularyTree, sets: &[DescriptorSet], leaf_search: LeafSearch) -> Result<Vec<(BowHistogram, VladVector)>> {
    sets.par_iter()
        .map(|s| Ok((compute_bow(tree, s, leaf_search)?, compute_vlad(tree, s, Normalization::None)?)))
        .collect()
}

/// Builds the database index from the non-query rows of a dataset.
pub fn build_index(
    entries: &[ManifestEntry],
    described: &[(BowHistogram, VladVector)],
    model: &HashingModel,
    config: &ExperimentConfig,
) -> Result<DatabaseIndex> {
    let images = entries
        .iter()
        .zip(described)
        .filter(|(e, _)| !e.is_query())
        .map(|(e, (bow, vlad))| {
            Ok(IndexedImage {
                id: e.id,
                bow: Some(bow.clone()),
                vlad: Some(vlad.clone()),
                code: Some(model.encode(vlad)?),
                pq_code: None,
                gps: e.gps,
                category: e.category,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let index = DatabaseIndex::new(images, config.retrieval.normalization)?;
    let normalized: Vec<VladVector> = index
        .images()
        .iter()
        .map(|im| crate::aggregate::normalize_vlad(im.vlad.as_ref().expect("set above"), index.normalization()))
        .collect();
    let r = &config.retrieval;
    let pq = train_pq(&normalized, r.pq_subspaces, r.pq_bits, r.pq_seed)?;
    index.with_pq(pq)
}

/// A query after the mobile-side encoding and server-side reversal.
#[derive(Debug, Clone)]
pub struct PreparedQuery {
    pub id: ImageId,
    pub relevant: BTreeSet<ImageId>,
    pub bow: BowHistogram,
    pub vlad: VladVector,
    pub code: BinaryCode,
    /// Code reversed to raw residual space.
    pub approx: VladVector,
    pub gps: Option<GeoPoint>,
    pub category: Option<u32>,
}

/// Everything `run_pipeline` builds before answering queries.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub tree: VocabularyTree,
    pub model: HashingModel,
    pub index: DatabaseIndex,
    pub queries: Vec<PreparedQuery>,
    pub dim: usize,
}

impl Experiment {
    pub fn cue_context(&self, q: &PreparedQuery) -> Result<ContextTag> {
        Ok(ContextTag {
            gps: q.gps,
            category: q.category,
            binary_ranking: Some(rank_hamming(&self.index, &q.code)?),
        })
    }

    pub fn cads_candidates(&self, context: &ContextTag) -> Result<CandidateVWs> {
        let r = &self.config.reconstruction;
        CueRegistry::default().select(&r.cues, r.combine, &self.index, &self.tree, context, r.top_r)
    }

    pub fn reconstruct(&self, v: &VladVector, lambda: f64, candidates: Option<&CandidateVWs>) -> Result<Reconstruction> {
        reconstruct_bow(v, &self.tree, lambda, candidates, &self.config.reconstruction.lasso)
    }
}

fn prepare(config: &ExperimentConfig, stages: &mut Stages) -> Result<Experiment> {
    config.validate()?;
    let (tree, dataset) = stages.run("dataset", || load_dataset(config))?;
    let described = stages.run("aggregate", || describe(&tree, &dataset.descriptors, config.retrieval.leaf_search))?;
    let model = stages.run("hashing", || {
        let training: Vec<VladVector> = dataset
            .entries
            .iter()
            .zip(&described)
            .filter(|(e, _)| !e.is_query())
            .map(|(_, (_, v))| v.clone())
            .collect();
        train_hashing(&training, &config.hashing.variant, config.hashing.bits, config.hashing.seed)
    })?;
    let index = stages.run("index", || build_index(&dataset.entries, &described, &model, config))?;
    let queries = stages.run("encode", || {
        dataset
            .entries
            .iter()
            .zip(&described)
            .filter(|(e, _)| e.is_query())
            .map(|(e, (bow, vlad))| {
                let code = model.encode(vlad)?;
                let approx = model.approximate_vlad(&code)?;
                let relevant: BTreeSet<ImageId> = e.relevant.iter().flatten().copied().collect();
                if relevant.is_empty() {
                    return Err(Error::invalid(format!("query {} has no relevant images", e.id)));
                }
                Ok(PreparedQuery {
                    id: e.id,
                    relevant,
                    bow: bow.clone(),
                    vlad: vlad.clone(),
                    code,
                    approx,
                    gps: e.gps,
                    category: e.category,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    if queries.is_empty() {
        return Err(Error::EmptyInput("queries").in_stage("encode"));
    }
    let dim = tree.dim();
    Ok(Experiment {
        config: config.clone(),
        tree,
        model,
        index,
        queries,
        dim,
    })
}

pub fn prepare_experiment(config: &ExperimentConfig) -> Result<Experiment> {
    prepare(config, &mut Stages::default())
}

/// Rankings of one query under every requested mode, in `modes` order.
struct QueryOutcome {
    rankings: Vec<Ranking>,
    full_columns: usize,
    cads_columns: usize,
    unconverged: usize,
}

fn answer(exp: &Experiment, q: &PreparedQuery, modes: &[String]) -> Result<QueryOutcome> {
    let cfg = &exp.config.reconstruction;
    let index = &exp.index;
    let pq = index.pq().ok_or_else(|| Error::Missing("PQ codebooks".into()))?;
    let mut out = QueryOutcome {
        rankings: Vec::with_capacity(modes.len()),
        full_columns: 0,
        cads_columns: 0,
        unconverged: 0,
    };
    let needs_cads = modes.iter().any(|m| m == "recon-cads" || m == "brpk");
    let context = exp.cue_context(q)?;
    let cads = if needs_cads {
        let cand = exp.cads_candidates(&context)?;
        let rec = exp.reconstruct(&q.approx, cfg.lambda, Some(&cand))?;
        Some((cand, rec))
    } else {
        None
    };
    for mode in modes {
        let ranking = match mode.as_str() {
            "bow" => rank_bow(index, &q.bow)?,
            "vlad" => rank_vlad(index, &q.vlad)?,
            "hamming" => context.binary_ranking.clone().expect("set by cue_context"),
            "approx-vlad" => rank_vlad(index, &q.approx)?,
            "adc" => rank_adc(index, &q.vlad, pq)?,
            "approx-adc" => rank_adc(index, &q.approx, pq)?,
            "gps" => {
                let gps = q.gps.ok_or_else(|| Error::Missing(format!("query {} has no GPS", q.id)))?;
                rank_gps(index, gps)?
            }
            "recon-vlad" => rank_bow(index, &exp.reconstruct(&q.vlad, cfg.lambda, None)?.histogram)?,
            "recon-binary" => {
                let rec = exp.reconstruct(&q.approx, cfg.lambda, None)?;
                out.full_columns += rec.columns();
                out.unconverged += rec.subvectors.iter().filter(|s| !s.converged).count();
                rank_bow(index, &rec.histogram)?
            }
            "recon-cads" => {
                let (_, rec) = cads.as_ref().expect("computed above");
                out.cads_columns += rec.columns();
                out.unconverged += rec.subvectors.iter().filter(|s| !s.converged).count();
                rank_bow(index, &rec.histogram)?
            }
            "brpk" => {
                let (cand, rec) = cads.as_ref().expect("computed above");
                let prior_ranking = match cfg.prior_source {
                    PriorSource::Binary => context.binary_ranking.clone().expect("set by cue_context"),
                    PriorSource::Reconstructed => rank_bow(index, &rec.histogram)?,
                };
                let h0 = pseudo_bow(index, &prior_ranking, cfg.prior_top_r)?;
                let mass = rec.histogram.l1_mass();
                let opts = PriorOptions {
                    target_mass: (mass > 0.0).then_some(mass),
                };
                let refined = reconstruct_bow_with_prior(&q.approx, &exp.tree, &h0, cfg.alpha, Some(cand), &opts)?;
                rank_bow(index, &refined.histogram)?
            }
            other => return Err(Error::invalid(format!("unknown mode '{other}'"))),
        };
        out.rankings.push(ranking);
    }
    Ok(out)
}

/// Rankings of one query under each of `modes`, in order.
pub fn rank_query(exp: &Experiment, q: &PreparedQuery, modes: &[String]) -> Result<Vec<Ranking>> {
    Ok(answer(exp, q, modes)?.rankings)
}

/// Total reconstructed-VW count over the first `sweep.queries` queries for each λ.
pub fn lambda_sweep(exp: &Experiment) -> Result<Vec<SweepRow>> {
    let count = exp.config.sweep.queries.min(exp.queries.len());
    exp.config
        .sweep
        .lambdas
        .iter()
        .map(|&lambda| {
            let counts = exp.queries[..count]
                .par_iter()
                .map(|q| Ok(exp.reconstruct(&q.approx, lambda, None)?.histogram.len()))
                .collect::<Result<Vec<usize>>>()?;
            let total: usize = counts.iter().sum();
            Ok(SweepRow {
                lambda,
                visual_words: total,
                mean_per_query: total as f64 / count.max(1) as f64,
            })
        })
        .collect()
}

/// Device-side memory and transmission for this run's shapes plus the classic
/// 128-d, 10-branch reference configuration.
pub fn footprint_rows(exp: &Experiment) -> Vec<FootprintRow> {
    let t = &exp.tree;
    let (d, b, l, vl) = (t.dim(), t.branch(), t.levels(), t.vlad_level());
    let k = exp.model.bits();
    let mean_vws = exp.queries.iter().map(|q| q.bow.len()).sum::<usize>() / exp.queries.len().max(1);
    let mut rows = vec![
        bow_row(d, b, l, mean_vws),
        vlad_method_row("vlad", None, d, b, vl, 0),
        vlad_method_row(format!("{} ({k} bits)", exp.config.hashing.variant), Some(exp.model.layout()), d, b, vl, k),
    ];
    for (name, layout) in [("joint", Layout::Joint), ("independent", Layout::Independent), ("shared", Layout::Shared)] {
        if layout != exp.model.layout() {
            rows.push(vlad_method_row(format!("{name} ({k} bits)"), Some(layout), d, b, vl, k));
        }
    }
    rows.extend([
        vlad_method_row("reference: vlad 12,800-d", None, 128, 10, 2, 0),
        vlad_method_row("reference: joint (1,024 bits)", Some(Layout::Joint), 128, 10, 2, 1024),
        vlad_method_row("reference: independent (2,000 bits)", Some(Layout::Independent), 128, 10, 2, 2000),
        vlad_method_row("reference: shared (2,000 bits)", Some(Layout::Shared), 128, 10, 2, 2000),
        vlad_method_row("reference: shared (12,800 bits)", Some(Layout::Shared), 128, 10, 2, 12_800),
        FootprintRow {
            method: "reference: bow 1M tree, 3,350 VWs".into(),
            ..bow_row(128, 10, 6, 3350)
        },
    ]);
    rows
}

pub fn run_pipeline(config: &ExperimentConfig) -> Result<Report> {
    let mut stages = Stages::default();
    let exp = prepare(config, &mut stages)?;
    let modes = &config.modes;
    let outcomes = stages.run("query", || {
        exp.queries.par_iter().map(|q| answer(&exp, q, modes)).collect::<Result<Vec<_>>>()
    })?;
    let rows = stages.run("metrics", || {
        let relevance: Vec<BTreeSet<ImageId>> = exp.queries.iter().map(|q| q.relevant.clone()).collect();
        let references: Vec<ImageId> = relevance.iter().map(|r| *r.iter().next().expect("nonempty")).collect();
        modes
            .iter()
            .enumerate()
            .map(|(m, mode)| {
                let rankings: Vec<Ranking> = outcomes.iter().map(|o| o.rankings[m].clone()).collect();
                let recall = config
                    .retrieval
                    .recall_at
                    .iter()
                    .map(|&n| Ok((n, recall_at(&rankings, &references, n)?)))
                    .collect::<Result<Vec<_>>>()?;
                Ok(ModeRow {
                    mode: mode.clone(),
                    map: mean_average_precision(&rankings, &relevance)?,
                    recall,
                    ndcg: mean_ndcg(&rankings, &references)?,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let sweep = stages.run("sweep", || lambda_sweep(&exp))?;
    let nq = exp.queries.len() as f64;
    let stats = ReconstructionStats {
        lambda: config.reconstruction.lambda,
        subtree_columns: exp.tree.subtree_size(),
        mean_columns_full: outcomes.iter().map(|o| o.full_columns).sum::<usize>() as f64 / nq,
        mean_columns_cads: outcomes.iter().map(|o| o.cads_columns).sum::<usize>() as f64 / nq,
        unconverged_subvectors: outcomes.iter().map(|o| o.unconverged).sum(),
    };
    Ok(Report {
        config_hash: config.hash()?,
        dataset: DatasetSummary {
            database_images: exp.index.len(),
            queries: exp.queries.len(),
            dim: exp.dim,
            vlad_centers: exp.tree.num_vlad(),
            leaves: exp.tree.num_leaves(),
            hashing: exp.config.hashing.variant.clone(),
            bits: exp.model.bits(),
        },
        modes: rows,
        footprint: footprint_rows(&exp),
        lambda_sweep: sweep,
        reconstruction: stats,
        timings: stages.timings,
    })
}
