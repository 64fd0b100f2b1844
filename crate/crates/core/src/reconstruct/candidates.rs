use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::aggregate::BowHistogram;
use crate::error::{Error, Result};
use crate::retrieval::{rank_gps, DatabaseIndex, GeoPoint, Ranking};
use crate::vocab::VocabularyTree;

/// Side information shipped with (or derived from) a query code.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ContextTag {
    pub gps: Option<GeoPoint>,
    pub category: Option<u32>,
    /// Ranking produced by the query's own binary code; never transmitted.
    pub binary_ranking: Option<Ranking>,
}

/// Admissible leaf ids per VLAD center. An empty set means the sub-vector is skipped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateVWs {
    sets: Vec<BTreeSet<u32>>,
}

impl CandidateVWs {
    pub fn empty(num_centers: usize) -> Self {
        Self {
            sets: vec![BTreeSet::new(); num_centers],
        }
    }

    /// Every leaf of every sub-tree.
    pub fn full(tree: &VocabularyTree) -> Self {
        let mut c = Self::empty(tree.num_vlad());
        for t in 0..tree.num_leaves() {
            c.sets[tree.parent(t)].insert(t as u32);
        }
        c
    }

    pub fn from_histograms<'a>(tree: &VocabularyTree, hists: impl IntoIterator<Item = &'a BowHistogram>) -> Result<Self> {
        let mut c = Self::empty(tree.num_vlad());
        for h in hists {
            for t in h.support() {
                if t as usize >= tree.num_leaves() {
                    return Err(Error::InvalidId {
                        id: t as usize,
                        bound: tree.num_leaves(),
                    });
                }
                c.sets[tree.parent(t as usize)].insert(t);
            }
        }
        Ok(c)
    }

    pub fn num_centers(&self) -> usize {
        self.sets.len()
    }
    pub fn get(&self, vlad_id: usize) -> &BTreeSet<u32> {
        &self.sets[vlad_id]
    }
    pub fn sets(&self) -> &[BTreeSet<u32>] {
        &self.sets
    }
    pub fn total(&self) -> usize {
        self.sets.iter().map(BTreeSet::len).sum()
    }

    /// Adds `leaf` under `vlad_id`; the caller vouches for sub-tree membership.
    pub fn insert(&mut self, vlad_id: usize, leaf: u32) {
        self.sets[vlad_id].insert(leaf);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CombineMode {
    Union,
    Intersection,
    /// Intersection per center, falling back to the union where it is empty.
    #[default]
    IntersectionElseUnion,
}

pub fn combine_candidates(cues: &[CandidateVWs], mode: CombineMode) -> Result<CandidateVWs> {
    let first = cues.first().ok_or(Error::EmptyInput("candidate cues"))?;
    let n = first.num_centers();
    if let Some(bad) = cues.iter().find(|c| c.num_centers() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: bad.num_centers(),
        });
    }
    let mut out = CandidateVWs::empty(n);
    for (i, slot) in out.sets.iter_mut().enumerate() {
        let union = || cues.iter().flat_map(|c| c.sets[i].iter().copied()).collect::<BTreeSet<u32>>();
        let inter = || {
            let mut acc = first.sets[i].clone();
            for c in &cues[1..] {
                acc.retain(|t| c.sets[i].contains(t));
            }
            acc
        };
        *slot = match mode {
            CombineMode::Union => union(),
            CombineMode::Intersection => inter(),
            CombineMode::IntersectionElseUnion => {
                let s = inter();
                if s.is_empty() {
                    union()
                } else {
                    s
                }
            }
        };
    }
    Ok(out)
}

fn stored_bows<'a>(index: &'a DatabaseIndex, ids: impl Iterator<Item = usize> + 'a) -> impl Iterator<Item = Result<&'a BowHistogram>> + 'a {
    ids.map(move |pos| {
        let im = index.image(pos);
        im.bow
            .as_ref()
            .ok_or_else(|| Error::Missing(format!("database image {} has no stored BoW", im.id)))
    })
}

fn from_ranking(index: &DatabaseIndex, tree: &VocabularyTree, ranking: &Ranking, top_r: usize) -> Result<CandidateVWs> {
    if ranking.is_empty() {
        return Err(Error::EmptyInput("ranking"));
    }
    let positions = ranking
        .top(top_r)
        .iter()
        .map(|e| index.position(e.id).ok_or_else(|| Error::Missing(format!("ranked image {} not in index", e.id))))
        .collect::<Result<Vec<_>>>()?;
    let hists = stored_bows(index, positions.into_iter()).collect::<Result<Vec<_>>>()?;
    CandidateVWs::from_histograms(tree, hists)
}

/// VWs of the `top_r` images ranked first by the query's binary code.
pub fn candidates_from_binary(index: &DatabaseIndex, tree: &VocabularyTree, binary_ranking: &Ranking, top_r: usize) -> Result<CandidateVWs> {
    from_ranking(index, tree, binary_ranking, top_r)
}

/// VWs of the `top_r` geographically nearest database images.
pub fn candidates_from_gps(index: &DatabaseIndex, tree: &VocabularyTree, query_gps: GeoPoint, top_r: usize) -> Result<CandidateVWs> {
    if let Some(im) = index.images().iter().find(|im| im.gps.is_none()) {
        return Err(Error::Missing(format!("database image {} has no GPS", im.id)));
    }
    from_ranking(index, tree, &rank_gps(index, query_gps)?, top_r)
}

/// VWs over every database image labeled `category`.
pub fn candidates_from_category(index: &DatabaseIndex, tree: &VocabularyTree, category: u32) -> Result<CandidateVWs> {
    let members: Vec<usize> = (0..index.len()).filter(|&p| index.image(p).category == Some(category)).collect();
    if members.is_empty() {
        return Err(Error::invalid(format!("unknown category {category}")));
    }
    let hists = stored_bows(index, members.into_iter()).collect::<Result<Vec<_>>>()?;
    CandidateVWs::from_histograms(tree, hists)
}

/// One contextual cue that narrows the reconstruction dictionary.
pub trait CandidateCue: Send + Sync {
    fn name(&self) -> &'static str;
    fn candidates(&self, index: &DatabaseIndex, tree: &VocabularyTree, context: &ContextTag, top_r: usize) -> Result<CandidateVWs>;
}

pub struct BinaryCue;
pub struct GpsCue;
pub struct CategoryCue;

impl CandidateCue for BinaryCue {
    fn name(&self) -> &'static str {
        "binary"
    }
    fn candidates(&self, index: &DatabaseIndex, tree: &VocabularyTree, context: &ContextTag, top_r: usize) -> Result<CandidateVWs> {
        let ranking = context
            .binary_ranking
            .as_ref()
            .ok_or_else(|| Error::Missing("context has no binary ranking".into()))?;
        candidates_from_binary(index, tree, ranking, top_r)
    }
}

impl CandidateCue for GpsCue {
    fn name(&self) -> &'static str {
        "gps"
    }
    fn candidates(&self, index: &DatabaseIndex, tree: &VocabularyTree, context: &ContextTag, top_r: usize) -> Result<CandidateVWs> {
        let gps = context.gps.ok_or_else(|| Error::Missing("query has no GPS".into()))?;
        candidates_from_gps(index, tree, gps, top_r)
    }
}

impl CandidateCue for CategoryCue {
    fn name(&self) -> &'static str {
        "category"
    }
    fn candidates(&self, index: &DatabaseIndex, tree: &VocabularyTree, context: &ContextTag, _top_r: usize) -> Result<CandidateVWs> {
        let category = context.category.ok_or_else(|| Error::Missing("query has no category".into()))?;
        candidates_from_category(index, tree, category)
    }
}

#[derive(Clone)]
pub struct CueRegistry {
    cues: BTreeMap<&'static str, Arc<dyn CandidateCue>>,
}

impl Default for CueRegistry {
    fn default() -> Self {
        let mut reg = Self { cues: BTreeMap::new() };
        reg.register(Arc::new(BinaryCue));
        reg.register(Arc::new(GpsCue));
        reg.register(Arc::new(CategoryCue));
        reg
    }
}

impl CueRegistry {
    pub fn register(&mut self, cue: Arc<dyn CandidateCue>) {
        self.cues.insert(cue.name(), cue);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn CandidateCue>> {
        self.cues.get(name).cloned().ok_or_else(|| Error::UnknownStrategy {
            kind: "candidate cue",
            name: name.to_string(),
            available: self.names().join(", "),
        })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.cues.keys().copied().collect()
    }

    /// Evaluates the named cues and combines their candidate sets.
    pub fn select(
        &self,
        names: &[String],
        mode: CombineMode,
        index: &DatabaseIndex,
        tree: &VocabularyTree,
        context: &ContextTag,
        top_r: usize,
    ) -> Result<CandidateVWs> {
        if names.is_empty() {
            return Err(Error::invalid("a context-aware mode needs at least one cue"));
        }
        let sets = names
            .iter()
            .map(|n| self.get(n)?.candidates(index, tree, context, top_r))
            .collect::<Result<Vec<_>>>()?;
        combine_candidates(&sets, mode)
    }
}
