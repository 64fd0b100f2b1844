use std::collections::BTreeMap;
use std::sync::Arc;

use super::gps::{haversine, GeoPoint};
use super::index::{DatabaseIndex, ImageId};
use super::pq::PqCodebooks;
use crate::aggregate::{l2, normalize_vlad, BowHistogram, VladVector};
use crate::error::{check_dim, Error, Result};
use crate::hashing::BinaryCode;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ranked {
    pub id: ImageId,
    pub score: f64,
}

/// Database images ordered best first by ascending distance; ties by ascending id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Ranking {
    entries: Vec<Ranked>,
    /// Set when the query carried no usable signal and the order is by id only.
    pub degenerate: bool,
}

impl Ranking {
    pub fn from_scored(mut scored: Vec<(ImageId, f64)>) -> Self {
        scored.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        Self {
            entries: scored.into_iter().map(|(id, score)| Ranked { id, score }).collect(),
            degenerate: false,
        }
    }

    pub fn entries(&self) -> &[Ranked] {
        &self.entries
    }
    pub fn len(&self) -> usize {
        self.entries.len()
    }
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
    pub fn ids(&self) -> impl Iterator<Item = ImageId> + '_ {
        self.entries.iter().map(|e| e.id)
    }
    pub fn top(&self, n: usize) -> &[Ranked] {
        &self.entries[..n.min(self.entries.len())]
    }
    pub fn position(&self, id: ImageId) -> Option<usize> {
        self.entries.iter().position(|e| e.id == id)
    }
    pub fn truncated(mut self, n: usize) -> Self {
        self.entries.truncate(n);
        self
    }
}

/// The representations a query may carry; each ranking mode reads the one it needs.
#[derive(Debug, Clone, Default)]
pub struct Query {
    pub bow: Option<BowHistogram>,
    pub vlad: Option<VladVector>,
    pub code: Option<BinaryCode>,
    pub gps: Option<GeoPoint>,
}

fn missing(what: &str, mode: &str) -> Error {
    Error::Missing(format!("query has no {what} for ranking mode '{mode}'"))
}

fn stored_missing(id: ImageId, what: &str) -> Error {
    Error::Missing(format!("database image {id} has no stored {what}"))
}

/// Σ min(a_t, b_t) over shared words, accumulated in ascending word order.
fn shared_min(a: &BowHistogram, b: &BowHistogram) -> f64 {
    let mut ia = a.iter().peekable();
    let mut ib = b.iter().peekable();
    let mut s = 0.0;
    while let (Some(&(ka, va)), Some(&(kb, vb))) = (ia.peek(), ib.peek()) {
        match ka.cmp(&kb) {
            std::cmp::Ordering::Less => {
                ia.next();
            }
            std::cmp::Ordering::Greater => {
                ib.next();
            }
            std::cmp::Ordering::Equal => {
                s += va.min(vb);
                ia.next();
                ib.next();
            }
        }
    }
    s
}

fn mass(h: &BowHistogram) -> f64 {
    if h.is_empty() {
        0.0
    } else {
        1.0
    }
}

fn degenerate_by_id(index: &DatabaseIndex, score: f64) -> Ranking {
    let mut r = Ranking::from_scored(index.images().iter().map(|im| (im.id, score)).collect());
    r.degenerate = true;
    r
}

/// L1 distance between L1-normalized histograms, `|a| + |b| - 2 Σ min(a, b)`.
pub fn rank_bow(index: &DatabaseIndex, query: &BowHistogram) -> Result<Ranking> {
    if query.is_empty() {
        return Ok(degenerate_by_id(index, 2.0));
    }
    let q = query.l1_normalized();
    let mut scored = Vec::with_capacity(index.len());
    for (pos, im) in index.images().iter().enumerate() {
        let h = index.normalized_bow(pos).ok_or_else(|| stored_missing(im.id, "BoW"))?;
        scored.push((im.id, mass(&q) + mass(h) - 2.0 * shared_min(&q, h)));
    }
    Ok(Ranking::from_scored(scored))
}

/// Same distances as [`rank_bow`], accumulated through the inverted file.
pub fn rank_bow_inverted(index: &DatabaseIndex, query: &BowHistogram) -> Result<Ranking> {
    if query.is_empty() {
        return Ok(degenerate_by_id(index, 2.0));
    }
    let q = query.l1_normalized();
    let mut acc = vec![0.0f64; index.len()];
    let inv = index.inverted_file();
    for (word, w) in q.iter() {
        for &(pos, v) in inv.postings(word) {
            acc[pos] += w.min(v);
        }
    }
    let mut scored = Vec::with_capacity(index.len());
    for (pos, im) in index.images().iter().enumerate() {
        let h = index.normalized_bow(pos).ok_or_else(|| stored_missing(im.id, "BoW"))?;
        scored.push((im.id, mass(&q) + mass(h) - 2.0 * acc[pos]));
    }
    Ok(Ranking::from_scored(scored))
}

/// Euclidean distance after applying the index normalization to both sides.
pub fn rank_vlad(index: &DatabaseIndex, query: &VladVector) -> Result<Ranking> {
    let q = normalize_vlad(query, index.normalization());
    let mut scored = Vec::with_capacity(index.len());
    for (pos, im) in index.images().iter().enumerate() {
        let v = index.normalized_vlad(pos).ok_or_else(|| stored_missing(im.id, "VLAD"))?;
        check_dim(v.len(), q.len())?;
        let d: Vec<f64> = q.values().iter().zip(v.values()).map(|(a, b)| a - b).collect();
        scored.push((im.id, l2(&d)));
    }
    Ok(Ranking::from_scored(scored))
}

pub fn rank_hamming(index: &DatabaseIndex, code: &BinaryCode) -> Result<Ranking> {
    let mut scored = Vec::with_capacity(index.len());
    for im in index.images() {
        let c = im.code.as_ref().ok_or_else(|| stored_missing(im.id, "binary code"))?;
        scored.push((im.id, c.hamming(code)? as f64));
    }
    Ok(Ranking::from_scored(scored))
}

/// Asymmetric distance: normalized uncompressed query against PQ-coded database.
pub fn rank_adc(index: &DatabaseIndex, query: &VladVector, codebooks: &PqCodebooks) -> Result<Ranking> {
    let q = normalize_vlad(query, index.normalization());
    let table = codebooks.distance_table(q.values())?;
    let mut scored = Vec::with_capacity(index.len());
    for im in index.images() {
        let code = im.pq_code.as_ref().ok_or_else(|| stored_missing(im.id, "PQ code"))?;
        check_dim(codebooks.num_subspaces(), code.len())?;
        scored.push((im.id, codebooks.adc_distance(&table, code)));
    }
    Ok(Ranking::from_scored(scored))
}

/// Haversine distance; images without GPS sort last.
pub fn rank_gps(index: &DatabaseIndex, query: GeoPoint) -> Result<Ranking> {
    let query = GeoPoint::new(query.lat, query.lon)?;
    Ok(Ranking::from_scored(
        index
            .images()
            .iter()
            .map(|im| (im.id, im.gps.map_or(f64::INFINITY, |g| haversine(query, g))))
            .collect(),
    ))
}

/// A ranking strategy selectable by name.
pub trait RankingMode: Send + Sync {
    fn name(&self) -> &'static str;
    fn rank(&self, index: &DatabaseIndex, query: &Query) -> Result<Ranking>;
}

pub struct BowL1;
pub struct BowL1Inverted;
pub struct VladL2;
pub struct Hamming;
pub struct Adc;
pub struct Gps;

impl RankingMode for BowL1 {
    fn name(&self) -> &'static str {
        "bow-l1"
    }
    fn rank(&self, index: &DatabaseIndex, query: &Query) -> Result<Ranking> {
        rank_bow(index, query.bow.as_ref().ok_or_else(|| missing("BoW", self.name()))?)
    }
}

impl RankingMode for BowL1Inverted {
    fn name(&self) -> &'static str {
        "bow-l1-inverted"
    }
    fn rank(&self, index: &DatabaseIndex, query: &Query) -> Result<Ranking> {
        rank_bow_inverted(index, query.bow.as_ref().ok_or_else(|| missing("BoW", self.name()))?)
    }
}

impl RankingMode for VladL2 {
    fn name(&self) -> &'static str {
        "vlad-l2"
    }
    fn rank(&self, index: &DatabaseIndex, query: &Query) -> Result<Ranking> {
        rank_vlad(index, query.vlad.as_ref().ok_or_else(|| missing("VLAD", self.name()))?)
    }
}

impl RankingMode for Hamming {
    fn name(&self) -> &'static str {
        "hamming"
    }
    fn rank(&self, index: &DatabaseIndex, query: &Query) -> Result<Ranking> {
        rank_hamming(index, query.code.as_ref().ok_or_else(|| missing("binary code", self.name()))?)
    }
}

impl RankingMode for Adc {
    fn name(&self) -> &'static str {
        "adc"
    }
    fn rank(&self, index: &DatabaseIndex, query: &Query) -> Result<Ranking> {
        let codebooks = index.pq().ok_or_else(|| Error::Missing("index has no trained PQ codebooks".into()))?;
        rank_adc(index, query.vlad.as_ref().ok_or_else(|| missing("VLAD", self.name()))?, codebooks)
    }
}

impl RankingMode for Gps {
    fn name(&self) -> &'static str {
        "gps"
    }
    fn rank(&self, index: &DatabaseIndex, query: &Query) -> Result<Ranking> {
        rank_gps(index, query.gps.ok_or_else(|| missing("GPS", self.name()))?)
    }
}

#[derive(Clone)]
pub struct RankingRegistry {
    modes: BTreeMap<&'static str, Arc<dyn RankingMode>>,
}

impl Default for RankingRegistry {
    fn default() -> Self {
        let mut reg = Self { modes: BTreeMap::new() };
        reg.register(Arc::new(BowL1));
        reg.register(Arc::new(BowL1Inverted));
        reg.register(Arc::new(VladL2));
        reg.register(Arc::new(Hamming));
        reg.register(Arc::new(Adc));
        reg.register(Arc::new(Gps));
        reg
    }
}

impl RankingRegistry {
    pub fn register(&mut self, mode: Arc<dyn RankingMode>) {
        self.modes.insert(mode.name(), mode);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn RankingMode>> {
        self.modes.get(name).cloned().ok_or_else(|| Error::UnknownStrategy {
            kind: "ranking mode",
            name: name.to_string(),
            available: self.names().join(", "),
        })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.modes.keys().copied().collect()
    }
}
