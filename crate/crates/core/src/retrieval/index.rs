use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::gps::GeoPoint;
use super::pq::PqCodebooks;
use crate::aggregate::{normalize_vlad, BowHistogram, Normalization, VladVector};
use crate::error::{Error, Result};
use crate::hashing::BinaryCode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ImageId(pub u32);

impl fmt::Display for ImageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Everything stored for one database image.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IndexedImage {
    pub id: ImageId,
    pub bow: Option<BowHistogram>,
    /// Unnormalized residual sums.
    pub vlad: Option<VladVector>,
    pub code: Option<BinaryCode>,
    pub pq_code: Option<Vec<u8>>,
    pub gps: Option<GeoPoint>,
    pub category: Option<u32>,
}

impl Default for ImageId {
    fn default() -> Self {
        ImageId(0)
    }
}

/// Postings of L1-normalized BoW weights per visual word.
#[derive(Debug, Clone, Default)]
pub struct InvertedFile {
    postings: BTreeMap<u32, Vec<(usize, f64)>>,
}

impl InvertedFile {
    pub fn postings(&self, word: u32) -> &[(usize, f64)] {
        self.postings.get(&word).map_or(&[], Vec::as_slice)
    }

    pub fn num_words(&self) -> usize {
        self.postings.len()
    }
}

/// Immutable database of indexed images, ordered by ascending id.
#[derive(Debug, Clone)]
pub struct DatabaseIndex {
    images: Vec<IndexedImage>,
    normalization: Normalization,
    pq: Option<PqCodebooks>,
    normalized_bows: Vec<Option<BowHistogram>>,
    normalized_vlads: Vec<Option<VladVector>>,
    inverted: InvertedFile,
}

impl DatabaseIndex {
    pub fn new(mut images: Vec<IndexedImage>, normalization: Normalization) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::EmptyInput("database"));
        }
        images.sort_by_key(|im| im.id);
        if images.windows(2).any(|w| w[0].id == w[1].id) {
            return Err(Error::invalid("duplicate image ids in database"));
        }
        let normalized_bows: Vec<Option<BowHistogram>> =
            images.iter().map(|im| im.bow.as_ref().map(BowHistogram::l1_normalized)).collect();
        let normalized_vlads = images
            .iter()
            .map(|im| im.vlad.as_ref().map(|v| normalize_vlad(v, normalization)))
            .collect();
        let mut inverted = InvertedFile::default();
        for (pos, h) in normalized_bows.iter().enumerate() {
            for (word, w) in h.iter().flat_map(|h| h.iter()) {
                inverted.postings.entry(word).or_default().push((pos, w));
            }
        }
        Ok(Self {
            images,
            normalization,
            pq: None,
            normalized_bows,
            normalized_vlads,
            inverted,
        })
    }

    /// Attaches PQ codebooks and encodes every stored (normalized) VLAD.
    pub fn with_pq(mut self, codebooks: PqCodebooks) -> Result<Self> {
        for (im, v) in self.images.iter_mut().zip(&self.normalized_vlads) {
            let v = v
                .as_ref()
                .ok_or_else(|| Error::Missing(format!("image {} has no VLAD to PQ-encode", im.id)))?;
            im.pq_code = Some(codebooks.encode(v.values())?);
        }
        self.pq = Some(codebooks);
        Ok(self)
    }

    /// Attaches codebooks to an index whose images already carry PQ codes.
    pub fn with_pq_codes(mut self, codebooks: PqCodebooks) -> Result<Self> {
        for im in &self.images {
            match &im.pq_code {
                Some(c) if c.len() == codebooks.num_subspaces() => {}
                _ => return Err(Error::Missing(format!("image {} lacks a matching PQ code", im.id))),
            }
        }
        self.pq = Some(codebooks);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }
    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
    pub fn images(&self) -> &[IndexedImage] {
        &self.images
    }
    pub fn image(&self, pos: usize) -> &IndexedImage {
        &self.images[pos]
    }
    pub fn normalization(&self) -> Normalization {
        self.normalization
    }
    pub fn pq(&self) -> Option<&PqCodebooks> {
        self.pq.as_ref()
    }
    pub fn inverted_file(&self) -> &InvertedFile {
        &self.inverted
    }
    pub(crate) fn normalized_bow(&self, pos: usize) -> Option<&BowHistogram> {
        self.normalized_bows[pos].as_ref()
    }
    pub(crate) fn normalized_vlad(&self, pos: usize) -> Option<&VladVector> {
        self.normalized_vlads[pos].as_ref()
    }

    pub fn position(&self, id: ImageId) -> Option<usize> {
        self.images.binary_search_by_key(&id, |im| im.id).ok()
    }

    pub fn get(&self, id: ImageId) -> Option<&IndexedImage> {
        self.position(id).map(|p| &self.images[p])
    }

    pub fn categories(&self) -> BTreeSet<u32> {
        self.images.iter().filter_map(|im| im.category).collect()
    }
}
