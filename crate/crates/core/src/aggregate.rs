//! BoW histograms and VLAD vectors built from descriptor sets.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::vocab::{DescriptorSet, LeafSearch, VocabularyTree};

/// Sparse non-negative histogram over the leaf vocabulary.
///
/// Only strictly positive entries are stored.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BowHistogram {
    vocab_size: usize,
    counts: BTreeMap<u32, f64>,
}

impl BowHistogram {
    pub fn new(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            counts: BTreeMap::new(),
        }
    }

    /// Builds a histogram from `(leaf, value)` pairs; non-positive values are dropped.
    pub fn from_entries(vocab_size: usize, entries: impl IntoIterator<Item = (u32, f64)>) -> Result<Self> {
        let mut h = Self::new(vocab_size);
        for (leaf, value) in entries {
            h.add(leaf, value)?;
        }
        Ok(h)
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn add(&mut self, leaf: u32, value: f64) -> Result<()> {
        if leaf as usize >= self.vocab_size {
            return Err(Error::InvalidId {
                id: leaf as usize,
                bound: self.vocab_size,
            });
        }
        if !value.is_finite() {
            return Err(Error::NonFinite("histogram entry"));
        }
        let slot = self.counts.entry(leaf).or_insert(0.0);
        *slot += value;
        if *slot <= 0.0 {
            self.counts.remove(&leaf);
        }
        Ok(())
    }

    pub fn get(&self, leaf: u32) -> f64 {
        self.counts.get(&leaf).copied().unwrap_or(0.0)
    }

    /// Entries in ascending leaf order.
    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.counts.iter().map(|(&k, &v)| (k, v))
    }

    pub fn support(&self) -> impl Iterator<Item = u32> + '_ {
        self.counts.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn l1_mass(&self) -> f64 {
        self.counts.values().sum()
    }

    pub fn l2_norm_squared(&self) -> f64 {
        self.counts.values().map(|v| v * v).sum()
    }

    pub fn l1_normalized(&self) -> Self {
        let mass = self.l1_mass();
        if mass <= 0.0 {
            return self.clone();
        }
        Self {
            vocab_size: self.vocab_size,
            counts: self.counts.iter().map(|(&k, &v)| (k, v / mass)).collect(),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = Self::new(self.vocab_size);
        for (k, v) in self.iter() {
            let s = v * factor;
            if s > 0.0 {
                out.counts.insert(k, s);
            }
        }
        out
    }

    /// Drops entries whose value is below `threshold`.
    pub fn pruned(mut self, threshold: f64) -> Self {
        self.counts.retain(|_, v| *v >= threshold);
        self
    }

    /// Integer histogram by rounding to the nearest integer (zeros dropped).
    pub fn rounded(&self) -> Self {
        let mut out = Self::new(self.vocab_size);
        for (k, v) in self.iter() {
            let r = v.round();
            if r > 0.0 {
                out.counts.insert(k, r);
            }
        }
        out
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut dense = vec![0.0; self.vocab_size];
        for (k, v) in self.iter() {
            dense[k as usize] = v;
        }
        dense
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    None,
    GlobalL2,
    #[default]
    IntraThenGlobalL2,
}

impl Normalization {
    pub fn as_u8(self) -> u8 {
        match self {
            Normalization::None => 0,
            Normalization::GlobalL2 => 1,
            Normalization::IntraThenGlobalL2 => 2,
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Normalization::None),
            1 => Some(Normalization::GlobalL2),
            2 => Some(Normalization::IntraThenGlobalL2),
            _ => None,
        }
    }
}

/// Concatenation of `num_centers` residual sub-vectors, each `dim` long.
#[derive(Debug, Clone, PartialEq)]
pub struct VladVector {
    dim: usize,
    num_centers: usize,
    values: Vec<f64>,
    normalization: Normalization,
}

impl VladVector {
    pub fn zeros(dim: usize, num_centers: usize) -> Self {
        Self {
            dim,
            num_centers,
            values: vec![0.0; dim * num_centers],
            normalization: Normalization::None,
        }
    }

    pub fn from_values(dim: usize, num_centers: usize, values: Vec<f64>, normalization: Normalization) -> Result<Self> {
        check_dim(dim * num_centers, values.len())?;
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("VLAD"));
        }
        Ok(Self {
            dim,
            num_centers,
            values,
            normalization,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn num_centers(&self) -> usize {
        self.num_centers
    }
    /// Total length D·N.
    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn normalization(&self) -> Normalization {
        self.normalization
    }
    pub fn subvector(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }
    pub fn subvectors(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.dim)
    }
    pub fn norm(&self) -> f64 {
        l2(&self.values)
    }
}

pub(crate) fn l2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn check_set(tree: &VocabularyTree, descriptors: &DescriptorSet) -> Result<()> {
    if descriptors.is_empty() {
        return Err(Error::EmptyInput("descriptor set"));
    }
    check_dim(tree.dim(), descriptors.dim())
}

fn widened(d: &[f32]) -> Vec<f64> {
    d.iter().map(|&x| x as f64).collect()
}

/// Counts descriptors per quantized leaf.
pub fn compute_bow(tree: &VocabularyTree, descriptors: &DescriptorSet, mode: LeafSearch) -> Result<BowHistogram> {
    check_set(tree, descriptors)?;
    let mut h = BowHistogram::new(tree.num_leaves());
    for d in descriptors.iter() {
        let t = tree.nearest_leaf(&widened(d), mode);
        h.add(t as u32, 1.0)?;
    }
    Ok(h)
}

/// Sums residuals to the assigned VLAD center per sub-vector, then normalizes.
pub fn compute_vlad(tree: &VocabularyTree, descriptors: &DescriptorSet, normalization: Normalization) -> Result<VladVector> {
    check_set(tree, descriptors)?;
    let dim = tree.dim();
    let mut v = VladVector::zeros(dim, tree.num_vlad());
    for d in descriptors.iter() {
        let d = widened(d);
        let i = tree.nearest_vlad(&d);
        let center = tree.vlad_center(i);
        for ((acc, x), c) in v.values[i * dim..(i + 1) * dim].iter_mut().zip(&d).zip(center) {
            *acc += x - c;
        }
    }
    Ok(normalize_vlad(&v, normalization))
}

pub fn normalize_vlad(v: &VladVector, mode: Normalization) -> VladVector {
    let mut out = v.clone();
    out.normalization = mode;
    match mode {
        Normalization::None => return out,
        Normalization::GlobalL2 => {}
        Normalization::IntraThenGlobalL2 => {
            for sub in out.values.chunks_exact_mut(out.dim) {
                let n = l2(sub);
                if n > 0.0 {
                    sub.iter_mut().for_each(|x| *x /= n);
                }
            }
        }
    }
    let n = l2(&out.values);
    if n > 0.0 {
        out.values.iter_mut().for_each(|x| *x /= n);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree() -> VocabularyTree {
        VocabularyTree::from_parts(
            2,
            2,
            2,
            1,
            vec![-1.0, 0.0, 1.0, 0.0],
            vec![-1.5, 0.5, -0.5, -0.5, 0.5, 0.5, 1.5, -0.5],
        )
        .unwrap()
    }

    #[test]
    fn bow_counts_copies() {
        let t = tree();
        let set = DescriptorSet::from_rows(2, &[[0.5f32, 0.5], [0.5, 0.5], [0.5, 0.5]]).unwrap();
        let h = compute_bow(&t, &set, LeafSearch::ExhaustiveSubtree).unwrap();
        assert_eq!(h.iter().collect::<Vec<_>>(), vec![(2, 3.0)]);
    }

    #[test]
    fn bow_one_per_leaf() {
        let t = tree();
        let rows: Vec<&[f32]> = t.leaf_centers().chunks(2).collect();
        let set = DescriptorSet::from_rows(2, &rows).unwrap();
        let h = compute_bow(&t, &set, LeafSearch::GreedyPath).unwrap();
        assert_eq!(h.to_dense(), vec![1.0; 4]);
    }

    #[test]
    fn empty_set_is_rejected() {
        let t = tree();
        let set = DescriptorSet::new(2, vec![]).unwrap();
        assert!(compute_bow(&t, &set, LeafSearch::GreedyPath).is_err());
        assert!(compute_vlad(&t, &set, Normalization::None).is_err());
        let wrong = DescriptorSet::new(3, vec![0.0; 3]).unwrap();
        assert!(matches!(compute_vlad(&t, &wrong, Normalization::None), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn residual_at_center_is_zero() {
        let t = tree();
        let set = DescriptorSet::from_rows(2, &[[1.0f32, 0.0]]).unwrap();
        let v = compute_vlad(&t, &set, Normalization::None).unwrap();
        assert!(v.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn symmetric_residuals_cancel() {
        let t = tree();
        let set = DescriptorSet::from_rows(2, &[[1.25f32, 0.5], [0.75, -0.5]]).unwrap();
        let v = compute_vlad(&t, &set, Normalization::None).unwrap();
        assert_eq!(v.subvector(1), &[0.0, 0.0]);
    }

    #[test]
    fn normalization_modes() {
        let zero = VladVector::zeros(2, 3);
        for mode in [Normalization::None, Normalization::GlobalL2, Normalization::IntraThenGlobalL2] {
            assert_eq!(normalize_vlad(&zero, mode).values(), zero.values());
        }
        let v = VladVector::from_values(2, 3, vec![0.0, 0.0, 3.0, 4.0, 0.0, 0.0], Normalization::None).unwrap();
        let n = normalize_vlad(&v, Normalization::IntraThenGlobalL2);
        assert!((l2(n.subvector(1)) - 1.0).abs() < 1e-15);
        assert!((n.norm() - 1.0).abs() < 1e-15);
        assert_eq!(normalize_vlad(&v, Normalization::None).values(), v.values());
    }

    #[test]
    fn histogram_rejects_out_of_range() {
        let mut h = BowHistogram::new(3);
        assert!(h.add(3, 1.0).is_err());
        h.add(1, 2.0).unwrap();
        h.add(1, -2.0).unwrap();
        assert!(h.is_empty());
    }
}
