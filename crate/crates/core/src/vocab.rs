//! Hierarchical vocabulary linking coarse VLAD centers to their BoW leaf sub-trees.
//!
//! Nodes are numbered in level order, so the children of node `j` at level `l`
//! are `j*branch .. (j+1)*branch` at level `l+1`. Consequently the leaves under
//! VLAD center `i` form the contiguous range `i*S .. (i+1)*S` with
//! `S = branch^(levels - vlad_level)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::kmeans::{self, derive_seed, nearest, squared_distance};

/// A flat set of local descriptors sharing one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorSet {
    dim: usize,
    data: Vec<f32>,
}

impl DescriptorSet {
    pub fn new(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("descriptor dimension must be positive"));
        }
        if data.len() % dim != 0 {
            return Err(Error::invalid(format!(
                "{} values do not divide into {dim}-d descriptors",
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("descriptor"));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows<R: AsRef<[f32]>>(dim: usize, rows: &[R]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            check_dim(dim, r.as_ref().len())?;
            data.extend_from_slice(r.as_ref());
        }
        Self::new(dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f32] {
        &self.data
    }

    pub fn extend(&mut self, other: &DescriptorSet) -> Result<()> {
        check_dim(self.dim, other.dim)?;
        self.data.extend_from_slice(&other.data);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeParams {
    pub branch: usize,
    pub levels: usize,
    pub vlad_level: usize,
    pub seed: u64,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            branch: 8,
            levels: 3,
            vlad_level: 1,
            seed: 7,
        }
    }
}

/// How a descriptor is routed to a leaf once its VLAD center is known.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LeafSearch {
    /// Best child per level below the VLAD center.
    GreedyPath,
    /// Linear scan over every leaf in the VLAD center's sub-tree.
    #[default]
    ExhaustiveSubtree,
}

#[derive(Debug, Clone)]
pub struct VocabularyTree {
    dim: usize,
    branch: usize,
    levels: usize,
    vlad_level: usize,
    vlad_centers: Vec<f32>,
    leaf_centers: Vec<f32>,
    parent_of_leaf: Vec<u32>,
    vlad64: Vec<f64>,
    leaf64: Vec<f64>,
    /// Centers for levels strictly between the VLAD level and the leaves.
    inner: Vec<Vec<f64>>,
}

fn checked_pow(base: usize, exp: usize) -> Result<usize> {
    base.checked_pow(exp as u32)
        .ok_or_else(|| Error::invalid(format!("{base}^{exp} overflows")))
}

impl VocabularyTree {
    /// Assembles a tree from stored centers. Intermediate levels below the VLAD
    /// level are derived as the mean of their descendant leaves.
    pub fn from_parts(
        dim: usize,
        branch: usize,
        levels: usize,
        vlad_level: usize,
        vlad_centers: Vec<f32>,
        leaf_centers: Vec<f32>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("tree dimension must be positive"));
        }
        if branch < 2 {
            return Err(Error::invalid(format!("branch must be >= 2, got {branch}")));
        }
        if vlad_level > levels {
            return Err(Error::invalid(format!(
                "vlad_level {vlad_level} exceeds levels {levels}"
            )));
        }
        let n = checked_pow(branch, vlad_level)?;
        let m = checked_pow(branch, levels)?;
        check_dim(n * dim, vlad_centers.len())?;
        check_dim(m * dim, leaf_centers.len())?;
        if vlad_centers.iter().chain(&leaf_centers).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("tree centers"));
        }
        let span = m / n;
        let parent_of_leaf = (0..m).map(|t| (t / span) as u32).collect();
        let vlad64: Vec<f64> = vlad_centers.iter().map(|&x| x as f64).collect();
        let leaf64: Vec<f64> = leaf_centers.iter().map(|&x| x as f64).collect();

        // inner[k] holds level vlad_level + 1 + k; build bottom-up from the leaves.
        let inner_levels = levels.saturating_sub(vlad_level + 1);
        let mut inner: Vec<Vec<f64>> = Vec::with_capacity(inner_levels);
        for _ in 0..inner_levels {
            let below = inner.last().unwrap_or(&leaf64);
            let count = below.len() / dim / branch;
            let mut level = vec![0.0; count * dim];
            for j in 0..count {
                let out = &mut level[j * dim..(j + 1) * dim];
                for c in 0..branch {
                    let child = &below[(j * branch + c) * dim..(j * branch + c + 1) * dim];
                    for (o, x) in out.iter_mut().zip(child) {
                        *o += x;
                    }
                }
                for o in out.iter_mut() {
                    *o /= branch as f64;
                }
            }
            inner.push(level);
        }
        inner.reverse();

        Ok(Self {
            dim,
            branch,
            levels,
            vlad_level,
            vlad_centers,
            leaf_centers,
            parent_of_leaf,
            vlad64,
            leaf64,
            inner,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn branch(&self) -> usize {
        self.branch
    }
    pub fn levels(&self) -> usize {
        self.levels
    }
    pub fn vlad_level(&self) -> usize {
        self.vlad_level
    }
    /// Number of VLAD centers (N).
    pub fn num_vlad(&self) -> usize {
        self.vlad_centers.len() / self.dim
    }
    /// Number of leaves (M).
    pub fn num_leaves(&self) -> usize {
        self.leaf_centers.len() / self.dim
    }
    /// Leaves per VLAD sub-tree.
    pub fn subtree_size(&self) -> usize {
        self.num_leaves() / self.num_vlad()
    }
    pub fn vlad_centers(&self) -> &[f32] {
        &self.vlad_centers
    }
    pub fn leaf_centers(&self) -> &[f32] {
        &self.leaf_centers
    }
    pub fn parent_of_leaf(&self) -> &[u32] {
        &self.parent_of_leaf
    }
    pub fn vlad_center(&self, i: usize) -> &[f64] {
        &self.vlad64[i * self.dim..(i + 1) * self.dim]
    }
    pub fn leaf_center(&self, t: usize) -> &[f64] {
        &self.leaf64[t * self.dim..(t + 1) * self.dim]
    }
    pub fn parent(&self, leaf: usize) -> usize {
        self.parent_of_leaf[leaf] as usize
    }

    fn widen(&self, d: &[f32]) -> Result<Vec<f64>> {
        check_dim(self.dim, d.len())?;
        Ok(d.iter().map(|&x| x as f64).collect())
    }

    pub(crate) fn nearest_vlad(&self, d: &[f64]) -> usize {
        nearest(d, &self.vlad64, self.dim).0
    }

    pub(crate) fn nearest_leaf(&self, d: &[f64], mode: LeafSearch) -> usize {
        let v = self.nearest_vlad(d);
        let dim = self.dim;
        let span = self.subtree_size();
        match mode {
            LeafSearch::ExhaustiveSubtree => {
                let start = v * span;
                let slice = &self.leaf64[start * dim..(start + span) * dim];
                start + nearest(d, slice, dim).0
            }
            LeafSearch::GreedyPath => {
                let mut node = v;
                for level in &self.inner {
                    let first = node * self.branch;
                    let slice = &level[first * dim..(first + self.branch) * dim];
                    node = first + nearest(d, slice, dim).0;
                }
                if self.levels == self.vlad_level {
                    return node;
                }
                let first = node * self.branch;
                let slice = &self.leaf64[first * dim..(first + self.branch) * dim];
                first + nearest(d, slice, dim).0
            }
        }
    }

    /// Nearest VLAD center by Euclidean distance, ties to the lowest id.
    pub fn quantize_vlad(&self, d: &[f32]) -> Result<usize> {
        Ok(self.nearest_vlad(&self.widen(d)?))
    }

    /// Leaf under the descriptor's VLAD center chosen by `mode`.
    pub fn quantize_leaf(&self, d: &[f32], mode: LeafSearch) -> Result<usize> {
        Ok(self.nearest_leaf(&self.widen(d)?, mode))
    }

    pub fn subtree_leaves(&self, vlad_id: usize) -> Result<Vec<u32>> {
        if vlad_id >= self.num_vlad() {
            return Err(Error::InvalidId {
                id: vlad_id,
                bound: self.num_vlad(),
            });
        }
        Ok(self
            .parent_of_leaf
            .iter()
            .enumerate()
            .filter(|&(_, &p)| p as usize == vlad_id)
            .map(|(t, _)| t as u32)
            .collect())
    }
}

/// Trains the tree by recursive k-means, one k-means run per internal node.
pub fn train_vocabulary(descriptors: &DescriptorSet, params: TreeParams) -> Result<VocabularyTree> {
    let TreeParams {
        branch,
        levels,
        vlad_level,
        seed,
    } = params;
    if descriptors.is_empty() {
        return Err(Error::EmptyInput("training descriptors"));
    }
    if branch < 2 {
        return Err(Error::invalid(format!("branch must be >= 2, got {branch}")));
    }
    if vlad_level >= levels {
        return Err(Error::invalid(format!(
            "vlad_level {vlad_level} must be below levels {levels}"
        )));
    }
    checked_pow(branch, levels)?;
    let dim = descriptors.dim();
    let data: Vec<f64> = descriptors.as_flat().iter().map(|&x| x as f64).collect();

    let mut root = vec![0.0; dim];
    for row in data.chunks_exact(dim) {
        for (r, x) in root.iter_mut().zip(row) {
            *r += x;
        }
    }
    for r in &mut root {
        *r /= descriptors.len() as f64;
    }

    // (center, member rows) for every node of the current level
    let mut nodes: Vec<(Vec<f64>, Vec<usize>)> = vec![(root, (0..descriptors.len()).collect())];
    let mut vlad_centers: Vec<f32> = Vec::new();
    let mut level_offset: u64 = 0;
    for level in 0..levels {
        if level == vlad_level {
            vlad_centers = nodes.iter().flat_map(|(c, _)| c.iter().map(|&x| x as f32)).collect();
        }
        let offset = level_offset;
        nodes = nodes
            .into_par_iter()
            .enumerate()
            .flat_map_iter(|(j, (center, members))| split_node(&data, dim, center, members, branch, derive_seed(seed, offset + j as u64)))
            .collect();
        level_offset += checked_pow(branch, level).unwrap_or(0) as u64;
    }
    let leaf_centers = nodes.iter().flat_map(|(c, _)| c.iter().map(|&x| x as f32)).collect();
    VocabularyTree::from_parts(dim, branch, levels, vlad_level, vlad_centers, leaf_centers)
}

fn split_node(
    data: &[f64],
    dim: usize,
    center: Vec<f64>,
    members: Vec<usize>,
    branch: usize,
    seed: u64,
) -> Vec<(Vec<f64>, Vec<usize>)> {
    if members.is_empty() {
        return (0..branch).map(|_| (center.clone(), Vec::new())).collect();
    }
    let km = kmeans::kmeans(data, dim, &members, branch, seed);
    let mut children: Vec<(Vec<f64>, Vec<usize>)> = km
        .centers
        .chunks_exact(dim)
        .map(|c| (c.to_vec(), Vec::new()))
        .collect();
    for (&i, &a) in members.iter().zip(&km.assignment) {
        children[a].1.push(i);
    }
    children
}

/// Within-cluster sum of squared distances of `points` to their nearest leaf.
pub fn leaf_sse(tree: &VocabularyTree, points: &DescriptorSet) -> f64 {
    points
        .iter()
        .map(|p| {
            let d: Vec<f64> = p.iter().map(|&x| x as f64).collect();
            let t = tree.nearest_leaf(&d, LeafSearch::ExhaustiveSubtree);
            squared_distance(&d, tree.leaf_center(t))
        })
        .sum()
}
