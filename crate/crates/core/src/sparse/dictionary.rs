use std::collections::BTreeSet;

use nalgebra::DMatrix;

use crate::error::{check_dim, Error, Result};
use crate::vocab::VocabularyTree;

#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    vlad_id: usize,
    column_ids: Vec<u32>,
    /// D x T, column t belongs to `column_ids[t]`.
    matrix: DMatrix<f64>,
}

impl Dictionary {
    pub fn new(vlad_id: usize, column_ids: Vec<u32>, matrix: DMatrix<f64>) -> Result<Self> {
        check_dim(column_ids.len(), matrix.ncols())?;
        let unique: BTreeSet<u32> = column_ids.iter().copied().collect();
        if unique.len() != column_ids.len() {
            return Err(Error::invalid("duplicate dictionary column ids"));
        }
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("dictionary"));
        }
        Ok(Self {
            vlad_id,
            column_ids,
            matrix,
        })
    }

    /// Every leaf of the VLAD center's sub-tree, in ascending leaf order.
    pub fn from_tree(tree: &VocabularyTree, vlad_id: usize) -> Result<Self> {
        let ids = tree.subtree_leaves(vlad_id)?;
        Self::from_tree_columns(tree, vlad_id, ids)
    }

    /// Dictionary over `ids`, each of which must lie in the sub-tree of `vlad_id`.
    pub fn from_tree_columns(tree: &VocabularyTree, vlad_id: usize, ids: Vec<u32>) -> Result<Self> {
        if vlad_id >= tree.num_vlad() {
            return Err(Error::InvalidId {
                id: vlad_id,
                bound: tree.num_vlad(),
            });
        }
        let dim = tree.dim();
        let center = tree.vlad_center(vlad_id);
        let mut data = Vec::with_capacity(dim * ids.len());
        for &t in &ids {
            if t as usize >= tree.num_leaves() || tree.parent(t as usize) != vlad_id {
                return Err(Error::invalid(format!("leaf {t} is not in the sub-tree of VLAD center {vlad_id}")));
            }
            data.extend(tree.leaf_center(t as usize).iter().zip(center).map(|(l, c)| l - c));
        }
        Self::new(vlad_id, ids, DMatrix::from_column_slice(dim, data.len() / dim.max(1), &data))
    }

    pub fn vlad_id(&self) -> usize {
        self.vlad_id
    }
    pub fn column_ids(&self) -> &[u32] {
        &self.column_ids
    }
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
    /// Feature dimension D.
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
    /// Number of columns T.
    pub fn width(&self) -> usize {
        self.matrix.ncols()
    }

    /// Positions of columns that are identically zero (leaf equal to its VLAD center).
    pub fn zero_columns(&self) -> Vec<usize> {
        (0..self.width())
            .filter(|&t| self.matrix.column(t).iter().all(|&x| x == 0.0))
            .collect()
    }

    /// Keeps only the columns whose ids appear in `allowed`, preserving order.
    pub fn restricted(&self, allowed: &BTreeSet<u32>) -> Self {
        let keep: Vec<usize> = (0..self.width())
            .filter(|&t| allowed.contains(&self.column_ids[t]))
            .collect();
        let ids = keep.iter().map(|&t| self.column_ids[t]).collect();
        let matrix = self.matrix.select_columns(keep.iter());
        Self {
            vlad_id: self.vlad_id,
            column_ids: ids,
            matrix,
        }
    }

    /// `D h` for dense coefficients `h`.
    pub fn apply(&self, h: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.width(), h.len())?;
        let mut out = vec![0.0; self.dim()];
        for (t, &c) in h.iter().enumerate() {
            if c != 0.0 {
                for (o, x) in out.iter_mut().zip(self.matrix.column(t).iter()) {
                    *o += c * x;
                }
            }
        }
        Ok(out)
    }
}
