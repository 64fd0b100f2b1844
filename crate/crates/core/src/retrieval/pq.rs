//! Product quantization codebooks and asymmetric distance tables.

use rayon::prelude::*;

use crate::aggregate::VladVector;
use crate::error::{check_dim, Error, Result};
use crate::kmeans::{derive_seed, kmeans, nearest, squared_distance};

#[derive(Debug, Clone, PartialEq)]
pub struct PqCodebooks {
    num_subspaces: usize,
    bits: u8,
    sub_dim: usize,
    /// `num_subspaces x 2^bits x sub_dim`
    centers: Vec<f64>,
}

impl PqCodebooks {
    pub fn from_parts(num_subspaces: usize, bits: u8, sub_dim: usize, centers: Vec<f64>) -> Result<Self> {
        if num_subspaces == 0 || sub_dim == 0 || !(1..=8).contains(&bits) {
            return Err(Error::invalid("PQ needs m >= 1, sub_dim >= 1 and 1 <= b <= 8"));
        }
        check_dim(num_subspaces * (1 << bits) * sub_dim, centers.len())?;
        if centers.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("PQ centers"));
        }
        Ok(Self {
            num_subspaces,
            bits,
            sub_dim,
            centers,
        })
    }

    pub fn num_subspaces(&self) -> usize {
        self.num_subspaces
    }
    pub fn bits(&self) -> u8 {
        self.bits
    }
    pub fn sub_dim(&self) -> usize {
        self.sub_dim
    }
    pub fn num_centers(&self) -> usize {
        1 << self.bits
    }
    pub fn total_dim(&self) -> usize {
        self.num_subspaces * self.sub_dim
    }
    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    fn subspace(&self, j: usize) -> &[f64] {
        let block = self.num_centers() * self.sub_dim;
        &self.centers[j * block..(j + 1) * block]
    }

    pub fn center(&self, j: usize, c: usize) -> &[f64] {
        &self.subspace(j)[c * self.sub_dim..(c + 1) * self.sub_dim]
    }

    pub fn encode(&self, x: &[f64]) -> Result<Vec<u8>> {
        check_dim(self.total_dim(), x.len())?;
        Ok(x.chunks_exact(self.sub_dim)
            .enumerate()
            .map(|(j, sub)| nearest(sub, self.subspace(j), self.sub_dim).0 as u8)
            .collect())
    }

    /// Per-subspace squared distances from the query to every center.
    pub fn distance_table(&self, query: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.total_dim(), query.len())?;
        let k = self.num_centers();
        let mut table = Vec::with_capacity(self.num_subspaces * k);
        for (j, sub) in query.chunks_exact(self.sub_dim).enumerate() {
            table.extend((0..k).map(|c| squared_distance(sub, self.center(j, c))));
        }
        Ok(table)
    }

    /// Sum of table lookups for one stored code.
    pub fn adc_distance(&self, table: &[f64], code: &[u8]) -> f64 {
        let k = self.num_centers();
        code.iter().enumerate().map(|(j, &c)| table[j * k + c as usize]).sum()
    }
}

/// Trains `m` sub-quantizers of `2^b` centers each on the given vectors.
pub fn train_pq(vlads: &[VladVector], m: usize, b: u8, seed: u64) -> Result<PqCodebooks> {
    let first = vlads.first().ok_or(Error::EmptyInput("PQ training set"))?;
    let total = first.len();
    if m == 0 || total % m != 0 {
        return Err(Error::invalid(format!("m = {m} must divide the VLAD length {total}")));
    }
    if !(1..=8).contains(&b) {
        return Err(Error::invalid(format!("b = {b} must lie in 1..=8")));
    }
    for v in vlads {
        check_dim(total, v.len())?;
    }
    let sub_dim = total / m;
    let k = 1usize << b;
    let subset: Vec<usize> = (0..vlads.len()).collect();
    let blocks: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|j| {
            let data: Vec<f64> = vlads
                .iter()
                .flat_map(|v| v.values()[j * sub_dim..(j + 1) * sub_dim].iter().copied())
                .collect();
            kmeans(&data, sub_dim, &subset, k, derive_seed(seed, j as u64)).centers
        })
        .collect();
    PqCodebooks::from_parts(m, b, sub_dim, blocks.concat())
}
