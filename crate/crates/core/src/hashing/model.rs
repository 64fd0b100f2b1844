use serde::{Deserialize, Serialize};

use super::BinaryCode;
use crate::aggregate::{Normalization, VladVector};
use crate::error::{check_dim, Error, Result};

/// Projection layout of a hashing model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Layout {
    /// One (D·N) x K projection over the whole VLAD.
    Joint,
    /// One D x (K/N) projection per sub-vector.
    Independent,
    /// A single D x (K/N) projection reused by every sub-vector.
    Shared,
    /// Sign of each VLAD component; K = D·N.
    SignBaseline,
    /// Gaussian (D·N) x K projection; no reversal.
    RandomProjection,
}

impl Layout {
    pub fn as_u8(self) -> u8 {
        match self {
            Layout::Joint => 0,
            Layout::Independent => 1,
            Layout::Shared => 2,
            Layout::SignBaseline => 3,
            Layout::RandomProjection => 4,
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        Some(match v {
            0 => Layout::Joint,
            1 => Layout::Independent,
            2 => Layout::Shared,
            3 => Layout::SignBaseline,
            4 => Layout::RandomProjection,
            _ => return None,
        })
    }

    pub fn is_split(self) -> bool {
        matches!(self, Layout::Independent | Layout::Shared)
    }

    /// Length of the stored mean vector.
    pub fn mean_len(self, dim: usize, num_centers: usize) -> usize {
        match self {
            Layout::Shared => dim,
            _ => dim * num_centers,
        }
    }

    /// Number of stored projection weights.
    pub fn projection_len(self, dim: usize, num_centers: usize, bits: usize) -> usize {
        match self {
            Layout::Joint | Layout::RandomProjection => dim * num_centers * bits,
            Layout::Independent => dim * bits,
            Layout::Shared => dim * (bits / num_centers),
            Layout::SignBaseline => 0,
        }
    }
}

/// Trained binary hashing model.
///
/// Parameters are held as `f32` (the on-disk precision); arithmetic is done in `f64`.
/// Projection storage is row-major:
/// joint / random: `(D·N) x K`; independent: N blocks of `D x (K/N)`;
/// shared: one `D x (K/N)` block; rotation: `K x K`.
#[derive(Debug, Clone, PartialEq)]
pub struct HashingModel {
    layout: Layout,
    dim: usize,
    num_centers: usize,
    bits: usize,
    mean: Vec<f32>,
    projection: Vec<f32>,
    rotation: Option<Vec<f32>>,
    reversal_scales: Vec<f32>,
}

impl HashingModel {
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        layout: Layout,
        dim: usize,
        num_centers: usize,
        bits: usize,
        mean: Vec<f32>,
        projection: Vec<f32>,
        rotation: Option<Vec<f32>>,
        reversal_scales: Vec<f32>,
    ) -> Result<Self> {
        if dim == 0 || num_centers == 0 || bits == 0 {
            return Err(Error::invalid("hashing model dimensions must be positive"));
        }
        if layout.is_split() && bits % num_centers != 0 {
            return Err(Error::invalid(format!("K = {bits} is not divisible by N = {num_centers}")));
        }
        if layout == Layout::SignBaseline && bits != dim * num_centers {
            return Err(Error::invalid("sign binarization needs K = D·N"));
        }
        check_dim(layout.mean_len(dim, num_centers), mean.len())?;
        check_dim(layout.projection_len(dim, num_centers, bits), projection.len())?;
        check_dim(bits, reversal_scales.len())?;
        if let Some(r) = &rotation {
            if layout != Layout::Joint {
                return Err(Error::invalid("rotation is only supported for the joint layout"));
            }
            check_dim(bits * bits, r.len())?;
        }
        let all = mean
            .iter()
            .chain(&projection)
            .chain(rotation.iter().flatten())
            .chain(&reversal_scales);
        if all.into_iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("hashing model"));
        }
        if reversal_scales.iter().any(|&s| s <= 0.0) {
            return Err(Error::invalid("reversal scales must be positive"));
        }
        Ok(Self {
            layout,
            dim,
            num_centers,
            bits,
            mean,
            projection,
            rotation,
            reversal_scales,
        })
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn num_centers(&self) -> usize {
        self.num_centers
    }
    pub fn bits(&self) -> usize {
        self.bits
    }
    /// Bits per sub-vector for split layouts.
    pub fn block_bits(&self) -> usize {
        self.bits / self.num_centers
    }
    pub fn mean(&self) -> &[f32] {
        &self.mean
    }
    pub fn projection(&self) -> &[f32] {
        &self.projection
    }
    pub fn rotation(&self) -> Option<&[f32]> {
        self.rotation.as_deref()
    }
    pub fn reversal_scales(&self) -> &[f32] {
        &self.reversal_scales
    }

    /// Real-valued (pre-sign) outputs `Q Wᵀ (x - mean)` per bit.
    pub fn project(&self, v: &VladVector) -> Result<Vec<f64>> {
        check_dim(self.dim * self.num_centers, v.len())?;
        check_dim(self.dim, v.dim())?;
        let x = v.values();
        let k = self.bits;
        let out = match self.layout {
            Layout::Joint | Layout::RandomProjection => {
                let mut y = vec![0.0; k];
                for (r, (&xi, &mi)) in x.iter().zip(&self.mean).enumerate() {
                    let c = xi - mi as f64;
                    if c == 0.0 {
                        continue;
                    }
                    for (yj, &w) in y.iter_mut().zip(&self.projection[r * k..(r + 1) * k]) {
                        *yj += c * w as f64;
                    }
                }
                match &self.rotation {
                    Some(q) => (0..k)
                        .map(|i| q[i * k..(i + 1) * k].iter().zip(&y).map(|(&a, b)| a as f64 * b).sum())
                        .collect(),
                    None => y,
                }
            }
            Layout::Independent | Layout::Shared => {
                let b = self.block_bits();
                let d = self.dim;
                let mut y = vec![0.0; k];
                for i in 0..self.num_centers {
                    let (w, mean) = self.block(i);
                    let sub = &x[i * d..(i + 1) * d];
                    let out = &mut y[i * b..(i + 1) * b];
                    for r in 0..d {
                        let c = sub[r] - mean[r] as f64;
                        if c == 0.0 {
                            continue;
                        }
                        for (o, &wv) in out.iter_mut().zip(&w[r * b..(r + 1) * b]) {
                            *o += c * wv as f64;
                        }
                    }
                }
                y
            }
            Layout::SignBaseline => x.iter().zip(&self.mean).map(|(&a, &m)| a - m as f64).collect(),
        };
        Ok(out)
    }

    fn block(&self, i: usize) -> (&[f32], &[f32]) {
        let d = self.dim;
        let b = self.block_bits();
        match self.layout {
            Layout::Independent => (&self.projection[i * d * b..(i + 1) * d * b], &self.mean[i * d..(i + 1) * d]),
            Layout::Shared => (&self.projection[..], &self.mean[..]),
            _ => unreachable!("block() on a non-split layout"),
        }
    }

    /// `bit_k = (sgn(p_k) + 1) / 2` with `sgn(0)` taken as positive.
    pub fn encode(&self, v: &VladVector) -> Result<BinaryCode> {
        Ok(BinaryCode::from_bits(self.project(v)?.into_iter().map(|p| p >= 0.0)))
    }

    /// Maps a code back to raw VLAD space:
    /// `mean + W Qᵀ diag(scales) (2b - 1)`, per block for split layouts.
    pub fn approximate_vlad(&self, code: &BinaryCode) -> Result<VladVector> {
        check_dim(self.bits, code.len())?;
        let signed: Vec<f64> = code
            .iter()
            .zip(&self.reversal_scales)
            .map(|(b, &s)| if b { s as f64 } else { -(s as f64) })
            .collect();
        self.reverse_projection(&signed)
    }

    /// Maps real projection outputs back to raw space without binarization.
    pub fn reverse_projection(&self, outputs: &[f64]) -> Result<VladVector> {
        check_dim(self.bits, outputs.len())?;
        let k = self.bits;
        let d = self.dim;
        let total = d * self.num_centers;
        let values: Vec<f64> = match self.layout {
            Layout::RandomProjection => {
                return Err(Error::invalid("random-projection codes cannot be reversed"));
            }
            Layout::SignBaseline => outputs.iter().zip(&self.mean).map(|(s, &m)| m as f64 + s).collect(),
            Layout::Joint => {
                let y: Vec<f64> = match &self.rotation {
                    Some(q) => {
                        let mut y = vec![0.0; k];
                        for (i, &zi) in outputs.iter().enumerate() {
                            for (yj, &qv) in y.iter_mut().zip(&q[i * k..(i + 1) * k]) {
                                *yj += qv as f64 * zi;
                            }
                        }
                        y
                    }
                    None => outputs.to_vec(),
                };
                (0..total)
                    .map(|r| {
                        let w = &self.projection[r * k..(r + 1) * k];
                        self.mean[r] as f64 + w.iter().zip(&y).map(|(&a, b)| a as f64 * b).sum::<f64>()
                    })
                    .collect()
            }
            Layout::Independent | Layout::Shared => {
                let b = self.block_bits();
                let mut values = vec![0.0; total];
                for i in 0..self.num_centers {
                    let (w, mean) = self.block(i);
                    let y = &outputs[i * b..(i + 1) * b];
                    for r in 0..d {
                        values[i * d + r] = mean[r] as f64
                            + w[r * b..(r + 1) * b].iter().zip(y).map(|(&a, c)| a as f64 * c).sum::<f64>();
                    }
                }
                values
            }
        };
        VladVector::from_values(d, self.num_centers, values, Normalization::None)
    }

    /// Bytes of projection weights a mobile client holds for this model.
    pub fn projection_bytes(&self) -> u64 {
        super::footprint::projection_bytes(self.layout, self.dim, self.num_centers, self.bits)
    }
}
