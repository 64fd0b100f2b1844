//! Closed-form memory and transmission accounting for the mobile client.
//!
//! All weights are counted as 4-byte floats.

use serde::{Deserialize, Serialize};

use super::{BinaryCode, Layout};
use crate::reconstruct::ContextTag;

const FLOAT_BYTES: u64 = 4;

/// Projection weights held on the device.
///
/// joint / random projection: `(D·N)·K·4`; independent: `D·K·4`;
/// shared: `D·ceil(K/N)·4`; sign binarization needs no weights. A joint
/// random rotation folds into the projection and adds nothing.
pub fn projection_bytes(layout: Layout, dim: usize, num_centers: usize, bits: usize) -> u64 {
    let (d, n, k) = (dim as u64, num_centers as u64, bits as u64);
    match layout {
        Layout::Joint | Layout::RandomProjection => d * n * k * FLOAT_BYTES,
        Layout::Independent => d * k * FLOAT_BYTES,
        Layout::Shared => d * k.div_ceil(n) * FLOAT_BYTES,
        Layout::SignBaseline => 0,
    }
}

/// Tree centers a device needs to reach `depth`: `D · Σ_{l=1..depth} branch^l · 4`.
pub fn tree_bytes(dim: usize, branch: usize, depth: usize) -> u64 {
    let mut nodes = 0u64;
    let mut level = 1u64;
    for _ in 0..depth {
        level *= branch as u64;
        nodes += level;
    }
    dim as u64 * nodes * FLOAT_BYTES
}

pub const GPS_BYTES: usize = 16;
pub const CATEGORY_BYTES: usize = 4;

/// Payload bytes for a code plus its context cues: `ceil(K/8) + 16·gps + 4·category`.
pub fn transmission_size(code: &BinaryCode, context: &ContextTag) -> usize {
    transmission_bytes(code.len(), context.gps.is_some(), context.category.is_some())
}

pub fn transmission_bytes(bits: usize, gps: bool, category: bool) -> usize {
    bits.div_ceil(8) + if gps { GPS_BYTES } else { 0 } + if category { CATEGORY_BYTES } else { 0 }
}

/// One row of a memory / transmission comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FootprintRow {
    pub method: String,
    pub transmission_bytes: u64,
    pub memory_bytes: u64,
}

/// Device memory and transmission for a VLAD-derived method:
/// projection weights plus the tree down to the VLAD level.
pub fn vlad_method_row(
    method: impl Into<String>,
    layout: Option<Layout>,
    dim: usize,
    branch: usize,
    vlad_level: usize,
    bits: usize,
) -> FootprintRow {
    let num_centers = (branch as u64).pow(vlad_level as u32) as usize;
    let projection = layout.map_or(0, |l| projection_bytes(l, dim, num_centers, bits));
    let transmission = match layout {
        Some(_) => bits.div_ceil(8) as u64,
        // raw float VLAD
        None => (dim * num_centers) as u64 * FLOAT_BYTES,
    };
    FootprintRow {
        method: method.into(),
        transmission_bytes: transmission,
        memory_bytes: projection + tree_bytes(dim, branch, vlad_level),
    }
}

/// Uncompressed BoW: full tree on the device, one 4-byte id per visual word sent.
pub fn bow_row(dim: usize, branch: usize, levels: usize, visual_words: usize) -> FootprintRow {
    FootprintRow {
        method: "bow".into(),
        transmission_bytes: visual_words as u64 * FLOAT_BYTES,
        memory_bytes: tree_bytes(dim, branch, levels),
    }
}
