//! Seeded Lloyd's k-means with k-means++ initialization.
//!
//! Points live in one flat row-major `f64` buffer and each run works on a
//! subset of rows given by index, so hierarchical training never copies the
//! data. Assignment ties go to the lowest center index.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub const MAX_ITERATIONS: usize = 50;
pub const MOVEMENT_TOLERANCE: f64 = 1e-6;

const PARALLEL_THRESHOLD: usize = 4096;

#[derive(Debug, Clone)]
pub struct KMeans {
    pub centers: Vec<f64>,
    /// Center index for each entry of the input subset, in input order.
    pub assignment: Vec<usize>,
    pub iterations: usize,
}

#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest center (lowest index wins ties) and its squared distance.
pub fn nearest(point: &[f64], centers: &[f64], dim: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.chunks_exact(dim).enumerate() {
        let d = squared_distance(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Mixes a node or sub-space id into a base seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn row(data: &[f64], dim: usize, i: usize) -> &[f64] {
    &data[i * dim..(i + 1) * dim]
}

fn assign(data: &[f64], dim: usize, subset: &[usize], centers: &[f64]) -> Vec<(usize, f64)> {
    if subset.len() >= PARALLEL_THRESHOLD {
        subset
            .par_iter()
            .map(|&i| nearest(row(data, dim, i), centers, dim))
            .collect()
    } else {
        subset
            .iter()
            .map(|&i| nearest(row(data, dim, i), centers, dim))
            .collect()
    }
}

fn plus_plus_init(data: &[f64], dim: usize, subset: &[usize], k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut centers = Vec::with_capacity(k * dim);
    let first = subset[rng.random_range(0..subset.len())];
    centers.extend_from_slice(row(data, dim, first));
    let mut d2: Vec<f64> = subset
        .iter()
        .map(|&i| squared_distance(row(data, dim, i), &centers[..dim]))
        .collect();
    while centers.len() < k * dim {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = None;
            for (pos, &w) in d2.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                if target < w {
                    chosen = Some(pos);
                    break;
                }
                target -= w;
            }
            // rounding can exhaust `target`; take the last positive weight
            chosen.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).unwrap())
        } else {
            // fewer distinct points than centers: duplicate the first center
            centers.extend_from_within(..dim);
            continue;
        };
        let start = centers.len();
        centers.extend_from_slice(row(data, dim, subset[pick]));
        let c = centers[start..].to_vec();
        for (pos, &i) in subset.iter().enumerate() {
            let d = squared_distance(row(data, dim, i), &c);
            if d < d2[pos] {
                d2[pos] = d;
            }
        }
    }
    centers
}

/// Runs k-means on the rows of `data` listed in `subset`.
///
/// `subset` must be nonempty and `k >= 1`.
pub fn kmeans(data: &[f64], dim: usize, subset: &[usize], k: usize, seed: u64) -> KMeans {
    assert!(!subset.is_empty() && k >= 1 && dim >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = plus_plus_init(data, dim, subset, k, &mut rng);
    let mut labels: Vec<usize> = vec![0; subset.len()];
    let mut iterations = 0;

    for iter in 0..MAX_ITERATIONS {
        iterations = iter + 1;
        let assigned = assign(data, dim, subset, &centers);
        let mut counts = vec![0usize; k];
        for (pos, &(j, _)) in assigned.iter().enumerate() {
            labels[pos] = j;
            counts[j] += 1;
        }
        let mut dist: Vec<f64> = assigned.iter().map(|&(_, d)| d).collect();

        // Re-seed empty clusters from the farthest point of the largest cluster.
        for j in 0..k {
            if counts[j] != 0 {
                continue;
            }
            let largest = (0..k).max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a))).unwrap();
            if counts[largest] < 2 {
                continue;
            }
            let mut far: Option<(usize, f64)> = None;
            for (pos, &l) in labels.iter().enumerate() {
                if l == largest && far.is_none_or(|(_, d)| dist[pos] > d) {
                    far = Some((pos, dist[pos]));
                }
            }
            let (pos, d) = far.unwrap();
            if d <= 0.0 {
                continue;
            }
            centers[j * dim..(j + 1) * dim].copy_from_slice(row(data, dim, subset[pos]));
            labels[pos] = j;
            dist[pos] = 0.0;
            counts[largest] -= 1;
            counts[j] = 1;
        }

        let mut sums = vec![0.0f64; k * dim];
        for (pos, &i) in subset.iter().enumerate() {
            let l = labels[pos];
            for (s, x) in sums[l * dim..(l + 1) * dim].iter_mut().zip(row(data, dim, i)) {
                *s += x;
            }
        }
        let mut movement: f64 = 0.0;
        for j in 0..k {
            if counts[j] == 0 {
                continue;
            }
            let inv = 1.0 / counts[j] as f64;
            let mut m2 = 0.0;
            for (c, s) in centers[j * dim..(j + 1) * dim].iter_mut().zip(&sums[j * dim..(j + 1) * dim]) {
                let next = s * inv;
                m2 += (next - *c) * (next - *c);
                *c = next;
            }
            movement = movement.max(m2.sqrt());
        }
        if movement < MOVEMENT_TOLERANCE {
            break;
        }
    }

    let assignment = assign(data, dim, subset, &centers).into_iter().map(|(j, _)| j).collect();
    KMeans {
        centers,
        assignment,
        iterations,
    }
}
