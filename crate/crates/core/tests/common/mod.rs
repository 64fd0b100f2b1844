//! Independent reference implementations used by the integration tests.
//!
//! Nothing here calls into the library's numerical code; each routine is the
//! slow, obvious version of what the library does quickly.
#![allow(dead_code)]

use std::collections::BTreeSet;

use dehash_core::retrieval::{ImageId, Ranking};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

pub fn lasso_objective(d: &DMatrix<f64>, v: &DVector<f64>, lambda: f64, h: &DVector<f64>) -> f64 {
    (v - d * h).norm_squared() + lambda * h.sum()
}

/// Accelerated projected gradient on `||v - Dh||² + λ·1ᵀh`, `h >= 0`.
pub fn projected_gradient_lasso(d: &DMatrix<f64>, v: &DVector<f64>, lambda: f64, iters: usize) -> DVector<f64> {
    let t = d.ncols();
    let sigma = d.clone().svd(false, false).singular_values.max();
    let step = 1.0 / (2.0 * sigma * sigma).max(1e-12);
    let dtd = d.transpose() * d;
    let dtv = d.transpose() * v;
    let mut h = DVector::zeros(t);
    let mut y = h.clone();
    let mut momentum = 1.0f64;
    for _ in 0..iters {
        let grad = (&dtd * &y - &dtv) * 2.0 + DVector::from_element(t, lambda);
        let next = (&y - grad * step).map(|x| x.max(0.0));
        let m_next = (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt()) / 2.0;
        y = &next + (&next - &h) * ((momentum - 1.0) / m_next);
        h = next;
        momentum = m_next;
    }
    h
}

/// `argmin α₁||v - Dh||² + α₂||h - h0||²` through the T x T normal equations.
pub fn direct_tikhonov(d: &DMatrix<f64>, v: &DVector<f64>, h0: &DVector<f64>, a1: f64, a2: f64) -> DVector<f64> {
    let t = d.ncols();
    let lhs = d.transpose() * d * a1 + DMatrix::identity(t, t) * a2;
    let rhs = d.transpose() * v * a1 + h0 * a2;
    lhs.lu().solve(&rhs).expect("normal equations are positive definite")
}

/// Ranks ids by ascending score, ties by ascending id.
pub fn brute_ranking(mut scored: Vec<(u32, f64)>) -> Vec<u32> {
    scored.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
    scored.into_iter().map(|(id, _)| id).collect()
}

/// AP as the mean of precision at each relevant hit, over the relevant set size.
pub fn brute_average_precision(order: &[u32], relevant: &BTreeSet<u32>) -> f64 {
    if relevant.is_empty() {
        return 0.0;
    }
    let mut sum = 0.0;
    for (i, id) in order.iter().enumerate() {
        if relevant.contains(id) {
            let hits_so_far = order[..=i].iter().filter(|x| relevant.contains(x)).count();
            sum += hits_so_far as f64 / (i + 1) as f64;
        }
    }
    sum / relevant.len() as f64
}

pub fn brute_recall_at(orders: &[Vec<u32>], references: &[u32], n: usize) -> f64 {
    let found = orders
        .iter()
        .zip(references)
        .filter(|(o, r)| o.iter().take(n).any(|x| x == *r))
        .count();
    found as f64 / orders.len() as f64
}

pub fn ids(r: &Ranking) -> Vec<u32> {
    r.ids().map(|ImageId(i)| i).collect()
}

/// Spearman rank correlation of two orderings of the same id set.
pub fn spearman(a: &[u32], b: &[u32]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let mut pos = std::collections::HashMap::new();
    for (i, id) in b.iter().enumerate() {
        pos.insert(*id, i as f64);
    }
    let d2: f64 = a.iter().enumerate().map(|(i, id)| (i as f64 - pos[id]).powi(2)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

/// Great-circle distance in meters from the chord length between unit-sphere points.
pub fn chord_distance(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let p = |lat: f64, lon: f64| {
        let (la, lo) = (lat.to_radians(), lon.to_radians());
        [la.cos() * lo.cos(), la.cos() * lo.sin(), la.sin()]
    };
    let (a, b) = (p(lat1, lon1), p(lat2, lon2));
    let chord = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
    2.0 * 6_371_008.8 * (chord / 2.0).asin()
}

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix, eigenvalues descending.
pub fn jacobi_eigen(mut a: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut v = DMatrix::identity(n, n);
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[(i, j)].powi(2)).sum();
        if off < 1e-24 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].partial_cmp(&a[(i, i)]).unwrap());
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    (values, vectors)
}

/// Plain Lloyd iterations from the given starting centers; returns the final SSE.
pub fn lloyd_sse(points: &[Vec<f64>], mut centers: Vec<Vec<f64>>, iters: usize) -> f64 {
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
    let assign = |centers: &[Vec<f64>]| -> Vec<usize> {
        points
            .iter()
            .map(|p| {
                (0..centers.len())
                    .min_by(|&i, &j| dist(p, &centers[i]).partial_cmp(&dist(p, &centers[j])).unwrap().then(i.cmp(&j)))
                    .unwrap()
            })
            .collect()
    };
    for _ in 0..iters {
        let a = assign(&centers);
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = points.iter().zip(&a).filter(|(_, &k)| k == c).map(|(p, _)| p).collect();
            if members.is_empty() {
                continue;
            }
            for (j, x) in center.iter_mut().enumerate() {
                *x = members.iter().map(|m| m[j]).sum::<f64>() / members.len() as f64;
            }
        }
    }
    let a = assign(&centers);
    points.iter().zip(&a).map(|(p, &c)| dist(p, &centers[c])).sum()
}
