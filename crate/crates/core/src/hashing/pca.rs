use nalgebra::{DMatrix, SymmetricEigen};

/// Principal directions of a row-major sample matrix.
#[derive(Debug, Clone)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// `dim x k`, column j is the j-th direction (unit norm).
    pub components: DMatrix<f64>,
    /// Descending covariance eigenvalues matching the components.
    pub eigenvalues: Vec<f64>,
}

/// Covariance `Xcᵀ Xc / n` of `rows` (n x dim).
pub fn covariance(rows: &[f64], dim: usize) -> (Vec<f64>, DMatrix<f64>) {
    let n = rows.len() / dim;
    let mut mean = vec![0.0; dim];
    for r in rows.chunks_exact(dim) {
        for (m, x) in mean.iter_mut().zip(r) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(n, dim, |i, j| rows[i * dim + j] - mean[j]);
    let cov = centered.tr_mul(&centered) / n as f64;
    (mean, cov)
}

/// Top-`k` eigenvectors of the sample covariance, each signed so that its
/// largest-magnitude entry is positive.
pub fn principal_components(rows: &[f64], dim: usize, k: usize) -> Pca {
    let (mean, cov) = covariance(rows, dim);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut components = DMatrix::zeros(dim, k);
    let mut eigenvalues = Vec::with_capacity(k);
    for (j, &src) in order.iter().take(k).enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        let pivot = col
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .unwrap_or(0);
        if col[pivot] < 0.0 {
            col.neg_mut();
        }
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
        components.set_column(j, &col);
        eigenvalues.push(eig.eigenvalues[src]);
    }
    Pca {
        mean,
        components,
        eigenvalues,
    }
}
