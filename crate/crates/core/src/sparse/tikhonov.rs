//! Closed-form solve of the prior-regularized reconstruction
//!
//! ```text
//! min_h  α₁ ||v - D h||² + α₂ ||h - h0||²
//! ```
//!
//! through `h* = α₁ Dᵀ (α₁ D Dᵀ + α₂ I)⁻¹ (v - D h0) + h0`, which only ever
//! factors a D x D matrix regardless of the number of columns.

use nalgebra::{DMatrix, DVector};

use super::Dictionary;
use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TikhonovWeights {
    /// α₁: weight of the data term.
    pub data: f64,
    /// α₂: weight of the prior term; must be positive.
    pub prior: f64,
}

impl TikhonovWeights {
    /// `α₁ = α / ||v||²`, `α₂ = (1 - α) / ||h0||²`.
    pub fn normalized(alpha: f64, v: &[f64], h0: &[f64]) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        let n1: f64 = v.iter().map(|x| x * x).sum();
        let n2: f64 = h0.iter().map(|x| x * x).sum();
        if n1 <= 0.0 {
            return Err(Error::invalid("zero data normalizer: ||v|| = 0"));
        }
        if n2 <= 0.0 {
            return Err(Error::invalid("zero prior normalizer: ||h0|| = 0"));
        }
        Ok(Self {
            data: alpha / n1,
            prior: (1.0 - alpha) / n2,
        })
    }
}

pub fn solve_tikhonov(dict: &Dictionary, v: &[f64], h0: &[f64], alpha: f64) -> Result<Vec<f64>> {
    let weights = TikhonovWeights::normalized(alpha, v, h0)?;
    solve_tikhonov_weighted(dict, v, h0, weights)
}

pub fn solve_tikhonov_weighted(dict: &Dictionary, v: &[f64], h0: &[f64], weights: TikhonovWeights) -> Result<Vec<f64>> {
    check_dim(dict.dim(), v.len())?;
    check_dim(dict.width(), h0.len())?;
    if !(weights.prior > 0.0) || !(weights.data >= 0.0) || !weights.data.is_finite() || !weights.prior.is_finite() {
        return Err(Error::invalid("Tikhonov weights must be finite with a positive prior weight"));
    }
    if v.iter().chain(h0).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("Tikhonov inputs"));
    }
    let d = dict.matrix();
    let dim = dict.dim();
    let residual = DVector::from_column_slice(v) - d * DVector::from_column_slice(h0);
    let system = d * d.transpose() * weights.data + DMatrix::<f64>::identity(dim, dim) * weights.prior;
    let chol = system
        .cholesky()
        .ok_or(Error::Singular("α₁DDᵀ + α₂I is not positive definite"))?;
    let y = chol.solve(&residual);
    let h = d.transpose() * y * weights.data;
    Ok(h.iter().zip(h0).map(|(a, b)| a + b).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_dict(n: usize) -> Dictionary {
        Dictionary::new(0, (0..n as u32).collect(), DMatrix::identity(n, n)).unwrap()
    }

    #[test]
    fn identity_half_weights_average() {
        let d = identity_dict(3);
        let v = [1.0, -2.0, 4.0];
        let h0 = [3.0, 0.0, 1.0];
        let w = TikhonovWeights { data: 0.5, prior: 0.5 };
        let h = solve_tikhonov_weighted(&d, &v, &h0, w).unwrap();
        assert_eq!(h, vec![2.0, -1.0, 2.5]);
    }

    #[test]
    fn normalizers_must_be_positive() {
        assert!(TikhonovWeights::normalized(0.5, &[0.0, 0.0], &[1.0]).is_err());
        assert!(TikhonovWeights::normalized(0.5, &[1.0], &[0.0]).is_err());
        assert!(TikhonovWeights::normalized(1.0, &[1.0], &[1.0]).is_err());
        assert!(TikhonovWeights::normalized(0.0, &[1.0], &[1.0]).is_err());
        let w = TikhonovWeights::normalized(0.25, &[3.0, 4.0], &[2.0]).unwrap();
        assert_eq!(w.data, 0.25 / 25.0);
        assert_eq!(w.prior, 0.75 / 4.0);
    }

    #[test]
    fn shape_errors() {
        let d = identity_dict(2);
        let w = TikhonovWeights { data: 1.0, prior: 1.0 };
        assert!(solve_tikhonov_weighted(&d, &[1.0], &[1.0, 1.0], w).is_err());
        assert!(solve_tikhonov_weighted(&d, &[1.0, 1.0], &[1.0], w).is_err());
        let w0 = TikhonovWeights { data: 1.0, prior: 0.0 };
        assert!(solve_tikhonov_weighted(&d, &[1.0, 1.0], &[1.0, 1.0], w0).is_err());
    }
}
