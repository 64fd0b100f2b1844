//! Non-negative LASSO by cyclic coordinate descent.
//!
//! Objective (no ½ on the quadratic term):
//!
//! ```text
//! f(h) = ||v - D h||² + λ Σ h_t,   h ≥ 0
//! ```
//!
//! so the per-coordinate soft threshold is `λ / 2` on a unit-norm column.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::Dictionary;
use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LassoOptions {
    /// Largest tolerated KKT violation at termination.
    pub tol: f64,
    /// Maximum number of full sweeps.
    pub max_iter: usize,
    /// Keep the objective after every sweep in [`LassoSolution::trace`].
    pub record_trace: bool,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 1000,
            record_trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoSolution {
    /// Dense coefficients aligned with the dictionary columns; all `>= 0`.
    pub coefficients: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
    pub kkt_violation: f64,
    pub trace: Vec<f64>,
}

impl LassoSolution {
    /// Nonzero `(column position, value)` pairs.
    pub fn nonzeros(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.coefficients.iter().copied().enumerate().filter(|&(_, c)| c > 0.0)
    }
}

pub fn nn_lasso_objective(dict: &Dictionary, v: &[f64], lambda: f64, h: &[f64]) -> Result<f64> {
    let dh = dict.apply(h)?;
    check_dim(dict.dim(), v.len())?;
    let quad: f64 = v.iter().zip(&dh).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(quad + lambda * h.iter().sum::<f64>())
}

/// Largest violation of the non-negative LASSO optimality conditions.
///
/// With `g_t = -2 d_tᵀ(v - Dh) + λ`: active coordinates need `g_t = 0`, zero
/// coordinates need `g_t >= 0`.
pub fn kkt_violation(dict: &Dictionary, v: &[f64], lambda: f64, h: &[f64]) -> Result<f64> {
    let dh = dict.apply(h)?;
    check_dim(dict.dim(), v.len())?;
    let r: Vec<f64> = v.iter().zip(&dh).map(|(a, b)| a - b).collect();
    Ok(violation_from_residual(dict, &r, lambda, h))
}

fn violation_from_residual(dict: &Dictionary, r: &[f64], lambda: f64, h: &[f64]) -> f64 {
    let m = dict.matrix();
    let mut worst: f64 = 0.0;
    for (t, &ht) in h.iter().enumerate() {
        let g = -2.0 * dot(m.column(t).as_slice(), r) + lambda;
        let viol = if ht > 0.0 { g.abs() } else { (-g).max(0.0) };
        worst = worst.max(viol);
    }
    worst
}

/// Sweeps between attempts to solve the current support exactly.
const POLISH_EVERY: usize = 10;

/// Active-set refinement on the current support `S`, in the spirit of
/// Lawson-Hanson. Coordinate descent crawls along strongly correlated columns;
/// this step jumps to the minimizer over `S` instead.
///
/// While the support columns are rank deficient, `h_S` moves along a null
/// direction of `D_S` (residual fixed, L1 term non-increasing) until one
/// coordinate reaches zero. Once they have full rank, the stationarity equations
/// `2 D_Sᵀ(D_S h_S - v) + λ = 0` are solved and `h_S` moves toward that
/// solution, stopping where a coordinate would turn negative. The objective is
/// convex along both moves, so it never increases.
fn polish_support(dict: &Dictionary, v: &[f64], lambda: f64, h: &mut [f64], r: &mut [f64]) {
    let m = dict.matrix();
    let target = DVector::from_column_slice(v);
    for _ in 0..h.len() {
        let support: Vec<usize> = (0..h.len()).filter(|&t| h[t] > 0.0).collect();
        if support.is_empty() {
            return;
        }
        let sub = m.select_columns(&support);
        let current = DVector::from_iterator(support.len(), support.iter().map(|&t| h[t]));
        let gram = sub.transpose() * &sub;
        let eig = gram.clone().symmetric_eigen();
        let top = eig.eigenvalues.amax();
        let (low, low_val) = eig.eigenvalues.argmin();
        let step_to = if top == 0.0 || low_val <= 1e-12 * top {
            let mut z = eig.eigenvectors.column(low).into_owned();
            if z.sum() < 0.0 || (z.sum() == 0.0 && z.max() <= 0.0) {
                z = -z;
            }
            // h_S - t z with the largest t keeping h_S >= 0
            let t = (0..z.len()).filter(|&i| z[i] > 0.0).map(|i| current[i] / z[i]).fold(f64::INFINITY, f64::min);
            if !t.is_finite() {
                return;
            }
            &current - z * t
        } else {
            let rhs = sub.transpose() * &target - DVector::from_element(support.len(), lambda / 2.0);
            let Some(chol) = gram.cholesky() else { return };
            let solved = chol.solve(&rhs);
            if solved.iter().any(|x| !x.is_finite()) {
                return;
            }
            let t = (0..solved.len())
                .filter(|&i| solved[i] <= 0.0)
                .map(|i| current[i] / (current[i] - solved[i]))
                .fold(1.0, f64::min);
            &current + (&solved - &current) * t
        };
        let before = dot(r, r) + lambda * current.sum();
        let mut next = step_to;
        // snap the coordinate that hit the boundary
        let blocked = next.iter().any(|&x| x <= 1e-14 * current.amax());
        for x in next.iter_mut() {
            if *x <= 1e-14 * current.amax() {
                *x = 0.0;
            }
        }
        let residual = &target - &sub * &next;
        let after = residual.norm_squared() + lambda * next.sum();
        if !(after <= before) {
            return;
        }
        for (&t, &x) in support.iter().zip(next.iter()) {
            h[t] = x;
        }
        r.copy_from_slice(residual.as_slice());
        if !blocked {
            return;
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn solve_nn_lasso(dict: &Dictionary, v: &[f64], lambda: f64, opts: &LassoOptions) -> Result<LassoSolution> {
    check_dim(dict.dim(), v.len())?;
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::invalid(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("LASSO target"));
    }
    let m = dict.matrix();
    let width = dict.width();
    let norms: Vec<f64> = (0..width).map(|t| m.column(t).norm_squared()).collect();
    let half = lambda / 2.0;
    let mut h = vec![0.0; width];
    let mut r = v.to_vec();
    let mut trace = Vec::new();
    let objective = |r: &[f64], h: &[f64]| dot(r, r) + lambda * h.iter().sum::<f64>();

    let mut violation = violation_from_residual(dict, &r, lambda, &h);
    let mut iterations = 0;
    if opts.record_trace {
        trace.push(objective(&r, &h));
    }
    while violation > opts.tol && iterations < opts.max_iter {
        iterations += 1;
        for t in 0..width {
            if norms[t] == 0.0 {
                continue;
            }
            let col = m.column(t);
            let col = col.as_slice();
            let old = h[t];
            let next = (old + (dot(col, &r) - half) / norms[t]).max(0.0);
            if next != old {
                let delta = next - old;
                for (ri, d) in r.iter_mut().zip(col) {
                    *ri -= delta * d;
                }
                h[t] = next;
            }
        }
        if iterations % POLISH_EVERY == 0 {
            polish_support(dict, v, lambda, &mut h, &mut r);
        }
        if opts.record_trace {
            trace.push(objective(&r, &h));
        }
        violation = violation_from_residual(dict, &r, lambda, &h);
    }

    Ok(LassoSolution {
        objective: objective(&r, &h),
        coefficients: h,
        iterations,
        converged: violation <= opts.tol,
        kkt_violation: violation,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn dict(rows: usize, cols: usize, data: &[f64]) -> Dictionary {
        Dictionary::new(0, (0..cols as u32).collect(), DMatrix::from_column_slice(rows, cols, data)).unwrap()
    }

    #[test]
    fn orthonormal_soft_threshold() {
        let d = dict(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let sol = solve_nn_lasso(&d, &[1.0, 0.0], 0.1, &LassoOptions::default()).unwrap();
        assert!((sol.coefficients[0] - 0.95).abs() < 1e-12);
        assert_eq!(sol.coefficients[1], 0.0);
        assert!(sol.converged);
    }

    #[test]
    fn large_lambda_kills_everything() {
        let d = dict(2, 3, &[1.0, 0.5, -0.2, 0.9, 0.3, 0.3]);
        let v = [0.7, -0.4];
        let bound = 2.0 * (0..3).map(|t| d.matrix().column(t).dot(&nalgebra::DVector::from_column_slice(&v)).abs()).fold(0.0, f64::max);
        let sol = solve_nn_lasso(&d, &v, bound, &LassoOptions::default()).unwrap();
        assert!(sol.coefficients.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn zero_lambda_recovers_exact_combination() {
        let d = dict(3, 2, &[1.0, 0.2, 0.0, 0.3, 1.0, 0.5]);
        let truth = [2.0, 0.5];
        let v = d.apply(&truth).unwrap();
        let opts = LassoOptions {
            tol: 1e-12,
            max_iter: 100_000,
            ..Default::default()
        };
        let sol = solve_nn_lasso(&d, &v, 0.0, &opts).unwrap();
        for (a, b) in sol.coefficients.iter().zip(truth) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let d = dict(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        assert!(solve_nn_lasso(&d, &[1.0], 0.1, &LassoOptions::default()).is_err());
        assert!(solve_nn_lasso(&d, &[1.0, f64::NAN], 0.1, &LassoOptions::default()).is_err());
        assert!(solve_nn_lasso(&d, &[1.0, 0.0], -1.0, &LassoOptions::default()).is_err());
    }

    #[test]
    fn iteration_cap_reports_nonconvergence() {
        let d = dict(2, 3, &[1.0, 0.0, 0.999, 0.05, 0.0, 1.0]);
        let opts = LassoOptions {
            tol: 1e-14,
            max_iter: 1,
            record_trace: false,
        };
        let sol = solve_nn_lasso(&d, &[1.0, 1.0], 0.0, &opts).unwrap();
        assert_eq!(sol.iterations, 1);
        assert!(!sol.converged);
    }

    #[test]
    fn zero_columns_stay_zero() {
        let d = dict(2, 2, &[0.0, 0.0, 1.0, 0.0]);
        let sol = solve_nn_lasso(&d, &[1.0, 0.0], 0.0, &LassoOptions::default()).unwrap();
        assert_eq!(sol.coefficients[0], 0.0);
        assert!((sol.coefficients[1] - 1.0).abs() < 1e-12);
    }
}
