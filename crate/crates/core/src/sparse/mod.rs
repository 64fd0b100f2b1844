//! Numerical solvers for recovering BoW coefficients from VLAD sub-vectors.
//!
//! Both solvers work on a [`Dictionary`]: one column per admissible leaf,
//! holding `leaf_center - vlad_center`.

mod dictionary;
mod lasso;
mod tikhonov;

pub use dictionary::Dictionary;
pub use lasso::{kkt_violation, nn_lasso_objective, solve_nn_lasso, LassoOptions, LassoSolution};
pub use tikhonov::{solve_tikhonov, solve_tikhonov_weighted, TikhonovWeights};
