//! Binary hashing of VLAD vectors on the mobile side and code reversal on the server side.

mod code;
pub mod footprint;
mod model;
pub mod pca;
mod strategies;

pub use code::BinaryCode;
pub use footprint::{projection_bytes, transmission_size, tree_bytes, FootprintRow};
pub use model::{HashingModel, Layout};
pub use strategies::{
    random_rotation, train_hashing, HashingRegistry, HashingStrategy, IndependentPcah, JointPcah, RandomProjection,
    SharedPcah, SignBinarization,
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregate::{Normalization, VladVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vlads(count: usize, dim: usize, n: usize, seed: u64) -> Vec<VladVector> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                let vals = (0..dim * n).map(|j| rng.random_range(-1.0..1.0) * (1.0 + j as f64 * 0.1)).collect();
                VladVector::from_values(dim, n, vals, Normalization::None).unwrap()
            })
            .collect()
    }

    #[test]
    fn sign_of_identity_projection() {
        let model = HashingModel::from_parts(Layout::Joint, 2, 1, 2, vec![0.0, 0.0], vec![1.0, 0.0, 0.0, 1.0], None, vec![1.0, 1.0]).unwrap();
        let v = VladVector::from_values(2, 1, vec![2.0, -3.0], Normalization::None).unwrap();
        let code = model.encode(&v).unwrap();
        assert_eq!(code.iter().collect::<Vec<_>>(), vec![true, false]);
    }

    #[test]
    fn input_at_mean_maps_to_all_ones() {
        let data = random_vlads(40, 4, 3, 1);
        let model = train_hashing(&data, "shared", 6, 0).unwrap();
        let mean: Vec<f64> = (0..3).flat_map(|_| model.mean().iter().map(|&m| m as f64)).collect();
        let v = VladVector::from_values(4, 3, mean, Normalization::None).unwrap();
        // the f32 -> f64 mean reproduces exactly, so every projection is 0
        assert!(model.encode(&v).unwrap().iter().all(|b| b));
    }

    #[test]
    fn rank_and_divisibility_errors() {
        let data = random_vlads(10, 4, 3, 2);
        assert!(train_hashing(&data, "joint", 10, 0).is_err());
        assert!(train_hashing(&data, "joint", 9, 0).is_ok());
        assert!(train_hashing(&data, "shared", 7, 0).is_err());
        assert!(train_hashing(&data, "independent", 15, 0).is_err());
        assert!(train_hashing(&data, "sign", 11, 0).is_err());
        assert!(matches!(train_hashing(&data, "itq", 4, 0), Err(crate::Error::UnknownStrategy { .. })));
        assert!(train_hashing(&[], "joint", 1, 0).is_err());
    }

    #[test]
    fn shared_budget_at_reference_shape() {
        // K = 12,800 over N = 100 sub-vectors of D = 128
        assert_eq!(12_800 / 100, 128);
        assert_eq!(projection_bytes(Layout::Shared, 128, 100, 12_800), 128 * 128 * 4);
    }

    #[test]
    fn random_projection_has_no_reversal() {
        let data = random_vlads(20, 4, 2, 3);
        let model = train_hashing(&data, "rp", 16, 9).unwrap();
        let code = model.encode(&data[0]).unwrap();
        assert_eq!(code.len(), 16);
        assert!(model.approximate_vlad(&code).is_err());
    }

    #[test]
    fn rotation_is_orthogonal() {
        let q = random_rotation(12, 4);
        let gram = q.transpose() * &q;
        let err = (gram - nalgebra::DMatrix::<f64>::identity(12, 12)).abs().max();
        assert!(err < 1e-12);
    }

    #[test]
    fn sign_baseline_round_trip() {
        let data = random_vlads(30, 3, 2, 5);
        let model = train_hashing(&data, "sign", 6, 0).unwrap();
        let code = model.encode(&data[4]).unwrap();
        let expected: Vec<bool> = data[4].values().iter().map(|&x| x >= 0.0).collect();
        assert_eq!(code.iter().collect::<Vec<_>>(), expected);
        let back = model.approximate_vlad(&code).unwrap();
        assert_eq!(model.encode(&back).unwrap(), code);
        assert_eq!(model.projection_bytes(), 0);
    }

    #[test]
    fn code_length_checked_on_reversal() {
        let data = random_vlads(30, 3, 2, 6);
        let model = train_hashing(&data, "independent", 4, 0).unwrap();
        assert!(model.approximate_vlad(&BinaryCode::zeros(5)).is_err());
    }
}
