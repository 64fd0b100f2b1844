use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::pca::principal_components;
use super::{HashingModel, Layout};
use crate::aggregate::VladVector;
use crate::error::{check_dim, Error, Result};

/// Smallest reversal scale relative to the largest one.
const SCALE_FLOOR: f64 = 1e-3;

/// A trainable hashing scheme selected by name.
pub trait HashingStrategy: Send + Sync {
    fn name(&self) -> &'static str;
    fn layout(&self) -> Layout;
    fn train(&self, training: &[VladVector], bits: usize, seed: u64) -> Result<HashingModel>;
}

pub struct JointPcah {
    pub rotate: bool,
}
pub struct IndependentPcah;
pub struct SharedPcah;
pub struct SignBinarization;
pub struct RandomProjection;

fn shape(training: &[VladVector]) -> Result<(usize, usize)> {
    let first = training.first().ok_or(Error::EmptyInput("hashing training set"))?;
    for v in training {
        check_dim(first.dim(), v.dim())?;
        check_dim(first.len(), v.len())?;
    }
    Ok((first.dim(), first.num_centers()))
}

fn to_f32(m: &DMatrix<f64>) -> Vec<f32> {
    // row-major
    (0..m.nrows())
        .flat_map(|r| (0..m.ncols()).map(move |c| (r, c)))
        .map(|(r, c)| m[(r, c)] as f32)
        .collect()
}

/// Fills in per-bit mean |projection| over the training data.
fn with_scales(model: HashingModel, training: &[VladVector]) -> Result<HashingModel> {
    let k = model.bits();
    let mut sums = vec![0.0f64; k];
    for v in training {
        for (s, p) in sums.iter_mut().zip(model.project(v)?) {
            *s += p.abs();
        }
    }
    let means: Vec<f64> = sums.iter().map(|s| s / training.len() as f64).collect();
    let top = means.iter().copied().fold(0.0, f64::max);
    let floor = if top > 0.0 { top * SCALE_FLOOR } else { 1.0 };
    let scales = means.iter().map(|&m| m.max(floor) as f32).collect();
    HashingModel::from_parts(
        model.layout(),
        model.dim(),
        model.num_centers(),
        k,
        model.mean().to_vec(),
        model.projection().to_vec(),
        model.rotation().map(<[f32]>::to_vec),
        scales,
    )
}

fn placeholder_scales(k: usize) -> Vec<f32> {
    vec![1.0; k]
}

/// Haar-distributed orthogonal matrix from the QR of a seeded Gaussian matrix.
pub fn random_rotation(k: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::from_fn(k, k, |_, _| StandardNormal.sample(&mut rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..k {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

fn split_bits(bits: usize, dim: usize, num_centers: usize) -> Result<usize> {
    if bits % num_centers != 0 {
        return Err(Error::invalid(format!("K = {bits} is not divisible by N = {num_centers}")));
    }
    let per = bits / num_centers;
    if per == 0 || per > dim {
        return Err(Error::invalid(format!("K/N = {per} must lie in 1..={dim}")));
    }
    Ok(per)
}

impl HashingStrategy for JointPcah {
    fn name(&self) -> &'static str {
        if self.rotate {
            "joint-rr"
        } else {
            "joint"
        }
    }
    fn layout(&self) -> Layout {
        Layout::Joint
    }
    fn train(&self, training: &[VladVector], bits: usize, seed: u64) -> Result<HashingModel> {
        let (dim, n) = shape(training)?;
        let total = dim * n;
        let rank = total.min(training.len().saturating_sub(1));
        if bits == 0 || bits > rank {
            return Err(Error::invalid(format!(
                "joint PCA hashing supports at most min(D·N, samples - 1) = {rank} bits, asked for {bits}"
            )));
        }
        let rows: Vec<f64> = training.iter().flat_map(|v| v.values().iter().copied()).collect();
        let pca = principal_components(&rows, total, bits);
        let rotation = self.rotate.then(|| to_f32(&random_rotation(bits, seed)));
        let model = HashingModel::from_parts(
            Layout::Joint,
            dim,
            n,
            bits,
            pca.mean.iter().map(|&x| x as f32).collect(),
            to_f32(&pca.components),
            rotation,
            placeholder_scales(bits),
        )?;
        with_scales(model, training)
    }
}

impl HashingStrategy for IndependentPcah {
    fn name(&self) -> &'static str {
        "independent"
    }
    fn layout(&self) -> Layout {
        Layout::Independent
    }
    fn train(&self, training: &[VladVector], bits: usize, _seed: u64) -> Result<HashingModel> {
        let (dim, n) = shape(training)?;
        let per = split_bits(bits, dim, n)?;
        let mut mean = Vec::with_capacity(dim * n);
        let mut projection = Vec::with_capacity(dim * bits);
        for i in 0..n {
            let rows: Vec<f64> = training.iter().flat_map(|v| v.subvector(i).iter().copied()).collect();
            let pca = principal_components(&rows, dim, per);
            mean.extend(pca.mean.iter().map(|&x| x as f32));
            projection.extend(to_f32(&pca.components));
        }
        let model = HashingModel::from_parts(Layout::Independent, dim, n, bits, mean, projection, None, placeholder_scales(bits))?;
        with_scales(model, training)
    }
}

impl HashingStrategy for SharedPcah {
    fn name(&self) -> &'static str {
        "shared"
    }
    fn layout(&self) -> Layout {
        Layout::Shared
    }
    fn train(&self, training: &[VladVector], bits: usize, _seed: u64) -> Result<HashingModel> {
        let (dim, n) = shape(training)?;
        let per = split_bits(bits, dim, n)?;
        // every sub-vector of every training VLAD is one sample
        let rows: Vec<f64> = training.iter().flat_map(|v| v.values().iter().copied()).collect();
        let pca = principal_components(&rows, dim, per);
        let model = HashingModel::from_parts(
            Layout::Shared,
            dim,
            n,
            bits,
            pca.mean.iter().map(|&x| x as f32).collect(),
            to_f32(&pca.components),
            None,
            placeholder_scales(bits),
        )?;
        with_scales(model, training)
    }
}

impl HashingStrategy for SignBinarization {
    fn name(&self) -> &'static str {
        "sign"
    }
    fn layout(&self) -> Layout {
        Layout::SignBaseline
    }
    fn train(&self, training: &[VladVector], bits: usize, _seed: u64) -> Result<HashingModel> {
        let (dim, n) = shape(training)?;
        if bits != dim * n {
            return Err(Error::invalid(format!("sign binarization produces D·N = {} bits, asked for {bits}", dim * n)));
        }
        let model = HashingModel::from_parts(Layout::SignBaseline, dim, n, bits, vec![0.0; bits], Vec::new(), None, placeholder_scales(bits))?;
        with_scales(model, training)
    }
}

impl HashingStrategy for RandomProjection {
    fn name(&self) -> &'static str {
        "rp"
    }
    fn layout(&self) -> Layout {
        Layout::RandomProjection
    }
    fn train(&self, training: &[VladVector], bits: usize, seed: u64) -> Result<HashingModel> {
        let (dim, n) = shape(training)?;
        if bits == 0 {
            return Err(Error::invalid("K must be positive"));
        }
        let total = dim * n;
        let mut mean = vec![0.0f64; total];
        for v in training {
            for (m, x) in mean.iter_mut().zip(v.values()) {
                *m += x;
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let projection: Vec<f32> = (0..total * bits)
            .map(|_| StandardNormal.sample(&mut rng))
            .map(|x: f64| x as f32)
            .collect();
        let model = HashingModel::from_parts(
            Layout::RandomProjection,
            dim,
            n,
            bits,
            mean.iter().map(|m| (m / training.len() as f64) as f32).collect(),
            projection,
            None,
            placeholder_scales(bits),
        )?;
        with_scales(model, training)
    }
}

/// Hashing strategies keyed by name.
#[derive(Clone)]
pub struct HashingRegistry {
    strategies: BTreeMap<&'static str, Arc<dyn HashingStrategy>>,
}

impl Default for HashingRegistry {
    fn default() -> Self {
        let mut reg = Self::empty();
        reg.register(Arc::new(JointPcah { rotate: false }));
        reg.register(Arc::new(JointPcah { rotate: true }));
        reg.register(Arc::new(IndependentPcah));
        reg.register(Arc::new(SharedPcah));
        reg.register(Arc::new(SignBinarization));
        reg.register(Arc::new(RandomProjection));
        reg
    }
}

impl HashingRegistry {
    pub fn empty() -> Self {
        Self {
            strategies: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, strategy: Arc<dyn HashingStrategy>) {
        self.strategies.insert(strategy.name(), strategy);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn HashingStrategy>> {
        self.strategies.get(name).cloned().ok_or_else(|| Error::UnknownStrategy {
            kind: "hashing variant",
            name: name.to_string(),
            available: self.names().join(", "),
        })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.strategies.keys().copied().collect()
    }
}

/// Trains the named variant from the default registry.
pub fn train_hashing(training: &[VladVector], variant: &str, bits: usize, seed: u64) -> Result<HashingModel> {
    HashingRegistry::default().get(variant)?.train(training, bits, seed)
}
