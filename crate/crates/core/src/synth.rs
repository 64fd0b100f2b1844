//! Seeded synthetic benchmark: hierarchical Gaussian-mixture training descriptors
//! and images built from category-specific visual-word pools.
//!
//! Image descriptors are leaf centers plus optional Gaussian noise, so with zero
//! noise every VLAD sub-vector is exactly a non-negative integer combination of
//! its dictionary columns.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::aggregate::BowHistogram;
use crate::error::{Error, Result};
use crate::io::{format_manifest, write_descriptors, write_file, Dataset, ManifestEntry};
use crate::kmeans::derive_seed;
use crate::retrieval::{simulate_gps, GeoPoint, ImageId};
use crate::vocab::{DescriptorSet, LeafSearch, VocabularyTree};

/// Training descriptors drawn around a random hierarchy of Gaussian centers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSpec {
    pub dim: usize,
    pub branch: usize,
    pub levels: usize,
    /// Per-coordinate spread of each level's centers around their parent, top level first.
    pub level_std: Vec<f64>,
    pub points_per_leaf: usize,
    pub point_std: f64,
    pub seed: u64,
}

impl Default for TrainingSpec {
    fn default() -> Self {
        Self {
            dim: 16,
            branch: 8,
            levels: 3,
            level_std: vec![0.25, 0.08, 0.03],
            points_per_leaf: 8,
            point_std: 0.004,
            seed: 11,
        }
    }
}

pub fn training_descriptors(spec: &TrainingSpec) -> Result<DescriptorSet> {
    if spec.dim == 0 || spec.branch < 2 || spec.levels == 0 || spec.points_per_leaf == 0 {
        return Err(Error::invalid("training spec needs dim >= 1, branch >= 2, levels >= 1, points_per_leaf >= 1"));
    }
    if spec.level_std.len() != spec.levels {
        return Err(Error::invalid(format!(
            "level_std has {} entries for {} levels",
            spec.level_std.len(),
            spec.levels
        )));
    }
    if spec.level_std.iter().chain([&spec.point_std]).any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(Error::invalid("standard deviations must be finite and >= 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut centers = vec![vec![0.0f64; spec.dim]];
    for &std in &spec.level_std {
        let noise = Normal::new(0.0, std).map_err(|e| Error::invalid(e.to_string()))?;
        centers = centers
            .iter()
            .flat_map(|c| (0..spec.branch).map(|_| c.iter().map(|x| x + noise.sample(&mut rng)).collect::<Vec<_>>()).collect::<Vec<_>>())
            .collect();
    }
    let noise = Normal::new(0.0, spec.point_std).map_err(|e| Error::invalid(e.to_string()))?;
    let mut data = Vec::with_capacity(centers.len() * spec.points_per_leaf * spec.dim);
    for c in &centers {
        for _ in 0..spec.points_per_leaf {
            data.extend(c.iter().map(|x| (x + noise.sample(&mut rng)) as f32));
        }
    }
    DescriptorSet::new(spec.dim, data)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpsClusters {
    pub origin_lat: f64,
    pub origin_lon: f64,
    /// Distance between neighboring category sites on a square grid.
    pub spacing_m: f64,
    /// Spread of database images around their category site.
    pub site_sigma_m: f64,
    /// Simulated GPS error added to query locations.
    pub query_sigma_m: f64,
}

impl Default for GpsClusters {
    fn default() -> Self {
        Self {
            origin_lat: 51.752,
            origin_lon: -1.258,
            spacing_m: 400.0,
            site_sigma_m: 60.0,
            query_sigma_m: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    /// Database images, distractors included.
    pub num_images: usize,
    pub num_queries: usize,
    pub min_descriptors: usize,
    pub max_descriptors: usize,
    /// Gaussian noise added to each leaf center.
    pub noise_std: f64,
    pub num_categories: usize,
    /// Size of each category's disjoint visual-word pool.
    pub words_per_category: usize,
    /// Fraction of a category's pool an individual image draws from.
    pub subset_fraction: f64,
    /// Fraction of an image's descriptors placed on random leaves.
    pub clutter_fraction: f64,
    /// Fraction of database images with no category and no relevant query.
    pub distractor_fraction: f64,
    pub gps: GpsClusters,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_images: 1000,
            num_queries: 50,
            min_descriptors: 40,
            max_descriptors: 80,
            noise_std: 0.0,
            num_categories: 25,
            words_per_category: 16,
            subset_fraction: 0.6,
            clutter_fraction: 0.2,
            distractor_fraction: 0.3,
            gps: GpsClusters::default(),
            seed: 23,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let frac = |x: f64| (0.0..=1.0).contains(&x);
        if self.num_images == 0 {
            return Err(Error::invalid("num_images must be positive"));
        }
        if self.min_descriptors == 0 || self.min_descriptors > self.max_descriptors {
            return Err(Error::invalid("need 1 <= min_descriptors <= max_descriptors"));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::invalid(format!("noise_std must be >= 0, got {}", self.noise_std)));
        }
        if !(frac(self.subset_fraction) && self.subset_fraction > 0.0) || !frac(self.clutter_fraction) || !frac(self.distractor_fraction) {
            return Err(Error::invalid("fractions must lie in [0, 1] and subset_fraction must be positive"));
        }
        if self.num_categories == 0 && self.num_queries > 0 {
            return Err(Error::invalid("queries need at least one category"));
        }
        if self.words_per_category == 0 {
            return Err(Error::invalid("words_per_category must be positive"));
        }
        let g = &self.gps;
        if [g.spacing_m, g.site_sigma_m, g.query_sigma_m].iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::invalid("GPS distances must be finite and >= 0"));
        }
        GeoPoint::new(g.origin_lat, g.origin_lon)?;
        Ok(())
    }
}

/// One generated image with its generator bookkeeping.
#[derive(Debug, Clone)]
pub struct SyntheticImage {
    pub entry: ManifestEntry,
    pub descriptors: DescriptorSet,
    /// Multiset of leaves the descriptors were placed on.
    pub sampled: BowHistogram,
    /// True location before any simulated GPS error.
    pub site: Option<GeoPoint>,
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub images: Vec<SyntheticImage>,
    /// Category pools, disjoint by construction.
    pub pools: Vec<Vec<u32>>,
}

impl SyntheticDataset {
    pub fn to_dataset(&self) -> Dataset {
        Dataset {
            entries: self.images.iter().map(|im| im.entry.clone()).collect(),
            descriptors: self.images.iter().map(|im| im.descriptors.clone()).collect(),
        }
    }

    /// Writes one descriptor file per image under `dir/desc` and `dir/manifest.tsv`.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        for im in &self.images {
            write_descriptors(&dir.join(&im.entry.path), &im.descriptors)?;
        }
        let entries: Vec<ManifestEntry> = self.images.iter().map(|im| im.entry.clone()).collect();
        let manifest = dir.join("manifest.tsv");
        write_file(&manifest, format_manifest(&entries).as_bytes())?;
        Ok(manifest)
    }
}

/// Leaves whose own center quantizes back to them; duplicates left by empty
/// clusters are excluded so sampled words and counted words agree.
fn usable_leaves(tree: &VocabularyTree) -> Vec<u32> {
    (0..tree.num_leaves())
        .filter(|&t| {
            let c: Vec<f32> = tree.leaf_center(t).iter().map(|&x| x as f32).collect();
            tree.quantize_leaf(&c, LeafSearch::ExhaustiveSubtree).ok() == Some(t)
                && tree.quantize_leaf(&c, LeafSearch::GreedyPath).ok() == Some(t)
        })
        .map(|t| t as u32)
        .collect()
}

/// Grid position of category `c`, measured in meters from the origin.
fn site_of(spec: &GpsClusters, c: usize, side: usize) -> Result<GeoPoint> {
    let (row, col) = ((c / side) as f64, (c % side) as f64);
    let north = row * spec.spacing_m;
    let east = col * spec.spacing_m;
    let r = crate::retrieval::gps::EARTH_RADIUS_M;
    let lat = spec.origin_lat + (north / r).to_degrees();
    let lon = spec.origin_lon + (east / (r * spec.origin_lat.to_radians().cos())).to_degrees();
    GeoPoint::new(lat, lon)
}

pub fn synthesize_dataset(spec: &SyntheticSpec, tree: &VocabularyTree) -> Result<SyntheticDataset> {
    spec.validate()?;
    let mut leaves = usable_leaves(tree);
    let needed = spec.num_categories * spec.words_per_category;
    if spec.num_categories > leaves.len() || needed > leaves.len() {
        return Err(Error::invalid(format!(
            "infeasible spec: {} categories x {} words need {needed} distinct leaves, the tree offers {}",
            spec.num_categories,
            spec.words_per_category,
            leaves.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    leaves.shuffle(&mut rng);
    let pools: Vec<Vec<u32>> = (0..spec.num_categories)
        .map(|c| {
            let mut p = leaves[c * spec.words_per_category..(c + 1) * spec.words_per_category].to_vec();
            p.sort_unstable();
            p
        })
        .collect();
    let all_leaves = leaves.clone();
    let side = (spec.num_categories as f64).sqrt().ceil().max(1.0) as usize;
    let sites = (0..spec.num_categories)
        .map(|c| site_of(&spec.gps, c, side))
        .collect::<Result<Vec<_>>>()?;
    let extent = spec.gps.spacing_m * side as f64;

    let num_distractors = (spec.num_images as f64 * spec.distractor_fraction).round() as usize;
    let num_db = spec.num_images;
    let mut images = Vec::with_capacity(num_db + spec.num_queries);
    let mut members: Vec<Vec<ImageId>> = vec![Vec::new(); spec.num_categories];

    for i in 0..num_db + spec.num_queries {
        let is_query = i >= num_db;
        let category = if is_query {
            Some((i - num_db) % spec.num_categories)
        } else if i < num_db - num_distractors && spec.num_categories > 0 {
            Some(i % spec.num_categories)
        } else {
            None
        };
        let mut img_rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, 1 + i as u64));
        let words: Vec<u32> = match category {
            Some(c) => {
                let k = ((spec.words_per_category as f64 * spec.subset_fraction).ceil() as usize).max(1);
                pools[c].choose_multiple(&mut img_rng, k).copied().collect()
            }
            None => Vec::new(),
        };
        let count = img_rng.random_range(spec.min_descriptors..=spec.max_descriptors);
        let (site, gps) = match category {
            Some(c) => {
                let sigma = if is_query { spec.gps.query_sigma_m } else { spec.gps.site_sigma_m };
                let seed = img_rng.random();
                (Some(sites[c]), Some(simulate_gps(sites[c], sigma, seed)?))
            }
            None => {
                let (n, e) = (img_rng.random_range(0.0..extent), img_rng.random_range(0.0..extent));
                let r = crate::retrieval::gps::EARTH_RADIUS_M;
                let lat = spec.gps.origin_lat + (n / r).to_degrees();
                let lon = spec.gps.origin_lon + (e / (r * spec.gps.origin_lat.to_radians().cos())).to_degrees();
                let p = GeoPoint::new(lat, lon)?;
                (Some(p), Some(p))
            }
        };
        let noise = Normal::new(0.0, spec.noise_std).map_err(|e| Error::invalid(e.to_string()))?;
        let mut sampled = BowHistogram::new(tree.num_leaves());
        let mut data = Vec::with_capacity(count * tree.dim());
        for _ in 0..count {
            let clutter = words.is_empty() || img_rng.random::<f64>() < spec.clutter_fraction;
            let t = if clutter {
                *all_leaves.choose(&mut img_rng).expect("leaves nonempty")
            } else {
                *words.choose(&mut img_rng).expect("words nonempty")
            };
            sampled.add(t, 1.0)?;
            data.extend(tree.leaf_center(t as usize).iter().map(|&x| {
                let n = if spec.noise_std > 0.0 { noise.sample(&mut img_rng) } else { 0.0 };
                (x + n) as f32
            }));
        }
        let id = ImageId(i as u32);
        if let (Some(c), false) = (category, is_query) {
            members[c].push(id);
        }
        images.push(SyntheticImage {
            entry: ManifestEntry {
                id,
                path: PathBuf::from(format!("desc/{i:05}.dhd")),
                gps,
                category: category.map(|c| c as u32),
                relevant: None,
            },
            descriptors: DescriptorSet::new(tree.dim(), data)?,
            sampled,
            site,
        });
    }
    for im in images.iter_mut().skip(num_db) {
        let c = im.entry.category.expect("queries have a category") as usize;
        if members[c].is_empty() {
            return Err(Error::invalid(format!("category {c} has no database image to be relevant")));
        }
        im.entry.relevant = Some(members[c].clone());
    }
    Ok(SyntheticDataset { images, pools })
}

/// All leaves named in any pool.
pub fn pooled_words(ds: &SyntheticDataset) -> BTreeSet<u32> {
    ds.pools.iter().flatten().copied().collect()
}
