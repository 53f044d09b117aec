//! Synthetic paired features with a tunable pair signal and class signal.
//!
//! For class `c` the generator draws centers `μ_c^A`, `μ_c^V` with entries
//! from `N(0, k/d)` (`k` the latent dim, `d` the feature dim), so a center
//! has the squared norm of a `k`-dimensional standard normal. For every
//! item it draws a latent pair vector `ℓ` shared by both modalities and maps
//! it into each feature space with a fixed random matrix `R^M`:
//!
//! ```text
//! x^M = σ_c·μ_c^M + ρ·R^M ℓ + √(1 − ρ²)·ξ^M + noise·η^M
//! ```
//!
//! `ξ` and `η` are independent per modality. `ρ` controls how well the
//! specific pair can be identified across modalities, `σ_c` how well the
//! class can. With stacked audio layers, layer `l` adds extra noise of scale
//! `noise·l/L`, so earlier layers are cleaner.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::features::FeatureArray;
use super::manifest::{Dataset, DatasetHeader, DatasetManifest, ItemRecord, Split, SplitCounts, MANIFEST_VERSION};
use super::split::{stratified_split, SplitFractions};
use super::taxonomy::GenreTaxonomy;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub num_classes: usize,
    pub items_per_class: usize,
    pub audio_dim: usize,
    pub video_dim: usize,
    /// 0 writes plain audio vectors.
    pub audio_layers: usize,
    pub latent_dim: usize,
    pub pair_correlation: f64,
    pub class_separation: f64,
    pub noise: f64,
    pub fractions: SplitFractions,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            num_classes: 8,
            items_per_class: 250,
            audio_dim: 64,
            video_dim: 32,
            audio_layers: 0,
            latent_dim: 16,
            pair_correlation: 0.9,
            class_separation: 1.0,
            noise: 0.5,
            fractions: SplitFractions::default(),
            seed: 7,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.pair_correlation) {
            return Err(Error::Config(format!("rho {} outside [0, 1]", self.pair_correlation)));
        }
        if !(self.class_separation >= 0.0) || !(self.noise >= 0.0) {
            return Err(Error::Config("class separation and noise must be non-negative".into()));
        }
        if self.num_classes == 0 || self.items_per_class == 0 {
            return Err(Error::Config("need at least one class and one item per class".into()));
        }
        if self.audio_dim == 0 || self.video_dim == 0 || self.latent_dim == 0 {
            return Err(Error::Config("dims must be positive".into()));
        }
        self.fractions.validate()
    }
}

/// Class names: the built-in genre names while they last, then `class{i}`.
pub fn synthetic_class_names(n: usize) -> Vec<String> {
    let genres = GenreTaxonomy::builtin().class_names;
    (0..n)
        .map(|i| genres.get(i).cloned().unwrap_or_else(|| format!("class{i}")))
        .collect()
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// `dim × latent` matrix scaled so that `R ℓ` has unit variance per entry.
fn projection(rng: &mut ChaCha8Rng, dim: usize, latent: usize) -> Vec<f64> {
    let s = 1.0 / (latent as f64).sqrt();
    normal_vec(rng, dim * latent).into_iter().map(|v| v * s).collect()
}

fn project(r: &[f64], latent: &[f64], dim: usize) -> Vec<f64> {
    let k = latent.len();
    (0..dim)
        .map(|i| r[i * k..(i + 1) * k].iter().zip(latent).map(|(a, b)| a * b).sum())
        .collect()
}

pub fn generate_synthetic(config: &SyntheticConfig) -> Result<Dataset> {
    config.validate()?;
    let c = config;
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let r_audio = projection(&mut rng, c.audio_dim, c.latent_dim);
    let r_video = projection(&mut rng, c.video_dim, c.latent_dim);
    let center = |rng: &mut ChaCha8Rng, dim: usize| -> Vec<f64> {
        let s = (c.latent_dim as f64 / dim as f64).sqrt();
        normal_vec(rng, dim).into_iter().map(|v| v * s).collect()
    };
    let centers: Vec<(Vec<f64>, Vec<f64>)> = (0..c.num_classes)
        .map(|_| (center(&mut rng, c.audio_dim), center(&mut rng, c.video_dim)))
        .collect();

    let n = c.num_classes * c.items_per_class;
    let layers = c.audio_layers.max(1);
    let rho = c.pair_correlation;
    let indep = (1.0 - rho * rho).max(0.0).sqrt();
    let mut audio = Vec::with_capacity(n * layers * c.audio_dim);
    let mut video = Vec::with_capacity(n * c.video_dim);
    let mut labels = Vec::with_capacity(n);

    for i in 0..n {
        let class = i % c.num_classes;
        labels.push(class);
        let latent = normal_vec(&mut rng, c.latent_dim);
        let modality = |r: &[f64], center: &[f64], dim: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
            let shared = project(r, &latent, dim);
            let xi = normal_vec(rng, dim);
            let eta = normal_vec(rng, dim);
            (0..dim)
                .map(|d| c.class_separation * center[d] + rho * shared[d] + indep * xi[d] + c.noise * eta[d])
                .collect()
        };
        let a = modality(&r_audio, &centers[class].0, c.audio_dim, &mut rng);
        let v = modality(&r_video, &centers[class].1, c.video_dim, &mut rng);
        for l in 0..layers {
            let extra = if c.audio_layers == 0 { 0.0 } else { c.noise * l as f64 / layers as f64 };
            let noise = normal_vec(&mut rng, c.audio_dim);
            audio.extend(a.iter().zip(&noise).map(|(x, e)| (x + extra * e) as f32));
        }
        video.extend(v.iter().map(|&x| x as f32));
    }

    let assignment = stratified_split(&labels, c.fractions, c.seed)?;
    let items: Vec<ItemRecord> = labels
        .iter()
        .zip(&assignment.splits)
        .enumerate()
        .map(|(i, (&genre, &split))| ItemRecord {
            id: format!("mv{i:06}"),
            genre,
            split,
        })
        .collect();
    let count = |s: Split| items.iter().filter(|it| it.split == s).count();
    let header = DatasetHeader {
        format_version: MANIFEST_VERSION,
        audio_dim: c.audio_dim,
        audio_layers: c.audio_layers,
        video_dim: c.video_dim,
        class_names: synthetic_class_names(c.num_classes),
        split_counts: SplitCounts {
            train: count(Split::Train),
            val: count(Split::Val),
            test: count(Split::Test),
        },
        provenance: Some(serde_json::json!({ "generator": "synthetic", "config": c })),
    };
    let manifest = DatasetManifest::new(header, items)?;
    Dataset::new(
        manifest,
        FeatureArray::new(n, layers, c.audio_dim, audio)?,
        FeatureArray::new(n, 1, c.video_dim, video)?,
    )
}
