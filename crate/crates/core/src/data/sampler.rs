use rand::Rng;

use super::manifest::{DatasetManifest, Split};
use crate::error::{Error, Result};

/// Class-uniform sampler over one split: every slot first draws a class
/// uniformly, then an item of that class uniformly, with replacement.
#[derive(Clone, Debug)]
pub struct BalancedSampler {
    by_class: Vec<Vec<usize>>,
    split_len: usize,
}

impl BalancedSampler {
    pub fn new(manifest: &DatasetManifest, split: Split) -> Result<Self> {
        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); manifest.num_classes()];
        let mut split_len = 0;
        for (row, it) in manifest.items.iter().enumerate() {
            if it.split == split {
                by_class[it.genre].push(row);
                split_len += 1;
            }
        }
        if split_len == 0 {
            return Err(Error::Sampling(format!("split {split} is empty")));
        }
        if let Some(c) = by_class.iter().position(Vec::is_empty) {
            return Err(Error::Sampling(format!(
                "class {:?} has no items in split {split}",
                manifest.header.class_names[c]
            )));
        }
        Ok(Self { by_class, split_len })
    }

    pub fn num_classes(&self) -> usize {
        self.by_class.len()
    }

    /// Batches per epoch, `⌈|split| / batch_size⌉`.
    pub fn batches_per_epoch(&self, batch_size: usize) -> usize {
        self.split_len.div_ceil(batch_size.max(1))
    }

    /// Row indices of one batch.
    pub fn sample<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Vec<usize> {
        (0..batch_size)
            .map(|_| {
                let class = &self.by_class[rng.random_range(0..self.by_class.len())];
                class[rng.random_range(0..class.len())]
            })
            .collect()
    }
}

/// Item ids of one class-balanced batch.
pub fn balanced_batch<R: Rng + ?Sized>(
    manifest: &DatasetManifest,
    split: Split,
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<String>> {
    let sampler = BalancedSampler::new(manifest, split)?;
    Ok(sampler
        .sample(batch_size, rng)
        .into_iter()
        .map(|r| manifest.items[r].id.clone())
        .collect())
}
