use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::manifest::{DatasetManifest, Split};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let all = [self.train, self.val, self.test];
        if all.iter().any(|f| !(0.0..=1.0).contains(f)) || ((all.iter().sum::<f64>()) - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split fractions {}/{}/{} must be in [0, 1] and sum to 1",
                self.train, self.val, self.test
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitAssignment {
    pub splits: Vec<Split>,
    pub warnings: Vec<String>,
}

/// Assigns each item to a split, class by class.
///
/// Within a class the items are shuffled with the seeded generator, then the
/// first `round(n·train)` go to train, the next `round(n·val)` to validation
/// and the rest to test. Per-class counts therefore deviate from the ideal
/// fractions by at most one item.
pub fn stratified_split(labels: &[usize], fractions: SplitFractions, seed: u64) -> Result<SplitAssignment> {
    fractions.validate()?;
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &y) in labels.iter().enumerate() {
        by_class[y].push(i);
    }
    let active = [fractions.train, fractions.val, fractions.test]
        .iter()
        .filter(|&&f| f > 0.0)
        .count();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut splits = vec![Split::Train; labels.len()];
    let mut warnings = Vec::new();
    for (class, members) in by_class.iter_mut().enumerate() {
        if members.is_empty() {
            continue;
        }
        let n = members.len();
        if n < active {
            warnings.push(format!("class {class} has {n} items for {active} splits"));
        }
        members.shuffle(&mut rng);
        let n_train = ((n as f64 * fractions.train).round() as usize).min(n);
        let n_val = ((n as f64 * fractions.val).round() as usize).min(n - n_train);
        for (k, &i) in members.iter().enumerate() {
            splits[i] = if k < n_train {
                Split::Train
            } else if k < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
        }
    }
    Ok(SplitAssignment { splits, warnings })
}

/// Re-splits a manifest in place and refreshes its header counts.
pub fn resplit(manifest: &mut DatasetManifest, fractions: SplitFractions, seed: u64) -> Result<Vec<String>> {
    let labels: Vec<usize> = manifest.items.iter().map(|i| i.genre).collect();
    let a = stratified_split(&labels, fractions, seed)?;
    for (item, s) in manifest.items.iter_mut().zip(a.splits) {
        item.split = s;
    }
    manifest.recount();
    Ok(a.warnings)
}
