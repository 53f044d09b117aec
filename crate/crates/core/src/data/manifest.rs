//! Dataset directory layout.
//!
//! ```text
//! <dir>/header.json   pretty-printed DatasetHeader, trailing newline
//! <dir>/items.jsonl   one compact ItemRecord per line, in row order
//! <dir>/audio.f32     FeatureArray (layers = max(1, audio_layers))
//! <dir>/video.f32     FeatureArray (layers = 1)
//! ```
//!
//! Both text files are written canonically, so load → save reproduces them
//! byte for byte.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::features::{read_features_expecting, write_features, FeatureArray};
use crate::error::{Error, Result};
use crate::model::AudioInput;
use crate::numcore::{Matrix, Scalar};

pub const MANIFEST_VERSION: u32 = 1;
pub const HEADER_FILE: &str = "header.json";
pub const ITEMS_FILE: &str = "items.jsonl";
pub const AUDIO_FILE: &str = "audio.f32";
pub const VIDEO_FILE: &str = "video.f32";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn get(&self, s: Split) -> usize {
        match s {
            Split::Train => self.train,
            Split::Val => self.val,
            Split::Test => self.test,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format_version: u32,
    pub audio_dim: usize,
    /// Stacked audio layers per item; 0 means one plain vector.
    pub audio_layers: usize,
    pub video_dim: usize,
    pub class_names: Vec<String>,
    pub split_counts: SplitCounts,
    /// Free-form description of how the data was produced.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub id: String,
    pub genre: usize,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub header: DatasetHeader,
    /// Row `i` of the feature files belongs to `items[i]`.
    pub items: Vec<ItemRecord>,
}

/// One clip with borrowed features.
#[derive(Clone, Debug)]
pub struct MusicVideoItem<'a> {
    pub id: &'a str,
    pub genre: usize,
    pub split: Split,
    /// `layers × dim` values, item-major.
    pub audio_feature: &'a [f32],
    pub video_feature: &'a [f32],
}

impl DatasetManifest {
    pub fn new(header: DatasetHeader, items: Vec<ItemRecord>) -> Result<Self> {
        let m = Self { header, items };
        m.validate()?;
        Ok(m)
    }

    pub fn num_classes(&self) -> usize {
        self.header.class_names.len()
    }

    /// Row indices of a split, in row order.
    pub fn split_rows(&self, split: Split) -> Vec<usize> {
        (0..self.items.len()).filter(|&i| self.items[i].split == split).collect()
    }

    pub fn recount(&mut self) {
        let mut c = SplitCounts::default();
        for it in &self.items {
            match it.split {
                Split::Train => c.train += 1,
                Split::Val => c.val += 1,
                Split::Test => c.test += 1,
            }
        }
        self.header.split_counts = c;
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids: Vec<&str> = self.items.iter().map(|i| i.id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Config(format!("duplicate item id {:?}", w[0])));
        }
        if let Some(bad) = self.items.iter().find(|i| i.genre >= self.num_classes()) {
            return Err(Error::Config(format!(
                "item {:?} has genre {} but only {} classes",
                bad.id,
                bad.genre,
                self.num_classes()
            )));
        }
        let c = self.header.split_counts;
        for s in Split::ALL {
            let n = self.items.iter().filter(|i| i.split == s).count();
            if n != c.get(s) {
                return Err(Error::Config(format!("header declares {} {s} items, found {n}", c.get(s))));
            }
        }
        Ok(())
    }

    pub fn header_text(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.header)? + "\n")
    }

    pub fn items_text(&self) -> Result<String> {
        let mut out = String::new();
        for it in &self.items {
            out.push_str(&serde_json::to_string(it)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(HEADER_FILE), self.header_text()?)?;
        std::fs::write(dir.join(ITEMS_FILE), self.items_text()?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let header: DatasetHeader = serde_json::from_str(&std::fs::read_to_string(dir.join(HEADER_FILE))?)?;
        if header.format_version != MANIFEST_VERSION {
            return Err(Error::Config(format!(
                "manifest version {} unsupported",
                header.format_version
            )));
        }
        let text = std::fs::read_to_string(dir.join(ITEMS_FILE))?;
        let items = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<std::result::Result<Vec<ItemRecord>, _>>()?;
        Self::new(header, items)
    }
}

/// Manifest plus its feature arrays.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub audio: FeatureArray,
    pub video: FeatureArray,
}

impl Dataset {
    pub fn new(manifest: DatasetManifest, audio: FeatureArray, video: FeatureArray) -> Result<Self> {
        let h = &manifest.header;
        let n = manifest.items.len();
        let audio_layers = h.audio_layers.max(1);
        if (audio.items, audio.layers, audio.dim) != (n, audio_layers, h.audio_dim) {
            return Err(Error::DimensionConflict(format!(
                "audio features {} x {} x {} vs manifest {n} x {audio_layers} x {}",
                audio.items, audio.layers, audio.dim, h.audio_dim
            )));
        }
        if (video.items, video.layers, video.dim) != (n, 1, h.video_dim) {
            return Err(Error::DimensionConflict(format!(
                "video features {} x {} x {} vs manifest {n} x 1 x {}",
                video.items, video.layers, video.dim, h.video_dim
            )));
        }
        Ok(Self { manifest, audio, video })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        self.manifest.save(dir)?;
        write_features(&dir.join(AUDIO_FILE), &self.audio)?;
        write_features(&dir.join(VIDEO_FILE), &self.video)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = DatasetManifest::load(dir)?;
        let h = &manifest.header;
        let n = manifest.items.len();
        let audio = read_features_expecting(&dir.join(AUDIO_FILE), n, h.audio_layers.max(1), h.audio_dim)?;
        let video = read_features_expecting(&dir.join(VIDEO_FILE), n, 1, h.video_dim)?;
        Self::new(manifest, audio, video)
    }

    pub fn len(&self) -> usize {
        self.manifest.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.items.is_empty()
    }

    pub fn item(&self, row: usize) -> MusicVideoItem<'_> {
        let rec = &self.manifest.items[row];
        MusicVideoItem {
            id: &rec.id,
            genre: rec.genre,
            split: rec.split,
            audio_feature: self.audio.item(row),
            video_feature: self.video.item(row),
        }
    }

    pub fn labels(&self, rows: &[usize]) -> Vec<usize> {
        rows.iter().map(|&r| self.manifest.items[r].genre).collect()
    }

    /// Audio features of `rows`, promoted to `T`.
    pub fn audio_batch<T: Scalar>(&self, rows: &[usize]) -> AudioInput<T> {
        let dim = self.audio.dim;
        if self.manifest.header.audio_layers == 0 {
            AudioInput::Flat(gather(rows, dim, |r| self.audio.layer(r, 0)))
        } else {
            AudioInput::Layered(
                (0..self.audio.layers)
                    .map(|l| gather(rows, dim, |r| self.audio.layer(r, l)))
                    .collect(),
            )
        }
    }

    pub fn video_batch<T: Scalar>(&self, rows: &[usize]) -> Matrix<T> {
        gather(rows, self.video.dim, |r| self.video.layer(r, 0))
    }
}

fn gather<'a, T: Scalar>(rows: &[usize], dim: usize, get: impl Fn(usize) -> &'a [f32]) -> Matrix<T> {
    let mut data = Vec::with_capacity(rows.len() * dim);
    for &r in rows {
        data.extend(get(r).iter().map(|&v| T::from_feature(v)));
    }
    Matrix::from_parts_unchecked(rows.len(), dim, data)
}
