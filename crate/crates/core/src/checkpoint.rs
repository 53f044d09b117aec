//! Checkpoint files.
//!
//! ```text
//! offset  size  field
//! 0       8     magic "MVRCKPT\0"
//! 8       4     format version (u32 LE)
//! 12      8     metadata length m (u64 LE)
//! 20      m     metadata, compact JSON (CheckpointMeta)
//! 20+m    ...   parameter tensors in metadata order, f64 LE, row-major,
//!               then the AdamW first and second moments in the same order
//!               when `optimizer_step` is present
//! ```
//!
//! Values are stored as f64 whatever the in-memory scalar, so an f32 model
//! round-trips exactly too.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::DatasetHeader;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelParams};
use crate::numcore::{AdamWState, Matrix, Scalar};
use crate::trainer::TrainConfig;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MVRCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;
pub const BEST_CHECKPOINT: &str = "best.ckpt";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Epoch the parameters come from, 1-based; 0 for an untrained model.
    pub epoch: usize,
    pub tensors: Vec<TensorEntry>,
    pub optimizer_step: Option<u64>,
    pub package_version: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    pub meta: CheckpointMeta,
    pub params: ModelParams<T>,
    pub optimizer: Option<AdamWState<T>>,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn new(params: ModelParams<T>, train: TrainConfig, epoch: usize, optimizer: Option<AdamWState<T>>) -> Self {
        let tensors = params
            .names
            .iter()
            .zip(&params.tensors)
            .map(|(name, t)| TensorEntry {
                name: name.clone(),
                rows: t.rows(),
                cols: t.cols(),
            })
            .collect();
        let meta = CheckpointMeta {
            model: params.config.clone(),
            train,
            epoch,
            tensors,
            optimizer_step: optimizer.as_ref().map(|o| o.step),
            package_version: env!("CARGO_PKG_VERSION").to_string(),
        };
        Self { meta, params, optimizer }
    }

    pub fn alpha(&self) -> f64 {
        self.meta.train.train_alpha
    }

    /// Errors unless the dataset's feature dims match the model.
    pub fn check_compatible(&self, header: &DatasetHeader) -> Result<()> {
        check_compatible(&self.meta.model, header)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = serde_json::to_vec(&self.meta)?;
        let mut out = Vec::with_capacity(20 + meta.len() + self.params.parameter_count() * 24);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        out.extend_from_slice(&meta);
        let mut put = |ts: &[Matrix<T>]| {
            for t in ts {
                for v in t.data() {
                    out.extend_from_slice(&v.as_f64().to_le_bytes());
                }
            }
        };
        put(&self.params.tensors);
        if let Some(opt) = &self.optimizer {
            put(&opt.first_moment);
            put(&opt.second_moment);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(Error::Format {
                offset: 0,
                message: "not a checkpoint file (bad magic)".into(),
            });
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format {
                offset: 8,
                message: format!("unsupported checkpoint version {version}"),
            });
        }
        let meta_len = u64::from_le_bytes(r.take(8)?.try_into().unwrap()) as usize;
        let meta_at = r.pos as u64;
        let meta: CheckpointMeta = serde_json::from_slice(r.take(meta_len)?).map_err(|e| Error::Format {
            offset: meta_at,
            message: format!("bad metadata: {e}"),
        })?;

        let read_set = |r: &mut Reader| -> Result<Vec<Matrix<T>>> {
            meta.tensors
                .iter()
                .map(|e| {
                    let raw = r.take(e.rows * e.cols * 8)?;
                    let data = raw
                        .chunks_exact(8)
                        .map(|c| T::lit(f64::from_le_bytes(c.try_into().unwrap())))
                        .collect();
                    Ok(Matrix::from_parts_unchecked(e.rows, e.cols, data))
                })
                .collect()
        };
        let tensors = read_set(&mut r)?;
        let params = ModelParams::from_tensors(&meta.model, tensors)?;
        if params.names.iter().ne(meta.tensors.iter().map(|e| &e.name)) {
            return Err(Error::Format {
                offset: meta_at,
                message: "tensor names do not match the model layout".into(),
            });
        }
        let optimizer = match meta.optimizer_step {
            None => None,
            Some(step) => {
                let first_moment = read_set(&mut r)?;
                let second_moment = read_set(&mut r)?;
                Some(AdamWState {
                    config: meta.train.adamw(),
                    step,
                    first_moment,
                    second_moment,
                })
            }
        };
        if r.pos != bytes.len() {
            return Err(Error::Format {
                offset: r.pos as u64,
                message: format!("{} trailing bytes", bytes.len() - r.pos),
            });
        }
        Ok(Self { meta, params, optimizer })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    /// Loads a checkpoint file. A directory, or a path without extension
    /// such as `ckpt/best`, resolves to the matching `.ckpt` file.
    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(resolve_checkpoint_path(path))?)
    }
}

pub fn resolve_checkpoint_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        return path.join(BEST_CHECKPOINT);
    }
    if !path.exists() && path.extension().is_none() {
        return path.with_extension("ckpt");
    }
    path.to_path_buf()
}

pub fn check_compatible(model: &ModelConfig, header: &DatasetHeader) -> Result<()> {
    let want = (model.audio_input_dim, model.num_audio_layers, model.video_input_dim);
    let have = (header.audio_dim, header.audio_layers, header.video_dim);
    if want != have {
        return Err(Error::Compatibility(format!(
            "model expects audio {} x {} layers and video {}, data has audio {} x {} layers and video {}",
            want.0, want.1, want.2, have.0, have.1, have.2
        )));
    }
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Format {
                offset: self.bytes.len() as u64,
                message: format!("truncated: needed {n} bytes at offset {}", self.pos),
            }),
        }
    }
}
