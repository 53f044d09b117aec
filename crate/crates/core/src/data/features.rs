//! Flat binary feature files.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "MVRF"
//! 4       4     format version, u32 LE (= 1)
//! 8       8     item count, u64 LE
//! 16      4     layers per item, u32 LE (1 for plain vectors)
//! 20      4     feature dim, u32 LE
//! 24      ...   items × layers × dim f32 LE, item-major then layer-major
//! ```

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const FEATURE_MAGIC: [u8; 4] = *b"MVRF";
pub const FEATURE_VERSION: u32 = 1;
const HEADER_LEN: usize = 24;

/// `items × layers × dim` block of 32-bit features.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureArray {
    pub items: usize,
    pub layers: usize,
    pub dim: usize,
    pub data: Vec<f32>,
}

impl FeatureArray {
    pub fn new(items: usize, layers: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if layers == 0 || data.len() != items * layers * dim {
            return Err(Error::Shape(format!(
                "{} values for {items} items x {layers} layers x {dim}",
                data.len()
            )));
        }
        Ok(Self { items, layers, dim, data })
    }

    /// Features of one item: `layers × dim` values.
    pub fn item(&self, i: usize) -> &[f32] {
        let stride = self.layers * self.dim;
        &self.data[i * stride..(i + 1) * stride]
    }

    pub fn layer(&self, i: usize, l: usize) -> &[f32] {
        let start = (i * self.layers + l) * self.dim;
        &self.data[start..start + self.dim]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.data.len());
        out.extend_from_slice(&FEATURE_MAGIC);
        out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.items as u64).to_le_bytes());
        out.extend_from_slice(&(self.layers as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fmt = |offset: usize, message: String| Error::Format {
            offset: offset as u64,
            message,
        };
        if bytes.len() < HEADER_LEN {
            return Err(fmt(bytes.len(), format!("truncated header: {} of {HEADER_LEN} bytes", bytes.len())));
        }
        if bytes[0..4] != FEATURE_MAGIC {
            return Err(fmt(0, format!("bad magic {:?}", &bytes[0..4])));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
        let version = u32_at(4);
        if version != FEATURE_VERSION {
            return Err(fmt(4, format!("unsupported version {version}")));
        }
        let items = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
        let layers = u32_at(16) as usize;
        let dim = u32_at(20) as usize;
        if layers == 0 {
            return Err(fmt(16, "layer count is zero".into()));
        }
        let expected = usize::try_from(items)
            .ok()
            .and_then(|n| n.checked_mul(layers))
            .and_then(|n| n.checked_mul(dim))
            .and_then(|n| n.checked_mul(4))
            .and_then(|n| n.checked_add(HEADER_LEN))
            .ok_or_else(|| fmt(8, "header sizes overflow".into()))?;
        if bytes.len() < expected {
            return Err(fmt(
                bytes.len(),
                format!("truncated data: file has {} bytes, header implies {expected}", bytes.len()),
            ));
        }
        if bytes.len() > expected {
            return Err(fmt(expected, format!("{} trailing bytes", bytes.len() - expected)));
        }
        let data = bytes[HEADER_LEN..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        Ok(Self {
            items: items as usize,
            layers,
            dim,
            data,
        })
    }
}

pub fn write_features(path: &Path, features: &FeatureArray) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&features.to_bytes())?;
    Ok(())
}

pub fn read_features(path: &Path) -> Result<FeatureArray> {
    FeatureArray::from_bytes(&std::fs::read(path)?)
}

/// Reads a feature file and checks its shape against what a manifest declares.
pub fn read_features_expecting(path: &Path, items: usize, layers: usize, dim: usize) -> Result<FeatureArray> {
    let f = read_features(path)?;
    if (f.items, f.layers, f.dim) != (items, layers, dim) {
        return Err(Error::DimensionConflict(format!(
            "{}: file holds {} items x {} layers x {}, manifest declares {items} x {layers} x {dim}",
            path.display(),
            f.items,
            f.layers,
            f.dim
        )));
    }
    Ok(f)
}
