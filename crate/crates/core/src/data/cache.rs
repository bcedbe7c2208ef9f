//! Columnar dataset cache.
//!
//! Layout under the shared framing of [`crate::util::BinWriter`]
//! (`magic "FRGD" | version | body | sha256`):
//!
//! ```text
//! source_hash str | schema_hash str
//! feature_kind u32 (0 = binary, 1 = continuous)
//! n_groups u64 | nrows u64 | ncols u64
//! features: u64 len + f64 values (row-major)
//! sensitive: u64 len + u64 codes
//! label count u64, then per label: task str, u64 len + u64 values
//! ```
//!
//! The `(source_hash, schema_hash)` pair keys the cache: re-ingesting the
//! same file with the same schema is a cheap read.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::data::{Dataset, FeatureKind};
use crate::error::CoreError;
use crate::util::{BinReader, BinWriter};
use crate::Result;

const MAGIC: &[u8; 4] = b"FRGD";
const VERSION: u32 = 1;

/// File name for a cache entry keyed by source and schema content hashes.
pub fn cache_file_name(source_hash: &str, schema_hash: &str) -> String {
    format!(
        "{}-{}.frgd",
        &source_hash[..source_hash.len().min(16)],
        &schema_hash[..schema_hash.len().min(16)]
    )
}

pub fn write_dataset(
    path: &Path,
    dataset: &Dataset,
    source_hash: &str,
    schema_hash: &str,
) -> Result<()> {
    let mut w = BinWriter::new();
    w.put_str(source_hash);
    w.put_str(schema_hash);
    w.put_u32(match dataset.feature_kind() {
        FeatureKind::Binary => 0,
        FeatureKind::Continuous => 1,
    });
    w.put_u64(dataset.n_groups() as u64);
    w.put_u64(dataset.n() as u64);
    w.put_u64(dataset.dim() as u64);
    w.put_f64_slice(dataset.features().as_slice().expect("standard layout"));
    w.put_u64(dataset.sensitive().len() as u64);
    for &s in dataset.sensitive() {
        w.put_u64(s as u64);
    }
    w.put_u64(dataset.labels().len() as u64);
    for (task, ys) in dataset.labels() {
        w.put_str(task);
        w.put_u64(ys.len() as u64);
        for &y in ys {
            w.put_u64(y as u64);
        }
    }
    w.write_to(path, MAGIC, VERSION)
}

/// Read a cache entry back; returns the dataset and its
/// `(source_hash, schema_hash)` key.
pub fn read_dataset(path: &Path) -> Result<(Dataset, String, String)> {
    let mut r = BinReader::open(path, MAGIC, VERSION)?;
    let source_hash = r.get_str()?;
    let schema_hash = r.get_str()?;
    let kind = match r.get_u32()? {
        0 => FeatureKind::Binary,
        1 => FeatureKind::Continuous,
        other => {
            return Err(CoreError::serialization(format!(
                "unknown feature kind tag {other}"
            )))
        }
    };
    let n_groups = r.get_u64()? as usize;
    let nrows = r.get_u64()? as usize;
    let ncols = r.get_u64()? as usize;
    let data = r.get_f64_vec()?;
    if data.len() != nrows * ncols {
        return Err(CoreError::serialization(format!(
            "feature block holds {} values for shape {nrows}x{ncols}",
            data.len()
        )));
    }
    let features =
        Array2::from_shape_vec((nrows, ncols), data).map_err(|e| CoreError::serialization(e.to_string()))?;
    let n_sens = r.get_u64()? as usize;
    let mut sensitive = Vec::with_capacity(n_sens);
    for _ in 0..n_sens {
        sensitive.push(r.get_u64()? as usize);
    }
    let n_labels = r.get_u64()? as usize;
    let mut labels = BTreeMap::new();
    for _ in 0..n_labels {
        let task = r.get_str()?;
        let len = r.get_u64()? as usize;
        let mut ys = Vec::with_capacity(len);
        for _ in 0..len {
            ys.push(r.get_u64()? as u8);
        }
        labels.insert(task, ys);
    }
    let dataset = Dataset::new(features, sensitive, labels, n_groups, kind)?;
    Ok((dataset, source_hash, schema_hash))
}

/// Resolve the cache directory: explicit argument, else `FRG_CACHE_DIR`,
/// else `.frg-cache` under the current directory.
pub fn resolve_cache_dir(explicit: Option<&Path>) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    if let Ok(env) = std::env::var("FRG_CACHE_DIR") {
        if !env.is_empty() {
            return PathBuf::from(env);
        }
    }
    PathBuf::from(".frg-cache")
}
