//! Named-tensor file format.
//!
//! Layout (all little-endian, see [`crate::util::BinWriter`] for the shared
//! header/checksum framing):
//!
//! ```text
//! magic "FRGT" | version u32 | count u64
//!   repeated count times:
//!     name: u32 len + utf-8 bytes
//!     rows u64 | cols u64
//!     data: u64 len + len f64 values (row-major)
//! sha256(body)
//! ```

use std::path::Path;

use ndarray::Array2;

use crate::error::CoreError;
use crate::neural::mlp::ParamTensor;
use crate::util::{BinReader, BinWriter};
use crate::Result;

const MAGIC: &[u8; 4] = b"FRGT";
const VERSION: u32 = 1;

/// A tensor as read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub values: Array2<f64>,
}

pub fn write_tensors(path: &Path, tensors: &[&ParamTensor]) -> Result<()> {
    let mut w = BinWriter::new();
    encode_tensors(&mut w, tensors);
    w.write_to(path, MAGIC, VERSION)
}

/// Append the tensor block to an existing writer (used by composite files).
pub fn encode_tensors(w: &mut BinWriter, tensors: &[&ParamTensor]) {
    w.put_u64(tensors.len() as u64);
    for t in tensors {
        w.put_str(&t.name);
        w.put_u64(t.values.nrows() as u64);
        w.put_u64(t.values.ncols() as u64);
        w.put_f64_slice(t.values.as_slice().expect("standard layout"));
    }
}

pub fn read_tensors(path: &Path) -> Result<Vec<NamedTensor>> {
    let mut r = BinReader::open(path, MAGIC, VERSION)?;
    decode_tensors(&mut r)
}

pub fn decode_tensors(r: &mut BinReader) -> Result<Vec<NamedTensor>> {
    let count = r.get_u64()? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let name = r.get_str()?;
        let rows = r.get_u64()? as usize;
        let cols = r.get_u64()? as usize;
        let data = r.get_f64_vec()?;
        if data.len() != rows * cols {
            return Err(CoreError::serialization(format!(
                "tensor {name}: {} values for shape {rows}x{cols}",
                data.len()
            )));
        }
        let values = Array2::from_shape_vec((rows, cols), data)
            .map_err(|e| CoreError::serialization(e.to_string()))?;
        out.push(NamedTensor { name, values });
    }
    Ok(out)
}

/// Human-readable dump of a tensor list for inspection.
pub fn tensors_to_text(tensors: &[&ParamTensor]) -> String {
    let mut s = String::new();
    for t in tensors {
        s.push_str(&format!(
            "tensor {} shape ({}, {})\n",
            t.name,
            t.values.nrows(),
            t.values.ncols()
        ));
        for row in t.values.rows() {
            let vals: Vec<String> = row.iter().map(|v| format!("{v:.10e}")).collect();
            s.push_str("  ");
            s.push_str(&vals.join(" "));
            s.push('\n');
        }
    }
    s
}
