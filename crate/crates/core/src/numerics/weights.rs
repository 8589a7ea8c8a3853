//! Weight file: little-endian `u64` header length, a JSON header naming
//! every tensor and its shape, then all values as little-endian `f64` in
//! header order.

use std::io::{Read, Write};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::ParamSet;
use crate::error::{Error, Result};

pub const WEIGHT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightHeader {
    pub format_version: u32,
    /// Model family, e.g. `"gnn"` or `"value_net"`.
    pub kind: String,
    pub hyper: serde_json::Value,
    pub tensors: Vec<TensorEntry>,
}

pub fn write_weights(
    w: &mut impl Write,
    kind: &str,
    hyper: serde_json::Value,
    params: &ParamSet,
) -> Result<()> {
    let header = WeightHeader {
        format_version: WEIGHT_FORMAT_VERSION,
        kind: kind.to_string(),
        hyper,
        tensors: params
            .shapes()
            .into_iter()
            .map(|(name, shape)| TensorEntry { name, shape })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    let mut buf = Vec::with_capacity(params.scalar_count() * 8);
    for (_, m) in params.iter() {
        for x in m.iter() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_weights(r: &mut impl Read) -> Result<(WeightHeader, ParamSet)> {
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len) as usize;
    if len > 1 << 24 {
        return Err(Error::WeightFormat(format!("implausible header length {len}")));
    }
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    let header: WeightHeader = serde_json::from_slice(&json)?;
    if header.format_version != WEIGHT_FORMAT_VERSION {
        return Err(Error::WeightFormat(format!(
            "unsupported format version {}",
            header.format_version
        )));
    }
    let mut params = ParamSet::new();
    for t in &header.tensors {
        let n = t.shape[0] * t.shape[1];
        let mut bytes = vec![0u8; n * 8];
        r.read_exact(&mut bytes)
            .map_err(|_| Error::WeightFormat(format!("truncated data for {}", t.name)))?;
        let data: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let m = Array2::from_shape_vec((t.shape[0], t.shape[1]), data)
            .map_err(|e| Error::WeightFormat(e.to_string()))?;
        params.push(t.name.clone(), m);
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::WeightFormat(format!("{} trailing bytes", rest.len())));
    }
    Ok((header, params))
}
