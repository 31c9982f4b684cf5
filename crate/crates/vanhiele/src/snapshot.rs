//! Binary index snapshots.
//!
//! Layout (little-endian): `u32` dimension, `u32` model-id length and bytes, `u32` entry
//! count, then per entry a `u32` id length, the id bytes, and `dimension` `f32` values.

use std::path::Path;

use vanhiele_core::index::VectorIndex;
use vanhiele_core::vector::EmbeddingVector;

use crate::embedding::Reader;
use crate::error::{Error, Result};
use crate::io::write_atomic;

pub fn encode(index: &VectorIndex) -> Vec<u8> {
    let model = index.model_id().as_bytes();
    let mut out = Vec::new();
    out.extend_from_slice(&(index.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(model.len() as u32).to_le_bytes());
    out.extend_from_slice(model);
    out.extend_from_slice(&(index.len() as u32).to_le_bytes());
    for (id, v) in index.entries() {
        out.extend_from_slice(&(id.len() as u32).to_le_bytes());
        out.extend_from_slice(id.as_bytes());
        for x in v.values() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<VectorIndex, String> {
    let mut r = Reader(bytes);
    let truncated = || "truncated snapshot".to_string();
    let dim = r.u32().ok_or_else(truncated)? as usize;
    let model_len = r.u32().ok_or_else(truncated)? as usize;
    let model = std::str::from_utf8(r.take(model_len).ok_or_else(truncated)?).map_err(|e| e.to_string())?.to_string();
    let count = r.u32().ok_or_else(truncated)? as usize;
    let mut entries = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let id_len = r.u32().ok_or_else(truncated)? as usize;
        let id = std::str::from_utf8(r.take(id_len).ok_or_else(truncated)?).map_err(|e| e.to_string())?.to_string();
        let values = r.f32s(dim).ok_or_else(truncated)?;
        let v = EmbeddingVector::from_unit(values, model.clone()).map_err(|e| format!("entry {id:?}: {e}"))?;
        entries.push((id, v));
    }
    if !r.0.is_empty() {
        return Err("trailing bytes after last entry".into());
    }
    VectorIndex::from_entries(entries).map_err(|e| e.to_string())
}

pub fn write(path: &Path, index: &VectorIndex) -> Result<()> {
    write_atomic(path, &encode(index))
}

pub fn read(path: &Path) -> Result<VectorIndex> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|m| Error::malformed(path, m))
}
