//! Binary file layouts shared across the workspace.
//!
//! - Embedding matrix: magic `ASHE`, version, rows, dim as little-endian
//!   u32s, then row-major IEEE-754 32-bit floats. Bit-exact across platforms.
//! - Video file: magic `ASHV`, version, frame count, feature dim, frames as
//!   32-bit floats, then a length-prefixed UTF-8 JSON metadata blob.
//! - Tensor container: a length-prefixed JSON shape manifest followed by one
//!   data block per tensor. Checkpoints store 64-bit floats so that training
//!   state survives a save/load round trip exactly.

use crate::error::{AshError, Result};
use std::io::{Read, Write};

pub const EMBED_MAGIC: &[u8; 4] = b"ASHE";
pub const VIDEO_MAGIC: &[u8; 4] = b"ASHV";
pub const FORMAT_VERSION: u32 = 1;

fn format_err(msg: impl Into<String>) -> AshError {
    AshError::Format(msg.into())
}

pub fn write_u32<W: Write>(w: &mut W, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

pub fn write_f32_slice<W: Write>(w: &mut W, data: &[f32]) -> std::io::Result<()> {
    let mut bytes = Vec::with_capacity(data.len() * 4);
    for v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&bytes)
}

pub fn read_f32_vec<R: Read>(r: &mut R, len: usize) -> std::io::Result<Vec<f32>> {
    let mut bytes = vec![0u8; len * 4];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn write_f64_slice<W: Write>(w: &mut W, data: &[f64]) -> std::io::Result<()> {
    let mut bytes = Vec::with_capacity(data.len() * 8);
    for v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&bytes)
}

pub fn read_f64_vec<R: Read>(r: &mut R, len: usize) -> std::io::Result<Vec<f64>> {
    let mut bytes = vec![0u8; len * 8];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Serialize an embedding matrix block (header + f32 payload).
pub fn write_embedding_block<W: Write>(
    w: &mut W,
    rows: usize,
    dim: usize,
    data: &[f32],
) -> Result<()> {
    debug_assert_eq!(data.len(), rows * dim);
    let io = |e: std::io::Error| AshError::Format(format!("embedding write: {e}"));
    w.write_all(EMBED_MAGIC).map_err(io)?;
    write_u32(w, FORMAT_VERSION).map_err(io)?;
    write_u32(w, rows as u32).map_err(io)?;
    write_u32(w, dim as u32).map_err(io)?;
    write_f32_slice(w, data).map_err(io)?;
    Ok(())
}

/// Parse one embedding matrix block.
pub fn read_embedding_block<R: Read>(r: &mut R) -> Result<(usize, usize, Vec<f32>)> {
    let io = |e: std::io::Error| AshError::Format(format!("embedding read: {e}"));
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != EMBED_MAGIC {
        return Err(format_err("bad embedding magic"));
    }
    let version = read_u32(r).map_err(io)?;
    if version != FORMAT_VERSION {
        return Err(format_err(format!("unsupported embedding version {version}")));
    }
    let rows = read_u32(r).map_err(io)? as usize;
    let dim = read_u32(r).map_err(io)? as usize;
    let data = read_f32_vec(r, rows * dim).map_err(io)?;
    Ok((rows, dim, data))
}

/// Size in bytes of an embedding block with the given shape.
pub fn embedding_block_len(rows: usize, dim: usize) -> u64 {
    16 + (rows * dim * 4) as u64
}

/// One tensor entry in the container manifest.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize, PartialEq)]
pub struct TensorMeta {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

/// Write a named-tensor container: u32 manifest length, JSON manifest, then
/// f64 data blocks in manifest order.
pub fn write_tensor_container<W: Write>(
    w: &mut W,
    manifest_extra: &serde_json::Value,
    tensors: &[(&str, usize, usize, &[f64])],
) -> Result<()> {
    let io = |e: std::io::Error| AshError::Format(format!("container write: {e}"));
    let metas: Vec<TensorMeta> = tensors
        .iter()
        .map(|(name, rows, cols, data)| {
            debug_assert_eq!(rows * cols, data.len());
            TensorMeta {
                name: name.to_string(),
                rows: *rows,
                cols: *cols,
            }
        })
        .collect();
    let manifest = serde_json::json!({ "tensors": metas, "extra": manifest_extra });
    let text = serde_json::to_string(&manifest).expect("manifest serializes");
    write_u32(w, text.len() as u32).map_err(io)?;
    w.write_all(text.as_bytes()).map_err(io)?;
    for (_, _, _, data) in tensors {
        write_f64_slice(w, data).map_err(io)?;
    }
    Ok(())
}

/// Read a named-tensor container back.
pub fn read_tensor_container<R: Read>(
    r: &mut R,
) -> Result<(serde_json::Value, Vec<(TensorMeta, Vec<f64>)>)> {
    let io = |e: std::io::Error| AshError::Format(format!("container read: {e}"));
    let len = read_u32(r).map_err(io)? as usize;
    let mut text = vec![0u8; len];
    r.read_exact(&mut text).map_err(io)?;
    let manifest: serde_json::Value =
        serde_json::from_slice(&text).map_err(|e| format_err(format!("manifest: {e}")))?;
    let metas: Vec<TensorMeta> =
        serde_json::from_value(manifest["tensors"].clone())
            .map_err(|e| format_err(format!("manifest tensors: {e}")))?;
    let extra = manifest["extra"].clone();
    let mut out = Vec::with_capacity(metas.len());
    for meta in metas {
        let data = read_f64_vec(r, meta.rows * meta.cols).map_err(io)?;
        out.push((meta, data));
    }
    Ok((extra, out))
}
