//! Binary checkpoint format.
//!
//! ```text
//! magic "TSEQCKPT" | u32 version | u32 header length | JSON header
//! u32 block count | per block: u32 name length, name, u64 value count, f32 LE values
//! sha256 of everything above
//! ```
//! All integers are little-endian. Values are stored in single precision.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Model, ModelConfig};
use crate::error::{Error, Result};
use crate::vocab::VocabLayout;

const MAGIC: &[u8; 8] = b"TSEQCKPT";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    layout: VocabLayout,
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let header = serde_json::to_vec(&Header { config: model.config.clone(), layout: model.layout.clone() })
        .map_err(|e| Error::Format(e.to_string()))?;
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&(model.blocks.len() as u32).to_le_bytes());
    for block in &model.blocks {
        out.extend_from_slice(&(block.name.len() as u32).to_le_bytes());
        out.extend_from_slice(block.name.as_bytes());
        let values = block.slot.slice(&model.params);
        out.extend_from_slice(&(values.len() as u64).to_le_bytes());
        for &v in values {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, &out)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format("checkpoint truncated".into()))?;
        let out = &self.bytes[self.at..end];
        self.at = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let bytes = fs::read(path)?;
    if bytes.len() < MAGIC.len() + 32 {
        return Err(Error::Format(format!("{} is too short to be a checkpoint", path.display())));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::Format(format!("checksum mismatch in {}", path.display())));
    }
    let mut r = Reader { bytes: body, at: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Format(format!("{} is not a checkpoint", path.display())));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let header_len = r.u32()? as usize;
    let header: Header =
        serde_json::from_slice(r.take(header_len)?).map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;
    let mut model = Model::new(header.config, header.layout, 0)?;
    let count = r.u32()? as usize;
    if count != model.blocks.len() {
        return Err(Error::Format(format!("checkpoint has {count} blocks, model expects {}", model.blocks.len())));
    }
    for i in 0..count {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?).map_err(|e| Error::Format(e.to_string()))?;
        let block = &model.blocks[i];
        if name != block.name {
            return Err(Error::Format(format!("block {i} is `{name}`, expected `{}`", block.name)));
        }
        let len = r.u64()? as usize;
        if len != block.slot.len() {
            return Err(Error::Format(format!("block `{name}` has {len} values, expected {}", block.slot.len())));
        }
        let raw = r.take(len * 4)?;
        let slot = block.slot;
        let dst = slot.slice_mut(&mut model.params);
        for (d, chunk) in dst.iter_mut().zip(raw.chunks_exact(4)) {
            *d = f32::from_le_bytes(chunk.try_into().expect("4 bytes")) as f64;
        }
    }
    if r.at != body.len() {
        return Err(Error::Format("trailing bytes after the last block".into()));
    }
    Ok(model)
}
