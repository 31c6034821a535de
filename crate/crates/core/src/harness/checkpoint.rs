//! Binary checkpoint layout, all integers little-endian:
//!
//! ```text
//! magic    8 bytes  "SFLCKPT\0"
//! version  u32      1
//! config   u32 length + UTF-8 JSON {"model": ModelConfig, "vocab": [piece, ...]}
//! count    u32      number of tensors
//! tensor   u32 name length, name, u32 rank, rank × u32 dims, f32 data
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{FusionModel, ModelConfig};
use crate::params::ParamStore;
use crate::tensor::Tensor;
use crate::treebank::Vocab;

pub const MAGIC: &[u8; 8] = b"SFLCKPT\0";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ConfigBlock {
    model: ModelConfig,
    vocab: Vec<String>,
}

pub fn to_bytes(model: &FusionModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let block = ConfigBlock {
        model: model.config.clone(),
        vocab: model.vocab.pieces().to_vec(),
    };
    let json = serde_json::to_vec(&block).expect("config serializes");
    put_u32(&mut out, json.len());
    out.extend_from_slice(&json);
    put_u32(&mut out, model.store.len());
    for (name, t) in model.store.iter() {
        put_u32(&mut out, name.len());
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, t.shape().len());
        for &d in t.shape() {
            put_u32(&mut out, d);
        }
        for &x in t.data() {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    out
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&u32::try_from(v).expect("fits in u32").to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint(format!("truncated file at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<FusionModel> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(8).map_err(|_| Error::Checkpoint("version mismatch: not a checkpoint".into()))?;
    if magic != MAGIC {
        return Err(Error::Checkpoint("version mismatch: bad magic bytes".into()));
    }
    let version = r.u32()? as u32;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "version mismatch: file has {version}, expected {VERSION}"
        )));
    }
    let len = r.u32()?;
    let block: ConfigBlock = serde_json::from_slice(r.take(len)?)
        .map_err(|e| Error::Checkpoint(format!("config block: {e}")))?;
    let vocab = Vocab::from_pieces(block.vocab)?;
    let count = r.u32()?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let name_len = r.u32()?;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = r.u32()?;
        let shape = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = r.take(n.checked_mul(4).ok_or_else(|| Error::Checkpoint("tensor too large".into()))?)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        let t = Tensor::new(&shape, data).map_err(|e| Error::Checkpoint(format!("tensor {name}: {e}")))?;
        if store.id(&name).is_some() {
            return Err(Error::Checkpoint(format!("duplicate tensor {name}")));
        }
        store.add(name, t);
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    FusionModel::with_store(block.model, vocab, store)
}

pub fn save_checkpoint(model: &FusionModel, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(model))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<FusionModel> {
    from_bytes(&std::fs::read(path)?)
}
