//! Binary checkpoint: `SAIDCKPT`, u32 version, then little-endian header
//! (u64 n_users, u64 n_items, u32 embedding_dim, u32 layer count, u32 widths,
//! f64 clip epsilon, u64 parameter count) and the raw f64 parameters.

use std::fs;
use std::path::Path;

use super::{CtrModel, ModelShape};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SAIDCKPT";
const VERSION: u32 = 1;

pub fn save_checkpoint(path: &Path, model: &CtrModel) -> Result<()> {
    let shape = model.shape();
    let mut out = Vec::with_capacity(64 + 8 * model.params().len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(shape.n_users as u64).to_le_bytes());
    out.extend_from_slice(&(shape.n_items as u64).to_le_bytes());
    out.extend_from_slice(&(shape.embedding_dim as u32).to_le_bytes());
    out.extend_from_slice(&(shape.hidden.len() as u32).to_le_bytes());
    for &h in &shape.hidden {
        out.extend_from_slice(&(h as u32).to_le_bytes());
    }
    out.extend_from_slice(&model.clip_epsilon().to_le_bytes());
    out.extend_from_slice(&(model.params().len() as u64).to_le_bytes());
    for p in model.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.at + n;
        if end > self.bytes.len() {
            return Err(Error::Checkpoint("truncated checkpoint".into()));
        }
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<CtrModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader { bytes: &bytes, at: 0 };
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let n_users = r.u64()? as usize;
    let n_items = r.u64()? as usize;
    let embedding_dim = r.u32()? as usize;
    let layers = r.u32()? as usize;
    let hidden = (0..layers).map(|_| r.u32().map(|h| h as usize)).collect::<Result<Vec<_>>>()?;
    let clip = r.f64()?;
    let n_params = r.u64()? as usize;
    let mut model = CtrModel::zeros(ModelShape {
        n_users,
        n_items,
        embedding_dim,
        hidden,
    })?
    .with_clip_epsilon(clip)?;
    if n_params != model.params().len() {
        return Err(Error::Checkpoint(format!(
            "parameter count {n_params} does not match shape ({})",
            model.params().len()
        )));
    }
    for p in model.params_mut() {
        *p = r.f64()?;
    }
    if r.at != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    Ok(model)
}
