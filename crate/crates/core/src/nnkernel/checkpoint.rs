//! Binary parameter container.
//!
//! Layout (little-endian): magic `MMSCSCKP`, u32 version, u64 store seed,
//! u32 metadata length, metadata bytes (UTF-8 JSON), u32 entry count, then per
//! entry in name order: u32 name length, name bytes, u32 rank, u64 per
//! dimension, float64 payload.

use std::io::{Read, Write};

use super::{KernelError, ParameterStore, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MMSCSCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint(w: &mut impl Write, metadata: &str, store: &ParameterStore) -> Result<(), KernelError> {
    let mut buf = Vec::with_capacity(64 + store.scalar_count() * 8);
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&store.seed.to_le_bytes());
    buf.extend_from_slice(&(metadata.len() as u32).to_le_bytes());
    buf.extend_from_slice(metadata.as_bytes());
    buf.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (name, t) in store.iter() {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
        for &d in &t.shape {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &x in &t.data {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], KernelError> {
        if self.bytes.len() - self.pos < n {
            return Err(KernelError::Checkpoint(format!("truncated at byte offset {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, KernelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, KernelError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self, n: usize) -> Result<String, KernelError> {
        let at = self.pos;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| KernelError::Checkpoint(format!("invalid UTF-8 at byte offset {at}")))
    }
}

/// Reads a checkpoint, returning its metadata string and parameters.
pub fn read_checkpoint(r: &mut impl Read) -> Result<(String, ParameterStore), KernelError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut c = Cursor { bytes: &bytes, pos: 0 };
    if c.take(8).ok() != Some(CHECKPOINT_MAGIC.as_slice()) {
        return Err(KernelError::Checkpoint("bad magic: not a model checkpoint".into()));
    }
    let version = c.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(KernelError::Checkpoint(format!("unsupported checkpoint version {version}")));
    }
    let seed = c.u64()?;
    let meta_len = c.u32()? as usize;
    let metadata = c.string(meta_len)?;
    let count = c.u32()?;
    let mut store = ParameterStore::new(seed);
    for _ in 0..count {
        let name_len = c.u32()? as usize;
        let name = c.string(name_len)?;
        let rank = c.u32()? as usize;
        let shape = (0..rank).map(|_| c.u64().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        let n: usize = shape.iter().product();
        let payload = c.take(n.checked_mul(8).ok_or_else(|| KernelError::Checkpoint("tensor too large".into()))?)?;
        let data = payload.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect();
        store.insert(&name, Tensor::new(shape, data));
    }
    if c.pos != bytes.len() {
        return Err(KernelError::Checkpoint(format!("trailing bytes at offset {}", c.pos)));
    }
    Ok((metadata, store))
}
