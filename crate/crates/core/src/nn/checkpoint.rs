//! CKPT binary checkpoint format.
//!
//! Layout, all integers little-endian:
//!   magic `CLNG` | version u32 | metadata length u32 | metadata bytes
//!   | tensor count u32 | records
//! Each record: name length u32, name bytes, rank u32, dims u64 each,
//! then raw f32 data. Metadata is `key=value` lines sorted by key, so a
//! save -> load -> save cycle is byte-identical.

use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};
use crate::io_util::write_atomic;
use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"CLNG";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CheckpointMeta {
    pub entries: BTreeMap<String, String>,
}

impl CheckpointMeta {
    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Result<&str> {
        self.entries
            .get(key)
            .map(|s| s.as_str())
            .ok_or_else(|| Error::Checkpoint(format!("missing metadata field '{key}'")))
    }

    pub fn get_parsed<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?
            .parse()
            .map_err(|_| Error::Checkpoint(format!("metadata field '{key}' has an invalid value")))
    }

    fn to_bytes(&self) -> Vec<u8> {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push('=');
            out.push_str(v);
            out.push('\n');
        }
        out.into_bytes()
    }

    fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let text = std::str::from_utf8(bytes)
            .map_err(|_| Error::Checkpoint("metadata is not valid UTF-8".into()))?;
        let mut entries = BTreeMap::new();
        for line in text.lines() {
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Checkpoint(format!("bad metadata line '{line}'")))?;
            entries.insert(k.to_string(), v.to_string());
        }
        Ok(CheckpointMeta { entries })
    }
}

pub fn save_checkpoint<T: Scalar>(
    path: impl AsRef<Path>,
    meta: &CheckpointMeta,
    tensors: &[(String, Tensor<T>)],
) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    let meta_bytes = meta.to_bytes();
    buf.extend_from_slice(&(meta_bytes.len() as u32).to_le_bytes());
    buf.extend_from_slice(&meta_bytes);
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, tensor) in tensors {
        let name_bytes = name.as_bytes();
        buf.extend_from_slice(&(name_bytes.len() as u32).to_le_bytes());
        buf.extend_from_slice(name_bytes);
        buf.extend_from_slice(&(tensor.shape().len() as u32).to_le_bytes());
        for &d in tensor.shape() {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for x in tensor.data() {
            buf.extend_from_slice(&x.as_f32().to_le_bytes());
        }
    }
    write_atomic(path.as_ref(), &buf)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() < n {
            return Err(Error::Checkpoint("unexpected end of file".into()));
        }
        let (head, tail) = self.bytes.split_at(n);
        self.bytes = tail;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        b.copy_from_slice(self.take(4)?);
        Ok(u32::from_le_bytes(b))
    }

    fn u64(&mut self) -> Result<u64> {
        let mut b = [0u8; 8];
        b.copy_from_slice(self.take(8)?);
        Ok(u64::from_le_bytes(b))
    }
}

pub fn load_checkpoint<T: Scalar>(
    path: impl AsRef<Path>,
) -> Result<(CheckpointMeta, Vec<(String, Tensor<T>)>)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path.as_ref())?.read_to_end(&mut bytes)?;
    let mut r = Reader { bytes: &bytes };

    let magic = r.take(4)?;
    if magic != MAGIC {
        return Err(Error::Checkpoint(format!(
            "magic mismatch: expected {:?}, found {:?}",
            MAGIC, magic
        )));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "version mismatch: expected {VERSION}, found {version}"
        )));
    }
    let meta_len = r.u32()? as usize;
    let meta = CheckpointMeta::from_bytes(r.take(meta_len)?)?;

    let count = r.u32()? as usize;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Checkpoint("tensor name is not valid UTF-8".into()))?
            .to_string();
        let rank = r.u32()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u64()? as usize);
        }
        let numel: usize = shape.iter().product();
        let raw = r.take(numel * 4)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| T::from_f32(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect();
        tensors.push((name, Tensor::from_vec(&shape, data)));
    }
    if !r.bytes.is_empty() {
        return Err(Error::Checkpoint("trailing bytes after tensor records".into()));
    }
    Ok((meta, tensors))
}
