//! `NDCK` checkpoint files.
//!
//! Layout, all little-endian: magic `NDCK`, `u32` version (1), `u32`
//! parameter count, then for each parameter in lexicographic name order:
//! `u16` name length, UTF-8 name, `u8` rank, `u32` per dimension, raw `f32`
//! data.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::params::ParamStore;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"NDCK";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

pub fn encode(store: &ParamStore) -> Result<Vec<u8>> {
    let ids = store.sorted_ids();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(ids.len() as u32).to_le_bytes());
    for id in ids {
        let p = store.get(id);
        let name = p.name.as_bytes();
        let name_len = u16::try_from(name.len())
            .map_err(|_| Error::Checkpoint(format!("name too long: {}", p.name)))?;
        out.extend_from_slice(&name_len.to_le_bytes());
        out.extend_from_slice(name);
        let shape = p.tensor.shape();
        out.push(
            u8::try_from(shape.len())
                .map_err(|_| Error::Checkpoint(format!("rank too large: {}", p.name)))?,
        );
        for &d in shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in p.tensor.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint(format!(
                "truncated at byte {} (wanted {n} more)",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Vec<CheckpointEntry>> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic, not an NDCK file".into()));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count = c.u32()? as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let len = c.u16()? as usize;
        let name = std::str::from_utf8(c.take(len)?)
            .map_err(|e| Error::Checkpoint(format!("parameter name not UTF-8: {e}")))?
            .to_string();
        let rank = c.u8()? as usize;
        let shape = (0..rank)
            .map(|_| c.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let numel: usize = shape.iter().product();
        let raw = c.take(numel * 4)?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        entries.push(CheckpointEntry { name, shape, data });
    }
    if c.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes",
            bytes.len() - c.pos
        )));
    }
    Ok(entries)
}

/// Overwrites every parameter in `store` from `entries`. Names and shapes
/// must match exactly.
pub fn restore(store: &mut ParamStore, entries: &[CheckpointEntry]) -> Result<()> {
    if entries.len() != store.len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint has {} parameters, model has {}",
            entries.len(),
            store.len()
        )));
    }
    for e in entries {
        let id = store
            .id_of(&e.name)
            .ok_or_else(|| Error::Checkpoint(format!("unknown parameter {:?}", e.name)))?;
        let p = store.get_mut(id);
        if p.tensor.shape() != e.shape.as_slice() {
            return Err(Error::Checkpoint(format!(
                "{}: checkpoint shape {:?}, model shape {:?}",
                e.name,
                e.shape,
                p.tensor.shape()
            )));
        }
        p.tensor.data_mut().copy_from_slice(&e.data);
    }
    Ok(())
}

pub fn save(store: &ParamStore, path: &Path) -> Result<()> {
    let bytes = encode(store)?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn load(store: &mut ParamStore, path: &Path) -> Result<()> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    restore(store, &decode(&bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn store() -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("b.weight", Tensor::new(&[2], vec![1.5, -2.0]).unwrap())
            .unwrap();
        s.insert("a.bias", Tensor::new(&[1, 1], vec![0.25]).unwrap())
            .unwrap();
        s
    }

    #[test]
    fn golden_bytes() {
        let bytes = encode(&store()).unwrap();
        let mut expected = Vec::new();
        expected.extend_from_slice(b"NDCK");
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&2u32.to_le_bytes());
        // "a.bias" sorts first
        expected.extend_from_slice(&6u16.to_le_bytes());
        expected.extend_from_slice(b"a.bias");
        expected.push(2);
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&0.25f32.to_le_bytes());
        expected.extend_from_slice(&8u16.to_le_bytes());
        expected.extend_from_slice(b"b.weight");
        expected.push(1);
        expected.extend_from_slice(&2u32.to_le_bytes());
        expected.extend_from_slice(&1.5f32.to_le_bytes());
        expected.extend_from_slice(&(-2.0f32).to_le_bytes());
        assert_eq!(bytes, expected);
    }

    #[test]
    fn decode_rejects_garbage() {
        assert!(decode(b"NOPE").is_err());
        let mut bytes = encode(&store()).unwrap();
        bytes.pop();
        assert!(decode(&bytes).is_err());
        let mut bytes = encode(&store()).unwrap();
        bytes.push(0);
        assert!(decode(&bytes).is_err());
    }

    #[test]
    fn restore_checks_shapes() {
        let mut s = store();
        let mut entries = decode(&encode(&s).unwrap()).unwrap();
        entries[1].shape = vec![1, 2];
        assert!(restore(&mut s, &entries).is_err());
    }
}
