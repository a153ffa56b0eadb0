//! Flat binary container of named f32 arrays.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic   "TBCKPT01"            8 bytes
//! count   u32
//! entry*  name_len u16 | name (UTF-8) | kind u8 (0 weight, 1 buffer)
//!         | ndim u8 | dims u32 × ndim | values f32 × prod(dims)
//! ```
//!
//! Values are stored bit-for-bit, so encode/decode round-trips exactly.

use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{ParamKind, ParamStore};

pub const MAGIC: &[u8; 8] = b"TBCKPT01";
const MAX_NDIM: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub kind: ParamKind,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

pub fn encode(arrays: &[NamedArray]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(arrays.len() as u32).to_le_bytes());
    for a in arrays {
        let name = a.name.as_bytes();
        if name.len() > u16::MAX as usize || a.shape.is_empty() || a.shape.len() > MAX_NDIM {
            return Err(Error::Checkpoint(format!("cannot encode entry {}", a.name)));
        }
        if a.shape.iter().product::<usize>() != a.data.len() {
            return Err(Error::Checkpoint(format!("{}: shape/data length disagree", a.name)));
        }
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name);
        out.push(match a.kind {
            ParamKind::Weight => 0,
            ParamKind::Buffer => 1,
        });
        out.push(a.shape.len() as u8);
        for &d in &a.shape {
            let d = u32::try_from(d).map_err(|_| Error::Checkpoint(format!("{}: extent too large", a.name)))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in &a.data {
            out.extend_from_slice(&v.to_bits().to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
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

pub fn decode(bytes: &[u8]) -> Result<Vec<NamedArray>> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let count = r.u32()? as usize;
    let mut out = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let name_len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Checkpoint("name is not UTF-8".into()))?
            .to_string();
        let kind = match r.u8()? {
            0 => ParamKind::Weight,
            1 => ParamKind::Buffer,
            k => return Err(Error::Checkpoint(format!("{name}: unknown kind {k}"))),
        };
        let ndim = r.u8()? as usize;
        if ndim == 0 || ndim > MAX_NDIM {
            return Err(Error::Checkpoint(format!("{name}: rank {ndim}")));
        }
        let mut shape = Vec::with_capacity(ndim);
        let mut numel = 1usize;
        for _ in 0..ndim {
            let d = r.u32()? as usize;
            if d == 0 {
                return Err(Error::Checkpoint(format!("{name}: zero extent")));
            }
            numel = numel
                .checked_mul(d)
                .ok_or_else(|| Error::Checkpoint(format!("{name}: size overflow")))?;
            shape.push(d);
        }
        let bytes_needed = numel
            .checked_mul(4)
            .ok_or_else(|| Error::Checkpoint(format!("{name}: size overflow")))?;
        let raw = r.take(bytes_needed)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_bits(u32::from_le_bytes(c.try_into().unwrap())))
            .collect();
        out.push(NamedArray { name, kind, shape, data });
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(out)
}

pub fn snapshot(store: &ParamStore) -> Vec<NamedArray> {
    store
        .iter()
        .map(|(name, kind, t)| NamedArray {
            name: name.to_string(),
            kind,
            shape: t.shape().to_vec(),
            data: t.to_vec(),
        })
        .collect()
}

/// Copies `arrays` into `store`. Names, kinds and shapes must match exactly.
pub fn restore(store: &ParamStore, arrays: &[NamedArray]) -> Result<()> {
    if arrays.len() != store.len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint has {} arrays, model has {}",
            arrays.len(),
            store.len()
        )));
    }
    for a in arrays {
        let t = store
            .get(&a.name)
            .ok_or_else(|| Error::Checkpoint(format!("unknown array {}", a.name)))?;
        if t.shape() != a.shape.as_slice() {
            return Err(Error::Checkpoint(format!(
                "{}: shape {:?}, model expects {:?}",
                a.name,
                a.shape,
                t.shape()
            )));
        }
        t.set_data(&a.data)?;
    }
    Ok(())
}

pub fn save(store: &ParamStore, path: &Path) -> Result<()> {
    std::fs::write(path, encode(&snapshot(store))?)?;
    Ok(())
}

pub fn load(store: &ParamStore, path: &Path) -> Result<()> {
    let bytes = std::fs::read(path)?;
    restore(store, &decode(&bytes)?)
}
