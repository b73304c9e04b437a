//! Binary checkpoint format (little-endian):
//!
//! ```text
//! "MFCK" | u32 version | u32 entry count
//! per entry: u16 name length | UTF-8 name | u8 rank | u32 dims[rank] | f64 values
//! u64 optimizer step
//! ```
//!
//! Every parameter `p` contributes three entries: `p`, `p.m` and `p.v`
//! (Adam first and second moments), so the entry count is three times the
//! number of parameters. Entries are written in lexicographic name order.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::params::Param;
use super::{ParamStore, Tensor};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"MFCK";
pub const VERSION: u32 = 1;

fn put_entry(buf: &mut Vec<u8>, name: &str, t: &Tensor) {
    buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
    buf.extend_from_slice(name.as_bytes());
    buf.push(t.rank() as u8);
    for &d in t.shape() {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in t.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode(store: &ParamStore) -> Vec<u8> {
    let mut entries: BTreeMap<String, &Tensor> = BTreeMap::new();
    for (name, p) in store.iter() {
        entries.insert(name.to_string(), &p.value);
        entries.insert(format!("{name}.m"), &p.m);
        entries.insert(format!("{name}.v"), &p.v);
    }
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (name, t) in &entries {
        put_entry(&mut buf, name, t);
    }
    buf.extend_from_slice(&store.step().to_le_bytes());
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        if self.pos + n > self.bytes.len() {
            return Err(format!("truncated at byte {}", self.pos));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> std::result::Result<u8, String> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> std::result::Result<u16, String> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> std::result::Result<ParamStore, String> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err("bad magic".into());
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let count = r.u32()? as usize;
    let mut entries = BTreeMap::new();
    for _ in 0..count {
        let len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|e| format!("entry name: {e}"))?
            .to_string();
        let rank = r.u8()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32()? as usize);
        }
        let n: usize = shape.iter().product();
        let raw = r.take(8 * n)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let t = Tensor::from_vec(&shape, data).map_err(|e| e.to_string())?;
        entries.insert(name, t);
    }
    let step = r.u64()?;
    if r.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - r.pos));
    }

    let mut store = ParamStore::new();
    let bases: Vec<String> = entries
        .keys()
        .filter(|k| !(k.ends_with(".m") || k.ends_with(".v")))
        .cloned()
        .collect();
    for base in bases {
        let value = entries.remove(&base).unwrap();
        let mut moment = |suffix: &str| {
            entries
                .remove(&format!("{base}.{suffix}"))
                .ok_or_else(|| format!("missing `{base}.{suffix}`"))
                .and_then(|t| {
                    if t.shape() == value.shape() {
                        Ok(t)
                    } else {
                        Err(format!("`{base}.{suffix}` shape differs from value"))
                    }
                })
        };
        let m = moment("m")?;
        let v = moment("v")?;
        let mut p = Param::new(value);
        p.m = m;
        p.v = v;
        store.insert_param(base, p);
    }
    if let Some(orphan) = entries.keys().next() {
        return Err(format!("moment entry `{orphan}` has no parameter"));
    }
    store.set_step(step);
    Ok(store)
}

pub fn save_checkpoint(path: impl AsRef<Path>, store: &ParamStore) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(store)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ParamStore> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|reason| Error::BadCheckpoint {
        path: path.to_path_buf(),
        reason,
    })
}
