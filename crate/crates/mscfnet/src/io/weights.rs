//! Binary weight container. Layout, all integers little-endian:
//!
//! ```text
//! magic  b"MSCF"
//! u32    format version (= 1)
//! u32    entry count
//! entry* { u32 name_len, name utf-8, u8 rank (= 4), u32 dims[rank],
//!          f64 values[product(dims)] }
//! ```
//!
//! Every stored tensor is saved, running statistics included, in
//! registration order; a round trip is bitwise identity. Loading demands
//! that the file's census matches the target network exactly.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::{Shape, Tensor};

pub const MAGIC: [u8; 4] = *b"MSCF";
pub const FORMAT_VERSION: u32 = 1;

pub fn weight_bytes(store: &ParamStore) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (_, p) in store.iter() {
        let name = p.name.as_bytes();
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name);
        out.push(4u8);
        let s = p.value.shape();
        for dim in [s.b, s.c, s.h, s.w] {
            out.extend_from_slice(&(dim as u32).to_le_bytes());
        }
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn save_weights(store: &ParamStore, path: &Path) -> Result<()> {
    Ok(std::fs::write(path, weight_bytes(store))?)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    entry: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::TruncatedAtEntry(self.entry));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
}

/// Parse and validate a weight file against `store`'s census, then assign
/// every tensor. The store is untouched on any error.
pub fn load_weights_from_bytes(store: &mut ParamStore, bytes: &[u8]) -> Result<()> {
    if bytes.len() < 4 || bytes[..4] != MAGIC {
        return Err(Error::BadMagic);
    }
    let mut r = Reader {
        bytes,
        pos: 4,
        entry: 0,
    };
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let count = r.u32()? as usize;
    let mut entries: Vec<(String, Shape, Vec<f64>)> = Vec::with_capacity(count);
    for entry in 0..count {
        r.entry = entry;
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::CensusMismatch(format!("entry {entry} has a non-utf8 name")))?
            .to_string();
        let rank = r.u8()?;
        if rank != 4 {
            return Err(Error::CensusMismatch(format!(
                "entry `{name}` has rank {rank}, expected 4"
            )));
        }
        let mut dims = [0usize; 4];
        for d in &mut dims {
            *d = r.u32()? as usize;
        }
        let shape = Shape::new(dims[0], dims[1], dims[2], dims[3]);
        let raw = r.take(shape.count() * 8)?;
        let values: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        entries.push((name, shape, values));
    }

    // census check: exact same name set with matching shapes
    let mut by_name: HashMap<&str, usize> = HashMap::new();
    for (i, (name, _, _)) in entries.iter().enumerate() {
        if by_name.insert(name.as_str(), i).is_some() {
            return Err(Error::CensusMismatch(format!("duplicate entry `{name}`")));
        }
    }
    for (_, p) in store.iter() {
        match by_name.get(p.name.as_str()) {
            None => {
                return Err(Error::CensusMismatch(format!(
                    "missing entry `{}`",
                    p.name
                )))
            }
            Some(&i) => {
                let shape = entries[i].1;
                if shape != p.value.shape() {
                    return Err(Error::CensusMismatch(format!(
                        "entry `{}` has shape {}, expected {}",
                        p.name,
                        shape,
                        p.value.shape()
                    )));
                }
            }
        }
    }
    if entries.len() != store.len() {
        for (name, _, _) in &entries {
            if store.lookup(name).is_none() {
                return Err(Error::CensusMismatch(format!("extra entry `{name}`")));
            }
        }
    }

    for (name, shape, values) in entries {
        let id = store.lookup(&name).expect("census-checked name");
        *store.value_mut(id) = Tensor::from_vec(shape, values)?;
    }
    Ok(())
}

pub fn load_weights(store: &mut ParamStore, path: &Path) -> Result<()> {
    let bytes = std::fs::read(path)?;
    load_weights_from_bytes(store, &bytes)
}
