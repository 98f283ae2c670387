//! Binary weight container.
//!
//! Layout (all integers little endian):
//!
//! ```text
//! magic "NFRW" | u32 version | u32 array count
//! per array: u16 name length | name (UTF-8) | u8 rank | u32 dims[rank] | f32 values
//! ```
//!
//! Arrays are written in store order. Loading matches by name and checks
//! shapes before touching the store, so a failed load leaves it unchanged.

use std::path::Path;

use crate::params::ParameterStore;

pub const MAGIC: &[u8; 4] = b"NFRW";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum WeightsError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not a weight file (bad magic)")]
    BadMagic,
    #[error("unsupported weight file version {0}")]
    UnsupportedVersion(u32),
    #[error("weight file truncated while reading {0}")]
    Truncated(String),
    #[error("weight file is malformed: {0}")]
    Malformed(String),
    #[error("parameter {0:?} is missing from the weight file")]
    Missing(String),
    #[error("parameter {name:?} has shape {found:?} in the weight file, expected {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("weight file contains unknown array {0:?}")]
    Unexpected(String),
}

/// One array read from a container.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

/// Serializes arrays in the given order; values are narrowed to `f32`.
pub fn encode<'a>(arrays: impl IntoIterator<Item = (&'a str, &'a [usize], &'a [f64])>) -> Vec<u8> {
    let arrays: Vec<_> = arrays.into_iter().collect();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(arrays.len() as u32).to_le_bytes());
    for (name, shape, values) in arrays {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(shape.len() as u8);
        for &d in shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in values {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], WeightsError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| WeightsError::Truncated(what.to_string()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, WeightsError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Vec<NamedArray>, WeightsError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic").map_err(|_| WeightsError::BadMagic)? != MAGIC {
        return Err(WeightsError::BadMagic);
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(WeightsError::UnsupportedVersion(version));
    }
    let count = r.u32("array count")? as usize;
    let mut arrays = Vec::with_capacity(count.min(1 << 16));
    for i in 0..count {
        let len = u16::from_le_bytes(r.take(2, "name length")?.try_into().expect("2 bytes")) as usize;
        let name = std::str::from_utf8(r.take(len, "name")?)
            .map_err(|_| WeightsError::Malformed(format!("array {i} name is not UTF-8")))?
            .to_string();
        let rank = r.take(1, "rank")?[0] as usize;
        let shape = (0..rank)
            .map(|_| r.u32(&format!("dims of {name}")).map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let numel = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| WeightsError::Malformed(format!("{name}: shape {shape:?} overflows")))?;
        let raw = r.take(
            numel
                .checked_mul(4)
                .ok_or_else(|| WeightsError::Malformed(format!("{name}: too large")))?,
            &format!("values of {name}"),
        )?;
        let values = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        arrays.push(NamedArray { name, shape, values });
    }
    if r.pos != bytes.len() {
        return Err(WeightsError::Malformed(format!(
            "{} trailing bytes after the last array",
            bytes.len() - r.pos
        )));
    }
    Ok(arrays)
}

/// Encodes every parameter of `store` in store order.
pub fn store_to_bytes(store: &ParameterStore) -> Vec<u8> {
    encode(store.iter().map(|p| (p.name.as_str(), p.shape.as_slice(), p.values.as_slice())))
}

/// Replaces every value in `store` with the arrays in `bytes`. The container
/// must hold exactly the store's parameters, by name and shape.
pub fn load_into_store(store: &mut ParameterStore, bytes: &[u8]) -> Result<(), WeightsError> {
    let arrays = decode(bytes)?;
    let mut by_name = std::collections::HashMap::with_capacity(arrays.len());
    for a in &arrays {
        if by_name.insert(a.name.as_str(), a).is_some() {
            return Err(WeightsError::Malformed(format!("array {:?} appears twice", a.name)));
        }
    }
    for p in store.iter() {
        let a = by_name.get(p.name.as_str()).ok_or_else(|| WeightsError::Missing(p.name.clone()))?;
        if a.shape != p.shape {
            return Err(WeightsError::ShapeMismatch {
                name: p.name.clone(),
                expected: p.shape.clone(),
                found: a.shape.clone(),
            });
        }
    }
    if let Some(extra) = arrays.iter().find(|a| store.id(&a.name).is_none()) {
        return Err(WeightsError::Unexpected(extra.name.clone()));
    }
    for p in store.iter_mut() {
        let a = by_name[p.name.as_str()];
        for (dst, &src) in p.values.iter_mut().zip(&a.values) {
            *dst = f64::from(src);
        }
    }
    Ok(())
}

pub fn read_file(path: &Path) -> Result<Vec<u8>, WeightsError> {
    std::fs::read(path).map_err(|source| WeightsError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), WeightsError> {
    std::fs::write(path, bytes).map_err(|source| WeightsError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> ParameterStore {
        let mut s = ParameterStore::new();
        s.add("a.weight", vec![2, 1, 1, 1], vec![0.5, -1.25]).unwrap();
        s.add("a.bias", vec![2], vec![0.0, 3.0]).unwrap();
        s
    }

    #[test]
    fn header_layout() {
        let bytes = store_to_bytes(&store());
        assert_eq!(&bytes[..4], b"NFRW");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &2u32.to_le_bytes());
        assert_eq!(&bytes[12..14], &8u16.to_le_bytes());
        assert_eq!(&bytes[14..22], b"a.weight");
        assert_eq!(bytes[22], 4);
        // header + 2 arrays: (2+8+1+16+8) + (2+6+1+4+8)
        assert_eq!(bytes.len(), 12 + 35 + 21);
    }

    #[test]
    fn round_trip_and_errors() {
        let src = store();
        let bytes = store_to_bytes(&src);
        let mut dst = store();
        dst.fill(9.0);
        load_into_store(&mut dst, &bytes).unwrap();
        assert_eq!(dst, src);

        assert!(matches!(load_into_store(&mut dst, &bytes[..bytes.len() - 1]), Err(WeightsError::Truncated(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(load_into_store(&mut dst, &bad), Err(WeightsError::BadMagic)));
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(load_into_store(&mut dst, &bad), Err(WeightsError::UnsupportedVersion(2))));

        let mut other = ParameterStore::new();
        other.add("a.weight", vec![2, 1, 1, 1], vec![0.0; 2]).unwrap();
        other.add("a.bias", vec![3], vec![0.0; 3]).unwrap();
        let e = load_into_store(&mut other, &bytes).unwrap_err();
        assert!(matches!(&e, WeightsError::ShapeMismatch { name, .. } if name == "a.bias"));
        assert_eq!(other.by_name("a.weight").unwrap().values, vec![0.0; 2], "no partial load");

        let mut bigger = store();
        bigger.add("b", vec![1], vec![0.0]).unwrap();
        assert!(matches!(load_into_store(&mut bigger, &bytes), Err(WeightsError::Missing(n)) if n == "b"));

        let mut smaller = ParameterStore::new();
        smaller.add("a.bias", vec![2], vec![0.0; 2]).unwrap();
        assert!(matches!(load_into_store(&mut smaller, &bytes), Err(WeightsError::Unexpected(n)) if n == "a.weight"));
    }
}
