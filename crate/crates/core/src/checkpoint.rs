//! Versioned binary container for model and basis parameters.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic   b"RFNOCKPT"
//! version u32
//! meta    u32 byte length, then UTF-8 `key=value` lines
//! count   u32
//! count x { name_len u32, name, kind u8 (0 real, 1 complex), rank u32,
//!           extents rank x u32, values f32 (complex interleaved re, im) }
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::params::ParamSet;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"RFNOCKPT";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    /// Ordered `key=value` metadata (model config, normalization, seeds).
    pub meta: IndexMap<String, String>,
    pub params: ParamSet,
    /// Names of parameters stored as complex; their in-memory tensors carry a
    /// trailing `[re, im]` axis.
    pub complex: Vec<String>,
}

impl Checkpoint {
    pub fn new(meta: IndexMap<String, String>, params: ParamSet, complex: Vec<String>) -> Self {
        Self {
            meta,
            params,
            complex,
        }
    }

    pub fn meta(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Config(format!("checkpoint lacks '{key}'")))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let mut text = String::new();
        for (k, v) in &self.meta {
            if k.contains(['=', '\n']) || v.contains('\n') {
                return Err(Error::Config(format!("metadata entry '{k}' is not line-safe")));
            }
            text.push_str(k);
            text.push('=');
            text.push_str(v);
            text.push('\n');
        }
        put_u32(&mut out, text.len())?;
        out.extend_from_slice(text.as_bytes());
        put_u32(&mut out, self.params.len())?;
        for (name, t) in self.params.iter() {
            let is_complex = self.complex.iter().any(|c| c == name);
            put_u32(&mut out, name.len())?;
            out.extend_from_slice(name.as_bytes());
            out.push(u8::from(is_complex));
            let shape = if is_complex {
                match t.shape().split_last() {
                    Some((2, rest)) => rest,
                    _ => return Err(Error::shape(format!("complex parameter {name} lacks [re, im] axis"))),
                }
            } else {
                t.shape()
            };
            put_u32(&mut out, shape.len())?;
            for &d in shape {
                put_u32(&mut out, d)?;
            }
            for &v in t.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0, origin };
        if r.take(8)? != MAGIC {
            return Err(Error::format(origin, "bad magic"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::format(origin, format!("unsupported version {version}")));
        }
        let len = r.u32()? as usize;
        let text = std::str::from_utf8(r.take(len)?).map_err(|e| Error::format(origin, e.to_string()))?;
        let mut meta = IndexMap::new();
        for line in text.lines() {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format(origin, format!("bad metadata line '{line}'")))?;
            meta.insert(k.to_string(), v.to_string());
        }
        let count = r.u32()?;
        let mut params = ParamSet::new();
        let mut complex = Vec::new();
        for _ in 0..count {
            let n = r.u32()? as usize;
            let name = String::from_utf8(r.take(n)?.to_vec()).map_err(|e| Error::format(origin, e.to_string()))?;
            let kind = r.take(1)?[0];
            let rank = r.u32()? as usize;
            let mut shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            match kind {
                0 => {}
                1 => {
                    shape.push(2);
                    complex.push(name.clone());
                }
                k => return Err(Error::format(origin, format!("unknown tensor kind {k}"))),
            }
            let values: usize = shape.iter().product();
            let raw = r.take(values * 4)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            params.insert(name, Tensor::new(&shape, data)?);
        }
        if r.pos != bytes.len() {
            return Err(Error::format(origin, "trailing bytes"));
        }
        Ok(Self {
            meta,
            params,
            complex,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let mut f = fs::File::create(path)?;
        f.write_all(&bytes)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes, path)
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Config(format!("{v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    origin: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::format(self.origin, "truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> Checkpoint {
        let mut params = ParamSet::new();
        params.insert("a.w", Tensor::from_fn(&[2, 3], |k| k as f64 * 0.5 - 1.0));
        params.insert("a.r", Tensor::from_fn(&[1, 2, 2], |k| k as f64));
        let mut meta = IndexMap::new();
        meta.insert("kind".to_string(), "recfno".to_string());
        meta.insert("width".to_string(), "8".to_string());
        Checkpoint::new(meta, params, vec!["a.r".into()])
    }

    #[test]
    fn bytes_round_trip() {
        let c = sample();
        let back = Checkpoint::from_bytes(&c.to_bytes().unwrap(), Path::new("mem")).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = sample().to_bytes().unwrap();
        let p = Path::new("mem");
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad, p).is_err());
        let mut bad = bytes.clone();
        bad[8] = 9;
        assert!(Checkpoint::from_bytes(&bad, p).is_err());
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1], p).is_err());
    }

    proptest! {
        #[test]
        fn f32_values_survive_exactly(vals in proptest::collection::vec(-1e6f32..1e6f32, 1..40)) {
            let mut params = ParamSet::new();
            let n = vals.len();
            params.insert("x", Tensor::new(&[n], vals.iter().map(|&v| v as f64).collect()).unwrap());
            let c = Checkpoint::new(IndexMap::new(), params, vec![]);
            let back = Checkpoint::from_bytes(&c.to_bytes().unwrap(), Path::new("mem")).unwrap();
            prop_assert_eq!(back, c);
        }
    }
}
