//! `IVCK` container: named 32-bit tensors plus text metadata, sealed with a
//! SHA-256 of everything before it.
//!
//! Layout (little endian): magic `IVCK`, `u16` version, kind, config text and
//! metadata as `u32`-length-prefixed UTF-8, `u32` tensor count, then per
//! tensor a prefixed name, `u8` rank, `u64` dims and `f32` values, and
//! finally the 32-byte digest.

use std::collections::BTreeMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"IVCK";
pub const VERSION: u16 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub kind: String,
    pub config: String,
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<NamedTensor>,
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend((s.len() as u32).to_le_bytes());
    out.extend(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Checkpoint("truncated file".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Checkpoint("text field is not UTF-8".into()))
    }
}

impl Checkpoint {
    pub fn new(kind: &str, config: String) -> Self {
        Checkpoint {
            kind: kind.into(),
            config,
            ..Default::default()
        }
    }

    pub fn push(&mut self, name: impl Into<String>, shape: &[usize], data: Vec<f32>) {
        self.tensors.push(NamedTensor {
            name: name.into(),
            shape: shape.to_vec(),
            data,
        });
    }

    pub fn get(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn meta_value(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Checkpoint(format!("missing metadata key {key:?}")))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend(MAGIC);
        out.extend(VERSION.to_le_bytes());
        put_str(&mut out, &self.kind);
        put_str(&mut out, &self.config);
        let mut meta = String::new();
        for (k, v) in &self.meta {
            if k.contains(['=', '\n']) || v.contains('\n') {
                return Err(Error::Checkpoint(format!("metadata entry {k:?} cannot be encoded")));
            }
            meta.push_str(&format!("{k}={v}\n"));
        }
        put_str(&mut out, &meta);
        out.extend((self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            if t.shape.iter().product::<usize>() != t.data.len() {
                return Err(Error::Checkpoint(format!("{}: shape {:?} vs {} values", t.name, t.shape, t.data.len())));
            }
            put_str(&mut out, &t.name);
            out.push(t.shape.len() as u8);
            for &d in &t.shape {
                out.extend((d as u64).to_le_bytes());
            }
            for v in &t.data {
                out.extend(v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend(digest);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 2 + DIGEST_LEN || &bytes[..4] != MAGIC {
            return Err(Error::Checkpoint("not an IVCK checkpoint".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(Error::Version {
                found: version,
                expected: VERSION,
            });
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::Checkpoint("checksum mismatch".into()));
        }
        let mut r = Reader { bytes: body, pos: 6 };
        let kind = r.string()?;
        let config = r.string()?;
        let mut meta = BTreeMap::new();
        for line in r.string()?.lines() {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Checkpoint(format!("bad metadata line {line:?}")))?;
            meta.insert(k.to_string(), v.to_string());
        }
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let name = r.string()?;
            let rank = r.take(1)?[0] as usize;
            let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let raw = r.take(n.checked_mul(4).ok_or_else(|| Error::Checkpoint("tensor too large".into()))?)?;
            let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
            tensors.push(NamedTensor { name, shape, data });
        }
        if r.pos != body.len() {
            return Err(Error::Checkpoint("trailing bytes after the tensor table".into()));
        }
        Ok(Checkpoint {
            kind,
            config,
            meta,
            tensors,
        })
    }

    /// Hex SHA-256 of the encoded file.
    pub fn checksum(&self) -> Result<String> {
        let bytes = self.to_bytes()?;
        Ok(hex::encode(&bytes[bytes.len() - DIGEST_LEN..]))
    }

    pub fn save(&self, path: &Path) -> Result<String> {
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("ivck.tmp");
        std::fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
        Ok(hex::encode(&bytes[bytes.len() - DIGEST_LEN..]))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_bytes(&bytes).map_err(|e| match e {
            Error::Checkpoint(msg) => Error::format(path, msg),
            other => other,
        })
    }
}

/// Hex SHA-256 stored in the last 32 bytes of a checkpoint file.
pub fn file_checksum(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < DIGEST_LEN {
        return Err(Error::format(path, "too short for a checkpoint"));
    }
    Ok(hex::encode(&bytes[bytes.len() - DIGEST_LEN..]))
}
