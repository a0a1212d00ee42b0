//! Versioned binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "HESUCKPT" | u32 version
//! u32 len | fingerprint (utf-8)
//! u32 len | config text (utf-8)
//! u32 len | meta text (utf-8, key=value lines)
//! u32 record count
//! per record: u32 len | name | u8 dtype | u32 rank | u64 dims... | payload
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::tensor::{DType, Real};

pub const MAGIC: &[u8; 8] = b"HESUCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorRecord {
    pub name: String,
    pub dtype: DType,
    pub shape: Vec<usize>,
    /// little-endian payload in `dtype`
    pub bytes: Vec<u8>,
}

impl TensorRecord {
    pub fn from_values<T: Real>(name: impl Into<String>, shape: &[usize], values: &[T]) -> Self {
        let mut bytes = Vec::with_capacity(values.len() * T::DTYPE.size());
        for &v in values {
            v.write_le(&mut bytes);
        }
        TensorRecord {
            name: name.into(),
            dtype: T::DTYPE,
            shape: shape.to_vec(),
            bytes,
        }
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    /// Values in `T`; exact when the stored dtype is `T`.
    pub fn values<T: Real>(&self) -> Vec<T> {
        let size = self.dtype.size();
        self.bytes
            .chunks_exact(size)
            .map(|c| match (self.dtype, T::DTYPE) {
                (a, b) if a == b => T::read_le(c),
                (DType::F32, _) => T::lit(f32::read_le(c) as f64),
                (DType::F64, _) => T::lit(f64::read_le(c)),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub fingerprint: String,
    pub config_text: String,
    pub meta: BTreeMap<String, String>,
    pub records: Vec<TensorRecord>,
}

fn put_str(out: &mut Vec<u8>, s: &str) -> Result<()> {
    out.write_u32::<LittleEndian>(s.len() as u32)?;
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

fn get_str(cur: &mut &[u8]) -> Result<String> {
    let n = cur.read_u32::<LittleEndian>()? as usize;
    if cur.len() < n {
        return Err(Error::Format("truncated string".into()));
    }
    let (s, rest) = cur.split_at(n);
    *cur = rest;
    String::from_utf8(s.to_vec()).map_err(|_| Error::Format("invalid utf-8 in checkpoint".into()))
}

impl Checkpoint {
    pub fn record(&self, name: &str) -> Option<&TensorRecord> {
        self.records.iter().find(|r| r.name == name)
    }

    pub fn meta_value<N: std::str::FromStr>(&self, key: &str) -> Result<N> {
        let raw = self
            .meta
            .get(key)
            .ok_or_else(|| Error::Format(format!("checkpoint meta missing {key}")))?;
        raw.parse()
            .map_err(|_| Error::Format(format!("checkpoint meta {key}: bad value {raw:?}")))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.write_u32::<LittleEndian>(VERSION)?;
        put_str(&mut out, &self.fingerprint)?;
        put_str(&mut out, &self.config_text)?;
        let meta: String = self
            .meta
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect();
        put_str(&mut out, &meta)?;
        out.write_u32::<LittleEndian>(self.records.len() as u32)?;
        for r in &self.records {
            if r.bytes.len() != r.numel() * r.dtype.size() {
                return Err(Error::Format(format!(
                    "record {} payload size mismatch",
                    r.name
                )));
            }
            put_str(&mut out, &r.name)?;
            out.write_u8(r.dtype.tag())?;
            out.write_u32::<LittleEndian>(r.shape.len() as u32)?;
            for &d in &r.shape {
                out.write_u64::<LittleEndian>(d as u64)?;
            }
            out.extend_from_slice(&r.bytes);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 4 || &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        let mut cur = &bytes[MAGIC.len()..];
        let version = cur.read_u32::<LittleEndian>()?;
        if version != VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let fingerprint = get_str(&mut cur)?;
        let config_text = get_str(&mut cur)?;
        let meta = get_str(&mut cur)?
            .lines()
            .filter_map(|l| l.split_once('='))
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        let count = cur.read_u32::<LittleEndian>()? as usize;
        let mut records = Vec::with_capacity(count);
        for _ in 0..count {
            let name = get_str(&mut cur)?;
            let tag = cur.read_u8()?;
            let dtype = DType::from_tag(tag)
                .ok_or_else(|| Error::Format(format!("{name}: unknown dtype tag {tag}")))?;
            let rank = cur.read_u32::<LittleEndian>()? as usize;
            let shape = (0..rank)
                .map(|_| cur.read_u64::<LittleEndian>().map(|d| d as usize))
                .collect::<std::io::Result<Vec<_>>>()?;
            let len = shape.iter().product::<usize>() * dtype.size();
            if cur.len() < len {
                return Err(Error::Format(format!("{name}: truncated payload")));
            }
            let (payload, rest) = cur.split_at(len);
            cur = rest;
            records.push(TensorRecord {
                name,
                dtype,
                shape,
                bytes: payload.to_vec(),
            });
        }
        if !cur.is_empty() {
            return Err(Error::Format(format!(
                "{} trailing bytes after records",
                cur.len()
            )));
        }
        Ok(Checkpoint {
            fingerprint,
            config_text,
            meta,
            records,
        })
    }

    /// Write to a temporary file in the target directory, then rename.
    pub fn save(&self, path: &Path) -> Result<()> {
        let dir = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        fs::create_dir_all(dir)?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(&self.to_bytes()?)?;
        tmp.as_file().sync_all()?;
        tmp.persist(path).map_err(|e| Error::Io(e.error))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        Checkpoint {
            fingerprint: "abc".into(),
            config_text: "c0=8\n".into(),
            meta: BTreeMap::from([("epoch".into(), "3".into()), ("best".into(), "inf".into())]),
            records: vec![
                TensorRecord::from_values("w", &[2, 2], &[1.0f32, -2.0, 0.5, 3.25]),
                TensorRecord::from_values("v", &[3], &[0.1f64, 1e-300, -7.0]),
            ],
        }
    }

    #[test]
    fn bytes_round_trip() {
        let c = sample();
        let back = Checkpoint::from_bytes(&c.to_bytes().unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(
            back.record("v").unwrap().values::<f64>(),
            vec![0.1, 1e-300, -7.0]
        );
        assert_eq!(back.meta_value::<f64>("best").unwrap(), f64::INFINITY);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub").join("x.ckpt");
        sample().save(&p).unwrap();
        assert_eq!(Checkpoint::load(&p).unwrap(), sample());
    }

    #[test]
    fn corrupt_input_rejected() {
        let mut b = sample().to_bytes().unwrap();
        assert!(Checkpoint::from_bytes(&b[..b.len() - 1]).is_err());
        b[0] = b'X';
        assert!(Checkpoint::from_bytes(&b).is_err());
    }
}
