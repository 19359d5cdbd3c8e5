//! Binary container shared by checkpoints, synthetic datasets and
//! representation tables.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "SVAE"                      magic, 4 bytes
//! u32                         format version
//! u32 + bytes                 metadata document, `key=value` lines (UTF-8)
//! u32                         number of arrays
//! per array:
//!   u32 + bytes               name
//!   u8                        dtype (0 = f32, 1 = f64, 2 = i64)
//!   u32 + u64 * ndim          shape
//!   u64                       byte offset into the data section
//!   u64                       byte length
//! data section                raw little-endian array payloads
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const MAGIC: &[u8; 4] = b"SVAE";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Array {
    F32(Tensor<f32>),
    F64(Tensor<f64>),
    I64 { shape: Vec<usize>, data: Vec<i64> },
}

impl Array {
    pub fn shape(&self) -> &[usize] {
        match self {
            Array::F32(t) => t.shape(),
            Array::F64(t) => t.shape(),
            Array::I64 { shape, .. } => shape,
        }
    }

    fn dtype_code(&self) -> u8 {
        match self {
            Array::F32(_) => 0,
            Array::F64(_) => 1,
            Array::I64 { .. } => 2,
        }
    }

    pub fn dtype_name(&self) -> &'static str {
        match self {
            Array::F32(_) => "f32",
            Array::F64(_) => "f64",
            Array::I64 { .. } => "i64",
        }
    }

    fn payload(&self) -> Vec<u8> {
        match self {
            Array::F32(t) => t.data().iter().flat_map(|v| v.to_le_bytes()).collect(),
            Array::F64(t) => t.data().iter().flat_map(|v| v.to_le_bytes()).collect(),
            Array::I64 { data, .. } => data.iter().flat_map(|v| v.to_le_bytes()).collect(),
        }
    }

    pub fn labels(data: &[usize]) -> Self {
        Array::I64 {
            shape: vec![data.len()],
            data: data.iter().map(|&v| v as i64).collect(),
        }
    }
}

/// In-memory image of a container file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Container {
    pub metadata: Vec<(String, String)>,
    pub arrays: Vec<(String, Array)>,
}

impl Container {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_meta(&mut self, key: impl Into<String>, value: impl ToString) {
        let key = key.into();
        let value = value.to_string();
        match self.metadata.iter_mut().find(|(k, _)| *k == key) {
            Some(slot) => slot.1 = value,
            None => self.metadata.push((key, value)),
        }
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn require_meta(&self, key: &str) -> Result<&str> {
        self.meta(key)
            .ok_or_else(|| Error::Data(format!("container metadata lacks `{key}`")))
    }

    pub fn meta_parse<V: std::str::FromStr>(&self, key: &str) -> Result<V> {
        let raw = self.require_meta(key)?;
        raw.parse()
            .map_err(|_| Error::Data(format!("metadata `{key}` = `{raw}` does not parse")))
    }

    pub fn push(&mut self, name: impl Into<String>, array: Array) {
        self.arrays.push((name.into(), array));
    }

    pub fn array(&self, name: &str) -> Result<&Array> {
        self.arrays
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, a)| a)
            .ok_or_else(|| Error::ArrayMismatch {
                name: name.to_string(),
                reason: "missing".into(),
            })
    }

    pub fn f64_array(&self, name: &str) -> Result<Tensor<f64>> {
        match self.array(name)? {
            Array::F64(t) => Ok(t.clone()),
            Array::F32(t) => Ok(t.cast()),
            Array::I64 { .. } => Err(Error::ArrayMismatch {
                name: name.into(),
                reason: "expected a float array, found i64".into(),
            }),
        }
    }

    pub fn label_array(&self, name: &str) -> Result<Vec<usize>> {
        match self.array(name)? {
            Array::I64 { data, .. } => data
                .iter()
                .map(|&v| {
                    usize::try_from(v).map_err(|_| Error::ArrayMismatch {
                        name: name.into(),
                        reason: format!("negative label {v}"),
                    })
                })
                .collect(),
            other => Err(Error::ArrayMismatch {
                name: name.into(),
                reason: format!("expected i64 labels, found {}", other.dtype_name()),
            }),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut meta = String::new();
        for (k, v) in &self.metadata {
            if k.contains('=') || k.contains('\n') || v.contains('\n') {
                return Err(Error::Data(format!(
                    "metadata entry `{k}` cannot be encoded as a key=value line"
                )));
            }
            meta.push_str(k);
            meta.push('=');
            meta.push_str(v);
            meta.push('\n');
        }
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        put_u32(&mut out, meta.len())?;
        out.extend_from_slice(meta.as_bytes());
        put_u32(&mut out, self.arrays.len())?;

        let payloads: Vec<Vec<u8>> = self.arrays.iter().map(|(_, a)| a.payload()).collect();
        let mut offset = 0u64;
        for ((name, array), payload) in self.arrays.iter().zip(&payloads) {
            put_u32(&mut out, name.len())?;
            out.extend_from_slice(name.as_bytes());
            out.push(array.dtype_code());
            put_u32(&mut out, array.shape().len())?;
            for &d in array.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            out.extend_from_slice(&offset.to_le_bytes());
            out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
            offset += payload.len() as u64;
        }
        for p in payloads {
            out.extend_from_slice(&p);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4, "magic")?;
        if magic != MAGIC {
            return Err(Error::BadMagic {
                expected: MAGIC.to_vec(),
                found: magic.to_vec(),
            });
        }
        let version = r.u32("version")?;
        if version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let meta_len = r.u32("metadata length")? as usize;
        let meta = std::str::from_utf8(r.take(meta_len, "metadata")?)
            .map_err(|_| Error::Data("metadata is not UTF-8".into()))?;
        let mut metadata = Vec::new();
        for line in meta.lines().filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Data(format!("metadata line `{line}` lacks `=`")))?;
            metadata.push((k.to_string(), v.to_string()));
        }

        let n = r.u32("array count")? as usize;
        let mut entries = Vec::with_capacity(n);
        for _ in 0..n {
            let name_len = r.u32("array name length")? as usize;
            let name = String::from_utf8(r.take(name_len, "array name")?.to_vec())
                .map_err(|_| Error::Data("array name is not UTF-8".into()))?;
            let dtype = r.take(1, "dtype")?[0];
            let ndim = r.u32("ndim")? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(r.u64("dim")? as usize);
            }
            let offset = r.u64("offset")? as usize;
            let len = r.u64("length")? as usize;
            entries.push((name, dtype, shape, offset, len));
        }

        let data = &bytes[r.pos..];
        let mut arrays = Vec::with_capacity(n);
        for (name, dtype, shape, offset, len) in entries {
            let numel: usize = shape.iter().product();
            let width = match dtype {
                0 => 4,
                1 | 2 => 8,
                other => {
                    return Err(Error::ArrayMismatch {
                        name,
                        reason: format!("unknown dtype code {other}"),
                    })
                }
            };
            if numel * width != len {
                return Err(Error::ArrayMismatch {
                    name,
                    reason: format!("shape {shape:?} needs {} bytes, table says {len}", numel * width),
                });
            }
            let end = offset.saturating_add(len);
            if end > data.len() {
                return Err(Error::Truncated(format!(
                    "array `{name}` ends at byte {end} of a {}-byte data section",
                    data.len()
                )));
            }
            let raw = &data[offset..end];
            let array = match dtype {
                0 => Array::F32(Tensor::new(
                    shape,
                    raw.chunks_exact(4)
                        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                        .collect(),
                )?),
                1 => Array::F64(Tensor::new(
                    shape,
                    raw.chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                        .collect(),
                )?),
                _ => Array::I64 {
                    shape,
                    data: raw
                        .chunks_exact(8)
                        .map(|c| i64::from_le_bytes(c.try_into().expect("8 bytes")))
                        .collect(),
                },
            };
            arrays.push((name, array));
        }
        Ok(Self { metadata, arrays })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Data(format!("length {v} exceeds u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Truncated(format!(
                "{what}: needed {n} bytes at offset {}, file has {}",
                self.pos,
                self.bytes.len()
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> Container {
        let mut c = Container::new();
        c.set_meta("kind", "test");
        c.set_meta("seed", 42);
        c.push("w", Array::F32(Tensor::from_f64(&[2, 2], &[1.0, -2.5, 3.25, 0.0]).unwrap()));
        c.push("x", Array::F64(Tensor::from_f64(&[3], &[0.1, 0.2, 0.3]).unwrap()));
        c.push("y", Array::labels(&[3, 1, 4]));
        c
    }

    #[test]
    fn bytes_round_trip() {
        let c = sample();
        let b = c.to_bytes().unwrap();
        assert_eq!(&b[..4], b"SVAE");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 1);
        let back = Container::from_bytes(&b).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes().unwrap(), b);
    }

    #[test]
    fn wrong_magic() {
        let mut b = sample().to_bytes().unwrap();
        b[0] = b'X';
        assert!(matches!(Container::from_bytes(&b), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn wrong_version() {
        let mut b = sample().to_bytes().unwrap();
        b[4..8].copy_from_slice(&7u32.to_le_bytes());
        assert!(matches!(
            Container::from_bytes(&b),
            Err(Error::VersionMismatch { found: 7, .. })
        ));
    }

    #[test]
    fn truncation_is_detected_at_every_cut() {
        let b = sample().to_bytes().unwrap();
        for cut in 0..b.len() {
            match Container::from_bytes(&b[..cut]) {
                Err(Error::Truncated(_)) => {}
                other => panic!("cut {cut}: {other:?}"),
            }
        }
    }

    proptest! {
        #[test]
        fn arbitrary_arrays_round_trip(
            vals in prop::collection::vec(-1e30f64..1e30, 0..40),
            labels in prop::collection::vec(0usize..1000, 0..20),
        ) {
            let mut c = Container::new();
            c.set_meta("n", vals.len());
            c.push("a", Array::F64(Tensor::vector(vals.clone())));
            c.push("b", Array::F32(Tensor::vector(vals.iter().map(|&v| v as f32).collect())));
            c.push("l", Array::labels(&labels));
            let back = Container::from_bytes(&c.to_bytes().unwrap()).unwrap();
            prop_assert_eq!(back, c);
        }
    }
}
