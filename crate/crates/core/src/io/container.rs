//! Minimal binary container for named numeric arrays.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "CCDS" | version: u16 | count: u16
//! per array: name_len: u16 | name (UTF-8) | tag: u8 | rank: u8 | dims: u64 x rank | payload
//! ```
//!
//! Tags: 0 = f64, 1 = complex f64 stored as interleaved (re, im), 2 = i64.

use std::path::Path;

use num_complex::Complex64;
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"CCDS";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 8;

#[derive(Debug, Error, PartialEq)]
pub enum ContainerError {
    #[error("bad magic bytes at offset {offset}")]
    BadMagic { offset: usize },
    #[error("unsupported container version {version} at offset {offset}")]
    UnsupportedVersion { version: u16, offset: usize },
    #[error("truncated input at offset {offset}{}", array.as_ref().map(|a| format!(" while reading array '{a}'")).unwrap_or_default())]
    Truncated { offset: usize, array: Option<String> },
    #[error("array '{array}' at offset {offset}: dimensions overflow or disagree with the payload")]
    LengthMismatch { array: String, offset: usize },
    #[error("array '{array}' at offset {offset}: unknown element tag {tag}")]
    BadTag { array: String, offset: usize, tag: u8 },
    #[error("array name at offset {offset} is not valid UTF-8")]
    InvalidName { offset: usize },
    #[error("duplicate array name '{name}'")]
    DuplicateName { name: String },
    #[error("{trailing} unexpected trailing bytes at offset {offset}")]
    TrailingBytes { offset: usize, trailing: usize },
    #[error("array '{0}' not found")]
    Missing(String),
    #[error("array '{array}' has the wrong element type or shape: {msg}")]
    WrongType { array: String, msg: String },
    #[error("too many arrays ({0}) for one container")]
    TooManyArrays(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArrayData {
    F64(Vec<f64>),
    C64(Vec<Complex64>),
    I64(Vec<i64>),
}

impl ArrayData {
    pub fn len(&self) -> usize {
        match self {
            ArrayData::F64(v) => v.len(),
            ArrayData::C64(v) => v.len(),
            ArrayData::I64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn tag(&self) -> u8 {
        match self {
            ArrayData::F64(_) => 0,
            ArrayData::C64(_) => 1,
            ArrayData::I64(_) => 2,
        }
    }

    fn element_size(tag: u8) -> Option<usize> {
        match tag {
            0 | 2 => Some(8),
            1 => Some(16),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub dims: Vec<u64>,
    pub data: ArrayData,
}

/// An ordered list of uniquely named arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub version: u16,
    pub arrays: Vec<NamedArray>,
}

impl Default for Container {
    fn default() -> Self {
        Self::new()
    }
}

impl Container {
    pub fn new() -> Self {
        Self {
            version: VERSION,
            arrays: Vec::new(),
        }
    }

    pub fn push(&mut self, name: &str, dims: &[u64], data: ArrayData) -> Result<(), ContainerError> {
        if self.arrays.iter().any(|a| a.name == name) {
            return Err(ContainerError::DuplicateName { name: name.into() });
        }
        let count = dims.iter().try_fold(1u64, |acc, &d| acc.checked_mul(d));
        if count != Some(data.len() as u64) || name.len() > u16::MAX as usize || dims.len() > u8::MAX as usize {
            return Err(ContainerError::LengthMismatch {
                array: name.into(),
                offset: 0,
            });
        }
        if self.arrays.len() == u16::MAX as usize {
            return Err(ContainerError::TooManyArrays(self.arrays.len() + 1));
        }
        self.arrays.push(NamedArray {
            name: name.into(),
            dims: dims.to_vec(),
            data,
        });
        Ok(())
    }

    pub fn push_f64(&mut self, name: &str, dims: &[u64], data: Vec<f64>) -> Result<(), ContainerError> {
        self.push(name, dims, ArrayData::F64(data))
    }

    pub fn push_i64(&mut self, name: &str, dims: &[u64], data: Vec<i64>) -> Result<(), ContainerError> {
        self.push(name, dims, ArrayData::I64(data))
    }

    pub fn push_c64(&mut self, name: &str, dims: &[u64], data: Vec<Complex64>) -> Result<(), ContainerError> {
        self.push(name, dims, ArrayData::C64(data))
    }

    pub fn get(&self, name: &str) -> Result<&NamedArray, ContainerError> {
        self.arrays
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| ContainerError::Missing(name.into()))
    }

    pub fn f64(&self, name: &str) -> Result<(&[u64], &[f64]), ContainerError> {
        let a = self.get(name)?;
        match &a.data {
            ArrayData::F64(v) => Ok((&a.dims, v)),
            _ => Err(wrong(name, "expected f64 elements")),
        }
    }

    pub fn i64(&self, name: &str) -> Result<(&[u64], &[i64]), ContainerError> {
        let a = self.get(name)?;
        match &a.data {
            ArrayData::I64(v) => Ok((&a.dims, v)),
            _ => Err(wrong(name, "expected i64 elements")),
        }
    }

    pub fn c64(&self, name: &str) -> Result<(&[u64], &[Complex64]), ContainerError> {
        let a = self.get(name)?;
        match &a.data {
            ArrayData::C64(v) => Ok((&a.dims, v)),
            _ => Err(wrong(name, "expected complex elements")),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.arrays.iter().map(|a| 16 * a.data.len() + 64).sum::<usize>());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.extend_from_slice(&(self.arrays.len() as u16).to_le_bytes());
        for a in &self.arrays {
            out.extend_from_slice(&(a.name.len() as u16).to_le_bytes());
            out.extend_from_slice(a.name.as_bytes());
            out.push(a.data.tag());
            out.push(a.dims.len() as u8);
            for d in &a.dims {
                out.extend_from_slice(&d.to_le_bytes());
            }
            match &a.data {
                ArrayData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                ArrayData::C64(v) => v.iter().for_each(|x| {
                    out.extend_from_slice(&x.re.to_le_bytes());
                    out.extend_from_slice(&x.im.to_le_bytes());
                }),
                ArrayData::I64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ContainerError> {
        let mut r = Reader { bytes, pos: 0, array: None };
        if r.take(4)? != MAGIC {
            return Err(ContainerError::BadMagic { offset: 0 });
        }
        let version = r.u16()?;
        if version != VERSION {
            return Err(ContainerError::UnsupportedVersion { version, offset: 4 });
        }
        let count = r.u16()?;
        let mut out = Container::new();
        for _ in 0..count {
            let name_offset = r.pos;
            let name_len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| ContainerError::InvalidName { offset: name_offset + 2 })?
                .to_string();
            r.array = Some(name.clone());
            let tag_offset = r.pos;
            let tag = r.u8()?;
            let size = ArrayData::element_size(tag).ok_or_else(|| ContainerError::BadTag {
                array: name.clone(),
                offset: tag_offset,
                tag,
            })?;
            let rank = r.u8()? as usize;
            let dims_offset = r.pos;
            let dims = (0..rank).map(|_| r.u64()).collect::<Result<Vec<_>, _>>()?;
            let mismatch = || ContainerError::LengthMismatch {
                array: name.clone(),
                offset: dims_offset,
            };
            let count = dims
                .iter()
                .try_fold(1u64, |acc, &d| acc.checked_mul(d))
                .and_then(|c| usize::try_from(c).ok())
                .ok_or_else(mismatch)?;
            let payload_len = count.checked_mul(size).ok_or_else(mismatch)?;
            if payload_len > r.remaining() {
                return Err(mismatch());
            }
            let payload = r.take(payload_len)?;
            let data = match tag {
                0 => ArrayData::F64(payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()),
                1 => ArrayData::C64(
                    payload
                        .chunks_exact(16)
                        .map(|c| {
                            Complex64::new(
                                f64::from_le_bytes(c[..8].try_into().unwrap()),
                                f64::from_le_bytes(c[8..].try_into().unwrap()),
                            )
                        })
                        .collect(),
                ),
                _ => ArrayData::I64(payload.chunks_exact(8).map(|c| i64::from_le_bytes(c.try_into().unwrap())).collect()),
            };
            if out.arrays.iter().any(|a| a.name == name) {
                return Err(ContainerError::DuplicateName { name });
            }
            out.arrays.push(NamedArray { name, dims, data });
            r.array = None;
        }
        if r.remaining() > 0 {
            return Err(ContainerError::TrailingBytes {
                offset: r.pos,
                trailing: r.remaining(),
            });
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_bytes())
    }

    pub fn load(path: &Path) -> crate::error::Result<Self> {
        let bytes = std::fs::read(path)?;
        Ok(Self::from_bytes(&bytes)?)
    }
}

fn wrong(name: &str, msg: &str) -> ContainerError {
    ContainerError::WrongType {
        array: name.into(),
        msg: msg.into(),
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    array: Option<String>,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], ContainerError> {
        if n > self.remaining() {
            return Err(ContainerError::Truncated {
                offset: self.bytes.len(),
                array: self.array.clone(),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, ContainerError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, ContainerError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ContainerError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
