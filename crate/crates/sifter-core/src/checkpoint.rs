//! Binary persistence for parameter sets.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic          4 bytes   "SIFT"
//! version        u32       currently 1
//! dtype          u8        1 = f32, 2 = f64
//! tensor count   u32
//! per tensor:
//!   name length  u16
//!   name         UTF-8 bytes
//!   rank         u8        1 (vector) or 2 (matrix)
//!   dims         rank x u64
//!   payload      numel scalars, little-endian
//! checksum       u64       FNV-1a over every byte after the magic
//! ```
//!
//! Loading refuses anything it cannot vouch for: wrong magic, unknown
//! version, a dtype that does not match the requested scalar type, any
//! truncation or trailing bytes, and — most importantly — a checksum
//! mismatch.

use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::{Dtype, Scalar, Shape, Tensor};
use crate::params::ParamSet;

pub const MAGIC: [u8; 4] = *b"SIFT";
pub const FORMAT_VERSION: u32 = 1;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn dtype_code(d: Dtype) -> u8 {
    match d {
        Dtype::F32 => 1,
        Dtype::F64 => 2,
    }
}

fn code_dtype(code: u8) -> Option<Dtype> {
    match code {
        1 => Some(Dtype::F32),
        2 => Some(Dtype::F64),
        _ => None,
    }
}

fn bad(path: &Path, msg: impl Into<String>) -> Error {
    Error::Checkpoint {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

/// Serializes a parameter set to the checkpoint wire format.
pub fn to_bytes<S: Scalar>(params: &ParamSet<S>) -> Result<Vec<u8>> {
    if params.is_empty() {
        return Err(Error::invalid("refusing to write a checkpoint with no tensors"));
    }
    if params.len() > u32::MAX as usize {
        return Err(Error::invalid("too many tensors for the checkpoint format"));
    }
    let mut body = Vec::new();
    body.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    body.push(dtype_code(S::DTYPE));
    body.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, tensor) in params.iter() {
        let name_bytes = name.as_bytes();
        if name_bytes.len() > u16::MAX as usize {
            return Err(Error::invalid(format!("tensor name too long: {name}")));
        }
        body.extend_from_slice(&(name_bytes.len() as u16).to_le_bytes());
        body.extend_from_slice(name_bytes);
        match tensor.shape() {
            Shape::Vector(n) => {
                body.push(1);
                body.extend_from_slice(&(n as u64).to_le_bytes());
            }
            Shape::Matrix(r, c) => {
                body.push(2);
                body.extend_from_slice(&(r as u64).to_le_bytes());
                body.extend_from_slice(&(c as u64).to_le_bytes());
            }
        }
        for &v in tensor.data() {
            v.write_le(&mut body);
        }
    }
    let checksum = fnv1a(&body);
    let mut out = Vec::with_capacity(4 + body.len() + 8);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&body);
    out.extend_from_slice(&checksum.to_le_bytes());
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(bad(self.path, format!("truncated while reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

/// Parses the wire format back into a parameter set. `path` labels errors.
pub fn from_bytes<S: Scalar>(bytes: &[u8], path: &Path) -> Result<ParamSet<S>> {
    let mut c = Cursor { bytes, pos: 0, path };
    if c.take(4, "magic")? != MAGIC {
        return Err(bad(path, "magic bytes are not \"SIFT\""));
    }
    if bytes.len() < 4 + 8 {
        return Err(bad(path, "too short to hold a checksum"));
    }
    let body = &bytes[4..bytes.len() - 8];
    let stored = u64::from_le_bytes(bytes[bytes.len() - 8..].try_into().unwrap());
    let computed = fnv1a(body);
    if stored != computed {
        return Err(bad(
            path,
            format!("checksum mismatch: stored {stored:#018x}, computed {computed:#018x}"),
        ));
    }

    let version = c.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(bad(
            path,
            format!("unsupported format version {version} (expected {FORMAT_VERSION})"),
        ));
    }
    let dtype = code_dtype(c.u8("dtype")?)
        .ok_or_else(|| bad(path, "unknown dtype code"))?;
    if dtype != S::DTYPE {
        return Err(bad(
            path,
            format!("stores {} tensors, asked to load {}", dtype.name(), S::DTYPE.name()),
        ));
    }
    let count = c.u32("tensor count")?;
    if count == 0 {
        return Err(bad(path, "contains no tensors"));
    }
    let mut params = ParamSet::new();
    for i in 0..count {
        let name_len = c.u16("name length")? as usize;
        let name = std::str::from_utf8(c.take(name_len, "name")?)
            .map_err(|_| bad(path, format!("tensor {i} name is not UTF-8")))?
            .to_string();
        let rank = c.u8("rank")?;
        let shape = match rank {
            1 => {
                let n = usize::try_from(c.u64("dims")?)
                    .map_err(|_| bad(path, "dimension overflows usize"))?;
                Shape::Vector(n)
            }
            2 => {
                let r = usize::try_from(c.u64("dims")?)
                    .map_err(|_| bad(path, "dimension overflows usize"))?;
                let co = usize::try_from(c.u64("dims")?)
                    .map_err(|_| bad(path, "dimension overflows usize"))?;
                Shape::Matrix(r, co)
            }
            other => return Err(bad(path, format!("tensor {name} has unsupported rank {other}"))),
        };
        let numel = shape.numel();
        let width = S::DTYPE.width();
        let payload = c.take(
            numel
                .checked_mul(width)
                .ok_or_else(|| bad(path, "payload size overflows"))?,
            "payload",
        )?;
        let mut tensor = Tensor::<S>::zeros(shape);
        for (k, v) in tensor.data_mut().iter_mut().enumerate() {
            *v = S::read_le(&payload[k * width..]);
        }
        params
            .push(name, tensor)
            .map_err(|e| bad(path, format!("invalid tensor table: {e}")))?;
    }
    if c.pos != bytes.len() - 8 {
        return Err(bad(path, "trailing bytes after the last tensor"));
    }
    Ok(params)
}

/// Writes `params` to `path` atomically enough for single-process use.
pub fn save_params<S: Scalar>(path: impl AsRef<Path>, params: &ParamSet<S>) -> Result<()> {
    let path = path.as_ref();
    let bytes = to_bytes(params)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Loads a checkpoint saved by [`save_params`].
pub fn load_params<S: Scalar>(path: impl AsRef<Path>) -> Result<ParamSet<S>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes, path)
}

/// Reads only the header to learn which scalar type a checkpoint stores.
pub fn peek_dtype(path: impl AsRef<Path>) -> Result<Dtype> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 9 || bytes[..4] != MAGIC {
        return Err(bad(path, "not a checkpoint file"));
    }
    code_dtype(bytes[8]).ok_or_else(|| bad(path, "unknown dtype code"))
}
