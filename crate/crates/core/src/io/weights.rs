//! Binary weight file:
//!
//! ```text
//! "LWFM" | version u32 | count u32 | count x {
//!     name_len u16 | name utf-8 | rank u8 | dims u32 x rank | f32 x prod(dims)
//! }
//! ```
//! All integers and floats little-endian.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"LWFM";
pub const WEIGHT_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeightFile {
    pub tensors: Vec<NamedTensor>,
}

impl WeightFile {
    pub fn float_count(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn bit_eq(&self, other: &WeightFile) -> bool {
        self.tensors.len() == other.tensors.len()
            && self.tensors.iter().zip(&other.tensors).all(|(a, b)| {
                a.name == b.name
                    && a.dims == b.dims
                    && a.data.len() == b.data.len()
                    && a.data.iter().zip(&b.data).all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&WEIGHT_FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&u32_field("tensor count", self.tensors.len())?.to_le_bytes())?;
        for t in &self.tensors {
            let name = t.name.as_bytes();
            let len = u16::try_from(name.len())
                .map_err(|_| Error::Weights(format!("tensor name too long: {} bytes", name.len())))?;
            w.write_all(&len.to_le_bytes())?;
            w.write_all(name)?;
            let rank = u8::try_from(t.dims.len()).map_err(|_| Error::Weights(format!("rank too large for '{}'", t.name)))?;
            w.write_all(&[rank])?;
            for &d in &t.dims {
                w.write_all(&u32_field("dim", d)?.to_le_bytes())?;
            }
            let expect: usize = t.dims.iter().product();
            if expect != t.data.len() {
                return Err(Error::Weights(format!(
                    "tensor '{}': dims {:?} need {expect} floats, have {}",
                    t.name,
                    t.dims,
                    t.data.len()
                )));
            }
            let mut buf = Vec::with_capacity(4 * t.data.len());
            for v in &t.data {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(r, &mut magic, "magic")?;
        if &magic != MAGIC {
            return Err(Error::Weights(format!("bad magic {magic:?}, expected \"LWFM\"")));
        }
        let version = read_u32(r, "version")?;
        if version != WEIGHT_FORMAT_VERSION {
            return Err(Error::Weights(format!("unsupported weight format version {version}")));
        }
        let count = read_u32(r, "tensor count")? as usize;
        let mut tensors = Vec::with_capacity(count.min(1 << 16));
        for i in 0..count {
            let mut len = [0u8; 2];
            read_exact(r, &mut len, "name length")?;
            let mut name = vec![0u8; u16::from_le_bytes(len) as usize];
            read_exact(r, &mut name, "name")?;
            let name = String::from_utf8(name).map_err(|_| Error::Weights(format!("tensor {i}: name is not utf-8")))?;
            let mut rank = [0u8; 1];
            read_exact(r, &mut rank, "rank")?;
            let dims = (0..rank[0]).map(|_| read_u32(r, "dim").map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let numel = dims
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| Error::Weights(format!("tensor '{name}': dims overflow")))?;
            let mut bytes = vec![0u8; numel.checked_mul(4).ok_or_else(|| Error::Weights("size overflow".into()))?];
            read_exact(r, &mut bytes, "tensor data")?;
            let data = bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
            tensors.push(NamedTensor { name, dims, data });
        }
        let mut probe = [0u8; 1];
        if r.read(&mut probe)? != 0 {
            return Err(Error::Weights("trailing bytes after last tensor".into()));
        }
        Ok(WeightFile { tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut BufReader::new(fs::File::open(path)?))
    }
}

fn u32_field(what: &str, v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Weights(format!("{what} {v} exceeds u32")))
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Weights(format!("truncated file while reading {what}")),
        _ => Error::Io(e),
    })
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}
